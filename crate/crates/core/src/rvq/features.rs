//! Per-frame feature representations fed to the tokenizer.

use serde::{Deserialize, Serialize};

use crate::motion::{heading, wrap_angle, Motion, FRAME_DIM, NUM_JOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Raw world-space joint positions.
    Positions,
    /// Heading-relative pose plus per-frame root motion. Decoding integrates
    /// the root motion from the origin, facing +Z.
    #[default]
    RootRelative,
}

impl Representation {
    pub fn dim(self) -> usize {
        match self {
            Representation::Positions => FRAME_DIM,
            Representation::RootRelative => FRAME_DIM + 3,
        }
    }
}

pub fn to_features(repr: Representation, m: &Motion) -> Vec<Vec<f64>> {
    match repr {
        Representation::Positions => m.frames.iter().map(|f| f.to_vec()).collect(),
        Representation::RootRelative => root_relative(m),
    }
}

fn root_relative(m: &Motion) -> Vec<Vec<f64>> {
    let n = m.frames.len();
    let yaw: Vec<f64> = m.frames.iter().map(heading).collect();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let f = &m.frames[t];
        let (s, c) = yaw[t].sin_cos();
        // root motion towards the next frame, or from the previous one at the end
        let (a, b) = if t + 1 < n { (t, t + 1) } else { (t - 1, t) };
        let dpsi = wrap_angle(yaw[b] - yaw[a]);
        let (sa, ca) = yaw[a].sin_cos();
        let dx = m.frames[b][0] - m.frames[a][0];
        let dz = m.frames[b][2] - m.frames[a][2];
        let mut row = Vec::with_capacity(FRAME_DIM + 3);
        row.push(dpsi);
        row.push(dx * ca - dz * sa);
        row.push(dx * sa + dz * ca);
        for j in 0..NUM_JOINTS {
            let rx = f[3 * j] - f[0];
            let rz = f[3 * j + 2] - f[2];
            row.push(rx * c - rz * s);
            row.push(f[3 * j + 1]);
            row.push(rx * s + rz * c);
        }
        out.push(row);
    }
    out
}

pub fn from_features(repr: Representation, feats: &[Vec<f64>]) -> Vec<[f64; FRAME_DIM]> {
    match repr {
        Representation::Positions => feats
            .iter()
            .map(|row| {
                let mut f = [0.0; FRAME_DIM];
                f.copy_from_slice(&row[..FRAME_DIM]);
                f
            })
            .collect(),
        Representation::RootRelative => {
            let mut frames = Vec::with_capacity(feats.len());
            let (mut x, mut z, mut psi) = (0.0, 0.0, 0.0f64);
            for row in feats {
                let (s, c) = psi.sin_cos();
                let mut f = [0.0; FRAME_DIM];
                for j in 0..NUM_JOINTS {
                    let (lx, ly, lz) = (row[3 + 3 * j], row[4 + 3 * j], row[5 + 3 * j]);
                    f[3 * j] = x + lx * c + lz * s;
                    f[3 * j + 1] = ly;
                    f[3 * j + 2] = z - lx * s + lz * c;
                }
                frames.push(f);
                x += row[1] * c + row[2] * s;
                z += -row[1] * s + row[2] * c;
                psi += row[0];
            }
            frames
        }
    }
}
