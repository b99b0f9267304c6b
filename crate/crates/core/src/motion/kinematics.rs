use super::{Joint, Motion, FRAME_DIM};
use crate::error::{Error, Result};

/// Linearly resamples `m` to `target_fps`. Only downsampling is supported.
pub fn resample(m: &Motion, target_fps: u32) -> Result<Motion> {
    if target_fps == 0 {
        return Err(Error::OutOfRange {
            what: "fps",
            detail: "target must be positive".into(),
        });
    }
    if target_fps > m.fps {
        return Err(Error::UpsampleUnsupported {
            from: m.fps,
            target: target_fps,
        });
    }
    if target_fps == m.fps {
        return Ok(m.clone());
    }
    let n = m.num_frames();
    let n_out = (n as u64 * target_fps as u64 / m.fps as u64).max(2) as usize;
    let mut frames = Vec::with_capacity(n_out);
    for k in 0..n_out {
        // source position k * src / tgt, kept as an exact rational
        let num = k as u64 * m.fps as u64;
        let den = target_fps as u64;
        let i = ((num / den) as usize).min(n - 1);
        let rem = num % den;
        if rem == 0 || i + 1 >= n {
            frames.push(m.frames[i]);
            continue;
        }
        let w = rem as f64 / den as f64;
        let (a, b) = (&m.frames[i], &m.frames[i + 1]);
        let mut f = [0.0; FRAME_DIM];
        for c in 0..FRAME_DIM {
            f[c] = a[c] + (b[c] - a[c]) * w;
        }
        frames.push(f);
    }
    Motion::new(m.id, target_fps, m.attrs.clone(), frames)
}

/// Splits `m` at the given frame boundaries; any piece longer than
/// `max_duration_s` is further split into near-equal chunks. Segments get
/// consecutive ids starting at `first_id` and inherit the source annotation.
pub fn segment(m: &Motion, max_duration_s: f64, boundaries: &[usize], first_id: u64) -> Result<Vec<Motion>> {
    let n = m.num_frames();
    if !(max_duration_s > 0.0) {
        return Err(Error::OutOfRange {
            what: "max segment duration",
            detail: format!("{max_duration_s}"),
        });
    }
    let mut prev = 0usize;
    for &b in boundaries {
        if b <= prev || b >= n {
            return Err(Error::InvalidBoundaries(format!(
                "boundary {b} must be strictly increasing within (0, {n})"
            )));
        }
        prev = b;
    }
    let max_frames = (max_duration_s * m.fps as f64 + 1e-9).floor() as usize;
    if max_frames < 2 {
        return Err(Error::OutOfRange {
            what: "max segment duration",
            detail: "shorter than two frames".into(),
        });
    }

    let mut cuts = vec![0];
    cuts.extend_from_slice(boundaries);
    cuts.push(n);
    let mut pieces = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        let chunks = len.div_ceil(max_frames);
        for c in 0..chunks {
            pieces.push((a + c * len / chunks, a + (c + 1) * len / chunks));
        }
    }
    pieces
        .into_iter()
        .enumerate()
        .map(|(k, (a, b))| Motion::new(first_id + k as u64, m.fps, m.attrs.clone(), m.frames[a..b].to_vec()))
        .collect()
}

/// Body heading from the hip axis: the left vector is `(cos ψ, −sin ψ)`
/// in (x, z).
pub fn heading(frame: &[f64; FRAME_DIM]) -> f64 {
    let l = Joint::LeftHip.index() * 3;
    let r = Joint::RightHip.index() * 3;
    let lx = frame[l] - frame[r];
    let lz = frame[l + 2] - frame[r + 2];
    (-lz).atan2(lx)
}

/// Wraps an angle into `[−π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = (a + std::f64::consts::PI) % two_pi;
    if a < 0.0 {
        a += two_pi;
    }
    a - std::f64::consts::PI
}

/// Ground-contact kinematics of one foot joint.
#[derive(Debug, Clone, PartialEq)]
pub struct FootTrack {
    pub joint: Joint,
    /// Horizontal position (x, z).
    pub horizontal: Vec<[f64; 2]>,
    /// Horizontal velocity in m/s.
    pub velocity: Vec<[f64; 2]>,
    /// Height above the ground plane.
    pub height: Vec<f64>,
    pub contact: Vec<bool>,
}

impl FootTrack {
    pub fn speed(&self, t: usize) -> f64 {
        let v = self.velocity[t];
        v[0].hypot(v[1])
    }
}

/// Per-frame state of the four foot joints (L ankle, L toe, R ankle, R toe).
#[derive(Debug, Clone, PartialEq)]
pub struct FootState {
    pub fps: u32,
    pub tracks: [FootTrack; 4],
}

impl FootState {
    pub fn num_frames(&self) -> usize {
        self.tracks[0].height.len()
    }
}

/// Central-difference horizontal velocities (one-sided at the ends).
pub(crate) fn horizontal_velocity(pos: &[[f64; 2]], fps: f64) -> Vec<[f64; 2]> {
    let n = pos.len();
    (0..n)
        .map(|t| {
            let (a, b, scale) = if t == 0 {
                (0, 1, fps)
            } else if t == n - 1 {
                (n - 2, n - 1, fps)
            } else {
                (t - 1, t + 1, 0.5 * fps)
            };
            [(pos[b][0] - pos[a][0]) * scale, (pos[b][1] - pos[a][1]) * scale]
        })
        .collect()
}

/// Foot heights, horizontal velocities and contact flags. A joint is in
/// contact when its height is at most `contact_height` and its horizontal
/// speed is at most `contact_speed`.
pub fn extract_foot_states(m: &Motion, contact_height: f64, contact_speed: f64) -> Result<FootState> {
    if m.num_frames() < 2 {
        return Err(Error::TooShort {
            frames: m.num_frames(),
            needed: 2,
        });
    }
    if !(contact_height > 0.0) || !(contact_speed > 0.0) {
        return Err(Error::OutOfRange {
            what: "contact threshold",
            detail: format!("height {contact_height}, speed {contact_speed}"),
        });
    }
    let fps = m.fps as f64;
    let track = |joint: Joint| {
        let n = m.num_frames();
        let horizontal: Vec<[f64; 2]> = (0..n)
            .map(|t| {
                let p = m.joint(t, joint);
                [p[0], p[2]]
            })
            .collect();
        let height: Vec<f64> = (0..n).map(|t| m.joint(t, joint)[1]).collect();
        let velocity = horizontal_velocity(&horizontal, fps);
        let contact = (0..n)
            .map(|t| {
                let v = velocity[t];
                height[t] <= contact_height && v[0].hypot(v[1]) <= contact_speed
            })
            .collect();
        FootTrack {
            joint,
            horizontal,
            velocity,
            height,
            contact,
        }
    };
    Ok(FootState {
        fps: m.fps,
        tracks: Joint::FEET.map(track),
    })
}
