//! Descriptor embeddings of motion segments.
//!
//! The kinematic part summarizes root path and limb activity in a
//! heading-aligned frame; each feature is centered and scaled by fixed
//! constants so cosine similarity separates unrelated motions. The full
//! descriptor appends weighted one-hot encodings of the annotation.

use serde::{Deserialize, Serialize};

use crate::motion::{heading, wrap_angle, ActionList, ActionType, BodyPart, DurationClass, Joint, Motion, Style, Trajectory};

/// Unit-norm descriptor vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    /// L2-normalizes `v`; an all-zero vector maps to the first basis vector.
    pub fn from_raw(mut v: Vec<f64>) -> Self {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        } else if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        cosine(&self.0, &other.0)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Names of the kinematic features, in descriptor order.
pub const KINEMATIC_FEATURES: [&str; 20] = [
    "forward_speed",
    "lateral_speed",
    "yaw_rate",
    "abs_yaw_rate",
    "net_speed",
    "pelvis_height",
    "pelvis_bob",
    "airborne",
    "left_ankle_speed",
    "right_ankle_speed",
    "left_ankle_lift",
    "right_ankle_lift",
    "left_wrist_speed",
    "right_wrist_speed",
    "wrist_height",
    "wrist_reach",
    "head_speed",
    "lean",
    "cadence",
    "duration",
];

/// (center, scale) per kinematic feature.
const FEATURE_NORM: [(f64, f64); 20] = [
    (0.44, 0.77),
    (0.024, 0.04),
    (0.0, 0.58),
    (0.45, 0.39),
    (0.54, 0.54),
    (0.91, 0.063),
    (0.029, 0.037),
    (0.058, 0.15),
    (0.73, 0.59),
    (0.73, 0.59),
    (0.155, 0.071),
    (0.206, 0.15),
    (0.67, 0.75),
    (0.67, 0.75),
    (0.063, 0.2),
    (0.176, 0.21),
    (0.186, 0.16),
    (0.036, 0.049),
    (1.22, 0.76),
    (3.0, 1.2),
];

/// Weight of the attribute block relative to the kinematic block.
pub const ATTRIBUTE_WEIGHT: f64 = 1.0;

const ATTR_DIM: usize = ActionType::ALL.len() + BodyPart::ALL.len() + Style::ALL.len() + DurationClass::ALL.len() + Trajectory::ALL.len();

/// Unnormalized kinematic feature values, in `KINEMATIC_FEATURES` order.
pub fn raw_kinematic_features(m: &Motion) -> [f64; 20] {
    let n = m.num_frames();
    let fps = m.fps as f64;
    let dur = n as f64 / fps;
    let yaw: Vec<f64> = m.frames.iter().map(heading).collect();

    // heading-aligned local coordinates relative to the pelvis
    let local = |t: usize, j: Joint| -> [f64; 3] {
        let p = m.joint(t, j);
        let r = m.joint(t, Joint::Pelvis);
        let (s, c) = yaw[t].sin_cos();
        let (dx, dz) = (p[0] - r[0], p[2] - r[2]);
        [dx * c - dz * s, p[1], dx * s + dz * c]
    };
    let local_speed = |j: Joint| -> f64 {
        let mut acc = 0.0;
        for t in 0..n - 1 {
            let (a, b) = (local(t, j), local(t + 1, j));
            acc += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
        }
        acc * fps / (n - 1) as f64
    };

    let (mut fwd, mut lat, mut dyaw) = (0.0, 0.0, 0.0);
    for t in 0..n - 1 {
        let a = m.joint(t, Joint::Pelvis);
        let b = m.joint(t + 1, Joint::Pelvis);
        let (dx, dz) = (b[0] - a[0], b[2] - a[2]);
        let (s, c) = yaw[t].sin_cos();
        fwd += dx * s + dz * c;
        lat += (dx * c - dz * s).abs();
        dyaw += wrap_angle(yaw[t + 1] - yaw[t]);
    }
    let span = (n - 1) as f64 / fps;
    let p0 = m.joint(0, Joint::Pelvis);
    let p1 = m.joint(n - 1, Joint::Pelvis);
    let net = (p1[0] - p0[0]).hypot(p1[2] - p0[2]) / span;

    let heights: Vec<f64> = (0..n).map(|t| m.joint(t, Joint::Pelvis)[1]).collect();
    let hmean = heights.iter().sum::<f64>() / n as f64;
    let hstd = (heights.iter().map(|h| (h - hmean).powi(2)).sum::<f64>() / n as f64).sqrt();

    let min_foot = |t: usize| {
        [Joint::LeftAnkle, Joint::LeftToe, Joint::RightAnkle, Joint::RightToe]
            .iter()
            .map(|&j| m.joint(t, j)[1])
            .fold(f64::INFINITY, f64::min)
    };
    let airborne = (0..n).filter(|&t| min_foot(t) > 0.08).count() as f64 / n as f64;

    let lift = |j: Joint| (0..n).map(|t| m.joint(t, j)[1]).fold(f64::NEG_INFINITY, f64::max);
    let mean_over = |f: &dyn Fn(usize) -> f64| (0..n).map(f).sum::<f64>() / n as f64;
    let wrist_h = mean_over(&|t| 0.5 * (local(t, Joint::LeftWrist)[1] + local(t, Joint::RightWrist)[1]) - heights[t]);
    let reach = mean_over(&|t| 0.5 * (local(t, Joint::LeftWrist)[2] + local(t, Joint::RightWrist)[2]));
    let lean = mean_over(&|t| local(t, Joint::Neck)[2]);

    // stepping cadence: sign changes of the fore-aft ankle separation
    let sep: Vec<f64> = (0..n)
        .map(|t| local(t, Joint::LeftAnkle)[2] - local(t, Joint::RightAnkle)[2])
        .collect();
    let crossings = sep
        .windows(2)
        .filter(|w| (w[0] > 0.02 && w[1] <= 0.02) || (w[0] < -0.02 && w[1] >= -0.02))
        .count();

    [
        fwd / span,
        lat / (n - 1) as f64 * fps,
        dyaw / span,
        (dyaw / span).abs(),
        net,
        hmean,
        hstd,
        airborne,
        local_speed(Joint::LeftAnkle),
        local_speed(Joint::RightAnkle),
        lift(Joint::LeftAnkle),
        lift(Joint::RightAnkle),
        local_speed(Joint::LeftWrist),
        local_speed(Joint::RightWrist),
        wrist_h,
        reach,
        local_speed(Joint::Head),
        lean,
        crossings as f64 / dur,
        dur,
    ]
}

fn kinematic_block(m: &Motion) -> Vec<f64> {
    raw_kinematic_features(m)
        .iter()
        .zip(FEATURE_NORM)
        .map(|(v, (c, s))| (v - c) / s)
        .collect()
}

fn attribute_block(attrs: &ActionList) -> Vec<f64> {
    let mut v = vec![0.0; ATTR_DIM];
    let items = attrs.items();
    if items.is_empty() {
        return v;
    }
    let w = ATTRIBUTE_WEIGHT / items.len() as f64;
    for it in items {
        let mut off = 0;
        v[off + it.action_type.ordinal()] += w;
        off += ActionType::ALL.len();
        v[off + it.body_part.ordinal()] += w;
        off += BodyPart::ALL.len();
        v[off + it.style.ordinal()] += w;
        off += Style::ALL.len();
        v[off + it.duration_class.ordinal()] += w;
        off += DurationClass::ALL.len();
        v[off + it.trajectory.ordinal()] += w;
    }
    v
}

/// Full descriptor: kinematic features followed by the attribute block.
pub fn embed_segment(m: &Motion) -> Embedding {
    let mut v = kinematic_block(m);
    v.extend(attribute_block(&m.attrs));
    Embedding::from_raw(v)
}

/// Kinematic view only; used wherever the motion has no trusted annotation,
/// such as generated samples.
pub fn embed_kinematic(m: &Motion) -> Embedding {
    Embedding::from_raw(kinematic_block(m))
}
