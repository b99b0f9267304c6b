//! Foot-contact plausibility score.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::motion::{extract_foot_states, FootState, Motion, DEFAULT_CONTACT_HEIGHT, DEFAULT_CONTACT_SPEED};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    /// Mean of per-joint scores over all frames and the four foot joints.
    #[default]
    PerJoint,
    /// One score per frame from the minimum height and minimum speed over
    /// the four foot joints.
    MinOverFeet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    pub height: f64,
    pub speed: f64,
    pub mode: ContactMode,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            height: DEFAULT_CONTACT_HEIGHT,
            speed: DEFAULT_CONTACT_SPEED,
            mode: ContactMode::PerJoint,
        }
    }
}

impl ContactConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.height > 0.0) {
            v.push("contact.height must be > 0".into());
        }
        if !(self.speed > 0.0) {
            v.push("contact.speed must be > 0".into());
        }
        v
    }
}

/// `exp(-(|z| - tau_h)+) * exp(-(speed - tau_v)+)`.
pub fn contact_term(z: f64, speed: f64, tau_h: f64, tau_v: f64) -> f64 {
    (-(z.abs() - tau_h).max(0.0)).exp() * (-(speed - tau_v).max(0.0)).exp()
}

pub fn contact_score_from_feet(feet: &FootState, tau_h: f64, tau_v: f64, mode: ContactMode) -> f64 {
    let n = feet.num_frames();
    let mut total = 0.0;
    for t in 0..n {
        match mode {
            ContactMode::PerJoint => {
                for tr in &feet.tracks {
                    total += contact_term(tr.height[t], tr.speed(t), tau_h, tau_v) / 4.0;
                }
            }
            ContactMode::MinOverFeet => {
                let z = feet.tracks.iter().map(|tr| tr.height[t].abs()).fold(f64::INFINITY, f64::min);
                let v = feet.tracks.iter().map(|tr| tr.speed(t)).fold(f64::INFINITY, f64::min);
                total += contact_term(z, v, tau_h, tau_v);
            }
        }
    }
    total / n as f64
}

/// Sequence-averaged contact score in (0, 1].
pub fn contact_score(m: &Motion, tau_h: f64, tau_v: f64, mode: ContactMode) -> Result<f64> {
    let feet = extract_foot_states(m, tau_h, tau_v)?;
    Ok(contact_score_from_feet(&feet, tau_h, tau_v, mode))
}
