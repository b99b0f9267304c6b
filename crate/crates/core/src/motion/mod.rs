//! Motion data model: a fixed 22-joint skeleton sampled at a frame rate,
//! plus its ground-truth action annotation.
//!
//! Coordinates are meters, Y-up, with the ground plane at height 0. The
//! horizontal plane is spanned by X (body left at zero yaw) and Z (body
//! forward at zero yaw). Yaw is a right-handed rotation about +Y, so a
//! positive yaw change is counterclockwise when viewed from above.

mod corpus;
mod io;
mod kinematics;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{family_specs, generate_corpus, CorpusConfig};
pub use io::{load_corpus, motion_from_json, motion_to_json, read_motion, save_corpus, write_motion, CorpusManifest, ManifestEntry};
pub use kinematics::{extract_foot_states, heading, resample, segment, wrap_angle, FootState, FootTrack};
pub use synth::synthesize_motion;

pub const NUM_JOINTS: usize = 22;
pub const FRAME_DIM: usize = NUM_JOINTS * 3;
pub const MAX_SEGMENT_SECONDS: f64 = 10.0;

pub const DEFAULT_CONTACT_HEIGHT: f64 = 0.05;
pub const DEFAULT_CONTACT_SPEED: f64 = 0.075;

/// Joint order follows the common 22-joint body layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(usize)]
pub enum Joint {
    Pelvis = 0,
    LeftHip,
    RightHip,
    Spine1,
    LeftKnee,
    RightKnee,
    Spine2,
    LeftAnkle,
    RightAnkle,
    Spine3,
    LeftToe,
    RightToe,
    Neck,
    LeftCollar,
    RightCollar,
    Head,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
}

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::Pelvis,
        Joint::LeftHip,
        Joint::RightHip,
        Joint::Spine1,
        Joint::LeftKnee,
        Joint::RightKnee,
        Joint::Spine2,
        Joint::LeftAnkle,
        Joint::RightAnkle,
        Joint::Spine3,
        Joint::LeftToe,
        Joint::RightToe,
        Joint::Neck,
        Joint::LeftCollar,
        Joint::RightCollar,
        Joint::Head,
        Joint::LeftShoulder,
        Joint::RightShoulder,
        Joint::LeftElbow,
        Joint::RightElbow,
        Joint::LeftWrist,
        Joint::RightWrist,
    ];

    /// Foot joints carrying contact semantics: left ankle, left toe, right ankle, right toe.
    pub const FEET: [Joint; 4] = [Joint::LeftAnkle, Joint::LeftToe, Joint::RightAnkle, Joint::RightToe];

    pub fn index(self) -> usize {
        self as usize
    }
}

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn ordinal(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).unwrap()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::InvalidSpec(format!(
                        "`{other}` is not a valid {}",
                        stringify!($name)
                    ))),
                }
            }
        }
    };
}

closed_enum!(ActionType {
    Walk => "walk",
    Run => "run",
    Jump => "jump",
    Kick => "kick",
    Turn => "turn",
    Wave => "wave",
    Crouch => "crouch",
    Idle => "idle",
});

closed_enum!(BodyPart {
    Legs => "legs",
    Arms => "arms",
    FullBody => "full_body",
    Head => "head",
});

closed_enum!(Style {
    Neutral => "neutral",
    Energetic => "energetic",
    Cautious => "cautious",
    Zombie => "zombie",
    Relaxed => "relaxed",
});

closed_enum!(DurationClass {
    Short => "short",
    Medium => "medium",
    Long => "long",
});

closed_enum!(Trajectory {
    InPlace => "in_place",
    StraightForward => "straight_forward",
    StraightBackward => "straight_backward",
    ClockwiseCircle => "clockwise_circle",
    CounterclockwiseCircle => "counterclockwise_circle",
    LeftTurn => "left_turn",
    RightTurn => "right_turn",
});

/// One annotated action: `(type, body-part, style, duration, trajectory)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionItem {
    pub action_type: ActionType,
    pub body_part: BodyPart,
    pub style: Style,
    pub duration_class: DurationClass,
    pub trajectory: Trajectory,
}

impl ActionItem {
    pub fn new(action_type: ActionType, body_part: BodyPart, style: Style, duration_class: DurationClass, trajectory: Trajectory) -> Self {
        Self {
            action_type,
            body_part,
            style,
            duration_class,
            trajectory,
        }
    }

    /// Parses `"walk,legs,neutral,medium,straight_forward"`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(Error::InvalidSpec(format!(
                "expected 5 comma-separated fields, got {}",
                parts.len()
            )));
        }
        Ok(Self {
            action_type: parts[0].parse()?,
            body_part: parts[1].parse()?,
            style: parts[2].parse()?,
            duration_class: parts[3].parse()?,
            trajectory: parts[4].parse()?,
        })
    }

    /// Number of fields on which two items differ.
    pub fn field_distance(&self, other: &ActionItem) -> usize {
        (self.action_type != other.action_type) as usize
            + (self.body_part != other.body_part) as usize
            + (self.style != other.style) as usize
            + (self.duration_class != other.duration_class) as usize
            + (self.trajectory != other.trajectory) as usize
    }
}

impl fmt::Display for ActionItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.action_type, self.body_part, self.style, self.duration_class, self.trajectory
        )
    }
}

/// Ordered action annotation of a segment, in temporal order of execution.
///
/// Annotations of corpus motions are non-empty; motions reconstructed from
/// generated tokens carry an empty list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionList(pub Vec<ActionItem>);

impl ActionList {
    pub fn new(items: Vec<ActionItem>) -> Self {
        Self(items)
    }

    pub fn single(item: ActionItem) -> Self {
        Self(vec![item])
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn items(&self) -> &[ActionItem] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, item: &ActionItem) -> bool {
        self.0.contains(item)
    }

    /// Set difference `self \ other` over exact tuple equality, in `self`'s
    /// order with duplicates removed.
    pub fn difference(&self, other: &ActionList) -> Vec<ActionItem> {
        let mut out: Vec<ActionItem> = Vec::new();
        for item in &self.0 {
            if !other.contains(item) && !out.contains(item) {
                out.push(*item);
            }
        }
        out
    }

    /// Order-insensitive set equality.
    pub fn same_set(&self, other: &ActionList) -> bool {
        self.difference(other).is_empty() && other.difference(self).is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidSpec("action list is empty".into()));
        }
        Ok(())
    }
}

/// A joint-position time series. `frames[t]` holds `NUM_JOINTS * 3`
/// coordinates in joint-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub id: u64,
    pub fps: u32,
    pub attrs: ActionList,
    pub frames: Vec<[f64; FRAME_DIM]>,
}

impl Motion {
    pub fn new(id: u64, fps: u32, attrs: ActionList, frames: Vec<[f64; FRAME_DIM]>) -> Result<Self> {
        let m = Self { id, fps, attrs, frames };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fps == 0 {
            return Err(Error::OutOfRange {
                what: "fps",
                detail: "must be positive".into(),
            });
        }
        if self.frames.len() < 2 {
            return Err(Error::TooShort {
                frames: self.frames.len(),
                needed: 2,
            });
        }
        if self.frames.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
            return Err(Error::OutOfRange {
                what: "coordinate",
                detail: "non-finite value".into(),
            });
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.fps as f64
    }

    pub fn joint(&self, t: usize, j: Joint) -> [f64; 3] {
        let b = j.index() * 3;
        let f = &self.frames[t];
        [f[b], f[b + 1], f[b + 2]]
    }

    /// Translates every joint horizontally by `(dx, dz)`.
    pub fn translated(&self, dx: f64, dz: f64) -> Motion {
        let mut out = self.clone();
        for f in &mut out.frames {
            for j in 0..NUM_JOINTS {
                f[3 * j] += dx;
                f[3 * j + 2] += dz;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_parsing_rejects_unknown_members() {
        assert_eq!("walk".parse::<ActionType>().unwrap(), ActionType::Walk);
        assert!(matches!("moonwalk".parse::<ActionType>(), Err(Error::InvalidSpec(_))));
        assert!(ActionItem::parse("walk,legs,neutral,medium").is_err());
        let item = ActionItem::parse("kick, legs, energetic, short, in_place").unwrap();
        assert_eq!(item.to_string(), "kick,legs,energetic,short,in_place");
    }

    #[test]
    fn difference_is_set_semantics() {
        let walk = ActionItem::parse("walk,legs,neutral,medium,straight_forward").unwrap();
        let kick = ActionItem::parse("kick,legs,neutral,short,in_place").unwrap();
        let a = ActionList::new(vec![walk]);
        let b = ActionList::new(vec![walk, kick, kick]);
        assert_eq!(b.difference(&a), vec![kick]);
        assert!(a.difference(&b).is_empty());
        assert!(!a.same_set(&b));
        assert!(ActionList::new(vec![kick, walk]).same_set(&ActionList::new(vec![walk, kick])));
    }
}
