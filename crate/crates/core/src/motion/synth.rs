//! Procedural motion synthesis: sinusoidal limb oscillators driven along a
//! root path, with a stepping scheme that pins each foot to the ground
//! during stance.

use std::f64::consts::PI;

use rand::Rng as _;

use super::{
    ActionItem, ActionList, ActionType, BodyPart, DurationClass, Joint, Motion, Style, Trajectory, FRAME_DIM, MAX_SEGMENT_SECONDS,
};
use crate::error::{Error, Result};
use crate::rng;

const HIP_HALF_WIDTH: f64 = 0.09;
const THIGH: f64 = 0.43;
const SHIN: f64 = 0.43;
const ANKLE_HEIGHT: f64 = 0.045;
const TOE_DROP: f64 = 0.035;
const FOOT_LENGTH: f64 = 0.13;
const UPPER_ARM: f64 = 0.28;
const FOREARM: f64 = 0.26;
const PELVIS_HEIGHT: f64 = 0.93;
const BLEND_SECONDS: f64 = 0.25;

struct StyleParams {
    amp: f64,
    freq: f64,
    speed: f64,
    lean: f64,
    drop: f64,
    arms_forward: f64,
}

fn style_params(style: Style) -> StyleParams {
    let (amp, freq, speed, lean, drop, arms_forward) = match style {
        Style::Neutral => (1.0, 1.0, 1.0, 0.0, 0.0, 0.0),
        Style::Energetic => (1.35, 1.25, 1.3, 0.02, 0.0, 0.0),
        Style::Cautious => (0.6, 0.75, 0.6, 0.06, 0.06, 0.0),
        Style::Zombie => (0.5, 0.7, 0.5, 0.09, 0.02, 1.0),
        Style::Relaxed => (0.85, 0.9, 0.85, -0.03, 0.0, 0.0),
    };
    StyleParams {
        amp,
        freq,
        speed,
        lean,
        drop,
        arms_forward,
    }
}

fn tempo(d: DurationClass) -> f64 {
    match d {
        DurationClass::Short => 1.3,
        DurationClass::Medium => 1.0,
        DurationClass::Long => 0.75,
    }
}

/// Continuous per-item parameters; blended linearly across item boundaries.
#[derive(Clone, Copy, Default)]
struct Params {
    speed: f64,
    yaw_rate: f64,
    cadence: f64,
    stance: f64,
    swing_height: f64,
    right_offset: f64,
    pelvis: f64,
    bob: f64,
    crouch: f64,
    crouch_freq: f64,
    arm_swing: f64,
    arm_sync: f64,
    arms_forward: f64,
    wave: f64,
    wave_freq: f64,
    head_nod: f64,
    sway: f64,
    lean: f64,
    kick: f64,
}

impl Params {
    fn lerp(&self, o: &Params, w: f64) -> Params {
        macro_rules! mix {
            ($($f:ident),*) => {
                Params { $($f: self.$f + (o.$f - self.$f) * w),* }
            };
        }
        mix!(
            speed,
            yaw_rate,
            cadence,
            stance,
            swing_height,
            right_offset,
            pelvis,
            bob,
            crouch,
            crouch_freq,
            arm_swing,
            arm_sync,
            arms_forward,
            wave,
            wave_freq,
            head_nod,
            sway,
            lean,
            kick
        )
    }
}

struct Jitter {
    speed: f64,
    cadence: f64,
    amp: f64,
}

fn item_params(item: &ActionItem, item_seconds: f64, jit: &Jitter) -> (Params, bool) {
    let st = style_params(item.style);
    let tp = tempo(item.duration_class);
    let amp = st.amp * jit.amp;

    // (locomotion speed, cadence, stance fraction, swing height, arm swing, steps in place)
    let (base_speed, base_cadence, stance, swing, arm, steps_in_place) = match item.action_type {
        ActionType::Walk => (1.0, 0.9, 0.6, 0.10, 0.35, true),
        ActionType::Run => (2.2, 1.35, 0.35, 0.20, 0.6, true),
        ActionType::Jump => (0.8, 0.8, 0.45, 0.28, 0.5, true),
        ActionType::Kick => (0.5, 0.6, 0.6, 0.10, 0.3, true),
        ActionType::Turn => (0.4, 0.8, 0.6, 0.08, 0.2, true),
        ActionType::Wave => (0.6, 0.8, 0.6, 0.08, 0.15, false),
        ActionType::Crouch => (0.4, 0.6, 0.6, 0.06, 0.1, false),
        ActionType::Idle => (0.4, 0.7, 0.6, 0.06, 0.05, false),
    };

    let moving = item.trajectory != Trajectory::InPlace;
    let mut speed = if moving { base_speed * st.speed * tp * jit.speed } else { 0.0 };
    if item.trajectory == Trajectory::StraightBackward {
        speed = -speed;
    }

    let turn_rate = (PI / 2.0) / item_seconds;
    let mut yaw_rate = match item.trajectory {
        Trajectory::ClockwiseCircle => -0.8 * tp,
        Trajectory::CounterclockwiseCircle => 0.8 * tp,
        Trajectory::LeftTurn => turn_rate,
        Trajectory::RightTurn => -turn_rate,
        _ => 0.0,
    };
    if item.action_type == ActionType::Turn && yaw_rate == 0.0 {
        yaw_rate = PI / item_seconds;
    }

    let stepping = moving || steps_in_place;
    let mut p = Params {
        speed,
        yaw_rate,
        cadence: base_cadence * st.freq * tp * jit.cadence,
        stance,
        swing_height: swing * amp.sqrt(),
        right_offset: if item.action_type == ActionType::Jump { 0.0 } else { 0.5 },
        pelvis: PELVIS_HEIGHT - st.drop,
        bob: 0.015 * amp,
        crouch: 0.0,
        crouch_freq: 0.5 * st.freq * tp,
        arm_swing: arm * amp,
        arm_sync: if item.action_type == ActionType::Jump { 1.0 } else { 0.0 },
        arms_forward: st.arms_forward,
        wave: 0.0,
        wave_freq: 1.5 * st.freq * tp,
        head_nod: 0.0,
        sway: 0.0,
        lean: st.lean,
        kick: 0.0,
    };
    if !stepping {
        p.stance = 0.6;
    }
    match item.action_type {
        ActionType::Crouch => {
            p.crouch = 0.32 * amp.min(1.2);
            p.lean += 0.05;
        }
        ActionType::Wave => p.wave = 0.14 * amp,
        ActionType::Kick => p.kick = 0.35 * amp,
        ActionType::Idle => p.bob = 0.005,
        _ => {}
    }
    match item.body_part {
        BodyPart::Legs => {}
        BodyPart::Arms => p.arm_swing *= 1.8,
        BodyPart::Head => p.head_nod = 0.04 * amp,
        BodyPart::FullBody => {
            p.sway = 0.025 * amp;
            p.bob *= 1.8;
        }
    }
    (p, stepping)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn forward(yaw: f64) -> [f64; 2] {
    [yaw.sin(), yaw.cos()]
}

fn left(yaw: f64) -> [f64; 2] {
    [yaw.cos(), -yaw.sin()]
}

/// Maps a body-local point (x left, y up, z forward) to world space.
fn to_world(root: [f64; 2], yaw: f64, local: [f64; 3]) -> [f64; 3] {
    let (s, c) = yaw.sin_cos();
    [
        root[0] + local[0] * c + local[2] * s,
        local[1],
        root[1] - local[0] * s + local[2] * c,
    ]
}

#[derive(Clone, Copy)]
struct FootPhase {
    cycle: i64,
    stance: bool,
    progress: f64,
}

fn foot_phase(phi: f64, stance: f64) -> FootPhase {
    let cycle = phi.floor();
    let u = phi - cycle;
    if u < stance {
        FootPhase {
            cycle: cycle as i64,
            stance: true,
            progress: 0.0,
        }
    } else {
        FootPhase {
            cycle: cycle as i64,
            stance: false,
            progress: (u - stance) / (1.0 - stance),
        }
    }
}

struct Plant {
    xz: [f64; 2],
    yaw: f64,
}

/// Ankle trajectory of one foot: planted during stance runs, arcing between plants.
fn foot_track(
    phases: &[FootPhase],
    roots: &[[f64; 2]],
    yaws: &[f64],
    lateral: f64,
    lift: &[f64],
    kick: Option<&[f64]>,
) -> (Vec<[f64; 3]>, Vec<f64>, Vec<f64>) {
    let n = phases.len();
    let plant_at = |t: usize| Plant {
        xz: {
            let l = left(yaws[t]);
            [roots[t][0] + lateral * l[0], roots[t][1] + lateral * l[1]]
        },
        yaw: yaws[t],
    };

    // stance runs as (start, end) inclusive
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut t = 0;
    while t < n {
        if phases[t].stance {
            let start = t;
            while t + 1 < n && phases[t + 1].stance && phases[t + 1].cycle == phases[start].cycle {
                t += 1;
            }
            runs.push((start, t));
        }
        t += 1;
    }
    let plants: Vec<Plant> = runs.iter().map(|&(a, b)| plant_at((a + b) / 2)).collect();

    let mut pos = vec![[0.0; 3]; n];
    let mut foot_yaw = vec![0.0; n];
    let mut lifted = vec![0.0; n];
    let mut run_idx = 0usize;
    for t in 0..n {
        while run_idx < runs.len() && runs[run_idx].1 < t {
            run_idx += 1;
        }
        if run_idx < runs.len() && runs[run_idx].0 <= t && t <= runs[run_idx].1 {
            let p = &plants[run_idx];
            pos[t] = [p.xz[0], ANKLE_HEIGHT, p.xz[1]];
            foot_yaw[t] = p.yaw;
            continue;
        }
        let prev = if run_idx > 0 {
            Plant {
                xz: plants[run_idx - 1].xz,
                yaw: plants[run_idx - 1].yaw,
            }
        } else {
            plant_at(0)
        };
        let next = if run_idx < runs.len() {
            Plant {
                xz: plants[run_idx].xz,
                yaw: plants[run_idx].yaw,
            }
        } else {
            plant_at(n - 1)
        };
        let s = phases[t].progress;
        let w = smoothstep(s);
        let arc = (PI * s).sin();
        let yaw = prev.yaw + (next.yaw - prev.yaw) * w;
        let mut xz = [
            prev.xz[0] + (next.xz[0] - prev.xz[0]) * w,
            prev.xz[1] + (next.xz[1] - prev.xz[1]) * w,
        ];
        let mut height = lift[t] * arc;
        if let Some(k) = kick {
            let f = forward(yaw);
            xz[0] += k[t] * arc * f[0];
            xz[1] += k[t] * arc * f[1];
            height += 1.3 * k[t] * arc;
        }
        pos[t] = [xz[0], ANKLE_HEIGHT + height, xz[1]];
        foot_yaw[t] = yaw;
        lifted[t] = height;
    }
    (pos, foot_yaw, lifted)
}

fn knee(hip: [f64; 3], ankle: [f64; 3], yaw: f64) -> [f64; 3] {
    let d = [ankle[0] - hip[0], ankle[1] - hip[1], ankle[2] - hip[2]];
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let half = 0.5 * len;
    let bend = (THIGH.min(SHIN).powi(2) - half * half).max(0.0).sqrt();
    let f = forward(yaw);
    [
        0.5 * (hip[0] + ankle[0]) + bend * f[0],
        0.5 * (hip[1] + ankle[1]),
        0.5 * (hip[2] + ankle[2]) + bend * f[1],
    ]
}

/// Arm chain hanging from `shoulder`, swung by `angle` about the local lateral axis.
fn arm(shoulder: [f64; 3], side: f64, angle: f64, flex: f64) -> ([f64; 3], [f64; 3]) {
    let elbow = [
        shoulder[0] + 0.02 * side,
        shoulder[1] - UPPER_ARM * angle.cos(),
        shoulder[2] + UPPER_ARM * angle.sin(),
    ];
    let a2 = angle + flex;
    let wrist = [elbow[0] + 0.01 * side, elbow[1] - FOREARM * a2.cos(), elbow[2] + FOREARM * a2.sin()];
    (elbow, wrist)
}

/// Synthesizes a labeled motion realizing every item of `spec` in order.
///
/// The result is a deterministic function of all four arguments. Items
/// split the duration evenly; the root starts at the origin facing +Z.
pub fn synthesize_motion(spec: &ActionList, duration_s: f64, fps: u32, seed: u64) -> Result<Motion> {
    spec.validate()?;
    if fps == 0 {
        return Err(Error::OutOfRange {
            what: "fps",
            detail: "must be positive".into(),
        });
    }
    if !(duration_s > 0.0) || duration_s > MAX_SEGMENT_SECONDS {
        return Err(Error::OutOfRange {
            what: "duration",
            detail: format!("{duration_s} s not in (0, {MAX_SEGMENT_SECONDS}]"),
        });
    }
    let n = (duration_s * fps as f64).round() as usize;
    if n < 2 {
        return Err(Error::TooShort { frames: n, needed: 2 });
    }

    let mut rng = rng::seeded(seed);
    let items = spec.items();
    let item_seconds = duration_s / items.len() as f64;
    let per_item: Vec<(Params, bool)> = items
        .iter()
        .map(|item| {
            let jit = Jitter {
                speed: rng.random_range(0.95..1.05),
                cadence: rng.random_range(0.95..1.05),
                amp: rng.random_range(0.9..1.1),
            };
            item_params(item, item_seconds, &jit)
        })
        .collect();
    let phase0: f64 = rng.random_range(0.0..1.0);
    let osc0: f64 = rng.random_range(0.0..1.0);

    let dt = 1.0 / fps as f64;
    let boundary = |k: usize| k as f64 * item_seconds;
    let params_at = |time: f64| -> (Params, bool) {
        let k = ((time / item_seconds).floor() as usize).min(items.len() - 1);
        let (mut p, stepping) = per_item[k];
        if k + 1 < items.len() {
            let b = boundary(k + 1);
            if time > b - BLEND_SECONDS {
                let w = 0.5 * smoothstep((time - (b - BLEND_SECONDS)) / (2.0 * BLEND_SECONDS));
                p = p.lerp(&per_item[k + 1].0, w);
            }
        }
        if k > 0 {
            let b = boundary(k);
            if time < b + BLEND_SECONDS {
                let w = 0.5 + 0.5 * smoothstep((time - b) / BLEND_SECONDS);
                p = per_item[k - 1].0.lerp(&per_item[k].0, w);
            }
        }
        (p, stepping)
    };

    // Pass 1: root path, gait phase and oscillator clocks.
    let mut roots = vec![[0.0; 2]; n];
    let mut yaws = vec![0.0; n];
    let mut params = Vec::with_capacity(n);
    let mut phi = vec![0.0; n];
    let mut clock = vec![0.0; n];
    let (mut x, mut z, mut yaw, mut ph, mut ck) = (0.0, 0.0, 0.0, phase0, osc0);
    for t in 0..n {
        let time = t as f64 * dt;
        let (p, stepping) = params_at(time);
        if t > 0 {
            let mid_yaw = yaw + 0.5 * p.yaw_rate * dt;
            let f = forward(mid_yaw);
            x += p.speed * dt * f[0];
            z += p.speed * dt * f[1];
            yaw += p.yaw_rate * dt;
            let both_planted = foot_phase(ph, p.stance).stance && foot_phase(ph + p.right_offset, p.stance).stance;
            if stepping || !both_planted {
                ph += p.cadence.max(0.5) * dt;
            }
            ck += dt;
        }
        roots[t] = [x, z];
        yaws[t] = yaw;
        phi[t] = ph;
        clock[t] = ck;
        params.push(p);
    }

    let left_phases: Vec<FootPhase> = (0..n).map(|t| foot_phase(phi[t], params[t].stance)).collect();
    let right_phases: Vec<FootPhase> = (0..n)
        .map(|t| foot_phase(phi[t] + params[t].right_offset, params[t].stance))
        .collect();
    let lift: Vec<f64> = params.iter().map(|p| p.swing_height).collect();
    let kick: Vec<f64> = params.iter().map(|p| p.kick).collect();
    let (l_ankle, l_yaw, l_lift) = foot_track(&left_phases, &roots, &yaws, HIP_HALF_WIDTH, &lift, None);
    let (r_ankle, r_yaw, r_lift) = foot_track(&right_phases, &roots, &yaws, -HIP_HALF_WIDTH, &lift, Some(&kick));

    // Pass 2: assemble joints.
    let mut frames = Vec::with_capacity(n);
    for t in 0..n {
        let p = &params[t];
        let root = roots[t];
        let yaw = yaws[t];
        let cyc = 2.0 * PI * phi[t];
        let time = clock[t];

        let crouch_depth = p.crouch * (0.5 - 0.5 * (2.0 * PI * p.crouch_freq * time).cos());
        let jump_lift = p.arm_sync * 0.5 * (l_lift[t] + r_lift[t]);
        let pelvis_y = p.pelvis + p.bob * (2.0 * cyc).cos() - crouch_depth + jump_lift;
        let sway = p.sway * cyc.sin();
        let lean = p.lean + 0.25 * crouch_depth;

        let local = |v: [f64; 3]| to_world(root, yaw, v);
        let mut frame = [0.0; FRAME_DIM];
        let mut put = |j: Joint, v: [f64; 3]| {
            let b = j.index() * 3;
            frame[b..b + 3].copy_from_slice(&v);
        };

        let pelvis = local([sway, pelvis_y, 0.0]);
        let l_hip = local([HIP_HALF_WIDTH + sway, pelvis_y - 0.05, 0.0]);
        let r_hip = local([-HIP_HALF_WIDTH + sway, pelvis_y - 0.05, 0.0]);
        put(Joint::Pelvis, pelvis);
        put(Joint::LeftHip, l_hip);
        put(Joint::RightHip, r_hip);
        put(Joint::Spine1, local([0.8 * sway, pelvis_y + 0.10, 0.3 * lean]));
        put(Joint::Spine2, local([0.6 * sway, pelvis_y + 0.23, 0.6 * lean]));
        put(Joint::Spine3, local([0.4 * sway, pelvis_y + 0.35, 0.8 * lean]));
        put(Joint::Neck, local([0.2 * sway, pelvis_y + 0.53, lean]));
        let nod = p.head_nod * (2.0 * PI * 1.5 * time).sin();
        put(Joint::Head, local([0.1 * sway, pelvis_y + 0.67 + 0.5 * nod, lean + 0.02 + nod]));
        let sh_y = pelvis_y + 0.45;
        put(Joint::LeftCollar, local([0.06, sh_y + 0.02, 0.9 * lean]));
        put(Joint::RightCollar, local([-0.06, sh_y + 0.02, 0.9 * lean]));
        let l_sh = [0.18, sh_y, 0.9 * lean];
        let r_sh = [-0.18, sh_y, 0.9 * lean];
        put(Joint::LeftShoulder, local(l_sh));
        put(Joint::RightShoulder, local(r_sh));

        // arms swing opposite the legs; synchronized for jumps
        let swing = p.arm_swing * cyc.sin();
        let (l_ang, r_ang) = if p.arm_sync > 0.5 {
            (
                p.arm_swing * (cyc - 0.5 * PI).sin().abs(),
                p.arm_swing * (cyc - 0.5 * PI).sin().abs(),
            )
        } else {
            (-swing, swing)
        };
        let fwd = 1.35 * p.arms_forward;
        let (l_el, l_wr) = arm(l_sh, 1.0, l_ang + fwd, 0.15 + 0.1 * fwd);
        let (mut r_el, mut r_wr) = arm(r_sh, -1.0, r_ang + fwd, 0.15 + 0.1 * fwd);
        if p.wave > 0.0 {
            let w = (p.wave / 0.14).min(1.0);
            let side = p.wave * (2.0 * PI * p.wave_freq * time).sin();
            let up_el = [r_sh[0] - 0.18, r_sh[1] + 0.12, r_sh[2] + 0.05];
            let up_wr = [up_el[0] - 0.05 + side, up_el[1] + 0.24, up_el[2] + 0.03];
            for k in 0..3 {
                r_el[k] += (up_el[k] - r_el[k]) * w;
                r_wr[k] += (up_wr[k] - r_wr[k]) * w;
            }
        }
        put(Joint::LeftElbow, local(l_el));
        put(Joint::LeftWrist, local(l_wr));
        put(Joint::RightElbow, local(r_el));
        put(Joint::RightWrist, local(r_wr));

        put(Joint::LeftAnkle, l_ankle[t]);
        put(Joint::RightAnkle, r_ankle[t]);
        put(Joint::LeftKnee, knee(l_hip, l_ankle[t], yaw));
        put(Joint::RightKnee, knee(r_hip, r_ankle[t], yaw));
        for (toe, ankle, fy) in [(Joint::LeftToe, l_ankle[t], l_yaw[t]), (Joint::RightToe, r_ankle[t], r_yaw[t])] {
            let f = forward(fy);
            put(
                toe,
                [ankle[0] + FOOT_LENGTH * f[0], ankle[1] - TOE_DROP, ankle[2] + FOOT_LENGTH * f[1]],
            );
        }
        frames.push(frame);
    }

    Motion::new(0, fps, spec.clone(), frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{extract_foot_states, DEFAULT_CONTACT_HEIGHT, DEFAULT_CONTACT_SPEED};

    fn item(s: &str) -> ActionItem {
        ActionItem::parse(s).unwrap()
    }

    /// Signed winding of the root path: accumulated change in the yaw of
    /// the displacement direction (counterclockwise from above is positive).
    fn winding(m: &Motion) -> f64 {
        let pts: Vec<[f64; 3]> = (0..m.num_frames()).map(|t| m.joint(t, Joint::Pelvis)).collect();
        let mut total = 0.0;
        let mut prev: Option<f64> = None;
        for w in pts.windows(2) {
            let (dx, dz) = (w[1][0] - w[0][0], w[1][2] - w[0][2]);
            if dx.hypot(dz) < 1e-6 {
                continue;
            }
            let heading = dx.atan2(dz);
            if let Some(p) = prev {
                let mut d = heading - p;
                while d > PI {
                    d -= 2.0 * PI;
                }
                while d < -PI {
                    d += 2.0 * PI;
                }
                total += d;
            }
            prev = Some(heading);
        }
        total
    }

    #[test]
    fn frame_count_is_duration_times_fps() {
        let spec = ActionList::single(item("walk,legs,neutral,medium,straight_forward"));
        let m = synthesize_motion(&spec, 4.0, 20, 7).unwrap();
        assert_eq!(m.num_frames(), 80);
        assert_eq!(m.attrs, spec);
    }

    #[test]
    fn deterministic_for_fixed_inputs() {
        let spec = ActionList::new(vec![
            item("walk,arms,zombie,long,left_turn"),
            item("kick,legs,energetic,short,in_place"),
        ]);
        let a = synthesize_motion(&spec, 6.0, 20, 11).unwrap();
        let b = synthesize_motion(&spec, 6.0, 20, 11).unwrap();
        assert_eq!(a, b);
        let c = synthesize_motion(&spec, 6.0, 20, 12).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn rejects_bad_duration_and_empty_spec() {
        let spec = ActionList::single(item("walk,legs,neutral,medium,straight_forward"));
        assert!(matches!(synthesize_motion(&spec, 10.5, 20, 0), Err(Error::OutOfRange { .. })));
        assert!(matches!(
            synthesize_motion(&ActionList::empty(), 2.0, 20, 0),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn in_place_stays_put() {
        for action in ActionType::ALL {
            let spec = ActionList::single(ActionItem::new(
                *action,
                BodyPart::FullBody,
                Style::Energetic,
                DurationClass::Short,
                Trajectory::InPlace,
            ));
            let m = synthesize_motion(&spec, 5.0, 20, 3).unwrap();
            let a = m.joint(0, Joint::Pelvis);
            let b = m.joint(m.num_frames() - 1, Joint::Pelvis);
            let disp = (b[0] - a[0]).hypot(b[2] - a[2]);
            assert!(disp < 0.1, "{action}: {disp}");
        }
    }

    #[test]
    fn clockwise_circle_winds_negative() {
        let spec = ActionList::single(item("walk,legs,neutral,medium,clockwise_circle"));
        let m = synthesize_motion(&spec, 8.0, 20, 7).unwrap();
        let w = winding(&m);
        assert!(w < -PI, "winding {w}");
        let spec = ActionList::single(item("walk,legs,neutral,long,counterclockwise_circle"));
        let m = synthesize_motion(&spec, 8.0, 20, 7).unwrap();
        assert!(winding(&m) > PI);
    }

    #[test]
    fn backward_moves_against_facing() {
        let spec = ActionList::single(item("walk,legs,neutral,medium,straight_backward"));
        let m = synthesize_motion(&spec, 4.0, 20, 1).unwrap();
        let z0 = m.joint(0, Joint::Pelvis)[2];
        let z1 = m.joint(m.num_frames() - 1, Joint::Pelvis)[2];
        assert!(z1 < z0 - 1.0);
    }

    #[test]
    fn stance_feet_obey_contact_thresholds() {
        let spec = ActionList::single(item("walk,legs,neutral,medium,straight_forward"));
        let m = synthesize_motion(&spec, 6.0, 20, 5).unwrap();
        let fs = extract_foot_states(&m, DEFAULT_CONTACT_HEIGHT, DEFAULT_CONTACT_SPEED).unwrap();
        for t in 0..m.num_frames() {
            // at least one foot joint is grounded and still at every frame of a walk
            assert!(fs.tracks.iter().any(|tr| tr.contact[t]), "frame {t}");
        }
    }
}
