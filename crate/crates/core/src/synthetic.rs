//! Labelled toy skeleton corpora.
//!
//! A 20-joint body (Kinect v1 joint order) performs one of six periodic
//! actions. Each sequence draws its own body scale, facing angle, position,
//! phase, speed, amplitude and length, and every joint gets Gaussian
//! jitter, so classes are separable by motion but not by any single frame.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Frame, Joint, SkeletonSequence};

pub const JOINTS: usize = 20;

pub const ACTIONS: [&str; 6] = ["wave", "arms-up", "kick", "bend", "circle", "jump"];

// joint indices
const HIP: usize = 0;
const SPINE: usize = 1;
const NECK: usize = 2;
const HEAD: usize = 3;
const L_SHOULDER: usize = 4;
const R_SHOULDER: usize = 8;
const L_HIP: usize = 12;
const R_HIP: usize = 16;

const UPPER_ARM: f64 = 0.28;
const FOREARM: f64 = 0.25;
const HAND: f64 = 0.08;
const THIGH: f64 = 0.42;
const SHIN: f64 = 0.40;
const FOOT: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Number of action classes, taken from the start of [`ACTIONS`].
    pub classes: usize,
    /// Index of the first action in [`ACTIONS`]; labels still start at 0.
    pub first_action: usize,
    pub per_class: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Standard deviation of the per-joint jitter, in metres.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: 3,
            first_action: 0,
            per_class: 20,
            min_frames: 20,
            max_frames: 60,
            noise: 0.01,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.first_action + self.classes > ACTIONS.len() {
            return Err(Error::Config(format!(
                "actions {}..{} outside the {} available",
                self.first_action,
                self.first_action + self.classes,
                ACTIONS.len()
            )));
        }
        if self.min_frames < 2 || self.max_frames < self.min_frames {
            return Err(Error::Config(format!(
                "frame range {}..={} needs 2 <= min <= max",
                self.min_frames, self.max_frames
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise {} must be finite and non-negative", self.noise)));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        ACTIONS[self.first_action..self.first_action + self.classes]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn unit(a: V3) -> V3 {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    if n == 0.0 {
        a
    } else {
        scale(a, 1.0 / n)
    }
}

/// Writes `[root + d1·l0, + d2·l1, + d2·l2]` into the three joints after
/// `root`.
fn chain(p: &mut [V3; JOINTS], root: usize, d1: V3, d2: V3, lens: [f64; 3]) {
    let (d1, d2) = (unit(d1), unit(d2));
    let (first, root) = (root + 1, p[root]);
    p[first] = add(root, scale(d1, lens[0]));
    p[first + 1] = add(p[first], scale(d2, lens[1]));
    p[first + 2] = add(p[first + 1], scale(d2, lens[2]));
}

/// Body in a neutral standing pose: hip center at the origin, +y up,
/// +z towards the camera, +x to the body's left.
fn rest_pose() -> [V3; JOINTS] {
    let mut p = [[0.0; 3]; JOINTS];
    p[HIP] = [0.0, 0.0, 0.0];
    p[SPINE] = [0.0, 0.25, 0.0];
    p[NECK] = [0.0, 0.5, 0.0];
    p[HEAD] = [0.0, 0.68, 0.0];
    p[L_SHOULDER] = [0.18, 0.48, 0.0];
    p[R_SHOULDER] = [-0.18, 0.48, 0.0];
    p[L_HIP] = [0.1, -0.02, 0.0];
    p[R_HIP] = [-0.1, -0.02, 0.0];
    let down = [0.0, -1.0, 0.0];
    let arms = [UPPER_ARM, FOREARM, HAND];
    chain(&mut p, L_SHOULDER, [0.15, -1.0, 0.0], down, arms);
    chain(&mut p, R_SHOULDER, [-0.15, -1.0, 0.0], down, arms);
    let legs = [THIGH, SHIN, FOOT];
    set_leg(&mut p, L_HIP, 0.0, legs);
    set_leg(&mut p, R_HIP, 0.0, legs);
    p
}

/// Leg hanging from `hip` swung forward by `angle` radians; the foot points
/// forward.
fn set_leg(p: &mut [V3; JOINTS], hip_index: usize, angle: f64, lens: [f64; 3]) {
    let hip = p[hip_index];
    let d = [0.0, -angle.cos(), angle.sin()];
    p[hip_index + 1] = add(hip, scale(d, lens[0]));
    p[hip_index + 2] = add(p[hip_index + 1], scale(d, lens[1]));
    p[hip_index + 3] = add(p[hip_index + 2], scale([0.0, 0.0, 1.0], lens[2]));
}

fn rotate_x(v: V3, pivot: V3, a: f64) -> V3 {
    let (s, c) = a.sin_cos();
    let (y, z) = (v[1] - pivot[1], v[2] - pivot[2]);
    [v[0], pivot[1] + c * y - s * z, pivot[2] + s * y + c * z]
}

fn rotate_y(v: V3, a: f64) -> V3 {
    let (s, c) = a.sin_cos();
    [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]]
}

/// Pose of `action` at cycle angle `theta` with motion amplitude `amp`.
fn pose(action: usize, theta: f64, amp: f64) -> [V3; JOINTS] {
    let mut p = rest_pose();
    let arms = [UPPER_ARM, FOREARM, HAND];
    match action {
        // right arm raised, forearm swinging side to side
        0 => {
            let sway = amp * 0.9 * theta.sin();
            chain(&mut p, R_SHOULDER, [-0.8, 0.6, 0.0], [-sway, 1.0, 0.1], arms);
        }
        // both arms swept sideways from the hips to above the head
        1 => {
            let beta = amp * PI * 0.9 * (0.5 - 0.5 * theta.cos());
            let (s, c) = beta.sin_cos();
            let l = [s.max(0.15), -c, 0.0];
            let r = [-s.max(0.15), -c, 0.0];
            chain(&mut p, L_SHOULDER, l, l, arms);
            chain(&mut p, R_SHOULDER, r, r, arms);
        }
        // right leg kicking forward
        2 => {
            let gamma = amp * 1.1 * theta.sin().max(0.0);
            set_leg(&mut p, R_HIP, gamma, [THIGH, SHIN, FOOT]);
            // arms counter-swing a little
            let swing = -0.3 * gamma;
            chain(&mut p, L_SHOULDER, [0.15, -1.0, swing.tan()], [0.1, -1.0, swing.tan()], arms);
        }
        // upper body bowing forward around the hip
        3 => {
            let delta = amp * 1.0 * (0.5 - 0.5 * theta.cos());
            let pivot = p[HIP];
            for j in SPINE..L_HIP {
                p[j] = rotate_x(p[j], pivot, delta);
            }
        }
        // right hand drawing a circle in front of the chest
        4 => {
            let center = add(p[R_SHOULDER], [-0.05, -0.05, 0.35]);
            let r = 0.18 * amp;
            let hand = add(center, [r * theta.cos(), r * theta.sin(), 0.0]);
            let elbow = add(p[R_SHOULDER], [-0.12, -0.2, 0.12]);
            p[R_SHOULDER + 1] = elbow;
            let d = unit([hand[0] - elbow[0], hand[1] - elbow[1], hand[2] - elbow[2]]);
            p[R_SHOULDER + 2] = add(elbow, scale(d, FOREARM));
            p[R_SHOULDER + 3] = add(p[R_SHOULDER + 2], scale(d, HAND));
        }
        // vertical hops with knee flexion before take-off
        _ => {
            let s = theta.sin();
            let lift = amp * 0.25 * s.max(0.0);
            let crouch = amp * 0.12 * (-s).max(0.0);
            for v in p.iter_mut().take(R_HIP + 1).skip(HIP) {
                v[1] += lift - crouch;
            }
            for hip in [L_HIP, R_HIP] {
                set_leg(&mut p, hip, 0.0, [THIGH - crouch * 0.5, SHIN - crouch * 0.5, FOOT]);
            }
        }
    }
    p
}

/// Generates `per_class` sequences for each class, label-major. Subject ids
/// cycle through 1..=10 within each class, cameras through 1..=3.
pub fn generate(config: &SyntheticConfig) -> Result<Vec<SkeletonSequence>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.classes * config.per_class);
    for label in 0..config.classes {
        for i in 0..config.per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream((label * 1_000_003 + i) as u64);
            out.push(sequence(config, label, i, &mut rng)?);
        }
    }
    Ok(out)
}

fn sequence(config: &SyntheticConfig, label: usize, index: usize, rng: &mut ChaCha8Rng) -> Result<SkeletonSequence> {
    let action = config.first_action + label;
    let frames = rng.gen_range(config.min_frames..=config.max_frames);
    let body = rng.gen_range(0.85..1.15);
    let facing = rng.gen_range(-0.3..0.3);
    let origin = [rng.gen_range(-0.8..0.8), rng.gen_range(-0.2..0.2), rng.gen_range(2.0..3.5)];
    let phase = rng.gen_range(0.0..2.0 * PI);
    let cycles = rng.gen_range(1.0..2.5);
    let amp = rng.gen_range(0.75..1.15);
    let jitter = Normal::new(0.0, config.noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::Config(e.to_string()))?;
    let frames = (0..frames)
        .map(|t| {
            let theta = phase + 2.0 * PI * cycles * t as f64 / frames as f64;
            let joints = pose(action, theta, amp)
                .iter()
                .map(|&v| {
                    let w = add(rotate_y(scale(v, body), facing), origin);
                    let mut n = || if config.noise > 0.0 { jitter.sample(rng) } else { 0.0 };
                    Joint::new(w[0] + n(), w[1] + n(), w[2] + n())
                })
                .collect();
            Frame::new(joints)
        })
        .collect();
    Ok(SkeletonSequence {
        frames,
        label,
        subject: (index % 10) as u32 + 1,
        camera: (index % 3) as u32 + 1,
        trial: (index / 10) as u32 + 1,
        source_path: format!("synthetic/{}/{index:03}", ACTIONS[action]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_metadata() {
        let cfg = SyntheticConfig { per_class: 12, ..SyntheticConfig::default() };
        let seqs = generate(&cfg).unwrap();
        assert_eq!(seqs.len(), 36);
        for s in &seqs {
            s.validate(Some(3)).unwrap();
            assert_eq!(s.joint_count(), JOINTS);
            assert!((20..=60).contains(&s.len()));
            assert!((1..=10).contains(&s.subject));
        }
        assert_eq!(seqs[12].label, 1);
        assert_eq!(cfg.class_names(), vec!["wave", "arms-up", "kick"]);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let cfg = SyntheticConfig { per_class: 2, ..SyntheticConfig::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SyntheticConfig { seed: 1, ..cfg };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn limb_lengths_preserved_without_noise() {
        let cfg = SyntheticConfig { classes: 6, per_class: 1, noise: 0.0, ..SyntheticConfig::default() };
        for s in generate(&cfg).unwrap() {
            for f in &s.frames {
                let d = |a: usize, b: usize| {
                    let (p, q) = (f.joints[a].xyz(), f.joints[b].xyz());
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
                };
                let first = d(R_SHOULDER + 2, R_SHOULDER + 1) / FOREARM;
                // every sequence scales the body uniformly
                assert!((0.85..1.15).contains(&first), "{}: {first}", s.source_path);
                assert!((d(L_SHOULDER, L_SHOULDER + 1) / UPPER_ARM - first).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SyntheticConfig { classes: 7, ..SyntheticConfig::default() }.validate().is_err());
        assert!(SyntheticConfig { first_action: 4, ..SyntheticConfig::default() }.validate().is_err());
        assert!(SyntheticConfig { min_frames: 1, ..SyntheticConfig::default() }.validate().is_err());
    }
}
