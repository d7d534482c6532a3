//! Deterministic synthetic movement-dataset generator. The normal class
//! carries sinusoidal 1-4 Hz limb oscillations on wrists, knees and ankles;
//! the abnormal class lacks them.

use crate::error::{Error, Result};
use crate::graph::NUM_JOINTS;
use crate::pose::{joints, Keypoint, Label, PoseFrame, PoseSequence};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileComponent {
    pub freq_hz: f64,
    pub amplitude_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_normal: usize,
    pub n_abnormal: usize,
    pub fps: f64,
    pub duration_s: f64,
    pub normal_profile: Vec<ProfileComponent>,
    pub abnormal_profile: Vec<ProfileComponent>,
    pub jitter_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// 12 subjects with an 8/4 class split at 25 fps.
    pub fn mini_like(seed: u64) -> Self {
        SynthSpec {
            n_normal: 8,
            n_abnormal: 4,
            fps: 25.0,
            duration_s: 8.0,
            normal_profile: vec![
                ProfileComponent { freq_hz: 1.5, amplitude_px: 12.0 },
                ProfileComponent { freq_hz: 2.4, amplitude_px: 8.0 },
                ProfileComponent { freq_hz: 3.6, amplitude_px: 5.0 },
            ],
            abnormal_profile: vec![],
            jitter_std: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_normal == 0 || self.n_abnormal == 0 {
            return Err(Error::Param("both class counts must be >= 1".into()));
        }
        if self.duration_s * self.fps < 2.0 {
            return Err(Error::Param("duration x fps must cover at least 2 frames".into()));
        }
        if self.jitter_std < 0.0 {
            return Err(Error::Param("jitter_std must be non-negative".into()));
        }
        for c in self.normal_profile.iter().chain(&self.abnormal_profile) {
            if c.freq_hz >= self.fps / 2.0 {
                return Err(Error::Param(format!(
                    "profile frequency {} Hz at or above Nyquist ({} fps)",
                    c.freq_hz, self.fps
                )));
            }
            if c.freq_hz <= 0.0 || c.amplitude_px < 0.0 {
                return Err(Error::Param("profile components need positive frequency".into()));
            }
        }
        Ok(())
    }
}

/// Joints the class profiles oscillate: wrists, knees and ankles.
pub const FIDGETY_JOINTS: [usize; 6] = [
    joints::RIGHT_WRIST,
    joints::LEFT_WRIST,
    joints::RIGHT_KNEE,
    joints::LEFT_KNEE,
    joints::RIGHT_ANKLE,
    joints::LEFT_ANKLE,
];

/// Canonical static 18-joint skeleton in pixel coordinates, upright and
/// well away from the (0,0) missing-keypoint sentinel.
pub fn base_skeleton() -> [(f64, f64); NUM_JOINTS] {
    [
        (320.0, 80.0),  // nose
        (320.0, 130.0), // neck
        (280.0, 130.0), // right shoulder
        (255.0, 185.0), // right elbow
        (240.0, 240.0), // right wrist
        (360.0, 130.0), // left shoulder
        (385.0, 185.0), // left elbow
        (400.0, 240.0), // left wrist
        (295.0, 250.0), // right hip
        (288.0, 320.0), // right knee
        (283.0, 390.0), // right ankle
        (345.0, 250.0), // left hip
        (352.0, 320.0), // left knee
        (357.0, 390.0), // left ankle
        (308.0, 70.0),  // right eye
        (332.0, 70.0),  // left eye
        (296.0, 82.0),  // right ear
        (344.0, 82.0),  // left ear
    ]
}

struct Oscillator {
    joint: usize,
    freq_hz: f64,
    amp_x: f64,
    amp_y: f64,
    phase_x: f64,
    phase_y: f64,
}

/// One labeled sequence: base skeleton + per-class limb oscillations with
/// per-subject +/-20% amplitude and random phase, + a small whole-body sway
/// common to both classes, + Gaussian jitter.
fn generate_subject(
    spec: &SynthSpec,
    profile: &[ProfileComponent],
    label: Label,
    subject_id: String,
    rng: &mut RngStream,
) -> Result<PoseSequence> {
    let frames = (spec.duration_s * spec.fps).round() as usize;
    let base = base_skeleton();
    let tau = std::f64::consts::TAU;
    let mut oscillators = Vec::new();
    for &joint in &FIDGETY_JOINTS {
        for c in profile {
            let vary = |rng: &mut RngStream| 1.0 + rng.uniform(-0.2, 0.2);
            oscillators.push(Oscillator {
                joint,
                freq_hz: c.freq_hz,
                amp_x: c.amplitude_px * vary(rng),
                amp_y: c.amplitude_px * vary(rng),
                phase_x: rng.uniform(0.0, tau),
                phase_y: rng.uniform(0.0, tau),
            });
        }
    }
    // slow whole-body sway shared by both classes, so no joint is static
    let sway_phase = rng.uniform(0.0, tau);
    let sway_hz = 0.4;
    let sway_amp = 1.5;
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = f as f64 / spec.fps;
        let sway = sway_amp * (tau * sway_hz * t + sway_phase).sin();
        let mut kps: Vec<Keypoint> = base
            .iter()
            .map(|&(x, y)| Keypoint {
                x: x + sway,
                y: y + 0.5 * sway,
                confidence: 1.0,
            })
            .collect();
        for o in &oscillators {
            kps[o.joint].x += o.amp_x * (tau * o.freq_hz * t + o.phase_x).sin();
            kps[o.joint].y += o.amp_y * (tau * o.freq_hz * t + o.phase_y).sin();
        }
        if spec.jitter_std > 0.0 {
            for kp in &mut kps {
                kp.x += rng.normal(0.0, spec.jitter_std);
                kp.y += rng.normal(0.0, spec.jitter_std);
            }
        }
        out.push(PoseFrame { keypoints: kps });
    }
    PoseSequence::new(out, spec.fps, subject_id, Some(label))
}

/// Deterministic per spec + seed; subjects get independent derived streams.
pub fn generate(spec: &SynthSpec) -> Result<Vec<PoseSequence>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.n_normal + spec.n_abnormal);
    for i in 0..spec.n_normal {
        let mut rng = RngStream::new(RngStream::derive(spec.seed, i as u64));
        out.push(generate_subject(
            spec,
            &spec.normal_profile,
            Label::Normal,
            format!("syn_n{i:02}"),
            &mut rng,
        )?);
    }
    for i in 0..spec.n_abnormal {
        let mut rng = RngStream::new(RngStream::derive(spec.seed, (spec.n_normal + i) as u64));
        out.push(generate_subject(
            spec,
            &spec.abnormal_profile,
            Label::Abnormal,
            format!("syn_a{i:02}"),
            &mut rng,
        )?);
    }
    Ok(out)
}
