//! Classification metrics, Gaussian-noise robustness sweeps and attention
//! export. Abnormal is the positive class throughout.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::AttentionMap;
use crate::pose::{Label, PoseSequence};
use crate::rng::RngStream;
use crate::spectral::{extract_features, BinSchedule};
use crate::train::{loocv, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fn_: usize, tn: usize, fp: usize) -> Self {
        ConfusionMatrix { tp, fn_, tn, fp }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Abnormal, Label::Abnormal) => self.tp += 1,
            (Label::Abnormal, Label::Normal) => self.fn_ += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Normal, Label::Abnormal) => self.fp += 1,
        }
    }
}

/// All values are percentages; a metric whose denominator is zero is
/// reported as 0 and named in `zero_denominator`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub ac: f64,
    pub se: f64,
    pub sp: f64,
    pub f1: f64,
    pub mcc: f64,
    pub zero_denominator: Vec<&'static str>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.total() == 0 {
        return Err(Error::Param("empty confusion matrix".into()));
    }
    let (tp, fn_, tn, fp) = (cm.tp as f64, cm.fn_ as f64, cm.tn as f64, cm.fp as f64);
    let mut flags = Vec::new();
    let mut ratio = |num: f64, den: f64, name: &'static str| {
        if den == 0.0 {
            flags.push(name);
            0.0
        } else {
            100.0 * num / den
        }
    };
    let ac = ratio(tp + tn, tp + tn + fp + fn_, "ac");
    let se = ratio(tp, tp + fn_, "se");
    let sp = ratio(tn, tn + fp, "sp");
    let f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn_, "f1");
    let mcc_den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if mcc_den == 0.0 {
        flags.push("mcc");
        0.0
    } else {
        100.0 * (tp * tn - fp * fn_) / mcc_den.sqrt()
    };
    Ok(MetricsReport {
        ac,
        se,
        sp,
        f1,
        mcc,
        zero_denominator: flags,
    })
}

/// Gaussian perturbation levels expressed as fractions of each joint
/// coordinate's standard deviation, plus the training seeds to sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            levels: vec![0.15, 0.30, 0.60, 1.20],
            seeds: (0..10).collect(),
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.seeds.is_empty() {
            return Err(Error::Param("noise spec needs at least one level and one seed".into()));
        }
        for pair in self.levels.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Param("noise levels must be strictly ascending".into()));
            }
        }
        if self.levels[0] <= 0.0 {
            return Err(Error::Param("noise levels must be positive".into()));
        }
        Ok(())
    }
}

/// Per-joint, per-coordinate Gaussian noise with sigma = level times that
/// coordinate's std over the sequence. Joints flagged missing-everywhere are
/// left untouched.
pub fn add_noise(seq: &PoseSequence, level: f64, rng: &mut RngStream) -> PoseSequence {
    if level == 0.0 || seq.frames.is_empty() {
        return seq.clone();
    }
    let joints = seq.frames[0].keypoints.len();
    let n = seq.frames.len() as f64;
    let mut sigma = vec![(0.0, 0.0); joints];
    for (j, s) in sigma.iter_mut().enumerate() {
        if seq.missing_joints.contains(&j) {
            continue;
        }
        let (mut mx, mut my) = (0.0, 0.0);
        for f in &seq.frames {
            mx += f.keypoints[j].x;
            my += f.keypoints[j].y;
        }
        mx /= n;
        my /= n;
        let (mut vx, mut vy) = (0.0, 0.0);
        for f in &seq.frames {
            vx += (f.keypoints[j].x - mx).powi(2);
            vy += (f.keypoints[j].y - my).powi(2);
        }
        *s = ((vx / n).sqrt() * level, (vy / n).sqrt() * level);
    }
    let mut out = seq.clone();
    for f in &mut out.frames {
        for (j, kp) in f.keypoints.iter_mut().enumerate() {
            if seq.missing_joints.contains(&j) {
                continue;
            }
            kp.x += rng.normal(0.0, 1.0) * sigma[j].0;
            kp.y += rng.normal(0.0, 1.0) * sigma[j].1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub level: f64,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    /// First row is the zero-noise control; the rest follow `levels` order.
    pub rows: Vec<RobustnessRow>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between order statistics (the common "type 7")
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn summarize(level: f64, accuracies: Vec<f64>) -> RobustnessRow {
    let mut sorted = accuracies.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    RobustnessRow {
        level,
        mean: accuracies.iter().sum::<f64>() / accuracies.len() as f64,
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
        accuracies,
    }
}

/// For every noise level and seed: perturb the poses, re-extract features,
/// run a full LOOCV and record its accuracy. A zero-noise control row is
/// always included.
pub fn robustness_sweep(
    sequences: &[PoseSequence],
    schedule: &BinSchedule,
    noise: &NoiseSpec,
    config: &TrainConfig,
) -> Result<RobustnessReport> {
    noise.validate()?;
    let run_cell = |level_idx: usize, level: f64, seed: u64| -> Result<f64> {
        let mut noisy = Vec::with_capacity(sequences.len());
        if level == 0.0 {
            noisy.extend(sequences.iter().cloned());
        } else {
            let mut rng = RngStream::new(RngStream::derive(seed, 1000 + level_idx as u64));
            for seq in sequences {
                noisy.push(add_noise(seq, level, &mut rng));
            }
        }
        let features = noisy
            .iter()
            .map(|s| extract_features(s, schedule))
            .collect::<Result<Vec<_>>>()?;
        let mut cfg = config.clone();
        cfg.seed = seed;
        let report = loocv(&features, &cfg)?;
        Ok(report.metrics.ac)
    };
    let mut rows = Vec::new();
    let control: Vec<f64> = noise
        .seeds
        .iter()
        .map(|&s| run_cell(0, 0.0, s))
        .collect::<Result<_>>()?;
    rows.push(summarize(0.0, control));
    for (li, &level) in noise.levels.iter().enumerate() {
        let accs: Vec<f64> = noise
            .seeds
            .iter()
            .map(|&s| run_cell(li + 1, level, s))
            .collect::<Result<_>>()?;
        rows.push(summarize(level, accs));
    }
    Ok(RobustnessReport { rows })
}

impl RobustnessReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "report v1");
        let _ = writeln!(out, "kind robustness");
        let _ = writeln!(out, "level\tmean_ac\tq1_ac\tq3_ac\taccuracies");
        for row in &self.rows {
            let accs: Vec<String> = row.accuracies.iter().map(|a| format!("{a:.4}")).collect();
            let _ = writeln!(
                out,
                "{:.2}\t{:.4}\t{:.4}\t{:.4}\t{}",
                row.level,
                row.mean,
                row.q1,
                row.q3,
                accs.join(" ")
            );
        }
        out
    }
}

/// Attention export in the tabular text format of [`AttentionMap::to_text`].
pub fn export_attention(map: &AttentionMap, subject_id: &str) -> String {
    map.to_text(subject_id)
}
