//! Training loop, dataset presets and the leave-one-out cross-validation
//! harness.

use std::fmt::Write as _;

use crate::autodiff::{adam_step, lr_at, AdamState, Tape};
use crate::error::{Error, Result};
use crate::eval::{metrics, ConfusionMatrix, MetricsReport};
use crate::graph::{normalize_adjacency, partition, NormalizedAdjacency, PoseFrequencyGraph, NUM_JOINTS};
use crate::model::{
    forward_on_tape, init_params, update_running_stats, AttentionMap, FaigcnConfig, FaigcnParams,
};
use crate::pose::Label;
use crate::rng::RngStream;
use crate::spectral::SpectralFeatures;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub workers: usize,
    pub model: FaigcnConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::mini_rgbd_like()
    }
}

impl TrainConfig {
    /// Small-cohort preset: batch size 1, learning rate 1e-4.
    pub fn mini_rgbd_like() -> Self {
        TrainConfig {
            batch_size: 1,
            base_lr: 1e-4,
            max_epochs: 500,
            seed: 0,
            workers: 1,
            model: FaigcnConfig::default(),
        }
    }

    /// Larger-cohort preset: batch size 4, learning rate 1e-3.
    pub fn rvi38_like() -> Self {
        TrainConfig {
            batch_size: 4,
            base_lr: 1e-3,
            ..TrainConfig::mini_rgbd_like()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mini_rgbd_like" | "mini-like" => Ok(TrainConfig::mini_rgbd_like()),
            "rvi38_like" | "rvi-like" => Ok(TrainConfig::rvi38_like()),
            other => Err(Error::Param(format!("unknown preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Param("batch_size and max_epochs must be >= 1".into()));
        }
        if self.base_lr <= 0.0 {
            return Err(Error::Param(format!("base_lr {} must be positive", self.base_lr)));
        }
        self.model.validate()
    }
}

/// Build the normalized pose-frequency adjacency a model over `bins`
/// frequency bins propagates through.
pub fn build_adjacency(bins: usize, config: &FaigcnConfig) -> Result<NormalizedAdjacency> {
    let graph = PoseFrequencyGraph::build(bins)?;
    let labels = partition(&graph, config.partition_strategy);
    normalize_adjacency(&graph, &labels)
}

fn check_dataset(dataset: &[&SpectralFeatures]) -> Result<(usize, Vec<usize>)> {
    if dataset.len() < 2 {
        return Err(Error::Protocol(format!(
            "need at least 2 training samples, got {}",
            dataset.len()
        )));
    }
    let bins = dataset[0].bins;
    let mut labels = Vec::with_capacity(dataset.len());
    for f in dataset {
        if f.bins != bins {
            return Err(Error::dimension(
                "train",
                format!("{bins} bins"),
                format!("{} bins for subject {}", f.bins, f.subject_id),
            ));
        }
        let label = f
            .label
            .ok_or_else(|| Error::Protocol(format!("subject {} has no label", f.subject_id)))?;
        labels.push(label.class_index());
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::Protocol("training set contains a single class".into()));
    }
    Ok((bins, labels))
}

/// Mini-batch Adam on softmax cross-entropy with the step-decay schedule;
/// returns final parameters and the per-epoch mean loss curve.
pub fn train(
    train_set: &[&SpectralFeatures],
    adj: &NormalizedAdjacency,
    config: &TrainConfig,
    seed: u64,
) -> Result<(FaigcnParams, Vec<f64>)> {
    config.validate()?;
    let (bins, labels) = check_dataset(train_set)?;
    let mut init_rng = RngStream::new(RngStream::derive(seed, 0));
    let mut epoch_rng = RngStream::new(RngStream::derive(seed, 1));
    let mut params = init_params(&config.model, bins, &mut init_rng)?;
    let mut adam: Vec<AdamState> = params
        .trainable_mut()
        .iter()
        .map(|t| AdamState::new(t.len()))
        .collect();
    let nodes = bins * NUM_JOINTS;
    let channels = config.model.input_channels;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(config.max_epochs);
    for epoch in 0..config.max_epochs {
        epoch_rng.shuffle(&mut order);
        let lr = lr_at(epoch, config.base_lr);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut input = Vec::with_capacity(chunk.len() * nodes * channels);
            let mut batch_labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                input.extend_from_slice(&train_set[i].values);
                batch_labels.push(labels[i]);
            }
            let mut tape = Tape::new(true);
            let pass = forward_on_tape(&mut tape, &params, adj, input, chunk.len(), &mut epoch_rng)?;
            let loss = tape.cross_entropy(pass.logits, &batch_labels)?;
            tape.backward(loss)?;
            let loss_value = tape.values(loss)[0];
            if !loss_value.is_finite() {
                return Err(Error::Protocol(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            epoch_loss += loss_value * chunk.len() as f64;
            let grads: Vec<Vec<f64>> = pass
                .param_vars
                .iter()
                .map(|&v| tape.grad(v).to_vec())
                .collect();
            for ((tensor, grad), state) in params
                .trainable_mut()
                .into_iter()
                .zip(&grads)
                .zip(adam.iter_mut())
            {
                adam_step(tensor, grad, state, lr)?;
            }
            update_running_stats(&mut params, &pass.bn_stats);
        }
        curve.push(epoch_loss / train_set.len() as f64);
    }
    Ok((params, curve))
}

fn softmax_abnormal(logits: &[f64]) -> f64 {
    let max = logits[0].max(logits[1]);
    let e0 = (logits[0] - max).exp();
    let e1 = (logits[1] - max).exp();
    e1 / (e0 + e1)
}

/// Evaluation-mode forward; abnormal is the positive class.
pub fn predict(
    params: &FaigcnParams,
    adj: &NormalizedAdjacency,
    features: &SpectralFeatures,
) -> Result<(Label, f64, AttentionMap)> {
    if features.bins != params.bins {
        return Err(Error::dimension(
            "predict",
            format!("model {} bins", params.bins),
            format!("features {} bins", features.bins),
        ));
    }
    let mut tape = Tape::new(false);
    let mut rng = RngStream::new(0);
    let pass = forward_on_tape(&mut tape, params, adj, features.values.clone(), 1, &mut rng)?;
    let logits = tape.values(pass.logits);
    let p = softmax_abnormal(logits);
    let label = if p > 0.5 { Label::Abnormal } else { Label::Normal };
    let alpha = tape.values(pass.alpha).to_vec();
    Ok((label, p, AttentionMap::from_alpha(pass.post_bins, alpha)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub held_out_id: String,
    pub predicted: Label,
    pub truth: Label,
    pub probability: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoocvReport {
    pub folds: Vec<FoldResult>,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub seed: u64,
}

fn run_fold(
    dataset: &[&SpectralFeatures],
    adj: &NormalizedAdjacency,
    config: &TrainConfig,
    fold: usize,
) -> Result<FoldResult> {
    let held_out = dataset[fold];
    let train_set: Vec<&SpectralFeatures> = dataset
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != fold)
        .map(|(_, f)| *f)
        .collect();
    debug_assert!(train_set.iter().all(|f| f.subject_id != held_out.subject_id));
    let fold_seed = RngStream::derive(config.seed, fold as u64 + 1);
    let (params, curve) = train(&train_set, adj, config, fold_seed)?;
    let (predicted, probability, _) = predict(&params, adj, held_out)?;
    Ok(FoldResult {
        held_out_id: held_out.subject_id.clone(),
        predicted,
        truth: held_out.label.unwrap(),
        probability,
        final_loss: *curve.last().unwrap(),
    })
}

/// Leave-one-out cross-validation with fold-specific derived seeds. Folds
/// are independent and may run on up to `config.workers` threads; the
/// aggregate is order-independent.
pub fn loocv(dataset: &[SpectralFeatures], config: &TrainConfig) -> Result<LoocvReport> {
    config.validate()?;
    if dataset.len() < 3 {
        return Err(Error::Protocol(format!(
            "leave-one-out needs at least 3 samples, got {}",
            dataset.len()
        )));
    }
    let refs: Vec<&SpectralFeatures> = dataset.iter().collect();
    check_dataset(&refs)?;
    for (i, a) in refs.iter().enumerate() {
        for b in &refs[i + 1..] {
            if a.subject_id == b.subject_id {
                return Err(Error::Protocol(format!("duplicate subject id '{}'", a.subject_id)));
            }
        }
    }
    let adj = build_adjacency(dataset[0].bins, &config.model)?;
    let workers = config.workers.max(1).min(dataset.len());
    let folds: Vec<FoldResult> = if workers == 1 {
        (0..dataset.len())
            .map(|f| run_fold(&refs, &adj, config, f))
            .collect::<Result<_>>()?
    } else {
        let mut indexed: Vec<(usize, FoldResult)> = std::thread::scope(|scope| {
            let refs = &refs;
            let adj = &adj;
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    scope.spawn(move || -> Result<Vec<(usize, FoldResult)>> {
                        (w..refs.len())
                            .step_by(workers)
                            .map(|f| run_fold(refs, adj, config, f).map(|r| (f, r)))
                            .collect()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(refs.len());
            let mut first_err = None;
            for h in handles {
                match h.join().expect("fold worker panicked") {
                    Ok(mut part) => all.append(&mut part),
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            match first_err {
                Some(e) => Err(e),
                None => Ok(all),
            }
        })?;
        indexed.sort_by_key(|&(f, _)| f);
        indexed.into_iter().map(|(_, r)| r).collect()
    };
    let mut confusion = ConfusionMatrix::default();
    for f in &folds {
        confusion.add(f.truth, f.predicted);
    }
    let metrics = metrics(&confusion)?;
    Ok(LoocvReport {
        folds,
        confusion,
        metrics,
        seed: config.seed,
    })
}

impl LoocvReport {
    /// Stable text form: one fold per row, then confusion and metric
    /// summaries, in a fixed field order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "report v1");
        let _ = writeln!(out, "kind loocv");
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "folds {}", self.folds.len());
        let _ = writeln!(out, "subject\ttrue\tpredicted\tp_abnormal\tfinal_loss");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}",
                f.held_out_id,
                Label::to_field(Some(f.truth)),
                Label::to_field(Some(f.predicted)),
                f.probability,
                f.final_loss
            );
        }
        let c = &self.confusion;
        let _ = writeln!(out, "confusion tp={} fn={} tn={} fp={}", c.tp, c.fn_, c.tn, c.fp);
        let m = &self.metrics;
        let _ = writeln!(
            out,
            "metrics ac={:.4} se={:.4} sp={:.4} f1={:.4} mcc={:.4}",
            m.ac, m.se, m.sp, m.f1, m.mcc
        );
        let _ = writeln!(out, "zero_denominator {}", if m.zero_denominator.is_empty() {
            "-".to_string()
        } else {
            m.zero_denominator.join(",")
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BinSchedule;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            base_lr: 0.02,
            max_epochs: 60,
            seed: 0,
            workers: 1,
            model: FaigcnConfig {
                channels: vec![3, 4],
                attn_hidden: 3,
                dropout: 0.0,
                ..FaigcnConfig::default()
            },
        }
    }

    fn toy_feature(bins: usize, base: f64, jitter_seed: u64, id: &str, label: Label) -> SpectralFeatures {
        let mut rng = RngStream::new(jitter_seed);
        let values = (0..bins * NUM_JOINTS * 2)
            .map(|_| base + rng.uniform(-0.1, 0.1))
            .collect();
        SpectralFeatures {
            values,
            bins,
            schedule: BinSchedule::unit(25.0, 1000, 6.0).unwrap(),
            subject_id: id.into(),
            label: Some(label),
        }
    }

    fn separable_dataset(bins: usize, n_normal: usize, n_abnormal: usize) -> Vec<SpectralFeatures> {
        let mut out = Vec::new();
        for i in 0..n_normal {
            out.push(toy_feature(bins, 0.3, i as u64, &format!("n{i}"), Label::Normal));
        }
        for i in 0..n_abnormal {
            out.push(toy_feature(bins, 3.0, 100 + i as u64, &format!("a{i}"), Label::Abnormal));
        }
        out
    }

    #[test]
    fn overfits_a_tiny_separable_set() {
        let cfg = TrainConfig {
            max_epochs: 200,
            ..tiny_config()
        };
        let data = separable_dataset(3, 1, 1);
        let refs: Vec<&SpectralFeatures> = data.iter().collect();
        let adj = build_adjacency(3, &cfg.model).unwrap();
        let (_, curve) = train(&refs, &adj, &cfg, 1).unwrap();
        assert!(curve.iter().all(|l| l.is_finite()));
        assert!(*curve.last().unwrap() < 1e-2, "final loss {}", curve.last().unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            max_epochs: 20,
            ..tiny_config()
        };
        let data = separable_dataset(3, 2, 2);
        let refs: Vec<&SpectralFeatures> = data.iter().collect();
        let adj = build_adjacency(3, &cfg.model).unwrap();
        let (pa, ca) = train(&refs, &adj, &cfg, 5).unwrap();
        let (pb, cb) = train(&refs, &adj, &cfg, 5).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(pa, pb);
        let (_, cc) = train(&refs, &adj, &cfg, 6).unwrap();
        assert_ne!(ca, cc);
    }

    #[test]
    fn single_class_rejected() {
        let cfg = tiny_config();
        let data: Vec<SpectralFeatures> = (0..3)
            .map(|i| toy_feature(3, 1.0, i, &format!("s{i}"), Label::Normal))
            .collect();
        let refs: Vec<&SpectralFeatures> = data.iter().collect();
        let adj = build_adjacency(3, &cfg.model).unwrap();
        match train(&refs, &adj, &cfg, 0) {
            Err(Error::Protocol(_)) => {}
            other => panic!("expected protocol error, got {other:?}"),
        }
    }

    #[test]
    fn abnormal_probability_from_logits() {
        // logits (2, -1): p(abnormal) = 1/(1+e^3)
        let p = softmax_abnormal(&[2.0, -1.0]);
        assert!((p - 1.0 / (1.0 + 3.0f64.exp())).abs() < 1e-12);
        assert!((softmax_abnormal(&[0.4, 0.4]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn loocv_separable_set_is_perfect() {
        let cfg = tiny_config();
        let data = separable_dataset(3, 4, 3);
        let report = loocv(&data, &cfg).unwrap();
        assert_eq!(report.folds.len(), 7);
        assert!((report.metrics.ac - 100.0).abs() < 1e-9, "ac {}", report.metrics.ac);
        // every sample held out exactly once
        let mut ids: Vec<&str> = report.folds.iter().map(|f| f.held_out_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 7);
    }

    #[test]
    fn loocv_reruns_and_worker_counts_agree() {
        let cfg = TrainConfig {
            max_epochs: 15,
            ..tiny_config()
        };
        let data = separable_dataset(3, 3, 2);
        let a = loocv(&data, &cfg).unwrap();
        let b = loocv(&data, &cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let par = TrainConfig { workers: 3, ..cfg };
        let c = loocv(&data, &par).unwrap();
        assert_eq!(a.to_text(), c.to_text());
    }

    #[test]
    fn loocv_rejects_small_or_duplicate_sets() {
        let cfg = tiny_config();
        let data = separable_dataset(3, 1, 1);
        assert!(loocv(&data, &cfg).is_err());
        let mut data = separable_dataset(3, 2, 2);
        data[1].subject_id = data[0].subject_id.clone();
        match loocv(&data, &cfg) {
            Err(Error::Protocol(msg)) => assert!(msg.contains("duplicate")),
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn presets_match_published_hyperparameters() {
        let mini = TrainConfig::mini_rgbd_like();
        assert_eq!(mini.batch_size, 1);
        assert_eq!(mini.base_lr, 1e-4);
        assert_eq!(mini.max_epochs, 500);
        let rvi = TrainConfig::rvi38_like();
        assert_eq!(rvi.batch_size, 4);
        assert_eq!(rvi.base_lr, 1e-3);
        assert!(TrainConfig::preset("mini_rgbd_like").is_ok());
        assert!(TrainConfig::preset("nope").is_err());
    }

    #[test]
    fn fold_seeds_differ() {
        let s: Vec<u64> = (0..5).map(|f| RngStream::derive(7, f + 1)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), s.len());
    }
}
