//! The closed training loop: warm-up, per-epoch minibatch optimization of
//! the combined objective, periodic per-class detection, weight and pair
//! refresh, and the ablation switches.
//!
//! Detection runs at the end of epoch `warmup_epochs` and every
//! `detect_every` epochs after that, on features of the whole training set
//! computed with the current parameters. Before the first detection every
//! sample is clean with weight 1, so pairs are label-based and the softmax
//! loss is plain cross-entropy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::detection::{DetectionState, Status};
use crate::evaluation;
use crate::losses;
use crate::model::{lr_at, sgd_step, LrSchedule, NetworkParams, OptimizerState};
use crate::pairing;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// The full model.
    None,
    /// Keep detection but weight noisy samples like clean ones.
    A1Gamma1,
    /// Keep detection but drop noisy samples from the softmax loss.
    A2Gamma0,
    /// Remove detected noisy samples from training; no contrastive loss.
    B1Remove,
    /// Relabel detected noisy samples to an extra class; no contrastive
    /// loss.
    B2NewClass,
    /// Detect only at the first scheduled iteration.
    C1DetectOnce,
    /// No detection and no reweighting; contrastive loss over label-based
    /// pairs only.
    C2NoDetection,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Ablation::None,
            "a1" => Ablation::A1Gamma1,
            "a2" => Ablation::A2Gamma0,
            "b1" => Ablation::B1Remove,
            "b2" => Ablation::B2NewClass,
            "c1" => Ablation::C1DetectOnce,
            "c2" => Ablation::C2NoDetection,
            _ => return Err(Error::InvalidArgument(format!("unknown ablation mode {s}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub detect_every: usize,
    pub eta: f64,
    pub alpha: f64,
    pub squared_hinge: bool,
    pub threshold: f64,
    pub lr_schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub pair_budget: usize,
    pub pool_size: usize,
    /// Hidden layer widths; the input and output dims come from the data.
    pub hidden_dims: Vec<usize>,
    pub seed: u64,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            warmup_epochs: 2,
            detect_every: 10,
            eta: 1.0,
            alpha: 1.0,
            squared_hinge: false,
            threshold: 0.5,
            lr_schedule: LrSchedule::default(),
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 128,
            pair_budget: 32,
            pool_size: pairing::DEFAULT_POOL_SIZE,
            hidden_dims: vec![32, 16],
            seed: 0,
            ablation: Ablation::None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs >= self.epochs {
            return Err(Error::InvalidArgument(
                "warmup_epochs must be < epochs".into(),
            ));
        }
        if self.detect_every == 0 {
            return Err(Error::InvalidArgument("detect_every must be >= 1".into()));
        }
        if self.eta <= 0.0 {
            return Err(Error::InvalidArgument("eta must be > 0".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidArgument("alpha must be > 0".into()));
        }
        if self.batch_size == 0 || self.pair_budget < 2 || self.pool_size == 0 {
            return Err(Error::InvalidArgument("bad batch/pair sizes".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidArgument("need at least one hidden layer".into()));
        }
        Ok(())
    }

    pub fn with_ablation(mut self, mode: Ablation) -> Self {
        self.ablation = mode;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub rsl: f64,
    pub cl: f64,
    pub total: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionLogRecord {
    /// Completed epochs when this detection ran.
    pub epoch: usize,
    pub iteration: usize,
    pub per_class_noisy: Vec<usize>,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub detections: Vec<DetectionLogRecord>,
}

impl TrainHistory {
    /// Line-delimited log: one JSON record per epoch and per detection,
    /// in chronological order.
    pub fn to_log_lines(&self) -> String {
        let mut out = String::new();
        let mut det = self.detections.iter().peekable();
        for e in &self.epochs {
            out.push_str(&serde_json::json!({"kind": "epoch", "record": e}).to_string());
            out.push('\n');
            while det.peek().is_some_and(|d| d.epoch == e.epoch + 1) {
                let d = det.next().unwrap();
                out.push_str(&serde_json::json!({"kind": "detection", "record": d}).to_string());
                out.push('\n');
            }
        }
        for d in det {
            out.push_str(&serde_json::json!({"kind": "detection", "record": d}).to_string());
            out.push('\n');
        }
        out
    }
}

pub struct TrainOutput {
    pub params: NetworkParams,
    pub state: DetectionState,
    pub history: TrainHistory,
}

pub fn train(config: &TrainConfig, train_ds: &Dataset, test_ds: &Dataset) -> Result<TrainOutput> {
    train_with(config, train_ds, test_ds, |_, _| {})
}

/// As [`train`], invoking `on_epoch(completed_epochs, params)` after every
/// epoch (checkpointing hook).
pub fn train_with(
    config: &TrainConfig,
    train_ds: &Dataset,
    test_ds: &Dataset,
    mut on_epoch: impl FnMut(usize, &NetworkParams),
) -> Result<TrainOutput> {
    config.validate()?;
    for (class, idx) in train_ds.indices_by_class().iter().enumerate() {
        if idx.len() < 3 {
            return Err(Error::ClassTooSmall {
                class,
                have: idx.len(),
                need: 3,
            });
        }
    }

    // Working view of the training set. Ground-truth noise flags are
    // deliberately not copied here: the optimization path cannot read
    // them. They are consulted only through evaluation::detection_metrics.
    let mut ids: Vec<usize> = train_ds.samples.iter().map(|s| s.id).collect();
    let mut inputs: Vec<Vec<f64>> = train_ds.samples.iter().map(|s| s.features.clone()).collect();
    let mut labels: Vec<usize> = train_ds.samples.iter().map(|s| s.label).collect();

    let mut dims = vec![train_ds.dim];
    dims.extend(&config.hidden_dims);
    dims.push(train_ds.num_classes);
    let mut params = NetworkParams::init(&dims, config.seed)?;
    params.normalizer = Some(crate::model::Normalizer::fit(&inputs)?);
    let mut opt = OptimizerState::new(
        &params,
        config.lr_schedule.base,
        config.momentum,
        config.weight_decay,
    );
    let mut state = DetectionState::new(ids.iter().copied().zip(labels.iter().copied()));
    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_c0de);
    let contrastive_active = !matches!(config.ablation, Ablation::B1Remove | Ablation::B2NewClass);

    for epoch in 0..config.epochs {
        opt.lr = lr_at(epoch, &config.lr_schedule);
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_rsl = 0.0;
        let mut epoch_cl = 0.0;
        let mut num_batches = 0usize;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let gammas = state.gammas();
            let statuses = state.statuses();

            // softmax path
            let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let batch_gammas: Vec<f64> = chunk.iter().map(|&i| gammas[i]).collect();
            let trace = params.forward(&batch)?;
            let (rsl, d_logits) =
                losses::reweighted_softmax(trace.logits(), &batch_labels, &batch_gammas)?;
            let mut grads = trace.backward(&params, &d_logits, None)?;

            // contrastive path over a mined pair batch from a seeded pool;
            // inactive during the initialization epochs so the softmax
            // loss organizes features before pair mining starts
            let mut cl = 0.0;
            if contrastive_active && epoch >= config.warmup_epochs {
                let pool: Vec<usize> = if config.pool_size >= ids.len() {
                    (0..ids.len()).collect()
                } else {
                    let mut p = rand::seq::index::sample(&mut rng, ids.len(), config.pool_size)
                        .into_vec();
                    p.sort_unstable();
                    p
                };
                let pool_inputs: Vec<Vec<f64>> =
                    pool.iter().map(|&i| inputs[i].clone()).collect();
                let pool_statuses: Vec<Status> = pool.iter().map(|&i| statuses[i]).collect();
                let pool_labels: Vec<usize> = pool.iter().map(|&i| labels[i]).collect();
                let pool_trace = params.forward(&pool_inputs)?;
                let mine_seed = rng.gen::<u64>();
                let pair_batch = pairing::hard_mine(
                    pool_trace.features(),
                    &pool_statuses,
                    &pool_labels,
                    config.pair_budget,
                    pool.len(),
                    mine_seed,
                )?;
                if !pair_batch.pairs.is_empty() {
                    let feats = pool_trace.features();
                    // like the softmax term, the pair term is normalized
                    // per sample (of the mining pool), not per pair
                    let norm = pool.len() as f64;
                    let mut d_features = vec![vec![0.0; params.feature_dim()]; pool.len()];
                    for p in &pair_batch.pairs {
                        let indicator = if p.similar {
                            losses::SimilarityIndicator::Similar
                        } else {
                            losses::SimilarityIndicator::Dissimilar
                        };
                        let (loss, gi, gj) = losses::contrastive(
                            &feats[p.i],
                            &feats[p.j],
                            indicator,
                            config.alpha,
                            config.squared_hinge,
                        )?;
                        cl += loss / norm;
                        let scale = config.eta / norm;
                        for (d, g) in d_features[p.i].iter_mut().zip(&gi) {
                            *d += scale * g;
                        }
                        for (d, g) in d_features[p.j].iter_mut().zip(&gj) {
                            *d += scale * g;
                        }
                    }
                    let zero_logits = vec![vec![0.0; params.output_dim()]; pool.len()];
                    let cl_grads =
                        pool_trace.backward(&params, &zero_logits, Some(&d_features))?;
                    grads.add_assign(&cl_grads);
                }
            }

            let breakdown = losses::combined(rsl, cl, config.eta)?;
            if !breakdown.total.is_finite() {
                let norm: f64 = params
                    .layers
                    .iter()
                    .flat_map(|l| l.weights.iter().flatten())
                    .map(|w| w * w)
                    .sum::<f64>()
                    .sqrt();
                return Err(Error::TrainingAborted(format!(
                    "non-finite loss at epoch {epoch} batch {batch_no} (rsl {rsl}, cl {cl}, weight norm {norm})"
                )));
            }
            epoch_rsl += rsl;
            epoch_cl += cl;
            num_batches += 1;
            sgd_step(&mut params, &mut opt, &grads)?;
        }

        let completed = epoch + 1;
        history.epochs.push(EpochRecord {
            epoch,
            lr: opt.lr,
            rsl: epoch_rsl / num_batches as f64,
            cl: epoch_cl / num_batches as f64,
            total: (epoch_rsl + config.eta * epoch_cl) / num_batches as f64,
            test_accuracy: evaluation::accuracy(&params, test_ds)?,
        });

        if detection_due(config, completed) {
            let features = params.forward(&inputs)?.features().to_vec();
            state.detect(&features, config.threshold)?;
            match config.ablation {
                Ablation::A1Gamma1 => state.override_gammas(|_, _| 1.0),
                Ablation::A2Gamma0 => state.override_gammas(|status, g| {
                    if status == Status::Noisy {
                        0.0
                    } else {
                        g
                    }
                }),
                _ => {}
            }

            let report = evaluation::detection_metrics(&state, train_ds)?;
            let mut per_class_noisy = vec![0usize; train_ds.num_classes];
            for r in state.records() {
                if r.status == Status::Noisy && r.class < per_class_noisy.len() {
                    per_class_noisy[r.class] += 1;
                }
            }
            history.detections.push(DetectionLogRecord {
                epoch: completed,
                iteration: state.iterations(),
                per_class_noisy,
                tpr: report.overall.tpr(),
            });

            match config.ablation {
                Ablation::B1Remove => {
                    let noisy: std::collections::HashSet<usize> = state
                        .records()
                        .iter()
                        .filter(|r| r.status == Status::Noisy)
                        .map(|r| r.id)
                        .collect();
                    if ids.len() - noisy.len() >= train_ds.num_classes * 3 {
                        let keep: Vec<bool> = ids.iter().map(|id| !noisy.contains(id)).collect();
                        retain_by_mask(&mut ids, &keep);
                        retain_by_mask(&mut inputs, &keep);
                        retain_by_mask(&mut labels, &keep);
                        state.retain(|r| !noisy.contains(&r.id));
                    }
                }
                Ablation::B2NewClass => {
                    // relabel detected noisy to the extra "unknown" class;
                    // detection keeps operating on the original class
                    // populations
                    let unknown = train_ds.num_classes;
                    if params.output_dim() == train_ds.num_classes {
                        params.add_output_class(config.seed.wrapping_add(1));
                        opt.grow_to(&params);
                    }
                    let noisy_ids: std::collections::HashSet<usize> = state
                        .records()
                        .iter()
                        .filter(|r| r.status == Status::Noisy)
                        .map(|r| r.id)
                        .collect();
                    for (i, id) in ids.iter().enumerate() {
                        if noisy_ids.contains(id) {
                            labels[i] = unknown;
                        } else {
                            labels[i] = train_ds.samples[class_lookup(train_ds, *id)].label;
                        }
                    }
                }
                _ => {}
            }
        }
        on_epoch(completed, &params);
    }

    Ok(TrainOutput {
        params,
        state,
        history,
    })
}

fn detection_due(config: &TrainConfig, completed_epochs: usize) -> bool {
    let scheduled = completed_epochs >= config.warmup_epochs
        && (completed_epochs - config.warmup_epochs) % config.detect_every == 0;
    match config.ablation {
        Ablation::C2NoDetection => false,
        Ablation::C1DetectOnce => completed_epochs == config.warmup_epochs,
        _ => scheduled,
    }
}

fn retain_by_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap());
}

fn class_lookup(ds: &Dataset, id: usize) -> usize {
    // ids are unique; linear scan is fine at this scale
    ds.samples.iter().position(|s| s.id == id).unwrap()
}
