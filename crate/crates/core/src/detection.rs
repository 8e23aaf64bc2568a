//! Density-based noisy-label detection.
//!
//! LOF scores are computed per class on current feature vectors, summed
//! across detection iterations, and normalized to a probability per sample
//! by standardizing the cumulative sums within the class population and
//! mapping through a clamped erf. Samples whose probability exceeds the
//! threshold are flagged noisy and assigned a confidence weight
//! `gamma = 1 - pclof`; clean samples keep `gamma = 1`.

use std::io::Write;
use std::path::Path;

use statrs::function::erf::erf;

use crate::neighbors::{euclidean, NeighborIndex};
use crate::{Error, Result};

/// Floor applied to reachability-distance sums so duplicate points cannot
/// produce a division by zero.
pub const REACH_SUM_EPSILON: f64 = 1e-12;

/// Default decision threshold: noisy iff pclof > 0.5 (strict).
pub const DEFAULT_THRESHOLD: f64 = 0.5;

const GAMMA_FLOOR: f64 = 1e-12;

/// max{ k-dist(j), d(i, j) }
pub fn reach_dist(idx: &NeighborIndex, i: usize, j: usize) -> Result<f64> {
    if i >= idx.len() || j >= idx.len() {
        return Err(Error::IndexOutOfRange {
            index: i.max(j),
            len: idx.len(),
        });
    }
    let d = euclidean(idx.point(i), idx.point(j));
    Ok(idx.k_distance(j)?.max(d))
}

/// Local reachability density: |N_k(i)| over the summed reachability
/// distances to the neighborhood, with the epsilon floor.
pub fn lrd(idx: &NeighborIndex, i: usize) -> Result<f64> {
    let nbrs = idx.neighbors(i)?;
    let mut sum = 0.0;
    for nb in nbrs {
        sum += reach_dist(idx, i, nb.index)?;
    }
    // floor the mean reach-dist at epsilon so duplicates yield lrd = 1/eps
    let n = nbrs.len() as f64;
    Ok(n / sum.max(n * REACH_SUM_EPSILON))
}

/// LOF(i) = mean over neighbors j of lrd(j) / lrd(i).
pub fn lof_scores(points: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    let idx = NeighborIndex::build(points.to_vec(), k)?;
    let lrds: Vec<f64> = (0..idx.len()).map(|i| lrd(&idx, i)).collect::<Result<_>>()?;
    let mut scores = Vec::with_capacity(idx.len());
    for i in 0..idx.len() {
        let nbrs = idx.neighbors(i)?;
        let sum: f64 = nbrs.iter().map(|nb| lrds[nb.index] / lrds[i]).sum();
        scores.push(sum / nbrs.len() as f64);
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Clean,
    Noisy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub id: usize,
    pub class: usize,
    /// Cumulative LOF sum across detection iterations.
    pub cumulative_lof: f64,
    pub pclof: f64,
    pub status: Status,
    pub gamma: f64,
}

/// Per-sample detection state for one training set.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionState {
    records: Vec<DetectionRecord>,
    iterations: usize,
}

impl DetectionState {
    /// Fresh state: everything clean, gamma 1, no accumulated scores.
    pub fn new(ids_and_classes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let records = ids_and_classes
            .into_iter()
            .map(|(id, class)| DetectionRecord {
                id,
                class,
                cumulative_lof: 0.0,
                pclof: 0.0,
                status: Status::Clean,
                gamma: 1.0,
            })
            .collect();
        Self {
            records,
            iterations: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn records(&self) -> &[DetectionRecord] {
        &self.records
    }

    pub fn statuses(&self) -> Vec<Status> {
        self.records.iter().map(|r| r.status).collect()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gamma).collect()
    }

    /// Replace each record's weight (ablation hook; e.g. force gamma to 1
    /// or to 0 on detected-noisy samples).
    pub fn override_gammas(&mut self, f: impl Fn(Status, f64) -> f64) {
        for r in &mut self.records {
            r.gamma = f(r.status, r.gamma);
        }
    }

    /// Drop records (case: detected noisy samples removed from training).
    pub fn retain(&mut self, mut keep: impl FnMut(&DetectionRecord) -> bool) {
        self.records.retain(|r| keep(r));
    }

    /// Add one iteration's LOF scores, aligned with `records`.
    pub fn accumulate(&mut self, lof: &[f64]) -> Result<()> {
        if lof.len() != self.records.len() {
            return Err(Error::DimensionMismatch(format!(
                "lof len {} != state len {}",
                lof.len(),
                self.records.len()
            )));
        }
        for (r, &s) in self.records.iter_mut().zip(lof) {
            r.cumulative_lof += s;
        }
        self.iterations += 1;
        Ok(())
    }

    /// Normalize cumulative sums to probabilities, per class: standardize
    /// within the class population (sample std) and map through erf,
    /// clamped at zero. A class with no spread yields all zeros.
    pub fn pclof(&self) -> Result<Vec<f64>> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument(
                "pclof requires at least one accumulated iteration".into(),
            ));
        }
        let mut out = vec![0.0; self.records.len()];
        for class_indices in self.indices_by_class() {
            let n = class_indices.len() as f64;
            let mean = class_indices
                .iter()
                .map(|&i| self.records[i].cumulative_lof)
                .sum::<f64>()
                / n;
            let std = if class_indices.len() < 2 {
                0.0
            } else {
                (class_indices
                    .iter()
                    .map(|&i| (self.records[i].cumulative_lof - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0))
                    .sqrt()
            };
            if std == 0.0 {
                continue;
            }
            for &i in &class_indices {
                let z = (self.records[i].cumulative_lof - mean) / (std * std::f64::consts::SQRT_2);
                out[i] = erf(z).max(0.0);
            }
        }
        Ok(out)
    }

    /// Recompute pclof, status, and gamma from the current cumulative sums
    /// without accumulating. Idempotent.
    pub fn refresh(&mut self, threshold: f64) -> Result<()> {
        let probs = self.pclof()?;
        for (r, p) in self.records.iter_mut().zip(probs) {
            r.pclof = p;
            if p > threshold {
                r.status = Status::Noisy;
                r.gamma = (1.0 - p).max(GAMMA_FLOOR);
            } else {
                r.status = Status::Clean;
                r.gamma = 1.0;
            }
        }
        Ok(())
    }

    /// One detection iteration: per class, build a neighbor index with
    /// k = floor(class_size / 2), compute LOF, accumulate, and refresh
    /// probabilities, statuses, and weights.
    ///
    /// `features` is aligned with `records`.
    pub fn detect(&mut self, features: &[Vec<f64>], threshold: f64) -> Result<()> {
        if features.len() != self.records.len() {
            return Err(Error::DimensionMismatch(format!(
                "features len {} != state len {}",
                features.len(),
                self.records.len()
            )));
        }
        let mut lof = vec![0.0; self.records.len()];
        for class_indices in self.indices_by_class() {
            let n = class_indices.len();
            if n < 3 {
                return Err(Error::ClassTooSmall {
                    class: self.records[class_indices[0]].class,
                    have: n,
                    need: 3,
                });
            }
            let k = (n / 2).min(n - 1);
            let class_points: Vec<Vec<f64>> =
                class_indices.iter().map(|&i| features[i].clone()).collect();
            let scores = lof_scores(&class_points, k)?;
            for (&i, s) in class_indices.iter().zip(scores) {
                lof[i] = s;
            }
        }
        self.accumulate(&lof)?;
        self.refresh(threshold)
    }

    fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let num_classes = self.records.iter().map(|r| r.class + 1).max().unwrap_or(0);
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, r) in self.records.iter().enumerate() {
            by_class[r.class].push(i);
        }
        by_class.retain(|c| !c.is_empty());
        by_class
    }

    /// Snapshot as CSV: `id,class,S,M,pclof,status,gamma`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "id,class,S,M,pclof,status,gamma")?;
        for r in &self.records {
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                r.id,
                r.class,
                r.cumulative_lof,
                self.iterations,
                r.pclof,
                match r.status {
                    Status::Clean => "clean",
                    Status::Noisy => "noisy",
                },
                r.gamma
            )?;
        }
        f.flush()?;
        Ok(())
    }
}
