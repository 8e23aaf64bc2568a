//! Test accuracy, detection quality against ground-truth noise flags, and
//! feature export for external plotting. This is the only place where
//! `truth_noisy` is read.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::dataset::Dataset;
use crate::detection::{DetectionState, Status};
use crate::model::NetworkParams;
use crate::{Error, Result};

/// Fraction of argmax-correct predictions on `test_ds`.
pub fn accuracy(params: &NetworkParams, test_ds: &Dataset) -> Result<f64> {
    if test_ds.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let batch: Vec<Vec<f64>> = test_ds.samples.iter().map(|s| s.features.clone()).collect();
    let trace = params.forward(&batch)?;
    let correct = trace
        .logits()
        .iter()
        .zip(&test_ds.samples)
        .filter(|(row, s)| {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            argmax == s.label
        })
        .count();
    Ok(correct as f64 / test_ds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct ConfusionCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    /// Detected-noisy among truth-noisy. 0/0 counts as 0.
    pub fn tpr(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.false_positive, self.false_positive + self.true_negative)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Detection quality of a state versus the generator's truth flags.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub overall: ConfusionCounts,
    /// Indexed by class.
    pub per_class: Vec<ConfusionCounts>,
}

pub fn detection_metrics(state: &DetectionState, truth: &Dataset) -> Result<DetectionReport> {
    let truth_by_id: HashMap<usize, bool> = truth
        .samples
        .iter()
        .map(|s| (s.id, s.truth_noisy))
        .collect();
    let num_classes = state
        .records()
        .iter()
        .map(|r| r.class + 1)
        .max()
        .unwrap_or(0);
    let mut overall = ConfusionCounts::default();
    let mut per_class = vec![ConfusionCounts::default(); num_classes];
    for r in state.records() {
        let truth_noisy = *truth_by_id.get(&r.id).ok_or_else(|| {
            Error::InvalidArgument(format!("no truth flag for sample id {}", r.id))
        })?;
        let detected_noisy = r.status == Status::Noisy;
        for c in [&mut overall, &mut per_class[r.class]] {
            match (detected_noisy, truth_noisy) {
                (true, true) => c.true_positive += 1,
                (true, false) => c.false_positive += 1,
                (false, false) => c.true_negative += 1,
                (false, true) => c.false_negative += 1,
            }
        }
    }
    debug_assert_eq!(overall.total(), state.len());
    Ok(DetectionReport { overall, per_class })
}

/// Write pre-softmax features as CSV:
/// `id,label,truth_noisy,status,phi0..phi{F-1}`. Statuses come from the
/// detection state when one is supplied; otherwise everything is clean.
pub fn export_features(
    params: &NetworkParams,
    ds: &Dataset,
    state: Option<&DetectionState>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let status_by_id: HashMap<usize, Status> = state
        .map(|s| s.records().iter().map(|r| (r.id, r.status)).collect())
        .unwrap_or_default();
    let batch: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.features.clone()).collect();
    let trace = params.forward(&batch)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "id,label,truth_noisy,status")?;
    for j in 0..params.feature_dim() {
        write!(f, ",phi{j}")?;
    }
    writeln!(f)?;
    for (sample, phi) in ds.samples.iter().zip(trace.features()) {
        let status = match status_by_id.get(&sample.id).copied().unwrap_or(Status::Clean) {
            Status::Clean => "clean",
            Status::Noisy => "noisy",
        };
        write!(
            f,
            "{},{},{},{}",
            sample.id, sample.label, sample.truth_noisy as u8, status
        )?;
        for x in phi {
            write!(f, ",{x}")?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}
