//! Synthetic labeled datasets with controlled open-set / closed-set label
//! noise, CSV persistence and stratified splitting.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// One labeled feature vector. `truth_noisy` is the generator's ground
/// truth; it exists for evaluation only and must never steer training.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub features: Vec<f64>,
    pub label: usize,
    pub truth_noisy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices into `samples` grouped by label.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, s) in self.samples.iter().enumerate() {
            by_class[s.label].push(i);
        }
        by_class
    }

    fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.num_classes];
        let mut ids = std::collections::HashSet::new();
        for s in &self.samples {
            if s.features.len() != self.dim {
                return Err(Error::DimensionMismatch(format!(
                    "sample {} has dim {}, dataset dim {}",
                    s.id,
                    s.features.len(),
                    self.dim
                )));
            }
            if s.label >= self.num_classes {
                return Err(Error::InvalidArgument(format!(
                    "sample {} label {} >= num_classes {}",
                    s.id, s.label, self.num_classes
                )));
            }
            if !s.features.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("sample {} features", s.id)));
            }
            if !ids.insert(s.id) {
                return Err(Error::Malformed(format!("duplicate id {}", s.id)));
            }
            seen[s.label] = true;
        }
        if let Some(c) = seen.iter().position(|&b| !b) {
            return Err(Error::InvalidArgument(format!("class {c} has no samples")));
        }
        Ok(())
    }
}

/// How open-set outlier features are produced.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutlierGenerator {
    /// Isotropic Gaussian at a held-out center (a class never in the label
    /// set).
    Blob { center: Vec<f64>, sigma: f64 },
    /// Uniform over an axis-aligned box.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
    /// The original features plus high-variance Gaussian noise ("damaged"
    /// samples).
    Damaged { sigma: f64 },
}

impl OutlierGenerator {
    fn dim(&self) -> Option<usize> {
        match self {
            OutlierGenerator::Blob { center, .. } => Some(center.len()),
            OutlierGenerator::UniformBox { low, .. } => Some(low.len()),
            OutlierGenerator::Damaged { .. } => None,
        }
    }

    fn draw(&self, original: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            OutlierGenerator::Blob { center, sigma } => {
                let normal = Normal::new(0.0, *sigma).expect("sigma validated");
                center.iter().map(|&c| c + normal.sample(rng)).collect()
            }
            OutlierGenerator::UniformBox { low, high } => low
                .iter()
                .zip(high)
                .map(|(&lo, &hi)| rng.gen_range(lo..hi))
                .collect(),
            OutlierGenerator::Damaged { sigma } => {
                let normal = Normal::new(0.0, *sigma).expect("sigma validated");
                original.iter().map(|&x| x + normal.sample(rng)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    OpenSet,
    ClosedSet,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub outlier_generator: Option<OutlierGenerator>,
    pub seed: u64,
}

/// Draw `per_class_count` samples per class from isotropic Gaussians.
pub fn generate_blobs(
    num_classes: usize,
    per_class_count: usize,
    dim: usize,
    centers: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if per_class_count < 1 {
        return Err(Error::InvalidArgument("per_class_count must be >= 1".into()));
    }
    if centers.len() != num_classes {
        return Err(Error::InvalidArgument(format!(
            "{} centers for {} classes",
            centers.len(),
            num_classes
        )));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidArgument("sigma must be >= 0".into()));
    }
    for c in centers {
        if c.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "center dim {} != {}",
                c.len(),
                dim
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut samples = Vec::with_capacity(num_classes * per_class_count);
    let mut id = 0;
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..per_class_count {
            let features = if sigma == 0.0 {
                center.clone()
            } else {
                center.iter().map(|&c| c + normal.sample(&mut rng)).collect()
            };
            samples.push(Sample {
                id,
                features,
                label,
                truth_noisy: false,
            });
            id += 1;
        }
    }
    Ok(Dataset {
        samples,
        num_classes,
        dim,
    })
}

/// Replace `floor(rate * class_count)` samples per class with outlier
/// draws. Labels and per-class counts are unchanged; replaced samples are
/// flagged `truth_noisy`.
pub fn inject_open_set_noise(ds: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    if spec.kind != NoiseKind::OpenSet {
        return Err(Error::InvalidArgument("spec.kind must be open_set".into()));
    }
    if !(0.0..1.0).contains(&spec.rate) {
        return Err(Error::InvalidArgument("rate must be in [0, 1)".into()));
    }
    let gen = spec
        .outlier_generator
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("open_set requires an outlier_generator".into()))?;
    if let Some(d) = gen.dim() {
        if d != ds.dim {
            return Err(Error::DimensionMismatch(format!(
                "outlier generator dim {} != dataset dim {}",
                d, ds.dim
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = ds.clone();
    for class_indices in ds.indices_by_class() {
        let n_noisy = (spec.rate * class_indices.len() as f64).floor() as usize;
        let mut chosen = index::sample(&mut rng, class_indices.len(), n_noisy).into_vec();
        chosen.sort_unstable();
        for pos in chosen {
            let i = class_indices[pos];
            let s = &mut out.samples[i];
            s.features = gen.draw(&s.features, &mut rng);
            s.truth_noisy = true;
        }
    }
    Ok(out)
}

/// Flip the label of `floor(rate * class_count)` samples per class to a
/// uniformly random different class. Features untouched.
pub fn inject_closed_set_noise(ds: &Dataset, rate: f64, seed: u64) -> Result<Dataset> {
    if ds.num_classes < 2 {
        return Err(Error::InvalidArgument(
            "closed-set noise needs at least 2 classes".into(),
        ));
    }
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument("rate must be in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    for class_indices in ds.indices_by_class() {
        let n_noisy = (rate * class_indices.len() as f64).floor() as usize;
        let mut chosen = index::sample(&mut rng, class_indices.len(), n_noisy).into_vec();
        chosen.sort_unstable();
        for pos in chosen {
            let i = class_indices[pos];
            let s = &mut out.samples[i];
            // uniform over the C-1 other classes
            let mut new_label = rng.gen_range(0..ds.num_classes - 1);
            if new_label >= s.label {
                new_label += 1;
            }
            s.label = new_label;
            s.truth_noisy = true;
        }
    }
    Ok(out)
}

/// Write `id,label,truth_noisy,f0,...,f{d-1}` rows; floats in shortest
/// round-trip form so `load_csv(save_csv(ds)) == ds`.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "id,label,truth_noisy")?;
    for j in 0..ds.dim {
        write!(f, ",f{j}")?;
    }
    writeln!(f)?;
    for s in &ds.samples {
        write!(f, "{},{},{}", s.id, s.label, s.truth_noisy as u8)?;
        for x in &s.features {
            write!(f, ",{x}")?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Malformed("no samples".into()))??;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 4 || cols[0] != "id" || cols[1] != "label" || cols[2] != "truth_noisy" {
        return Err(Error::Malformed(format!("bad header: {header}")));
    }
    let dim = cols.len() - 3;
    for (j, c) in cols[3..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(Error::Malformed(format!("bad feature column: {c}")));
        }
    }
    let mut samples = Vec::new();
    let mut max_label = 0;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != dim + 3 {
            return Err(Error::Malformed(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                dim + 3,
                fields.len()
            )));
        }
        let parse_err =
            |what: &str| Error::Malformed(format!("line {}: non-numeric {what}", lineno + 2));
        let id: usize = fields[0].parse().map_err(|_| parse_err("id"))?;
        let label: usize = fields[1].parse().map_err(|_| parse_err("label"))?;
        let truth_noisy = match fields[2] {
            "0" | "false" => false,
            "1" | "true" => true,
            _ => return Err(parse_err("truth_noisy")),
        };
        let features = fields[3..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| parse_err("feature")))
            .collect::<Result<Vec<f64>>>()?;
        max_label = max_label.max(label);
        samples.push(Sample {
            id,
            features,
            label,
            truth_noisy,
        });
    }
    if samples.is_empty() {
        return Err(Error::Malformed("no samples".into()));
    }
    let ds = Dataset {
        samples,
        num_classes: max_label + 1,
        dim,
    };
    ds.validate()?;
    Ok(ds)
}

/// Stratified train/test split with disjoint ids.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(
            "test_fraction must be in (0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, class_indices) in ds.indices_by_class().into_iter().enumerate() {
        let n_test = (test_fraction * class_indices.len() as f64).floor() as usize;
        if n_test == 0 || n_test == class_indices.len() {
            return Err(Error::ClassTooSmall {
                class,
                have: class_indices.len(),
                need: (1.0 / test_fraction.min(1.0 - test_fraction)).ceil() as usize,
            });
        }
        let mut chosen: Vec<usize> = index::sample(&mut rng, class_indices.len(), n_test).into_vec();
        chosen.sort_unstable();
        let mut in_test = vec![false; class_indices.len()];
        for pos in chosen {
            in_test[pos] = true;
        }
        for (pos, &i) in class_indices.iter().enumerate() {
            if in_test[pos] {
                test.push(ds.samples[i].clone());
            } else {
                train.push(ds.samples[i].clone());
            }
        }
    }
    train.sort_by_key(|s| s.id);
    test.sort_by_key(|s| s.id);
    let mk = |samples: Vec<Sample>| Dataset {
        samples,
        num_classes: ds.num_classes,
        dim: ds.dim,
    };
    Ok((mk(train), mk(test)))
}
