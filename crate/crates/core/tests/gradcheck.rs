//! Central finite-difference checks of every analytic gradient: the
//! reweighted softmax loss, the contrastive loss, and full-network
//! backprop with both loss paths active.

mod common;

use common::rel_err;
use openloop_core::losses::{contrastive, reweighted_softmax, SimilarityIndicator};
use openloop_core::model::NetworkParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

fn check(analytic: f64, numeric: f64, what: &str) {
    if analytic.abs().max(numeric.abs()) < 1e-8 {
        return; // both effectively zero
    }
    assert!(
        rel_err(analytic, numeric) < TOL,
        "{what}: analytic {analytic} vs numeric {numeric}"
    );
}

#[test]
fn rsl_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.gen_range(2..6);
        let c = rng.gen_range(2..5);
        let mut logits: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let gammas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let (_, grads) = reweighted_softmax(&logits, &labels, &gammas).unwrap();
        for i in 0..n {
            for j in 0..c {
                let orig = logits[i][j];
                let numeric = central_diff(
                    |x| {
                        logits[i][j] = x;
                        let (loss, _) = reweighted_softmax(&logits, &labels, &gammas).unwrap();
                        loss
                    },
                    orig,
                );
                logits[i][j] = orig;
                check(grads[i][j], numeric, "rsl logit grad");
            }
        }
    }
}

#[test]
fn contrastive_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let alpha = 1.0;
    let mut checked = 0;
    while checked < 40 {
        let d = rng.gen_range(2..6);
        let f_i: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f_j: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dist = common::dist(&f_i, &f_j);
        // stay away from the hinge kink and the D = 0 singularity
        if (dist - alpha).abs() < 1e-3 || dist < 1e-3 {
            continue;
        }
        for (indicator, squared) in [
            (SimilarityIndicator::Similar, false),
            (SimilarityIndicator::Dissimilar, false),
            (SimilarityIndicator::Dissimilar, true),
        ] {
            let (_, gi, gj) = contrastive(&f_i, &f_j, indicator, alpha, squared).unwrap();
            let mut fi = f_i.clone();
            for m in 0..d {
                let orig = fi[m];
                let numeric = central_diff(
                    |x| {
                        fi[m] = x;
                        contrastive(&fi, &f_j, indicator, alpha, squared).unwrap().0
                    },
                    orig,
                );
                fi[m] = orig;
                check(gi[m], numeric, "contrastive grad_i");
            }
            let mut fj = f_j.clone();
            for m in 0..d {
                let orig = fj[m];
                let numeric = central_diff(
                    |x| {
                        fj[m] = x;
                        contrastive(&f_i, &fj, indicator, alpha, squared).unwrap().0
                    },
                    orig,
                );
                fj[m] = orig;
                check(gj[m], numeric, "contrastive grad_j");
            }
        }
        checked += 1;
    }
}

/// Combined scalar objective used for the full-network check: reweighted
/// softmax on the batch plus eta times the mean contrastive loss over
/// fixed in-batch pairs.
struct Scenario {
    batch: Vec<Vec<f64>>,
    labels: Vec<usize>,
    gammas: Vec<f64>,
    pairs: Vec<(usize, usize, SimilarityIndicator)>,
    alpha: f64,
    eta: f64,
}

impl Scenario {
    fn loss(&self, params: &NetworkParams) -> f64 {
        let trace = params.forward(&self.batch).unwrap();
        let (rsl, _) = reweighted_softmax(trace.logits(), &self.labels, &self.gammas).unwrap();
        let feats = trace.features();
        let cl: f64 = self
            .pairs
            .iter()
            .map(|&(i, j, ind)| {
                contrastive(&feats[i], &feats[j], ind, self.alpha, false).unwrap().0
            })
            .sum::<f64>()
            / self.pairs.len() as f64;
        rsl + self.eta * cl
    }

    fn analytic_grads(&self, params: &NetworkParams) -> openloop_core::model::Gradients {
        let trace = params.forward(&self.batch).unwrap();
        let (_, d_logits) =
            reweighted_softmax(trace.logits(), &self.labels, &self.gammas).unwrap();
        let feats = trace.features();
        let mut d_features = vec![vec![0.0; params.feature_dim()]; self.batch.len()];
        let scale = self.eta / self.pairs.len() as f64;
        for &(i, j, ind) in &self.pairs {
            let (_, gi, gj) = contrastive(&feats[i], &feats[j], ind, self.alpha, false).unwrap();
            for (d, g) in d_features[i].iter_mut().zip(&gi) {
                *d += scale * g;
            }
            for (d, g) in d_features[j].iter_mut().zip(&gj) {
                *d += scale * g;
            }
        }
        trace.backward(params, &d_logits, Some(&d_features)).unwrap()
    }
}

#[test]
fn full_network_both_paths_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for net in 0..20 {
        let dims = [4, 16, 8, 3];
        let mut params = NetworkParams::init(&dims, net).unwrap();
        let n = 6;
        let batch: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..dims[3])).collect();
        let gammas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let trace = params.forward(&batch).unwrap();
        let feats = trace.features();
        // fixed pairs, skipping any near the hinge kink or D = 0
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let d = common::dist(&feats[i], &feats[j]);
                if (d - 1.0).abs() < 1e-3 || d < 1e-3 {
                    continue;
                }
                let ind = if (i + j) % 2 == 0 {
                    SimilarityIndicator::Similar
                } else {
                    SimilarityIndicator::Dissimilar
                };
                pairs.push((i, j, ind));
            }
        }
        assert!(!pairs.is_empty());
        let scenario = Scenario {
            batch,
            labels,
            gammas,
            pairs,
            alpha: 1.0,
            eta: 0.7,
        };

        let analytic = scenario.analytic_grads(&params);
        for l in 0..params.layers.len() {
            for o in 0..params.layers[l].weights.len() {
                for i in 0..params.layers[l].weights[o].len() {
                    let orig = params.layers[l].weights[o][i];
                    let numeric = central_diff(
                        |x| {
                            params.layers[l].weights[o][i] = x;
                            scenario.loss(&params)
                        },
                        orig,
                    );
                    params.layers[l].weights[o][i] = orig;
                    check(
                        analytic.layers[l].weights[o][i],
                        numeric,
                        &format!("net {net} layer {l} weight ({o},{i})"),
                    );
                }
                let orig = params.layers[l].bias[o];
                let numeric = central_diff(
                    |x| {
                        params.layers[l].bias[o] = x;
                        scenario.loss(&params)
                    },
                    orig,
                );
                params.layers[l].bias[o] = orig;
                check(
                    analytic.layers[l].bias[o],
                    numeric,
                    &format!("net {net} layer {l} bias {o}"),
                );
            }
        }
    }
}
