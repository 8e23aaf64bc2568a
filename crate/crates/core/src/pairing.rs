//! Pair construction and hard example mining for the contrastive loss.
//!
//! Candidates follow the similarity indicator: clean same-class pairs are
//! similar, cross-class or clean/noisy pairs are dissimilar, noisy-noisy
//! pairs are excluded. Before the first detection every sample is clean,
//! so candidates reduce to label-based pairs. Mining is exhaustive over a
//! seeded random subsample and keeps the closest dissimilar and most
//! distant similar pairs.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detection::Status;
use crate::losses::{similarity, SimilarityIndicator};
use crate::neighbors::euclidean;
use crate::{Error, Result};

/// Default mining pool: pairs are enumerated within a random subsample of
/// this many samples.
pub const DEFAULT_POOL_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    /// Positions into the feature/status/label slices handed to the miner.
    pub i: usize,
    pub j: usize,
    pub similar: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub pairs: Vec<Pair>,
    pub num_similar: usize,
    pub num_dissimilar: usize,
}

/// The candidate relationship of a single pair.
pub fn candidate_indicator(
    statuses: &[Status],
    labels: &[usize],
    i: usize,
    j: usize,
) -> SimilarityIndicator {
    similarity(statuses[i], statuses[j], labels[i], labels[j])
}

/// Select the `budget / 2` dissimilar pairs with the smallest feature
/// distance and the `budget / 2` similar pairs with the largest. When a
/// kind runs short, fewer pairs are returned. Ties break by (i, j) order.
pub fn hard_mine(
    features: &[Vec<f64>],
    statuses: &[Status],
    labels: &[usize],
    budget: usize,
    pool_size: usize,
    seed: u64,
) -> Result<PairBatch> {
    let n = features.len();
    if statuses.len() != n || labels.len() != n {
        return Err(Error::DimensionMismatch(
            "features/statuses/labels lengths".into(),
        ));
    }
    if budget < 2 {
        return Err(Error::InvalidArgument("pair budget must be >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<usize> = if pool_size >= n {
        (0..n).collect()
    } else {
        let mut p = index::sample(&mut rng, n, pool_size).into_vec();
        p.sort_unstable();
        p
    };

    let mut similar: Vec<(f64, usize, usize)> = Vec::new();
    let mut dissimilar: Vec<(f64, usize, usize)> = Vec::new();
    for (a, &i) in pool.iter().enumerate() {
        for &j in &pool[a + 1..] {
            match candidate_indicator(statuses, labels, i, j) {
                SimilarityIndicator::Similar => {
                    similar.push((euclidean(&features[i], &features[j]), i, j));
                }
                SimilarityIndicator::Dissimilar => {
                    dissimilar.push((euclidean(&features[i], &features[j]), i, j));
                }
                SimilarityIndicator::Undefined => {}
            }
        }
    }
    // most distant similar pairs, closest dissimilar pairs
    similar.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
    dissimilar.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
    let per_kind = budget / 2;
    similar.truncate(per_kind);
    dissimilar.truncate(per_kind);

    let mut pairs = Vec::with_capacity(similar.len() + dissimilar.len());
    let num_similar = similar.len();
    let num_dissimilar = dissimilar.len();
    for (_, i, j) in similar {
        pairs.push(Pair { i, j, similar: true });
    }
    for (_, i, j) in dissimilar {
        pairs.push(Pair { i, j, similar: false });
    }
    Ok(PairBatch {
        pairs,
        num_similar,
        num_dissimilar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Status::{Clean, Noisy};

    fn pts_1d(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn pre_detection_candidates_are_label_based() {
        let statuses = vec![Clean; 4];
        let labels = vec![0, 0, 1, 1];
        assert_eq!(
            candidate_indicator(&statuses, &labels, 0, 1),
            SimilarityIndicator::Similar
        );
        assert_eq!(
            candidate_indicator(&statuses, &labels, 0, 2),
            SimilarityIndicator::Dissimilar
        );
    }

    #[test]
    fn noisy_pairs_with_clean_regardless_of_label() {
        let statuses = vec![Clean, Noisy, Noisy];
        let labels = vec![0, 0, 1];
        assert_eq!(
            candidate_indicator(&statuses, &labels, 0, 1),
            SimilarityIndicator::Dissimilar
        );
        assert_eq!(
            candidate_indicator(&statuses, &labels, 1, 2),
            SimilarityIndicator::Undefined
        );
    }

    #[test]
    fn mines_most_distant_similar() {
        // clean same-class points on a line; budget for 1 similar pair
        let feats = pts_1d(&[0.0, 1.0, 5.0]);
        let batch = hard_mine(&feats, &[Clean; 3], &[0; 3], 2, 10, 0).unwrap();
        assert_eq!(batch.num_similar, 1);
        assert_eq!(batch.num_dissimilar, 0);
        let p = batch.pairs[0];
        assert!((p.i, p.j) == (0, 2));
    }

    #[test]
    fn mines_closest_dissimilar_to_noisy_point() {
        let feats = pts_1d(&[0.0, 1.0, 2.0, 2.5]);
        let statuses = vec![Clean, Clean, Clean, Noisy];
        let labels = vec![0, 0, 0, 0];
        let batch = hard_mine(&feats, &statuses, &labels, 2, 10, 0).unwrap();
        let dis: Vec<&Pair> = batch.pairs.iter().filter(|p| !p.similar).collect();
        assert_eq!(dis.len(), 1);
        // nearest clean point to the noisy one
        assert_eq!((dis[0].i, dis[0].j), (2, 3));
    }

    #[test]
    fn never_emits_noisy_noisy_and_respects_contract() {
        let feats = pts_1d(&[0.0, 0.5, 3.0, 3.5, 10.0]);
        let statuses = vec![Clean, Clean, Noisy, Noisy, Clean];
        let labels = vec![0, 1, 0, 1, 0];
        let batch = hard_mine(&feats, &statuses, &labels, 8, 10, 1).unwrap();
        for p in &batch.pairs {
            let ind = candidate_indicator(&statuses, &labels, p.i, p.j);
            assert_ne!(ind, SimilarityIndicator::Undefined);
            assert_eq!(p.similar, ind == SimilarityIndicator::Similar);
            assert!(!(statuses[p.i] == Noisy && statuses[p.j] == Noisy));
        }
    }

    #[test]
    fn matches_exhaustive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 30;
        let feats: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
            .collect();
        let statuses: Vec<Status> = (0..n)
            .map(|_| if rng.gen_bool(0.3) { Noisy } else { Clean })
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3usize)).collect();
        let budget = 10;
        let batch = hard_mine(&feats, &statuses, &labels, budget, n, 0).unwrap();

        // oracle: enumerate, sort, take top budget/2 per kind
        let mut sim = Vec::new();
        let mut dis = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                match candidate_indicator(&statuses, &labels, i, j) {
                    SimilarityIndicator::Similar => {
                        sim.push((euclidean(&feats[i], &feats[j]), i, j))
                    }
                    SimilarityIndicator::Dissimilar => {
                        dis.push((euclidean(&feats[i], &feats[j]), i, j))
                    }
                    SimilarityIndicator::Undefined => {}
                }
            }
        }
        sim.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        dis.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let want_sim: Vec<(usize, usize)> =
            sim.iter().take(budget / 2).map(|&(_, i, j)| (i, j)).collect();
        let want_dis: Vec<(usize, usize)> =
            dis.iter().take(budget / 2).map(|&(_, i, j)| (i, j)).collect();
        let got_sim: Vec<(usize, usize)> = batch
            .pairs
            .iter()
            .filter(|p| p.similar)
            .map(|p| (p.i, p.j))
            .collect();
        let got_dis: Vec<(usize, usize)> = batch
            .pairs
            .iter()
            .filter(|p| !p.similar)
            .map(|p| (p.i, p.j))
            .collect();
        assert_eq!(got_sim, want_sim);
        assert_eq!(got_dis, want_dis);

        // selected dissimilar distances never exceed unselected candidates
        let worst_selected = got_dis
            .iter()
            .map(|&(i, j)| euclidean(&feats[i], &feats[j]))
            .fold(0.0, f64::max);
        for &(d, ..) in dis.iter().skip(budget / 2) {
            assert!(worst_selected <= d);
        }
    }

    #[test]
    fn deterministic_under_seed_and_handles_scarcity() {
        let feats = pts_1d(&[0.0, 1.0]);
        let statuses = vec![Clean, Clean];
        let labels = vec![0, 0];
        // no dissimilar candidates exist: emit fewer, never fabricate
        let batch = hard_mine(&feats, &statuses, &labels, 4, 10, 3).unwrap();
        assert_eq!(batch.num_dissimilar, 0);
        assert!(batch.num_similar >= 1);
        let again = hard_mine(&feats, &statuses, &labels, 4, 10, 3).unwrap();
        assert_eq!(batch, again);
    }

    #[test]
    fn rejects_bad_budget() {
        assert!(hard_mine(&pts_1d(&[0.0]), &[Clean], &[0], 1, 10, 0).is_err());
    }
}
