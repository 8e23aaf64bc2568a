//! Exact k-nearest-neighbor index over a point set.
//!
//! Neighborhoods follow the classic LOF convention: every point at distance
//! exactly equal to the k-distance is included, so a neighborhood can hold
//! more than `k` members under ties. Distances are Euclidean. Construction
//! is a brute-force all-pairs scan; point sets here are per-class and small.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Vec<f64>>,
    k: usize,
    /// Per point: neighbors sorted by (distance, index), all with
    /// distance <= k_distance of that point.
    neighborhoods: Vec<Vec<Neighbor>>,
    k_distances: Vec<f64>,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl NeighborIndex {
    pub fn build(points: Vec<Vec<f64>>, k: usize) -> Result<Self> {
        let n = points.len();
        if k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if n < k + 1 {
            return Err(Error::TooFewPoints { have: n, need: k + 1 });
        }
        let dim = points[0].len();
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "point dim {} != {}",
                    p.len(),
                    dim
                )));
            }
            if !p.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("point coordinate".into()));
            }
        }
        let mut neighborhoods = Vec::with_capacity(n);
        let mut k_distances = Vec::with_capacity(n);
        for i in 0..n {
            let mut dists: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .map(|j| Neighbor {
                    index: j,
                    distance: euclidean(&points[i], &points[j]),
                })
                .collect();
            dists.sort_by(|a, b| {
                a.distance
                    .partial_cmp(&b.distance)
                    .unwrap()
                    .then(a.index.cmp(&b.index))
            });
            let k_dist = dists[k - 1].distance;
            let cut = dists.partition_point(|nb| nb.distance <= k_dist);
            dists.truncate(cut);
            neighborhoods.push(dists);
            k_distances.push(k_dist);
        }
        Ok(Self {
            points,
            k,
            neighborhoods,
            k_distances,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Distance from point `i` to its k-th nearest neighbor.
    pub fn k_distance(&self, i: usize) -> Result<f64> {
        self.check(i)?;
        Ok(self.k_distances[i])
    }

    /// The tie-inclusive k-neighborhood of point `i`, sorted by distance.
    pub fn neighbors(&self, i: usize) -> Result<&[Neighbor]> {
        self.check(i)?;
        Ok(&self.neighborhoods[i])
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts_1d(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn line_k1() {
        let idx = NeighborIndex::build(pts_1d(&[0.0, 1.0, 2.0, 3.0]), 1).unwrap();
        let n0 = idx.neighbors(0).unwrap();
        assert_eq!(n0.len(), 1);
        assert_eq!(n0[0].index, 1);
        assert_eq!(idx.k_distance(0).unwrap(), 1.0);
        // interior point 1 has ties at distance 1 on both sides
        let n1 = idx.neighbors(1).unwrap();
        assert_eq!(n1.len(), 2);
    }

    #[test]
    fn unit_square_corners_k2() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ];
        let idx = NeighborIndex::build(pts, 2).unwrap();
        for i in 0..4 {
            assert_eq!(idx.k_distance(i).unwrap(), 1.0);
            let nbrs = idx.neighbors(i).unwrap();
            assert_eq!(nbrs.len(), 2);
            // edge-adjacent corners, never the diagonal
            let diagonal = (i + 2) % 4;
            assert!(nbrs.iter().all(|nb| nb.index != diagonal));
        }
    }

    #[test]
    fn close_pair_k1() {
        let idx = NeighborIndex::build(pts_1d(&[0.0, 1.0, 1.1]), 1).unwrap();
        assert!((idx.k_distance(1).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(idx.neighbors(1).unwrap()[0].index, 2);
    }

    #[test]
    fn duplicates_give_zero_k_distance() {
        let idx = NeighborIndex::build(pts_1d(&[2.0, 2.0, 5.0]), 1).unwrap();
        assert_eq!(idx.k_distance(0).unwrap(), 0.0);
        assert_eq!(idx.k_distance(1).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(NeighborIndex::build(pts_1d(&[0.0, 1.0]), 2).is_err());
        assert!(NeighborIndex::build(vec![vec![0.0], vec![f64::NAN]], 1).is_err());
        assert!(NeighborIndex::build(vec![vec![0.0], vec![0.0, 1.0]], 1).is_err());
    }

    #[test]
    fn out_of_range_index() {
        let idx = NeighborIndex::build(pts_1d(&[0.0, 1.0]), 1).unwrap();
        assert!(idx.k_distance(2).is_err());
        assert!(idx.neighbors(5).is_err());
    }

    // quadratic-scan oracle: sort all distances, take the k-th, include ties
    fn oracle_neighborhood(points: &[Vec<f64>], i: usize, k: usize) -> (f64, Vec<usize>) {
        let mut d: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, p)| (euclidean(&points[i], p), j))
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k_dist = d[k - 1].0;
        let members = d.iter().filter(|(dist, _)| *dist <= k_dist).map(|&(_, j)| j).collect();
        (k_dist, members)
    }

    #[test]
    fn random_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let points: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let k = 5;
        let idx = NeighborIndex::build(points.clone(), k).unwrap();
        for i in 0..points.len() {
            let (k_dist, members) = oracle_neighborhood(&points, i, k);
            assert_eq!(idx.k_distance(i).unwrap(), k_dist);
            let got: Vec<usize> = {
                let mut v: Vec<usize> =
                    idx.neighbors(i).unwrap().iter().map(|nb| nb.index).collect();
                v.sort_unstable();
                v
            };
            let mut want = members;
            want.sort_unstable();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn neighborhood_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let idx = NeighborIndex::build(points.clone(), 7).unwrap();
        for i in 0..points.len() {
            let k_dist = idx.k_distance(i).unwrap();
            let nbrs = idx.neighbors(i).unwrap();
            assert!(nbrs.len() >= 7);
            assert!(nbrs.iter().all(|nb| nb.distance <= k_dist && nb.index != i));
            let member: std::collections::HashSet<usize> =
                nbrs.iter().map(|nb| nb.index).collect();
            for j in 0..points.len() {
                if j != i && !member.contains(&j) {
                    assert!(euclidean(&points[i], &points[j]) >= k_dist);
                }
            }
        }
    }
}
