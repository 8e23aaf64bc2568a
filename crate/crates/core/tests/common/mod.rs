//! Independent brute-force oracle for the density-based detector, kept
//! deliberately separate from the library's neighbor index and detection
//! code paths.
//!
//! Shared by several test targets, not all of which use every helper.
#![allow(dead_code)]

/// Same degenerate-input floor the library documents for reach-dist sums.
pub const EPS: f64 = 1e-12;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub struct LofOracle {
    pub k_dist: Vec<f64>,
    /// Tie-inclusive k-neighborhoods.
    pub neighborhoods: Vec<Vec<usize>>,
    pub lrd: Vec<f64>,
    pub lof: Vec<f64>,
}

/// Direct quadratic evaluation of k-distance, reachability distance,
/// local reachability density, and LOF.
pub fn lof_oracle(points: &[Vec<f64>], k: usize) -> LofOracle {
    let n = points.len();
    let mut k_dist = vec![0.0; n];
    let mut neighborhoods = vec![Vec::new(); n];
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (dist(&points[i], &points[j]), j))
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        k_dist[i] = d[k - 1].0;
        neighborhoods[i] = d
            .iter()
            .filter(|(dd, _)| *dd <= k_dist[i])
            .map(|&(_, j)| j)
            .collect();
    }
    let reach = |i: usize, j: usize| k_dist[j].max(dist(&points[i], &points[j]));
    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let m = neighborhoods[i].len() as f64;
            let sum: f64 = neighborhoods[i].iter().map(|&j| reach(i, j)).sum();
            m / sum.max(m * EPS)
        })
        .collect();
    let lof: Vec<f64> = (0..n)
        .map(|i| {
            let sum: f64 = neighborhoods[i].iter().map(|&j| lrd[j] / lrd[i]).sum();
            sum / neighborhoods[i].len() as f64
        })
        .collect();
    LofOracle {
        k_dist,
        neighborhoods,
        lrd,
        lof,
    }
}

pub fn oracle_reach_dist(points: &[Vec<f64>], k_dist: &[f64], i: usize, j: usize) -> f64 {
    k_dist[j].max(dist(&points[i], &points[j]))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-300);
    (a - b).abs() / denom
}
