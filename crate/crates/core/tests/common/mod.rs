//! Brute-force oracles shared by the property tests and the acceptance
//! harness.
#![allow(dead_code)]

use cpgan_core::losses::euclidean_distance;

/// Probability that a genuine score beats an impostor score, ties counting
/// one half.
pub fn mann_whitney(g: &[f64], i: &[f64]) -> f64 {
    let mut wins = 0.0;
    for a in g {
        for b in i {
            wins += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (g.len() * i.len()) as f64
}

/// Operating points for "accept when score >= t" at t = +inf and every
/// distinct score, decreasing.
pub fn operating_points(g: &[f64], i: &[f64]) -> Vec<(f64, f64)> {
    let mut ts: Vec<f64> = g.iter().chain(i).copied().collect();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    let far = |t: f64| i.iter().filter(|&&s| s >= t).count() as f64 / i.len() as f64;
    let gar = |t: f64| g.iter().filter(|&&s| s >= t).count() as f64 / g.len() as f64;
    std::iter::once((0.0, 0.0))
        .chain(ts.into_iter().map(|t| (far(t), gar(t))))
        .collect()
}

/// EER as the first root of FAR - FRR along the polyline through the
/// operating points, located by bisection on the polyline parameter.
pub fn eer_by_bisection(points: &[(f64, f64)]) -> f64 {
    let at = |s: f64| {
        let k = (s.floor() as usize).min(points.len() - 2);
        let a = s - k as f64;
        let lerp = |u: f64, v: f64| u + a * (v - u);
        let far = lerp(points[k].0, points[k + 1].0);
        let frr = lerp(1.0 - points[k].1, 1.0 - points[k + 1].1);
        (far, far - frr)
    };
    if points.len() < 2 || at(0.0).1 >= 0.0 {
        return points[0].0;
    }
    let (mut lo, mut hi) = (0.0, (points.len() - 1) as f64);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if at(mid).1 >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi).0
}

pub fn gar_at_far_oracle(points: &[(f64, f64)], budget: f64) -> f64 {
    points.iter().filter(|p| p.0 <= budget).map(|p| p.1).fold(0.0, f64::max)
}

/// 0-based rank of each probe's true identity when the gallery is sorted
/// by distance, ties kept in gallery order.
pub fn true_ranks(probes: &[(Vec<f32>, u32)], gallery: &[(Vec<f32>, u32)]) -> Vec<usize> {
    let mut ranks = Vec::new();
    for (e, id) in probes {
        let mut order: Vec<(f64, usize)> = gallery
            .iter()
            .enumerate()
            .map(|(j, (g, _))| (euclidean_distance(e, g), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ranks.push(order.iter().position(|&(_, j)| gallery[j].1 == *id).unwrap());
    }
    ranks
}

/// CMC from ranks: accuracy at rank k+1 for every k below `gallery_size`.
pub fn cmc_from_ranks(ranks: &[usize], gallery_size: usize) -> Vec<f64> {
    (0..gallery_size)
        .map(|k| ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
        .collect()
}
