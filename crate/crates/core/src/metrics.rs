//! Segmentation scores. Predicted labels are matched to ground-truth labels
//! by a maximum-overlap assignment before comparing.

use std::collections::{BTreeMap, BTreeSet};

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{check_dim, Error, Result};

fn check_paths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::InvalidParameter("empty mode path".into()));
    }
    check_dim("path length", truth.len(), pred.len())
}

fn dense_labels(path: &[usize]) -> (Vec<usize>, usize) {
    let distinct: BTreeSet<usize> = path.iter().copied().collect();
    let order: BTreeMap<usize, usize> = distinct.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
    (path.iter().map(|l| order[l]).collect(), order.len())
}

struct Matching {
    /// `overlap[t][p]`
    overlap: Vec<Vec<usize>>,
    truth_sizes: Vec<usize>,
    pred_sizes: Vec<usize>,
    /// Predicted label assigned to each truth label, if any.
    assigned: Vec<Option<usize>>,
}

impl Matching {
    fn iou(&self, t: usize, p: usize) -> f64 {
        let inter = self.overlap[t][p];
        inter as f64 / (self.truth_sizes[t] + self.pred_sizes[p] - inter) as f64
    }
}

fn best_matching(pred: &[usize], truth: &[usize]) -> Matching {
    let (pred, np) = dense_labels(pred);
    let (truth, nt) = dense_labels(truth);
    let mut overlap = vec![vec![0usize; np]; nt];
    let mut truth_sizes = vec![0; nt];
    let mut pred_sizes = vec![0; np];
    for (&t, &p) in truth.iter().zip(&pred) {
        overlap[t][p] += 1;
        truth_sizes[t] += 1;
        pred_sizes[p] += 1;
    }
    let mut m = Matching {
        overlap,
        truth_sizes,
        pred_sizes,
        assigned: vec![None; nt],
    };
    // Overlap is the primary weight; IoU only breaks ties between
    // assignments with equal total overlap.
    const TIE: f64 = 1e6;
    let n = nt.max(np);
    let scale = (TIE as i64) * (n as i64 + 1);
    let mut weights = Matrix::new(n, n, 0i64);
    for t in 0..nt {
        for p in 0..np {
            weights[(t, p)] = m.overlap[t][p] as i64 * scale + (m.iou(t, p) * TIE).round() as i64;
        }
    }
    let (_, cols) = kuhn_munkres(&weights);
    for t in 0..nt {
        if cols[t] < np {
            m.assigned[t] = Some(cols[t]);
        }
    }
    m
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `Σ n_i / d_i` as one reduced fraction, or `None` on overflow.
fn rational_sum(terms: impl Iterator<Item = (u128, u128)>) -> Option<(u128, u128)> {
    let (mut num, mut den) = (0u128, 1u128);
    for (n, d) in terms {
        let g = gcd(den, d);
        let scale = d / g;
        num = num.checked_mul(scale)?.checked_add(n.checked_mul(den / g)?)?;
        den = den.checked_mul(scale)?;
        let r = gcd(num, den);
        (num, den) = (num / r, den / r);
    }
    Some((num, den))
}

/// Mean over ground-truth labels of the intersection-over-union with the
/// matched predicted label. Truth labels left without a partner score 0.
pub fn seg_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_paths(pred, truth)?;
    let m = best_matching(pred, truth);
    let terms = m.assigned.iter().enumerate().filter_map(|(t, p)| {
        p.map(|p| {
            let inter = m.overlap[t][p];
            (inter as u128, (m.truth_sizes[t] + m.pred_sizes[p] - inter) as u128)
        })
    });
    let labels = m.assigned.len();
    // Summed as a fraction so hand-checkable cases come out exact.
    if let Some((num, den)) = rational_sum(terms) {
        if let Some(den) = den.checked_mul(labels as u128) {
            return Ok(num as f64 / den as f64);
        }
    }
    let total: f64 = m
        .assigned
        .iter()
        .enumerate()
        .map(|(t, p)| p.map_or(0.0, |p| m.iou(t, p)))
        .sum();
    Ok(total / labels as f64)
}

/// Fraction of frames whose predicted label maps to the true one under the
/// best matching.
pub fn frame_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_paths(pred, truth)?;
    let m = best_matching(pred, truth);
    let hits: usize = m
        .assigned
        .iter()
        .enumerate()
        .map(|(t, p)| p.map_or(0, |p| m.overlap[t][p]))
        .sum();
    Ok(hits as f64 / pred.len() as f64)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean silhouette `(b - a) / max(a, b)` over all points, Euclidean
/// distance on the rows. Points alone in their cluster score 0.
pub fn silhouette(rows: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_dim("labels", rows.len(), labels.len())?;
    let (labels, k) = dense_labels(labels);
    if k < 2 {
        return Err(Error::InvalidParameter("silhouette needs at least two clusters".into()));
    }
    let width = rows[0].len();
    for r in rows {
        check_dim("silhouette row", width, r.len())?;
    }
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let n = rows.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += distance(&rows[i], &rows[j]);
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_worked_example() {
        assert_eq!(seg_score(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 7.0 / 12.0);
        assert_eq!(frame_accuracy(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.75);
    }

    #[test]
    fn permuted_labels_score_one() {
        let truth = [0, 0, 1, 2, 2, 1];
        let pred = [5, 5, 3, 9, 9, 3];
        assert_eq!(seg_score(&pred, &truth).unwrap(), 1.0);
        assert_eq!(frame_accuracy(&pred, &truth).unwrap(), 1.0);
    }

    #[test]
    fn surplus_predicted_labels_count_only_in_unions() {
        // Truth label 0 matches pred 0 (2 of 3 frames); pred 1 is unmatched.
        let s = seg_score(&[0, 0, 1, 2], &[0, 0, 0, 1]).unwrap();
        assert!((s - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(seg_score(&[], &[]).is_err());
        assert!(seg_score(&[0], &[0, 1]).is_err());
        assert!(silhouette(&[vec![0.0], vec![1.0]], &[1, 1]).is_err());
    }

    #[test]
    fn singleton_clusters_score_zero() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        assert_eq!(silhouette(&rows, &[0, 1]).unwrap(), 0.0);
    }
}
