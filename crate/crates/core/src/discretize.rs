//! Jenks natural breaks and interval assignment of a continuous variable
//! into ordered categories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Category cut points with the resulting class frequencies.
///
/// Category `k` covers `(thresholds[k-2], thresholds[k-1]]`, with open ends
/// below the first and above the last threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breaks {
    pub thresholds: Vec<f64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub category_counts: Vec<usize>,
    pub category_shares: Vec<f64>,
    /// Total within-class sum of squared deviations, when produced by a
    /// classification run.
    pub objective: Option<f64>,
}

impl Breaks {
    pub fn n_categories(&self) -> usize {
        self.thresholds.len() + 1
    }
}

/// Relative tolerance under which two partition objectives count as tied.
pub(crate) const TIE_TOLERANCE: f64 = 1e-9;

pub(crate) fn ties(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * scale.max(1.0)
}

/// Sorted distinct values with multiplicities.
pub(crate) fn distinct_weighted(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for v in sorted {
        match xs.last() {
            Some(&last) if last == v => *ws.last_mut().unwrap() += 1.0,
            _ => {
                xs.push(v);
                ws.push(1.0);
            }
        }
    }
    (xs, ws)
}

/// Weighted prefix sums for O(1) class cost queries.
struct ClassCost {
    w: Vec<f64>,
    s: Vec<f64>,
    ss: Vec<f64>,
}

impl ClassCost {
    fn new(xs: &[f64], ws: &[f64]) -> Self {
        // shift by the median-ish value to reduce cancellation in ss - s²/w
        let shift = xs[xs.len() / 2];
        let mut w = vec![0.0; xs.len() + 1];
        let mut s = vec![0.0; xs.len() + 1];
        let mut ss = vec![0.0; xs.len() + 1];
        for i in 0..xs.len() {
            let d = xs[i] - shift;
            w[i + 1] = w[i] + ws[i];
            s[i + 1] = s[i] + ws[i] * d;
            ss[i + 1] = ss[i] + ws[i] * d * d;
        }
        Self { w, s, ss }
    }

    /// Sum of squared deviations for distinct values `i..j` (exclusive end).
    fn ssd(&self, i: usize, j: usize) -> f64 {
        let w = self.w[j] - self.w[i];
        let s = self.s[j] - self.s[i];
        let ss = self.ss[j] - self.ss[i];
        (ss - s * s / w).max(0.0)
    }
}

/// Exact Jenks natural breaks by dynamic programming over contiguous
/// partitions of the sorted distinct values.
///
/// Among partitions with equal objective (within a relative `1e-9`), the one
/// with the smallest first threshold wins, then the smallest second, and so
/// on. Thresholds are the class maxima of all classes but the last.
pub fn jenks_breaks(values: &[f64], k: usize) -> Result<Breaks> {
    if k == 0 {
        return Err(Error::config("number of classes must be positive"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "values", index: i });
    }
    let (xs, ws) = distinct_weighted(values);
    let d = xs.len();
    if d < k {
        return Err(Error::TooFewDistinct { k, found: d });
    }
    let cost = ClassCost::new(&xs, &ws);

    // best[c][i]: minimal cost of splitting the suffix i..d into c classes
    let inf = f64::INFINITY;
    let mut best = vec![vec![inf; d + 1]; k + 1];
    best[0][d] = 0.0;
    for c in 1..=k {
        for i in (0..d).rev() {
            if d - i < c {
                continue;
            }
            let mut b = inf;
            for j in (i + 1)..=(d - c + 1) {
                let v = cost.ssd(i, j) + best[c - 1][j];
                if v < b {
                    b = v;
                }
            }
            best[c][i] = b;
        }
    }

    let total = best[k][0];
    let scale = cost.ssd(0, d);
    // forward reconstruction taking the earliest optimal class end
    let mut thresholds = Vec::with_capacity(k - 1);
    let mut i = 0;
    for c in (2..=k).rev() {
        let target = best[c][i];
        let j = ((i + 1)..=(d - c + 1))
            .find(|&j| ties(cost.ssd(i, j) + best[c - 1][j], target, scale))
            .expect("optimal split exists");
        thresholds.push(xs[j - 1]);
        i = j;
    }

    let labels = assign_categories(values, &thresholds);
    let mut breaks = category_summary(&labels, &thresholds)?;
    breaks.lower_bound = xs.first().copied();
    breaks.upper_bound = xs.last().copied();
    breaks.objective = Some(total);
    Ok(breaks)
}

/// Map each value to `k` with `δ_{k-1} < v ≤ δ_k` (open outer intervals).
///
/// Values equal to a threshold fall in the lower category.
pub fn assign_categories(values: &[f64], thresholds: &[f64]) -> Vec<u32> {
    values
        .iter()
        .map(|&v| thresholds.partition_point(|&t| t < v) as u32 + 1)
        .collect()
}

pub fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.windows(2).all(|w| w[0] < w[1]) && thresholds.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonMonotoneThresholds)
    }
}

/// Per-category counts and shares for labels produced with `thresholds`.
pub fn category_summary(labels: &[u32], thresholds: &[f64]) -> Result<Breaks> {
    check_thresholds(thresholds)?;
    let k = thresholds.len() + 1;
    let mut counts = vec![0usize; k];
    for (row, &y) in labels.iter().enumerate() {
        if y == 0 || y as usize > k {
            return Err(Error::LabelOutOfRange {
                row,
                label: y.to_string(),
                k,
            });
        }
        counts[y as usize - 1] += 1;
    }
    let n = labels.len();
    let shares = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    Ok(Breaks {
        thresholds: thresholds.to_vec(),
        lower_bound: None,
        upper_bound: None,
        category_counts: counts,
        category_shares: shares,
        objective: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_clear_groups() {
        let b = jenks_breaks(&[1.0, 2.0, 10.0, 11.0], 2).unwrap();
        assert_eq!(b.thresholds, vec![2.0]);
        assert_eq!(b.category_counts, vec![2, 2]);
        assert!((b.objective.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!((b.lower_bound, b.upper_bound), (Some(1.0), Some(11.0)));
    }

    #[test]
    fn outlier_gets_its_own_class() {
        let b = jenks_breaks(&[1.0, 2.0, 3.0, 100.0], 2).unwrap();
        assert_eq!(b.thresholds, vec![3.0]);
    }

    #[test]
    fn single_class() {
        let b = jenks_breaks(&[5.0, 5.0, 5.0], 1).unwrap();
        assert!(b.thresholds.is_empty());
        assert_eq!(b.category_counts, vec![3]);
        assert_eq!(b.objective, Some(0.0));
    }

    #[test]
    fn tie_prefers_smaller_first_threshold() {
        // {1},{2,3} and {1,2},{3} both cost 0.5
        let b = jenks_breaks(&[3.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(b.thresholds, vec![1.0]);
    }

    #[test]
    fn duplicates_never_straddle_a_break() {
        let b = jenks_breaks(&[1.0, 1.0, 1.0, 2.0, 9.0, 9.0], 3).unwrap();
        assert_eq!(b.thresholds, vec![1.0, 2.0]);
        assert_eq!(b.category_counts, vec![3, 1, 2]);
    }

    #[test]
    fn too_few_distinct() {
        assert!(matches!(
            jenks_breaks(&[1.0, 1.0, 2.0], 3),
            Err(Error::TooFewDistinct { k: 3, found: 2 })
        ));
    }

    #[test]
    fn wait_time_cuts() {
        let labels = assign_categories(&[3.0, 5.0, 5.1, 20.0, 33.0], &[5.0, 20.0]);
        assert_eq!(labels, vec![1, 1, 2, 2, 3]);
        assert_eq!(assign_categories(&[10.0], &[7.8, 15.3, 26.0, 41.4]), vec![2]);
        assert!(assign_categories(&[], &[1.0]).is_empty());
    }

    #[test]
    fn summary_shares() {
        let b = category_summary(&[1, 1, 2, 3], &[5.0, 20.0]).unwrap();
        assert_eq!(b.category_counts, vec![2, 1, 1]);
        assert_eq!(b.category_shares, vec![0.5, 0.25, 0.25]);
        let all_low = category_summary(&[1, 1, 1], &[5.0, 20.0]).unwrap();
        assert_eq!(all_low.category_shares, vec![1.0, 0.0, 0.0]);
        assert!(category_summary(&[1], &[5.0, 5.0]).is_err());
        assert!(category_summary(&[4], &[5.0, 20.0]).is_err());
    }

    #[test]
    fn objective_is_permutation_invariant() {
        let v = [4.0, 8.5, 1.0, 1.5, 9.0, 3.2, 7.7, 0.1];
        let mut r = v;
        r.reverse();
        let a = jenks_breaks(&v, 3).unwrap();
        let b = jenks_breaks(&r, 3).unwrap();
        assert_eq!(a.thresholds, b.thresholds);
        assert_eq!(a.objective, b.objective);
    }
}
