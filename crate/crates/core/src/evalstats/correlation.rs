use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("correlation needs at least two observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(())
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("finite inputs")
}

/// Number of tied pairs in an already sorted sequence.
fn tied_pairs(sorted: impl Iterator<Item = f64>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<f64> = None;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            total += run * (run.saturating_sub(1)) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * (run.saturating_sub(1)) / 2
}

fn distinct(sorted: &[f64]) -> usize {
    let mut n = 0;
    let mut prev: Option<f64> = None;
    for &v in sorted {
        if prev != Some(v) {
            n += 1;
        }
        prev = Some(v);
    }
    n
}

/// Merge sort on `v`, returning the number of inversions (strict `>` pairs).
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Pair counts used by both Kendall variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PairCounts {
    concordant: u64,
    discordant: u64,
    total: u64,
    x_ties: u64,
    y_ties: u64,
    distinct_x: usize,
    distinct_y: usize,
}

/// Knight's O(n log n) pair counting.
fn pair_counts(x: &[f64], y: &[f64]) -> PairCounts {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]).then(cmp(y[a], y[b])));

    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let x_ties = tied_pairs(xs.iter().copied());
    let joint_ties = {
        let mut total = 0u64;
        let mut run = 1u64;
        for w in idx.windows(2) {
            if x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]] {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let discordant = count_inversions(&mut ys, &mut Vec::with_capacity(n));
    // ys is now sorted
    let y_ties = tied_pairs(ys.iter().copied());

    let total = (n as u64) * (n as u64 - 1) / 2;
    let concordant = total + joint_ties - x_ties - y_ties - discordant;
    PairCounts {
        concordant,
        discordant,
        total,
        x_ties,
        y_ties,
        distinct_x: distinct(&xs),
        distinct_y: distinct(&ys),
    }
}

/// Kendall τ_b with the tie-adjusted denominator.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let c = pair_counts(x, y);
    if c.x_ties == c.total || c.y_ties == c.total {
        return Err(Error::UndefinedCorrelation("tau_b: one input is constant".into()));
    }
    let num = c.concordant as f64 - c.discordant as f64;
    let den = ((c.total - c.x_ties) as f64 * (c.total - c.y_ties) as f64).sqrt();
    Ok(num / den)
}

/// Stuart's τ_c with `m = min(distinct x, distinct y)`.
pub fn kendall_tau_c(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let c = pair_counts(x, y);
    let m = c.distinct_x.min(c.distinct_y);
    if m < 2 {
        return Err(Error::UndefinedCorrelation("tau_c: fewer than two distinct values".into()));
    }
    let n = x.len() as f64;
    let m = m as f64;
    let num = c.concordant as f64 - c.discordant as f64;
    Ok(2.0 * m * num / (n * n * (m - 1.0)))
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| cmp(v[a], v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman ρ: Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("spearman: zero rank variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub tau_b: f64,
    pub tau_c: f64,
    pub rho: f64,
    pub n: usize,
}

/// All three statistics of `metric` against `human`.
pub fn correlations(metric: &[f64], human: &[f64]) -> Result<Correlations> {
    Ok(Correlations {
        tau_b: kendall_tau_b(metric, human)?,
        tau_c: kendall_tau_c(metric, human)?,
        rho: spearman_rho(metric, human)?,
        n: metric.len(),
    })
}
