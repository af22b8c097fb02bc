//! Small statistics helpers used by the analyses: Pearson and Spearman
//! correlation, and a one-sided Mann–Whitney rank-sum test.

use crate::error::{Error, Result};

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("pearson", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::Undefined("pearson needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("pearson: zero variance input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Midranks (average rank for ties), 1-based.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson over midranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("spearman", x.len(), y.len()));
    }
    pearson(&ranks(x), &ranks(y))
}

/// One-sided Mann–Whitney U test p-value for the alternative "x is
/// stochastically less than y", with the normal approximation and tie
/// correction.
pub fn rank_sum_p_less(x: &[f64], y: &[f64]) -> Result<f64> {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Undefined("rank_sum on empty sample".into()));
    }
    let mut all: Vec<f64> = Vec::with_capacity(n1 + n2);
    all.extend_from_slice(x);
    all.extend_from_slice(y);
    let r = ranks(&all);
    let r1: f64 = r[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let n = (n1 + n2) as f64;
    let mean = (n1 * n2) as f64 / 2.0;
    // Tie correction to the variance.
    let mut sorted = all.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Err(Error::Undefined("rank_sum: zero variance (all ties)".into()));
    }
    // Continuity-corrected z for P(U <= u1).
    let z = (u1 + 0.5 - mean) / var.sqrt();
    Ok(normal_cdf(z))
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Abramowitz–Stegun 7.1.26-style erfc approximation (|error| < 1.5e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Piecewise-linear interpolation of y at `x0` over (x, y) samples, after
/// sorting by x. Clamps outside the sampled range.
pub fn interp_at(points: &[(f64, f64)], x0: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Undefined("interp_at on empty points".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if x0 <= pts[0].0 {
        return Ok(pts[0].1);
    }
    if x0 >= pts[pts.len() - 1].0 {
        return Ok(pts[pts.len() - 1].1);
    }
    for w in pts.windows(2) {
        let (x1, y1) = w[0];
        let (x2, y2) = w[1];
        if x0 >= x1 && x0 <= x2 {
            if x2 == x1 {
                return Ok((y1 + y2) / 2.0);
            }
            let t = (x0 - x1) / (x2 - x1);
            return Ok(y1 + t * (y2 - y1));
        }
    }
    unreachable!("x0 bracketed by construction");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_perfect_and_inverse() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let yn = [8.0, 6.0, 4.0, 2.0];
        assert!((pearson(&x, &yn).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_hand_value() {
        // Verified by direct computation of the closed form.
        let x = [1.0, 2.0, 3.0, 5.0];
        let y = [2.0, 1.0, 4.0, 6.0];
        let r = pearson(&x, &y).unwrap();
        assert!((r - 0.902_243_638_678).abs() < 1e-9, "r = {r}");
    }

    #[test]
    fn spearman_is_rank_based() {
        // Monotone but nonlinear relation has Spearman exactly 1.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 8.0, 27.0, 64.0, 125.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties() {
        let r = ranks(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn rank_sum_detects_a_clear_shift() {
        let lo: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let hi: Vec<f64> = (0..30).map(|i| 10.0 + i as f64 * 0.1).collect();
        let p = rank_sum_p_less(&lo, &hi).unwrap();
        assert!(p < 1e-6, "p = {p}");
        let p_rev = rank_sum_p_less(&hi, &lo).unwrap();
        assert!(p_rev > 0.99, "p_rev = {p_rev}");
    }

    #[test]
    fn interp_midpoint_and_clamping() {
        let pts = [(0.0, 0.0), (1.0, 10.0), (2.0, 30.0)];
        assert_eq!(interp_at(&pts, 0.5).unwrap(), 5.0);
        assert_eq!(interp_at(&pts, 1.5).unwrap(), 20.0);
        assert_eq!(interp_at(&pts, -1.0).unwrap(), 0.0);
        assert_eq!(interp_at(&pts, 5.0).unwrap(), 30.0);
    }
}
