//! Small numerical building blocks shared by the model modules.

use statrs::distribution::{ContinuousCDF, Normal};

/// Neumaier-compensated accumulator.
///
/// Sums are order dependent; callers that need reproducibility across thread
/// counts must feed values in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Bisection for a root of `f` on `[lo, hi]` where `f(lo)` and `f(hi)` have
/// opposite signs. Stops when the bracket is narrower than `x_tol` (absolute)
/// or after `max_iter` halvings.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, x_tol: f64, max_iter: usize) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if !(f_lo.signum() != f_hi.signum()) || f_lo.is_nan() || f_hi.is_nan() {
        return None;
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= x_tol {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Bisection in `ln x` for a root on the positive half-line, `[lo, hi]` with `lo > 0`.
/// The relative bracket width at exit is at most `rel_tol`.
pub fn bisect_log<F>(mut f: F, lo: f64, hi: f64, rel_tol: f64, max_iter: usize) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    debug_assert!(lo > 0.0 && hi > lo);
    bisect(|z| f(z.exp()), lo.ln(), hi.ln(), rel_tol, max_iter).map(f64::exp)
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile. For probabilities near one pass the complement
/// through [`norm_quantile_upper`] instead to avoid cancellation.
pub fn norm_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// `Φ⁻¹(1 − q)` computed from the upper-tail mass `q`.
pub fn norm_quantile_upper(q: f64) -> f64 {
    -std_normal().inverse_cdf(q)
}

/// `ln(mean(exp(e_i)))` without overflow. Returns `-inf` for an empty slice.
pub fn log_mean_exp(exponents: &[f64]) -> f64 {
    if exponents.is_empty() {
        return f64::NEG_INFINITY;
    }
    let m = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s = compensated_sum(exponents.iter().map(|e| (e - m).exp()));
    m + (s / exponents.len() as f64).ln()
}

/// `n` log-spaced points covering `[lo, hi]` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `n` equally spaced points covering `[lo, hi]` inclusive.
pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1.0e16];
        v.extend(std::iter::repeat_n(1.0, 1000));
        v.push(-1.0e16);
        assert_eq!(compensated_sum(v.iter().copied()), 1000.0);
        let naive: f64 = v.iter().sum();
        assert_ne!(naive, 1000.0);
    }

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0, 1e-12, 100).is_none());
    }

    #[test]
    fn bisect_log_spans_many_decades() {
        let r = bisect_log(|x| x.ln() - 30.0, 1e-12, 1e30, 1e-14, 400).unwrap();
        assert!((r / 30f64.exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_quantiles_are_consistent() {
        assert!((norm_cdf(norm_quantile(2.0 / 3.0)) - 2.0 / 3.0).abs() < 1e-14);
        let q = 1e-15;
        let x = norm_quantile_upper(q);
        assert!(x > 7.9 && x < 8.0);
        assert!((norm_cdf(-x) / q - 1.0).abs() < 1e-6);
    }

    #[test]
    fn log_mean_exp_handles_large_exponents() {
        let v = [1000.0, 1000.0];
        assert!((log_mean_exp(&v) - 1000.0).abs() < 1e-12);
        let w = [0.0, 2f64.ln()];
        assert!((log_mean_exp(&w) - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn spaces_hit_endpoints() {
        let g = log_space(1e-8, 1e8, 200);
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 1e-8);
        assert_eq!(g[199], 1e8);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(lin_space(0.0, 1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
