//! Single-chain convergence summaries.

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Potential scale reduction from the two halves of one chain.
///
/// A constant chain gives 1. Fewer than 4 draws give NaN.
pub fn split_rhat(series: &[f64]) -> f64 {
    let half = series.len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let a = &series[..half];
    let b = &series[series.len() - half..];
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let n = half as f64;
    let w = 0.5 * (va + vb);
    let grand = 0.5 * (ma + mb);
    let between = n * ((ma - grand).powi(2) + (mb - grand).powi(2));
    if w == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + between / n;
    (var_plus / w).sqrt()
}

/// Effective sample size with Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let m = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let acov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let g0 = acov(0);
    if g0 <= 0.0 {
        return n as f64;
    }
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (acov(lag) + acov(lag + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    (n as f64 / tau.max(1e-12)).min(n as f64 * (n as f64).log10().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn iid_draws_are_well_mixed() {
        let mut r = rng::stream(9, 0);
        let xs: Vec<f64> = (0..4000).map(|_| StandardNormal.sample(&mut r)).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 3000.0 && ess < 5500.0, "{ess}");
        assert!((split_rhat(&xs) - 1.0).abs() < 0.02);
    }

    #[test]
    fn autocorrelated_chain_has_small_ess() {
        // AR(1) with phi = 0.9: ESS ~ n (1 - phi) / (1 + phi)
        let mut r = rng::stream(10, 0);
        let mut x = 0.0;
        let xs: Vec<f64> = (0..20_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                x = 0.9 * x + z;
                x
            })
            .collect();
        let ess = effective_sample_size(&xs);
        let expected = 20_000.0 * 0.1 / 1.9;
        assert!((ess / expected - 1.0).abs() < 0.3, "{ess} vs {expected}");
    }

    #[test]
    fn drifting_chain_fails_rhat() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
        assert!(split_rhat(&xs) > 1.5);
        assert_eq!(split_rhat(&[2.0; 10]), 1.0);
    }
}
