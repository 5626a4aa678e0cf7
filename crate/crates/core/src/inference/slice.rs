use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::InferenceError;

const MAX_STEPS_OUT: u32 = 64;
const MAX_SHRINKS: u32 = 200;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SliceStats {
    pub expansions: u32,
    pub shrinks: u32,
}

fn eval<F: FnMut(f64) -> f64>(f: &mut F, x: f64) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// One univariate slice-sampling update with stepping-out and shrinkage.
///
/// `logf0` may pass the already known target value at `x0`. Returns the new
/// point and the target value there.
pub fn slice_step<R, F>(
    x0: f64,
    logf0: Option<f64>,
    mut logf: F,
    width: f64,
    rng: &mut R,
) -> Result<(f64, f64, SliceStats), InferenceError>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let f0 = match logf0 {
        Some(v) => v,
        None => eval(&mut logf, x0),
    };
    if !f0.is_finite() {
        return Err(InferenceError::SliceStart(x0));
    }
    let e: f64 = Exp1.sample(rng);
    let level = f0 - e;
    let mut stats = SliceStats::default();

    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    let mut j = (MAX_STEPS_OUT as f64 * rng.random::<f64>()) as u32;
    let mut k = MAX_STEPS_OUT - 1 - j;
    while j > 0 && eval(&mut logf, lo) > level {
        lo -= width;
        j -= 1;
        stats.expansions += 1;
    }
    while k > 0 && eval(&mut logf, hi) > level {
        hi += width;
        k -= 1;
        stats.expansions += 1;
    }

    loop {
        let x1 = lo + (hi - lo) * rng.random::<f64>();
        let f1 = eval(&mut logf, x1);
        if f1 > level {
            return Ok((x1, f1, stats));
        }
        stats.shrinks += 1;
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
        if stats.shrinks >= MAX_SHRINKS || hi - lo <= f64::EPSILON * x0.abs().max(1.0) {
            // interval collapsed onto x0, which is always in the slice
            return Ok((x0, f0, stats));
        }
    }
}

/// One slice-sampling update of a scalar coefficient.
pub fn slice_sample_beta<R, F>(current: f64, target: F, width: f64, rng: &mut R) -> Result<f64, InferenceError>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    slice_step(current, None, target, width, rng).map(|(x, _, _)| x)
}

/// Burn-in width tuning: every 10 updates, double the width when stepping
/// out dominates and halve it when shrinkage dominates.
#[derive(Debug, Clone)]
pub(crate) struct AdaptiveWidth {
    pub width: f64,
    n: u32,
    expansions: u32,
    shrinks: u32,
}

impl AdaptiveWidth {
    pub fn new(width: f64) -> Self {
        Self {
            width,
            n: 0,
            expansions: 0,
            shrinks: 0,
        }
    }

    pub fn record(&mut self, stats: SliceStats) {
        self.n += 1;
        self.expansions += stats.expansions;
        self.shrinks += stats.shrinks;
        if self.n == 10 {
            if self.expansions > 10 {
                self.width *= 2.0;
            } else if self.shrinks > 10 {
                self.width /= 2.0;
            }
            self.width = self.width.clamp(1e-6, 1e6);
            self.n = 0;
            self.expansions = 0;
            self.shrinks = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
    }

    fn run(width: f64, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, 0);
        let mut x = 0.0;
        (0..100_000)
            .map(|_| {
                x = slice_sample_beta(x, |v| -0.5 * v * v, width, &mut r).unwrap();
                x
            })
            .collect()
    }

    #[test]
    fn standard_normal_moments() {
        let (m, v) = moments(&run(1.0, 3));
        assert!(m.abs() < 0.02, "{m}");
        assert!((v - 1.0).abs() < 0.03, "{v}");
    }

    #[test]
    fn width_does_not_change_target() {
        let (m1, v1) = moments(&run(0.5, 4));
        let (m2, v2) = moments(&run(4.0, 5));
        assert!((m1 - m2).abs() < 0.04);
        assert!((v1 - v2).abs() < 0.05);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let mut r = rng::stream(1, 0);
        let out = slice_sample_beta(2.0, |v| if v > 1.0 { f64::NEG_INFINITY } else { 0.0 }, 1.0, &mut r);
        assert!(matches!(out, Err(InferenceError::SliceStart(_))));
    }

    #[test]
    fn adaptation_moves_toward_the_scale() {
        let mut a = AdaptiveWidth::new(1.0);
        for _ in 0..10 {
            a.record(SliceStats { expansions: 5, shrinks: 0 });
        }
        assert_eq!(a.width, 2.0);
        for _ in 0..10 {
            a.record(SliceStats { expansions: 0, shrinks: 4 });
        }
        assert_eq!(a.width, 1.0);
    }
}
