use crate::statistics::UniqueStatTable;

/// Per-sequence linear predictors kept in step with the current
/// coefficients, so a single-coordinate move only touches rows whose
/// statistic is nonzero in that coordinate.
#[derive(Debug, Clone)]
pub(crate) struct SeqCache<'a> {
    table: &'a UniqueStatTable,
    eta: Vec<f64>,
    // per coordinate: (row, u_rp)
    rows: Vec<Vec<(usize, f64)>>,
}

impl<'a> SeqCache<'a> {
    pub fn new(table: &'a UniqueStatTable, beta: &[f64]) -> Self {
        let p = table.dim();
        let mut rows = vec![Vec::new(); p];
        for (r, u) in table.vectors().enumerate() {
            for (c, &x) in u.iter().enumerate() {
                if x != 0.0 {
                    rows[c].push((r, x));
                }
            }
        }
        Self {
            table,
            eta: table.linear_predictors(beta),
            rows,
        }
    }

    /// Recomputes the predictors from scratch to stop rounding drift.
    pub fn reset(&mut self, beta: &[f64]) {
        self.eta = self.table.linear_predictors(beta);
    }

    /// The part of the log-likelihood that depends on coordinate `p`, after
    /// moving it by `delta`.
    pub fn coordinate(&self, p: usize, delta: f64) -> f64 {
        let q = self.table.q();
        let m = self.table.m();
        let mut ll = 0.0;
        for &(r, u) in &self.rows[p] {
            let eta = self.eta[r] + delta * u;
            if q[r] > 0.0 {
                ll += q[r] * eta;
            }
            if m[r] > 0.0 {
                ll -= m[r] * eta.exp();
            }
        }
        ll
    }

    pub fn shift(&mut self, p: usize, delta: f64) {
        for &(r, u) in &self.rows[p] {
            self.eta[r] += delta * u;
        }
    }

    pub fn loglik(&self) -> f64 {
        let q = self.table.q();
        let m = self.table.m();
        let mut ll = 0.0;
        for (r, &eta) in self.eta.iter().enumerate() {
            if q[r] > 0.0 {
                ll += q[r] * eta;
            }
            if m[r] > 0.0 {
                ll -= m[r] * eta.exp();
            }
        }
        ll
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::{build_risk_set, CovariateSet, Event, EventHistory};
    use crate::likelihood::loglik_full;
    use crate::statistics::{Effect, PShift, StatisticSpec};

    #[test]
    fn coordinate_moves_match_full_likelihood() {
        let risk = build_risk_set(3, false).unwrap();
        let cov = CovariateSet::new(3);
        let spec = StatisticSpec::new(vec![Effect::Baserate, Effect::pshift(PShift::AbBa), Effect::RecencySend])
            .unwrap()
            .bind(&cov, &risk)
            .unwrap();
        let h = EventHistory::new(
            vec![
                Event::new(0.2, 0, 1),
                Event::new(0.5, 1, 0),
                Event::new(0.9, 0, 1),
                Event::new(1.3, 2, 0),
            ],
            2.0,
            3,
            "s",
        );
        let table = UniqueStatTable::build(&spec, &h, &risk, &cov).unwrap();
        let mut beta = vec![0.1, -0.4, 0.7];
        let mut cache = SeqCache::new(&table, &beta);
        assert!((cache.loglik() - loglik_full(&beta, &table).unwrap()).abs() < 1e-12);
        for p in 0..3 {
            let before = cache.coordinate(p, 0.0);
            let after = cache.coordinate(p, 0.3);
            let full_before = loglik_full(&beta, &table).unwrap();
            beta[p] += 0.3;
            let full_after = loglik_full(&beta, &table).unwrap();
            assert!(((after - before) - (full_after - full_before)).abs() < 1e-12);
            cache.shift(p, 0.3);
            assert!((cache.loglik() - full_after).abs() < 1e-12);
        }
    }
}
