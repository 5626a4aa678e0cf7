use std::collections::HashMap;

use super::{replay, BoundSpec, ReplayStep, StatisticsError};
use crate::event_data::{CovariateSet, EventHistory, RiskSet};

/// Distinct statistic vectors `U_r` of one sequence with the number of
/// observed events `q_r` carrying each vector and the total dyad-time
/// exposure `m_r` spent at it.
///
/// The log-likelihood reduces to `sum_r q_r U_r'b - m_r exp(U_r'b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueStatTable {
    dim: usize,
    vectors: Vec<f64>,
    q: Vec<f64>,
    m: Vec<f64>,
    n_events: usize,
    n_dyads: usize,
    tau: f64,
}

impl UniqueStatTable {
    pub fn build(
        spec: &BoundSpec,
        history: &EventHistory,
        risk: &RiskSet,
        cov: &CovariateSet,
    ) -> Result<Self, StatisticsError> {
        let p = spec.dim();
        let mut builder = Builder {
            dim: p,
            index: HashMap::new(),
            vectors: Vec::new(),
            q: Vec::new(),
            m: Vec::new(),
            key: vec![0; p],
        };
        let mut rows = Vec::new();
        let mut single = vec![0.0; p];
        replay::<StatisticsError, _>(history, cov, risk.n_nodes(), |step| {
            match step {
                ReplayStep::Exposure { state, duration, .. } => {
                    if duration > 0.0 {
                        spec.eval_all(state, risk, &mut rows);
                        for row in rows.chunks_exact(p) {
                            let r = builder.slot(row);
                            builder.m[r] += duration;
                        }
                    }
                }
                ReplayStep::Event { state, event, .. } => {
                    spec.eval_into(state, event.sender, event.recipient, &mut single);
                    let r = builder.slot(&single);
                    builder.q[r] += 1.0;
                }
            }
            Ok(())
        })?;
        Ok(Self {
            dim: p,
            vectors: builder.vectors,
            q: builder.q,
            m: builder.m,
            n_events: history.len(),
            n_dyads: risk.len(),
            tau: history.tau(),
        })
    }

    /// A table with no rows: its log-likelihood is identically zero, so a
    /// sampler run on it draws from the prior.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            vectors: Vec::new(),
            q: Vec::new(),
            m: Vec::new(),
            n_events: 0,
            n_dyads: 0,
            tau: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn vector(&self, r: usize) -> &[f64] {
        &self.vectors[r * self.dim..(r + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.chunks_exact(self.dim)
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_dyads(&self) -> usize {
        self.n_dyads
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Linear predictors `U_r'beta` for every row.
    pub fn linear_predictors(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.dim, "parameter dimension mismatch");
        self.vectors()
            .map(|u| u.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Column `p` of the table.
    pub fn column(&self, p: usize) -> Vec<f64> {
        self.vectors().map(|u| u[p]).collect()
    }
}

struct Builder {
    dim: usize,
    index: HashMap<Box<[u64]>, usize>,
    vectors: Vec<f64>,
    q: Vec<f64>,
    m: Vec<f64>,
    key: Vec<u64>,
}

impl Builder {
    fn slot(&mut self, row: &[f64]) -> usize {
        for (k, &x) in self.key.iter_mut().zip(row) {
            // -0.0 and 0.0 are the same statistic value
            *k = if x == 0.0 { 0 } else { x.to_bits() };
        }
        if let Some(&r) = self.index.get(&self.key[..]) {
            return r;
        }
        let r = self.q.len();
        self.index.insert(self.key.clone().into_boxed_slice(), r);
        self.vectors.extend(row.iter().map(|&x| if x == 0.0 { 0.0 } else { x }));
        self.q.push(0.0);
        self.m.push(0.0);
        debug_assert_eq!(self.vectors.len(), self.q.len() * self.dim);
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::{build_risk_set, Event};
    use crate::statistics::{Effect, PShift, StatisticSpec};

    #[test]
    fn intercept_only_table_has_one_row() {
        let risk = build_risk_set(3, false).unwrap();
        let cov = CovariateSet::new(3);
        let spec = StatisticSpec::new(vec![Effect::Baserate]).unwrap().bind(&cov, &risk).unwrap();
        let h = EventHistory::new(
            vec![Event::new(0.3, 0, 1), Event::new(0.9, 1, 2), Event::new(1.4, 2, 0)],
            2.0,
            3,
            "s",
        );
        let t = UniqueStatTable::build(&spec, &h, &risk, &cov).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.q(), &[3.0]);
        assert!((t.m()[0] - 6.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn reciprocity_table_on_two_actors() {
        let risk = build_risk_set(2, false).unwrap();
        let cov = CovariateSet::new(2);
        let spec = StatisticSpec::new(vec![Effect::Baserate, Effect::pshift(PShift::AbBa)])
            .unwrap()
            .bind(&cov, &risk)
            .unwrap();
        let h = EventHistory::new(
            vec![Event::new(0.5, 0, 1), Event::new(1.0, 1, 0), Event::new(1.5, 1, 0)],
            2.0,
            2,
            "s",
        );
        let t = UniqueStatTable::build(&spec, &h, &risk, &cov).unwrap();
        assert!(t.len() <= 2);
        assert_eq!(t.q().iter().sum::<f64>(), 3.0);
        assert!((t.m().iter().sum::<f64>() - 4.0).abs() < 1e-12);
        // second event reciprocates, third repeats
        let with_pshift = (0..t.len()).find(|&r| t.vector(r)[1] == 1.0).unwrap();
        assert_eq!(t.q()[with_pshift], 1.0);
    }
}
