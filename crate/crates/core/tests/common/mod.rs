#![allow(dead_code)]

use hrem::event_data::{
    build_risk_set, AttrValue, ContextInterval, CovariateSet, Event, EventHistory, RiskSet,
};
use hrem::statistics::{AttrLevel, Effect, PShift, StatisticSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random history with covariates, a spec that binds to it and
/// coefficients.
pub struct Case {
    pub history: EventHistory,
    pub risk: RiskSet,
    pub cov: CovariateSet,
    pub spec: StatisticSpec,
    pub beta: Vec<f64>,
}

pub fn covariates(n: usize, rng: &mut ChaCha8Rng, tau: f64, with_contexts: bool) -> CovariateSet {
    let mut cov = CovariateSet::new(n);
    for a in 0..n {
        let g = if rng.random::<bool>() { "a" } else { "b" };
        cov.set_actor_attr(a, "g", AttrValue::Category(g.into()));
        cov.set_actor_attr(a, "x", AttrValue::Real(rng.random_range(-1.0..1.0)));
    }
    // guarantee both levels
    cov.set_actor_attr(0, "g", AttrValue::Category("a".into()));
    cov.set_actor_attr(1, "g", AttrValue::Category("b".into()));
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < 0.4 {
                cov.set_dyad_attr((i, j), "w", rng.random_range(0.0..3.0));
            }
        }
    }
    cov.set_dyad_attr((0, 1), "w", 1.0);
    if with_contexts {
        let mut starts: Vec<f64> = (0..rng.random_range(1..4)).map(|_| rng.random_range(0.0..tau)).collect();
        starts.sort_by(f64::total_cmp);
        starts.dedup();
        starts.retain(|&s| s > 0.0);
        let mut ctx = vec![ContextInterval {
            start: 0.0,
            label: "c0".into(),
        }];
        for (k, s) in starts.into_iter().enumerate() {
            ctx.push(ContextInterval {
                start: s,
                label: format!("c{}", (k + 1) % 2),
            });
        }
        cov.set_contexts(ctx);
    }
    cov
}

/// `m` events at uniform times on `(0, tau)` over uniformly chosen dyads.
pub fn random_history(risk: &RiskSet, m: usize, tau: f64, rng: &mut ChaCha8Rng, id: &str) -> EventHistory {
    let mut times: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..tau)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let events = times
        .into_iter()
        .filter(|&t| t > 0.0)
        .map(|t| {
            let (i, j) = risk.dyads()[rng.random_range(0..risk.len())];
            Event::new(t, i, j)
        })
        .collect();
    EventHistory::new(events, tau, risk.n_actors(), id)
}

fn effect_pool(broadcast: bool, contexts: bool) -> Vec<Effect> {
    let mut pool = vec![
        Effect::SenderAttr {
            attr: "x".into(),
            level: None,
            reference: None,
        },
        Effect::ReceiverAttr {
            attr: "g".into(),
            level: None,
            reference: None,
        },
        Effect::DyadMatch { attr: "g".into() },
        Effect::DyadValue {
            attr: "w".into(),
            transform: Default::default(),
        },
        Effect::RecencySend,
        Effect::RecencyReceive,
        Effect::product(Effect::RecencySend, Effect::pshift(PShift::AbBa)),
        Effect::DyadCount { power: 1 },
    ];
    pool.extend(PShift::ALL.iter().map(|&k| Effect::pshift(k)));
    if contexts {
        pool.push(Effect::in_context(Effect::Baserate, "c1"));
        pool.push(Effect::in_context(Effect::RecencySend, "c0"));
    }
    if broadcast {
        pool.push(Effect::Broadcast { sender: None });
        pool.push(Effect::Broadcast {
            sender: Some(AttrLevel {
                attr: "g".into(),
                level: "a".into(),
            }),
        });
        pool.push(Effect::PreviousBroadcast { sender: None });
    }
    pool
}

pub fn random_case(seed: u64) -> Case {
    random_case_with(seed, true)
}

/// `force_rich` puts contexts and recency in every spec.
pub fn random_case_with(seed: u64, force_rich: bool) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..7);
    let broadcast = rng.random::<bool>();
    let contexts = force_rich || rng.random::<bool>();
    let tau = rng.random_range(1.0..10.0);
    let risk = build_risk_set(n, broadcast).unwrap();
    let cov = covariates(n, &mut rng, tau, contexts);
    let m = rng.random_range(0..40);
    let history = random_history(&risk, m, tau, &mut rng, "case");

    let mut pool = effect_pool(broadcast, contexts);
    pool.shuffle(&mut rng);
    let take = rng.random_range(1..=pool.len().min(7));
    let mut effects = vec![Effect::Baserate];
    effects.extend(pool.into_iter().take(take));
    if force_rich {
        for e in [Effect::RecencySend, Effect::in_context(Effect::Baserate, "c1")] {
            if !effects.contains(&e) {
                effects.push(e);
            }
        }
    }
    let spec = StatisticSpec::new(effects).unwrap();
    let dim = spec.bind(&cov, &risk).unwrap().dim();
    let beta = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Case {
        history,
        risk,
        cov,
        spec,
        beta,
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
