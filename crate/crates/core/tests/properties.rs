mod common;

use common::{random_case, random_case_with, rel_close};
use hrem::diagnostics::{event_probabilities, event_ranks, recall_from_ranks, surprise_matrix, Scorer};
use hrem::event_data::{
    assemble, parse_covariates, read_events_csv, validate, write_covariates_json, write_events_csv, ActorIndex,
    Event, EventHistory, LoadOptions, Violation,
};
use hrem::inference::{
    run_collapsed_sampler, run_parallel_tempering, Hyperparams, SamplerConfig, TemperingConfig,
};
use hrem::likelihood::{loglik_full, loglik_gradient, loglik_hessian, loglik_naive, loglik_order};
use hrem::simulate::next_event_probabilities;
use hrem::statistics::{replay, Direction, ReplayStep, SeqState, StatisticSpec, StatisticsError, UniqueStatTable};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn io_round_trip(seed in any::<u64>()) {
        let c = random_case(seed);
        let actors = ActorIndex::numeric(c.risk.n_actors(), c.risk.broadcast().is_some());
        let mut csv = Vec::new();
        write_events_csv(&mut csv, &c.history, &actors).unwrap();
        let mut json = Vec::new();
        write_covariates_json(&mut json, &c.history, &c.cov, &actors, false).unwrap();

        let raw = read_events_csv(csv.as_slice()).unwrap();
        let doc = parse_covariates(json.as_slice()).unwrap();
        let opts = LoadOptions { sequence_id: "case".into(), ..Default::default() };
        let loaded = assemble(raw, Some(doc), &opts).unwrap();
        prop_assert_eq!(&loaded.history, &c.history);
        prop_assert_eq!(&loaded.covariates, &c.cov);
        prop_assert_eq!(&loaded.risk, &c.risk);
        prop_assert_eq!(&loaded.actors, &actors);
    }

    #[test]
    fn generated_histories_validate(seed in any::<u64>()) {
        let c = random_case(seed);
        let report = validate(&c.history, &c.risk, &c.cov);
        prop_assert!(report.is_empty(), "{}", report);
    }

    #[test]
    fn validate_flags_broken_histories(seed in any::<u64>(), which in 0usize..4) {
        let c = random_case(seed);
        prop_assume!(c.history.len() >= 2);
        let mut events = c.history.events().to_vec();
        let n = c.risk.n_nodes();
        let expected = match which {
            0 => {
                events[1].time = events[0].time;
                Violation::NotIncreasing { index: 1 }
            }
            1 => {
                events[0].recipient = events[0].sender;
                Violation::ReflexiveEvent { index: 0 }
            }
            2 => {
                let last = events.len() - 1;
                events[last].time = c.history.tau() + 1.0;
                Violation::OutsideWindow { index: last }
            }
            _ => {
                events[0].recipient = n + 3;
                Violation::UnknownActor { index: 0 }
            }
        };
        let broken = EventHistory::new(events, c.history.tau(), c.history.n_actors(), "broken");
        let report = validate(&broken, &c.risk, &c.cov);
        prop_assert!(report.violations.contains(&expected), "{:?} not in {}", expected, report);
    }

    #[test]
    fn incremental_state_matches_direct_counts(seed in any::<u64>()) {
        let c = random_case(seed);
        let n = c.risk.n_nodes();
        let events = c.history.events();
        let mut state = SeqState::start(n, &c.cov);
        for (m, e) in events.iter().enumerate() {
            state.apply(e, &c.cov).unwrap();
            prop_assert_eq!(&state, &SeqState::replayed(n, &events[..=m], &c.cov).unwrap());
        }
        // oracle: recount and rescan the history
        let seen = &events[..];
        for i in 0..n {
            for j in 0..n {
                let count = seen.iter().filter(|e| e.dyad() == (i, j)).count() as u32;
                prop_assert_eq!(state.count(i, j), count);
                prop_assert_eq!(state.recency_rank(Direction::Send, i, j), oracle_rank(seen, i, j, true));
                prop_assert_eq!(state.recency_rank(Direction::Receive, j, i), oracle_rank(seen, j, i, false));
            }
        }
        prop_assert_eq!(state.last_event(), events.last().map(Event::dyad));
    }

    #[test]
    fn table_totals(seed in any::<u64>()) {
        let c = random_case(seed);
        let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
        let t = UniqueStatTable::build(&spec, &c.history, &c.risk, &c.cov).unwrap();
        let q: f64 = t.q().iter().sum();
        let m: f64 = t.m().iter().sum();
        prop_assert_eq!(q as usize, c.history.len());
        prop_assert!(rel_close(m, c.risk.len() as f64 * c.history.tau(), 1e-12));
        let mut seen = std::collections::HashSet::new();
        for v in t.vectors() {
            let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
            prop_assert!(seen.insert(key), "duplicate row");
        }
    }

    #[test]
    fn cached_loglik_matches_naive(seed in any::<u64>()) {
        let c = random_case_with(seed, seed % 2 == 0);
        let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
        let t = UniqueStatTable::build(&spec, &c.history, &c.risk, &c.cov).unwrap();
        let a = loglik_full(&c.beta, &t).unwrap();
        let b = loglik_naive(&c.beta, &c.history, &spec, &c.risk, &c.cov).unwrap();
        prop_assert!(rel_close(a, b, 1e-10), "{} vs {}", a, b);
    }

    #[test]
    fn loglik_invariant_to_effect_order(seed in any::<u64>()) {
        let c = random_case(seed);
        let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
        let mut effects = c.spec.effects().to_vec();
        effects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        let permuted = StatisticSpec::new(effects).unwrap().bind(&c.cov, &c.risk).unwrap();
        let beta2: Vec<f64> = permuted
            .names()
            .iter()
            .map(|n| c.beta[spec.names().iter().position(|m| m == n).unwrap()])
            .collect();
        let t1 = UniqueStatTable::build(&spec, &c.history, &c.risk, &c.cov).unwrap();
        let t2 = UniqueStatTable::build(&permuted, &c.history, &c.risk, &c.cov).unwrap();
        let (a, b) = (loglik_full(&c.beta, &t1).unwrap(), loglik_full(&beta2, &t2).unwrap());
        prop_assert!(rel_close(a, b, 1e-10), "{} vs {}", a, b);
    }

    #[test]
    fn hessian_negative_semidefinite(seed in any::<u64>()) {
        let c = random_case(seed);
        let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
        let t = UniqueStatTable::build(&spec, &c.history, &c.risk, &c.cov).unwrap();
        let p = t.dim();
        let h = loglik_hessian(&c.beta, &t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = h.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for _ in 0..5 {
            let x: Vec<f64> = (0..p).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let mut quad = 0.0;
            for a in 0..p {
                for b in 0..p {
                    quad += x[a] * h[a * p + b] * x[b];
                }
            }
            prop_assert!(quad <= 1e-10 * scale, "x'Hx = {}", quad);
        }
        for a in 0..p {
            for b in 0..p {
                prop_assert!(rel_close(h[a * p + b], h[b * p + a], 1e-12));
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        let c = random_case(seed);
        let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
        let t = UniqueStatTable::build(&spec, &c.history, &c.risk, &c.cov).unwrap();
        let (ll, g) = loglik_gradient(&c.beta, &t).unwrap();
        prop_assert!(rel_close(ll, loglik_full(&c.beta, &t).unwrap(), 1e-12));
        let h = 1e-6;
        for p in 0..t.dim() {
            let mut up = c.beta.clone();
            let mut down = c.beta.clone();
            up[p] += h;
            down[p] -= h;
            let fd = (loglik_full(&up, &t).unwrap() - loglik_full(&down, &t).unwrap()) / (2.0 * h);
            let tol = 1e-5 * (ll.abs().max(1.0) / h).min(1e3).max(1.0) * g[p].abs().max(1.0);
            prop_assert!((fd - g[p]).abs() <= tol, "effect {}: {} vs {}", p, fd, g[p]);
        }
    }

    #[test]
    fn order_loglik_is_sum_of_log_probabilities(seed in any::<u64>()) {
        let c = random_case(seed);
        let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
        let ll = loglik_order(&c.beta, &c.history, &spec, &c.risk, &c.cov).unwrap();
        let probs = event_probabilities(&c.beta, &c.history, &spec, &c.risk, &c.cov).unwrap();
        prop_assert_eq!(probs.len(), c.history.len());
        prop_assert!(probs.iter().all(|&p| p > 0.0 && p <= 1.0));
        let sum: f64 = probs.iter().map(|p| p.ln()).sum();
        prop_assert!(ll <= 0.0);
        prop_assert!(rel_close(ll, sum, 1e-10));
    }

    #[test]
    fn next_event_probabilities_sum_to_one(seed in any::<u64>()) {
        let c = random_case(seed);
        let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
        let mut total_err = 0.0f64;
        replay::<StatisticsError, _>(&c.history, &c.cov, c.risk.n_nodes(), |step| {
            if let ReplayStep::Event { state, .. } = step {
                let p = next_event_probabilities(&c.beta, &spec, state, &c.risk);
                assert_eq!(p.len(), c.risk.len());
                assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
                total_err = total_err.max((p.iter().sum::<f64>() - 1.0).abs());
            }
            Ok(())
        }).unwrap();
        prop_assert!(total_err < 1e-12);
    }

    #[test]
    fn recall_is_monotone_in_z(seed in any::<u64>()) {
        let c = random_case(seed);
        prop_assume!(!c.history.is_empty());
        let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = c.history.len() / 2;
        let ranks = event_ranks(Scorer::Model(&c.beta), &c.history, start, &spec, &c.risk, &c.cov, &mut rng).unwrap();
        prop_assert!(ranks.iter().all(|&r| r >= 1 && r <= c.risk.len()));
        let recalls: Vec<f64> = (1..=c.risk.len()).map(|z| recall_from_ranks(&ranks, z)).collect();
        prop_assert!(recalls.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*recalls.last().unwrap(), 1.0);
    }

    #[test]
    fn surprise_shares_are_proportions(seed in any::<u64>(), threshold in 1usize..10) {
        let c = random_case(seed);
        let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = surprise_matrix(&c.beta, &c.history, &spec, &c.risk, &c.cov, threshold, &mut rng).unwrap();
        prop_assert_eq!(s.entries.len(), c.risk.len());
        let total: usize = s.entries.iter().map(|e| e.n_events).sum();
        prop_assert_eq!(total, c.history.len());
        for e in &s.entries {
            prop_assert!(e.n_surprising <= e.n_events);
            match e.q {
                Some(q) => prop_assert!((0.0..=1.0).contains(&q)),
                None => prop_assert_eq!(e.n_events, 0),
            }
        }
    }
}

// 1 / rank of `j` among the distinct most recent partners of `i`.
fn oracle_rank(events: &[Event], i: usize, j: usize, sending: bool) -> f64 {
    let mut partners = Vec::new();
    for e in events.iter().rev() {
        let (a, b) = if sending { (e.sender, e.recipient) } else { (e.recipient, e.sender) };
        if a == i && !partners.contains(&b) {
            partners.push(b);
        }
    }
    partners.iter().position(|&b| b == j).map_or(0.0, |k| 1.0 / (k + 1) as f64)
}

// With every temperature equal to 1, each chain targets the posterior and
// every swap is accepted; the base chain must reproduce the collapsed
// sampler's moments.
#[test]
fn flat_ladder_matches_collapsed_moments() {
    let c = random_case(7);
    let spec = c.spec.bind(&c.cov, &c.risk).unwrap();
    let mut tables = Vec::new();
    for s in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
        let h = common::random_history(&c.risk, 30, c.history.tau(), &mut rng, "h");
        tables.push(UniqueStatTable::build(&spec, &h, &c.risk, &c.cov).unwrap());
    }
    let hyper = Hyperparams::default();
    let cfg = SamplerConfig {
        n_burnin: 300,
        n_keep: 3000,
        seed: 11,
        ..Default::default()
    };
    let tempering = TemperingConfig {
        ladder: vec![1.0, 1.0, 1.0],
        t_swap: 5,
    };
    let pt = run_parallel_tempering(&tables, &hyper, &tempering, &cfg).unwrap();
    let swaps = pt.swaps.as_ref().unwrap();
    assert!(swaps.acceptance_rates().iter().all(|&r| r == 1.0), "{swaps:?}");
    let gibbs = run_collapsed_sampler(&tables, &hyper, &cfg).unwrap();

    for p in 0..tables[0].dim() {
        for k in 0..tables.len() {
            let (a, b) = (pt.beta_series(k, p), gibbs.beta_series(k, p));
            let (ma, mb) = (mean(&a), mean(&b));
            let se = (var(&a) / hrem::inference::effective_sample_size(&a)
                + var(&b) / hrem::inference::effective_sample_size(&b))
            .sqrt();
            assert!((ma - mb).abs() < 5.0 * se + 0.02, "beta[{k}][{p}]: {ma} vs {mb} (se {se})");
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}
