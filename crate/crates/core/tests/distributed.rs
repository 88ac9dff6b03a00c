use std::collections::HashSet;
use std::sync::Arc;

use distquad::distributed::{
    fair_share_bounds, roles, round_robin_pairs, run_distributed, run_distributed_with_trace, wire,
    Backend, NoRedistribution, RedistributionConfig, RedistributionPolicy, Role, RoundRobin,
    TransferBatch,
};
use distquad::driver::{integrate, DriverConfig, TerminationReason};
use distquad::integrands::{make_integrand, BenchmarkIntegrand, IntegrandId};
use distquad::region::HyperRect;
use proptest::prelude::*;

#[test]
fn matches_single_worker_within_error() {
    for id in IntegrandId::ALL {
        let f = make_integrand(id, 2).unwrap();
        let cfg = DriverConfig::new(1e-6);
        let one = integrate(&f, &HyperRect::unit(2), &cfg).unwrap();
        for p in [2, 3, 5] {
            let m = run_distributed(&f, &HyperRect::unit(2), &cfg, &RedistributionConfig::default(), p)
                .unwrap();
            assert!(m.result.converged, "{id} P={p}");
            let diff = (m.result.integral - one.integral).abs();
            assert!(diff <= m.result.error.max(one.error), "{id} P={p}: {diff:e}");
            assert!(m.conservation.iter().all(|c| c.holds()), "{id} P={p}");
            assert!(m.single_count.iter().all(|s| s.violations == 0), "{id} P={p}");
            let bound = m.converged_error_bound.unwrap();
            assert!(bound >= m.result.error * (1.0 - 1e-12), "{id} P={p}");
        }
    }
}

#[test]
fn one_rank_reproduces_single_worker_exactly() {
    let d = 3;
    let f = make_integrand(IntegrandId::F5, d).unwrap();
    let cfg = DriverConfig::new(1e-7);
    let rcfg = RedistributionConfig { initial_subdomains_per_rank: 2 * d, ..Default::default() };
    let m = run_distributed(&f, &HyperRect::unit(d), &cfg, &rcfg, 1).unwrap();
    assert_eq!(m.result, integrate(&f, &HyperRect::unit(d), &cfg).unwrap());
    assert_eq!(m.regions_transferred(), 0);
}

#[test]
fn simulation_is_reproducible() {
    let f = make_integrand(IntegrandId::F6, 2).unwrap();
    let cfg = DriverConfig::new(1e-6);
    let run = || {
        let mut trace = Vec::new();
        let m = run_distributed_with_trace(
            &f,
            &HyperRect::unit(2),
            &cfg,
            &RedistributionConfig::default(),
            4,
            &mut |r| trace.push(*r),
        )
        .unwrap();
        (m, trace)
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_eq!(ta.len(), a.result.iterations);
}

#[test]
fn concurrent_backend_converges() {
    let f = make_integrand(IntegrandId::F4, 3).unwrap();
    let cfg = DriverConfig::new(1e-6);
    let rcfg = RedistributionConfig { backend: Backend::Concurrent, cap: 64, ..Default::default() };
    let m = run_distributed(&f, &HyperRect::unit(3), &cfg, &rcfg, 4).unwrap();
    assert_eq!(m.backend, "concurrent");
    assert!(m.result.converged);
    let rel = (m.result.integral - f.reference_value()).abs() / f.reference_value();
    assert!(rel <= 1e-5, "rel {rel:e}");
    assert!(m.conservation.iter().all(|c| c.holds()));
    let out: u64 = m.breakdown.iter().map(|b| b.regions_out).sum();
    let inn: u64 = m.breakdown.iter().map(|b| b.regions_in).sum();
    assert_eq!(out, inn);
    assert_eq!(out as usize, m.regions_transferred());
    assert!(m.converged_error_bound.unwrap() >= m.result.error * (1.0 - 1e-12));
}

#[test]
fn imbalanced_run_moves_work_within_the_cap() {
    let f = BenchmarkIntegrand::f2_with_peak(3, 0.2).unwrap();
    let cfg = DriverConfig::new(1e-6);
    let rcfg = RedistributionConfig { cap: 16, ..Default::default() };
    let m = run_distributed(&f, &HyperRect::unit(3), &cfg, &rcfg, 4).unwrap();
    assert!(m.result.converged);
    assert!(m.regions_transferred() > 0);
    assert!(m.transfers.iter().all(|t| t.regions <= 16 && t.from != t.to));
    let rel = (m.result.integral - f.reference_value()).abs() / f.reference_value();
    assert!(rel <= 1e-5, "rel {rel:e}");
}

#[test]
fn no_redistribution_baseline() {
    let f = BenchmarkIntegrand::f2_with_peak(2, 0.2).unwrap();
    let cfg = DriverConfig::new(1e-6);
    let rcfg = RedistributionConfig {
        policy: Arc::new(NoRedistribution),
        ..Default::default()
    };
    let m = run_distributed(&f, &HyperRect::unit(2), &cfg, &rcfg, 4).unwrap();
    assert!(m.result.converged);
    assert!(m.transfers.is_empty());
    assert!(m.breakdown.iter().all(|b| b.messages_out == 0));
}

#[test]
fn iteration_cap_ends_the_run() {
    let f = make_integrand(IntegrandId::F2, 3).unwrap();
    let mut cfg = DriverConfig::new(1e-10);
    cfg.max_iterations = 4;
    let m = run_distributed(&f, &HyperRect::unit(3), &cfg, &RedistributionConfig::default(), 3).unwrap();
    assert_eq!(m.result.termination_reason, TerminationReason::MaxIterations);
    assert_eq!(m.result.iterations, 4);
    assert!(!m.result.converged);
    assert_eq!(m.converged_error_bound, None);
}

#[test]
fn invalid_settings_are_rejected() {
    let f = make_integrand(IntegrandId::F1, 2).unwrap();
    let cfg = DriverConfig::new(1e-6);
    let d = HyperRect::unit(2);
    assert!(run_distributed(&f, &d, &cfg, &RedistributionConfig::default(), 0).is_err());
    let zero_cap = RedistributionConfig { cap: 0, ..Default::default() };
    assert!(run_distributed(&f, &d, &cfg, &zero_cap, 2).is_err());
}

fn rects(d: usize) -> impl Strategy<Value = Vec<HyperRect>> {
    prop::collection::vec(
        (prop::collection::vec(-1e3f64..1e3, d), prop::collection::vec(1e-9f64..10.0, d)),
        1..20,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(lo, w)| {
                let hi = lo.iter().zip(&w).map(|(a, w)| a + w).collect();
                HyperRect::new(lo, hi).unwrap()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn wire_round_trip(
        (d, rs) in (1usize..=6).prop_flat_map(|d| (Just(d), rects(d))),
        from in 0usize..64, to in 0usize..64, seq in any::<u64>(),
        eb in 0.0f64..1e9, ib in 0.0f64..1e9,
    ) {
        let batch = TransferBatch::from_rects(from, to, seq, &rs, eb, ib).unwrap();
        let bytes = wire::encode(&batch);
        prop_assert_eq!(bytes.len(), wire::encoded_len(rs.len(), d));
        let back = wire::decode(&bytes).unwrap();
        prop_assert_eq!(back.rects().collect::<Vec<_>>(), rs);
        prop_assert_eq!(back, batch);
        // any truncation is detected
        prop_assert!(wire::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn round_robin_plans_are_sound(
        counts in prop::collection::vec(0usize..2000, 2..=12),
        round in 0u64..100,
        cap in 1usize..600,
    ) {
        let p = counts.len();
        let pairs = round_robin_pairs(p, round);
        let mut seen = HashSet::new();
        for &(a, b) in &pairs {
            prop_assert!(a < b && b < p);
            prop_assert!(seen.insert(a) && seen.insert(b), "rank paired twice");
        }
        prop_assert_eq!(pairs.len(), p / 2);

        let r = roles(&counts);
        let (lo, hi) = fair_share_bounds(&counts);
        let mut after = counts.clone();
        for t in RoundRobin.plan(round, &counts, cap) {
            prop_assert_eq!(r[t.from], Role::Donor);
            prop_assert_eq!(r[t.to], Role::Receiver);
            prop_assert!(t.count >= 1 && t.count <= cap);
            prop_assert!(pairs.contains(&(t.from.min(t.to), t.from.max(t.to))));
            after[t.from] -= t.count;
            after[t.to] += t.count;
        }
        prop_assert_eq!(after.iter().sum::<usize>(), counts.iter().sum::<usize>());
        for i in 0..p {
            match r[i] {
                Role::Donor => prop_assert!(after[i] >= hi),
                Role::Receiver => prop_assert!(after[i] <= lo),
                Role::Neutral => prop_assert_eq!(after[i], counts[i]),
            }
        }
    }

    #[test]
    fn every_pair_meets_once_per_cycle(p in 2usize..=16, start in 0u64..50) {
        let rounds = if p % 2 == 0 { p - 1 } else { p } as u64;
        let mut met = HashSet::new();
        for r in start..start + rounds {
            for pair in round_robin_pairs(p, r) {
                prop_assert!(met.insert(pair), "{:?} met twice", pair);
            }
        }
        prop_assert_eq!(met.len(), p * (p - 1) / 2);
    }
}
