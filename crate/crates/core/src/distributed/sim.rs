//! Deterministic single-threaded backend with a virtual clock.
//!
//! Clock model, in integrand evaluations:
//!
//! * evaluating `n` nodes advances the worker's clock by `n`;
//! * a batch sent at time `t` arrives at `t + latency + per_region * len`;
//! * a worker first evaluates what it holds, then takes every batch that has
//!   arrived by then; a batch that missed one exchange is waited for, as is
//!   every batch during a confirmation iteration;
//! * the exchange completes at the latest arrival plus
//!   `reduce_step * ceil(log2 P)`; the wait counts as idle.
//!
//! Splitting and packing are free. Every worker clock is always
//! `compute + idle`.

use std::collections::HashSet;

use super::{
    decide, deal, metadata_reduce, Decision, progress, settled_totals, BatchId, ConservationTracker,
    DistributedResult, RedistributionConfig, SimCostModel, SingleCountRecord, TimeUnit,
    TransferBatch, TransferLog, LIVENESS_LIMIT,
};
use crate::driver::{local_sums, DriverConfig, IntegrationResult, ProgressRecord};
use crate::error::{QuadError, Result};
use crate::region::HyperRect;
use crate::sum::CompensatedSum;
use crate::Integrand;

struct InTransit {
    batch: TransferBatch,
    arrival: f64,
    sent_iteration: u64,
}

pub(super) fn run<F: Integrand + ?Sized>(
    f: &F,
    domain: &HyperRect,
    cfg: &DriverConfig,
    rcfg: &RedistributionConfig,
    p: usize,
    cost: &SimCostModel,
    sink: &mut dyn FnMut(&ProgressRecord),
) -> Result<DistributedResult> {
    let table = cfg.rule.build(domain.dim())?;
    let mut workers = deal(domain, p, rcfg.initial_subdomains_per_rank)?;
    let reduce_cost = cost.reduce_step * (p as f64).log2().ceil();
    let mut clock = vec![0.0f64; p];
    let mut transit: Vec<InTransit> = Vec::new();
    let mut sent: Vec<(BatchId, usize)> = Vec::new();
    let mut delivered: HashSet<BatchId> = HashSet::new();
    let mut census = ConservationTracker::default();
    let mut out = DistributedResult {
        result: IntegrationResult {
            integral: 0.0,
            error: 0.0,
            converged: false,
            iterations: 0,
            total_f_evals: 0,
            peak_regions: 0,
            termination_reason: crate::driver::TerminationReason::MaxIterations,
            width_guarded: 0,
        },
        workers: p,
        backend: "deterministic_sim",
        breakdown: Vec::new(),
        transfers: Vec::new(),
        conservation: Vec::new(),
        single_count: Vec::new(),
        converged_error_bound: None,
        elapsed: 0.0,
        time_unit: TimeUnit::Virtual,
    };
    let mut k = 0u64;
    let mut drain = false;

    let stop = loop {
        k += 1;
        for (r, w) in workers.iter_mut().enumerate() {
            let s = w.evaluate(&table, f, cfg.parallel)?;
            clock[r] += s.f_evals as f64;
            w.stats.compute += s.f_evals as f64;

            let mut got_any = false;
            let mut i = 0;
            while i < transit.len() {
                let t = &transit[i];
                let due = t.sent_iteration + 1 < k;
                if t.batch.to_rank == r && (t.arrival <= clock[r] || due || drain) {
                    let t = transit.remove(i);
                    if t.arrival > clock[r] {
                        w.stats.idle += t.arrival - clock[r];
                        clock[r] = t.arrival;
                    }
                    w.receive(&t.batch)?;
                    delivered.insert(t.batch.id());
                    got_any = true;
                } else {
                    i += 1;
                }
            }
            if got_any {
                let s = w.evaluate(&table, f, cfg.parallel)?;
                clock[r] += s.f_evals as f64;
                w.stats.compute += s.f_evals as f64;
            }
        }

        let records: Vec<_> = workers.iter_mut().map(|w| w.record(k)).collect();
        let red = metadata_reduce(&records, cfg)?;
        let barrier = clock.iter().copied().fold(0.0, f64::max) + reduce_cost;
        for (r, w) in workers.iter_mut().enumerate() {
            w.stats.idle += barrier - clock[r];
            clock[r] = barrier;
        }

        out.conservation.push(census.check(&red)?);
        out.result.peak_regions = out.result.peak_regions.max(red.produced);
        out.single_count.push(single_count(k, &records, &red, &sent, &delivered, &workers, &transit));
        for w in workers.iter_mut() {
            w.settle_acks(&red);
            if let Some(e) = w.outgoing().iter().find(|e| k - e.sent_iteration > LIVENESS_LIMIT) {
                return Err(QuadError::Protocol(format!(
                    "batch {:?} unacknowledged for {} iterations",
                    e.id,
                    k - e.sent_iteration
                )));
            }
        }

        let decision = decide(&red, cfg);
        if !matches!(decision, Decision::Stop(s) if !s.counted) {
            sink(&progress(&red));
        }
        match decision {
            Decision::Stop(s) => {
                if s.reason == crate::driver::TerminationReason::Tolerance {
                    out.converged_error_bound = Some(red.error);
                }
                break (s, if s.counted { k } else { k - 1 });
            }
            Decision::Confirm => {
                workers.iter_mut().for_each(|w| w.hold());
                drain = true;
                continue;
            }
            Decision::Continue => drain = false,
        }

        for w in workers.iter_mut() {
            w.split(&red, cfg, domain);
        }
        for plan in rcfg.policy.plan(k - 1, &red.counts, rcfg.cap) {
            if let Some(batch) = workers[plan.from].send(&plan, k) {
                let n = batch.len();
                out.transfers.push(TransferLog {
                    iteration: k,
                    from: plan.from,
                    to: plan.to,
                    sequence_id: batch.sequence_id,
                    regions: n,
                });
                sent.push((batch.id(), plan.to));
                transit.push(InTransit {
                    arrival: clock[plan.from] + cost.latency + cost.per_region * n as f64,
                    batch,
                    sent_iteration: k,
                });
            }
        }
    };

    // settlement: deliver what is still in transit and evaluate it
    for t in transit.drain(..) {
        workers[t.batch.to_rank].receive(&t.batch)?;
    }
    for w in workers.iter_mut() {
        w.evaluate(&table, f, cfg.parallel)?;
    }

    let (integral, error) = settled_totals(&workers);
    let (s, iterations) = stop;
    out.result.integral = integral;
    out.result.error = error;
    out.result.converged = s.reason == crate::driver::TerminationReason::Tolerance;
    out.result.termination_reason = s.reason;
    out.result.iterations = iterations as usize;
    out.result.total_f_evals = workers.iter().map(|w| w.breakdown().f_evals).sum();
    out.result.width_guarded = workers.iter().map(|w| w.width_guarded()).sum();
    out.elapsed = clock.iter().copied().fold(0.0, f64::max);
    out.breakdown = workers
        .iter()
        .zip(&clock)
        .map(|(w, &c)| {
            let mut b = w.breakdown().clone();
            b.total = c;
            b.iterations = iterations;
            b
        })
        .collect();
    Ok(out)
}

fn single_count(
    k: u64,
    records: &[super::MetadataRecord],
    red: &super::ReducedMetadata,
    sent: &[(BatchId, usize)],
    delivered: &HashSet<BatchId>,
    workers: &[super::WorkerState],
    transit: &[InTransit],
) -> SingleCountRecord {
    let acked: HashSet<BatchId> = red.acked.iter().copied().collect();
    let mut violations = 0;
    for &(id, _) in sent {
        let by_sender = records[id.0].in_flight.iter().any(|e| e.id == id) && !acked.contains(&id);
        let by_receiver = delivered.contains(&id);
        if by_sender as u8 + by_receiver as u8 != 1 {
            violations += 1;
        }
    }
    let mut eps = CompensatedSum::new();
    for w in workers {
        eps.add(local_sums(w.finalized(), w.store()).1.value());
    }
    for t in transit {
        eps.add(t.batch.attached_error_bound);
    }
    SingleCountRecord {
        iteration: k,
        batches_sent: sent.len(),
        batches_in_transit: transit.len(),
        violations,
        reduced_error: red.error,
        omniscient_error: eps.value(),
    }
}
