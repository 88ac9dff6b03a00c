//! The adaptive loop over `P` workers.
//!
//! Each worker owns a [`RegionStore`](crate::region::RegionStore) and runs the
//! single-worker steps on it. Once per iteration the workers exchange a
//! [`MetadataRecord`]; the reduction of those records is the only global
//! synchronisation and decides convergence for everyone. After splitting,
//! workers are paired by a [`RedistributionPolicy`] and donors ship their
//! largest-error regions (coordinates only) to receivers.
//!
//! A region in transit is counted by its sender, through the bounds of the
//! batch, until the receiver acknowledges it. Acknowledgments travel in the
//! receiver's next metadata record, so the reduction that sees an
//! acknowledgment also drops the sender's bound for that batch.
//!
//! The bound of a batch is the donor's last estimate of its regions, which
//! for freshly split children is inherited from the parent. A converged
//! exchange with batches still in transit is therefore only tentative: the
//! next iteration delivers and evaluates them before deciding again, so the
//! reported error always comes from evaluated regions.
//!
//! Two backends implement the protocol: a deterministic single-threaded
//! simulation with a virtual clock ([`Backend::Simulated`]) and one OS thread
//! per worker with channels ([`Backend::Concurrent`]).

mod policy;
mod sim;
mod threaded;
pub mod wire;
mod worker;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::driver::{DriverConfig, IntegrationResult, ProgressRecord, TerminationReason};
use crate::error::{QuadError, Result};
use crate::region::{uniform_partition, HyperRect, RegionStore};
use crate::sum::CompensatedSum;
use crate::Integrand;

pub use policy::{
    fair_share, fair_share_bounds, plan_transfer, roles, round_robin_pairs, NoRedistribution,
    PlannedTransfer, RedistributionPolicy, Role, RoundRobin,
};
pub use worker::WorkerState;

/// Iterations a batch may stay unacknowledged in the simulation before the
/// run is declared broken.
pub const LIVENESS_LIMIT: u64 = 3;

/// Batch identifier: `(from_rank, sequence_id)`.
pub type BatchId = (usize, u64);

/// Cost model of the simulated backend, in units of one integrand evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimCostModel {
    /// Fixed delay between sending a batch and its arrival.
    pub latency: f64,
    /// Additional delay per transferred region.
    pub per_region: f64,
    /// Cost of one metadata reduction step; a reduction over `P` ranks costs
    /// `ceil(log2 P)` steps.
    pub reduce_step: f64,
}

impl Default for SimCostModel {
    fn default() -> Self {
        Self {
            latency: 2000.0,
            per_region: 8.0,
            reduce_step: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Simulated(SimCostModel),
    Concurrent,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Simulated(_) => "deterministic_sim",
            Backend::Concurrent => "concurrent",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RedistributionConfig {
    /// Maximum regions per transfer message.
    pub cap: usize,
    pub initial_subdomains_per_rank: usize,
    pub policy: Arc<dyn RedistributionPolicy>,
    pub backend: Backend,
}

impl Default for RedistributionConfig {
    fn default() -> Self {
        Self {
            cap: 512,
            initial_subdomains_per_rank: 8,
            policy: Arc::new(RoundRobin),
            backend: Backend::Simulated(SimCostModel::default()),
        }
    }
}

impl RedistributionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cap < 1 {
            return Err(QuadError::InvalidConfig("message cap must be at least 1".into()));
        }
        if self.initial_subdomains_per_rank < 1 {
            return Err(QuadError::InvalidConfig(
                "initial subdomains per rank must be at least 1".into(),
            ));
        }
        if let Backend::Simulated(c) = self.backend {
            if [c.latency, c.per_region, c.reduce_step]
                .iter()
                .any(|v| !(v.is_finite() && *v >= 0.0))
            {
                return Err(QuadError::InvalidConfig(format!("invalid cost model {c:?}")));
            }
        }
        Ok(())
    }
}

/// Region coordinates sent from one worker to another.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferBatch {
    pub from_rank: usize,
    pub to_rank: usize,
    pub sequence_id: u64,
    dim: usize,
    /// Per region, per axis: `lo, hi`.
    bounds: Vec<f64>,
    /// Sum of the donor's last error estimates for these regions.
    pub attached_error_bound: f64,
    /// Sum of the absolute values of the donor's last integral estimates.
    pub attached_integral_bound: f64,
}

impl TransferBatch {
    /// Packs `rects`, all of one dimension, into a batch.
    pub fn from_rects(
        from_rank: usize,
        to_rank: usize,
        sequence_id: u64,
        rects: &[HyperRect],
        attached_error_bound: f64,
        attached_integral_bound: f64,
    ) -> Result<Self> {
        let dim = rects
            .first()
            .map(|r| r.dim())
            .ok_or_else(|| QuadError::InvalidConfig("a batch needs at least one region".into()))?;
        let mut bounds = Vec::with_capacity(rects.len() * 2 * dim);
        for r in rects {
            if r.dim() != dim {
                return Err(QuadError::DimensionMismatch { expected: dim, got: r.dim() });
            }
            for a in 0..dim {
                bounds.push(r.lo[a]);
                bounds.push(r.hi[a]);
            }
        }
        Ok(Self {
            from_rank,
            to_rank,
            sequence_id,
            dim,
            bounds,
            attached_error_bound,
            attached_integral_bound,
        })
    }

    pub fn id(&self) -> BatchId {
        (self.from_rank, self.sequence_id)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.bounds.len() / (2 * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn rect(&self, i: usize) -> HyperRect {
        let b = &self.bounds[i * 2 * self.dim..(i + 1) * 2 * self.dim];
        HyperRect {
            lo: b.iter().step_by(2).copied().collect(),
            hi: b.iter().skip(1).step_by(2).copied().collect(),
        }
    }

    pub fn rects(&self) -> impl Iterator<Item = HyperRect> + '_ {
        (0..self.len()).map(move |i| self.rect(i))
    }
}

/// Sender-side record of a batch that has not been acknowledged.
#[derive(Debug, Clone, PartialEq)]
pub struct InFlightEntry {
    pub id: BatchId,
    pub to_rank: usize,
    pub regions: usize,
    /// Signed sum of the donor's integral estimates for the batch.
    pub integral: f64,
    pub integral_bound: f64,
    pub error_bound: f64,
    pub sent_iteration: u64,
}

/// What one worker contributes to the per-iteration reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataRecord {
    pub rank: usize,
    pub iteration: u64,
    /// Finalized plus active estimates; excludes outgoing batches.
    pub partial_integral: f64,
    pub partial_error: f64,
    /// Totals over `in_flight`.
    pub inflight_integral_bound: f64,
    pub inflight_error_bound: f64,
    pub active_count: usize,
    /// Outgoing batches not yet acknowledged.
    pub in_flight: Vec<InFlightEntry>,
    /// Batches received since the previous exchange.
    pub acks: Vec<BatchId>,
    /// Store size right after this worker's last split (or initial deal).
    pub produced: usize,
    /// The last split was skipped because it would exceed `max_regions`.
    pub capacity_exceeded: bool,
    /// Cumulative integrand evaluations of this worker.
    pub f_evals: u64,
}

/// Outcome of [`metadata_reduce`], identical on every rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMetadata {
    pub iteration: u64,
    pub integral: f64,
    /// Conservative error: partial errors plus bounds of unacknowledged
    /// batches.
    pub error: f64,
    pub converged: bool,
    pub counts: Vec<usize>,
    pub acked: Vec<BatchId>,
    /// Batches still in transit after this exchange: `(id, to_rank, regions)`.
    pub in_transit: Vec<(BatchId, usize, usize)>,
    pub produced: usize,
    pub capacity_exceeded: bool,
    pub f_evals: u64,
}

impl ReducedMetadata {
    pub fn active_total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn in_transit_regions(&self) -> usize {
        self.in_transit.iter().map(|t| t.2).sum()
    }
}

/// Combines one record per rank (in rank order) into the global estimate.
///
/// A batch acknowledged in this same exchange is already counted by its
/// receiver, so the sender's bound for it is skipped.
pub fn metadata_reduce(records: &[MetadataRecord], cfg: &DriverConfig) -> Result<ReducedMetadata> {
    let Some(first) = records.first() else {
        return Err(QuadError::Protocol("no metadata records".into()));
    };
    let iteration = first.iteration;
    for (r, rec) in records.iter().enumerate() {
        if rec.rank != r {
            return Err(QuadError::Protocol(format!(
                "record {r} comes from rank {}; missing or duplicated rank",
                rec.rank
            )));
        }
        if rec.iteration != iteration {
            return Err(QuadError::Protocol(format!(
                "rank {r} is at iteration {}, rank 0 at {iteration}",
                rec.iteration
            )));
        }
    }
    let acked: Vec<BatchId> = records.iter().flat_map(|r| r.acks.iter().copied()).collect();
    let acked_set: HashSet<BatchId> = acked.iter().copied().collect();

    let mut integral = CompensatedSum::new();
    let mut error = CompensatedSum::new();
    for rec in records {
        integral.add(rec.partial_integral);
        error.add(rec.partial_error);
    }
    let mut in_transit = Vec::new();
    for rec in records {
        for e in &rec.in_flight {
            if !acked_set.contains(&e.id) {
                integral.add(e.integral);
                error.add(e.error_bound);
                in_transit.push((e.id, e.to_rank, e.regions));
            }
        }
    }
    for id in &acked {
        let sender = records.get(id.0);
        if !sender.is_some_and(|s| s.in_flight.iter().any(|e| e.id == *id)) {
            return Err(QuadError::Protocol(format!("acknowledgment for unknown batch {id:?}")));
        }
    }
    let integral = integral.value();
    let error = error.value();
    Ok(ReducedMetadata {
        iteration,
        integral,
        error,
        converged: error <= cfg.budget(integral),
        counts: records.iter().map(|r| r.active_count).collect(),
        acked,
        in_transit,
        produced: records.iter().map(|r| r.produced).sum(),
        capacity_exceeded: records.iter().any(|r| r.capacity_exceeded),
        f_evals: records.iter().map(|r| r.f_evals).sum(),
    })
}

/// Per-worker time and traffic accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeBreakdown {
    pub rank: usize,
    pub iterations: u64,
    /// Virtual units (simulation) or seconds (concurrent backend).
    pub compute: f64,
    pub idle: f64,
    /// Protocol time not attributed to compute or idle.
    pub total: f64,
    pub messages_out: u64,
    pub regions_out: u64,
    pub messages_in: u64,
    pub regions_in: u64,
    pub f_evals: u64,
}

impl TimeBreakdown {
    pub fn compute_fraction(&self) -> f64 {
        if self.total > 0.0 {
            self.compute / self.total
        } else {
            0.0
        }
    }

    pub fn idle_fraction(&self) -> f64 {
        if self.total > 0.0 {
            self.idle / self.total
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferLog {
    pub iteration: u64,
    pub from: usize,
    pub to: usize,
    pub sequence_id: u64,
    pub regions: usize,
}

/// Region census at one exchange: `active + in_transit` must equal
/// `expected`, the regions produced by the previous splits plus those that
/// were already in transit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConservationRecord {
    pub iteration: u64,
    pub active: usize,
    pub in_transit: usize,
    pub expected: usize,
}

impl ConservationRecord {
    pub fn holds(&self) -> bool {
        self.active + self.in_transit == self.expected
    }
}

#[derive(Debug, Default)]
pub(crate) struct ConservationTracker {
    carried: usize,
}

impl ConservationTracker {
    pub(crate) fn check(&mut self, red: &ReducedMetadata) -> Result<ConservationRecord> {
        let rec = ConservationRecord {
            iteration: red.iteration,
            active: red.active_total(),
            in_transit: red.in_transit_regions(),
            expected: red.produced + self.carried,
        };
        if !rec.holds() {
            return Err(QuadError::Protocol(format!("region census broken: {rec:?}")));
        }
        self.carried = rec.in_transit;
        Ok(rec)
    }
}

/// Omniscient check (simulation only) that every batch sent so far is
/// counted exactly once at an exchange: by its sender while in transit, by
/// its receiver afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleCountRecord {
    pub iteration: u64,
    pub batches_sent: usize,
    pub batches_in_transit: usize,
    /// Batches counted zero or two times.
    pub violations: usize,
    /// Error from the reduction.
    pub reduced_error: f64,
    /// Error recomputed from all stores plus the physical in-transit set.
    pub omniscient_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    /// Integrand evaluations on the simulated clock.
    Virtual,
    Seconds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedResult {
    /// Estimates recomputed from the settled stores.
    pub result: IntegrationResult,
    pub workers: usize,
    pub backend: &'static str,
    pub breakdown: Vec<TimeBreakdown>,
    pub transfers: Vec<TransferLog>,
    pub conservation: Vec<ConservationRecord>,
    /// Simulation backend only.
    pub single_count: Vec<SingleCountRecord>,
    /// `ε_conservative` from the reduction that reported convergence.
    pub converged_error_bound: Option<f64>,
    /// Protocol duration: the common final clock (simulation) or the slowest
    /// worker's wall time (concurrent).
    pub elapsed: f64,
    pub time_unit: TimeUnit,
}

impl DistributedResult {
    pub fn regions_transferred(&self) -> usize {
        self.transfers.iter().map(|t| t.regions).sum()
    }

    pub fn messages(&self) -> usize {
        self.transfers.len()
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeUnit::Virtual => "virtual",
            TimeUnit::Seconds => "seconds",
        })
    }
}

/// How an exchange ends the run, if it does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Stop {
    pub reason: TerminationReason,
    /// Whether this exchange counts as an iteration. Exchanges that only
    /// observe an empty system or a capacity flag raised at the previous
    /// split do not, matching the single-worker loop.
    pub counted: bool,
}

/// What the workers do after an exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Decision {
    Continue,
    /// Converged while batches were still in transit. Transferred regions
    /// are only estimated by their donor's inherited values, so the next
    /// iteration skips splitting, waits for every outstanding batch,
    /// evaluates it and decides again.
    Confirm,
    Stop(Stop),
}

pub(crate) fn decide(red: &ReducedMetadata, cfg: &DriverConfig) -> Decision {
    let stop = |reason, counted| Decision::Stop(Stop { reason, counted });
    if red.capacity_exceeded {
        return stop(TerminationReason::MaxRegions, false);
    }
    if red.active_total() == 0 && red.in_transit.is_empty() {
        let reason = if red.converged {
            TerminationReason::Tolerance
        } else {
            TerminationReason::WidthGuardExhausted
        };
        return stop(reason, false);
    }
    let last = red.iteration >= cfg.max_iterations as u64;
    if red.converged && red.in_transit.is_empty() {
        return stop(TerminationReason::Tolerance, true);
    }
    if last {
        return stop(TerminationReason::MaxIterations, true);
    }
    if red.converged {
        return Decision::Confirm;
    }
    Decision::Continue
}

pub(crate) fn progress(red: &ReducedMetadata) -> ProgressRecord {
    ProgressRecord {
        iteration: red.iteration as usize,
        active_regions: red.active_total(),
        integral: red.integral,
        error: red.error,
        f_evals: red.f_evals,
    }
}

/// Initial stores: `P * per_rank` regions from the uniform partition, dealt
/// round-robin.
pub(crate) fn deal(domain: &HyperRect, p: usize, per_rank: usize) -> Result<Vec<WorkerState>> {
    let parts = uniform_partition(domain, p * per_rank)?;
    let mut stores: Vec<RegionStore> = (0..p).map(|_| RegionStore::new(domain.dim())).collect();
    for (j, rect) in parts.iter().enumerate() {
        stores[j % p].push_rect(rect)?;
    }
    Ok(stores
        .into_iter()
        .enumerate()
        .map(|(rank, store)| WorkerState::new(rank, store))
        .collect())
}

/// Final `(integral, error)` over settled workers, reduced in rank order.
pub(crate) fn settled_totals(workers: &[WorkerState]) -> (f64, f64) {
    let mut i = CompensatedSum::new();
    let mut e = CompensatedSum::new();
    for w in workers {
        let (wi, we) = w.local_sums();
        i.add(wi);
        e.add(we);
    }
    (i.value(), e.value())
}

pub fn run_distributed<F: Integrand + ?Sized>(
    f: &F,
    domain: &HyperRect,
    cfg: &DriverConfig,
    rcfg: &RedistributionConfig,
    workers: usize,
) -> Result<DistributedResult> {
    run_distributed_with_trace(f, domain, cfg, rcfg, workers, &mut |_| {})
}

/// Like [`run_distributed`], calling `sink` once per counted iteration with
/// the reduced global estimate.
pub fn run_distributed_with_trace<F: Integrand + ?Sized>(
    f: &F,
    domain: &HyperRect,
    cfg: &DriverConfig,
    rcfg: &RedistributionConfig,
    workers: usize,
    sink: &mut dyn FnMut(&ProgressRecord),
) -> Result<DistributedResult> {
    cfg.validate()?;
    rcfg.validate()?;
    if workers < 1 {
        return Err(QuadError::InvalidConfig("at least one worker is required".into()));
    }
    if workers > u32::MAX as usize {
        return Err(QuadError::InvalidConfig(format!("{workers} workers do not fit the wire format")));
    }
    match rcfg.backend {
        Backend::Simulated(cost) => sim::run(f, domain, cfg, rcfg, workers, &cost, sink),
        Backend::Concurrent => threaded::run(f, domain, cfg, rcfg, workers, sink),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rank: usize, integral: f64, error: f64) -> MetadataRecord {
        MetadataRecord {
            rank,
            iteration: 1,
            partial_integral: integral,
            partial_error: error,
            inflight_integral_bound: 0.0,
            inflight_error_bound: 0.0,
            active_count: 1,
            in_flight: Vec::new(),
            acks: Vec::new(),
            produced: 1,
            capacity_exceeded: false,
            f_evals: 0,
        }
    }

    fn entry(id: BatchId, to: usize, error_bound: f64) -> InFlightEntry {
        InFlightEntry {
            id,
            to_rank: to,
            regions: 2,
            integral: 0.0,
            integral_bound: 0.0,
            error_bound,
            sent_iteration: 0,
        }
    }

    #[test]
    fn two_ranks_converge() {
        let cfg = DriverConfig::new(1e-8);
        let red = metadata_reduce(&[record(0, 0.5, 1e-10), record(1, 0.5, 1e-10)], &cfg).unwrap();
        assert_eq!(red.integral, 1.0);
        assert!(red.converged);
    }

    #[test]
    fn in_flight_bound_blocks_convergence() {
        let cfg = DriverConfig::new(1e-8);
        let mut a = record(0, 0.5, 1e-10);
        a.in_flight.push(entry((0, 0), 1, 1e-3));
        let red = metadata_reduce(&[a.clone(), record(1, 0.5, 1e-10)], &cfg).unwrap();
        assert!(!red.converged);
        assert_eq!(red.in_transit_regions(), 2);

        // once acknowledged, the bound is dropped
        let mut b = record(1, 0.5, 1e-10);
        b.acks.push((0, 0));
        let red = metadata_reduce(&[a, b], &cfg).unwrap();
        assert!(red.converged);
        assert!(red.in_transit.is_empty());
    }

    #[test]
    fn convergence_with_batches_in_transit_is_tentative() {
        let cfg = DriverConfig::new(1e-8);
        let mut a = record(0, 0.5, 1e-10);
        a.in_flight.push(entry((0, 0), 1, 1e-10));
        let red = metadata_reduce(&[a, record(1, 0.5, 1e-10)], &cfg).unwrap();
        assert!(red.converged);
        assert_eq!(decide(&red, &cfg), Decision::Confirm);

        let red = metadata_reduce(&[record(0, 0.5, 1e-10), record(1, 0.5, 1e-10)], &cfg).unwrap();
        let stop = Stop { reason: TerminationReason::Tolerance, counted: true };
        assert_eq!(decide(&red, &cfg), Decision::Stop(stop));
    }

    #[test]
    fn single_rank_matches_single_worker_check() {
        let cfg = DriverConfig::new(1e-6);
        for (i, e) in [(1.0, 1e-7), (1.0, 1e-5), (0.0, 1e-17), (-3.0, 2e-6)] {
            let red = metadata_reduce(&[record(0, i, e)], &cfg).unwrap();
            let g = crate::driver::GlobalEstimate {
                integral: i,
                error: e,
                finalized_integral: 0.0,
                finalized_error: 0.0,
                active_regions: 1,
            };
            assert_eq!(red.converged, crate::driver::check_convergence(&g, &cfg));
            assert_eq!((red.integral, red.error), (i, e));
        }
    }

    #[test]
    fn malformed_record_sets_are_protocol_errors() {
        let cfg = DriverConfig::new(1e-6);
        assert!(matches!(
            metadata_reduce(&[record(0, 1.0, 0.0), record(2, 1.0, 0.0)], &cfg),
            Err(QuadError::Protocol(_))
        ));
        let mut late = record(1, 1.0, 0.0);
        late.iteration = 2;
        assert!(metadata_reduce(&[record(0, 1.0, 0.0), late], &cfg).is_err());
        assert!(metadata_reduce(&[], &cfg).is_err());
        let mut bogus = record(1, 1.0, 0.0);
        bogus.acks.push((0, 9));
        assert!(metadata_reduce(&[record(0, 1.0, 0.0), bogus], &cfg).is_err());
    }

    #[test]
    fn census() {
        let mut t = ConservationTracker::default();
        let mut red = metadata_reduce(&[record(0, 1.0, 0.0), record(1, 1.0, 0.0)], &DriverConfig::new(1e-3)).unwrap();
        assert!(t.check(&red).is_ok());
        red.counts = vec![5, 1];
        assert!(t.check(&red).is_err());
    }
}
