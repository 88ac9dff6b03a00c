use super::{
    BatchId, InFlightEntry, MetadataRecord, PlannedTransfer, ReducedMetadata, TimeBreakdown,
    TransferBatch,
};
use crate::driver::{
    classify_filter_split, evaluate_batch, local_sums, BatchStats, DriverConfig, FinalizedTotals,
    GlobalEstimate,
};
use crate::error::{QuadError, Result};
use crate::region::{HyperRect, RegionStore};
use crate::rules::RuleTable;
use crate::sum::CompensatedSum;
use crate::Integrand;

/// One worker's share of the computation.
#[derive(Debug, Clone)]
pub struct WorkerState {
    rank: usize,
    store: RegionStore,
    finalized: FinalizedTotals,
    outgoing: Vec<InFlightEntry>,
    received: Vec<BatchId>,
    next_seq: u64,
    produced: usize,
    capacity_exceeded: bool,
    width_guarded: u64,
    pub(crate) stats: TimeBreakdown,
}

impl WorkerState {
    pub fn new(rank: usize, store: RegionStore) -> Self {
        let produced = store.len();
        Self {
            rank,
            store,
            finalized: FinalizedTotals::default(),
            outgoing: Vec::new(),
            received: Vec::new(),
            next_seq: 0,
            produced,
            capacity_exceeded: false,
            width_guarded: 0,
            stats: TimeBreakdown {
                rank,
                ..TimeBreakdown::default()
            },
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn store(&self) -> &RegionStore {
        &self.store
    }

    pub fn finalized(&self) -> &FinalizedTotals {
        &self.finalized
    }

    /// Outgoing batches awaiting acknowledgment.
    pub fn outgoing(&self) -> &[InFlightEntry] {
        &self.outgoing
    }

    pub fn width_guarded(&self) -> u64 {
        self.width_guarded
    }

    pub fn breakdown(&self) -> &TimeBreakdown {
        &self.stats
    }

    /// Compensated `(integral, error)` over finalized and active regions.
    pub fn local_sums(&self) -> (f64, f64) {
        let (i, e) = local_sums(&self.finalized, &self.store);
        (i.value(), e.value())
    }

    /// Appends the batch's regions, unevaluated, and queues an
    /// acknowledgment for the next exchange.
    pub fn receive(&mut self, batch: &TransferBatch) -> Result<()> {
        if batch.to_rank != self.rank {
            return Err(QuadError::Protocol(format!(
                "rank {} got batch {:?} addressed to rank {}",
                self.rank,
                batch.id(),
                batch.to_rank
            )));
        }
        if batch.dim() != self.store.dim() {
            return Err(QuadError::DimensionMismatch {
                expected: self.store.dim(),
                got: batch.dim(),
            });
        }
        let d = batch.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for region in batch.bounds().chunks_exact(2 * d) {
            for a in 0..d {
                lo[a] = region[2 * a];
                hi[a] = region[2 * a + 1];
            }
            self.store.push_raw(&lo, &hi, 0.0, 0.0, None);
        }
        self.received.push(batch.id());
        self.stats.messages_in += 1;
        self.stats.regions_in += batch.len() as u64;
        Ok(())
    }

    pub fn evaluate<F: Integrand + ?Sized>(
        &mut self,
        table: &RuleTable,
        f: &F,
        parallel: bool,
    ) -> Result<BatchStats> {
        let (_, stats) = evaluate_batch(&mut self.store, table, f, &self.finalized, parallel)?;
        self.stats.f_evals += stats.f_evals;
        Ok(stats)
    }

    /// Builds this worker's record and hands over pending acknowledgments.
    pub fn record(&mut self, iteration: u64) -> MetadataRecord {
        let (integral, error) = self.local_sums();
        let ib: CompensatedSum = self.outgoing.iter().map(|e| e.integral_bound).collect();
        let eb: CompensatedSum = self.outgoing.iter().map(|e| e.error_bound).collect();
        MetadataRecord {
            rank: self.rank,
            iteration,
            partial_integral: integral,
            partial_error: error,
            inflight_integral_bound: ib.value(),
            inflight_error_bound: eb.value(),
            active_count: self.store.len(),
            in_flight: self.outgoing.clone(),
            acks: std::mem::take(&mut self.received),
            produced: self.produced,
            capacity_exceeded: self.capacity_exceeded,
            f_evals: self.stats.f_evals,
        }
    }

    /// Drops outgoing batches acknowledged in `red`.
    pub fn settle_acks(&mut self, red: &ReducedMetadata) {
        self.outgoing.retain(|e| !red.acked.contains(&e.id));
        self.stats.iterations = red.iteration;
    }

    /// Finalizes and splits against the reduced global estimate. When the
    /// children would exceed `max_regions` the store is left as it is and
    /// the flag is raised for the next exchange.
    pub fn split(&mut self, red: &ReducedMetadata, cfg: &DriverConfig, domain: &HyperRect) {
        let g = GlobalEstimate {
            integral: red.integral,
            error: red.error,
            finalized_integral: self.finalized.integral.value(),
            finalized_error: self.finalized.error.value(),
            active_regions: self.store.len(),
        };
        let dim = self.store.dim();
        let store = std::mem::replace(&mut self.store, RegionStore::new(dim));
        let out = classify_filter_split(store, &g, cfg, domain, &mut self.finalized);
        self.capacity_exceeded = out.capacity_exceeded;
        self.width_guarded += out.width_guarded as u64;
        self.store = out.store;
        self.produced = self.store.len();
    }

    /// Stands in for a split in an iteration that does not split: the
    /// current store becomes this iteration's produced set.
    pub fn hold(&mut self) {
        self.produced = self.store.len();
    }

    /// Store size after the last split.
    pub fn produced(&self) -> usize {
        self.produced
    }

    /// Moves the `plan.count` largest-error regions (ties: store order) into
    /// a batch and records it as in flight. Returns `None` if the store is
    /// empty.
    pub fn send(&mut self, plan: &PlannedTransfer, iteration: u64) -> Option<TransferBatch> {
        debug_assert_eq!(plan.from, self.rank);
        let n = plan.count.min(self.store.len());
        if n == 0 {
            return None;
        }
        let errors = self.store.errors();
        let mut order: Vec<usize> = (0..self.store.len()).collect();
        order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
        order.truncate(n);
        let moved = self.store.extract(&order);

        let d = moved.dim();
        let mut bounds = Vec::with_capacity(n * 2 * d);
        for i in 0..n {
            for a in 0..d {
                bounds.push(moved.lower(a)[i]);
                bounds.push(moved.upper(a)[i]);
            }
        }
        let integral: CompensatedSum = moved.integrals().iter().copied().collect();
        let integral_bound: CompensatedSum = moved.integrals().iter().map(|v| v.abs()).collect();
        let error_bound: CompensatedSum = moved.errors().iter().copied().collect();
        let batch = TransferBatch {
            from_rank: self.rank,
            to_rank: plan.to,
            sequence_id: self.next_seq,
            dim: d,
            bounds,
            attached_error_bound: error_bound.value(),
            attached_integral_bound: integral_bound.value(),
        };
        self.next_seq += 1;
        self.outgoing.push(InFlightEntry {
            id: batch.id(),
            to_rank: plan.to,
            regions: n,
            integral: integral.value(),
            integral_bound: batch.attached_integral_bound,
            error_bound: batch.attached_error_bound,
            sent_iteration: iteration,
        });
        self.stats.messages_out += 1;
        self.stats.regions_out += n as u64;
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::uniform_partition;

    fn worker_with_errors(errors: &[f64]) -> WorkerState {
        let rects = uniform_partition(&HyperRect::unit(2), errors.len()).unwrap();
        let mut store = RegionStore::from_rects(2, &rects).unwrap();
        for (i, &e) in errors.iter().enumerate() {
            store.set_estimate(i, -(i as f64), e, 0);
        }
        WorkerState::new(0, store)
    }

    #[test]
    fn sends_largest_errors_first() {
        let mut w = worker_with_errors(&[0.1, 0.5, 0.3, 0.5, 0.2]);
        let plan = PlannedTransfer { from: 0, to: 1, count: 3 };
        let b = w.send(&plan, 4).unwrap();
        assert_eq!(b.len(), 3);
        assert!((b.attached_error_bound - 1.3).abs() < 1e-15);
        // regions 1, 3, 2 with integrals -1, -3, -2
        assert_eq!(b.attached_integral_bound, 6.0);
        assert_eq!(w.outgoing()[0].integral, -6.0);
        assert_eq!(w.store().errors(), &[0.1, 0.2]);
        assert_eq!(b.rect(0), uniform_partition(&HyperRect::unit(2), 5).unwrap()[1]);
    }

    #[test]
    fn receive_then_ack() {
        let mut a = worker_with_errors(&[1.0, 2.0]);
        let mut b = WorkerState::new(1, RegionStore::new(2));
        let batch = a.send(&PlannedTransfer { from: 0, to: 1, count: 1 }, 1).unwrap();
        b.receive(&batch).unwrap();
        assert_eq!(b.store().len(), 1);
        assert!(!b.store().is_evaluated(0));
        let rec = b.record(2);
        assert_eq!(rec.acks, vec![(0, 0)]);
        assert!(b.record(3).acks.is_empty());
        let wrong = WorkerState::new(2, RegionStore::new(2)).receive(&batch);
        assert!(matches!(wrong, Err(QuadError::Protocol(_))));
    }
}
