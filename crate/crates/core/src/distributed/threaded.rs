//! One OS thread per worker; region batches travel as encoded frames over
//! channels and the metadata exchange is an all-to-all of records.

use std::collections::{BTreeMap, HashSet};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Instant;

use super::{
    decide, deal, metadata_reduce, Decision, progress, settled_totals, wire, BatchId, ConservationRecord,
    ConservationTracker, DistributedResult, MetadataRecord, RedistributionConfig, Stop, TimeUnit,
    TransferLog, WorkerState,
};
use crate::driver::{DriverConfig, IntegrationResult, ProgressRecord, TerminationReason};
use crate::error::{QuadError, Result};
use crate::region::HyperRect;
use crate::rules::RuleTable;
use crate::Integrand;

enum Meta {
    Record(MetadataRecord),
    Abort(usize),
}

struct Links {
    data_rx: Receiver<Vec<u8>>,
    data_tx: Vec<Sender<Vec<u8>>>,
    meta_rx: Receiver<Meta>,
    meta_tx: Vec<Sender<Meta>>,
}

/// Tells the other ranks to give up if this worker leaves early.
struct AbortGuard<'a> {
    rank: usize,
    peers: &'a [Sender<Meta>],
    armed: bool,
}

impl Drop for AbortGuard<'_> {
    fn drop(&mut self) {
        if self.armed {
            for (r, tx) in self.peers.iter().enumerate() {
                if r != self.rank {
                    let _ = tx.send(Meta::Abort(self.rank));
                }
            }
        }
    }
}

struct WorkerOutput {
    state: WorkerState,
    stop: Stop,
    iterations: u64,
    peak: usize,
    trace: Vec<ProgressRecord>,
    conservation: Vec<ConservationRecord>,
    transfers: Vec<TransferLog>,
    converged_error_bound: Option<f64>,
    wall: f64,
}

pub(super) fn run<F: Integrand + ?Sized>(
    f: &F,
    domain: &HyperRect,
    cfg: &DriverConfig,
    rcfg: &RedistributionConfig,
    p: usize,
    sink: &mut dyn FnMut(&ProgressRecord),
) -> Result<DistributedResult> {
    let table = cfg.rule.build(domain.dim())?;
    let workers = deal(domain, p, rcfg.initial_subdomains_per_rank)?;
    let initial: usize = workers.iter().map(|w| w.produced()).sum();

    let (data_tx, data_rx): (Vec<_>, Vec<_>) = (0..p).map(|_| channel()).unzip();
    let (meta_tx, meta_rx): (Vec<_>, Vec<_>) = (0..p).map(|_| channel()).unzip();
    let links: Vec<Links> = data_rx
        .into_iter()
        .zip(meta_rx)
        .map(|(data_rx, meta_rx)| Links {
            data_rx,
            data_tx: data_tx.clone(),
            meta_rx,
            meta_tx: meta_tx.clone(),
        })
        .collect();
    drop((data_tx, meta_tx));

    let outputs: Vec<Result<WorkerOutput>> = std::thread::scope(|s| {
        let handles: Vec<_> = workers
            .into_iter()
            .zip(links)
            .map(|(state, links)| {
                let table = &table;
                s.spawn(move || worker_loop(state, links, f, table, domain, cfg, rcfg, p, initial))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join().unwrap_or_else(|_| {
                    Err(QuadError::Protocol("a worker thread panicked".into()))
                })
            })
            .collect()
    });
    // report the originating failure rather than a peer's abort notice
    let is_echo = |e: &QuadError| matches!(e, QuadError::Protocol(m) if m.starts_with("peer rank"));
    let mut outs = Vec::with_capacity(p);
    let mut failure: Option<QuadError> = None;
    for o in outputs {
        match o {
            Ok(o) => outs.push(o),
            Err(e) => {
                if failure.as_ref().map_or(true, |f| is_echo(f) && !is_echo(&e)) {
                    failure = Some(e);
                }
            }
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }

    let lead = &outs[0];
    for t in &lead.trace {
        sink(t);
    }
    let states: Vec<WorkerState> = outs.iter().map(|o| o.state.clone()).collect();
    let (integral, error) = settled_totals(&states);
    let stop = lead.stop;
    let mut transfers: Vec<TransferLog> = outs.iter().flat_map(|o| o.transfers.iter().copied()).collect();
    transfers.sort_by_key(|t| (t.iteration, t.from, t.sequence_id));
    Ok(DistributedResult {
        result: IntegrationResult {
            integral,
            error,
            converged: stop.reason == TerminationReason::Tolerance,
            iterations: lead.iterations as usize,
            total_f_evals: outs.iter().map(|o| o.state.breakdown().f_evals).sum(),
            peak_regions: lead.peak,
            termination_reason: stop.reason,
            width_guarded: states.iter().map(|w| w.width_guarded()).sum(),
        },
        workers: p,
        backend: "concurrent",
        breakdown: outs
            .iter()
            .map(|o| {
                let mut b = o.state.breakdown().clone();
                b.total = o.wall;
                b.iterations = o.iterations;
                b
            })
            .collect(),
        transfers,
        conservation: lead.conservation.clone(),
        single_count: Vec::new(),
        converged_error_bound: lead.converged_error_bound,
        elapsed: outs.iter().map(|o| o.wall).fold(0.0, f64::max),
        time_unit: TimeUnit::Seconds,
    })
}

#[allow(clippy::too_many_arguments)]
fn worker_loop<F: Integrand + ?Sized>(
    mut w: WorkerState,
    links: Links,
    f: &F,
    table: &RuleTable,
    domain: &HyperRect,
    cfg: &DriverConfig,
    rcfg: &RedistributionConfig,
    p: usize,
    initial: usize,
) -> Result<WorkerOutput> {
    let rank = w.rank();
    let mut guard = AbortGuard {
        rank,
        peers: &links.meta_tx,
        armed: true,
    };
    let start = Instant::now();
    let mut early: BTreeMap<u64, Vec<MetadataRecord>> = BTreeMap::new();
    let mut census = ConservationTracker::default();
    let mut out_trace = Vec::new();
    let mut out_census = Vec::new();
    let mut out_transfers = Vec::new();
    let mut converged_error_bound = None;
    let mut peak = initial;
    let mut k = 0u64;
    let mut awaiting: HashSet<BatchId> = HashSet::new();

    let (stop, red) = loop {
        k += 1;
        let tw = Instant::now();
        while !awaiting.is_empty() {
            let batch = recv_batch(&links)?;
            awaiting.remove(&batch.id());
            w.receive(&batch)?;
        }
        w.stats.idle += tw.elapsed().as_secs_f64();
        let t0 = Instant::now();
        while let Ok(bytes) = links.data_rx.try_recv() {
            w.receive(&wire::decode(&bytes)?)?;
        }
        w.evaluate(table, f, cfg.parallel)?;
        w.stats.compute += t0.elapsed().as_secs_f64();

        let rec = w.record(k);
        for (r, tx) in links.meta_tx.iter().enumerate() {
            if r != rank {
                let _ = tx.send(Meta::Record(rec.clone()));
            }
        }
        let t1 = Instant::now();
        let mut records = early.remove(&k).unwrap_or_default();
        records.push(rec);
        while records.len() < p {
            match links.meta_rx.recv() {
                Ok(Meta::Record(r)) if r.iteration == k => records.push(r),
                Ok(Meta::Record(r)) => early.entry(r.iteration).or_default().push(r),
                Ok(Meta::Abort(r)) => {
                    guard.armed = false;
                    return Err(QuadError::Protocol(format!("peer rank {r} aborted")));
                }
                Err(_) => return Err(QuadError::Protocol("metadata channel closed".into())),
            }
        }
        w.stats.idle += t1.elapsed().as_secs_f64();
        records.sort_by_key(|r| r.rank);
        let red = metadata_reduce(&records, cfg)?;
        out_census.push(census.check(&red)?);
        w.settle_acks(&red);
        peak = peak.max(red.produced);
        if rank == 0 {
            out_trace.push(progress(&red));
        }

        match decide(&red, cfg) {
            Decision::Stop(s) => {
                if s.reason == TerminationReason::Tolerance {
                    converged_error_bound = Some(red.error);
                }
                break (s, red);
            }
            Decision::Confirm => {
                w.hold();
                awaiting = expected_here(&red, rank);
                continue;
            }
            Decision::Continue => {}
        }

        let t2 = Instant::now();
        w.split(&red, cfg, domain);
        for plan in rcfg.policy.plan(k - 1, &red.counts, rcfg.cap) {
            if plan.from != rank {
                continue;
            }
            if let Some(batch) = w.send(&plan, k) {
                out_transfers.push(TransferLog {
                    iteration: k,
                    from: rank,
                    to: plan.to,
                    sequence_id: batch.sequence_id,
                    regions: batch.len(),
                });
                // a closed channel means the peer already failed; its abort reaches us
                let _ = links.data_tx[plan.to].send(wire::encode(&batch));
            }
        }
        w.stats.compute += t2.elapsed().as_secs_f64();
    };
    let wall = start.elapsed().as_secs_f64();
    guard.armed = false;

    // settlement: collect batches addressed here that were still in transit
    let mut expected = expected_here(&red, rank);
    while !expected.is_empty() {
        let batch = recv_batch(&links)?;
        if !expected.remove(&batch.id()) {
            return Err(QuadError::Protocol(format!("unexpected batch {:?} at settlement", batch.id())));
        }
        w.receive(&batch)?;
    }
    w.evaluate(table, f, cfg.parallel)?;

    let iterations = if stop.counted { k } else { k - 1 };
    if !stop.counted {
        out_trace.pop();
    }
    Ok(WorkerOutput {
        state: w,
        stop,
        iterations,
        peak,
        trace: out_trace,
        conservation: out_census,
        transfers: out_transfers,
        converged_error_bound,
        wall,
    })
}


fn expected_here(red: &super::ReducedMetadata, rank: usize) -> HashSet<BatchId> {
    red.in_transit.iter().filter(|t| t.1 == rank).map(|t| t.0).collect()
}

fn recv_batch(links: &Links) -> Result<super::TransferBatch> {
    let bytes = links
        .data_rx
        .recv()
        .map_err(|_| QuadError::Protocol("data channel closed while waiting for a batch".into()))?;
    wire::decode(&bytes)
}
