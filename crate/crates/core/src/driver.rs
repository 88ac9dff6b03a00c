//! Single-worker batch adaptive loop.
//!
//! Every iteration evaluates all freshly created regions, reduces the global
//! estimate, checks the stopping rule and then, in one pass over the store,
//! finalizes negligible regions and bisects the rest.

use std::fmt;

use rayon::prelude::*;

use crate::error::{QuadError, Result};
use crate::region::{midpoint, uniform_partition, HyperRect, RegionStore};
use crate::rules::{apply_bounds, argmax, RuleChoice, RuleEvaluation, RuleTable};
use crate::sum::CompensatedSum;
use crate::Integrand;

/// Regions per rayon task; below this a batch is evaluated inline.
const PAR_CHUNK: usize = 16;

/// Classifier deciding when a region's error is too small to refine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Negligibility {
    /// `error_r <= budget * (volume_r / volume_domain) * safety`, where
    /// `budget = max(abs_floor, |I| * tau_rel)`.
    VolumeProportional { safety: f64 },
    /// Never finalize on error; every region is refined until convergence or
    /// a guard trips.
    Disabled,
}

impl Default for Negligibility {
    fn default() -> Self {
        Negligibility::VolumeProportional { safety: 0.5 }
    }
}

impl Negligibility {
    /// Error at or below which a region holding `volume_fraction` of the
    /// domain is finalized.
    pub fn threshold(&self, budget: f64, volume_fraction: f64) -> f64 {
        match *self {
            Negligibility::VolumeProportional { safety } => budget * volume_fraction * safety,
            Negligibility::Disabled => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriverConfig {
    pub tau_rel: f64,
    pub abs_floor: f64,
    pub max_iterations: usize,
    /// Cap on the active store size after a split.
    pub max_regions: usize,
    /// A region is not split once its extent on the chosen axis is at most
    /// `min_width_ulp_factor * EPSILON * domain extent`.
    pub min_width_ulp_factor: f64,
    pub rule: RuleChoice,
    pub negligibility: Negligibility,
    /// Size of the initial uniform partition; `None` means `2d`.
    pub initial_regions: Option<usize>,
    /// Evaluate batches on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl DriverConfig {
    pub fn new(tau_rel: f64) -> Self {
        Self {
            tau_rel,
            abs_floor: 1e-16,
            max_iterations: 10_000,
            max_regions: 1 << 24,
            min_width_ulp_factor: 8.0,
            rule: RuleChoice::Gm,
            negligibility: Negligibility::default(),
            initial_regions: None,
            parallel: true,
        }
    }

    pub fn with_rule(mut self, rule: RuleChoice) -> Self {
        self.rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QuadError::InvalidConfig(msg));
        if !(self.tau_rel > 0.0 && self.tau_rel.is_finite()) {
            return bad(format!("tau_rel must be positive, got {}", self.tau_rel));
        }
        if !(self.abs_floor >= 0.0) {
            return bad(format!("abs_floor must be non-negative, got {}", self.abs_floor));
        }
        if self.max_regions < 1 {
            return bad("max_regions must be at least 1".into());
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.min_width_ulp_factor >= 0.0) {
            return bad("min_width_ulp_factor must be non-negative".into());
        }
        if let Negligibility::VolumeProportional { safety } = self.negligibility {
            if !(safety >= 0.0 && safety.is_finite()) {
                return bad(format!("negligibility safety must be finite and >= 0, got {safety}"));
            }
        }
        if self.initial_regions == Some(0) {
            return bad("initial_regions must be at least 1".into());
        }
        Ok(())
    }

    /// Error budget `max(abs_floor, |I| * tau_rel)`.
    pub fn budget(&self, integral: f64) -> f64 {
        self.abs_floor.max(integral.abs() * self.tau_rel)
    }
}

/// Running totals of finalized regions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FinalizedTotals {
    pub integral: CompensatedSum,
    pub error: CompensatedSum,
    pub regions: u64,
}

impl FinalizedTotals {
    pub fn add(&mut self, integral: f64, error: f64) {
        self.integral.add(integral);
        self.error.add(error);
        self.regions += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalEstimate {
    pub integral: f64,
    pub error: f64,
    pub finalized_integral: f64,
    pub finalized_error: f64,
    pub active_regions: usize,
}

impl GlobalEstimate {
    /// Combines finalized totals with the estimates held in `store`.
    pub fn from_parts(finalized: &FinalizedTotals, store: &RegionStore) -> Self {
        let (i, e) = local_sums(finalized, store);
        GlobalEstimate {
            integral: i.value(),
            error: e.value(),
            finalized_integral: finalized.integral.value(),
            finalized_error: finalized.error.value(),
            active_regions: store.len(),
        }
    }
}

/// Compensated `(integral, error)` sums of finalized totals plus every region
/// in `store`, in store order.
pub(crate) fn local_sums(
    finalized: &FinalizedTotals,
    store: &RegionStore,
) -> (CompensatedSum, CompensatedSum) {
    let mut i = finalized.integral;
    let mut e = finalized.error;
    i.extend(store.integrals().iter().copied());
    e.extend(store.errors().iter().copied());
    (i, e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminationReason {
    Tolerance,
    MaxIterations,
    MaxRegions,
    /// Every region was finalized (some by the width guard) without the
    /// global error meeting the tolerance.
    WidthGuardExhausted,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::Tolerance => "tolerance",
            TerminationReason::MaxIterations => "max_iterations",
            TerminationReason::MaxRegions => "max_regions",
            TerminationReason::WidthGuardExhausted => "width_guard_exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationResult {
    pub integral: f64,
    pub error: f64,
    pub converged: bool,
    pub iterations: usize,
    pub total_f_evals: u64,
    pub peak_regions: usize,
    pub termination_reason: TerminationReason,
    /// Regions finalized because they could no longer be bisected.
    pub width_guarded: u64,
}

/// One line of the per-iteration progress trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressRecord {
    pub iteration: usize,
    pub active_regions: usize,
    pub integral: f64,
    pub error: f64,
    /// Cumulative integrand evaluations.
    pub f_evals: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchStats {
    pub evaluated: usize,
    pub f_evals: u64,
    pub non_finite: usize,
}

/// Split direction for an evaluated region: the largest axis score, or the
/// longest axis when no score rises above round-off.
pub fn choose_axis(eval: &RuleEvaluation, lo: &[f64], hi: &[f64]) -> usize {
    let best = argmax(&eval.axis_scores);
    if eval.axis_scores[best] > eval.score_noise {
        return best;
    }
    let extents: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
    argmax(&extents)
}

/// Applies `table` to every region of `store` that has not been evaluated
/// yet, then reduces the global estimate over `finalized` and the whole store.
///
/// Evaluation may run on the rayon pool; results are written back and summed
/// in store order, so the output does not depend on `parallel`.
pub fn evaluate_batch<F: Integrand + ?Sized>(
    store: &mut RegionStore,
    table: &RuleTable,
    f: &F,
    finalized: &FinalizedTotals,
    parallel: bool,
) -> Result<(GlobalEstimate, BatchStats)> {
    if store.dim() != table.dim() {
        return Err(QuadError::DimensionMismatch {
            expected: table.dim(),
            got: store.dim(),
        });
    }
    let d = store.dim();
    let pending: Vec<usize> = (0..store.len()).filter(|&i| !store.is_evaluated(i)).collect();
    let eval_one = |i: usize| {
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        store.bounds_into(i, &mut lo, &mut hi);
        let ev = apply_bounds(table, &lo, &hi, f);
        let axis = choose_axis(&ev, &lo, &hi);
        (ev, axis)
    };
    let results: Vec<(RuleEvaluation, usize)> = if parallel && pending.len() > PAR_CHUNK {
        pending
            .par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|&i| eval_one(i))
            .collect()
    } else {
        pending.iter().map(|&i| eval_one(i)).collect()
    };

    let mut stats = BatchStats::default();
    for (&i, (ev, axis)) in pending.iter().zip(results) {
        store.set_estimate(i, ev.integral, ev.error, axis);
        stats.evaluated += 1;
        stats.f_evals += ev.f_evals as u64;
        stats.non_finite += ev.non_finite as usize;
    }
    Ok((GlobalEstimate::from_parts(finalized, store), stats))
}

/// `true` iff `g.error <= max(abs_floor, |g.integral| * tau_rel)`.
pub fn check_convergence(g: &GlobalEstimate, cfg: &DriverConfig) -> bool {
    g.error <= cfg.budget(g.integral)
}

/// Output of [`classify_filter_split`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    /// The children, or the untouched input store when `capacity_exceeded`.
    pub store: RegionStore,
    pub finalized: usize,
    pub width_guarded: usize,
    pub split: usize,
    pub capacity_exceeded: bool,
}

/// Finalizes negligible and unsplittable regions and bisects the rest, in one
/// pass over `store`.
///
/// A child inherits half its parent's integral and the parent's full error;
/// these placeholders are replaced once the child is evaluated, and serve
/// only as conservative bounds while it is unevaluated. If the children would
/// exceed `cfg.max_regions`, nothing is modified and the input store is
/// returned with `capacity_exceeded` set.
pub fn classify_filter_split(
    store: RegionStore,
    g: &GlobalEstimate,
    cfg: &DriverConfig,
    domain: &HyperRect,
    finalized: &mut FinalizedTotals,
) -> SplitOutcome {
    let d = store.dim();
    let budget = cfg.budget(g.integral);
    let domain_volume = domain.volume();
    let min_width: Vec<f64> = (0..d)
        .map(|a| cfg.min_width_ulp_factor * f64::EPSILON * domain.extent(a))
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Fate {
        Negligible,
        WidthGuard,
        Split(usize),
    }
    let fate = |i: usize| -> Fate {
        let vf = store.volume(i) / domain_volume;
        if store.errors()[i] <= cfg.negligibility.threshold(budget, vf) {
            return Fate::Negligible;
        }
        let axis = store
            .split_axis(i)
            .expect("classify_filter_split on an unevaluated region");
        let (lo, hi) = (store.lower(axis)[i], store.upper(axis)[i]);
        let mid = midpoint(lo, hi);
        if hi - lo <= min_width[axis] || mid <= lo || mid >= hi {
            Fate::WidthGuard
        } else {
            Fate::Split(axis)
        }
    };

    let survivors = (0..store.len())
        .filter(|&i| matches!(fate(i), Fate::Split(_)))
        .count();
    if 2 * survivors > cfg.max_regions {
        return SplitOutcome {
            store,
            finalized: 0,
            width_guarded: 0,
            split: 0,
            capacity_exceeded: true,
        };
    }

    let mut children = RegionStore::with_capacity(d, 2 * survivors);
    let mut out = SplitOutcome {
        store: RegionStore::new(d),
        finalized: 0,
        width_guarded: 0,
        split: 0,
        capacity_exceeded: false,
    };
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    for i in 0..store.len() {
        let (integral, error) = (store.integrals()[i], store.errors()[i]);
        match fate(i) {
            Fate::Negligible => {
                finalized.add(integral, error);
                out.finalized += 1;
            }
            Fate::WidthGuard => {
                finalized.add(integral, error);
                out.finalized += 1;
                out.width_guarded += 1;
            }
            Fate::Split(axis) => {
                store.bounds_into(i, &mut lo, &mut hi);
                let mid = midpoint(lo[axis], hi[axis]);
                let upper = hi[axis];
                hi[axis] = mid;
                children.push_raw(&lo, &hi, 0.5 * integral, error, None);
                hi[axis] = upper;
                lo[axis] = mid;
                children.push_raw(&lo, &hi, 0.5 * integral, error, None);
                out.split += 1;
            }
        }
    }
    out.store = children;
    out
}

/// Initial store: `k` regions from [`uniform_partition`].
pub(crate) fn initial_store(domain: &HyperRect, k: usize) -> Result<RegionStore> {
    RegionStore::from_rects(domain.dim(), &uniform_partition(domain, k)?)
}

pub fn integrate<F: Integrand + ?Sized>(
    f: &F,
    domain: &HyperRect,
    cfg: &DriverConfig,
) -> Result<IntegrationResult> {
    integrate_with_trace(f, domain, cfg, &mut |_| {})
}

/// Like [`integrate`], calling `sink` once per iteration after the global
/// estimate is reduced.
pub fn integrate_with_trace<F: Integrand + ?Sized>(
    f: &F,
    domain: &HyperRect,
    cfg: &DriverConfig,
    sink: &mut dyn FnMut(&ProgressRecord),
) -> Result<IntegrationResult> {
    cfg.validate()?;
    let table = cfg.rule.build(domain.dim())?;
    let mut store = initial_store(domain, cfg.initial_regions.unwrap_or(2 * domain.dim()))?;
    let mut finalized = FinalizedTotals::default();
    let mut iterations = 0;
    let mut f_evals = 0u64;
    let mut peak = store.len();
    let mut width_guarded = 0u64;

    let (g, reason) = loop {
        if store.is_empty() {
            let g = GlobalEstimate::from_parts(&finalized, &store);
            let reason = if check_convergence(&g, cfg) {
                TerminationReason::Tolerance
            } else {
                TerminationReason::WidthGuardExhausted
            };
            break (g, reason);
        }
        iterations += 1;
        let (g, stats) = evaluate_batch(&mut store, &table, f, &finalized, cfg.parallel)?;
        f_evals += stats.f_evals;
        sink(&ProgressRecord {
            iteration: iterations,
            active_regions: store.len(),
            integral: g.integral,
            error: g.error,
            f_evals,
        });
        if check_convergence(&g, cfg) {
            break (g, TerminationReason::Tolerance);
        }
        if iterations >= cfg.max_iterations {
            break (g, TerminationReason::MaxIterations);
        }
        let out = classify_filter_split(store, &g, cfg, domain, &mut finalized);
        if out.capacity_exceeded {
            break (g, TerminationReason::MaxRegions);
        }
        width_guarded += out.width_guarded as u64;
        store = out.store;
        peak = peak.max(store.len());
    };

    Ok(IntegrationResult {
        integral: g.integral,
        error: g.error,
        converged: reason == TerminationReason::Tolerance,
        iterations,
        total_f_evals: f_evals,
        peak_regions: peak,
        termination_reason: reason,
        width_guarded,
    })
}
