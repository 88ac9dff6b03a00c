//! The three sweeps. Rows carry their full configuration so a CSV file can
//! be read without its manifest.

use std::sync::Arc;
use std::time::Instant;

use distquad::distributed::{
    run_distributed, Backend, DistributedResult, RedistributionConfig, RoundRobin, SimCostModel,
};
use distquad::driver::{integrate, DriverConfig, IntegrationResult};
use distquad::region::HyperRect;
use distquad::QuadError;
use serde::Serialize;

use crate::spec::{BackendId, ExperimentSpec, FunctionId, RuleId};
use crate::BenchError;

/// `termination_reason` of a configuration the rule cannot handle.
pub const UNSUPPORTED: &str = "unsupported";

/// Reasons that count as guard terminations under `--strict`.
pub const GUARD_REASONS: [&str; 3] = ["max_iterations", "max_regions", "width_guard_exhausted"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub function: FunctionId,
    pub d: usize,
    pub tau_rel: f64,
    pub rule: RuleId,
    pub backend: BackendId,
    pub workers: usize,
    pub cap: usize,
    pub init_per_rank: usize,
    pub max_iterations: usize,
    pub repetition: usize,
    pub integral: Option<f64>,
    pub eps: Option<f64>,
    pub exact: Option<f64>,
    pub rel_error_vs_exact: Option<f64>,
    pub iterations: Option<usize>,
    pub f_evals: Option<u64>,
    /// Virtual time (integrand evaluations) on the deterministic backend,
    /// wall seconds on the concurrent one.
    pub time: Option<f64>,
    pub time_unit: &'static str,
    pub termination_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub function: FunctionId,
    pub d: usize,
    pub tau_rel: f64,
    pub rule: RuleId,
    pub backend: BackendId,
    #[serde(rename = "P")]
    pub workers: usize,
    pub cap: usize,
    pub init_per_rank: usize,
    pub max_iterations: usize,
    pub repetition: usize,
    pub time: Option<f64>,
    pub time_unit: &'static str,
    pub iterations: Option<usize>,
    pub regions_transferred: Option<usize>,
    pub messages: Option<usize>,
    pub f_evals: Option<u64>,
    pub integral: Option<f64>,
    pub eps: Option<f64>,
    pub termination_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdleRow {
    pub function: FunctionId,
    pub d: usize,
    pub tau_rel: f64,
    pub rule: RuleId,
    pub backend: BackendId,
    #[serde(rename = "P")]
    pub workers: usize,
    pub cap: usize,
    pub init_per_rank: usize,
    pub max_iterations: usize,
    pub repetition: usize,
    pub rank: usize,
    pub compute_fraction: f64,
    pub idle_fraction: f64,
    pub compute: f64,
    pub idle: f64,
    pub total: f64,
    pub time_unit: &'static str,
    pub regions_in: u64,
    pub regions_out: u64,
    pub termination_reason: String,
}

/// One configuration of a sweep.
#[derive(Debug, Clone, Copy)]
struct Point {
    function: FunctionId,
    d: usize,
    tau: f64,
    workers: usize,
    repetition: usize,
}

fn points(spec: &ExperimentSpec) -> Vec<Point> {
    let mut out = Vec::new();
    for &function in &spec.functions {
        for &d in &spec.dims {
            for &tau in &spec.tolerances {
                for &workers in &spec.workers {
                    for repetition in 0..spec.repetitions {
                        out.push(Point { function, d, tau, workers, repetition });
                    }
                }
            }
        }
    }
    out
}

/// Result of one run, single- or multi-worker.
struct Outcome {
    result: IntegrationResult,
    time: f64,
    distributed: Option<DistributedResult>,
}

fn time_unit(spec: &ExperimentSpec) -> &'static str {
    match spec.backend {
        BackendId::DeterministicSim => "virtual",
        BackendId::Concurrent => "seconds",
    }
}

fn redistribution(spec: &ExperimentSpec) -> RedistributionConfig {
    RedistributionConfig {
        cap: spec.cap,
        initial_subdomains_per_rank: spec.init_per_rank,
        policy: Arc::new(RoundRobin),
        backend: match spec.backend {
            BackendId::DeterministicSim => Backend::Simulated(SimCostModel::default()),
            BackendId::Concurrent => Backend::Concurrent,
        },
    }
}

/// Runs one point. `force_distributed` routes `P = 1` through the
/// distributed engine as well, for its per-rank breakdown. `None` when the
/// rule does not support the dimension.
fn run_point(
    spec: &ExperimentSpec,
    pt: &Point,
    force_distributed: bool,
) -> Result<Option<Outcome>, BenchError> {
    let f = match pt.function.build(pt.d) {
        Ok(f) => f,
        Err(QuadError::UnsupportedDimension { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let domain = HyperRect::unit(pt.d);
    let mut cfg = DriverConfig::new(pt.tau).with_rule(spec.rule.choice());
    cfg.max_iterations = spec.max_iterations;
    let run = if pt.workers == 1 && !force_distributed {
        let start = Instant::now();
        integrate(&f, &domain, &cfg).map(|result| {
            // one worker's simulated clock is its evaluation count
            let time = match spec.backend {
                BackendId::DeterministicSim => result.total_f_evals as f64,
                BackendId::Concurrent => start.elapsed().as_secs_f64(),
            };
            Outcome { result, time, distributed: None }
        })
    } else {
        run_distributed(&f, &domain, &cfg, &redistribution(spec), pt.workers).map(|m| Outcome {
            result: m.result.clone(),
            time: m.elapsed,
            distributed: Some(m),
        })
    };
    match run {
        Ok(o) => Ok(Some(o)),
        Err(QuadError::UnsupportedDimension { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Integral, error estimate and relative error against the reference
/// value, per `(function, d, tau, P, repetition)`.
pub fn run_accuracy_sweep(spec: &ExperimentSpec) -> Result<Vec<AccuracyRow>, BenchError> {
    spec.validate()?;
    let mut rows = Vec::new();
    for pt in points(spec) {
        let mut row = AccuracyRow {
            function: pt.function,
            d: pt.d,
            tau_rel: pt.tau,
            rule: spec.rule,
            backend: spec.backend,
            workers: pt.workers,
            cap: spec.cap,
            init_per_rank: spec.init_per_rank,
            max_iterations: spec.max_iterations,
            repetition: pt.repetition,
            integral: None,
            eps: None,
            exact: None,
            rel_error_vs_exact: None,
            iterations: None,
            f_evals: None,
            time: None,
            time_unit: time_unit(spec),
            termination_reason: UNSUPPORTED.into(),
        };
        if let Some(o) = run_point(spec, &pt, false)? {
            let exact = pt.function.build(pt.d)?.reference_value();
            let r = &o.result;
            row.integral = Some(r.integral);
            row.eps = Some(r.error);
            row.exact = Some(exact);
            row.rel_error_vs_exact = Some((r.integral - exact).abs() / exact.abs());
            row.iterations = Some(r.iterations);
            row.f_evals = Some(r.total_f_evals);
            row.time = Some(o.time);
            row.termination_reason = r.termination_reason.to_string();
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Time, iterations and transfer volume per worker count. `P = 1` rows come
/// from the single-worker driver.
pub fn run_scaling_sweep(spec: &ExperimentSpec) -> Result<Vec<ScalingRow>, BenchError> {
    spec.validate()?;
    let mut rows = Vec::new();
    for pt in points(spec) {
        let mut row = ScalingRow {
            function: pt.function,
            d: pt.d,
            tau_rel: pt.tau,
            rule: spec.rule,
            backend: spec.backend,
            workers: pt.workers,
            cap: spec.cap,
            init_per_rank: spec.init_per_rank,
            max_iterations: spec.max_iterations,
            repetition: pt.repetition,
            time: None,
            time_unit: time_unit(spec),
            iterations: None,
            regions_transferred: None,
            messages: None,
            f_evals: None,
            integral: None,
            eps: None,
            termination_reason: UNSUPPORTED.into(),
        };
        if let Some(o) = run_point(spec, &pt, false)? {
            let r = &o.result;
            row.time = Some(o.time);
            row.iterations = Some(r.iterations);
            row.regions_transferred = Some(o.distributed.as_ref().map_or(0, |m| m.regions_transferred()));
            row.messages = Some(o.distributed.as_ref().map_or(0, |m| m.messages()));
            row.f_evals = Some(r.total_f_evals);
            row.integral = Some(r.integral);
            row.eps = Some(r.error);
            row.termination_reason = r.termination_reason.to_string();
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Per-rank compute and idle fractions. Unsupported configurations produce
/// no rows.
pub fn run_idle_breakdown(spec: &ExperimentSpec) -> Result<Vec<IdleRow>, BenchError> {
    spec.validate()?;
    let mut rows = Vec::new();
    for pt in points(spec) {
        let Some(o) = run_point(spec, &pt, true)? else {
            continue;
        };
        let m = o.distributed.expect("forced distributed run");
        for b in &m.breakdown {
            rows.push(IdleRow {
                function: pt.function,
                d: pt.d,
                tau_rel: pt.tau,
                rule: spec.rule,
                backend: spec.backend,
                workers: pt.workers,
                cap: spec.cap,
                init_per_rank: spec.init_per_rank,
                max_iterations: spec.max_iterations,
                repetition: pt.repetition,
                rank: b.rank,
                compute_fraction: b.compute_fraction(),
                idle_fraction: b.idle_fraction(),
                compute: b.compute,
                idle: b.idle,
                total: b.total,
                time_unit: time_unit(spec),
                regions_in: b.regions_in,
                regions_out: b.regions_out,
                termination_reason: m.result.termination_reason.to_string(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use distquad::integrands::IntegrandId;

    #[test]
    fn sweep_order_is_function_dim_tolerance_workers_repetition() {
        let spec = ExperimentSpec {
            functions: vec![FunctionId::Suite(IntegrandId::F1), FunctionId::F2Corner],
            dims: vec![2, 3],
            tolerances: vec![1e-3],
            workers: vec![1, 2],
            repetitions: 2,
            ..Default::default()
        };
        let pts = points(&spec);
        assert_eq!(pts.len(), 16);
        assert_eq!((pts[0].workers, pts[0].repetition), (1, 0));
        assert_eq!((pts[1].workers, pts[1].repetition), (1, 1));
        assert_eq!(pts[2].workers, 2);
        assert_eq!(pts[4].d, 3);
        assert_eq!(pts[8].function, FunctionId::F2Corner);
    }
}
