//! Cubature rules on hyper-rectangles.
//!
//! A rule is stored as a [`RuleTable`]: a list of fully symmetric orbits on
//! the reference cube `[-1,1]^d`, each carrying a main weight, an embedded
//! (lower-degree) weight and optionally a third, still lower-degree weight used
//! by the two-level error heuristic. Weights are scaled so that
//! `sum(weight * orbit_size) == 2^d`.
//!
//! [`apply_rule`] maps the table affinely onto a region and returns the local
//! integral, an error estimate and per-axis fourth-difference scores used to
//! pick the split direction.

mod gauss_kronrod;
mod genz_malik;
pub mod orbit;
mod table_io;

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{QuadError, Result};
use crate::region::{midpoint, HyperRect};
use crate::Integrand;

pub use gauss_kronrod::{build_gk_tensor_rule, GK_MAX_DIM};
pub use genz_malik::{build_gm_rule, GM_MAX_DIM, GM_MIN_DIM};
pub use table_io::{format_table, parse_table};

/// Error assigned per unit volume to a region where the integrand returned a
/// non-finite value. Large enough to force refinement, small enough that sums
/// over millions of regions stay finite.
pub const NONFINITE_ERROR_DENSITY: f64 = 1e150;

/// Ratio by which successive null-rule estimates must decay for a region to be
/// treated as being in the asymptotic range.
pub const ASYMPTOTIC_DECAY: f64 = 5.0;

/// Multiplier applied to the largest null-rule estimate outside the asymptotic
/// range.
pub const NONASYMPTOTIC_SCALE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    GenzMalik,
    GaussKronrodTensor,
    Custom,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleKind::GenzMalik => "gm",
            RuleKind::GaussKronrodTensor => "gk-tensor",
            RuleKind::Custom => "custom",
        })
    }
}

/// Which rule the driver should build for a given dimension.
#[derive(Debug, Clone)]
pub enum RuleChoice {
    /// Genz–Malik degree 7/5. In one dimension this delegates to the 15-point
    /// Gauss–Kronrod rule, since the fully symmetric construction needs d >= 2.
    Gm,
    GkTensor,
    /// A user-supplied table, e.g. from [`parse_table`].
    Table(Arc<RuleTable>),
}

impl RuleChoice {
    pub fn build(&self, dim: usize) -> Result<Arc<RuleTable>> {
        match self {
            RuleChoice::Gm if dim == 1 => Ok(Arc::new(build_gk_tensor_rule(1)?)),
            RuleChoice::Gm => Ok(Arc::new(build_gm_rule(dim)?)),
            RuleChoice::GkTensor => Ok(Arc::new(build_gk_tensor_rule(dim)?)),
            RuleChoice::Table(t) if t.dim() == dim => Ok(Arc::clone(t)),
            RuleChoice::Table(t) => Err(QuadError::DimensionMismatch {
                expected: t.dim(),
                got: dim,
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RuleChoice::Gm => "gm",
            RuleChoice::GkTensor => "gk-tensor",
            RuleChoice::Table(_) => "custom",
        }
    }
}

/// One fully symmetric orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    /// Canonical generator (absolute values, ascending).
    pub generator: Vec<f64>,
    pub weight: f64,
    pub embedded_weight: f64,
    /// Weight of a third rule of lower degree than the embedded one; enables
    /// the two-level error estimate.
    pub lower_weight: Option<f64>,
}

impl Orbit {
    pub fn size(&self) -> usize {
        orbit::orbit_size(&self.generator)
    }
}

/// On-axis node pair used for the fourth-difference split score:
/// `|f(c-a) + f(c+a) - 2f(c) - ratio * (f(c-b) + f(c+b) - 2f(c))|` along each
/// axis, with `a = inner * h` and `b = outer * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisProbe {
    pub inner: f64,
    pub outer: f64,
    pub ratio: f64,
    center: usize,
    /// `[+inner, -inner, +outer, -outer]` node indices per axis.
    nodes: Vec<[usize; 4]>,
}

#[derive(Debug, Clone)]
enum NodeLayout {
    /// Explicit nodes, grouped by orbit.
    Orbits {
        coords: Vec<f64>,
        ranges: Vec<Range<usize>>,
    },
    /// Tensor product of a symmetric 1-D rule, enumerated on the fly.
    Tensor(gauss_kronrod::Tensor1d),
}

/// Precomputed fully symmetric cubature rule for one dimension.
#[derive(Debug, Clone)]
pub struct RuleTable {
    dim: usize,
    kind: RuleKind,
    degree: u32,
    embedded_degree: u32,
    orbits: Vec<Orbit>,
    node_count: usize,
    layout: NodeLayout,
    probe: Option<AxisProbe>,
}

impl RuleTable {
    /// Builds a table from explicit orbits, expanding every orbit into nodes.
    ///
    /// `probe` is `(inner, outer, ratio)`; the corresponding on-axis nodes and
    /// the centre must be present in the expanded node set.
    pub fn from_orbits(
        dim: usize,
        kind: RuleKind,
        degree: u32,
        embedded_degree: u32,
        orbits: Vec<Orbit>,
        probe: Option<(f64, f64, f64)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(QuadError::InvalidTable("dimension must be at least 1".into()));
        }
        let mut coords = Vec::new();
        let mut ranges = Vec::with_capacity(orbits.len());
        let mut canon = Vec::with_capacity(orbits.len());
        for o in orbits {
            if o.generator.len() != dim {
                return Err(QuadError::InvalidTable(format!(
                    "generator {:?} has {} coordinates, expected {dim}",
                    o.generator,
                    o.generator.len()
                )));
            }
            if o.generator.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
                return Err(QuadError::InvalidTable(format!(
                    "generator {:?} leaves the reference cube",
                    o.generator
                )));
            }
            let start = coords.len() / dim;
            let n = orbit::expand_orbit(&o.generator, &mut coords);
            ranges.push(start..start + n);
            canon.push(Orbit {
                generator: orbit::canonical(&o.generator),
                ..o
            });
        }
        let node_count = coords.len() / dim;
        let probe = probe
            .map(|(inner, outer, ratio)| locate_probe(dim, &coords, inner, outer, ratio))
            .transpose()?;
        let table = Self {
            dim,
            kind,
            degree,
            embedded_degree,
            orbits: canon,
            node_count,
            layout: NodeLayout::Orbits { coords, ranges },
            probe,
        };
        table.check_weight_sums()?;
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    /// Nominal polynomial degree of the main rule.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn embedded_degree(&self) -> u32 {
        self.embedded_degree
    }

    pub fn orbits(&self) -> &[Orbit] {
        &self.orbits
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn probe(&self) -> Option<&AxisProbe> {
        self.probe.as_ref()
    }

    pub fn has_lower_rule(&self) -> bool {
        self.orbits.iter().all(|o| o.lower_weight.is_some())
    }

    /// Expanded nodes on the reference cube (row-major, `node_count * d`).
    /// `None` for tensor rules, whose nodes are enumerated on the fly.
    pub fn nodes(&self) -> Option<&[f64]> {
        match &self.layout {
            NodeLayout::Orbits { coords, .. } => Some(coords),
            NodeLayout::Tensor(_) => None,
        }
    }

    /// Main-rule weight of every expanded node, in node order.
    pub fn node_weights(&self) -> Option<Vec<f64>> {
        match &self.layout {
            NodeLayout::Orbits { ranges, .. } => Some(
                self.orbits
                    .iter()
                    .zip(ranges)
                    .flat_map(|(o, r)| std::iter::repeat(o.weight).take(r.len()))
                    .collect(),
            ),
            NodeLayout::Tensor(_) => None,
        }
    }

    fn check_weight_sums(&self) -> Result<()> {
        let target = 2f64.powi(self.dim as i32);
        let check = |name: &str, w: &dyn Fn(&Orbit) -> f64| -> Result<()> {
            let s: f64 = self.orbits.iter().map(|o| w(o) * o.size() as f64).sum();
            if (s - target).abs() > 1e-13 * target {
                return Err(QuadError::InvalidTable(format!(
                    "{name} weights sum to {s}, expected {target}"
                )));
            }
            Ok(())
        };
        check("main", &|o| o.weight)?;
        check("embedded", &|o| o.embedded_weight)?;
        if self.has_lower_rule() {
            check("lower", &|o| o.lower_weight.unwrap())?;
        }
        Ok(())
    }
}

fn locate_probe(dim: usize, coords: &[f64], inner: f64, outer: f64, ratio: f64) -> Result<AxisProbe> {
    let find = |target: &[f64]| -> Result<usize> {
        coords
            .chunks(dim)
            .position(|p| p.iter().zip(target).all(|(a, b)| (a - b).abs() <= 1e-15))
            .ok_or_else(|| {
                QuadError::InvalidTable(format!("probe node {target:?} is not a rule node"))
            })
    };
    let mut point = vec![0.0; dim];
    let center = find(&point)?;
    let mut nodes = Vec::with_capacity(dim);
    for axis in 0..dim {
        let mut idx = [0; 4];
        for (k, v) in [inner, -inner, outer, -outer].into_iter().enumerate() {
            point[axis] = v;
            idx[k] = find(&point)?;
        }
        point[axis] = 0.0;
        nodes.push(idx);
    }
    Ok(AxisProbe {
        inner,
        outer,
        ratio,
        center,
        nodes,
    })
}

/// Result of applying a rule to one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleEvaluation {
    pub integral: f64,
    pub error: f64,
    /// Fourth-difference magnitude per axis.
    pub axis_scores: Vec<f64>,
    /// Round-off level of the axis scores; scores at or below it carry no
    /// directional information.
    pub score_noise: f64,
    pub f_evals: usize,
    /// The integrand returned NaN or an infinity at some node.
    pub non_finite: bool,
}

/// Error estimate from the embedded rule sequence.
///
/// `main` and `embedded` are the two rule results; `lower` is the optional
/// third, lower-degree result. With only two levels the estimate is
/// `|main - embedded|`. With three levels, let `e1 = |main - embedded|` and
/// `e2 = |embedded - lower|`. If the null-rule values decay by at least
/// [`ASYMPTOTIC_DECAY`] (`e1 * ASYMPTOTIC_DECAY <= e2`) the region is taken to
/// be in the asymptotic range and `e1` is returned; otherwise the estimate is
/// `NONASYMPTOTIC_SCALE * max(e1, e2)`.
pub fn estimate_error(main: f64, embedded: f64, lower: Option<f64>) -> f64 {
    let e1 = (main - embedded).abs();
    match lower {
        None => e1,
        Some(low) => {
            let e2 = (embedded - low).abs();
            if ASYMPTOTIC_DECAY * e1 <= e2 {
                e1
            } else {
                NONASYMPTOTIC_SCALE * e1.max(e2)
            }
        }
    }
}

/// Index of the largest score, lowest index on ties.
pub fn select_axis(eval: &RuleEvaluation) -> usize {
    argmax(&eval.axis_scores)
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Applies `table` to `rect`.
pub fn apply_rule<F: Integrand + ?Sized>(
    table: &RuleTable,
    rect: &HyperRect,
    f: &F,
) -> Result<RuleEvaluation> {
    if rect.dim() != table.dim {
        return Err(QuadError::DimensionMismatch {
            expected: table.dim,
            got: rect.dim(),
        });
    }
    Ok(apply_bounds(table, rect.lo(), rect.hi(), f))
}

/// Applies `table` to the box with the given bounds. Callers guarantee the
/// dimensions agree.
pub(crate) fn apply_bounds<F: Integrand + ?Sized>(
    table: &RuleTable,
    lo: &[f64],
    hi: &[f64],
    f: &F,
) -> RuleEvaluation {
    let d = table.dim;
    let center: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| midpoint(a, b)).collect();
    let half: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| 0.5 * (b - a)).collect();
    let volume: f64 = half.iter().map(|h| 2.0 * h).product();
    // weights live on [-1,1]^d whose volume is 2^d
    let scale: f64 = half.iter().product();

    let mut eval = match &table.layout {
        NodeLayout::Orbits { coords, ranges } => {
            apply_orbits(table, coords, ranges, &center, &half, scale, f)
        }
        NodeLayout::Tensor(t) => t.apply(d, &center, &half, scale, f),
    };
    if eval.non_finite {
        eval.integral = 0.0;
        eval.error = NONFINITE_ERROR_DENSITY * volume;
        eval.axis_scores.iter_mut().for_each(|s| *s = 0.0);
        eval.score_noise = f64::INFINITY;
    }
    eval
}

fn apply_orbits<F: Integrand + ?Sized>(
    table: &RuleTable,
    coords: &[f64],
    ranges: &[Range<usize>],
    center: &[f64],
    half: &[f64],
    scale: f64,
    f: &F,
) -> RuleEvaluation {
    let d = table.dim;
    let mut x = vec![0.0; d];
    let mut fvals = vec![0.0; table.node_count];
    let mut non_finite = false;
    let (mut main, mut emb, mut low) = (0.0, 0.0, 0.0);
    for (orbit, range) in table.orbits.iter().zip(ranges) {
        let mut s = 0.0;
        for k in range.clone() {
            let node = &coords[k * d..(k + 1) * d];
            for j in 0..d {
                x[j] = center[j] + half[j] * node[j];
            }
            let v = f.eval(&x);
            non_finite |= !v.is_finite();
            fvals[k] = v;
            s += v;
        }
        main += orbit.weight * s;
        emb += orbit.embedded_weight * s;
        if let Some(w) = orbit.lower_weight {
            low += w * s;
        }
    }
    let lower = table.has_lower_rule().then_some(low * scale);
    let integral = main * scale;
    let error = estimate_error(integral, emb * scale, lower);

    let mut axis_scores = vec![0.0; d];
    let score_noise = if let Some(p) = &table.probe {
        let f0 = fvals[p.center];
        let mut magnitude = f0.abs();
        for (axis, idx) in p.nodes.iter().enumerate() {
            let [ip, im, op, om] = idx.map(|i| fvals[i]);
            let inner = ip + im - 2.0 * f0;
            let outer = op + om - 2.0 * f0;
            axis_scores[axis] = (inner - p.ratio * outer).abs();
            magnitude = magnitude.max(ip.abs().max(im.abs()).max(op.abs()).max(om.abs()));
        }
        16.0 * f64::EPSILON * magnitude
    } else {
        f64::INFINITY
    };
    RuleEvaluation {
        integral,
        error,
        axis_scores,
        score_noise,
        f_evals: table.node_count,
        non_finite,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_axis_examples() {
        let ev = |scores: Vec<f64>| RuleEvaluation {
            integral: 0.0,
            error: 0.0,
            axis_scores: scores,
            score_noise: 0.0,
            f_evals: 0,
            non_finite: false,
        };
        assert_eq!(select_axis(&ev(vec![0.0, 0.0, 5.0, 0.0])), 2);
        assert_eq!(select_axis(&ev(vec![3.0, 3.0])), 0);
        assert_eq!(select_axis(&ev(vec![1.0])), 0);
    }

    #[test]
    fn error_heuristic_branches() {
        // two-level fallback
        assert_eq!(estimate_error(1.0, 0.75, None), 0.25);
        // asymptotic: e1 = 1e-6, e2 = 1e-3
        let e = estimate_error(1.0, 1.0 + 1e-6, Some(1.0 + 1e-6 + 1e-3));
        assert!((e - 1e-6).abs() < 1e-15);
        // not asymptotic: e1 = 1e-3, e2 = 2e-3
        let e = estimate_error(1.0, 1.001, Some(1.003));
        assert!((e - 5.0 * 2e-3).abs() < 1e-12);
        // exact on all levels
        assert_eq!(estimate_error(2.0, 2.0, Some(2.0)), 0.0);
    }

    #[test]
    fn rule_choice_delegates_one_dimension_to_gk() {
        let t = RuleChoice::Gm.build(1).unwrap();
        assert_eq!(t.kind(), RuleKind::GaussKronrodTensor);
        assert_eq!(RuleChoice::Gm.build(3).unwrap().kind(), RuleKind::GenzMalik);
        let custom = RuleChoice::Table(Arc::new(build_gm_rule(2).unwrap()));
        assert!(custom.build(3).is_err());
        assert!(custom.build(2).is_ok());
    }

    #[test]
    fn non_finite_values_become_refinement_signal() {
        let table = build_gm_rule(2).unwrap();
        let rect = HyperRect::cube(2, 0.0, 0.5).unwrap();
        let ev = apply_rule(&table, &rect, &|x: &[f64]| {
            if x[0] == 0.25 && x[1] == 0.25 {
                f64::NAN
            } else {
                1.0
            }
        })
        .unwrap();
        assert!(ev.non_finite);
        assert_eq!(ev.integral, 0.0);
        assert_eq!(ev.error, NONFINITE_ERROR_DENSITY * 0.25);
        assert!(ev.error.is_finite());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let table = build_gm_rule(3).unwrap();
        assert!(apply_rule(&table, &HyperRect::unit(2), &|_: &[f64]| 1.0).is_err());
    }
}
