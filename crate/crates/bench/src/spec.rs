//! Experiment descriptions.

use std::fmt;
use std::str::FromStr;

use distquad::driver::DriverConfig;
use distquad::integrands::{make_integrand, BenchmarkIntegrand, IntegrandId};
use distquad::rules::RuleChoice;
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Peak position of the shifted `f2` variant: inside the `[0, 1/2)^d` octant.
pub const CORNER_PEAK: f64 = 0.2;

/// A benchmark integrand, or the `f2` variant whose peak sits in one corner
/// octant (`f2-corner`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FunctionId {
    Suite(IntegrandId),
    F2Corner,
}

impl FunctionId {
    pub fn build(&self, dim: usize) -> distquad::Result<BenchmarkIntegrand> {
        match self {
            FunctionId::Suite(id) => make_integrand(*id, dim),
            FunctionId::F2Corner => BenchmarkIntegrand::f2_with_peak(dim, CORNER_PEAK),
        }
    }

    pub fn all_suite() -> Vec<FunctionId> {
        IntegrandId::ALL.iter().map(|&id| FunctionId::Suite(id)).collect()
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionId::Suite(id) => write!(f, "{id}"),
            FunctionId::F2Corner => f.write_str("f2-corner"),
        }
    }
}

impl FromStr for FunctionId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        if s == "f2-corner" {
            return Ok(FunctionId::F2Corner);
        }
        s.parse::<IntegrandId>()
            .map(FunctionId::Suite)
            .map_err(|_| BenchError::InvalidSpec(format!("unknown function {s:?}")))
    }
}

/// Serialized as its display string, e.g. `"f2-corner"`.
impl Serialize for FunctionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FunctionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleId {
    Gm,
    GkTensor,
}

impl RuleId {
    pub fn choice(&self) -> RuleChoice {
        match self {
            RuleId::Gm => RuleChoice::Gm,
            RuleId::GkTensor => RuleChoice::GkTensor,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.choice().name())
    }
}

impl FromStr for RuleId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "gm" => Ok(RuleId::Gm),
            "gk" | "gk-tensor" => Ok(RuleId::GkTensor),
            _ => Err(BenchError::InvalidSpec(format!("unknown rule {s:?} (gm, gk)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendId {
    DeterministicSim,
    Concurrent,
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendId::DeterministicSim => "deterministic_sim",
            BackendId::Concurrent => "concurrent",
        })
    }
}

impl FromStr for BackendId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "sim" | "deterministic_sim" => Ok(BackendId::DeterministicSim),
            "concurrent" | "threads" => Ok(BackendId::Concurrent),
            _ => Err(BenchError::InvalidSpec(format!(
                "unknown backend {s:?} (sim, concurrent)"
            ))),
        }
    }
}

/// One sweep: the cartesian product of functions, dimensions, tolerances
/// and worker counts, repeated `repetitions` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub functions: Vec<FunctionId>,
    pub dims: Vec<usize>,
    pub tolerances: Vec<f64>,
    pub workers: Vec<usize>,
    pub rule: RuleId,
    pub backend: BackendId,
    pub repetitions: usize,
    /// Reserved for randomized tie-breaking; nothing is randomized today.
    pub seed: u64,
    pub cap: usize,
    pub init_per_rank: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    pub output_path: Option<String>,
}

fn default_max_iterations() -> usize {
    DriverConfig::new(1e-6).max_iterations
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            functions: FunctionId::all_suite(),
            dims: vec![2],
            tolerances: vec![1e-3, 1e-6],
            workers: vec![1],
            rule: RuleId::Gm,
            backend: BackendId::DeterministicSim,
            repetitions: 1,
            seed: 0,
            cap: 512,
            init_per_rank: 8,
            max_iterations: default_max_iterations(),
            output_path: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidSpec(m.into()));
        if self.functions.is_empty() || self.dims.is_empty() || self.tolerances.is_empty() {
            return bad("functions, dims and tolerances must be non-empty");
        }
        if self.workers.is_empty() {
            return bad("workers must be non-empty");
        }
        if self.dims.contains(&0) {
            return bad("dimensions must be at least 1");
        }
        if self.workers.contains(&0) {
            return bad("worker counts must be at least 1");
        }
        if self.tolerances.iter().any(|t| !(t.is_finite() && *t > 0.0 && *t < 1.0)) {
            return bad("tolerances must lie in (0, 1)");
        }
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1");
        }
        if self.cap < 1 || self.init_per_rank < 1 || self.max_iterations < 1 {
            return bad("cap, init-per-rank and max-iterations must be at least 1");
        }
        Ok(())
    }
}

/// Parses a list of tolerance exponents `k` (tolerance `10^-k`): either
/// `a..b` or `a..b:step` (inclusive), or a comma list `3,6,9`.
pub fn parse_tol_exponents(s: &str) -> Result<Vec<f64>, BenchError> {
    let bad = || BenchError::InvalidSpec(format!("bad tolerance exponent range {s:?}"));
    let int = |t: &str| t.trim().parse::<i32>().map_err(|_| bad());
    let ks: Vec<i32> = if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, st)) => (int(b)?, int(st)?),
            None => (int(rest)?, 1),
        };
        let a = int(a)?;
        if step < 1 || b < a {
            return Err(bad());
        }
        (a..=b).step_by(step as usize).collect()
    } else {
        s.split(',').map(int).collect::<Result<_, _>>()?
    };
    if ks.is_empty() || ks.iter().any(|&k| !(1..=15).contains(&k)) {
        return Err(bad());
    }
    Ok(ks.into_iter().map(|k| 10f64.powi(-k)).collect())
}

/// Parses a comma-separated list.
pub fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>, BenchError> {
    let out: Vec<T> = s
        .split(',')
        .map(|t| t.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| BenchError::InvalidSpec(format!("bad {what} list {s:?}")))?;
    if out.is_empty() {
        return Err(BenchError::InvalidSpec(format!("empty {what} list")));
    }
    Ok(out)
}

/// Parses `--function`: a comma list of ids, or `all` for `f1`–`f7`.
pub fn parse_functions(s: &str) -> Result<Vec<FunctionId>, BenchError> {
    if s == "all" {
        return Ok(FunctionId::all_suite());
    }
    s.split(',').map(|t| t.trim().parse()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_ranges() {
        assert_eq!(parse_tol_exponents("3..5").unwrap(), vec![1e-3, 1e-4, 1e-5]);
        assert_eq!(parse_tol_exponents("3..9:3").unwrap(), vec![1e-3, 1e-6, 1e-9]);
        assert_eq!(parse_tol_exponents("4,8").unwrap(), vec![1e-4, 1e-8]);
        for bad in ["", "5..3", "3..9:0", "x", "0", "3..20"] {
            assert!(parse_tol_exponents(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn ids_round_trip() {
        for s in ["f1", "f7", "f2-corner"] {
            assert_eq!(s.parse::<FunctionId>().unwrap().to_string(), s);
        }
        assert!("f8".parse::<FunctionId>().is_err());
        assert_eq!(parse_functions("all").unwrap().len(), 7);
        assert_eq!("gk".parse::<RuleId>().unwrap().to_string(), "gk-tensor");
        assert_eq!("sim".parse::<BackendId>().unwrap().to_string(), "deterministic_sim");
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ExperimentSpec {
            functions: vec![FunctionId::F2Corner, FunctionId::Suite(IntegrandId::F3)],
            ..Default::default()
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"f2-corner\"") && json.contains("\"deterministic_sim\""));
        assert_eq!(serde_json::from_str::<ExperimentSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn validation() {
        assert!(ExperimentSpec::default().validate().is_ok());
        let cases = [
            ExperimentSpec { dims: vec![], ..Default::default() },
            ExperimentSpec { workers: vec![0], ..Default::default() },
            ExperimentSpec { tolerances: vec![2.0], ..Default::default() },
            ExperimentSpec { repetitions: 0, ..Default::default() },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(BenchError::InvalidSpec(_))));
        }
    }
}
