//! Benchmark integrands `f1`–`f7` on `[0,1]^d` with reference values.
//!
//! | id | integrand                                   | character     |
//! |----|---------------------------------------------|---------------|
//! | f1 | `cos(sum i x_i)`                            | oscillatory   |
//! | f2 | `prod 1 / (50^-2 + (x_i - 1/2)^2)`          | product peak  |
//! | f3 | `(1 + sum i x_i)^-(d+1)`                    | corner peak   |
//! | f4 | `exp(-25^2 sum (x_i - 1/2)^2)`              | Gaussian      |
//! | f5 | `exp(-10 sum abs(x_i - 1/2))`               | C0 kink       |
//! | f6 | `exp(sum (i+4) x_i)`, zero if any `x_i > (3+i)/10` | discontinuous |
//! | f7 | `(sum x_i^2)^11`                            | polynomial    |
//!
//! Axis indices `i` are 1-based in the formulas.

use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::complex::Complex64;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};

use crate::error::{QuadError, Result};
use crate::Integrand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntegrandId {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
}

impl IntegrandId {
    pub const ALL: [IntegrandId; 7] = [
        IntegrandId::F1,
        IntegrandId::F2,
        IntegrandId::F3,
        IntegrandId::F4,
        IntegrandId::F5,
        IntegrandId::F6,
        IntegrandId::F7,
    ];
}

impl fmt::Display for IntegrandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = *self as usize + 1;
        write!(f, "f{n}")
    }
}

impl FromStr for IntegrandId {
    type Err = QuadError;

    fn from_str(s: &str) -> Result<Self> {
        let n: usize = s
            .strip_prefix('f')
            .or_else(|| s.strip_prefix('F'))
            .and_then(|n| n.parse().ok())
            .filter(|n| (1..=7).contains(n))
            .ok_or_else(|| QuadError::InvalidConfig(format!("unknown integrand `{s}`")))?;
        Ok(IntegrandId::ALL[n - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    /// Exact rational expansion evaluated in arbitrary precision.
    Oracle,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::ClosedForm => "closed_form",
            Provenance::Oracle => "oracle",
        })
    }
}

/// One benchmark integrand at a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkIntegrand {
    id: IntegrandId,
    dim: usize,
    /// Peak location of f2 on every axis (1/2 for the standard integrand).
    peak: f64,
    reference: f64,
    provenance: Provenance,
}

pub fn make_integrand(id: IntegrandId, dim: usize) -> Result<BenchmarkIntegrand> {
    if dim == 0 {
        return Err(QuadError::InvalidConfig("dimension must be at least 1".into()));
    }
    let provenance = match id {
        IntegrandId::F3 | IntegrandId::F7 => Provenance::Oracle,
        _ => Provenance::ClosedForm,
    };
    Ok(BenchmarkIntegrand {
        id,
        dim,
        peak: 0.5,
        reference: reference_integral(id, dim),
        provenance,
    })
}

impl BenchmarkIntegrand {
    /// f2 with its peak moved to `center` on every axis, e.g. `0.2` to put
    /// all the difficulty into one corner octant.
    pub fn f2_with_peak(dim: usize, center: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&center) {
            return Err(QuadError::InvalidConfig(format!(
                "peak centre {center} outside [0, 1]"
            )));
        }
        let mut f = make_integrand(IntegrandId::F2, dim)?;
        f.peak = center;
        f.reference = lorentz_1d(center).powi(dim as i32);
        Ok(f)
    }

    pub fn id(&self) -> IntegrandId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn reference_value(&self) -> f64 {
        self.reference
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let d = x.len();
        let axis_weight = |i: usize| (i + 1) as f64;
        match self.id {
            IntegrandId::F1 => x
                .iter()
                .enumerate()
                .map(|(i, &v)| axis_weight(i) * v)
                .sum::<f64>()
                .cos(),
            IntegrandId::F2 => x
                .iter()
                .map(|&v| 1.0 / (1.0 / 2500.0 + (v - self.peak) * (v - self.peak)))
                .product(),
            IntegrandId::F3 => {
                let s: f64 = x.iter().enumerate().map(|(i, &v)| axis_weight(i) * v).sum();
                (1.0 + s).powi(-(d as i32 + 1))
            }
            IntegrandId::F4 => {
                let s: f64 = x.iter().map(|&v| (v - 0.5) * (v - 0.5)).sum();
                (-625.0 * s).exp()
            }
            IntegrandId::F5 => {
                let s: f64 = x.iter().map(|&v| (v - 0.5).abs()).sum();
                (-10.0 * s).exp()
            }
            IntegrandId::F6 => {
                if x.iter().enumerate().any(|(i, &v)| v > f6_threshold(i)) {
                    0.0
                } else {
                    x.iter()
                        .enumerate()
                        .map(|(i, &v)| (axis_weight(i) + 4.0) * v)
                        .sum::<f64>()
                        .exp()
                }
            }
            IntegrandId::F7 => x.iter().map(|&v| v * v).sum::<f64>().powi(11),
        }
    }
}

impl Integrand for BenchmarkIntegrand {
    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        self.evaluate(x)
    }
}

/// Discontinuity location of f6 on 0-based axis `i`: `(3 + (i+1)) / 10`.
fn f6_threshold(i: usize) -> f64 {
    (4 + i) as f64 / 10.0
}

/// `int_0^1 1/(50^-2 + (x-c)^2) dx`.
fn lorentz_1d(c: f64) -> f64 {
    50.0 * ((50.0 * (1.0 - c)).atan() + (50.0 * c).atan())
}

/// Exact integral of f_`id` over `[0,1]^dim`.
pub fn reference_integral(id: IntegrandId, dim: usize) -> f64 {
    let d = dim as i32;
    match id {
        IntegrandId::F1 => {
            // Re prod_k (e^{ik} - 1) / (ik) = prod_k (sin k + i (1 - cos k)) / k
            let p = (1..=dim).fold(Complex64::new(1.0, 0.0), |acc, k| {
                let k = k as f64;
                acc * Complex64::new(k.sin() / k, (1.0 - k.cos()) / k)
            });
            p.re
        }
        IntegrandId::F2 => lorentz_1d(0.5).powi(d),
        IntegrandId::F3 => f3_exact(dim),
        IntegrandId::F4 => (std::f64::consts::PI.sqrt() / 25.0 * libm::erf(12.5)).powi(d),
        IntegrandId::F5 => ((1.0 - (-5.0f64).exp()) / 5.0).powi(d),
        IntegrandId::F6 => (0..dim)
            .map(|i| {
                let a = (i + 5) as f64;
                let t = f6_threshold(i).min(1.0);
                (a * t).exp_m1() / a
            })
            .product(),
        IntegrandId::F7 => f7_exact(dim),
    }
}

/// `int (1 + sum a_i x_i)^-(d+1)` with `a_i = i`, by integrating one axis at
/// a time: `(d! prod a_i)^-1 sum_S (-1)^|S| / (1 + sum_{i in S} a_i)`.
fn f3_exact(dim: usize) -> f64 {
    let max_sum = dim * (dim + 1) / 2;
    // signed number of subsets with each coefficient sum
    let mut counts = vec![0i64; max_sum + 1];
    counts[0] = 1;
    for a in 1..=dim {
        for s in (a..=max_sum).rev() {
            counts[s] -= counts[s - a];
        }
    }
    let mut total = BigRational::zero();
    for (s, &c) in counts.iter().enumerate() {
        if c != 0 {
            total += BigRational::new(BigInt::from(c), BigInt::from(s as u64 + 1));
        }
    }
    let fact: BigInt = (1..=dim as u64).map(BigInt::from).product();
    let denom = &fact * &fact;
    (total / BigRational::from_integer(denom))
        .to_f64()
        .expect("finite rational")
}

/// `int (sum x_i^2)^11 = 11! [t^11] (sum_k t^k / (k! (2k+1)))^d`.
fn f7_exact(dim: usize) -> f64 {
    const P: usize = 11;
    let mut fact = vec![BigInt::one()];
    for k in 1..=P {
        let next = &fact[k - 1] * BigInt::from(k as u64);
        fact.push(next);
    }
    let base: Vec<BigRational> = (0..=P)
        .map(|k| BigRational::new(BigInt::one(), &fact[k] * BigInt::from(2 * k as u64 + 1)))
        .collect();
    let mut acc = vec![BigRational::zero(); P + 1];
    acc[0] = BigRational::one();
    for _ in 0..dim {
        let mut next = vec![BigRational::zero(); P + 1];
        for (i, a) in acc.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in base.iter().enumerate().take(P + 1 - i) {
                next[i + j] += a * b;
            }
        }
        acc = next;
    }
    (&acc[P] * BigRational::from_integer(fact[P].clone()))
        .to_f64()
        .expect("finite rational")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(id: IntegrandId, d: usize) -> BenchmarkIntegrand {
        make_integrand(id, d).unwrap()
    }

    #[test]
    fn point_values() {
        assert_eq!(f(IntegrandId::F1, 1).evaluate(&[0.0]), 1.0);
        assert_eq!(f(IntegrandId::F6, 2).evaluate(&[0.5, 0.1]), 0.0);
        assert_eq!(f(IntegrandId::F6, 2).evaluate(&[0.4, 0.1]), (5.0f64 * 0.4 + 6.0 * 0.1).exp());
        assert_eq!(f(IntegrandId::F7, 3).evaluate(&[1.0, 1.0, 1.0]), 177147.0);
        assert_eq!(f(IntegrandId::F2, 1).evaluate(&[0.5]), 2500.0);
        assert_eq!(f(IntegrandId::F3, 2).evaluate(&[0.0, 0.0]), 1.0);
    }

    #[test]
    fn one_dimensional_references() {
        let r = |id| reference_integral(id, 1);
        assert!((r(IntegrandId::F1) - 1f64.sin()).abs() < 1e-16);
        assert!((r(IntegrandId::F2) - 100.0 * 25f64.atan()).abs() < 1e-12);
        assert!((r(IntegrandId::F2) - 153.081_764).abs() < 1e-6);
        assert_eq!(r(IntegrandId::F3), 0.5);
        assert!((r(IntegrandId::F4) - 0.070_898_154_036_220_64).abs() < 1e-15);
        assert!((r(IntegrandId::F5) - 0.198_652_410_600_182_9).abs() < 1e-15);
        assert!((r(IntegrandId::F6) - (2f64.exp() - 1.0) / 5.0).abs() < 1e-15);
        assert!((r(IntegrandId::F6) - 1.277_811_2).abs() < 1e-7);
        assert!((r(IntegrandId::F7) - 1.0 / 23.0).abs() < 1e-17);
    }

    #[test]
    fn closed_form_two_dimensional_values() {
        assert!((reference_integral(IntegrandId::F2, 2) - 23434.0).abs() < 1.0);
        // int int (1 + x + 2y)^-3: (1/2 - 1/12) / 4 = 5/48 by hand
        assert!((reference_integral(IntegrandId::F3, 2) - 5.0 / 48.0).abs() < 1e-16);
        // f7 at d = 2 expands (x^2 + y^2)^11 termwise
        let by_hand: f64 = (0..=11u32)
            .map(|k| {
                let binom = (0..k).fold(1.0, |b, j| b * (11 - j) as f64 / (j + 1) as f64);
                binom / ((2 * k + 1) as f64 * (2 * (11 - k) + 1) as f64)
            })
            .sum();
        assert!((reference_integral(IntegrandId::F7, 2) - by_hand).abs() < 1e-13 * by_hand);
    }

    #[test]
    fn separable_references_are_powers() {
        for id in [IntegrandId::F2, IntegrandId::F4, IntegrandId::F5] {
            for d in 1..=8 {
                assert_eq!(reference_integral(id, d), reference_integral(id, 1).powi(d as i32));
            }
        }
    }

    #[test]
    fn shifted_peak_reference() {
        let g = BenchmarkIntegrand::f2_with_peak(3, 0.5).unwrap();
        assert!((g.reference_value() - reference_integral(IntegrandId::F2, 3)).abs() < 1e-9);
        let g = BenchmarkIntegrand::f2_with_peak(2, 0.2).unwrap();
        assert_eq!(g.evaluate(&[0.2, 0.2]), 2500.0 * 2500.0);
        assert!(BenchmarkIntegrand::f2_with_peak(2, 1.5).is_err());
    }

    #[test]
    fn ids_parse_and_print() {
        for id in IntegrandId::ALL {
            assert_eq!(id.to_string().parse::<IntegrandId>().unwrap(), id);
        }
        assert!("f8".parse::<IntegrandId>().is_err());
        assert!("g1".parse::<IntegrandId>().is_err());
    }

    #[test]
    fn f6_beyond_seven_axes_uses_whole_interval() {
        // axis 8 has threshold 1.1 > 1, so its factor is (e^12 - 1)/12
        let ratio = reference_integral(IntegrandId::F6, 8) / reference_integral(IntegrandId::F6, 7);
        assert!((ratio - 12f64.exp_m1() / 12.0).abs() < 1e-9 * ratio);
    }
}
