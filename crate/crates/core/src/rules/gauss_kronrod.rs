//! Tensor product of the 7-point Gauss / 15-point Kronrod pair.
//!
//! `15^d` nodes per region; dimensions above [`GK_MAX_DIM`] are refused.

use super::{orbit, NodeLayout, Orbit, RuleEvaluation, RuleKind, RuleTable};
use crate::error::{QuadError, Result};
use crate::Integrand;

pub const GK_MAX_DIM: usize = 6;

/// Non-negative Kronrod abscissae, ascending.
const XK: [f64; 8] = [
    0.0,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.991_455_371_120_812_639_206_854_697_526_329,
];

const WK: [f64; 8] = [
    0.209_482_141_084_727_828_012_999_174_891_714,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.022_935_322_010_529_224_963_732_008_058_970,
];

/// Gauss weights on the same abscissae (zero where the node is Kronrod-only).
const WG: [f64; 8] = [
    0.417_959_183_673_469_387_755_102_040_816_327,
    0.0,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.0,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.0,
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.0,
];

/// Full symmetric 15-point rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub(super) struct Tensor1d {
    x: [f64; 15],
    wk: [f64; 15],
    wg: [f64; 15],
}

impl Tensor1d {
    fn g7k15() -> Self {
        let mut t = Tensor1d {
            x: [0.0; 15],
            wk: [0.0; 15],
            wg: [0.0; 15],
        };
        for k in 0..8 {
            // index 7 is the centre; 7 - k and 7 + k mirror each other
            t.x[7 + k] = XK[k];
            t.x[7 - k] = -XK[k];
            t.wk[7 + k] = WK[k];
            t.wk[7 - k] = WK[k];
            t.wg[7 + k] = WG[k];
            t.wg[7 - k] = WG[k];
        }
        t
    }

    /// Evaluates the tensor rule. The error is `|K - G|` over the full tensor
    /// products; the score of axis `i` is `|K - Q_i|` where `Q_i` uses the
    /// Gauss rule on axis `i` and Kronrod elsewhere.
    pub(super) fn apply<F: Integrand + ?Sized>(
        &self,
        d: usize,
        center: &[f64],
        half: &[f64],
        scale: f64,
        f: &F,
    ) -> RuleEvaluation {
        let mut idx = vec![0usize; d];
        let mut x: Vec<f64> = (0..d).map(|j| center[j] + half[j] * self.x[0]).collect();
        let mut kronrod = 0.0;
        let mut gauss = 0.0;
        let mut abs_sum = 0.0;
        let mut per_axis = vec![0.0; d];
        let mut non_finite = false;
        let mut n = 0usize;
        loop {
            let v = f.eval(&x);
            non_finite |= !v.is_finite();
            let wk: f64 = idx.iter().map(|&i| self.wk[i]).product();
            let wg: f64 = idx.iter().map(|&i| self.wg[i]).product();
            kronrod += wk * v;
            gauss += wg * v;
            abs_sum += wk * v.abs();
            for (axis, &i) in idx.iter().enumerate() {
                if self.wg[i] != 0.0 {
                    per_axis[axis] += wk / self.wk[i] * self.wg[i] * v;
                }
            }
            n += 1;

            // odometer
            let mut axis = 0;
            loop {
                if axis == d {
                    let integral = kronrod * scale;
                    return RuleEvaluation {
                        integral,
                        error: (kronrod - gauss).abs() * scale,
                        axis_scores: per_axis.iter().map(|q| (kronrod - q).abs() * scale).collect(),
                        score_noise: 16.0 * f64::EPSILON * abs_sum * scale,
                        f_evals: n,
                        non_finite,
                    };
                }
                idx[axis] += 1;
                if idx[axis] < 15 {
                    x[axis] = center[axis] + half[axis] * self.x[idx[axis]];
                    break;
                }
                idx[axis] = 0;
                x[axis] = center[axis] + half[axis] * self.x[0];
                axis += 1;
            }
        }
    }
}

pub fn build_gk_tensor_rule(dim: usize) -> Result<RuleTable> {
    if dim == 0 || dim > GK_MAX_DIM {
        return Err(QuadError::UnsupportedDimension {
            rule: "gauss-kronrod tensor (cost grows as 15^d; capped at d = 6)",
            dim,
            min: 1,
            max: GK_MAX_DIM,
        });
    }
    // orbits of the tensor grid are the multisets of non-negative abscissae
    let mut orbits = Vec::new();
    let mut pick = vec![0usize; dim];
    loop {
        let generator: Vec<f64> = pick.iter().map(|&k| XK[k]).collect();
        orbits.push(Orbit {
            generator: orbit::canonical(&generator),
            weight: pick.iter().map(|&k| WK[k]).product(),
            embedded_weight: pick.iter().map(|&k| WG[k]).product(),
            lower_weight: None,
        });
        // next non-decreasing index sequence
        let Some(pos) = (0..dim).rev().find(|&p| pick[p] < XK.len() - 1) else {
            break;
        };
        let v = pick[pos] + 1;
        for p in pick.iter_mut().skip(pos) {
            *p = v;
        }
    }
    let table = RuleTable {
        dim,
        kind: RuleKind::GaussKronrodTensor,
        degree: 22,
        embedded_degree: 13,
        orbits,
        node_count: 15usize.pow(dim as u32),
        layout: NodeLayout::Tensor(Tensor1d::g7k15()),
        probe: None,
    };
    table.check_weight_sums()?;
    Ok(table)
}
