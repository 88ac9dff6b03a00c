//! Genz–Malik degree-7 fully symmetric rule with its embedded degree-5 rule.
//!
//! Generators (reference cube `[-1,1]^d`):
//!
//! | orbit | generator                 | nodes      |
//! |-------|---------------------------|------------|
//! | 1     | `0`                       | 1          |
//! | 2     | `(l2, 0, ..., 0)`         | `2d`       |
//! | 3     | `(l3, 0, ..., 0)`         | `2d`       |
//! | 4     | `(l4, l4, 0, ..., 0)`     | `2d(d-1)`  |
//! | 5     | `(l5, ..., l5)`           | `2^d`      |
//!
//! with `l2 = sqrt(9/70)`, `l3 = l4 = sqrt(9/10)`, `l5 = sqrt(9/19)`, giving
//! `2^d + 2d^2 + 2d + 1` nodes. A third, degree-3 rule on orbits 1 and 3 feeds
//! the two-level error estimate.

use super::{Orbit, RuleKind, RuleTable};
use crate::error::{QuadError, Result};

pub const GM_MIN_DIM: usize = 2;
pub const GM_MAX_DIM: usize = 13;

pub fn build_gm_rule(dim: usize) -> Result<RuleTable> {
    if !(GM_MIN_DIM..=GM_MAX_DIM).contains(&dim) {
        return Err(QuadError::UnsupportedDimension {
            rule: "genz-malik",
            dim,
            min: GM_MIN_DIM,
            max: GM_MAX_DIM,
        });
    }
    let d = dim as f64;
    let l2 = (9.0f64 / 70.0).sqrt();
    let l3 = (9.0f64 / 10.0).sqrt();
    let l4 = l3;
    let l5 = (9.0f64 / 19.0).sqrt();

    // weights normalised to unit volume
    let w = [
        (12824.0 - 9120.0 * d + 400.0 * d * d) / 19683.0,
        980.0 / 6561.0,
        (1820.0 - 400.0 * d) / 19683.0,
        200.0 / 19683.0,
        6859.0 / 19683.0 / 2f64.powi(dim as i32),
    ];
    let we = [
        (729.0 - 950.0 * d + 50.0 * d * d) / 729.0,
        245.0 / 486.0,
        (265.0 - 100.0 * d) / 1458.0,
        25.0 / 729.0,
        0.0,
    ];
    // degree 3 from the centre and the l3 axis points: 2 * w * l3^2 = 1/3
    let w3_axis = 1.0 / (6.0 * l3 * l3);
    let wl = [1.0 - 2.0 * d * w3_axis, 0.0, w3_axis, 0.0, 0.0];

    let axis_point = |v: f64| {
        let mut g = vec![0.0; dim];
        g[0] = v;
        g
    };
    let mut pair = vec![0.0; dim];
    pair[0] = l4;
    pair[1] = l4;
    let generators = [
        vec![0.0; dim],
        axis_point(l2),
        axis_point(l3),
        pair,
        vec![l5; dim],
    ];

    let cube = 2f64.powi(dim as i32);
    let orbits = generators
        .into_iter()
        .enumerate()
        .map(|(k, generator)| Orbit {
            generator,
            weight: w[k] * cube,
            embedded_weight: we[k] * cube,
            lower_weight: Some(wl[k] * cube),
        })
        .collect();

    RuleTable::from_orbits(
        dim,
        RuleKind::GenzMalik,
        7,
        5,
        orbits,
        Some((l2, l3, (l2 * l2) / (l3 * l3))),
    )
}
