//! Batch h-adaptive cubature over hyper-rectangles.
//!
//! The crate is organised bottom-up:
//!
//! * [`region`]: hyper-rectangles and the columnar [`region::RegionStore`].
//! * [`rules`]: fully symmetric Genz–Malik and tensor Gauss–Kronrod cubature
//!   rules with embedded error estimates and split-axis scores.
//! * [`driver`]: the single-worker loop (evaluate, reduce, check, filter and
//!   split in one pass).
//! * [`distributed`]: the same loop over `P` workers that exchange metadata
//!   once per iteration and rebalance regions with a round-robin
//!   donor/receiver policy.
//! * [`integrands`]: the seven benchmark integrands with reference values.
//!
//! ```
//! use distquad::driver::{integrate, DriverConfig};
//! use distquad::region::HyperRect;
//!
//! let domain = HyperRect::unit(2);
//! let cfg = DriverConfig::new(1e-10);
//! let res = integrate(&|x: &[f64]| x[0] * x[1], &domain, &cfg).unwrap();
//! assert!((res.integral - 0.25).abs() < 1e-12);
//! ```

pub mod distributed;
pub mod driver;
pub mod error;
pub mod integrands;
pub mod region;
pub mod rules;
pub mod sum;

pub use error::{QuadError, Result};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A real-valued function on points of the integration domain.
///
/// Implemented for every `Fn(&[f64]) -> f64 + Sync`, so closures work directly.
/// Integrands must be pure: batches are evaluated concurrently.
pub trait Integrand: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F> Integrand for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}
