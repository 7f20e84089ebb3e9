//! Scalar special functions, root finding, 1-D minimization and seeded
//! random streams shared by the interval procedures.

mod minimize;
mod rng;
mod roots;
pub mod special;

pub use minimize::minimize_scalar;
pub use rng::{derive_seed, mix64, RngStream};
pub use roots::find_root;
pub use special::{
    ln_beta, ln_gamma, norm_cdf, norm_pdf, norm_quantile, norm_sf, t_cdf, t_quantile,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl ToleranceConfig {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Result<Self> {
        let cfg = Self {
            abs_tol,
            rel_tol,
            max_iter,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::domain(format!("invalid tolerances {self:?}")));
        }
        Ok(())
    }
}
