//! Data types and the pure mathematics of the average adjusted association.

mod data;
mod dgp;
mod estimate;
mod score;

pub use data::{ColumnKind, Covariates, Dataset, Form, NuisanceTriple};
pub use dgp::{DiscreteDgp, PointLaw, TruthModel};
pub use estimate::{normal_quantile, Estimate, EstimatorLabel};
pub use score::{
    dr_efficient_score, dr_moment, expit, log_or_prospective, log_or_retrospective, logit,
    psi_prospective, psi_retrospective,
};

use crate::error::Result;

/// Uncentered score in the requested form. `label` and `cond` follow
/// [`Form::roles`]: `(y, t)` for the prospective form, `(t, y)` for the
/// retrospective one.
pub fn psi(form: Form, label: u8, cond: u8, f0: f64, f1: f64, w: f64) -> Result<f64> {
    match form {
        Form::Prospective => psi_prospective(label, cond, f0, f1, w),
        Form::Retrospective => psi_retrospective(label, cond, f0, f1, w),
    }
}
