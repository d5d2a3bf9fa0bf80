//! Alternating maximum-likelihood estimation of the latent model.
//!
//! The fit alternates between two conditional problems. With the weights
//! `R̂` fixed, the DLVs `V̂_i = Y_i R̂` are extracted and their VAR is refit by
//! least squares. With the VAR fixed, the loadings are regressed on the
//! predicted DLVs and the weights recovered from the decorrelation
//! constraint between DLV innovations and static noise. The loop stops on the
//! relative change of the oblique projector `P̂R̂ᵀ`, the only identifiable
//! part of `(P̂, R̂)`.

mod config;
mod driver;
mod dynamics;
mod oblique;
mod result;
mod stacks;

pub use config::FitConfig;
pub use driver::{fit_predvar, init_weights};
pub use dynamics::{dlv_objective, stack_coeffs, unstack_coeffs, update_dynamics, DynamicsUpdate};
pub use oblique::{constrained_weights, fit_oblique, proj_objective, update_loadings, LoadingsUpdate, ObliqueFit, WeightRule};
pub use result::{Algorithm, FitResult, IdentityResiduals, ObjectiveRecord, Scaling};
pub use stacks::{build_stacks, extract_dlvs, LatentStacks, StackedData};

pub(crate) use driver::{alternate, complete, prepare, Estimate};
