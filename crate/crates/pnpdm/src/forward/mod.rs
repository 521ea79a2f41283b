//! Forward models: linear operators with adjoints and spectral structure,
//! magnitude measurement models, and likelihood potentials.

mod linear;
mod nonlinear;
mod potential;

pub use linear::{BlockDownsample, CirculantConv2d, DenseOperator, LinearOperator};
pub use nonlinear::{cdp_forward, fpr_forward, random_unit_mask, CdpModel, ComplexLinear, FprModel};
pub use potential::{LinearGaussianPotential, MagnitudePotential, Potential};
