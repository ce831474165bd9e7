//! Numerical toolkit for wave operators `L = diag(L1, L2)` built from
//! structured Lipschitz coefficients `a_1..a_2d`, each depending on a single
//! coordinate.
//!
//! The crate provides the building blocks and the measurement machinery:
//!
//! * periodic grids, two-component complex fields, L^p norms, FFTs ([`grid`],
//!   [`field`], [`fft`], [`io`]);
//! * coefficient profiles, the 1D primitive and its bi-Lipschitz flow
//!   ([`coeffs`]);
//! * flux-form 1D blocks, their spectra and transport groups ([`spectral1d`]);
//! * the first-order block system `D_a`, its exponentials, polar transform
//!   calculus and finite-speed measurements ([`dirac`]);
//! * scale/direction wave packet frames ([`wavepackets`]);
//! * tent-space norms over scale ladders ([`tent`]);
//! * directional Hardy-Sobolev norms and embedding experiments ([`hpfio`]);
//! * tensorised functions of `L`: heat, Bessel potentials, half-wave group,
//!   multiplier symbols, drift perturbations ([`propagators`]);
//! * certified lower bounds for L^p -> L^p operator norms ([`opnorm`]).

pub mod coeffs;
pub mod dense;
pub mod dirac;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod hpfio;
pub mod io;
pub mod krylov;
pub mod opnorm;
pub mod propagators;
pub mod spectral1d;
pub mod tent;
pub mod util;
pub mod wavepackets;

pub use error::{Result, RwError};
pub use field::{lp_norm, Field};
pub use grid::TorusGrid;

pub use num_complex::Complex64;
