//! Spectra of the Dirac operator on flat 3-tori under conformal deformation.
//!
//! Spinor fields on `T³ = R³/2πZ³` are truncated Fourier series over a mode
//! set determined by a spin structure. Conformal deformations `e^{2tf} g` of
//! the flat metric turn the eigenproblem into a Hermitian-definite pencil
//! that is solved densely. On top of this sit first-order perturbation
//! theory for degenerate eigenspaces and Monte Carlo genericity experiments.

pub mod cli;
pub mod conformal;
pub mod eigensolver;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod perturbation;
pub mod spinor;
pub mod torus;
pub mod validation;

pub use conformal::{deformed_spectrum, ConformalFactor, DeformedOperator};
pub use eigensolver::{SpectrumArtifact, SpectrumResult, Tolerances};
pub use error::{DiracError, Result};
pub use experiments::{
    genericity_scan, random_factor, simplicity_certificate, split_search, GenericityReport,
    ScanParams, SplitCertificate, SplitOptions,
};
pub use perturbation::{fd_check, perturbation_matrix, EigenCluster, PerturbationReport};
pub use spinor::{Spinor, Vector3};
pub use torus::{build_mode_set, closed_form_spectrum, ModeSet, SpinStructure, SpinorField};
