//! Blind beam-hardening correction: material estimation, candidate-spectrum
//! regression, effective-energy selection and projection correction.

mod baseline;
mod energy;
mod estimate;
mod lse;
pub mod pipeline;

pub use baseline::{baseline_polynomial_correction, fit_polynomial_map, PolynomialMap};
pub use energy::{
    active_energies, apply_correction, correction_term, select_effective_energy, EnergyScore, EnergySelection,
    ACTIVE_BIN_FRACTION,
};
pub use estimate::{estimate_material, CandidateScore, CandidateSweep, MaterialEstimate};
pub use lse::{combine, estimate_poly_projection, Constraint, LseFit};
pub use pipeline::{run, CorrectionOutcome, CorrectionReport, PipelineConfig, ScannerModel};
