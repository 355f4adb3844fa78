//! The end-to-end blind correction flow, exposed both stage by stage and as
//! a single [`run`].

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correction::{
    apply_correction, combine, correction_term, estimate_material, estimate_poly_projection, select_effective_energy,
    CandidateSweep, Constraint, EnergyScore, EnergySelection, LseFit, MaterialEstimate,
};
use crate::error::{Error, Result, Stage, StageExt};
use crate::geometry::{Grid, ScanGeometry, VoxelVolume};
use crate::materials::{MaterialDb, PolyLut, AIR};
use crate::metrics::MetricSet;
use crate::projection::{PathLengths, Sinogram};
use crate::reconstruction::{fbp, RampFilter, ReconImage};
use crate::segmentation::{measured_mu, segment, SegmentationResult, DEFAULT_BINS, DEFAULT_CLASSES};
use crate::spectrum::{default_filter_family, make_filtered_family, DetectorResponse, FilterSpec, ResponseKind, Spectrum};

fn default_classes() -> usize {
    DEFAULT_CLASSES
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_passes() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Must match the setting the look-up table was built for.
    pub setting_id: String,
    pub grid: Grid,
    #[serde(default)]
    pub filter: RampFilter,
    /// Otsu classes including the background.
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    #[serde(default = "default_filter_family")]
    pub family: Vec<FilterSpec>,
    #[serde(default)]
    pub constraint: Constraint,
    #[serde(default)]
    pub sweep: CandidateSweep,
    #[serde(default = "default_passes")]
    pub passes: usize,
    /// One material per foreground class, bypassing estimation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_materials: Option<Vec<String>>,
}

impl PipelineConfig {
    pub fn new(setting_id: impl Into<String>, grid: Grid) -> Self {
        PipelineConfig {
            setting_id: setting_id.into(),
            grid,
            filter: RampFilter::RamLak,
            n_classes: DEFAULT_CLASSES,
            n_bins: DEFAULT_BINS,
            family: default_filter_family(),
            constraint: Constraint::Unconstrained,
            sweep: CandidateSweep::AtLeastInitial,
            passes: 1,
            forced_materials: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(2..=4).contains(&self.n_classes) {
            return Err(Error::invalid(format!("n_classes must be 2..=4, got {}", self.n_classes)));
        }
        if self.passes == 0 {
            return Err(Error::invalid("passes must be at least 1"));
        }
        if self.family.len() < 2 {
            return Err(Error::invalid("the filter family needs at least 2 spectra"));
        }
        if let Some(f) = &self.forced_materials {
            if f.len() != self.n_classes - 1 {
                return Err(Error::invalid(format!(
                    "{} forced materials for {} foreground classes",
                    f.len(),
                    self.n_classes - 1
                )));
            }
        }
        Ok(())
    }
}

/// What the correction assumes about the scanner.
#[derive(Debug, Clone, Copy)]
pub struct ScannerModel<'a> {
    pub db: &'a MaterialDb,
    /// Source spectrum from which the candidate family is derived.
    pub spectrum: &'a Spectrum,
    pub response: ResponseKind,
    pub lut: &'a PolyLut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub voxels: usize,
    /// Material used for the class; air when the class is empty.
    pub material: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<MaterialEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub thresholds: Vec<f64>,
    pub classes: Vec<ClassReport>,
    pub energy_kev: f64,
    pub lse_coefficients: Vec<f64>,
    pub lse_residual_rms: f64,
    pub measured_rms: f64,
    pub correction_max_abs: f64,
    pub energy_sweep: Vec<EnergyScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub setting_id: String,
    pub passes: Vec<PassReport>,
    pub timings: Vec<StageTiming>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_before: Option<MetricSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_after: Option<MetricSet>,
}

impl CorrectionReport {
    pub fn last_pass(&self) -> &PassReport {
        self.passes.last().expect("at least one pass")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Result of correcting one sinogram against a labelled volume.
#[derive(Debug, Clone)]
pub struct ProjectionCorrection {
    pub fit: LseFit,
    pub energy: EnergySelection,
    pub term: Sinogram,
    pub corrected: Sinogram,
}

#[derive(Debug, Clone)]
pub struct CorrectionOutcome {
    pub uncorrected: ReconImage,
    pub segmentation: SegmentationResult,
    pub labels: VoxelVolume,
    pub projection: ProjectionCorrection,
    pub corrected: ReconImage,
    pub report: CorrectionReport,
}

struct Timer(Vec<StageTiming>);

impl Timer {
    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().stage(stage);
        self.0.push(StageTiming { stage: stage.to_string(), seconds: t.elapsed().as_secs_f64() });
        out
    }
}

/// Converts intensities to attenuation with flat-field value `i0`.
pub fn normalize(geometry: ScanGeometry, intensity: &[f64], i0: f64) -> Result<Sinogram> {
    Sinogram::from_intensity(geometry, intensity, i0).stage(Stage::Normalize)
}

pub fn reconstruct(measured: &Sinogram, cfg: &PipelineConfig) -> Result<ReconImage> {
    fbp(measured, &cfg.grid, cfg.filter).stage(Stage::Reconstruct)
}

pub fn segment_image(img: &ReconImage, cfg: &PipelineConfig) -> Result<SegmentationResult> {
    segment(img, cfg.n_classes, cfg.n_bins).stage(Stage::Segment)
}

/// One material per foreground class, estimated or taken from the forced list.
pub fn estimate_materials(
    seg: &SegmentationResult,
    scanner: &ScannerModel,
    geom: &ScanGeometry,
    cfg: &PipelineConfig,
) -> Result<Vec<ClassReport>> {
    let resp = DetectorResponse::for_kind(scanner.response, scanner.spectrum);
    (1..=seg.n_foreground())
        .map(|c| {
            let vol = seg.class_volume(c);
            let voxels = vol.attenuation_values()?.iter().filter(|&&v| v != 0.0).count();
            if voxels == 0 {
                return Ok(ClassReport { class: c, voxels, material: AIR.into(), estimate: None });
            }
            if let Some(forced) = &cfg.forced_materials {
                let m = &forced[c - 1];
                scanner.db.get(m)?;
                let mu = measured_mu(vol)?;
                let estimate = MaterialEstimate {
                    measured_mu: mu,
                    initial: m.clone(),
                    chosen: m.clone(),
                    candidates: Vec::new(),
                };
                return Ok(ClassReport { class: c, voxels, material: m.clone(), estimate: Some(estimate) });
            }
            let est = estimate_material(vol, scanner.lut, scanner.db, scanner.spectrum, &resp, geom, cfg.sweep)?;
            Ok(ClassReport { class: c, voxels, material: est.chosen.clone(), estimate: Some(est) })
        })
        .collect::<Result<_>>()
        .stage(Stage::EstimateMaterials)
}

/// Label volume with class `c` mapped to `materials[c - 1]`.
pub fn label_volume(seg: &SegmentationResult, materials: &[String]) -> Result<VoxelVolume> {
    if materials.len() != seg.n_foreground() {
        return Err(Error::ShapeMismatch(format!(
            "{} materials for {} foreground classes",
            materials.len(),
            seg.n_foreground()
        )));
    }
    let mut names = vec![AIR.to_string()];
    names.extend(materials.iter().cloned());
    VoxelVolume::labels(*seg.grid(), seg.classes().to_vec(), names)
}

/// Fits the candidate family to `measured`, selects the effective energy and
/// applies the resulting correction term.
pub fn correct_from_labels(
    measured: &Sinogram,
    labels: &VoxelVolume,
    scanner: &ScannerModel,
    cfg: &PipelineConfig,
) -> Result<ProjectionCorrection> {
    let mut timer = Timer(Vec::new());
    correct_timed(measured, labels, scanner, cfg, &mut timer)
}

fn correct_timed(
    measured: &Sinogram,
    labels: &VoxelVolume,
    scanner: &ScannerModel,
    cfg: &PipelineConfig,
    timer: &mut Timer,
) -> Result<ProjectionCorrection> {
    let geom = measured.geometry();
    let (paths, candidates) = timer.time(Stage::SimulatePoly, || {
        let paths = PathLengths::from_labels(labels, geom)?;
        let family = make_filtered_family(scanner.spectrum, scanner.db, &cfg.family)?;
        let candidates = family
            .par_iter()
            .map(|s| paths.poly(scanner.db, s, &DetectorResponse::for_kind(scanner.response, s)))
            .collect::<Result<Vec<_>>>()?;
        Ok((paths, candidates))
    })?;
    let fit = timer.time(Stage::FitPoly, || estimate_poly_projection(measured, &candidates, cfg.constraint))?;
    let energy = timer.time(Stage::SelectEnergy, || select_effective_energy(measured, &paths, scanner.db, scanner.spectrum))?;
    let (term, corrected) = timer.time(Stage::Correct, || {
        let term = correction_term(&energy.mono, &fit.fitted)?;
        let corrected = apply_correction(measured, &term)?;
        Ok((term, corrected))
    })?;
    Ok(ProjectionCorrection { fit, energy, term, corrected })
}

/// Corrects `measured` with previously fitted coefficients and energy instead
/// of refitting them.
pub fn correct_with_fit(
    measured: &Sinogram,
    labels: &VoxelVolume,
    scanner: &ScannerModel,
    cfg: &PipelineConfig,
    coefficients: &[f64],
    energy_kev: f64,
) -> Result<Sinogram> {
    if coefficients.len() != cfg.family.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficients for a family of {}",
            coefficients.len(),
            cfg.family.len()
        )));
    }
    let geom = measured.geometry();
    let paths = PathLengths::from_labels(labels, geom).stage(Stage::SimulatePoly)?;
    let family = make_filtered_family(scanner.spectrum, scanner.db, &cfg.family).stage(Stage::SimulatePoly)?;
    let candidates = family
        .par_iter()
        .map(|s| paths.poly(scanner.db, s, &DetectorResponse::for_kind(scanner.response, s)))
        .collect::<Result<Vec<_>>>()
        .stage(Stage::SimulatePoly)?;
    let fitted = measured
        .derive(combine(&candidates, coefficients), crate::projection::SinogramKind::FittedPoly, Default::default())
        .stage(Stage::FitPoly)?;
    let mono = paths.mono(scanner.db, energy_kev).stage(Stage::SelectEnergy)?;
    let term = correction_term(&mono, &fitted).stage(Stage::Correct)?;
    apply_correction(measured, &term).stage(Stage::Correct)
}

/// Reconstruct, segment, estimate materials, correct and reconstruct again.
/// Extra passes re-segment the previous corrected image but always correct
/// the original measurement.
pub fn run(measured: &Sinogram, scanner: &ScannerModel, cfg: &PipelineConfig) -> Result<CorrectionOutcome> {
    cfg.validate()?;
    scanner.lut.check_setting(&cfg.setting_id)?;
    let mut timer = Timer(Vec::new());
    let uncorrected = timer.time(Stage::Reconstruct, || fbp(measured, &cfg.grid, cfg.filter))?;
    let mut image = uncorrected.clone();
    let mut passes = Vec::new();
    let mut last = None;
    for _ in 0..cfg.passes {
        let seg = timer.time(Stage::Segment, || segment(&image, cfg.n_classes, cfg.n_bins))?;
        let t = Instant::now();
        let classes = estimate_materials(&seg, scanner, measured.geometry(), cfg)?;
        timer.0.push(StageTiming { stage: Stage::EstimateMaterials.to_string(), seconds: t.elapsed().as_secs_f64() });
        let materials: Vec<String> = classes.iter().map(|c| c.material.clone()).collect();
        let labels = label_volume(&seg, &materials)?;
        let pc = correct_timed(measured, &labels, scanner, cfg, &mut timer)?;
        image = timer.time(Stage::Rereconstruct, || fbp(&pc.corrected, &cfg.grid, cfg.filter))?;
        passes.push(PassReport {
            thresholds: seg.thresholds.clone(),
            classes,
            energy_kev: pc.energy.energy_kev,
            lse_coefficients: pc.fit.coefficients.clone(),
            lse_residual_rms: pc.fit.residual,
            measured_rms: crate::stats::rms(measured.values()),
            correction_max_abs: pc.term.values().iter().fold(0.0, |m, v| m.max(v.abs())),
            energy_sweep: pc.energy.sweep.clone(),
        });
        last = Some((seg, labels, pc));
    }
    let (segmentation, labels, projection) = last.expect("at least one pass");
    let report = CorrectionReport {
        setting_id: cfg.setting_id.clone(),
        passes,
        timings: timer.0,
        metrics_before: None,
        metrics_after: None,
    };
    Ok(CorrectionOutcome { uncorrected, segmentation, labels, projection, corrected: image, report })
}
