//! Desk-scale scanner shared by the integration and acceptance tests.
#![allow(dead_code)]

use bhc_core::correction::pipeline::{PipelineConfig, ScannerModel};
use bhc_core::geometry::{rasterize_phantom, Grid, ScanGeometry, VoxelVolume};
use bhc_core::materials::{build_lut, CalibrationSetup, MaterialDb, PolyLut};
use bhc_core::phantoms::builtin_phantom;
use bhc_core::projection::{project_poly, Sinogram};
use bhc_core::reconstruction::RampFilter;
use bhc_core::spectrum::{apply_filters, generate_tube_spectrum, DetectorResponse, FilterSpec, ResponseKind, Spectrum};

pub const SETTING: &str = "desk-150kV";
/// Apodized ramp; the plain ramp leaves view-aliasing streaks around steel at 180 views.
pub const FILTER: RampFilter = RampFilter::Hann;

pub struct Desk {
    pub db: MaterialDb,
    pub grid: Grid,
    pub geom: ScanGeometry,
    /// Spectrum the correction assumes.
    pub base: Spectrum,
    /// Spectrum that generates the "measured" data.
    pub scanner: Spectrum,
    pub response: ResponseKind,
    pub lut: PolyLut,
}

impl Desk {
    pub fn new() -> Self {
        let db = MaterialDb::builtin();
        let base = apply_filters(&generate_tube_spectrum(150.0, 74).unwrap(), &db, &[FilterSpec::new("aluminum", 1.0)])
            .unwrap();
        let scanner =
            apply_filters(&base, &db, &[FilterSpec::new("aluminum", 1.5), FilterSpec::new("copper", 0.15)]).unwrap();
        Self::with_spectra(db, base, scanner, SETTING)
    }

    /// Scanner and assumed spectra are both the single bin at `energy`.
    pub fn monoenergetic(energy: f64) -> Self {
        let s = Spectrum::monoenergetic(energy).unwrap();
        Self::with_spectra(MaterialDb::builtin(), s.clone(), s, "desk-mono")
    }

    fn with_spectra(db: MaterialDb, base: Spectrum, scanner: Spectrum, setting: &str) -> Self {
        let grid = Grid::centered(256, 256, 0.25).unwrap();
        let geom = ScanGeometry::new(180, 256, 0.25).unwrap();
        let response = ResponseKind::Flat;
        let setup = CalibrationSetup { geometry: geom, grid, calib_diameter_mm: 40.0, filter: FILTER };
        let lut = build_lut(&db, &scanner, &DetectorResponse::for_kind(response, &scanner), &setup, setting).unwrap();
        Desk { db, grid, geom, base, scanner, response, lut }
    }

    pub fn labels(&self, phantom: &str) -> VoxelVolume {
        rasterize_phantom(&builtin_phantom(phantom).unwrap(), &self.db, &self.grid).unwrap()
    }

    pub fn measure(&self, labels: &VoxelVolume) -> Sinogram {
        let resp = DetectorResponse::for_kind(self.response, &self.scanner);
        project_poly(labels, &self.db, &self.geom, &self.scanner, &resp).unwrap()
    }

    pub fn model(&self) -> ScannerModel<'_> {
        ScannerModel { db: &self.db, spectrum: &self.base, response: self.response, lut: &self.lut }
    }

    pub fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(self.lut.meta.setting_id.clone(), self.grid);
        cfg.filter = FILTER;
        cfg
    }
}
