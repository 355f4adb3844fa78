//! Blind material estimation for one segmented class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ScanGeometry, VoxelVolume};
use crate::materials::{nearest_material, MaterialDb, PolyLut};
use crate::projection::{line_integrals, PathLengths};
use crate::segmentation::measured_mu;
use crate::spectrum::{DetectorResponse, Spectrum};
use crate::stats::mse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub material: String,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialEstimate {
    pub measured_mu: f64,
    pub initial: String,
    pub chosen: String,
    /// Candidates in order of increasing table attenuation.
    pub candidates: Vec<CandidateScore>,
}

/// Which table entries are simulated against the class projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSweep {
    /// The initial guess and every entry at least as attenuating.
    #[default]
    AtLeastInitial,
    Everything,
}

/// Picks the material whose simulated polychromatic projection of the class
/// support best matches the ray sums of the class volume.
pub fn estimate_material(
    class_vol: &VoxelVolume,
    lut: &PolyLut,
    db: &MaterialDb,
    spectrum: &Spectrum,
    resp: &DetectorResponse,
    geom: &ScanGeometry,
    sweep: CandidateSweep,
) -> Result<MaterialEstimate> {
    let mu = measured_mu(class_vol)?;
    let initial = nearest_material(lut, mu);
    let reference = line_integrals(class_vol, geom)?;
    let support: Vec<bool> = class_vol.attenuation_values()?.iter().map(|&v| v != 0.0).collect();
    let paths = PathLengths::from_mask(class_vol.grid(), &support, &initial.material, geom)?;

    let candidates: Vec<&str> = lut
        .entries()
        .iter()
        .filter(|e| sweep == CandidateSweep::Everything || e.mu_poly >= initial.mu_poly)
        .map(|e| e.material.as_str())
        .collect();
    let scores: Vec<CandidateScore> = candidates
        .par_iter()
        .map(|&m| {
            let sim = paths.with_materials(vec![m.to_string()])?.poly(db, spectrum, resp)?;
            Ok(CandidateScore { material: m.to_string(), mse: mse(sim.values(), reference.values()) })
        })
        .collect::<Result<_>>()?;
    // ascending table order, strict < keeps the lower-attenuation one on ties
    let mut best: Option<&CandidateScore> = None;
    for s in &scores {
        if !s.mse.is_finite() {
            return Err(Error::Degenerate(format!("non-finite MSE for candidate `{}`", s.material)));
        }
        if best.is_none_or(|b| s.mse < b.mse) {
            best = Some(s);
        }
    }
    let chosen = best.ok_or_else(|| Error::Degenerate("no candidate materials".into()))?.material.clone();
    Ok(MaterialEstimate { measured_mu: mu, initial: initial.material.clone(), chosen, candidates: scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid;
    use crate::materials::{build_lut, CalibrationSetup};
    use crate::projection::project_poly;
    use crate::reconstruction::{fbp, RampFilter};
    use crate::spectrum::generate_tube_spectrum;

    #[test]
    fn exact_table_value_selects_that_material() {
        let db = MaterialDb::builtin().subset(&["water", "aluminum", "titanium", "iron"]).unwrap();
        let grid = Grid::centered(64, 64, 0.5).unwrap();
        let geom = ScanGeometry::new(60, 64, 0.5).unwrap();
        let s = generate_tube_spectrum(120.0, 74).unwrap();
        let resp = DetectorResponse::flat(&s);
        let setup = CalibrationSetup { geometry: geom, grid, calib_diameter_mm: 20.0, filter: RampFilter::RamLak };
        let lut = build_lut(&db, &s, &resp, &setup, "t").unwrap();

        // a disc of the calibration size filled with aluminum's table value
        let al = lut.get("aluminum").unwrap().mu_poly;
        let mut vals = vec![0.0; grid.len()];
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let c = grid.center(ix, iy);
                if c[0].hypot(c[1]) <= 10.0 {
                    vals[grid.index(ix, iy)] = al;
                }
            }
        }
        let vol = VoxelVolume::attenuation(grid, vals).unwrap();
        let est = estimate_material(&vol, &lut, &db, &s, &resp, &geom, CandidateSweep::AtLeastInitial).unwrap();
        assert_eq!(est.initial, "aluminum");
        assert_eq!(est.chosen, "aluminum");
        assert_eq!(est.candidates.len(), 3);
    }

    #[test]
    fn reconstructed_disc_is_identified() {
        let db = MaterialDb::builtin().subset(&["water", "aluminum", "titanium", "iron"]).unwrap();
        let grid = Grid::centered(64, 64, 0.5).unwrap();
        let geom = ScanGeometry::new(60, 64, 0.5).unwrap();
        let s = generate_tube_spectrum(120.0, 74).unwrap();
        let resp = DetectorResponse::flat(&s);
        let setup = CalibrationSetup { geometry: geom, grid, calib_diameter_mm: 20.0, filter: RampFilter::RamLak };
        let lut = build_lut(&db, &s, &resp, &setup, "t").unwrap();
        let spec = crate::geometry::PhantomSpec {
            name: String::new(),
            shapes: vec![crate::geometry::Shape::Disc { center_mm: [0.0, 0.0], radius_mm: 8.0, material: "titanium".into() }],
        };
        let labels = crate::geometry::rasterize_phantom(&spec, &db, &grid).unwrap();
        let img = fbp(&project_poly(&labels, &db, &geom, &s, &resp).unwrap(), &grid, RampFilter::RamLak).unwrap();
        let seg = crate::segmentation::split_materials(&img, &[0.5 * lut.get("titanium").unwrap().mu_poly]).unwrap();
        let est =
            estimate_material(seg.class_volume(1), &lut, &db, &s, &resp, &geom, CandidateSweep::Everything).unwrap();
        assert_eq!(est.chosen, "titanium");
        assert_eq!(est.candidates.len(), 4);
    }
}
