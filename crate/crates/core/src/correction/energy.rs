//! Effective-energy selection and the correction term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::MaterialDb;
use crate::projection::{PathLengths, Provenance, Sinogram, SinogramKind};
use crate::spectrum::Spectrum;
use crate::stats::mse;

/// Bins below this fraction of the peak weight are skipped by the sweep.
pub const ACTIVE_BIN_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyScore {
    pub energy_kev: f64,
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub struct EnergySelection {
    pub energy_kev: f64,
    pub mono: Sinogram,
    pub sweep: Vec<EnergyScore>,
}

/// Energies of the bins the sweep visits.
pub fn active_energies(spectrum: &Spectrum) -> Vec<f64> {
    let peak = spectrum.weights().iter().copied().fold(0.0, f64::max);
    spectrum
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > ACTIVE_BIN_FRACTION * peak)
        .map(|(b, _)| spectrum.energy(b))
        .collect()
}

/// Energy whose monochromatic projection of `paths` is closest (MSE over all
/// entries) to `measured`; ties go to the lower energy.
pub fn select_effective_energy(
    measured: &Sinogram,
    paths: &PathLengths,
    db: &MaterialDb,
    spectrum: &Spectrum,
) -> Result<EnergySelection> {
    if measured.geometry() != paths.geometry() {
        return Err(Error::ShapeMismatch("path lengths and sinogram use different geometries".into()));
    }
    let energies = active_energies(spectrum);
    if energies.is_empty() {
        return Err(Error::Degenerate("spectrum has no active bins".into()));
    }
    let sweep: Vec<EnergyScore> = energies
        .par_iter()
        .map(|&e| Ok(EnergyScore { energy_kev: e, mse: mse(paths.mono(db, e)?.values(), measured.values()) }))
        .collect::<Result<_>>()?;
    let mut best = sweep[0];
    for s in &sweep[1..] {
        if s.mse < best.mse {
            best = *s;
        }
    }
    let mono = paths.mono(db, best.energy_kev)?;
    Ok(EnergySelection { energy_kev: best.energy_kev, mono, sweep })
}

/// `mono - fitted`, entry-wise.
pub fn correction_term(mono: &Sinogram, fitted: &Sinogram) -> Result<Sinogram> {
    mono.check_compatible(fitted)?;
    let v = mono.values().iter().zip(fitted.values()).map(|(m, p)| m - p).collect();
    mono.derive(v, SinogramKind::Correction, Provenance::default())
}

/// `measured + term`, entry-wise.
pub fn apply_correction(measured: &Sinogram, term: &Sinogram) -> Result<Sinogram> {
    measured.check_compatible(term)?;
    let v = measured.values().iter().zip(term.values()).map(|(u, t)| u + t).collect();
    measured.derive(v, SinogramKind::Corrected, measured.provenance().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rasterize_phantom, Grid, PhantomSpec, ScanGeometry, Shape};
    use crate::projection::project_poly;
    use crate::spectrum::{generate_tube_spectrum, DetectorResponse};

    fn phantom() -> (MaterialDb, crate::geometry::VoxelVolume, ScanGeometry) {
        let db = MaterialDb::builtin();
        let grid = Grid::centered(48, 48, 0.5).unwrap();
        let spec = PhantomSpec {
            name: String::new(),
            shapes: vec![
                Shape::Disc { center_mm: [0.0, 0.0], radius_mm: 10.0, material: "aluminum".into() },
                Shape::Disc { center_mm: [4.0, 0.0], radius_mm: 2.0, material: "iron".into() },
            ],
        };
        (db.clone(), rasterize_phantom(&spec, &db, &grid).unwrap(), ScanGeometry::new(30, 48, 0.5).unwrap())
    }

    #[test]
    fn single_bin_spectrum_selects_its_energy() {
        let (db, labels, geom) = phantom();
        let s = Spectrum::monoenergetic(70.0).unwrap();
        let pl = PathLengths::from_labels(&labels, &geom).unwrap();
        let m = pl.mono(&db, 70.0).unwrap();
        let sel = select_effective_energy(&m, &pl, &db, &s).unwrap();
        assert_eq!(sel.energy_kev, 70.0);
        assert_eq!(sel.sweep.len(), 1);
        assert_eq!(sel.mono.values(), m.values());
    }

    #[test]
    fn invariant_under_weight_scaling() {
        let (db, labels, geom) = phantom();
        let s = generate_tube_spectrum(110.0, 74).unwrap();
        let measured = project_poly(&labels, &db, &geom, &s, &DetectorResponse::flat(&s)).unwrap();
        let pl = PathLengths::from_labels(&labels, &geom).unwrap();
        let a = select_effective_energy(&measured, &pl, &db, &s).unwrap();
        let b = select_effective_energy(&measured, &pl, &db, &s.scaled(1234.5)).unwrap();
        assert_eq!(a.energy_kev, b.energy_kev);
        assert!(a.energy_kev > s.e_min() && a.energy_kev < 110.0);
    }

    #[test]
    fn term_and_application_identities() {
        let (db, labels, geom) = phantom();
        let pl = PathLengths::from_labels(&labels, &geom).unwrap();
        let mono = pl.mono(&db, 60.0).unwrap();
        let s = generate_tube_spectrum(100.0, 74).unwrap();
        let poly = pl.poly(&db, &s, &DetectorResponse::flat(&s)).unwrap();
        assert!(correction_term(&mono, &mono).unwrap().values().iter().all(|&v| v == 0.0));
        let term = correction_term(&mono, &poly).unwrap();
        let corrected = apply_correction(&poly, &term).unwrap();
        for (c, m) in corrected.values().iter().zip(mono.values()) {
            assert!((c - m).abs() <= 1e-12 * m.abs().max(1.0));
        }
        let zero = Sinogram::zeros(geom, SinogramKind::Correction);
        assert_eq!(apply_correction(&poly, &zero).unwrap().values(), poly.values());
        assert_eq!(corrected.kind(), SinogramKind::Corrected);
    }
}
