//! Single-material polynomial linearization, used as a comparison method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correction::lse::min_norm_solve;
use crate::error::{Error, Result};
use crate::materials::Material;
use crate::projection::{Provenance, Sinogram, SinogramKind};
use crate::spectrum::{mean_energy, DetectorResponse, Spectrum};

const SLAB_SAMPLES: usize = 64;
/// The slab grid extends until the simulated projection exceeds the largest
/// measured value by this factor.
const HEADROOM: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMap {
    /// `a_1..a_d` in `chi_mono = sum_j a_j chi_poly^j`.
    pub coefficients: Vec<f64>,
    pub reference_energy_kev: f64,
}

impl PolynomialMap {
    pub fn apply(&self, x: f64) -> f64 {
        // Horner without the constant term
        self.coefficients.iter().rev().fold(0.0, |acc, a| (acc + a) * x)
    }
}

fn slab_poly(q: &[f64], mu: &[f64], t: f64) -> f64 {
    let total: f64 = q.iter().sum();
    let trans: f64 = q.iter().zip(mu).map(|(q, m)| q * (-m * t).exp()).sum();
    -(trans / total).ln()
}

/// Fits the mono-vs-poly slab relation of `material` up to `max_chi`.
pub fn fit_polynomial_map(
    material: &Material,
    spectrum: &Spectrum,
    resp: &DetectorResponse,
    degree: usize,
    max_chi: f64,
) -> Result<PolynomialMap> {
    if !(2..=4).contains(&degree) {
        return Err(Error::invalid(format!("polynomial degree must be 2, 3 or 4, got {degree}")));
    }
    let e_ref = mean_energy(spectrum)?;
    let mu_ref = material.linear_attenuation(e_ref)?;
    let mut q = Vec::new();
    let mut mu = Vec::new();
    for (b, (w, eta)) in spectrum.weights().iter().zip(resp.values()).enumerate() {
        if w * eta > 0.0 {
            q.push(w * eta);
            mu.push(material.linear_attenuation(spectrum.energy(b))?);
        }
    }
    if q.is_empty() {
        return Err(Error::Degenerate("spectrum has no positive bins".into()));
    }
    // thickest slab needed, found by doubling
    let target = HEADROOM * max_chi.max(1e-3);
    let mut t_max = 1.0 / mu_ref;
    while slab_poly(&q, &mu, t_max) < target {
        t_max *= 2.0;
        if t_max > 1e6 {
            return Err(Error::Degenerate("slab grid cannot reach the measured range".into()));
        }
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 1..=SLAB_SAMPLES {
        let t = t_max * i as f64 / SLAB_SAMPLES as f64;
        x.push(slab_poly(&q, &mu, t));
        y.push(mu_ref * t);
    }
    // scale the abscissa to keep the Vandermonde columns comparable
    let scale = x.iter().copied().fold(0.0, f64::max);
    let a = DMatrix::from_fn(SLAB_SAMPLES, degree, |i, j| (x[i] / scale).powi(j as i32 + 1));
    let sol = min_norm_solve(&a, &DVector::from_vec(y))?;
    let coefficients: Vec<f64> = sol.iter().enumerate().map(|(j, c)| c / scale.powi(j as i32 + 1)).collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Degenerate("polynomial fit failed".into()));
    }
    Ok(PolynomialMap { coefficients, reference_energy_kev: e_ref })
}

/// Maps every measured entry through the slab polynomial of `material`.
pub fn baseline_polynomial_correction(
    measured: &Sinogram,
    material: &Material,
    spectrum: &Spectrum,
    resp: &DetectorResponse,
    degree: usize,
) -> Result<Sinogram> {
    let max_chi = measured.values().iter().copied().fold(0.0, f64::max);
    let map = fit_polynomial_map(material, spectrum, resp, degree, max_chi)?;
    let values = measured.values().iter().map(|&v| map.apply(v)).collect();
    let prov = Provenance {
        energy_kev: Some(map.reference_energy_kev),
        materials: vec![material.name().to_string()],
        note: Some(format!("polynomial linearization, degree {degree}")),
        ..Default::default()
    };
    measured.derive(values, SinogramKind::Corrected, prov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::MaterialDb;
    use crate::spectrum::generate_tube_spectrum;

    #[test]
    fn monochromatic_map_is_identity() {
        let db = MaterialDb::builtin();
        let s = Spectrum::monoenergetic(60.0).unwrap();
        let map = fit_polynomial_map(db.get("aluminum").unwrap(), &s, &DetectorResponse::flat(&s), 3, 5.0).unwrap();
        for x in [0.0, 0.3, 1.7, 4.9] {
            assert!((map.apply(x) - x).abs() < 1e-8);
        }
    }

    #[test]
    fn polychromatic_map_linearizes_slabs() {
        let db = MaterialDb::builtin();
        let al = db.get("aluminum").unwrap();
        let s = crate::spectrum::filter_spectrum(&generate_tube_spectrum(120.0, 74).unwrap(), al, 2.0).unwrap();
        let r = DetectorResponse::flat(&s);
        let map = fit_polynomial_map(al, &s, &r, 3, 3.0).unwrap();
        let mu_ref = al.linear_attenuation(map.reference_energy_kev).unwrap();
        let q: Vec<f64> = s.weights().to_vec();
        let mu: Vec<f64> = s.energies().map(|e| al.linear_attenuation(e).unwrap()).collect();
        for t in [1.0, 2.0, 3.0, 4.0] {
            let p = slab_poly(&q, &mu, t);
            let rel = (map.apply(p) - mu_ref * t).abs() / (mu_ref * t);
            assert!(rel < 0.02, "t={t} rel={rel}");
        }
        // convex through the origin, undoing the concavity of the slab curve
        assert!(map.apply(2.0) > 2.0 * map.apply(1.0));
    }

    #[test]
    fn degree_checked() {
        let db = MaterialDb::builtin();
        let s = Spectrum::monoenergetic(60.0).unwrap();
        let r = DetectorResponse::flat(&s);
        assert!(fit_polynomial_map(db.get("iron").unwrap(), &s, &r, 1, 1.0).is_err());
        assert!(fit_polynomial_map(db.get("iron").unwrap(), &s, &r, 5, 1.0).is_err());
    }
}
