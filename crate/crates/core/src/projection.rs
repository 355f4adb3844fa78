//! Deterministic primary-photon forward projection.
//!
//! Sinogram values are dimensionless attenuation line integrals
//! `chi = ln(I0 / I)`. Path lengths are accumulated in cm.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{launch_distance_for, rays_launched_from, trace_grid_with, Grid, Ray, ScanGeometry, VoxelVolume};
use crate::materials::{Material, MaterialDb, AIR};
use crate::spectrum::{hex, DetectorResponse, Spectrum};

const MM_PER_CM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinogramKind {
    Measured,
    Mono,
    Poly,
    FittedPoly,
    Correction,
    Corrected,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_kev: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub materials: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Angle-major array of attenuation line integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: ScanGeometry,
    values: Vec<f64>,
    kind: SinogramKind,
    provenance: Provenance,
}

impl Sinogram {
    pub fn new(geometry: ScanGeometry, values: Vec<f64>, kind: SinogramKind, provenance: Provenance) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.n_rays() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} views x {} pixels",
                values.len(),
                geometry.n_angles,
                geometry.n_detector_pixels
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sinogram entry {i} is not finite")));
        }
        Ok(Sinogram { geometry, values, kind, provenance })
    }

    pub fn zeros(geometry: ScanGeometry, kind: SinogramKind) -> Self {
        Sinogram { geometry, values: vec![0.0; geometry.n_rays()], kind, provenance: Provenance::default() }
    }

    /// Converts transmitted intensities to attenuation using the flat-field value `i0`.
    pub fn from_intensity(geometry: ScanGeometry, intensity: &[f64], i0: f64) -> Result<Self> {
        if !(i0 > 0.0) {
            return Err(Error::invalid("flat-field intensity must be positive"));
        }
        if let Some(i) = intensity.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Degenerate(format!("intensity entry {i} is not positive")));
        }
        let values = intensity.iter().map(|v| (i0 / v).ln()).collect();
        Sinogram::new(geometry, values, SinogramKind::Measured, Provenance::default())
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn kind(&self) -> SinogramKind {
        self.kind
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n_angles(&self) -> usize {
        self.geometry.n_angles
    }

    pub fn n_pixels(&self) -> usize {
        self.geometry.n_detector_pixels
    }

    pub fn view(&self, angle: usize) -> &[f64] {
        let n = self.n_pixels();
        &self.values[angle * n..(angle + 1) * n]
    }

    pub fn get(&self, angle: usize, pixel: usize) -> f64 {
        self.values[angle * self.n_pixels() + pixel]
    }

    /// Copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= factor);
        s
    }

    /// Same-shaped sinogram with new values and kind.
    pub fn derive(&self, values: Vec<f64>, kind: SinogramKind, provenance: Provenance) -> Result<Self> {
        Sinogram::new(self.geometry, values, kind, provenance)
    }

    pub fn check_compatible(&self, other: &Sinogram) -> Result<()> {
        if self.geometry != other.geometry {
            return Err(Error::ShapeMismatch(format!(
                "sinogram {}x{} vs {}x{}",
                self.n_angles(),
                self.n_pixels(),
                other.n_angles(),
                other.n_pixels()
            )));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

fn for_each_ray<T: Send>(geom: &ScanGeometry, grid: &Grid, per_ray: impl Fn(&Ray) -> T + Sync) -> Vec<T> {
    let reach = launch_distance_for(geom, grid);
    (0..geom.n_angles)
        .into_par_iter()
        .flat_map_iter(|view| {
            rays_launched_from(geom, geom.angle(view), reach).into_iter().map(|r| per_ray(&r)).collect::<Vec<_>>()
        })
        .collect()
}

/// `chi = sum_v mu_v d_v` for an attenuation volume.
pub fn line_integrals(vol: &VoxelVolume, geom: &ScanGeometry) -> Result<Sinogram> {
    let mu = vol.attenuation_values()?;
    geom.validate()?;
    let grid = vol.grid();
    let values = for_each_ray(geom, grid, |ray| {
        let mut acc = 0.0;
        trace_grid_with(grid, ray, |i, d| acc += mu[i] * d);
        acc / MM_PER_CM
    });
    Sinogram::new(*geom, values, SinogramKind::Mono, Provenance::default())
}

/// Mass thickness `sum_v rho_v d_v` (g/cm^2) per ray for a density volume.
fn mass_thickness(vol: &VoxelVolume, geom: &ScanGeometry) -> Result<Vec<f64>> {
    let rho = match vol.data() {
        crate::geometry::VoxelData::Density(v) => v,
        _ => return Err(Error::WrongKind { expected: "density", found: vol.kind().as_str() }),
    };
    let grid = vol.grid();
    Ok(for_each_ray(geom, grid, |ray| {
        let mut acc = 0.0;
        trace_grid_with(grid, ray, |i, d| acc += rho[i] * d);
        acc / MM_PER_CM
    }))
}

/// Per-ray path lengths (cm) through each attenuating material of a label volume.
///
/// Labels mapped to air are background and carry no path length.
#[derive(Debug, Clone)]
pub struct PathLengths {
    geometry: ScanGeometry,
    materials: Vec<String>,
    /// `n_rays x materials.len()`, ray-major.
    lengths: Vec<f64>,
}

impl PathLengths {
    pub fn from_labels(vol: &VoxelVolume, geom: &ScanGeometry) -> Result<Self> {
        let (labels, names) = vol.label_values()?;
        geom.validate()?;
        // label -> column, None for background
        let mut columns: Vec<Option<usize>> = Vec::with_capacity(names.len());
        let mut materials: Vec<String> = Vec::new();
        for (l, name) in names.iter().enumerate() {
            if l == 0 || name == AIR {
                columns.push(None);
            } else if let Some(c) = materials.iter().position(|m| m == name) {
                columns.push(Some(c));
            } else {
                materials.push(name.clone());
                columns.push(Some(materials.len() - 1));
            }
        }
        let n_mat = materials.len();
        let grid = vol.grid();
        let per_ray = for_each_ray(geom, grid, |ray| {
            let mut t = vec![0.0; n_mat];
            trace_grid_with(grid, ray, |i, d| {
                if let Some(c) = columns[labels[i] as usize] {
                    t[c] += d;
                }
            });
            t.iter_mut().for_each(|x| *x /= MM_PER_CM);
            t
        });
        Ok(PathLengths { geometry: *geom, materials, lengths: per_ray.concat() })
    }

    /// Single-column path lengths through the voxels where `mask` is true.
    pub fn from_mask(grid: &Grid, mask: &[bool], material: &str, geom: &ScanGeometry) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::ShapeMismatch("mask does not match grid".into()));
        }
        let lengths = for_each_ray(geom, grid, |ray| {
            let mut acc = 0.0;
            trace_grid_with(grid, ray, |i, d| {
                if mask[i] {
                    acc += d
                }
            });
            acc / MM_PER_CM
        });
        Ok(PathLengths { geometry: *geom, materials: vec![material.to_string()], lengths })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn materials(&self) -> &[String] {
        &self.materials
    }

    pub fn n_rays(&self) -> usize {
        self.geometry.n_rays()
    }

    pub fn ray(&self, r: usize) -> &[f64] {
        let m = self.materials.len();
        &self.lengths[r * m..(r + 1) * m]
    }

    /// True if ray `r` crosses no attenuating voxel.
    pub fn is_background(&self, r: usize) -> bool {
        self.ray(r).iter().all(|&t| t == 0.0)
    }

    /// Same path lengths attributed to different materials (one per column).
    pub fn with_materials(&self, materials: Vec<String>) -> Result<Self> {
        if materials.len() != self.materials.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} materials for {} path-length columns",
                materials.len(),
                self.materials.len()
            )));
        }
        Ok(PathLengths { materials, ..self.clone() })
    }

    fn resolve<'a>(&self, db: &'a MaterialDb) -> Result<Vec<&'a Material>> {
        self.materials.iter().map(|m| db.get(m)).collect()
    }

    /// Monochromatic projection `sum_m mu_m(E) T_m`.
    pub fn mono(&self, db: &MaterialDb, energy: f64) -> Result<Sinogram> {
        let mats = self.resolve(db)?;
        let mu: Vec<f64> = mats.iter().map(|m| m.linear_attenuation(energy)).collect::<Result<_>>()?;
        let values: Vec<f64> = (0..self.n_rays())
            .into_par_iter()
            .map(|r| self.ray(r).iter().zip(&mu).map(|(t, m)| t * m).sum())
            .collect();
        let prov = Provenance { energy_kev: Some(energy), materials: self.materials.clone(), ..Default::default() };
        Sinogram::new(self.geometry, values, SinogramKind::Mono, prov)
    }

    /// Polychromatic projection
    /// `-ln( sum_b w_b eta_b exp(-sum_m mu_m(E_b) T_m) / sum_b w_b eta_b )`.
    pub fn poly(&self, db: &MaterialDb, spectrum: &Spectrum, resp: &DetectorResponse) -> Result<Sinogram> {
        let mats = self.resolve(db)?;
        let model = SpectralModel::new(spectrum, resp, &mats)?;
        let values: Vec<f64> = (0..self.n_rays()).into_par_iter().map(|r| model.chi(self.ray(r))).collect();
        let prov = Provenance {
            spectrum_hash: Some(spectrum.fingerprint()),
            materials: self.materials.clone(),
            ..Default::default()
        };
        Sinogram::new(self.geometry, values, SinogramKind::Poly, prov)
    }
}

/// Active bins of a spectrum with per-material attenuation at each bin.
struct SpectralModel {
    log_q: Vec<f64>,
    log_total: f64,
    /// `mu[m][k]` for active bin k
    mu: Vec<Vec<f64>>,
}

impl SpectralModel {
    fn new(spectrum: &Spectrum, resp: &DetectorResponse, mats: &[&Material]) -> Result<Self> {
        resp.check_grid(spectrum)?;
        let mut bins = Vec::new();
        let mut q = Vec::new();
        for (b, (w, eta)) in spectrum.weights().iter().zip(resp.values()).enumerate() {
            let qb = w * eta;
            if qb > 0.0 {
                bins.push(b);
                q.push(qb);
            }
        }
        if q.is_empty() {
            return Err(Error::Degenerate("spectrum x detector response has no positive bin".into()));
        }
        let mu = mats
            .iter()
            .map(|m| bins.iter().map(|&b| m.linear_attenuation(spectrum.energy(b))).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = q.iter().sum();
        Ok(SpectralModel { log_q: q.iter().map(|v| v.ln()).collect(), log_total: total.ln(), mu })
    }

    fn chi(&self, path: &[f64]) -> f64 {
        if path.iter().all(|&t| t == 0.0) {
            return 0.0;
        }
        let n = self.log_q.len();
        let mut exps = Vec::with_capacity(n);
        let mut best = f64::NEG_INFINITY;
        for k in 0..n {
            let a: f64 = path.iter().zip(&self.mu).map(|(t, mu)| t * mu[k]).sum();
            let e = self.log_q[k] - a;
            best = best.max(e);
            exps.push(e);
        }
        let s: f64 = exps.iter().map(|e| (e - best).exp()).sum();
        self.log_total - (best + s.ln())
    }
}

/// Label volume projected at a single energy. N and eta(E) cancel in the
/// log ratio, so no detector response is needed.
pub fn project_mono(labels: &VoxelVolume, db: &MaterialDb, geom: &ScanGeometry, energy: f64) -> Result<Sinogram> {
    PathLengths::from_labels(labels, geom)?.mono(db, energy)
}

pub fn project_poly(
    labels: &VoxelVolume,
    db: &MaterialDb,
    geom: &ScanGeometry,
    spectrum: &Spectrum,
    resp: &DetectorResponse,
) -> Result<Sinogram> {
    PathLengths::from_labels(labels, geom)?.poly(db, spectrum, resp)
}

/// Polychromatic projection of a density volume whose voxels all share the
/// composition of `material`.
pub fn project_poly_density(
    vol: &VoxelVolume,
    material: &Material,
    geom: &ScanGeometry,
    spectrum: &Spectrum,
    resp: &DetectorResponse,
) -> Result<Sinogram> {
    let m = mass_thickness(vol, geom)?;
    // unit-density pseudo-material with the same mu/rho curve
    let unit = Material::new(material.name(), 1.0, material.samples().to_vec())?;
    let model = SpectralModel::new(spectrum, resp, &[&unit])?;
    let values: Vec<f64> = m.par_iter().map(|&mt| model.chi(&[mt])).collect();
    let prov = Provenance {
        spectrum_hash: Some(spectrum.fingerprint()),
        materials: vec![material.name().to_string()],
        ..Default::default()
    };
    Sinogram::new(*geom, values, SinogramKind::Poly, prov)
}

/// Poisson noise in the intensity domain with `photons` unattenuated counts
/// per ray; deterministic for a given seed.
pub fn add_poisson_noise(sino: &Sinogram, photons: f64, seed: u64) -> Result<Sinogram> {
    if !(photons > 0.0) {
        return Err(Error::invalid("photon count must be positive"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(sino.values().len());
    for &chi in sino.values() {
        let lambda = photons * (-chi).exp();
        let counts = if lambda > 0.0 {
            Poisson::new(lambda).map_err(|e| Error::invalid(e.to_string()))?.sample(&mut rng)
        } else {
            0.0
        };
        values.push((photons / counts.max(1.0)).ln());
    }
    let mut prov = sino.provenance().clone();
    prov.note = Some(format!("poisson noise, {photons} photons/ray, seed {seed}"));
    sino.derive(values, sino.kind(), prov)
}
