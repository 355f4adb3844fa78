//! Filtered back-projection for the parallel-beam geometry.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::projection::Sinogram;

const MM_PER_CM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampFilter {
    #[default]
    RamLak,
    /// Ramp apodized with a Hann window.
    Hann,
}

/// Reconstructed attenuation image (1/cm). Pixels outside the circular field
/// of view are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconImage {
    grid: Grid,
    values: Vec<f64>,
    fov_radius: f64,
    /// Fingerprint of the sinogram this image was reconstructed from.
    pub source_hash: Option<String>,
    pub filter: Option<RampFilter>,
}

impl ReconImage {
    pub fn new(grid: Grid, values: Vec<f64>, fov_radius: f64) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values for a {}x{} grid", values.len(), grid.nx, grid.ny)));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("image value {i} is not finite")));
        }
        Ok(ReconImage { grid, values, fov_radius, source_hash: None, filter: None })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fov_radius(&self) -> f64 {
        self.fov_radius
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    pub fn in_fov(&self, ix: usize, iy: usize) -> bool {
        let c = self.grid.center(ix, iy);
        let m = self.grid.midpoint();
        (c[0] - m[0]).hypot(c[1] - m[1]) <= self.fov_radius
    }

    pub fn fov_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.grid.len()];
        for iy in 0..self.grid.ny {
            for ix in 0..self.grid.nx {
                mask[self.grid.index(ix, iy)] = self.in_fov(ix, iy);
            }
        }
        mask
    }

    /// Pixel-wise `self - other`.
    pub fn difference(&self, other: &ReconImage) -> Result<Vec<f64>> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::ShapeMismatch("images on different grids".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    /// Bilinear sample at a point (mm); points outside the grid give 0.
    pub fn sample(&self, p: [f64; 2]) -> f64 {
        let g = &self.grid;
        let fx = (p[0] - g.origin[0]) / g.voxel_size - 0.5;
        let fy = (p[1] - g.origin[1]) / g.voxel_size - 0.5;
        if fx < -0.5 || fy < -0.5 || fx > g.nx as f64 - 0.5 || fy > g.ny as f64 - 0.5 {
            return 0.0;
        }
        let fx = fx.clamp(0.0, (g.nx - 1) as f64);
        let fy = fy.clamp(0.0, (g.ny - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(g.nx - 1), (y0 + 1).min(g.ny - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let a = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
        let b = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
        a * (1.0 - ty) + b * ty
    }
}

/// `n` evenly spaced bilinear samples from `from` to `to` (mm).
pub fn profile_line(img: &ReconImage, from: [f64; 2], to: [f64; 2], n: usize) -> Result<Vec<f64>> {
    for p in [from, to] {
        if !img.grid.contains_point(p) {
            return Err(Error::OutOfBounds(format!("profile endpoint ({}, {}) mm outside the image", p[0], p[1])));
        }
    }
    Ok((0..n)
        .map(|k| {
            let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            img.sample([from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])])
        })
        .collect())
}

/// Frequency response of the band-limited ramp on a zero-padded length
/// `len`, built from the spatial kernel so the DC term is not zeroed.
fn ramp_response(len: usize, tau: f64, filter: RampFilter) -> Vec<f64> {
    let mut h = vec![Complex::new(0.0, 0.0); len];
    h[0].re = 1.0 / (4.0 * tau * tau);
    for k in 1..len / 2 {
        if k % 2 == 1 {
            let v = -1.0 / ((k * k) as f64 * PI * PI * tau * tau);
            h[k].re = v;
            h[len - k].re = v;
        }
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut h);
    (0..len)
        .map(|k| {
            let r = h[k].re * tau;
            match filter {
                RampFilter::RamLak => r,
                RampFilter::Hann => {
                    let f = k.min(len - k) as f64 / (len / 2) as f64;
                    r * 0.5 * (1.0 + (PI * f).cos())
                }
            }
        })
        .collect()
}

fn filter_views(sino: &Sinogram, filter: RampFilter) -> Vec<Vec<f64>> {
    let n = sino.n_pixels();
    let len = (2 * n).next_power_of_two();
    let tau = sino.geometry().detector_pitch / MM_PER_CM;
    let resp = ramp_response(len, tau, filter);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    (0..sino.n_angles())
        .into_par_iter()
        .map(|a| {
            let mut buf = vec![Complex::new(0.0, 0.0); len];
            for (b, v) in buf.iter_mut().zip(sino.view(a)) {
                b.re = *v;
            }
            fwd.process(&mut buf);
            for (b, r) in buf.iter_mut().zip(&resp) {
                *b *= r;
            }
            inv.process(&mut buf);
            buf[..n].iter().map(|c| c.re / len as f64).collect()
        })
        .collect()
}

/// Filtered back-projection onto `grid`. The field of view is the circle
/// inscribed in both the grid and the detector.
pub fn fbp(sino: &Sinogram, grid: &Grid, filter: RampFilter) -> Result<ReconImage> {
    grid.validate()?;
    let geom = *sino.geometry();
    if geom.n_angles < 2 {
        return Err(Error::Degenerate("reconstruction needs at least two views".into()));
    }
    let filtered = filter_views(sino, filter);
    let trig: Vec<(f64, f64)> = (0..geom.n_angles).map(|a| geom.angle(a).sin_cos()).collect();
    let n = geom.n_detector_pixels;
    let centre = (n as f64 - 1.0) / 2.0;
    let scale = PI / geom.n_angles as f64;
    let mid = grid.midpoint();
    let fov_radius = grid.inscribed_radius().min(geom.half_width());

    let mut values = vec![0.0; grid.len()];
    values.par_chunks_mut(grid.nx).enumerate().for_each(|(iy, row)| {
        for (ix, out) in row.iter_mut().enumerate() {
            let p = grid.center(ix, iy);
            if (p[0] - mid[0]).hypot(p[1] - mid[1]) > fov_radius {
                continue;
            }
            let mut acc = 0.0;
            for ((s, c), q) in trig.iter().zip(&filtered) {
                let u = (p[0] * c + p[1] * s) / geom.detector_pitch + centre;
                if u < 0.0 || u > (n - 1) as f64 {
                    continue;
                }
                let j = (u.floor() as usize).min(n.saturating_sub(2));
                let t = u - j as f64;
                acc += if n == 1 { q[0] } else { q[j] * (1.0 - t) + q[j + 1] * t };
            }
            *out = acc * scale;
        }
    });
    let mut img = ReconImage::new(*grid, values, fov_radius)?;
    img.source_hash = Some(sino.fingerprint());
    img.filter = Some(filter);
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ScanGeometry, VoxelVolume};
    use crate::projection::{line_integrals, SinogramKind};

    fn disc_volume(grid: &Grid, r: f64, mu: f64) -> VoxelVolume {
        let mut v = vec![0.0; grid.len()];
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let c = grid.center(ix, iy);
                if c[0].hypot(c[1]) <= r {
                    v[grid.index(ix, iy)] = mu;
                }
            }
        }
        VoxelVolume::attenuation(*grid, v).unwrap()
    }

    #[test]
    fn zero_sinogram_reconstructs_to_zero() {
        let g = ScanGeometry::new(30, 32, 1.0).unwrap();
        let s = Sinogram::zeros(g, SinogramKind::Mono);
        let img = fbp(&s, &g.default_grid(), RampFilter::RamLak).unwrap();
        assert!(img.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_disc_recovers_attenuation() {
        let grid = Grid::centered(96, 96, 0.5).unwrap();
        let geom = ScanGeometry::new(120, 96, 0.5).unwrap();
        let s = line_integrals(&disc_volume(&grid, 18.0, 0.5), &geom).unwrap();
        let img = fbp(&s, &grid, RampFilter::RamLak).unwrap();
        let mut interior = Vec::new();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let c = grid.center(ix, iy);
                if c[0].hypot(c[1]) < 12.0 {
                    interior.push(img.get(ix, iy));
                }
            }
        }
        let m = crate::stats::mean(&interior).unwrap();
        assert!((m - 0.5).abs() < 0.01, "{m}");
        // outside the object
        assert!(img.get(2, 48).abs() < 0.02);
    }

    #[test]
    fn hann_smooths_but_keeps_level() {
        let grid = Grid::centered(64, 64, 0.5).unwrap();
        let geom = ScanGeometry::new(90, 64, 0.5).unwrap();
        let s = line_integrals(&disc_volume(&grid, 10.0, 1.0), &geom).unwrap();
        let img = fbp(&s, &grid, RampFilter::Hann).unwrap();
        assert!((img.get(32, 32) - 1.0).abs() < 0.03);
    }

    #[test]
    fn linear_in_the_sinogram() {
        let grid = Grid::centered(40, 40, 0.5).unwrap();
        let geom = ScanGeometry::new(36, 40, 0.5).unwrap();
        let a = line_integrals(&disc_volume(&grid, 6.0, 0.7), &geom).unwrap();
        let b = line_integrals(&disc_volume(&grid, 9.0, 0.2), &geom).unwrap();
        let sum: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let c = a.derive(sum, SinogramKind::Mono, Default::default()).unwrap();
        let (fa, fb, fc) = (
            fbp(&a, &grid, RampFilter::RamLak).unwrap(),
            fbp(&b, &grid, RampFilter::RamLak).unwrap(),
            fbp(&c, &grid, RampFilter::RamLak).unwrap(),
        );
        for i in 0..grid.len() {
            let expect = 2.0 * fa.values()[i] - 3.0 * fb.values()[i];
            assert!((fc.values()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_fov_is_zero() {
        let geom = ScanGeometry::new(20, 16, 1.0).unwrap();
        let grid = Grid::centered(24, 24, 1.0).unwrap();
        let s = Sinogram::new(geom, vec![1.0; geom.n_rays()], SinogramKind::Mono, Default::default()).unwrap();
        let img = fbp(&s, &grid, RampFilter::RamLak).unwrap();
        assert_eq!(img.fov_radius(), 8.0);
        assert_eq!(img.get(0, 0), 0.0);
        assert!(!img.in_fov(0, 12));
    }

    #[test]
    fn profile_endpoints() {
        let grid = Grid::centered(4, 4, 1.0).unwrap();
        let img = ReconImage::new(grid, (0..16).map(|v| v as f64).collect(), 2.0).unwrap();
        let p = profile_line(&img, [-1.5, -1.5], [1.5, -1.5], 4).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 2.0, 3.0]);
        assert!((img.sample([-1.0, -1.5]) - 0.5).abs() < 1e-12);
        assert!(profile_line(&img, [0.0, 0.0], [3.0, 0.0], 4).is_err());
    }
}
