use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Grid;

/// 2D parallel-beam acquisition over `[0, pi)`, detector centred on the
/// rotation axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub n_angles: usize,
    pub n_detector_pixels: usize,
    /// mm
    pub detector_pitch: f64,
}

impl ScanGeometry {
    pub fn new(n_angles: usize, n_detector_pixels: usize, detector_pitch: f64) -> Result<Self> {
        let g = ScanGeometry { n_angles, n_detector_pixels, detector_pitch };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angles == 0 || self.n_detector_pixels == 0 {
            return Err(Error::invalid("geometry needs at least one angle and one detector pixel"));
        }
        if !(self.detector_pitch > 0.0 && self.detector_pitch.is_finite()) {
            return Err(Error::invalid("detector pitch must be positive"));
        }
        Ok(())
    }

    pub fn n_rays(&self) -> usize {
        self.n_angles * self.n_detector_pixels
    }

    pub fn angle(&self, index: usize) -> f64 {
        PI * index as f64 / self.n_angles as f64
    }

    /// Signed offset (mm) of detector pixel `j` from the rotation axis.
    pub fn offset(&self, j: usize) -> f64 {
        (j as f64 - (self.n_detector_pixels as f64 - 1.0) / 2.0) * self.detector_pitch
    }

    /// Half-width of the detector, i.e. the radius of the scanned circle.
    pub fn half_width(&self) -> f64 {
        self.n_detector_pixels as f64 * self.detector_pitch / 2.0
    }

    /// Square reconstruction grid matching the detector sampling.
    pub fn default_grid(&self) -> Grid {
        Grid::centered(self.n_detector_pixels, self.n_detector_pixels, self.detector_pitch)
            .expect("validated geometry")
    }

    /// Errors unless the detector covers the circle circumscribing the
    /// support of interest (radius `support_radius` mm).
    pub fn check_covers(&self, support_radius: f64) -> Result<()> {
        if support_radius > self.half_width() + 1e-9 {
            return Err(Error::invalid(format!(
                "detector half-width {} mm does not cover support radius {support_radius} mm",
                self.half_width()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: [f64; 2],
    pub direction: [f64; 2],
}

impl Ray {
    pub fn new(origin: [f64; 2], direction: [f64; 2]) -> Result<Self> {
        let norm = (direction[0] * direction[0] + direction[1] * direction[1]).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("ray direction has norm {norm}, expected 1")));
        }
        Ok(Ray { origin, direction })
    }

    pub fn reversed(&self, length: f64) -> Ray {
        Ray {
            origin: [
                self.origin[0] + length * self.direction[0],
                self.origin[1] + length * self.direction[1],
            ],
            direction: [-self.direction[0], -self.direction[1]],
        }
    }
}

/// Distance from the rotation axis at which ray origins are placed.
fn launch_distance(geom: &ScanGeometry) -> f64 {
    // far enough to start outside any grid the detector can see
    4.0 * geom.half_width() + 1.0
}

/// Rays of one view at an arbitrary angle `theta`. The detector axis is
/// `(cos, sin)`; rays travel along `(-sin, cos)`.
pub fn rays_at_angle(geom: &ScanGeometry, theta: f64) -> Vec<Ray> {
    rays_launched_from(geom, theta, launch_distance(geom))
}

/// Like [`rays_at_angle`] with origins `distance` mm behind the detector
/// axis, for grids that extend past the detector's field of view.
pub fn rays_launched_from(geom: &ScanGeometry, theta: f64, distance: f64) -> Vec<Ray> {
    let (s, c) = theta.sin_cos();
    let dir = [-s, c];
    let r = distance.max(launch_distance(geom));
    (0..geom.n_detector_pixels)
        .map(|j| {
            let t = geom.offset(j);
            Ray { origin: [t * c - r * dir[0], t * s - r * dir[1]], direction: dir }
        })
        .collect()
}

/// Launch distance that places ray origins outside `grid`.
pub fn launch_distance_for(geom: &ScanGeometry, grid: &Grid) -> f64 {
    let (lo, hi) = grid.extent();
    let far = lo[0].abs().max(hi[0].abs()).hypot(lo[1].abs().max(hi[1].abs()));
    launch_distance(geom).max(far + 1.0)
}

pub fn rays_for_view(geom: &ScanGeometry, angle_index: usize) -> Result<Vec<Ray>> {
    if angle_index >= geom.n_angles {
        return Err(Error::OutOfBounds(format!(
            "view {angle_index} of {} views",
            geom.n_angles
        )));
    }
    Ok(rays_at_angle(geom, geom.angle(angle_index)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> ScanGeometry {
        ScanGeometry::new(12, 9, 0.5).unwrap()
    }

    fn along(v: [f64; 2], axis: [f64; 2]) -> f64 {
        v[0] * axis[0] + v[1] * axis[1]
    }

    #[test]
    fn angle_zero_rays_are_parallel_and_evenly_spaced() {
        let g = geom();
        let rays = rays_for_view(&g, 0).unwrap();
        assert_eq!(rays.len(), 9);
        for r in &rays {
            assert_eq!(r.direction, rays[0].direction);
        }
        for (j, r) in rays.iter().enumerate() {
            assert!((r.origin[0] - g.offset(j)).abs() < 1e-12);
        }
        assert!((g.offset(0) + g.offset(8)).abs() < 1e-12);
    }

    #[test]
    fn consecutive_origins_one_pitch_apart_on_detector_axis() {
        let g = geom();
        for view in 0..g.n_angles {
            let th = g.angle(view);
            let axis = [th.cos(), th.sin()];
            let rays = rays_for_view(&g, view).unwrap();
            for w in rays.windows(2) {
                let d = [w[1].origin[0] - w[0].origin[0], w[1].origin[1] - w[0].origin[1]];
                assert!((along(d, axis) - g.detector_pitch).abs() < 1e-12);
                assert!(along(d, w[0].direction).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_turn_reverses_and_mirrors() {
        let g = geom();
        let th = g.angle(5);
        let a = rays_at_angle(&g, th);
        let b = rays_at_angle(&g, th + PI);
        let axis = [th.cos(), th.sin()];
        let n = a.len();
        for j in 0..n {
            assert!((a[j].direction[0] + b[j].direction[0]).abs() < 1e-12);
            assert!((a[j].direction[1] + b[j].direction[1]).abs() < 1e-12);
            // b's j-th ray lies on a's mirrored offset
            let off_a = along(a[j].origin, axis);
            let off_b = along(b[j].origin, axis);
            assert!((off_a + off_b).abs() < 1e-9);
            let mirrored = along(a[n - 1 - j].origin, axis);
            assert!((off_b - mirrored).abs() < 1e-9);
        }
    }

    #[test]
    fn view_index_checked() {
        assert!(rays_for_view(&geom(), 12).is_err());
    }

    #[test]
    fn non_unit_direction_rejected() {
        assert!(Ray::new([0.0, 0.0], [1.0, 1.0]).is_err());
        assert!(Ray::new([0.0, 0.0], [0.6, 0.8]).is_ok());
    }
}
