//! Exact ray/grid traversal (Siddon's parametric method).
//!
//! The ray is parametrised as `origin + a * direction` with `a >= 0` in mm.
//! Plane crossings along x and y are merged in increasing `a`; each interval
//! between consecutive crossings lies in exactly one voxel, found from the
//! interval midpoint.

use crate::geometry::{Grid, Ray, VoxelVolume};

/// Chords shorter than this (mm) are dropped.
pub const MIN_CHORD_MM: f64 = 1e-12;

/// Parameter interval `[a_in, a_out]` over which the ray is inside the grid box.
pub fn box_interval(grid: &Grid, ray: &Ray) -> Option<(f64, f64)> {
    let (lo, hi) = grid.extent();
    let mut a_in = 0.0f64;
    let mut a_out = f64::INFINITY;
    for k in 0..2 {
        let o = ray.origin[k];
        let d = ray.direction[k];
        if d == 0.0 {
            if o < lo[k] || o > hi[k] {
                return None;
            }
            continue;
        }
        let a0 = (lo[k] - o) / d;
        let a1 = (hi[k] - o) / d;
        a_in = a_in.max(a0.min(a1));
        a_out = a_out.min(a0.max(a1));
    }
    if a_out > a_in {
        Some((a_in, a_out))
    } else {
        None
    }
}

/// Increasing parameter values at which the ray crosses the planes of one axis.
struct Crossings {
    next: i64,
    step: i64,
    remaining: usize,
    lo: f64,
    pitch: f64,
    o: f64,
    d: f64,
}

impl Crossings {
    fn new(lo: f64, pitch: f64, n: usize, o: f64, d: f64, a_in: f64, a_out: f64) -> Self {
        if d == 0.0 {
            return Crossings { next: 0, step: 1, remaining: 0, lo, pitch, o, d };
        }
        let p_in = (o + a_in * d - lo) / pitch;
        let p_out = (o + a_out * d - lo) / pitch;
        let (first, last, step) = if d > 0.0 {
            (p_in.ceil() as i64, p_out.floor() as i64, 1)
        } else {
            (p_in.floor() as i64, p_out.ceil() as i64, -1)
        };
        let first = first.clamp(0, n as i64);
        let last = last.clamp(0, n as i64);
        let remaining = if step > 0 {
            (last - first + 1).max(0) as usize
        } else {
            (first - last + 1).max(0) as usize
        };
        Crossings { next: first, step, remaining, lo, pitch, o, d }
    }

    fn peek(&self) -> Option<f64> {
        (self.remaining > 0).then(|| (self.lo + self.next as f64 * self.pitch - self.o) / self.d)
    }

    fn advance(&mut self) {
        self.next += self.step;
        self.remaining -= 1;
    }
}

/// Calls `f(voxel_index, chord_mm)` for every voxel the ray crosses, in
/// order along the ray.
pub fn trace_grid_with(grid: &Grid, ray: &Ray, mut f: impl FnMut(usize, f64)) {
    let Some((a_in, a_out)) = box_interval(grid, ray) else {
        return;
    };
    let (lo, _) = grid.extent();
    let vs = grid.voxel_size;
    let mut xs = Crossings::new(lo[0], vs, grid.nx, ray.origin[0], ray.direction[0], a_in, a_out);
    let mut ys = Crossings::new(lo[1], vs, grid.ny, ray.origin[1], ray.direction[1], a_in, a_out);

    let mut emit = |a: f64, b: f64| {
        let len = b - a;
        if len < MIN_CHORD_MM {
            return;
        }
        let mid = 0.5 * (a + b);
        let px = ray.origin[0] + mid * ray.direction[0];
        let py = ray.origin[1] + mid * ray.direction[1];
        let ix = (((px - lo[0]) / vs).floor() as i64).clamp(0, grid.nx as i64 - 1) as usize;
        let iy = (((py - lo[1]) / vs).floor() as i64).clamp(0, grid.ny as i64 - 1) as usize;
        f(grid.index(ix, iy), len);
    };

    let mut prev = a_in;
    loop {
        let next = match (xs.peek(), ys.peek()) {
            (Some(ax), Some(ay)) => {
                if ax <= ay {
                    xs.advance();
                    ax
                } else {
                    ys.advance();
                    ay
                }
            }
            (Some(ax), None) => {
                xs.advance();
                ax
            }
            (None, Some(ay)) => {
                ys.advance();
                ay
            }
            (None, None) => break,
        };
        if next <= prev {
            continue;
        }
        if next >= a_out {
            break;
        }
        emit(prev, next);
        prev = next;
    }
    emit(prev, a_out);
}

pub fn trace_grid(grid: &Grid, ray: &Ray) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(2 * (grid.nx + grid.ny));
    trace_grid_with(grid, ray, |i, d| out.push((i, d)));
    out
}

/// Voxels intersected by `ray` with their chord lengths (mm).
pub fn trace_ray(vol: &VoxelVolume, ray: &Ray) -> Vec<(usize, f64)> {
    trace_grid(vol.grid(), ray)
}
