//! Multi-level Otsu thresholding and per-class splitting of a reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, VoxelVolume};
use crate::reconstruction::ReconImage;
use crate::stats::trimmed_mean;

pub const DEFAULT_BINS: usize = 256;
pub const MAX_BINS: usize = 512;
pub const DEFAULT_CLASSES: usize = 3;
/// Objective values within this relative distance of the maximum are ties.
const TIE_TOLERANCE: f64 = 1e-12;
const MEASURED_TRIM: f64 = 0.1;

/// Equal-width histogram over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Values outside the range are clamped into the end bins.
    pub fn new(values: impl IntoIterator<Item = f64>, n_bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if n_bins == 0 || n_bins > MAX_BINS {
            return Err(Error::invalid(format!("histogram needs 1..={MAX_BINS} bins, got {n_bins}")));
        }
        if !(hi > lo) {
            return Err(Error::Degenerate(format!("empty histogram range [{lo}, {hi}]")));
        }
        let mut counts = vec![0u64; n_bins];
        let w = (hi - lo) / n_bins as f64;
        for v in values {
            let b = ((v - lo) / w).floor().clamp(0.0, (n_bins - 1) as f64) as usize;
            counts[b] += 1;
        }
        Ok(Histogram { lo, hi, counts })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins() as f64
    }

    /// Lower edge of bin `b` (`b == n_bins` gives `hi`).
    pub fn edge(&self, b: usize) -> f64 {
        self.lo + b as f64 * self.bin_width()
    }

    pub fn center(&self, b: usize) -> f64 {
        self.lo + (b as f64 + 0.5) * self.bin_width()
    }
}

/// Histogram of the in-FOV pixels with `n_bins` bins over `[0, max]`.
pub fn image_histogram(img: &ReconImage, n_bins: usize) -> Result<Histogram> {
    let mask = img.fov_mask();
    let vals: Vec<f64> = img.values().iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::Degenerate("image has no positive values to segment".into()));
    }
    Histogram::new(vals, n_bins, 0.0, max)
}

/// Bin indices at which each class after the first starts, maximizing the
/// between-class variance over every tuple with non-empty classes.
/// Ties resolve to the lexicographically smallest tuple.
pub fn otsu_cuts(h: &Histogram, n_classes: usize) -> Result<Vec<usize>> {
    if !(2..=4).contains(&n_classes) {
        return Err(Error::invalid(format!("Otsu supports 2 to 4 classes, got {n_classes}")));
    }
    let occupied = h.counts.iter().filter(|&&c| c > 0).count();
    if occupied < n_classes {
        return Err(Error::Degenerate(format!(
            "{occupied} non-empty bins cannot be split into {n_classes} classes"
        )));
    }
    let n = h.n_bins();
    let mut w = vec![0.0; n + 1];
    let mut s = vec![0.0; n + 1];
    for b in 0..n {
        let c = h.counts[b] as f64;
        w[b + 1] = w[b] + c;
        s[b + 1] = s[b] + c * h.center(b);
    }
    // sum over classes of S^2 / W; differs from the between-class variance by
    // a constant, so the maximizer is the same
    let score = |cuts: &[usize]| -> Option<f64> {
        let mut total = 0.0;
        let mut prev = 0;
        for &c in cuts.iter().chain(std::iter::once(&n)) {
            let wc = w[c] - w[prev];
            if wc <= 0.0 {
                return None;
            }
            let sc = s[c] - s[prev];
            total += sc * sc / wc;
            prev = c;
        }
        Some(total)
    };

    let mut best = f64::NEG_INFINITY;
    for_each_cut_tuple(n, n_classes - 1, &mut |cuts| {
        if let Some(v) = score(cuts) {
            best = best.max(v);
        }
        false
    });
    let floor = best - TIE_TOLERANCE * best.abs();
    let mut chosen = None;
    for_each_cut_tuple(n, n_classes - 1, &mut |cuts| {
        if score(cuts).is_some_and(|v| v >= floor) {
            chosen = Some(cuts.to_vec());
            return true;
        }
        false
    });
    chosen.ok_or_else(|| Error::Degenerate("no valid threshold tuple".into()))
}

/// Visits strictly increasing tuples from `1..n` in lexicographic order until
/// `f` returns true.
fn for_each_cut_tuple(n: usize, k: usize, f: &mut impl FnMut(&[usize]) -> bool) {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        let remaining = k - cur.len();
        for c in start..=n - remaining {
            cur.push(c);
            let stop = rec(n, k, c + 1, cur, f);
            cur.pop();
            if stop {
                return true;
            }
        }
        false
    }
    rec(n, k, 1, &mut Vec::with_capacity(k), f);
}

/// Otsu thresholds as attenuation values (lower edges of the cut bins).
pub fn otsu_thresholds(h: &Histogram, n_classes: usize) -> Result<Vec<f64>> {
    Ok(otsu_cuts(h, n_classes)?.into_iter().map(|c| h.edge(c)).collect())
}

/// Reconstruction split into background plus one volume per foreground class.
#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub thresholds: Vec<f64>,
    grid: Grid,
    /// Class of every pixel; 0 is background.
    classes: Vec<u32>,
    /// Foreground class volumes holding the original values inside the class.
    volumes: Vec<VoxelVolume>,
}

impl SegmentationResult {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn n_foreground(&self) -> usize {
        self.volumes.len()
    }

    /// Volume of foreground class `c` (1-based).
    pub fn class_volume(&self, c: usize) -> &VoxelVolume {
        &self.volumes[c - 1]
    }

    pub fn class_volumes(&self) -> &[VoxelVolume] {
        &self.volumes
    }

    pub fn class_mask(&self, c: usize) -> Vec<bool> {
        self.classes.iter().map(|&k| k as usize == c).collect()
    }

    pub fn background_mask(&self) -> Vec<bool> {
        self.classes.iter().map(|&k| k == 0).collect()
    }

    /// Moves the listed pixels to the background.
    pub fn remove_pixels(&mut self, pixels: &[usize]) -> Result<()> {
        for &p in pixels {
            if p >= self.classes.len() {
                return Err(Error::OutOfBounds(format!("pixel {p} of {}", self.classes.len())));
            }
            let c = self.classes[p] as usize;
            if c > 0 {
                self.classes[p] = 0;
                let mut vals = self.volumes[c - 1].attenuation_values()?.to_vec();
                vals[p] = 0.0;
                self.volumes[c - 1] = VoxelVolume::attenuation(self.grid, vals)?;
            }
        }
        Ok(())
    }
}

/// Class `c` holds pixels with `thresholds[c-1] <= value < thresholds[c]`;
/// pixels below the first threshold or outside the field of view are background.
pub fn split_materials(img: &ReconImage, thresholds: &[f64]) -> Result<SegmentationResult> {
    if thresholds.is_empty() {
        return Err(Error::invalid("at least one threshold is required"));
    }
    if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("thresholds must be strictly ascending"));
    }
    if !(thresholds[0] > 0.0) {
        return Err(Error::invalid("the background threshold must be positive"));
    }
    let grid = *img.grid();
    let fov = img.fov_mask();
    let classes: Vec<u32> = img
        .values()
        .iter()
        .zip(&fov)
        .map(|(&v, &inside)| if inside { thresholds.iter().filter(|&&t| v >= t).count() as u32 } else { 0 })
        .collect();
    let volumes = (1..=thresholds.len())
        .map(|c| {
            let vals = img
                .values()
                .iter()
                .zip(&classes)
                .map(|(&v, &k)| if k as usize == c { v } else { 0.0 })
                .collect();
            VoxelVolume::attenuation(grid, vals)
        })
        .collect::<Result<_>>()?;
    Ok(SegmentationResult { thresholds: thresholds.to_vec(), grid, classes, volumes })
}

/// Otsu thresholds on the image histogram followed by [`split_materials`].
pub fn segment(img: &ReconImage, n_classes: usize, n_bins: usize) -> Result<SegmentationResult> {
    let h = image_histogram(img, n_bins)?;
    split_materials(img, &otsu_thresholds(&h, n_classes)?)
}

/// Trimmed mean of the nonzero voxels of a class volume.
pub fn measured_mu(class_vol: &VoxelVolume) -> Result<f64> {
    let vals: Vec<f64> = class_vol.attenuation_values()?.iter().copied().filter(|&v| v != 0.0).collect();
    if vals.is_empty() {
        return Err(Error::Degenerate("class volume is empty".into()));
    }
    trimmed_mean(&vals, MEASURED_TRIM)
}
