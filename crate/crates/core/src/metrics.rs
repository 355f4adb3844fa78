//! Image-quality metrics: cupping, streaks, RMS error and plateau means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, VoxelVolume};
use crate::materials::AIR;
use crate::reconstruction::ReconImage;
use crate::stats::{std_dev, trimmed_mean};

const PLATEAU_TRIM: f64 = 0.1;

/// Region of interest in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Roi {
    Disc { center_mm: [f64; 2], radius_mm: f64 },
    Annulus { center_mm: [f64; 2], inner_mm: f64, outer_mm: f64 },
    Rectangle { center_mm: [f64; 2], half_extents_mm: [f64; 2] },
}

impl Roi {
    fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Roi::Disc { center_mm, radius_mm } => (p[0] - center_mm[0]).hypot(p[1] - center_mm[1]) <= *radius_mm,
            Roi::Annulus { center_mm, inner_mm, outer_mm } => {
                let r = (p[0] - center_mm[0]).hypot(p[1] - center_mm[1]);
                r >= *inner_mm && r <= *outer_mm
            }
            Roi::Rectangle { center_mm, half_extents_mm } => {
                (p[0] - center_mm[0]).abs() <= half_extents_mm[0] && (p[1] - center_mm[1]).abs() <= half_extents_mm[1]
            }
        }
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let (c, h) = match self {
            Roi::Disc { center_mm, radius_mm } => (center_mm, [*radius_mm; 2]),
            Roi::Annulus { center_mm, outer_mm, .. } => (center_mm, [*outer_mm; 2]),
            Roi::Rectangle { center_mm, half_extents_mm } => (center_mm, *half_extents_mm),
        };
        ([c[0] - h[0], c[1] - h[1]], [c[0] + h[0], c[1] + h[1]])
    }

    /// Indices of the pixels whose centres fall inside the region.
    pub fn pixels(&self, grid: &Grid) -> Result<Vec<usize>> {
        let (lo, hi) = self.bounds();
        if !(grid.contains_point(lo) && grid.contains_point(hi)) {
            return Err(Error::OutOfBounds(format!("ROI {self:?} extends outside the image")));
        }
        let mut out = Vec::new();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                if self.contains(grid.center(ix, iy)) {
                    out.push(grid.index(ix, iy));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Degenerate(format!("ROI {self:?} contains no pixels")));
        }
        Ok(out)
    }
}

fn roi_values(img: &ReconImage, roi: &Roi) -> Result<Vec<f64>> {
    Ok(roi.pixels(img.grid())?.into_iter().map(|i| img.values()[i]).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `100 * (edge - center) / edge` of the ROI means.
pub fn cupping_percent(img: &ReconImage, center: &Roi, edge: &Roi) -> Result<f64> {
    let c = mean(&roi_values(img, center)?);
    let e = mean(&roi_values(img, edge)?);
    if e == 0.0 {
        return Err(Error::Degenerate("edge ROI mean is zero".into()));
    }
    Ok(100.0 * (e - c) / e)
}

/// Standard deviation inside a nominally homogeneous ROI.
pub fn streak_index(img: &ReconImage, roi: &Roi) -> Result<f64> {
    Ok(std_dev(&roi_values(img, roi)?).expect("ROI is non-empty"))
}

/// RMS difference over the field of view of `img`.
pub fn rms_vs_reference(img: &ReconImage, reference: &ReconImage) -> Result<f64> {
    let diff = img.difference(reference)?;
    let fov = img.fov_mask();
    let inside: Vec<f64> = diff.iter().zip(&fov).filter(|(_, &m)| m).map(|(d, _)| *d).collect();
    if inside.is_empty() {
        return Err(Error::Degenerate("empty field of view".into()));
    }
    Ok(crate::stats::rms(&inside))
}

/// Mask shrunk by `steps` pixels (8-neighbourhood).
pub fn erode(grid: &Grid, mask: &[bool], steps: usize) -> Vec<bool> {
    let mut cur = mask.to_vec();
    for _ in 0..steps {
        let prev = cur.clone();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                if !prev[grid.index(ix, iy)] {
                    continue;
                }
                let mut keep = true;
                'n: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (x, y) = (ix as i64 + dx, iy as i64 + dy);
                        if x < 0 || y < 0 || x >= grid.nx as i64 || y >= grid.ny as i64 || !prev[grid.index(x as usize, y as usize)] {
                            keep = false;
                            break 'n;
                        }
                    }
                }
                cur[grid.index(ix, iy)] = keep;
            }
        }
    }
    cur
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub material: String,
    pub pixels: usize,
    pub mean: f64,
}

/// Trimmed mean of `img` inside each eroded non-air material region of `labels`.
pub fn plateau_means(img: &ReconImage, labels: &VoxelVolume, erosion: usize) -> Result<Vec<Plateau>> {
    let (lab, names) = labels.label_values()?;
    if !labels.grid().same_shape(img.grid()) {
        return Err(Error::ShapeMismatch("label volume and image use different grids".into()));
    }
    let mut out = Vec::new();
    let mut seen: Vec<&str> = Vec::new();
    for (l, name) in names.iter().enumerate() {
        if l == 0 || name == AIR || seen.contains(&name.as_str()) {
            continue;
        }
        seen.push(name);
        let mask: Vec<bool> = lab.iter().map(|&k| names[k as usize] == *name).collect();
        let core = erode(img.grid(), &mask, erosion);
        let vals: Vec<f64> = img.values().iter().zip(&core).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
        if vals.is_empty() {
            return Err(Error::Degenerate(format!("no interior pixels left for `{name}`")));
        }
        out.push(Plateau { material: name.clone(), pixels: vals.len(), mean: trimmed_mean(&vals, PLATEAU_TRIM)? });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRois {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Roi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<Roi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub streak: Option<Roi>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cupping_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub streak_index: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_vs_reference: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plateaus: Vec<Plateau>,
}

/// Every metric whose inputs are available.
pub fn compute_metrics(
    img: &ReconImage,
    rois: &MetricRois,
    reference: Option<&ReconImage>,
    labels: Option<(&VoxelVolume, usize)>,
) -> Result<MetricSet> {
    let cupping_percent = match (&rois.center, &rois.edge) {
        (Some(c), Some(e)) => Some(cupping_percent(img, c, e)?),
        _ => None,
    };
    let streak_index = rois.streak.as_ref().map(|r| streak_index(img, r)).transpose()?;
    let rms_vs_reference = reference.map(|r| rms_vs_reference(img, r)).transpose()?;
    let plateaus = match labels {
        Some((l, erosion)) => plateau_means(img, l, erosion)?,
        None => Vec::new(),
    };
    Ok(MetricSet { cupping_percent, streak_index, rms_vs_reference, plateaus })
}

/// `position_mm,value` rows for a profile sampled from `from` to `to`.
pub fn profile_csv(from: [f64; 2], to: [f64; 2], values: &[f64]) -> String {
    let len = (to[0] - from[0]).hypot(to[1] - from[1]);
    let n = values.len();
    let mut s = String::from("position_mm,value\n");
    for (k, v) in values.iter().enumerate() {
        let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
        s.push_str(&format!("{},{}\n", t * len, v));
    }
    s
}
