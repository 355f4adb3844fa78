//! File formats: raw little-endian payloads with JSON sidecars, CSV tables
//! and 16-bit PNG previews. Every write goes through a temporary file in the
//! destination directory and is renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScanGeometry, VolumeKind, VoxelData, VoxelVolume};
use crate::materials::{LutMeta, PolyLut};
use crate::projection::{Provenance, Sinogram, SinogramKind};
use crate::reconstruction::{RampFilter, ReconImage};
use crate::spectrum::{Spectrum, SpectrumMeta};

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Sidecar of a payload file: same path with a `.json` extension.
pub fn sidecar_path(payload: impl AsRef<Path>) -> PathBuf {
    payload.as_ref().with_extension("json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))
}

fn f32_payload(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn parse_f32(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != 4 * expected {
        return Err(Error::format(path, format!("{} bytes, expected {}", bytes.len(), 4 * expected)));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSidecar {
    pub nx: usize,
    pub ny: usize,
    pub voxel_size_mm: f64,
    pub origin_mm: [f64; 2],
    pub kind: VolumeKind,
    pub dtype: DType,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub materials: Vec<String>,
    /// Set for reconstructed images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_radius_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<RampFilter>,
}

impl VolumeSidecar {
    fn grid(&self) -> Result<Grid> {
        let g = Grid { nx: self.nx, ny: self.ny, voxel_size: self.voxel_size_mm, origin: self.origin_mm };
        g.validate()?;
        Ok(g)
    }

    fn for_grid(grid: &Grid, kind: VolumeKind, dtype: DType) -> Self {
        VolumeSidecar {
            nx: grid.nx,
            ny: grid.ny,
            voxel_size_mm: grid.voxel_size,
            origin_mm: grid.origin,
            kind,
            dtype,
            materials: Vec::new(),
            fov_radius_mm: None,
            source_hash: None,
            filter: None,
        }
    }
}

pub fn write_volume(path: impl AsRef<Path>, vol: &VoxelVolume) -> Result<()> {
    let path = path.as_ref();
    let (payload, sidecar) = match vol.data() {
        VoxelData::Labels { labels, materials } => {
            let mut sc = VolumeSidecar::for_grid(vol.grid(), VolumeKind::Label, DType::I32);
            sc.materials = materials.clone();
            (labels.iter().flat_map(|&l| (l as i32).to_le_bytes()).collect(), sc)
        }
        VoxelData::Density(v) | VoxelData::Attenuation(v) => {
            (f32_payload(v), VolumeSidecar::for_grid(vol.grid(), vol.kind(), DType::F32))
        }
    };
    write_atomic(path, &payload)?;
    write_json(&sidecar_path(path), &sidecar)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<VoxelVolume> {
    let path = path.as_ref();
    let sc: VolumeSidecar = read_json(&sidecar_path(path))?;
    let grid = sc.grid()?;
    let bytes = read_bytes(path)?;
    match sc.kind {
        VolumeKind::Label => {
            if bytes.len() != 4 * grid.len() {
                return Err(Error::format(path, format!("{} bytes for {} labels", bytes.len(), grid.len())));
            }
            let labels = bytes
                .chunks_exact(4)
                .map(|c| {
                    let v = i32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                    u32::try_from(v).map_err(|_| Error::format(path, format!("negative label {v}")))
                })
                .collect::<Result<_>>()?;
            VoxelVolume::labels(grid, labels, sc.materials)
        }
        kind => {
            let v = parse_f32(path, &bytes, grid.len())?;
            let data = if kind == VolumeKind::Density { VoxelData::Density(v) } else { VoxelData::Attenuation(v) };
            VoxelVolume::new(grid, data)
        }
    }
}

pub fn write_image(path: impl AsRef<Path>, img: &ReconImage) -> Result<()> {
    let path = path.as_ref();
    let mut sc = VolumeSidecar::for_grid(img.grid(), VolumeKind::Attenuation, DType::F32);
    sc.fov_radius_mm = Some(img.fov_radius());
    sc.source_hash = img.source_hash.clone();
    sc.filter = img.filter;
    write_atomic(path, &f32_payload(img.values()))?;
    write_json(&sidecar_path(path), &sc)
}

/// Reads an attenuation image; volumes without a field-of-view radius get the
/// inscribed circle.
pub fn read_image(path: impl AsRef<Path>) -> Result<ReconImage> {
    let path = path.as_ref();
    let sc: VolumeSidecar = read_json(&sidecar_path(path))?;
    if sc.kind != VolumeKind::Attenuation {
        return Err(Error::WrongKind { expected: "attenuation", found: sc.kind.as_str() });
    }
    let grid = sc.grid()?;
    let v = parse_f32(path, &read_bytes(path)?, grid.len())?;
    let mut img = ReconImage::new(grid, v, sc.fov_radius_mm.unwrap_or_else(|| grid.inscribed_radius()))?;
    img.source_hash = sc.source_hash;
    img.filter = sc.filter;
    Ok(img)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinogramSidecar {
    pub n_angles: usize,
    pub n_detector_pixels: usize,
    pub detector_pitch_mm: f64,
    pub kind: SinogramKind,
    pub dtype: DType,
    #[serde(default)]
    pub provenance: Provenance,
}

pub fn write_sinogram(path: impl AsRef<Path>, sino: &Sinogram) -> Result<()> {
    let path = path.as_ref();
    let g = sino.geometry();
    let sc = SinogramSidecar {
        n_angles: g.n_angles,
        n_detector_pixels: g.n_detector_pixels,
        detector_pitch_mm: g.detector_pitch,
        kind: sino.kind(),
        dtype: DType::F32,
        provenance: sino.provenance().clone(),
    };
    write_atomic(path, &f32_payload(sino.values()))?;
    write_json(&sidecar_path(path), &sc)
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    let path = path.as_ref();
    let sc: SinogramSidecar = read_json(&sidecar_path(path))?;
    let g = ScanGeometry::new(sc.n_angles, sc.n_detector_pixels, sc.detector_pitch_mm)?;
    let v = parse_f32(path, &read_bytes(path)?, g.n_rays())?;
    Sinogram::new(g, v, sc.kind, sc.provenance)
}

/// Display window for PNG export, in 1/cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub level: f64,
    pub width: f64,
}

impl Window {
    /// Window spanning the image's value range.
    pub fn full_range(img: &ReconImage) -> Self {
        let lo = img.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = img.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { hi - lo } else { 1.0 };
        Window { level: (lo + hi) / 2.0, width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PngSidecar {
    pub window: Window,
    pub voxel_size_mm: f64,
    /// Row 0 of the PNG is the highest y.
    pub orientation: String,
}

/// 16-bit grayscale PNG with the window recorded in a sidecar.
pub fn write_png16(path: impl AsRef<Path>, img: &ReconImage, window: Window) -> Result<()> {
    let path = path.as_ref();
    if !(window.width > 0.0) {
        return Err(Error::invalid("window width must be positive"));
    }
    let g = img.grid();
    let lo = window.level - window.width / 2.0;
    let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(g.nx as u32, g.ny as u32);
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            let t = ((img.get(ix, iy) - lo) / window.width).clamp(0.0, 1.0);
            buf.put_pixel(ix as u32, (g.ny - 1 - iy) as u32, image::Luma([(t * u16::MAX as f64).round() as u16]));
        }
    }
    let mut bytes = Vec::new();
    buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    write_atomic(path, &bytes)?;
    write_json(
        &sidecar_path(path),
        &PngSidecar { window, voxel_size_mm: g.voxel_size, orientation: "y-up".into() },
    )
}

pub fn write_lut(path: impl AsRef<Path>, lut: &PolyLut) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, lut.to_csv().as_bytes())?;
    write_json(&sidecar_path(path), &lut.meta)
}

pub fn read_lut(path: impl AsRef<Path>) -> Result<PolyLut> {
    let path = path.as_ref();
    let meta: LutMeta = read_json(&sidecar_path(path))?;
    PolyLut::from_csv(&read_text(path)?, meta).map_err(|e| Error::format(path, e))
}

pub fn write_spectrum(path: impl AsRef<Path>, s: &Spectrum) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, s.to_csv().as_bytes())?;
    write_json(&sidecar_path(path), s.meta())
}

/// Reads a spectrum CSV; the sidecar is optional.
pub fn read_spectrum(path: impl AsRef<Path>) -> Result<Spectrum> {
    let path = path.as_ref();
    let sc = sidecar_path(path);
    let meta: SpectrumMeta = if sc.exists() { read_json(&sc)? } else { SpectrumMeta::default() };
    Spectrum::from_csv(&read_text(path)?, meta).map_err(|e| Error::format(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    read_json(path.as_ref())
}

pub fn write_json_file<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_json(path.as_ref(), value)
}
