use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular 2D grid. Voxel `(ix, iy)` covers
/// `[origin + ix*voxel_size, origin + (ix+1)*voxel_size)` along each axis and
/// is stored at `iy * nx + ix`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// mm
    pub voxel_size: f64,
    /// mm, position of the grid corner with the lowest coordinates
    pub origin: [f64; 2],
}

impl Grid {
    /// Grid centred on the rotation axis.
    pub fn centered(nx: usize, ny: usize, voxel_size: f64) -> Result<Self> {
        let g = Grid {
            nx,
            ny,
            voxel_size,
            origin: [-(nx as f64) * voxel_size / 2.0, -(ny as f64) * voxel_size / 2.0],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid("grid must have at least one voxel per axis"));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::invalid("voxel size must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.voxel_size,
            self.origin[1] + (iy as f64 + 0.5) * self.voxel_size,
        ]
    }

    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        (
            self.origin,
            [
                self.origin[0] + self.nx as f64 * self.voxel_size,
                self.origin[1] + self.ny as f64 * self.voxel_size,
            ],
        )
    }

    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        let (lo, hi) = self.extent();
        p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1]
    }

    /// Radius of the largest circle about the grid centre that fits inside it.
    pub fn inscribed_radius(&self) -> f64 {
        self.nx.min(self.ny) as f64 * self.voxel_size / 2.0
    }

    pub fn midpoint(&self) -> [f64; 2] {
        let (lo, hi) = self.extent();
        [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0]
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.voxel_size == other.voxel_size && self.origin == other.origin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Label,
    Density,
    Attenuation,
}

impl VolumeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VolumeKind::Label => "label",
            VolumeKind::Density => "density",
            VolumeKind::Attenuation => "attenuation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    /// Integer labels indexing `materials`; label 0 is the background.
    Labels { labels: Vec<u32>, materials: Vec<String> },
    /// g/cm^3
    Density(Vec<f64>),
    /// 1/cm
    Attenuation(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    grid: Grid,
    data: VoxelData,
}

impl VoxelVolume {
    pub fn new(grid: Grid, data: VoxelData) -> Result<Self> {
        grid.validate()?;
        let n = match &data {
            VoxelData::Labels { labels, materials } => {
                if materials.is_empty() {
                    return Err(Error::invalid("label volume needs a material list"));
                }
                if let Some(l) = labels.iter().find(|&&l| l as usize >= materials.len()) {
                    return Err(Error::invalid(format!(
                        "label {l} has no entry in the {}-material list",
                        materials.len()
                    )));
                }
                labels.len()
            }
            VoxelData::Density(v) | VoxelData::Attenuation(v) => {
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::invalid("density/attenuation values must be finite and >= 0"));
                }
                v.len()
            }
        };
        if n != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values for a {}x{} grid", n, grid.nx, grid.ny)));
        }
        Ok(VoxelVolume { grid, data })
    }

    pub fn labels(grid: Grid, labels: Vec<u32>, materials: Vec<String>) -> Result<Self> {
        Self::new(grid, VoxelData::Labels { labels, materials })
    }

    pub fn attenuation(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, VoxelData::Attenuation(values))
    }

    pub fn density(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, VoxelData::Density(values))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn kind(&self) -> VolumeKind {
        match self.data {
            VoxelData::Labels { .. } => VolumeKind::Label,
            VoxelData::Density(_) => VolumeKind::Density,
            VoxelData::Attenuation(_) => VolumeKind::Attenuation,
        }
    }

    pub fn label_values(&self) -> Result<(&[u32], &[String])> {
        match &self.data {
            VoxelData::Labels { labels, materials } => Ok((labels, materials)),
            _ => Err(Error::WrongKind { expected: "label", found: self.kind().as_str() }),
        }
    }

    pub fn attenuation_values(&self) -> Result<&[f64]> {
        match &self.data {
            VoxelData::Attenuation(v) => Ok(v),
            _ => Err(Error::WrongKind { expected: "attenuation", found: self.kind().as_str() }),
        }
    }

    /// Scalar values (density or attenuation); labels are converted to f64.
    pub fn scalar_values(&self) -> Vec<f64> {
        match &self.data {
            VoxelData::Labels { labels, .. } => labels.iter().map(|&l| l as f64).collect(),
            VoxelData::Density(v) | VoxelData::Attenuation(v) => v.clone(),
        }
    }
}
