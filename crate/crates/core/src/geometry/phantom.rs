use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, VoxelVolume};
use crate::materials::{MaterialDb, AIR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Disc {
        center_mm: [f64; 2],
        radius_mm: f64,
        material: String,
    },
    Rectangle {
        center_mm: [f64; 2],
        half_extents_mm: [f64; 2],
        #[serde(default)]
        rotation_deg: f64,
        material: String,
    },
}

impl Shape {
    pub fn material(&self) -> &str {
        match self {
            Shape::Disc { material, .. } | Shape::Rectangle { material, .. } => material,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Disc { center_mm, radius_mm, .. } => {
                let dx = p[0] - center_mm[0];
                let dy = p[1] - center_mm[1];
                dx * dx + dy * dy <= radius_mm * radius_mm
            }
            Shape::Rectangle { center_mm, half_extents_mm, rotation_deg, .. } => {
                let (s, c) = rotation_deg.to_radians().sin_cos();
                let dx = p[0] - center_mm[0];
                let dy = p[1] - center_mm[1];
                // rotate into the rectangle frame
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                u.abs() <= half_extents_mm[0] && v.abs() <= half_extents_mm[1]
            }
        }
    }

    /// Distance from the grid centre beyond which the shape has no points.
    pub fn bounding_radius(&self, about: [f64; 2]) -> f64 {
        match self {
            Shape::Disc { center_mm, radius_mm, .. } => {
                (center_mm[0] - about[0]).hypot(center_mm[1] - about[1]) + radius_mm
            }
            Shape::Rectangle { center_mm, half_extents_mm, .. } => {
                (center_mm[0] - about[0]).hypot(center_mm[1] - about[1])
                    + half_extents_mm[0].hypot(half_extents_mm[1])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Disc { radius_mm, .. } => *radius_mm > 0.0,
            Shape::Rectangle { half_extents_mm, .. } => half_extents_mm[0] > 0.0 && half_extents_mm[1] > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("shape dimensions must be positive"))
        }
    }
}

/// Ordered shape list; later shapes overwrite earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    #[serde(default)]
    pub name: String,
    pub shapes: Vec<Shape>,
}

impl PhantomSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Material list in first-appearance order, with air at index 0.
    pub fn material_list(&self) -> Vec<String> {
        let mut list = vec![AIR.to_string()];
        for s in &self.shapes {
            if !list.iter().any(|m| m == s.material()) {
                list.push(s.material().to_string());
            }
        }
        list
    }

    pub fn validate(&self, db: &MaterialDb, grid: &Grid) -> Result<()> {
        let c = grid.midpoint();
        let (lo, hi) = grid.extent();
        for s in &self.shapes {
            s.validate()?;
            db.get(s.material())?;
            let r = s.bounding_radius(c);
            let inside = c[0] - r >= lo[0] - 1e-9
                && c[0] + r <= hi[0] + 1e-9
                && c[1] - r >= lo[1] - 1e-9
                && c[1] + r <= hi[1] + 1e-9;
            if !inside {
                return Err(Error::invalid(format!(
                    "shape of `{}` extends outside the {}x{} grid",
                    s.material(),
                    grid.nx,
                    grid.ny
                )));
            }
        }
        Ok(())
    }

    /// Largest distance from the grid centre covered by any shape.
    pub fn support_radius(&self, grid: &Grid) -> f64 {
        let c = grid.midpoint();
        self.shapes.iter().map(|s| s.bounding_radius(c)).fold(0.0, f64::max)
    }
}

/// Point-samples each voxel centre; the last containing shape wins.
pub fn rasterize_phantom(spec: &PhantomSpec, db: &MaterialDb, grid: &Grid) -> Result<VoxelVolume> {
    spec.validate(db, grid)?;
    let materials = spec.material_list();
    let shape_labels: Vec<u32> = spec
        .shapes
        .iter()
        .map(|s| materials.iter().position(|m| m == s.material()).unwrap() as u32)
        .collect();
    let mut labels = vec![0u32; grid.len()];
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let p = grid.center(ix, iy);
            if let Some(k) = spec.shapes.iter().rposition(|s| s.contains(p)) {
                labels[grid.index(ix, iy)] = shape_labels[k];
            }
        }
    }
    VoxelVolume::labels(*grid, labels, materials)
}
