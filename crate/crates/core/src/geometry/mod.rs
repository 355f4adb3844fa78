//! Scan geometry, voxel volumes, phantoms and exact ray traversal.

mod phantom;
mod scan;
mod siddon;
mod volume;

pub use phantom::{rasterize_phantom, PhantomSpec, Shape};
pub use scan::{launch_distance_for, rays_at_angle, rays_for_view, rays_launched_from, Ray, ScanGeometry};
pub use siddon::{box_interval, trace_grid, trace_grid_with, trace_ray, MIN_CHORD_MM};
pub use volume::{Grid, VolumeKind, VoxelData, VoxelVolume};
