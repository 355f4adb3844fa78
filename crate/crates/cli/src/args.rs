//! Argument groups shared by several subcommands.

use std::path::{Path, PathBuf};

use bhc_core::geometry::{Grid, ScanGeometry};
use bhc_core::materials::MaterialDb;
use bhc_core::spectrum::{apply_filters, generate_tube_spectrum, FilterSpec, ResponseKind, Spectrum};
use bhc_core::{io, Error, Result};
use clap::{Args, ValueEnum};

#[derive(Debug, Args)]
pub struct DbArgs {
    /// Material directory holding manifest.json and attenuation tables [default: built-in set]
    #[arg(long, value_name = "DIR")]
    pub materials: Option<PathBuf>,
}

impl DbArgs {
    pub fn load(&self) -> Result<MaterialDb> {
        match &self.materials {
            Some(dir) => MaterialDb::load_dir(dir),
            None => Ok(MaterialDb::builtin()),
        }
    }
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Spectrum CSV (energy_keV,weight); overrides the tube settings
    #[arg(long, value_name = "CSV", conflicts_with_all = ["kvp", "monoenergetic_kev"])]
    pub spectrum: Option<PathBuf>,
    /// Tube voltage in kVp for the generated spectrum
    #[arg(long, default_value_t = 120.0)]
    pub kvp: f64,
    /// Anode atomic number for the generated spectrum
    #[arg(long, default_value_t = 74)]
    pub anode_z: u32,
    /// Filter layer as MATERIAL:MM, applied in order; repeatable
    #[arg(long = "filter", value_name = "MATERIAL:MM", value_parser = parse_filter)]
    pub filters: Vec<FilterSpec>,
    /// Use a one-bin spectrum at this energy in keV instead of a tube spectrum
    #[arg(long, value_name = "KEV", conflicts_with = "kvp")]
    pub monoenergetic_kev: Option<f64>,
    /// Detector response
    #[arg(long, value_enum, default_value_t = Response::Flat)]
    pub response: Response,
}

fn parse_filter(s: &str) -> std::result::Result<FilterSpec, String> {
    FilterSpec::parse(s).map_err(|e| e.to_string())
}

impl SpectrumArgs {
    pub fn build(&self, db: &MaterialDb) -> Result<Spectrum> {
        let base = if let Some(path) = &self.spectrum {
            io::read_spectrum(path)?
        } else if let Some(e) = self.monoenergetic_kev {
            Spectrum::monoenergetic(e)?
        } else {
            generate_tube_spectrum(self.kvp, self.anode_z)?
        };
        apply_filters(&base, db, &self.filters)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Response {
    Flat,
    EnergyIntegrating,
}

impl From<Response> for ResponseKind {
    fn from(r: Response) -> Self {
        match r {
            Response::Flat => ResponseKind::Flat,
            Response::EnergyIntegrating => ResponseKind::EnergyIntegrating,
        }
    }
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// Number of views over [0, 180) degrees
    #[arg(long, default_value_t = 180)]
    pub angles: usize,
    /// Detector pixels per view
    #[arg(long, default_value_t = 256)]
    pub pixels: usize,
    /// Detector pixel pitch in mm
    #[arg(long, default_value_t = 0.25)]
    pub pitch_mm: f64,
}

impl GeometryArgs {
    pub fn build(&self) -> Result<ScanGeometry> {
        ScanGeometry::new(self.angles, self.pixels, self.pitch_mm)
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Image columns
    #[arg(long)]
    pub nx: Option<usize>,
    /// Image rows [default: same as --nx]
    #[arg(long)]
    pub ny: Option<usize>,
    /// Voxel size in mm
    #[arg(long, value_name = "MM")]
    pub voxel_mm: Option<f64>,
}

impl GridArgs {
    /// Grid from the flags, falling back to `fallback` for anything unset.
    pub fn build_or(&self, fallback: Grid) -> Result<Grid> {
        let nx = self.nx.unwrap_or(fallback.nx);
        let ny = self.ny.or(self.nx).unwrap_or(fallback.ny);
        Grid::centered(nx, ny, self.voxel_mm.unwrap_or(fallback.voxel_size))
    }
}

/// Parses `x0,y0,x1,y1` in mm.
pub fn parse_segment(s: &str) -> std::result::Result<[[f64; 2]; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number `{}`", p.trim())))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x0, y0, x1, y1] => Ok([[x0, y0], [x1, y1]]),
        _ => Err(format!("expected x0,y0,x1,y1, got {} values", v.len())),
    }
}

/// Refuses output sets where two files, or their JSON sidecars, would land on
/// the same path. `plain` outputs (reports, CSVs) have no sidecar.
pub fn check_outputs(with_sidecar: &[&Path], plain: &[&Path]) -> Result<()> {
    let mut taken: Vec<PathBuf> = Vec::new();
    let files = with_sidecar
        .iter()
        .flat_map(|p| [p.to_path_buf(), io::sidecar_path(p)])
        .chain(plain.iter().map(|p| p.to_path_buf()));
    for f in files {
        if taken.contains(&f) {
            return Err(invalid(format!("two outputs would both write {}; give them different names", f.display())));
        }
        taken.push(f);
    }
    Ok(())
}

pub fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_and_png_with_one_stem_collide() {
        let err = check_outputs(&[Path::new("out/c.raw"), Path::new("out/c.png")], &[]).unwrap_err();
        assert!(err.to_string().contains("c.json"), "{err}");
        assert!(check_outputs(&[Path::new("c.raw"), Path::new("c-view.png")], &[Path::new("report.json")]).is_ok());
        assert!(check_outputs(&[Path::new("c.raw")], &[Path::new("c.json")]).is_err());
    }

    #[test]
    fn segment_needs_four_numbers() {
        assert_eq!(parse_segment("-1,0, 1,0.5").unwrap(), [[-1.0, 0.0], [1.0, 0.5]]);
        assert!(parse_segment("1,2,3").is_err());
        assert!(parse_segment("1,2,x,4").is_err());
    }
}
