use std::path::{Path, PathBuf};

use bhc_core::correction::pipeline::{self, PipelineConfig, ScannerModel};
use bhc_core::correction::{CandidateSweep, Constraint};
use bhc_core::geometry::{rasterize_phantom, PhantomSpec};
use bhc_core::io::{self, Window};
use bhc_core::materials::{build_lut, CalibrationSetup};
use bhc_core::metrics::{compute_metrics, profile_csv, MetricRois};
use bhc_core::phantoms::{builtin_names, builtin_phantom};
use bhc_core::projection::{add_poisson_noise, project_mono, project_poly};
use bhc_core::reconstruction::{fbp, profile_line, RampFilter, ReconImage};
use bhc_core::spectrum::DetectorResponse;
use bhc_core::Result;
use clap::{Args, ValueEnum};

use crate::args::{check_outputs, invalid, parse_segment, DbArgs, GeometryArgs, GridArgs, SpectrumArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Filter {
    RamLak,
    Hann,
}

impl From<Filter> for RampFilter {
    fn from(f: Filter) -> Self {
        match f {
            Filter::RamLak => RampFilter::RamLak,
            Filter::Hann => RampFilter::Hann,
        }
    }
}

#[derive(Debug, Args)]
pub struct PngArgs {
    /// Also write a 16-bit PNG of the image
    #[arg(long, value_name = "PNG")]
    pub png: Option<PathBuf>,
    /// PNG window centre in 1/cm [default: middle of the value range]
    #[arg(long, requires = "png")]
    pub window_level: Option<f64>,
    /// PNG window width in 1/cm [default: full value range]
    #[arg(long, requires = "png")]
    pub window_width: Option<f64>,
}

impl PngArgs {
    fn write(&self, img: &ReconImage) -> Result<()> {
        let Some(path) = &self.png else { return Ok(()) };
        let full = Window::full_range(img);
        let window = Window {
            level: self.window_level.unwrap_or(full.level),
            width: self.window_width.unwrap_or(full.width),
        };
        io::write_png16(path, img, window)
    }
}

#[derive(Debug, Args)]
pub struct PhantomCmd {
    /// Phantom description (JSON)
    #[arg(long, value_name = "JSON", required_unless_present_any = ["builtin", "list"])]
    pub spec: Option<PathBuf>,
    /// Use a shipped phantom by name
    #[arg(long, conflicts_with = "spec")]
    pub builtin: Option<String>,
    /// Print the shipped phantom names and exit
    #[arg(long, exclusive = true)]
    pub list: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub db: DbArgs,
    /// Output label volume (raw i32 with JSON sidecar)
    #[arg(long, short, required_unless_present = "list")]
    pub out: Option<PathBuf>,
}

pub fn phantom(cmd: &PhantomCmd) -> Result<()> {
    if cmd.list {
        for name in builtin_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let spec = match (&cmd.spec, &cmd.builtin) {
        (Some(path), _) => PhantomSpec::from_json(&std::fs::read_to_string(path).map_err(|e| {
            bhc_core::Error::Io { path: path.display().to_string(), source: e }
        })?)?,
        (None, Some(name)) => builtin_phantom(name)?,
        (None, None) => return Err(invalid("give --spec or --builtin")),
    };
    let db = cmd.db.load()?;
    let grid = cmd.grid.build_or(bhc_core::geometry::Grid::centered(256, 256, 0.25)?)?;
    let labels = rasterize_phantom(&spec, &db, &grid)?;
    io::write_volume(cmd.out.as_ref().expect("required by clap"), &labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mono,
    Poly,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Label volume to project
    #[arg(long, value_name = "RAW")]
    pub volume: PathBuf,
    /// Monoenergetic line integrals or polychromatic attenuation
    #[arg(long, value_enum, default_value_t = Mode::Poly)]
    pub mode: Mode,
    /// Energy in keV for --mode mono
    #[arg(long, value_name = "KEV", required_if_eq("mode", "mono"))]
    pub energy_kev: Option<f64>,
    #[command(flatten)]
    pub spectrum: SpectrumArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub db: DbArgs,
    /// Add Poisson noise for this many unattenuated photons per detector pixel
    #[arg(long, value_name = "N")]
    pub noise_photons: Option<f64>,
    /// Seed for the noise generator
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output sinogram (raw f32 with JSON sidecar)
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn simulate(cmd: &SimulateCmd) -> Result<()> {
    let db = cmd.db.load()?;
    let labels = io::read_volume(&cmd.volume)?;
    let geom = cmd.geometry.build()?;
    let sino = match cmd.mode {
        Mode::Mono => project_mono(&labels, &db, &geom, cmd.energy_kev.expect("required by clap"))?,
        Mode::Poly => {
            let s = cmd.spectrum.build(&db)?;
            project_poly(&labels, &db, &geom, &s, &DetectorResponse::for_kind(cmd.spectrum.response.into(), &s))?
        }
    };
    let sino = match cmd.noise_photons {
        Some(n) => add_poisson_noise(&sino, n, cmd.seed)?,
        None => sino,
    };
    io::write_sinogram(&cmd.out, &sino)
}

#[derive(Debug, Args)]
pub struct ReconstructCmd {
    /// Attenuation sinogram
    #[arg(long, value_name = "RAW")]
    pub sinogram: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Ramp filter apodization
    #[arg(long, value_enum, default_value_t = Filter::RamLak)]
    pub ramp: Filter,
    #[command(flatten)]
    pub png: PngArgs,
    /// Output image (raw f32 with JSON sidecar)
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn reconstruct(cmd: &ReconstructCmd) -> Result<()> {
    let outputs: Vec<&Path> = [Some(&cmd.out), cmd.png.png.as_ref()].into_iter().flatten().map(|p| p.as_path()).collect();
    check_outputs(&outputs, &[])?;
    let sino = io::read_sinogram(&cmd.sinogram)?;
    let grid = cmd.grid.build_or(sino.geometry().default_grid())?;
    let img = fbp(&sino, &grid, cmd.ramp.into())?;
    io::write_image(&cmd.out, &img)?;
    cmd.png.write(&img)
}

#[derive(Debug, Args)]
pub struct LutCmd {
    /// Scanner setting the table belongs to; checked again at correction time
    #[arg(long)]
    pub setting: String,
    /// Diameter of the calibration discs in mm
    #[arg(long, default_value_t = 40.0)]
    pub diameter_mm: f64,
    /// Ramp filter apodization used for the calibration scans
    #[arg(long, value_enum, default_value_t = Filter::RamLak)]
    pub ramp: Filter,
    #[command(flatten)]
    pub spectrum: SpectrumArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub db: DbArgs,
    /// Output table (CSV with JSON sidecar)
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn lut(cmd: &LutCmd) -> Result<()> {
    let db = cmd.db.load()?;
    let s = cmd.spectrum.build(&db)?;
    let geometry = cmd.geometry.build()?;
    let setup = CalibrationSetup {
        geometry,
        grid: cmd.grid.build_or(geometry.default_grid())?,
        calib_diameter_mm: cmd.diameter_mm,
        filter: cmd.ramp.into(),
    };
    let resp = DetectorResponse::for_kind(cmd.spectrum.response.into(), &s);
    io::write_lut(&cmd.out, &build_lut(&db, &s, &resp, &setup, &cmd.setting)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    AtLeastInitial,
    Everything,
}

#[derive(Debug, Args)]
pub struct CorrectCmd {
    /// Measured attenuation sinogram
    #[arg(long, value_name = "RAW")]
    pub sinogram: PathBuf,
    /// Polychromatic attenuation table built with `bhc lut`
    #[arg(long, value_name = "CSV")]
    pub lut: PathBuf,
    /// Pipeline settings (JSON); the flags below override it
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Scanner setting of this acquisition [default: from --config]
    #[arg(long, required_unless_present = "config")]
    pub setting: Option<String>,
    /// Segmentation classes including air (2 to 4)
    #[arg(long)]
    pub classes: Option<usize>,
    /// Histogram bins for the segmentation
    #[arg(long)]
    pub bins: Option<usize>,
    /// Ramp filter apodization
    #[arg(long, value_enum)]
    pub ramp: Option<Filter>,
    /// Skip material estimation and use these materials, one per foreground class
    #[arg(long, value_delimiter = ',', value_name = "MATERIAL,...")]
    pub force: Option<Vec<String>>,
    /// Constrain the fitted coefficients to be non-negative
    #[arg(long)]
    pub nonnegative: bool,
    /// Which table entries material estimation tries
    #[arg(long, value_enum)]
    pub sweep: Option<Sweep>,
    /// Segment-and-correct passes
    #[arg(long)]
    pub passes: Option<usize>,
    #[command(flatten)]
    pub spectrum: SpectrumArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub db: DbArgs,
    #[command(flatten)]
    pub png: PngArgs,
    /// Run report (JSON)
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
    /// Also write the corrected sinogram
    #[arg(long, value_name = "RAW")]
    pub corrected_sinogram: Option<PathBuf>,
    /// Also write the uncorrected reconstruction
    #[arg(long, value_name = "RAW")]
    pub uncorrected: Option<PathBuf>,
    /// Also write the estimated label volume
    #[arg(long, value_name = "RAW")]
    pub labels: Option<PathBuf>,
    /// Corrected image (raw f32 with JSON sidecar)
    #[arg(long, short)]
    pub out: PathBuf,
}

impl CorrectCmd {
    fn pipeline_config(&self, default_grid: bhc_core::geometry::Grid) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => io::read_json_file::<PipelineConfig>(path)?,
            None => PipelineConfig::new(self.setting.clone().expect("required by clap"), default_grid),
        };
        if let Some(s) = &self.setting {
            cfg.setting_id = s.clone();
        }
        if self.grid.nx.is_some() || self.grid.ny.is_some() || self.grid.voxel_mm.is_some() {
            cfg.grid = self.grid.build_or(cfg.grid)?;
        }
        if let Some(n) = self.classes {
            cfg.n_classes = n;
        }
        if let Some(n) = self.bins {
            cfg.n_bins = n;
        }
        if let Some(f) = self.ramp {
            cfg.filter = f.into();
        }
        if let Some(m) = &self.force {
            cfg.forced_materials = Some(m.clone());
        }
        if self.nonnegative {
            cfg.constraint = Constraint::Nonnegative;
        }
        if let Some(s) = self.sweep {
            cfg.sweep = match s {
                Sweep::AtLeastInitial => CandidateSweep::AtLeastInitial,
                Sweep::Everything => CandidateSweep::Everything,
            };
        }
        if let Some(p) = self.passes {
            cfg.passes = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn correct(cmd: &CorrectCmd) -> Result<()> {
    let outputs: Vec<&Path> =
        [Some(&cmd.out), cmd.png.png.as_ref(), cmd.uncorrected.as_ref(), cmd.corrected_sinogram.as_ref(), cmd.labels.as_ref()]
            .into_iter()
            .flatten()
            .map(|p| p.as_path())
            .collect();
    let plain: Vec<&Path> = cmd.report.iter().map(|p| p.as_path()).collect();
    check_outputs(&outputs, &plain)?;
    let db = cmd.db.load()?;
    let spectrum = cmd.spectrum.build(&db)?;
    let lut = io::read_lut(&cmd.lut)?;
    let measured = io::read_sinogram(&cmd.sinogram)?;
    let cfg = cmd.pipeline_config(measured.geometry().default_grid())?;
    let scanner = ScannerModel { db: &db, spectrum: &spectrum, response: cmd.spectrum.response.into(), lut: &lut };
    let out = pipeline::run(&measured, &scanner, &cfg)?;

    io::write_image(&cmd.out, &out.corrected)?;
    cmd.png.write(&out.corrected)?;
    if let Some(p) = &cmd.uncorrected {
        io::write_image(p, &out.uncorrected)?;
    }
    if let Some(p) = &cmd.corrected_sinogram {
        io::write_sinogram(p, &out.projection.corrected)?;
    }
    if let Some(p) = &cmd.labels {
        io::write_volume(p, &out.labels)?;
    }
    if let Some(p) = &cmd.report {
        io::write_text(p, &out.report.to_json()?)?;
    }
    let last = out.report.last_pass();
    let materials: Vec<&str> = last.classes.iter().map(|c| c.material.as_str()).collect();
    eprintln!("materials {materials:?}, effective energy {} keV", last.energy_kev);
    Ok(())
}

#[derive(Debug, Args)]
pub struct MetricsCmd {
    /// Image to evaluate
    #[arg(long, value_name = "RAW")]
    pub image: PathBuf,
    /// Reference image for the RMS difference
    #[arg(long, value_name = "RAW")]
    pub reference: Option<PathBuf>,
    /// Regions of interest (JSON with optional center, edge and streak entries)
    #[arg(long, value_name = "JSON")]
    pub rois: Option<PathBuf>,
    /// Label volume for per-material plateau means
    #[arg(long, value_name = "RAW")]
    pub labels: Option<PathBuf>,
    /// Erosion in pixels applied to each material mask before averaging
    #[arg(long, default_value_t = 3, requires = "labels")]
    pub erosion: usize,
    /// Profile line x0,y0,x1,y1 in mm
    #[arg(long, value_name = "X0,Y0,X1,Y1", value_parser = parse_segment, requires = "profile_out")]
    pub profile: Option<[[f64; 2]; 2]>,
    /// Samples along the profile line
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    /// Profile CSV (position_mm,value)
    #[arg(long, value_name = "CSV", requires = "profile")]
    pub profile_out: Option<PathBuf>,
    /// Metrics JSON [default: standard output]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn metrics(cmd: &MetricsCmd) -> Result<()> {
    let img = io::read_image(&cmd.image)?;
    let reference = cmd.reference.as_ref().map(io::read_image).transpose()?;
    let rois: MetricRois = match &cmd.rois {
        Some(p) => io::read_json_file(p)?,
        None => MetricRois::default(),
    };
    let labels = cmd.labels.as_ref().map(io::read_volume).transpose()?;
    let set = compute_metrics(&img, &rois, reference.as_ref(), labels.as_ref().map(|l| (l, cmd.erosion)))?;
    if let (Some([from, to]), Some(path)) = (cmd.profile, &cmd.profile_out) {
        let values = profile_line(&img, from, to, cmd.samples)?;
        io::write_text(path, &profile_csv(from, to, &values))?;
    }
    let text = serde_json::to_string_pretty(&set)?;
    match &cmd.out {
        Some(p) => io::write_text(p, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
