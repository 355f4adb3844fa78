//! Material attenuation data and the polychromatic look-up table.
//!
//! Mass attenuation is tabulated per material on a coarse energy grid and
//! interpolated linearly in log-log space. The built-in database is compiled
//! in from `data/materials`.

mod lut;

pub use lut::{build_lut, nearest_material, CalibrationSetup, LutEntry, LutMeta, PolyLut};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the background material. Voxels of this material are treated as
/// non-attenuating by the projectors (flat-field normalization absorbs air).
pub const AIR: &str = "air";

/// Materials every standard database must provide.
pub const REQUIRED_MATERIALS: [&str; 9] = [
    "air",
    "water",
    "magnesium",
    "silicon",
    "aluminum",
    "titanium",
    "iron",
    "copper",
    "cement-analog",
];

const MIN_SAMPLES: usize = 8;
const COVER_LO_KEV: f64 = 10.0;
const COVER_HI_KEV: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    name: String,
    density: f64,
    /// (energy keV, mu/rho cm^2/g), strictly increasing in energy.
    mass_atten: Vec<(f64, f64)>,
}

impl Material {
    pub fn new(name: impl Into<String>, density: f64, mass_atten: Vec<(f64, f64)>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::invalid("material name is empty"));
        }
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::invalid(format!("material `{name}`: density must be > 0")));
        }
        if mass_atten.len() < MIN_SAMPLES {
            return Err(Error::invalid(format!(
                "material `{name}`: need at least {MIN_SAMPLES} attenuation samples, got {}",
                mass_atten.len()
            )));
        }
        for w in mass_atten.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid(format!(
                    "material `{name}`: energies must be strictly increasing"
                )));
            }
        }
        if mass_atten.iter().any(|&(e, m)| !(m > 0.0 && m.is_finite() && e > 0.0)) {
            return Err(Error::invalid(format!(
                "material `{name}`: attenuation samples must be positive"
            )));
        }
        let (lo, hi) = (mass_atten[0].0, mass_atten[mass_atten.len() - 1].0);
        if lo > COVER_LO_KEV || hi < COVER_HI_KEV {
            return Err(Error::invalid(format!(
                "material `{name}`: table spans [{lo}, {hi}] keV, must cover [{COVER_LO_KEV}, {COVER_HI_KEV}]"
            )));
        }
        Ok(Material { name, density, mass_atten })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Bulk density in g/cm^3.
    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.mass_atten
    }

    pub fn energy_range(&self) -> (f64, f64) {
        (self.mass_atten[0].0, self.mass_atten[self.mass_atten.len() - 1].0)
    }

    /// Mass attenuation mu/rho (cm^2/g) at `energy` keV.
    pub fn mass_attenuation(&self, energy: f64) -> Result<f64> {
        let (lo, hi) = self.energy_range();
        if !(energy >= lo && energy <= hi) {
            return Err(Error::EnergyOutOfRange { material: self.name.clone(), energy });
        }
        // first sample with e >= energy
        let idx = self.mass_atten.partition_point(|&(e, _)| e < energy);
        let (e1, m1) = self.mass_atten[idx];
        if e1 == energy {
            return Ok(m1);
        }
        let (e0, m0) = self.mass_atten[idx - 1];
        let t = (energy.ln() - e0.ln()) / (e1.ln() - e0.ln());
        Ok((m0.ln() + t * (m1.ln() - m0.ln())).exp())
    }

    /// Linear attenuation mu (1/cm) at `energy` keV.
    pub fn linear_attenuation(&self, energy: f64) -> Result<f64> {
        Ok(self.density * self.mass_attenuation(energy)?)
    }

    /// Parses a `energy_keV,mu_over_rho_cm2_per_g` table.
    pub fn parse_table(text: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty table")?;
        if header.trim() != "energy_keV,mu_over_rho_cm2_per_g" {
            return Err(format!("unexpected header `{}`", header.trim()));
        }
        let mut out = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (e, m) = line.split_once(',').ok_or_else(|| format!("line {}: expected two fields", i + 2))?;
            let e: f64 = e.trim().parse().map_err(|_| format!("line {}: bad energy", i + 2))?;
            let m: f64 = m.trim().parse().map_err(|_| format!("line {}: bad coefficient", i + 2))?;
            out.push((e, m));
        }
        Ok(out)
    }

    pub fn table_csv(&self) -> String {
        let mut s = String::from("energy_keV,mu_over_rho_cm2_per_g\n");
        for (e, m) in &self.mass_atten {
            s.push_str(&format!("{e},{m}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: String,
    materials: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    density_g_per_cm3: f64,
    table: String,
}

const BUILTIN_MANIFEST: &str = include_str!("../../data/materials/manifest.json");
const BUILTIN_TABLES: &[(&str, &str)] = &[
    ("air.csv", include_str!("../../data/materials/air.csv")),
    ("water.csv", include_str!("../../data/materials/water.csv")),
    ("magnesium.csv", include_str!("../../data/materials/magnesium.csv")),
    ("silicon.csv", include_str!("../../data/materials/silicon.csv")),
    ("aluminum.csv", include_str!("../../data/materials/aluminum.csv")),
    ("titanium.csv", include_str!("../../data/materials/titanium.csv")),
    ("iron.csv", include_str!("../../data/materials/iron.csv")),
    ("copper.csv", include_str!("../../data/materials/copper.csv")),
    ("cement-analog.csv", include_str!("../../data/materials/cement-analog.csv")),
];

/// Named materials, iterated in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDb {
    materials: BTreeMap<String, Material>,
    version: String,
}

impl MaterialDb {
    pub fn new(materials: impl IntoIterator<Item = Material>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for m in materials {
            let name = m.name.clone();
            if map.insert(name.clone(), m).is_some() {
                return Err(Error::invalid(format!("duplicate material `{name}`")));
            }
        }
        Ok(MaterialDb { materials: map, version: "custom".into() })
    }

    /// The database shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_manifest(BUILTIN_MANIFEST, "<builtin>", |file| {
            BUILTIN_TABLES
                .iter()
                .find(|(f, _)| *f == file)
                .map(|(_, t)| t.to_string())
                .ok_or_else(|| Error::format("<builtin>", format!("missing table {file}")))
        })
        .expect("built-in material data is valid")
    }

    /// Loads a database directory holding `manifest.json` and per-material CSV tables.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        Self::from_manifest(&text, &manifest_path.display().to_string(), |file| {
            let p = dir.join(file);
            std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        })
    }

    fn from_manifest(
        text: &str,
        origin: &str,
        read_table: impl Fn(&str) -> Result<String>,
    ) -> Result<Self> {
        let manifest: Manifest =
            serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        let mut mats = Vec::with_capacity(manifest.materials.len());
        for entry in &manifest.materials {
            let table = read_table(&entry.table)?;
            let samples = Material::parse_table(&table).map_err(|e| Error::format(&entry.table, e))?;
            mats.push(Material::new(entry.name.clone(), entry.density_g_per_cm3, samples)?);
        }
        let mut db = Self::new(mats)?;
        db.version = manifest.version;
        Ok(db)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn get(&self, name: &str) -> Result<&Material> {
        self.materials.get(name).ok_or_else(|| Error::UnknownMaterial(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.materials.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Material> {
        self.materials.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.materials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.materials.is_empty()
    }

    /// Checks that every material in [`REQUIRED_MATERIALS`] is present.
    pub fn validate_standard(&self) -> Result<()> {
        for name in REQUIRED_MATERIALS {
            if !self.contains(name) {
                return Err(Error::invalid(format!("material database lacks `{name}`")));
            }
        }
        Ok(())
    }

    /// A database restricted to the named materials.
    pub fn subset(&self, names: &[&str]) -> Result<Self> {
        let mats = names.iter().map(|n| self.get(n).cloned()).collect::<Result<Vec<_>>>()?;
        let mut db = Self::new(mats)?;
        db.version = self.version.clone();
        Ok(db)
    }
}

pub fn linear_attenuation(material: &Material, energy: f64) -> Result<f64> {
    material.linear_attenuation(energy)
}
