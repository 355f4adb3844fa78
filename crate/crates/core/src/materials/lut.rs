use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rasterize_phantom, Grid, PhantomSpec, ScanGeometry, Shape};
use crate::materials::{MaterialDb, AIR};
use crate::projection::project_poly;
use crate::reconstruction::{fbp, RampFilter};
use crate::spectrum::{DetectorResponse, Spectrum};
use crate::stats::trimmed_mean;

/// Fraction trimmed from each tail when averaging the calibration ROI.
const ROI_TRIM: f64 = 0.1;
/// ROI radius as a fraction of the calibration disc radius.
const ROI_RADIUS_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutEntry {
    pub material: String,
    /// Reconstructed attenuation of a homogeneous disc (1/cm).
    pub mu_poly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutMeta {
    /// Identifies the scanner setting the table was built for.
    pub setting_id: String,
    pub spectrum_hash: String,
    pub calib_diameter_mm: f64,
    pub material_db_version: String,
}

/// Polychromatic attenuation table, sorted by increasing `mu_poly`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyLut {
    pub meta: LutMeta,
    entries: Vec<LutEntry>,
}

impl PolyLut {
    pub fn new(meta: LutMeta, mut entries: Vec<LutEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("look-up table has no entries"));
        }
        if let Some(e) = entries.iter().find(|e| !e.mu_poly.is_finite()) {
            return Err(Error::invalid(format!("non-finite table value for `{}`", e.material)));
        }
        entries.sort_by(|a, b| a.mu_poly.total_cmp(&b.mu_poly).then_with(|| a.material.cmp(&b.material)));
        Ok(PolyLut { meta, entries })
    }

    pub fn entries(&self) -> &[LutEntry] {
        &self.entries
    }

    pub fn get(&self, material: &str) -> Result<&LutEntry> {
        self.entries
            .iter()
            .find(|e| e.material == material)
            .ok_or_else(|| Error::UnknownMaterial(material.to_string()))
    }

    /// Errors unless the table was built for `setting_id`.
    pub fn check_setting(&self, setting_id: &str) -> Result<()> {
        if self.meta.setting_id != setting_id {
            return Err(Error::LutMismatch(format!(
                "table built for setting `{}`, pipeline configured for `{setting_id}`",
                self.meta.setting_id
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("material,mu_poly_per_cm\n");
        for e in &self.entries {
            s.push_str(&format!("{},{:.17e}\n", e.material, e.mu_poly));
        }
        s
    }

    pub fn from_csv(text: &str, meta: LutMeta) -> std::result::Result<Self, String> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (m, v) = line.split_once(',').ok_or_else(|| format!("line {}: expected two columns", n + 1))?;
            let mu_poly = v.trim().parse().map_err(|_| format!("line {}: bad number `{}`", n + 1, v.trim()))?;
            entries.push(LutEntry { material: m.trim().to_string(), mu_poly });
        }
        PolyLut::new(meta, entries).map_err(|e| e.to_string())
    }
}

/// Acquisition used to scan the calibration discs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSetup {
    pub geometry: ScanGeometry,
    pub grid: Grid,
    pub calib_diameter_mm: f64,
    #[serde(default)]
    pub filter: RampFilter,
}

/// Scans a centred homogeneous disc of every non-air material in `db` and
/// records the trimmed mean of the reconstructed interior.
pub fn build_lut(
    db: &MaterialDb,
    spectrum: &Spectrum,
    resp: &DetectorResponse,
    setup: &CalibrationSetup,
    setting_id: &str,
) -> Result<PolyLut> {
    let radius = setup.calib_diameter_mm / 2.0;
    if !(radius > 0.0) {
        return Err(Error::invalid("calibration diameter must be positive"));
    }
    setup.geometry.check_covers(radius)?;
    let mut entries = Vec::new();
    for m in db.iter().filter(|m| m.name() != AIR) {
        let spec = PhantomSpec {
            name: format!("calibration-{}", m.name()),
            shapes: vec![Shape::Disc { center_mm: setup.grid.midpoint(), radius_mm: radius, material: m.name().into() }],
        };
        let labels = rasterize_phantom(&spec, db, &setup.grid)?;
        let sino = project_poly(&labels, db, &setup.geometry, spectrum, resp)?;
        let img = fbp(&sino, &setup.grid, setup.filter)?;
        let c = setup.grid.midpoint();
        let roi: Vec<f64> = (0..setup.grid.ny)
            .flat_map(|iy| (0..setup.grid.nx).map(move |ix| (ix, iy)))
            .filter(|&(ix, iy)| {
                let p = setup.grid.center(ix, iy);
                (p[0] - c[0]).hypot(p[1] - c[1]) <= ROI_RADIUS_FRACTION * radius
            })
            .map(|(ix, iy)| img.get(ix, iy))
            .collect();
        if roi.is_empty() {
            return Err(Error::Degenerate("calibration ROI contains no pixels".into()));
        }
        entries.push(LutEntry { material: m.name().to_string(), mu_poly: trimmed_mean(&roi, ROI_TRIM)? });
    }
    PolyLut::new(
        LutMeta {
            setting_id: setting_id.to_string(),
            spectrum_hash: spectrum.fingerprint(),
            calib_diameter_mm: setup.calib_diameter_mm,
            material_db_version: db.version().to_string(),
        },
        entries,
    )
}

/// Entry closest to `mu`; exact ties go to the more attenuating material.
pub fn nearest_material(lut: &PolyLut, mu: f64) -> &LutEntry {
    let mut best = &lut.entries[0];
    for e in &lut.entries[1..] {
        // entries are ascending, so `<=` prefers the later (higher) one
        if (e.mu_poly - mu).abs() <= (best.mu_poly - mu).abs() {
            best = e;
        }
    }
    best
}
