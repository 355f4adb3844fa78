//! Binned X-ray tube spectra, filtration and detector response.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::materials::{Material, MaterialDb};

/// Lowest emitted energy of generated tube spectra.
pub const E_MIN_KEV: f64 = 10.0;
pub const DEFAULT_BIN_KEV: f64 = 1.0;
pub const MAX_KEV: f64 = 200.0;

/// A filter layer: material name and thickness in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub material: String,
    pub thickness_mm: f64,
}

impl FilterSpec {
    pub fn new(material: impl Into<String>, thickness_mm: f64) -> Self {
        FilterSpec { material: material.into(), thickness_mm }
    }

    /// Parses `material:thickness_mm`, e.g. `aluminum:1.5`.
    pub fn parse(s: &str) -> Result<Self> {
        let (m, t) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("filter `{s}` is not material:thickness_mm")))?;
        let t: f64 = t.trim().parse().map_err(|_| Error::invalid(format!("bad filter thickness in `{s}`")))?;
        Ok(FilterSpec::new(m.trim(), t))
    }
}

/// Descriptive metadata carried alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub kvp: Option<f64>,
    pub anode_z: Option<u32>,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    e_min: f64,
    bin_width: f64,
    weights: Vec<f64>,
    meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(e_min: f64, bin_width: f64, weights: Vec<f64>, meta: SpectrumMeta) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("spectrum has no bins"));
        }
        if !(e_min > 0.0 && bin_width > 0.0) {
            return Err(Error::invalid("spectrum grid must start above 0 with positive spacing"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("spectrum weights must be finite and >= 0"));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::Degenerate("spectrum has no positive weight".into()));
        }
        let e_max = e_min + bin_width * (weights.len() - 1) as f64;
        if e_max > MAX_KEV + 1e-9 {
            return Err(Error::invalid(format!("spectrum extends to {e_max} keV, above {MAX_KEV}")));
        }
        Ok(Spectrum { e_min, bin_width, weights, meta })
    }

    /// A one-bin spectrum at `energy` keV.
    pub fn monoenergetic(energy: f64) -> Result<Self> {
        Self::new(energy, DEFAULT_BIN_KEV, vec![1.0], SpectrumMeta::default())
    }

    /// Builds a spectrum from explicit (energy, weight) pairs on a uniform grid.
    pub fn from_samples(samples: &[(f64, f64)], meta: SpectrumMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("spectrum has no bins"));
        }
        let e_min = samples[0].0;
        let bin_width = if samples.len() > 1 { samples[1].0 - samples[0].0 } else { DEFAULT_BIN_KEV };
        for (i, (e, _)) in samples.iter().enumerate() {
            let expect = e_min + bin_width * i as f64;
            if (e - expect).abs() > 1e-6 * bin_width.max(1.0) {
                return Err(Error::invalid("spectrum energies must lie on a uniform increasing grid"));
            }
        }
        Self::new(e_min, bin_width, samples.iter().map(|s| s.1).collect(), meta)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn e_min(&self) -> f64 {
        self.e_min
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn energy(&self, bin: usize) -> f64 {
        self.e_min + self.bin_width * bin as f64
    }

    pub fn energies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.weights.len()).map(move |i| self.energy(i))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn meta(&self) -> &SpectrumMeta {
        &self.meta
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_energy(&self) -> f64 {
        self.energy(self.weights.len() - 1)
    }

    /// Copy with every weight multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.weights.iter_mut().for_each(|w| *w *= factor);
        s
    }

    /// True when both spectra share the same energy grid.
    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.weights.len() == other.weights.len()
            && self.e_min == other.e_min
            && self.bin_width == other.bin_width
    }

    /// Hex SHA-256 over the grid and weights.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.e_min.to_le_bytes());
        h.update(self.bin_width.to_le_bytes());
        for w in &self.weights {
            h.update(w.to_le_bytes());
        }
        hex(&h.finalize())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("energy_keV,weight\n");
        for (e, w) in self.energies().zip(&self.weights) {
            s.push_str(&format!("{e},{w:e}\n"));
        }
        s
    }

    pub fn from_csv(text: &str, meta: SpectrumMeta) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "energy_keV,weight" => {}
            other => return Err(format!("unexpected header {other:?}")),
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (e, w) = line.split_once(',').ok_or_else(|| format!("line {}: expected two fields", i + 2))?;
            let e: f64 = e.trim().parse().map_err(|_| format!("line {}: bad energy", i + 2))?;
            let w: f64 = w.trim().parse().map_err(|_| format!("line {}: bad weight", i + 2))?;
            samples.push((e, w));
        }
        Spectrum::from_samples(&samples, meta).map_err(|e| e.to_string())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Kramers continuum `Z (kVp - E) / E` on a 1 keV grid from 10 keV to kVp.
pub fn generate_tube_spectrum(kvp: f64, anode_z: u32) -> Result<Spectrum> {
    if !(40.0..=200.0).contains(&kvp) {
        return Err(Error::invalid(format!("kVp {kvp} outside [40, 200]")));
    }
    if anode_z == 0 {
        return Err(Error::invalid("anode atomic number must be positive"));
    }
    let n = ((kvp - E_MIN_KEV) / DEFAULT_BIN_KEV).floor() as usize + 1;
    let z = anode_z as f64;
    let weights = (0..n)
        .map(|i| {
            let e = E_MIN_KEV + DEFAULT_BIN_KEV * i as f64;
            (z * (kvp - e) / e).max(0.0)
        })
        .collect();
    let meta = SpectrumMeta { kvp: Some(kvp), anode_z: Some(anode_z), filters: Vec::new() };
    Spectrum::new(E_MIN_KEV, DEFAULT_BIN_KEV, weights, meta)
}

/// Attenuates every bin by `exp(-mu(E) * thickness)`.
pub fn filter_spectrum(s: &Spectrum, material: &Material, thickness_mm: f64) -> Result<Spectrum> {
    if !(thickness_mm >= 0.0 && thickness_mm.is_finite()) {
        return Err(Error::invalid(format!("filter thickness {thickness_mm} mm must be >= 0")));
    }
    let t_cm = thickness_mm / 10.0;
    let mut out = s.clone();
    for (i, w) in out.weights.iter_mut().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let mu = material.linear_attenuation(s.energy(i))?;
        *w *= (-mu * t_cm).exp();
    }
    if !out.weights.iter().any(|w| *w > 0.0) {
        return Err(Error::Degenerate(format!(
            "{thickness_mm} mm of {} absorbs the whole spectrum",
            material.name()
        )));
    }
    out.meta.filters.push(FilterSpec::new(material.name(), thickness_mm));
    Ok(out)
}

/// Applies a stack of filters in order.
pub fn apply_filters(s: &Spectrum, db: &MaterialDb, filters: &[FilterSpec]) -> Result<Spectrum> {
    let mut out = s.clone();
    for f in filters {
        out = filter_spectrum(&out, db.get(&f.material)?, f.thickness_mm)?;
    }
    Ok(out)
}

pub fn mean_energy(s: &Spectrum) -> Result<f64> {
    let total = s.total();
    if !(total > 0.0) {
        return Err(Error::Degenerate("spectrum has zero total weight".into()));
    }
    let num: f64 = s.energies().zip(s.weights()).map(|(e, w)| e * w).sum();
    Ok(num / total)
}

/// The eight-member filtration family used for polychromatic regression.
pub fn default_filter_family() -> Vec<FilterSpec> {
    vec![
        FilterSpec::new("aluminum", 0.0),
        FilterSpec::new("aluminum", 1.0),
        FilterSpec::new("aluminum", 2.0),
        FilterSpec::new("aluminum", 4.0),
        FilterSpec::new("copper", 0.1),
        FilterSpec::new("copper", 0.25),
        FilterSpec::new("copper", 0.5),
        FilterSpec::new("copper", 1.0),
    ]
}

pub fn make_filtered_family(base: &Spectrum, db: &MaterialDb, specs: &[FilterSpec]) -> Result<Vec<Spectrum>> {
    if specs.is_empty() {
        return Err(Error::invalid("filtered family is empty"));
    }
    specs
        .iter()
        .map(|f| filter_spectrum(base, db.get(&f.material)?, f.thickness_mm))
        .collect()
}

/// Per-bin detector efficiency paired with a spectrum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorResponse {
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseKind {
    /// Photon counting, eta = 1.
    #[default]
    Flat,
    /// Energy integrating, eta proportional to E.
    EnergyIntegrating,
}

impl DetectorResponse {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("detector response must be finite and >= 0"));
        }
        if !values.iter().any(|v| *v > 0.0) {
            return Err(Error::Degenerate("detector response is all zero".into()));
        }
        Ok(DetectorResponse { values })
    }

    pub fn flat(s: &Spectrum) -> Self {
        DetectorResponse { values: vec![1.0; s.len()] }
    }

    pub fn energy_integrating(s: &Spectrum) -> Self {
        DetectorResponse { values: s.energies().collect() }
    }

    pub fn for_kind(kind: ResponseKind, s: &Spectrum) -> Self {
        match kind {
            ResponseKind::Flat => Self::flat(s),
            ResponseKind::EnergyIntegrating => Self::energy_integrating(s),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DetectorResponse { values: self.values.iter().map(|v| v * factor).collect() }
    }

    pub(crate) fn check_grid(&self, s: &Spectrum) -> Result<()> {
        if self.values.len() != s.len() {
            return Err(Error::ShapeMismatch(format!(
                "detector response has {} bins, spectrum has {}",
                self.values.len(),
                s.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn db() -> MaterialDb {
        MaterialDb::builtin()
    }

    #[test]
    fn kramers_shape() {
        let s = generate_tube_spectrum(100.0, 74).unwrap();
        assert_eq!(s.max_energy(), 100.0);
        assert_eq!(*s.weights().last().unwrap(), 0.0);
        let w50 = s.weights()[40];
        let w99 = s.weights()[89];
        assert_relative_eq!(w50 / w99, 99.0, max_relative = 1e-12);
        assert!(s.weights().iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn kvp_range_enforced() {
        assert!(generate_tube_spectrum(39.0, 74).is_err());
        assert!(generate_tube_spectrum(201.0, 74).is_err());
        assert!(generate_tube_spectrum(200.0, 74).is_ok());
    }

    #[test]
    fn kramers_150_mean_energy() {
        // direct summation oracle
        let (mut num, mut den) = (0.0, 0.0);
        for e in 10..=150 {
            let e = e as f64;
            let w = (150.0 - e) / e;
            num += e * w;
            den += w;
        }
        let oracle = num / den;
        assert_relative_eq!(oracle, 36.10995203350612, max_relative = 1e-12);
        let got = mean_energy(&generate_tube_spectrum(150.0, 74).unwrap()).unwrap();
        assert_relative_eq!(got, oracle, max_relative = 1e-12);
    }

    #[test]
    fn kramers_100_mean_energy_matches_summation() {
        let got = mean_energy(&generate_tube_spectrum(100.0, 74).unwrap()).unwrap();
        assert_relative_eq!(got, 28.272395811803687, max_relative = 1e-12);
    }

    #[test]
    fn mean_energy_simple_cases() {
        assert_eq!(mean_energy(&Spectrum::monoenergetic(55.0).unwrap()).unwrap(), 55.0);
        let s = Spectrum::from_samples(&[(50.0, 1.0), (60.0, 0.0), (70.0, 1.0)], SpectrumMeta::default()).unwrap();
        assert_relative_eq!(mean_energy(&s).unwrap(), 60.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(Spectrum::new(10.0, 1.0, vec![0.0; 4], SpectrumMeta::default()).is_err());
    }

    #[test]
    fn zero_thickness_is_identity() {
        let s = generate_tube_spectrum(120.0, 74).unwrap();
        let f = filter_spectrum(&s, db().get("aluminum").unwrap(), 0.0).unwrap();
        assert_eq!(f.weights(), s.weights());
    }

    #[test]
    fn filtration_hardens_every_solid() {
        let s = generate_tube_spectrum(150.0, 74).unwrap();
        let m0 = mean_energy(&s).unwrap();
        for mat in db().iter().filter(|m| m.name() != "air") {
            let f = filter_spectrum(&s, mat, 0.5).unwrap();
            assert!(mean_energy(&f).unwrap() > m0, "{} did not harden", mat.name());
        }
    }

    #[test]
    fn filtration_composes() {
        let s = generate_tube_spectrum(150.0, 74).unwrap();
        let al = db().get("aluminum").unwrap().clone();
        let twice = filter_spectrum(&filter_spectrum(&s, &al, 1.5).unwrap(), &al, 1.5).unwrap();
        let once = filter_spectrum(&s, &al, 3.0).unwrap();
        for (a, b) in twice.weights().iter().zip(once.weights()) {
            if *b > 0.0 {
                assert!(((a - b) / b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn family_order_and_hardening() {
        let db = db();
        let base = generate_tube_spectrum(150.0, 74).unwrap();
        let specs = default_filter_family();
        let fam = make_filtered_family(&base, &db, &specs).unwrap();
        assert_eq!(fam.len(), specs.len());
        let means: Vec<f64> = fam.iter().map(|s| mean_energy(s).unwrap()).collect();
        for group in [&means[0..4], &means[4..8]] {
            for w in group.windows(2) {
                assert!(w[1] > w[0]);
            }
        }
        let single = make_filtered_family(&base, &db, &[FilterSpec::new("aluminum", 0.0)]).unwrap();
        assert_eq!(single[0].weights(), base.weights());
    }

    #[test]
    fn csv_roundtrip() {
        let s = generate_tube_spectrum(80.0, 74).unwrap();
        let back = Spectrum::from_csv(&s.to_csv(), s.meta().clone()).unwrap();
        assert_eq!(back.weights(), s.weights());
        assert_eq!(back.fingerprint(), s.fingerprint());
    }

    #[test]
    fn filter_spec_parse() {
        assert_eq!(FilterSpec::parse("copper:0.25").unwrap(), FilterSpec::new("copper", 0.25));
        assert!(FilterSpec::parse("copper").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn filtration_never_adds_photons(t in 0.0f64..5.0, dt in 0.0f64..2.0, kvp in 40.0f64..200.0) {
                let db = MaterialDb::builtin();
                let s = generate_tube_spectrum(kvp, 74).unwrap();
                let al = db.get("aluminum").unwrap();
                let a = filter_spectrum(&s, al, t).unwrap();
                let b = filter_spectrum(&s, al, t + dt).unwrap();
                for ((w0, wa), wb) in s.weights().iter().zip(a.weights()).zip(b.weights()) {
                    prop_assert!(wa <= w0);
                    prop_assert!(wb <= wa);
                }
                prop_assert!(a.total() <= s.total());
            }

            #[test]
            fn mean_energy_scale_invariant(k in 1e-6f64..1e6, kvp in 40.0f64..200.0) {
                let s = generate_tube_spectrum(kvp, 74).unwrap();
                let a = mean_energy(&s).unwrap();
                let b = mean_energy(&s.scaled(k)).unwrap();
                prop_assert!(((a - b) / a).abs() < 1e-12);
            }
        }
    }
}
