mod common;

use std::sync::OnceLock;

use bhc_core::correction::pipeline::{self, label_volume, CorrectionReport};
use bhc_core::correction::{estimate_material, CandidateSweep};
use bhc_core::geometry::VoxelVolume;
use bhc_core::metrics::{cupping_percent, Roi};
use bhc_core::projection::PathLengths;
use bhc_core::spectrum::{mean_energy, DetectorResponse};
use bhc_core::Error;
use common::Desk;

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(Desk::new)
}

fn classes_for(labels: &VoxelVolume) -> usize {
    labels.label_values().unwrap().1.len()
}

#[test]
fn disc_cupping_is_removed() {
    let desk = desk();
    let labels = desk.labels("al_disc");
    let measured = desk.measure(&labels);
    let mut cfg = desk.config();
    cfg.n_classes = classes_for(&labels);
    let out = pipeline::run(&measured, &desk.model(), &cfg).unwrap();
    let center = Roi::Disc { center_mm: [0.0, 0.0], radius_mm: 5.0 };
    let edge = Roi::Annulus { center_mm: [0.0, 0.0], inner_mm: 18.0, outer_mm: 22.0 };
    let before = cupping_percent(&out.uncorrected, &center, &edge).unwrap();
    let after = cupping_percent(&out.corrected, &center, &edge).unwrap();
    assert!(before > 5.0, "{before}");
    assert!(after.abs() < 0.2 * before, "{before} -> {after}");
    assert_eq!(out.report.last_pass().classes[0].material, "aluminum");
}

#[test]
fn air_only_rays_pass_through_untouched() {
    let desk = desk();
    let labels = desk.labels("cement_steel_a");
    let measured = desk.measure(&labels);
    let out = pipeline::run(&measured, &desk.model(), &desk.config()).unwrap();
    let paths = PathLengths::from_labels(&out.labels, &desk.geom).unwrap();
    let corrected = out.projection.corrected.values();
    let mut background = 0;
    for ray in 0..desk.geom.n_rays() {
        if paths.is_background(ray) {
            background += 1;
            assert_eq!(corrected[ray].to_bits(), measured.values()[ray].to_bits());
        }
    }
    assert!(background > 0);
}

#[test]
fn selected_energy_is_inside_the_spectrum() {
    let desk = desk();
    let labels = desk.labels("cement_steel_a");
    let out = pipeline::run(&desk.measure(&labels), &desk.model(), &desk.config()).unwrap();
    let e = out.report.last_pass().energy_kev;
    let floor = mean_energy(&desk.base).unwrap() - 10.0;
    assert!(e > desk.base.e_min() && e < desk.base.energies().last().unwrap(), "{e}");
    assert!(e > floor, "{e} vs {floor}");
}

#[test]
fn table_for_another_setting_is_refused() {
    let desk = desk();
    let labels = desk.labels("al_disc");
    let mut cfg = desk.config();
    cfg.setting_id = "other-scanner".into();
    let err = pipeline::run(&desk.measure(&labels), &desk.model(), &cfg).unwrap_err();
    assert!(matches!(err, Error::LutMismatch(_)), "{err}");
}

#[test]
fn restricted_and_exhaustive_sweeps_agree_on_the_shipped_phantoms() {
    let desk = desk();
    let resp = DetectorResponse::for_kind(desk.response, &desk.base);
    let mut disagreements = Vec::new();
    for name in bhc_core::phantoms::builtin_names() {
        let labels = desk.labels(name);
        let mut cfg = desk.config();
        cfg.n_classes = classes_for(&labels);
        let img = pipeline::reconstruct(&desk.measure(&labels), &cfg).unwrap();
        let seg = pipeline::segment_image(&img, &cfg).unwrap();
        for class in 1..=seg.class_volumes().len() {
            let vol = seg.class_volume(class);
            if vol.attenuation_values().unwrap().iter().all(|&v| v == 0.0) {
                continue;
            }
            let pick = |sweep| {
                estimate_material(vol, &desk.lut, &desk.db, &desk.base, &resp, &desk.geom, sweep).unwrap()
            };
            let restricted = pick(CandidateSweep::AtLeastInitial);
            let exhaustive = pick(CandidateSweep::Everything);
            let best = |e: &bhc_core::correction::MaterialEstimate| {
                e.candidates.iter().find(|c| c.material == e.chosen).unwrap().mse
            };
            // the wider sweep can only match or improve the fit
            assert!(best(&exhaustive) <= best(&restricted));
            if restricted.chosen != exhaustive.chosen {
                disagreements.push(format!("{name} class {class}: {} vs {}", restricted.chosen, exhaustive.chosen));
            }
        }
    }
    for d in &disagreements {
        eprintln!("sweep disagreement: {d}");
    }
}

#[test]
fn single_bin_scanner_with_exact_labels_needs_no_correction() {
    let desk = Desk::monoenergetic(60.0);
    let labels = desk.labels("al_steel");
    let measured = desk.measure(&labels);
    let out = pipeline::correct_from_labels(&measured, &labels, &desk.model(), &desk.config()).unwrap();
    assert_eq!(out.energy.energy_kev, 60.0);
    let worst = out.term.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-8, "{worst}");
    for (c, m) in out.corrected.values().iter().zip(measured.values()) {
        assert!((c - m).abs() < 1e-8);
    }
}

#[test]
fn forced_materials_skip_estimation_and_label_the_classes() {
    let desk = desk();
    let labels = desk.labels("cement_steel_a");
    let mut cfg = desk.config();
    cfg.forced_materials = Some(vec!["cement-analog".into(), "iron".into()]);
    let out = pipeline::run(&desk.measure(&labels), &desk.model(), &cfg).unwrap();
    let pass = out.report.last_pass();
    // forced classes record the measured attenuation but sweep no candidates
    assert!(pass.classes.iter().all(|c| c.estimate.as_ref().unwrap().candidates.is_empty()));
    let relabelled = label_volume(&out.segmentation, &["cement-analog".into(), "iron".into()]).unwrap();
    assert_eq!(relabelled, out.labels);

    let text = out.report.to_json().unwrap();
    let back: CorrectionReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, out.report);
}
