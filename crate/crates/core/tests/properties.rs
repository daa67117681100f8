use luvt_core::dataset::{derive_seed, image_name, SCHEMA_VERSION};
use luvt_core::{
    add_measurement_noise, insert_cavity, label_frames, lame_from_speeds, normalize_sequence,
    rasterize_specimen, sample_defect_locations, speeds_from_lame, DatasetManifest, DefectSpec,
    FrameQuantity, FrameSpec, ImageFrame, Label, LabelRule, ManifestHeader, MaterialSpec,
    NoiseModel, Normalization, RawImage, Rect, SampleRecord, SpecimenGeometry,
};
use proptest::prelude::*;

fn spec(normalization: Normalization, gamma: f64) -> FrameSpec {
    FrameSpec {
        quantity: FrameQuantity::VelocityMagnitude,
        normalization,
        gamma,
        pixels_per_cell: 1,
    }
}

fn raw(width: usize, data: Vec<f64>) -> RawImage {
    RawImage {
        width,
        height: data.len() / width,
        data,
        time: 0.0,
    }
}

/// Sequences of 1..5 frames, 4×3 pixels, values spanning several decades.
fn sequences() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(prop_oneof![Just(0.0), -1e3..1e3f64, -1e-3..1e-3f64], 12),
        1..5,
    )
}

fn as_raw(seq: &[Vec<f64>]) -> Vec<RawImage> {
    seq.iter().map(|d| raw(4, d.clone())).collect()
}

proptest! {
    #[test]
    fn lame_round_trip(
        density in 100.0..20_000.0f64,
        shear in 0.0..6_000.0f64,
        excess in 1.0..3.0f64,
    ) {
        let longitudinal = shear * std::f64::consts::SQRT_2 * excess + 1.0;
        let (lambda, mu) = lame_from_speeds(density, longitudinal, shear).unwrap();
        let (cl, ct) = speeds_from_lame(density, lambda, mu).unwrap();
        prop_assert!((cl / longitudinal - 1.0).abs() < 1e-9);
        if shear > 0.0 {
            prop_assert!((ct / shear - 1.0).abs() < 1e-9);
        } else {
            prop_assert_eq!(ct, 0.0);
        }
    }

    #[test]
    fn rasterized_extent_within_one_cell(
        width in 5e-3..0.12f64,
        depth in 5e-3..0.06f64,
        dx in 0.1e-3..1e-3f64,
    ) {
        let geometry = SpecimenGeometry::new(width, depth, Rect::new(0.0, 0.0, width, depth)).unwrap();
        let field = rasterize_specimen(&geometry, &MaterialSpec::aluminum(), dx).unwrap();
        prop_assert!((field.nx as f64 * dx - width).abs() <= dx);
        prop_assert!((field.nz as f64 * dx - depth).abs() <= dx);
        prop_assert_eq!(field.void_count(), 0);
    }

    #[test]
    fn cavity_matches_exhaustive_scan(
        x in 4e-3..16e-3f64,
        z in 4e-3..8e-3f64,
        diameter in 0.3e-3..4e-3f64,
    ) {
        let geometry = SpecimenGeometry::new(20e-3, 12e-3, Rect::new(0.0, 0.0, 20e-3, 12e-3)).unwrap();
        let dx = 0.25e-3;
        let field = rasterize_specimen(&geometry, &MaterialSpec::aluminum(), dx).unwrap();
        let field = insert_cavity(field, &DefectSpec::new(x, z, diameter)).unwrap();
        let r = diameter / 2.0;
        for j in 0..field.nz {
            for i in 0..field.nx {
                let (cx, cz) = ((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dx);
                let inside = (cx - x).powi(2) + (cz - z).powi(2) <= r * r;
                prop_assert_eq!(field.is_void(i, j), inside, "cell ({}, {})", i, j);
            }
        }
    }

    #[test]
    fn intensity_is_monotone_in_magnitude(seq in sequences(), gamma in 0.2..3.0f64) {
        for normalization in [Normalization::PerSequence, Normalization::PerFrame] {
            let frames = normalize_sequence(&as_raw(&seq), &spec(normalization, gamma)).unwrap();
            let global = seq.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for (f, data) in frames.iter().zip(&seq) {
                let local = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let scope = match normalization {
                    Normalization::PerSequence => global,
                    Normalization::PerFrame => local,
                };
                for a in 0..data.len() {
                    for b in 0..data.len() {
                        if data[a].abs() <= data[b].abs() {
                            prop_assert!(f.pixels[a] <= f.pixels[b]);
                        }
                    }
                    let expected = if scope > 0.0 { 255.0 * (data[a].abs() / scope).powf(gamma) } else { 0.0 };
                    prop_assert!((f.pixels[a] as f64 - expected).abs() <= 0.5 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn per_sequence_preserves_frame_max_ratios(seq in sequences()) {
        let frames = normalize_sequence(&as_raw(&seq), &spec(Normalization::PerSequence, 1.0)).unwrap();
        let maxima: Vec<f64> = seq.iter().map(|d| d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
        let global = maxima.iter().copied().fold(0.0, f64::max);
        for (f, m) in frames.iter().zip(&maxima) {
            let top = *f.pixels.iter().max().unwrap() as f64;
            let expected = if global > 0.0 { 255.0 * m / global } else { 0.0 };
            prop_assert!((top - expected).abs() <= 1.0, "{} vs {}", top, expected);
        }
    }

    #[test]
    fn per_sequence_is_scale_invariant(seq in sequences(), exponent in -20i32..20, c in 1e-6..1e6f64) {
        let s = spec(Normalization::PerSequence, 0.5);
        let base = normalize_sequence(&as_raw(&seq), &s).unwrap();
        // powers of two scale without rounding
        let pow2: Vec<Vec<f64>> = seq.iter().map(|d| d.iter().map(|v| v * 2f64.powi(exponent)).collect()).collect();
        prop_assert_eq!(&normalize_sequence(&as_raw(&pow2), &s).unwrap(), &base);
        let scaled: Vec<Vec<f64>> = seq.iter().map(|d| d.iter().map(|v| v * c).collect()).collect();
        for (a, b) in normalize_sequence(&as_raw(&scaled), &s).unwrap().iter().zip(&base) {
            for (p, q) in a.pixels.iter().zip(&b.pixels) {
                prop_assert!((*p as i32 - *q as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn labels_switch_once_at_arrival(
        x in 0.0..0.1f64,
        z in 0.0..0.05f64,
        xr in 0.0..0.1f64,
        speed in 1000.0..8000.0f64,
        interval in 1e-9..1e-6f64,
        n_frames in 1usize..600,
    ) {
        let rule = LabelRule::new((xr, 0.0), speed, interval).unwrap();
        let defect = DefectSpec::new(x, z, 2e-3);
        let labels = label_frames(n_frames, Some(&defect), &rule);
        let arrival = (x - xr).hypot(z) / speed;
        for (k, l) in labels.iter().enumerate() {
            let expected = if k as f64 >= arrival / interval { Label::Defective } else { Label::DefectFree };
            prop_assert_eq!(*l, expected, "frame {}", k);
            prop_assert_eq!(rule.label_at_time(Some(&defect), k as f64 * interval), *l);
        }
        prop_assert!(labels.windows(2).all(|w| !(w[0] == Label::Defective && w[1] == Label::DefectFree)));
        prop_assert!(label_frames(n_frames, None, &rule).iter().all(|l| *l == Label::DefectFree));
    }

    #[test]
    fn sampled_defects_clear_the_region_edges(
        n in 0usize..40,
        seed in any::<u64>(),
        margin in 0.0..3e-3f64,
        diameter in 0.5e-3..3e-3f64,
    ) {
        let region = Rect::new(40e-3, 0.0, 20e-3, 50e-3);
        let a = sample_defect_locations(n, &region, margin, diameter, seed).unwrap();
        prop_assert_eq!(a.len(), n);
        prop_assert_eq!(&a, &sample_defect_locations(n, &region, margin, diameter, seed).unwrap());
        for d in &a {
            let (x, z) = d.center;
            let clear = margin + diameter / 2.0 - 1e-12;
            prop_assert!(x - region.x0 >= clear && region.x1() - x >= clear);
            prop_assert!(z - region.z0 >= clear && region.z1() - z >= clear);
        }
    }

    #[test]
    fn noise_is_a_function_of_the_seed(
        pixels in prop::collection::vec(any::<u8>(), 64),
        sigma in 0.0..20.0f64,
        speckle in 0.0..0.5f64,
        seed in any::<u64>(),
    ) {
        let frame = ImageFrame { width: 8, height: 8, pixels, frame_index: 0 };
        let model = NoiseModel { gaussian_sigma: sigma, speckle_strength: speckle };
        let s = derive_seed(seed, &[1, 0, 0]);
        prop_assert_eq!(add_measurement_noise(&frame, &model, s), add_measurement_noise(&frame, &model, s));
        prop_assert_eq!(add_measurement_noise(&frame, &NoiseModel::default(), s), frame);
    }

    #[test]
    fn manifest_survives_round_trip_and_recheck(
        centres in prop::collection::vec((40e-3..60e-3f64, 3e-3..47e-3f64), 0..4),
        n_frames in 1usize..30,
        interval in 1e-8..1e-6f64,
        flip in any::<prop::sample::Index>(),
    ) {
        let rule = LabelRule::new((50e-3, 0.0), 6320.0, interval).unwrap();
        let mut records = Vec::new();
        let n_locations = centres.len();
        let defects = centres.iter().map(|(x, z)| Some(DefectSpec::new(*x, *z, 2e-3))).chain([None]);
        for (loc, defect) in defects.enumerate() {
            for k in 0..n_frames {
                records.push(SampleRecord {
                    image_path: image_name(defect.map(|_| loc), k),
                    location_id: loc,
                    frame_index: k,
                    time: k as f64 * interval,
                    label: rule.label_at(defect.as_ref(), k),
                    defect,
                });
            }
        }
        let manifest = DatasetManifest {
            header: ManifestHeader {
                schema_version: SCHEMA_VERSION,
                config_digest: "ab".repeat(32),
                seed: 1,
                n_locations,
                n_frames,
                defect_free_sequence: true,
                label_rule: rule,
                n_records: records.len(),
            },
            records,
        };
        manifest.verify().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        manifest.write(&path).unwrap();
        let back = DatasetManifest::read(&path).unwrap();
        prop_assert_eq!(&back, &manifest);
        for r in &back.records {
            let recomputed = label_frames(n_frames, r.defect.as_ref(), &back.header.label_rule);
            prop_assert_eq!(recomputed[r.frame_index], r.label);
        }
        let mut tampered = manifest.clone();
        let k = flip.index(tampered.records.len());
        tampered.records[k].label = match tampered.records[k].label {
            Label::DefectFree => Label::Defective,
            Label::Defective => Label::DefectFree,
        };
        prop_assert!(tampered.verify().is_err());
    }
}
