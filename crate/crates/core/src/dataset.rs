//! Labeled image sequences over sampled defect locations.
//!
//! Output tree:
//!
//! ```text
//! <out>/config.snapshot
//! <out>/manifest.jsonl
//! <out>/images/loc0000_frame0000.png
//! <out>/images/nodefect_frame0000.png
//! ```
//!
//! `manifest.jsonl` holds one header object followed by one record per
//! image, sorted by `(location_id, frame_index)`. The defect-free sequence
//! uses `location_id = n_locations`.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunPlan};
use crate::error::{Error, Result};
use crate::fdtd::Solver;
use crate::imaging::{encode_image, extract_snapshot, normalize_sequence, ImageFrame};
use crate::material::{insert_cavity, DefectSpec, Rect};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    DefectFree,
    Defective,
}

/// Frames before the longitudinal wave reaches the defect centre are
/// defect-free, every later frame is defective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRule {
    /// Transducer centre `(x, z)`, m.
    #[serde(rename = "reference_point_m")]
    pub reference_point: (f64, f64),
    #[serde(rename = "wave_speed_m_s")]
    pub wave_speed: f64,
    #[serde(rename = "frame_interval_s")]
    pub frame_interval: f64,
}

impl LabelRule {
    pub fn new(reference_point: (f64, f64), wave_speed: f64, frame_interval: f64) -> Result<Self> {
        if !(wave_speed.is_finite() && wave_speed > 0.0) {
            return Err(Error::Configuration(format!(
                "label wave speed must be positive, got {wave_speed}"
            )));
        }
        if !(frame_interval.is_finite() && frame_interval > 0.0) {
            return Err(Error::Configuration(format!(
                "frame interval must be positive, got {frame_interval}"
            )));
        }
        Ok(Self {
            reference_point,
            wave_speed,
            frame_interval,
        })
    }

    /// Straight-line travel time to the defect centre, s.
    pub fn arrival_time(&self, defect: &DefectSpec) -> f64 {
        let (x0, z0) = self.reference_point;
        let (x, z) = defect.center;
        (x - x0).hypot(z - z0) / self.wave_speed
    }

    /// `⌈arrival / frame_interval⌉`.
    pub fn first_defective_frame(&self, defect: &DefectSpec) -> usize {
        (self.arrival_time(defect) / self.frame_interval).ceil() as usize
    }

    pub fn label_at(&self, defect: Option<&DefectSpec>, frame_index: usize) -> Label {
        match defect {
            Some(d) if frame_index >= self.first_defective_frame(d) => Label::Defective,
            _ => Label::DefectFree,
        }
    }

    /// Label of the frame sampled at `time`.
    pub fn label_at_time(&self, defect: Option<&DefectSpec>, time: f64) -> Label {
        let index = (time / self.frame_interval).round().max(0.0) as usize;
        self.label_at(defect, index)
    }
}

pub fn label_frames(n_frames: usize, defect: Option<&DefectSpec>, rule: &LabelRule) -> Vec<Label> {
    (0..n_frames).map(|k| rule.label_at(defect, k)).collect()
}

/// `n` centres drawn uniformly from `region` shrunk by `margin` plus the
/// defect radius, so every circle keeps `margin` clear of the region edges.
pub fn sample_defect_locations(
    n: usize,
    region: &Rect,
    margin: f64,
    diameter: f64,
    seed: u64,
) -> Result<Vec<DefectSpec>> {
    if !(diameter.is_finite() && diameter > 0.0) {
        return Err(Error::Placement(format!(
            "defect diameter must be positive, got {diameter}"
        )));
    }
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::Placement(format!(
            "margin must be non-negative, got {margin}"
        )));
    }
    let feasible = region.shrink(margin + 0.5 * diameter).ok_or_else(|| {
        Error::Placement(format!(
            "no room for a {diameter:.3e} m defect with {margin:.3e} m margin in a {:.3e} × {:.3e} m region",
            region.width, region.height
        ))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
    Ok((0..n)
        .map(|_| {
            let x = feasible.x0 + rng.random::<f64>() * feasible.width;
            let z = feasible.z0 + rng.random::<f64>() * feasible.height;
            DefectSpec::new(x, z, diameter)
        })
        .collect())
}

/// Parametric measurement noise in intensity units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub gaussian_sigma: f64,
    pub speckle_strength: f64,
}

impl NoiseModel {
    pub fn is_identity(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.speckle_strength == 0.0
    }
}

/// `clamp(round(i · (1 + strength·u) + g))` with `u ~ N(0, 1)` and
/// `g ~ N(0, σ)` drawn per pixel.
pub fn add_measurement_noise(frame: &ImageFrame, model: &NoiseModel, seed: u64) -> ImageFrame {
    if model.is_identity() {
        return frame.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, model.gaussian_sigma.max(0.0)).expect("finite sigma");
    let pixels = frame
        .pixels
        .iter()
        .map(|&p| {
            let u: f64 = StandardNormal.sample(&mut rng);
            let g = gauss.sample(&mut rng);
            (p as f64 * (1.0 + model.speckle_strength * u) + g)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    ImageFrame {
        pixels,
        ..frame.clone()
    }
}

/// Mixes `parts` into `seed` with the splitmix64 finalizer.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(seed), |acc, p| mix(acc ^ mix(*p)))
}

/// Defect as written to the manifest, with units in the keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefectRecord {
    center_x_m: f64,
    center_z_m: f64,
    diameter_m: f64,
}

mod defect_json {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        d: &Option<DefectSpec>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        d.map(|d| DefectRecord {
            center_x_m: d.center.0,
            center_z_m: d.center.1,
            diameter_m: d.diameter,
        })
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<DefectSpec>, D::Error> {
        Ok(Option::<DefectRecord>::deserialize(d)?
            .map(|r| DefectSpec::new(r.center_x_m, r.center_z_m, r.diameter_m)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    /// Relative to the output directory, `/`-separated.
    pub image_path: String,
    pub location_id: usize,
    pub frame_index: usize,
    #[serde(rename = "time_s")]
    pub time: f64,
    pub label: Label,
    #[serde(with = "defect_json")]
    pub defect: Option<DefectSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub schema_version: u32,
    /// SHA-256 of `config.snapshot`.
    pub config_digest: String,
    pub seed: u64,
    pub n_locations: usize,
    pub n_frames: usize,
    pub defect_free_sequence: bool,
    pub label_rule: LabelRule,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    /// Serialized JSON lines, header first.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_jsonl().as_bytes())
            .and_then(|_| file.sync_all())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, message: String| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| bad(1, "empty manifest".into()))?;
        let first = first.map_err(|e| Error::io(path, e))?;
        let header: ManifestHeader =
            serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
        let mut records = Vec::with_capacity(header.n_records);
        for (k, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| bad(k + 1, e.to_string()))?);
        }
        Ok(Self { header, records })
    }

    /// Structural invariants plus the label recheck: ordering, unique paths,
    /// record count, and every stored label equal to the rule applied to the
    /// record's defect and time.
    pub fn verify(&self) -> Result<()> {
        let fail = |message: String| Err(Error::Configuration(format!("manifest: {message}")));
        if self.header.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "unsupported schema version {}",
                self.header.schema_version
            ));
        }
        if self.header.n_records != self.records.len() {
            return fail(format!(
                "header announces {} records, found {}",
                self.header.n_records,
                self.records.len()
            ));
        }
        let mut paths = HashSet::new();
        for (k, r) in self.records.iter().enumerate() {
            if k > 0 {
                let p = &self.records[k - 1];
                if (p.location_id, p.frame_index) >= (r.location_id, r.frame_index) {
                    return fail(format!("record {k} is out of order"));
                }
            }
            if !paths.insert(r.image_path.as_str()) {
                return fail(format!("duplicate image path {}", r.image_path));
            }
            let expected = self
                .header
                .label_rule
                .label_at_time(r.defect.as_ref(), r.time);
            if expected != r.label {
                return fail(format!(
                    "{} is labeled {:?} but the rule gives {:?}",
                    r.image_path, r.label, expected
                ));
            }
        }
        Ok(())
    }
}

pub fn image_name(location: Option<usize>, frame_index: usize) -> String {
    match location {
        Some(l) => format!("{IMAGE_DIR}/loc{l:04}_frame{frame_index:04}.png"),
        None => format!("{IMAGE_DIR}/nodefect_frame{frame_index:04}.png"),
    }
}

/// Simulates one sequence and renders it to 8-bit frames.
pub fn render_sequence(plan: &RunPlan, defect: Option<&DefectSpec>) -> Result<Vec<ImageFrame>> {
    let field = match defect {
        Some(d) => insert_cavity(plan.field.clone(), d)?,
        None => plan.field.clone(),
    };
    let solver = Solver::new(&field, &plan.params)?;
    let mut raw = Vec::with_capacity(plan.timing.n_frames);
    solver.run(
        Some(&plan.source),
        &[],
        plan.timing.frame_every,
        |_, state| {
            raw.push(extract_snapshot(
                state,
                &field,
                &plan.view,
                &plan.frame_spec,
            )?);
            Ok(())
        },
    )?;
    normalize_sequence(&raw, &plan.frame_spec)
}

/// Progress notification after each finished sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

/// Writes images as they are produced and removes them again on failure.
struct OutputTree {
    root: PathBuf,
    written: Vec<PathBuf>,
    created_dir: bool,
}

impl OutputTree {
    fn create(root: &Path) -> Result<Self> {
        let images = root.join(IMAGE_DIR);
        let created_dir = !images.exists();
        fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            created_dir,
        })
    }

    fn write_sequence(&mut self, frames: &[(String, ImageFrame)]) -> Result<()> {
        let paths: Vec<PathBuf> = frames
            .iter()
            .map(|(name, _)| self.root.join(name))
            .collect();
        let results: Vec<Result<()>> = frames
            .par_iter()
            .zip(&paths)
            .map(|((_, frame), path)| encode_image(frame, path))
            .collect();
        let mut first_error = None;
        for (path, result) in paths.into_iter().zip(results) {
            match result {
                Ok(()) => self.written.push(path),
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        first_error.map_or(Ok(()), Err)
    }

    fn discard(self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        let _ = fs::remove_file(self.root.join(MANIFEST_FILE));
        let _ = fs::remove_file(self.root.join(SNAPSHOT_FILE));
        if self.created_dir {
            let _ = fs::remove_dir(self.root.join(IMAGE_DIR));
        }
    }
}

fn records_for(
    plan: &RunPlan,
    location: Option<usize>,
    location_id: usize,
    defect: Option<&DefectSpec>,
) -> Vec<SampleRecord> {
    (0..plan.timing.n_frames)
        .map(|k| SampleRecord {
            image_path: image_name(location, k),
            location_id,
            frame_index: k,
            time: plan.timing.frame_time(k),
            label: plan.rule.label_at(defect, k),
            defect: defect.copied(),
        })
        .collect()
}

fn generate_into(
    config: &RunConfig,
    plan: &RunPlan,
    tree: &mut OutputTree,
    on_progress: &mut dyn FnMut(Progress),
) -> Result<DatasetManifest> {
    let ds = &config.dataset;
    let seed = ds.seed;
    let defects = sample_defect_locations(
        ds.n_locations,
        &plan.view,
        plan.margin,
        plan.defect_diameter,
        seed,
    )?;
    let noise = NoiseModel {
        gaussian_sigma: ds.noise_sigma,
        speckle_strength: ds.speckle_strength,
    };

    let mut jobs: Vec<(Option<usize>, usize, Option<DefectSpec>)> = defects
        .iter()
        .enumerate()
        .map(|(l, d)| (Some(l), l, Some(*d)))
        .collect();
    if ds.emit_defect_free {
        jobs.push((None, ds.n_locations, None));
    }
    let total = jobs.len();

    let mut records = Vec::with_capacity(total * plan.timing.n_frames);
    for (done, (location, location_id, defect)) in jobs.into_iter().enumerate() {
        let with_context = |e: Error| Error::Location {
            location: location_id,
            source: Box::new(e),
        };
        let frames = render_sequence(plan, defect.as_ref()).map_err(with_context)?;
        let named: Vec<(String, ImageFrame)> = frames
            .into_iter()
            .enumerate()
            .map(|(k, f)| {
                let f = add_measurement_noise(
                    &f,
                    &noise,
                    derive_seed(seed, &[1, location_id as u64, k as u64]),
                );
                (image_name(location, k), f)
            })
            .collect();
        tree.write_sequence(&named).map_err(with_context)?;
        records.extend(records_for(plan, location, location_id, defect.as_ref()));
        on_progress(Progress {
            done: done + 1,
            total,
        });
    }

    let snapshot = config.snapshot();
    let snapshot_path = tree.root.join(SNAPSHOT_FILE);
    fs::write(&snapshot_path, &snapshot).map_err(|e| Error::io(&snapshot_path, e))?;
    let manifest = DatasetManifest {
        header: ManifestHeader {
            schema_version: SCHEMA_VERSION,
            config_digest: config.digest(),
            seed,
            n_locations: ds.n_locations,
            n_frames: plan.timing.n_frames,
            defect_free_sequence: ds.emit_defect_free,
            label_rule: plan.rule,
            n_records: records.len(),
        },
        records,
    };
    manifest.verify()?;
    manifest.write(&tree.root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Simulates every sampled location (plus the shared defect-free sequence
/// when enabled), writes the images, `config.snapshot` and, last,
/// `manifest.jsonl`. On failure the images written so far are removed.
pub fn generate_dataset(
    config: &RunConfig,
    out: &Path,
    on_progress: &mut dyn FnMut(Progress),
) -> Result<DatasetManifest> {
    let plan = config.plan()?;
    let mut tree = OutputTree::create(out)?;
    match generate_into(config, &plan, &mut tree, on_progress) {
        Ok(m) => Ok(m),
        Err(e) => {
            tree.discard();
            Err(e)
        }
    }
}

/// One sequence for the configured `[defect]` (or none), written as
/// `loc0000_frame*.png` with a single-location manifest.
pub fn simulate_sequence(config: &RunConfig, out: &Path) -> Result<DatasetManifest> {
    let plan = config.plan()?;
    let mut tree = OutputTree::create(out)?;
    let result = (|| {
        let defect = plan.defect;
        let frames = render_sequence(&plan, defect.as_ref())?;
        let named: Vec<(String, ImageFrame)> = frames
            .into_iter()
            .enumerate()
            .map(|(k, f)| (image_name(Some(0), k), f))
            .collect();
        tree.write_sequence(&named)?;
        let records = records_for(&plan, Some(0), 0, defect.as_ref());
        let snapshot_path = out.join(SNAPSHOT_FILE);
        fs::write(&snapshot_path, config.snapshot()).map_err(|e| Error::io(&snapshot_path, e))?;
        let manifest = DatasetManifest {
            header: ManifestHeader {
                schema_version: SCHEMA_VERSION,
                config_digest: config.digest(),
                seed: config.dataset.seed,
                n_locations: 1,
                n_frames: plan.timing.n_frames,
                defect_free_sequence: false,
                label_rule: plan.rule,
                n_records: records.len(),
            },
            records,
        };
        manifest.write(&out.join(MANIFEST_FILE))?;
        Ok(manifest)
    })();
    if result.is_err() {
        tree.discard();
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule() -> LabelRule {
        LabelRule::new((0.05, 0.0), 6320.0, 0.1e-6).unwrap()
    }

    #[test]
    fn no_defect_is_all_defect_free() {
        let labels = label_frames(431, None, &rule());
        assert_eq!(labels.len(), 431);
        assert!(labels.iter().all(|l| *l == Label::DefectFree));
    }

    #[test]
    fn defect_below_transducer() {
        // 25 mm / 6320 m/s = 3.9557 µs → ⌈39.557⌉ = 40
        let d = DefectSpec::new(0.05, 0.025, 2e-3);
        let labels = label_frames(100, Some(&d), &rule());
        assert!(labels[..40].iter().all(|l| *l == Label::DefectFree));
        assert!(labels[40..].iter().all(|l| *l == Label::Defective));
    }

    #[test]
    fn defect_at_reference_point_is_always_defective() {
        let d = DefectSpec::new(0.05, 0.0, 2e-3);
        assert!(label_frames(10, Some(&d), &rule())
            .iter()
            .all(|l| *l == Label::Defective));
    }

    #[test]
    fn invalid_rules_rejected() {
        assert!(LabelRule::new((0.0, 0.0), 0.0, 1e-7).is_err());
        assert!(LabelRule::new((0.0, 0.0), 6320.0, -1.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_respects_margins() {
        let view = Rect::new(0.04, 0.0, 0.02, 0.05);
        let a = sample_defect_locations(1000, &view, 2e-3, 2e-3, 11).unwrap();
        let b = sample_defect_locations(1000, &view, 2e-3, 2e-3, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a,
            sample_defect_locations(1000, &view, 2e-3, 2e-3, 12).unwrap()
        );
        for d in &a {
            let (x, z) = d.center;
            let clearance = [x - view.x0, view.x1() - x, z - view.z0, view.z1() - z];
            assert!(clearance.iter().all(|c| *c >= 3e-3), "{d:?}");
        }
        assert!(sample_defect_locations(0, &view, 2e-3, 2e-3, 1)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn infeasible_region_is_a_placement_error() {
        let small = Rect::new(0.0, 0.0, 4e-3, 4e-3);
        let err = sample_defect_locations(3, &small, 2e-3, 2e-3, 0).unwrap_err();
        assert!(matches!(err, Error::Placement(_)));
    }

    fn gray(n: usize, value: u8) -> ImageFrame {
        ImageFrame {
            width: n,
            height: 1,
            pixels: vec![value; n],
            frame_index: 0,
        }
    }

    #[test]
    fn zero_noise_is_identity_and_noise_is_seeded() {
        let f = ImageFrame {
            width: 3,
            height: 1,
            pixels: vec![0, 128, 255],
            frame_index: 2,
        };
        assert_eq!(add_measurement_noise(&f, &NoiseModel::default(), 9), f);
        let m = NoiseModel {
            gaussian_sigma: 5.0,
            speckle_strength: 0.2,
        };
        let g = gray(1000, 100);
        assert_eq!(
            add_measurement_noise(&g, &m, 3),
            add_measurement_noise(&g, &m, 3)
        );
        assert_ne!(
            add_measurement_noise(&g, &m, 3),
            add_measurement_noise(&g, &m, 4)
        );
    }

    #[test]
    fn gaussian_noise_has_requested_spread() {
        let clean = gray(100_000, 128);
        let m = NoiseModel {
            gaussian_sigma: 10.0,
            speckle_strength: 0.0,
        };
        let noisy = add_measurement_noise(&clean, &m, 42);
        let diffs: Vec<f64> = noisy.pixels.iter().map(|p| *p as f64 - 128.0).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        assert!((var.sqrt() - 10.0).abs() < 0.5, "std = {}", var.sqrt());
    }

    #[test]
    fn derived_seeds_differ_per_part() {
        let a = derive_seed(7, &[1, 0, 0]);
        assert_ne!(a, derive_seed(7, &[1, 0, 1]));
        assert_ne!(a, derive_seed(7, &[1, 1, 0]));
        assert_ne!(a, derive_seed(8, &[1, 0, 0]));
        assert_eq!(a, derive_seed(7, &[1, 0, 0]));
    }

    fn manifest() -> DatasetManifest {
        let r = rule();
        let d = DefectSpec::new(0.05, 0.001, 1e-3);
        let mut records = Vec::new();
        for (loc, defect) in [(0, Some(d)), (1, None)] {
            for k in 0..4 {
                records.push(SampleRecord {
                    image_path: image_name(defect.map(|_| loc), k),
                    location_id: loc,
                    frame_index: k,
                    time: k as f64 * r.frame_interval,
                    label: r.label_at(defect.as_ref(), k),
                    defect,
                });
            }
        }
        DatasetManifest {
            header: ManifestHeader {
                schema_version: SCHEMA_VERSION,
                config_digest: "00".repeat(32),
                seed: 5,
                n_locations: 1,
                n_frames: 4,
                defect_free_sequence: true,
                label_rule: r,
                n_records: records.len(),
            },
            records,
        }
    }

    #[test]
    fn manifest_round_trip_and_recheck() {
        let m = manifest();
        m.verify().unwrap();
        assert_eq!(m.records[1].label, Label::DefectFree);
        assert_eq!(m.records[2].label, Label::Defective);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        m.write(&path).unwrap();
        let back = DatasetManifest::read(&path).unwrap();
        assert_eq!(back, m);
        back.verify().unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .contains("\"label\":\"defect_free\""));
        assert!(text.lines().nth(5).unwrap().contains("\"defect\":null"));
    }

    #[test]
    fn recheck_catches_tampering() {
        let mut m = manifest();
        m.records[0].label = Label::Defective;
        assert!(m.verify().is_err());
        let mut m = manifest();
        m.records.swap(0, 1);
        assert!(m.verify().is_err());
        let mut m = manifest();
        m.records[1].image_path = m.records[0].image_path.clone();
        assert!(m.verify().is_err());
        let mut m = manifest();
        m.header.n_records += 1;
        assert!(m.verify().is_err());
    }

    #[test]
    fn malformed_manifest_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut text = manifest().to_jsonl();
        text.push_str("{not json}\n");
        fs::write(&path, text).unwrap();
        let err = DatasetManifest::read(&path).unwrap_err();
        assert!(err.to_string().contains("line 10"), "{err}");
    }
}
