//! TOML run description and its translation into solver, source, imaging
//! and dataset objects.
//!
//! Every key carries its unit in the name. Missing keys take the defaults of
//! the aluminum cross-section; unknown keys are rejected.
//!
//! ```toml
//! dx_mm = 0.15
//!
//! [material]
//! density_kg_m3 = 2700.0
//! longitudinal_speed_m_s = 6320.0
//! shear_speed_m_s = 3130.0
//!
//! [dataset]
//! n_locations = 5
//! seed = 7
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::LabelRule;
use crate::error::{Error, Result};
use crate::excitation::{PulseKind, PulseWaveform, SourceSpec, TransducerSpec};
use crate::fdtd::{max_stable_dt, AbsorbingLayerSpec, Side, SolverParams};
use crate::imaging::{view_cells, FrameQuantity, FrameSpec, Normalization};
use crate::material::{
    insert_cavity, rasterize_specimen, DefectSpec, MaterialField, MaterialSpec, Rect,
    SpecimenGeometry,
};

const MM: f64 = 1e-3;
const US: f64 = 1e-6;
const MHZ: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dx_mm: f64,
    pub material: MaterialSection,
    pub geometry: GeometrySection,
    pub solver: SolverSection,
    pub source: SourceSection,
    pub imaging: ImagingSection,
    pub dataset: DatasetSection,
    /// Cavity used by `simulate`; datasets sample their own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect: Option<DefectSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dx_mm: 0.15,
            material: MaterialSection::default(),
            geometry: GeometrySection::default(),
            solver: SolverSection::default(),
            source: SourceSection::default(),
            imaging: ImagingSection::default(),
            dataset: DatasetSection::default(),
            defect: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    pub density_kg_m3: f64,
    pub longitudinal_speed_m_s: f64,
    pub shear_speed_m_s: f64,
}

impl Default for MaterialSection {
    fn default() -> Self {
        let al = MaterialSpec::aluminum();
        Self {
            density_kg_m3: al.density,
            longitudinal_speed_m_s: al.longitudinal_speed,
            shear_speed_m_s: al.shear_speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub width_mm: f64,
    pub depth_mm: f64,
    /// Left edge of the view; centred on the transducer when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view_x0_mm: Option<f64>,
    pub view_z0_mm: f64,
    pub view_width_mm: f64,
    pub view_height_mm: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            width_mm: 100.0,
            depth_mm: 50.0,
            view_x0_mm: None,
            view_z0_mm: 0.0,
            view_width_mm: 20.0,
            view_height_mm: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub courant_fraction: f64,
    /// Simulated duration; `2.5 · depth / c_L` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_time_us: Option<f64>,
    pub sponge_thickness_cells: usize,
    pub sponge_strength: f64,
    pub sponge_sides: Vec<Side>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            courant_fraction: 0.9,
            total_time_us: None,
            sponge_thickness_cells: 0,
            sponge_strength: 0.015,
            sponge_sides: vec![Side::Left, Side::Right, Side::Bottom],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub kind: PulseKind,
    pub center_frequency_mhz: f64,
    pub n_cycles: u32,
    pub amplitude_pa: f64,
    /// Transducer centre; mid-surface when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_x_mm: Option<f64>,
    pub aperture_mm: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            kind: PulseKind::ToneBurst,
            center_frequency_mhz: 2.0,
            n_cycles: 3,
            amplitude_pa: 1e6,
            center_x_mm: None,
            aperture_mm: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingSection {
    pub quantity: FrameQuantity,
    pub normalization: Normalization,
    pub gamma: f64,
    pub pixels_per_cell: usize,
}

impl Default for ImagingSection {
    fn default() -> Self {
        let spec = FrameSpec::default();
        Self {
            quantity: spec.quantity,
            normalization: spec.normalization,
            gamma: spec.gamma,
            pixels_per_cell: spec.pixels_per_cell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_locations: usize,
    pub n_frames: usize,
    pub defect_diameter_mm: f64,
    pub margin_mm: f64,
    pub emit_defect_free: bool,
    /// Additive Gaussian noise, intensity levels.
    pub noise_sigma: f64,
    pub speckle_strength: f64,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n_locations: 55,
            n_frames: 431,
            defect_diameter_mm: 2.0,
            margin_mm: 2.0,
            emit_defect_free: true,
            noise_sigma: 0.0,
            speckle_strength: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSection {
    pub x_mm: f64,
    pub z_mm: f64,
    #[serde(default = "default_defect_diameter")]
    pub diameter_mm: f64,
}

fn default_defect_diameter() -> f64 {
    2.0
}

/// Time axis shared by every sequence of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    /// s
    pub dt: f64,
    /// Solver steps between frames.
    pub frame_every: usize,
    pub n_frames: usize,
    /// s
    pub frame_interval: f64,
    /// Steps needed to reach the last frame.
    pub n_steps: usize,
}

impl Timing {
    /// Frames at `k · total_time / n_frames`, with the largest stable `dt`
    /// that divides the frame interval.
    pub fn new(
        field: &MaterialField,
        courant_fraction: f64,
        total_time: f64,
        n_frames: usize,
    ) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::Configuration("n_frames must be at least 1".into()));
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::Configuration(format!(
                "total time must be positive, got {total_time} s"
            )));
        }
        if !(courant_fraction > 0.0 && courant_fraction <= 1.0) {
            return Err(Error::Configuration(format!(
                "courant fraction must lie in (0, 1], got {courant_fraction}"
            )));
        }
        let bound = max_stable_dt(field, courant_fraction);
        let frame_interval = total_time / n_frames as f64;
        let mut frame_every = (frame_interval / bound).ceil().max(1.0) as usize;
        if frame_interval / frame_every as f64 > bound {
            frame_every += 1;
        }
        Ok(Self {
            dt: frame_interval / frame_every as f64,
            frame_every,
            n_frames,
            frame_interval,
            n_steps: (n_frames - 1) * frame_every + 1,
        })
    }

    pub fn frame_time(&self, frame_index: usize) -> f64 {
        frame_index as f64 * self.frame_interval
    }
}

/// Everything a run needs, built and cross-checked from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub field: MaterialField,
    pub params: SolverParams,
    pub timing: Timing,
    pub source: SourceSpec,
    pub transducer: TransducerSpec,
    pub frame_spec: FrameSpec,
    pub view: Rect,
    pub rule: LabelRule,
    pub defect_diameter: f64,
    pub margin: f64,
    pub defect: Option<DefectSpec>,
}

impl RunConfig {
    pub fn material(&self) -> Result<MaterialSpec> {
        let m = &self.material;
        MaterialSpec::new(m.density_kg_m3, m.longitudinal_speed_m_s, m.shear_speed_m_s)
    }

    pub fn transducer(&self) -> TransducerSpec {
        let center = self
            .source
            .center_x_mm
            .unwrap_or(0.5 * self.geometry.width_mm);
        TransducerSpec::new(center * MM, self.source.aperture_mm * MM)
    }

    pub fn geometry(&self) -> Result<SpecimenGeometry> {
        let g = &self.geometry;
        let x0 = match g.view_x0_mm {
            Some(x0) => x0 * MM,
            None => self.transducer().center_x - 0.5 * g.view_width_mm * MM,
        };
        let view = Rect::new(
            x0,
            g.view_z0_mm * MM,
            g.view_width_mm * MM,
            g.view_height_mm * MM,
        );
        SpecimenGeometry::new(g.width_mm * MM, g.depth_mm * MM, view)
    }

    pub fn pulse(&self) -> Result<PulseWaveform> {
        let s = &self.source;
        let pulse = PulseWaveform {
            kind: s.kind,
            center_frequency: s.center_frequency_mhz * MHZ,
            n_cycles: s.n_cycles,
            amplitude: s.amplitude_pa,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn frame_spec(&self) -> Result<FrameSpec> {
        let i = &self.imaging;
        let spec = FrameSpec {
            quantity: i.quantity,
            normalization: i.normalization,
            gamma: i.gamma,
            pixels_per_cell: i.pixels_per_cell,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sponge(&self) -> AbsorbingLayerSpec {
        let s = &self.solver;
        AbsorbingLayerSpec::new(
            s.sponge_thickness_cells,
            s.sponge_strength,
            s.sponge_sides.clone(),
        )
    }

    fn check_dataset(&self) -> Result<()> {
        let d = &self.dataset;
        if !(d.noise_sigma.is_finite() && d.noise_sigma >= 0.0) {
            return Err(Error::Configuration(format!(
                "noise_sigma must be non-negative, got {}",
                d.noise_sigma
            )));
        }
        if !(d.speckle_strength.is_finite() && d.speckle_strength >= 0.0) {
            return Err(Error::Configuration(format!(
                "speckle_strength must be non-negative, got {}",
                d.speckle_strength
            )));
        }
        if !(d.margin_mm.is_finite() && d.margin_mm >= 0.0) {
            return Err(Error::Configuration(format!(
                "margin_mm must be non-negative, got {}",
                d.margin_mm
            )));
        }
        if !(d.defect_diameter_mm.is_finite() && d.defect_diameter_mm > 0.0) {
            return Err(Error::Placement(format!(
                "defect diameter must be positive, got {} mm",
                d.defect_diameter_mm
            )));
        }
        Ok(())
    }

    /// Builds and cross-validates every domain object.
    pub fn plan(&self) -> Result<RunPlan> {
        if !(self.dx_mm.is_finite() && self.dx_mm > 0.0) {
            return Err(Error::InvalidResolution(format!(
                "dx_mm must be positive, got {}",
                self.dx_mm
            )));
        }
        self.check_dataset()?;
        let material = self.material()?;
        let geometry = self.geometry()?;
        let field = rasterize_specimen(&geometry, &material, self.dx_mm * MM)?;
        let view = geometry.view;
        view_cells(&field, &view)?;

        let total_time = match self.solver.total_time_us {
            Some(t) => t * US,
            None => 2.5 * geometry.depth / material.longitudinal_speed,
        };
        let timing = Timing::new(
            &field,
            self.solver.courant_fraction,
            total_time,
            self.dataset.n_frames,
        )?;
        let params = SolverParams {
            dt: timing.dt,
            n_steps: timing.n_steps,
            courant_fraction: self.solver.courant_fraction,
            sponge: self.sponge(),
        };
        params.validate(&field)?;

        let transducer = self.transducer();
        let source = SourceSpec::transducer(transducer, self.pulse()?);
        source.injection(&field, timing.dt)?;
        let frame_spec = self.frame_spec()?;

        let rule = LabelRule::new(
            (transducer.center_x, 0.0),
            material.longitudinal_speed,
            timing.frame_interval,
        )?;

        let defect_diameter = self.dataset.defect_diameter_mm * MM;
        let margin = self.dataset.margin_mm * MM;
        if self.dataset.n_locations > 0 {
            let feasible = view.shrink(margin + 0.5 * defect_diameter).ok_or_else(|| {
                Error::Placement(format!(
                    "no room for a {} mm defect with {} mm margin inside the view",
                    self.dataset.defect_diameter_mm, self.dataset.margin_mm
                ))
            })?;
            // sampled cavities must also clear the specimen boundary by a cell
            let (width, depth) = field.extent();
            let bounds = Rect::new(0.0, 0.0, width, depth);
            for (x, z) in [(feasible.x0, feasible.z0), (feasible.x1(), feasible.z1())] {
                DefectSpec::new(x, z, defect_diameter).check_within(&bounds, field.dx)?;
            }
        }

        let defect = match &self.defect {
            Some(d) => {
                let spec = DefectSpec::new(d.x_mm * MM, d.z_mm * MM, d.diameter_mm * MM);
                insert_cavity(field.clone(), &spec)?;
                Some(spec)
            }
            None => None,
        };

        Ok(RunPlan {
            field,
            params,
            timing,
            source,
            transducer,
            frame_spec,
            view,
            rule,
            defect_diameter,
            margin,
            defect,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }

    /// Canonical TOML form of the effective configuration.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("run configuration always serializes")
    }

    /// SHA-256 of [`RunConfig::snapshot`], lowercase hex.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.snapshot().as_bytes()))
    }
}

/// Parses and validates configuration text. `origin` names the source in
/// error messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config(text, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let plan = cfg.plan().unwrap();
        assert_eq!((plan.field.nx, plan.field.nz), (667, 333));
        assert_eq!(plan.source.pulse.center_frequency, 2e6);
        assert_eq!(plan.source.pulse.kind, PulseKind::ToneBurst);
        assert!((plan.view.x0 - 0.04).abs() < 1e-12);
        assert_eq!(plan.timing.n_frames, 431);
        assert_eq!(cfg.material().unwrap(), MaterialSpec::aluminum());
    }

    #[test]
    fn coarse_dx_is_an_invalid_resolution() {
        let err = parse("dx_mm = 50").unwrap_err();
        assert!(matches!(err, Error::InvalidResolution(_)), "{err}");
    }

    #[test]
    fn unknown_key_named() {
        let err = parse("dxx_mm = 0.1").unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("dxx_mm"), "{err}");
        let err = parse("[material]\ndensity = 1.0").unwrap_err();
        assert!(err.to_string().contains("density"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let err = parse("dx_mm = 0.15\n\n[solver\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn cross_field_constraints() {
        let err = parse("[solver]\ncourant_fraction = 1.5").unwrap_err();
        assert!(matches!(err, Error::Configuration(_)), "{err}");
        let err = parse("[geometry]\nview_x0_mm = 90.0").unwrap_err();
        assert!(matches!(err, Error::InvalidGeometry(_)), "{err}");
        let err = parse("[dataset]\nmargin_mm = 9.0").unwrap_err();
        assert!(matches!(err, Error::Placement(_)), "{err}");
        let err = parse("[dataset]\nmargin_mm = 0.0").unwrap_err();
        assert!(matches!(err, Error::Placement(_)), "{err}");
        parse("[dataset]\nmargin_mm = 0.0\nn_locations = 0").unwrap();
        let err = parse("[source]\ncenter_x_mm = 1.0").unwrap_err();
        assert!(
            matches!(err, Error::Configuration(_) | Error::InvalidGeometry(_)),
            "{err}"
        );
        let err = parse("[material]\nshear_speed_m_s = 5000.0").unwrap_err();
        assert!(matches!(err, Error::InvalidMaterial(_)), "{err}");
        let err = parse("[defect]\nx_mm = 50.0\nz_mm = 0.5").unwrap_err();
        assert!(matches!(err, Error::Placement(_)), "{err}");
    }

    #[test]
    fn timing_is_stable_and_frame_aligned() {
        let cfg = RunConfig::default();
        let plan = cfg.plan().unwrap();
        let t = plan.timing;
        let bound = max_stable_dt(&plan.field, 0.9);
        assert!(t.dt <= bound);
        assert!(t.dt > bound * (t.frame_every as f64 - 1.0) / t.frame_every as f64);
        let total = 2.5 * 0.05 / 6320.0;
        assert!((t.frame_interval * 431.0 - total).abs() < 1e-18);
        assert!((t.dt * t.frame_every as f64 - t.frame_interval).abs() < 1e-20);
        assert_eq!(t.n_steps, 430 * t.frame_every + 1);
    }

    #[test]
    fn snapshot_round_trips_and_digest_tracks_changes() {
        let cfg = RunConfig {
            defect: Some(DefectSection {
                x_mm: 50.0,
                z_mm: 20.0,
                diameter_mm: 2.0,
            }),
            ..RunConfig::default()
        };
        let back = parse(&cfg.snapshot()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert_eq!(cfg.digest().len(), 64);
        let mut other = cfg.clone();
        other.dataset.seed = 1;
        assert_ne!(other.digest(), cfg.digest());
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_config(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("/nonexistent/run.toml"));
    }
}
