//! Elastic-wave simulation and labeled dataset generation for laser
//! ultrasonic visualization testing (LUVT).
//!
//! The pipeline rasterizes a specimen with an optional drilled cavity
//! ([`material`]), drives it with a surface transducer ([`excitation`]),
//! integrates the plane-strain elastodynamic equations on a staggered grid
//! ([`fdtd`]), renders wavefield snapshots as grayscale frames
//! ([`imaging`]) and writes labeled image sequences with a manifest
//! ([`dataset`]). [`config`] ties everything to a TOML run description.

pub mod config;
pub mod dataset;
pub mod error;
pub mod excitation;
pub mod fdtd;
pub mod imaging;
pub mod material;
pub mod validation;

pub use config::{load_config, parse_config, RunConfig, RunPlan, Timing};
pub use dataset::{
    add_measurement_noise, generate_dataset, label_frames, render_sequence,
    sample_defect_locations, simulate_sequence, DatasetManifest, Label, LabelRule, ManifestHeader,
    NoiseModel, SampleRecord,
};
pub use error::{Error, Result};
pub use excitation::{
    apply_source, first_arrival_time, first_arrival_time_interpolated, record_receiver,
    sample_waveform, Emitter, PulseKind, PulseWaveform, ReceiverQuantity, ReceiverSpec, SourceSpec,
    TransducerSpec,
};
pub use fdtd::{
    max_stable_dt, run_simulation, step, total_energy, AbsorbingLayerSpec, Component, Side,
    SimulationOutput, Solver, SolverParams, WavefieldState,
};
pub use imaging::{
    decode_image, encode_image, extract_snapshot, normalize_sequence, FrameQuantity, FrameSpec,
    ImageFrame, Normalization, RawImage,
};
pub use material::{
    insert_cavity, lame_from_speeds, rasterize_specimen, speeds_from_lame, DefectSpec,
    MaterialField, MaterialSpec, Rect, SpecimenGeometry,
};
