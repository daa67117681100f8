//! Source pulses, the surface transducer, point forces and point receivers.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{Component, WavefieldState};
use crate::material::MaterialField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    Ricker,
    ToneBurst,
}

/// Source time function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseWaveform {
    pub kind: PulseKind,
    /// Hz
    pub center_frequency: f64,
    /// Carrier cycles under the window (tone burst only).
    pub n_cycles: u32,
    /// Peak value: traction in Pa for the transducer, line force in N/m for
    /// a point force.
    pub amplitude: f64,
}

impl PulseWaveform {
    pub fn tone_burst(center_frequency: f64, n_cycles: u32, amplitude: f64) -> Self {
        Self {
            kind: PulseKind::ToneBurst,
            center_frequency,
            n_cycles,
            amplitude,
        }
    }

    pub fn ricker(center_frequency: f64, amplitude: f64) -> Self {
        Self {
            kind: PulseKind::Ricker,
            center_frequency,
            n_cycles: 0,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_frequency.is_finite() && self.center_frequency > 0.0) {
            return Err(Error::Configuration(format!(
                "center frequency must be positive, got {}",
                self.center_frequency
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Configuration("pulse amplitude is not finite".into()));
        }
        if self.kind == PulseKind::ToneBurst && self.n_cycles == 0 {
            return Err(Error::Configuration(
                "tone burst needs at least one cycle".into(),
            ));
        }
        Ok(())
    }

    /// End of the support `[0, duration]`.
    pub fn duration(&self) -> f64 {
        match self.kind {
            PulseKind::Ricker => 3.0 / self.center_frequency,
            PulseKind::ToneBurst => self.n_cycles as f64 / self.center_frequency,
        }
    }

    /// Time of the peak.
    pub fn peak_time(&self) -> f64 {
        0.5 * self.duration()
    }

    pub fn sample(&self, t: f64) -> f64 {
        sample_waveform(self, t)
    }
}

/// Ricker: `A(1 − 2π²f²τ²)·exp(−π²f²τ²)`, `τ = t − 1.5/f`.
/// Tone burst: Hann window of `n` cycles times a cosine carrier aligned to
/// the window centre, so the peak equals the amplitude.
/// Both vanish outside `[0, duration]`.
pub fn sample_waveform(pulse: &PulseWaveform, t: f64) -> f64 {
    let duration = pulse.duration();
    if !(0.0..=duration).contains(&t) {
        return 0.0;
    }
    let f = pulse.center_frequency;
    let tau = t - pulse.peak_time();
    match pulse.kind {
        PulseKind::Ricker => {
            let a = (PI * f * tau).powi(2);
            pulse.amplitude * (1.0 - 2.0 * a) * (-a).exp()
        }
        PulseKind::ToneBurst => {
            let window = (PI * t / duration).sin().powi(2);
            pulse.amplitude * window * (2.0 * PI * f * tau).cos()
        }
    }
}

/// Contact transducer on the top surface, emitting a uniform vertical
/// traction over its aperture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransducerSpec {
    /// m
    pub center_x: f64,
    /// m
    pub aperture: f64,
}

impl TransducerSpec {
    pub fn new(center_x: f64, aperture: f64) -> Self {
        Self { center_x, aperture }
    }

    /// The `vz` surface faces under the aperture.
    pub fn surface_faces(&self, field: &MaterialField) -> Result<Vec<usize>> {
        let (width, _) = field.extent();
        let half = 0.5 * self.aperture;
        if !(self.aperture.is_finite() && self.aperture > 0.0) {
            return Err(Error::Configuration(format!(
                "transducer aperture must be positive, got {}",
                self.aperture
            )));
        }
        if self.center_x - half < 0.0 || self.center_x + half > width {
            return Err(Error::Configuration(format!(
                "transducer aperture [{:.4e}, {:.4e}] m lies outside the {width:.4e} m surface",
                self.center_x - half,
                self.center_x + half
            )));
        }
        let tol = 1e-9 * field.dx;
        let faces: Vec<usize> = (0..field.nx)
            .filter(|&i| ((i as f64 + 0.5) * field.dx - self.center_x).abs() <= half + tol)
            .collect();
        if faces.is_empty() {
            return Err(Error::Configuration(format!(
                "transducer aperture {:.3e} m covers no surface cell at dx = {:.3e} m",
                self.aperture, field.dx
            )));
        }
        Ok(faces)
    }
}

/// What a receiver records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverQuantity {
    Vx,
    Vz,
    /// `−(σxx + σzz)/2`
    Pressure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSpec {
    /// `(x, z)` in metres.
    pub position: (f64, f64),
    pub quantity: ReceiverQuantity,
}

impl ReceiverSpec {
    pub fn new(x: f64, z: f64, quantity: ReceiverQuantity) -> Self {
        Self {
            position: (x, z),
            quantity,
        }
    }

    pub fn validate(&self, field: &MaterialField) -> Result<()> {
        let (w, d) = field.extent();
        let (x, z) = self.position;
        if !(0.0..=w).contains(&x) || !(0.0..=d).contains(&z) {
            return Err(Error::Configuration(format!(
                "receiver at ({x:.4e}, {z:.4e}) m lies outside the specimen"
            )));
        }
        Ok(())
    }
}

/// Where a source injects energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emitter {
    Transducer(TransducerSpec),
    /// Vertical line force at the `vz` node nearest to `(x, z)`.
    PointForce {
        x: f64,
        z: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub emitter: Emitter,
    pub pulse: PulseWaveform,
}

impl SourceSpec {
    pub fn transducer(transducer: TransducerSpec, pulse: PulseWaveform) -> Self {
        Self {
            emitter: Emitter::Transducer(transducer),
            pulse,
        }
    }

    pub fn point_force(x: f64, z: f64, pulse: PulseWaveform) -> Self {
        Self {
            emitter: Emitter::PointForce { x, z },
            pulse,
        }
    }

    /// Precomputes the `vz` nodes touched and their per-unit-amplitude
    /// velocity increments for one step of length `dt`.
    pub fn injection(&self, field: &MaterialField, dt: f64) -> Result<Injection> {
        self.pulse.validate()?;
        let nodes = match self.emitter {
            Emitter::Transducer(t) => t
                .surface_faces(field)?
                .into_iter()
                .map(|i| {
                    let rho = face_density_vz(field, i, 0);
                    (i, dt / (rho * field.dx))
                })
                .collect(),
            Emitter::PointForce { x, z } => {
                let (i, j) = nearest_vz_node(field, x, z)?;
                let rho = face_density_vz(field, i, j);
                if rho == 0.0 {
                    return Err(Error::Configuration(format!(
                        "point force at ({x:.4e}, {z:.4e}) m sits inside a cavity"
                    )));
                }
                vec![(j * field.nx + i, dt / (rho * field.dx * field.dx))]
            }
        };
        Ok(Injection { nodes })
    }
}

/// Velocity increments `vz[k] += weight · s(t)` for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub nodes: Vec<(usize, f64)>,
}

impl Injection {
    pub fn apply(&self, state: &mut WavefieldState, value: f64) {
        if value == 0.0 {
            return;
        }
        for &(k, w) in &self.nodes {
            state.vz[k] += w * value;
        }
    }
}

/// Mean density of the two cells sharing horizontal face `(i, j)`, with
/// void and outside cells counting as zero.
fn face_density_vz(field: &MaterialField, i: usize, j: usize) -> f64 {
    let cell = |j: Option<usize>| match j {
        Some(j) if j < field.nz && !field.is_void(i, j) => field.density(i, j),
        _ => 0.0,
    };
    0.5 * (cell(j.checked_sub(1)) + cell(Some(j)))
}

fn nearest_vz_node(field: &MaterialField, x: f64, z: f64) -> Result<(usize, usize)> {
    let (w, d) = field.extent();
    if !(0.0..=w).contains(&x) || !(0.0..=d).contains(&z) {
        return Err(Error::Configuration(format!(
            "point force at ({x:.4e}, {z:.4e}) m lies outside the specimen"
        )));
    }
    let i = ((x / field.dx - 0.5).round().max(0.0) as usize).min(field.nx - 1);
    let j = ((z / field.dx).round() as usize).min(field.nz);
    Ok((i, j))
}

/// Adds one step's worth of surface traction `pulse(t)` under the
/// transducer, as a velocity increment `dt·s(t)/(ρ_face·dx)`.
pub fn apply_source(
    state: &mut WavefieldState,
    field: &MaterialField,
    transducer: &TransducerSpec,
    pulse: &PulseWaveform,
    t: f64,
    dt: f64,
) -> Result<()> {
    SourceSpec::transducer(*transducer, *pulse)
        .injection(field, dt)?
        .apply(state, pulse.sample(t));
    Ok(())
}

/// Bilinear interpolation of the requested quantity at the probe position.
/// Positions on the boundary of a staggered grid clamp to its edge nodes.
pub fn record_receiver(state: &WavefieldState, field: &MaterialField, probe: &ReceiverSpec) -> f64 {
    let (x, z) = (probe.position.0 / field.dx, probe.position.1 / field.dx);
    match probe.quantity {
        ReceiverQuantity::Vx => interpolate(state, Component::Vx, x, z, |s, k| s.vx[k]),
        ReceiverQuantity::Vz => interpolate(state, Component::Vz, x, z, |s, k| s.vz[k]),
        ReceiverQuantity::Pressure => interpolate(state, Component::Sxx, x, z, |s, k| {
            -0.5 * (s.sxx[k] + s.szz[k])
        }),
    }
}

fn interpolate<F>(state: &WavefieldState, grid: Component, x: f64, z: f64, value: F) -> f64
where
    F: Fn(&WavefieldState, usize) -> f64,
{
    let (cols, rows) = grid.shape(state.nx, state.nz);
    let (ox, oz) = grid.origin();
    let (i, tx) = axis_weight(x - ox, cols);
    let (j, tz) = axis_weight(z - oz, rows);
    let at = |i: usize, j: usize| value(state, j * cols + i);
    let mut acc = 0.0;
    for (di, wx) in [(0, 1.0 - tx), (1, tx)] {
        for (dj, wz) in [(0, 1.0 - tz), (1, tz)] {
            let w = wx * wz;
            if w != 0.0 {
                acc += w * at(i + di, j + dj);
            }
        }
    }
    acc
}

/// Lower node index and fractional offset along one axis of `n` nodes.
fn axis_weight(u: f64, n: usize) -> (usize, f64) {
    let snapped = if (u - u.round()).abs() < 1e-9 {
        u.round()
    } else {
        u
    };
    let u = snapped.clamp(0.0, (n - 1) as f64);
    let i = (u.floor() as usize).min(n.saturating_sub(2));
    (i, u - i as f64)
}

fn arrival_index(trace: &[f64], threshold_fraction: f64) -> Result<(usize, f64)> {
    if trace.is_empty() {
        return Err(Error::Configuration("empty trace".into()));
    }
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::Configuration(format!(
            "threshold fraction must lie in (0, 1), got {threshold_fraction}"
        )));
    }
    let peak = trace.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::NoArrival);
    }
    let level = threshold_fraction * peak;
    let k = trace
        .iter()
        .position(|v| v.abs() > level)
        .expect("peak sample exceeds any fractional level");
    Ok((k, level))
}

/// Time of the first sample whose magnitude exceeds
/// `threshold_fraction · max|trace|`, with samples spaced `dt` from `t = 0`.
pub fn first_arrival_time(trace: &[f64], dt: f64, threshold_fraction: f64) -> Result<f64> {
    let (k, _) = arrival_index(trace, threshold_fraction)?;
    Ok(k as f64 * dt)
}

/// Like [`first_arrival_time`] but linearly interpolates the crossing of
/// the threshold level between the two bracketing samples.
pub fn first_arrival_time_interpolated(
    trace: &[f64],
    dt: f64,
    threshold_fraction: f64,
) -> Result<f64> {
    let (k, level) = arrival_index(trace, threshold_fraction)?;
    if k == 0 {
        return Ok(0.0);
    }
    let (a, b) = (trace[k - 1].abs(), trace[k].abs());
    let frac = ((level - a) / (b - a)).clamp(0.0, 1.0);
    Ok((k as f64 - 1.0 + frac) * dt)
}
