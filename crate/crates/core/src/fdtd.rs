//! Velocity–stress staggered-grid finite-difference solver for 2D
//! plane-strain isotropic elastodynamics.
//!
//! Grid layout for an `nx × nz` cell grid with spacing `dx` (z downward):
//!
//! ```text
//!   σxx, σzz  cell centres   ((i+½)dx, (j+½)dx)   nx     × nz
//!   vx        vertical faces (i·dx,    (j+½)dx)   (nx+1) × nz
//!   vz        horizontal     ((i+½)dx, j·dx)      nx     × (nz+1)
//!   σxz       cell corners   (i·dx,    j·dx)      (nx+1) × (nz+1)
//! ```
//!
//! Stresses outside the specimen and inside void cells are identically
//! zero, and σxz is only carried on corners whose four neighbouring cells
//! are solid. Faces on a traction-free boundary carry the mass of the
//! adjoining half cell, which is the antisymmetric stress image across the
//! surface. With this layout the discrete divergence and gradient are exact
//! negative adjoints, so the scheme conserves [`Solver::total_energy`] to
//! roundoff and satisfies source/receiver reciprocity exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::{record_receiver, ReceiverSpec, SourceSpec};
use crate::material::MaterialField;

/// Grids smaller than this are stepped on the calling thread.
const PARALLEL_MIN_CELLS: usize = 32 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
}

/// Exponential sponge: per-cell multiplicative damping
/// `exp(−(strength · d)²)` where `d` is the depth into the layer in cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingLayerSpec {
    pub thickness_cells: usize,
    pub damping_strength: f64,
    pub sides: Vec<Side>,
}

impl AbsorbingLayerSpec {
    pub fn disabled() -> Self {
        Self {
            thickness_cells: 0,
            damping_strength: 0.0,
            sides: Vec::new(),
        }
    }

    pub fn new(thickness_cells: usize, damping_strength: f64, sides: Vec<Side>) -> Self {
        Self {
            thickness_cells,
            damping_strength,
            sides,
        }
    }

    pub fn is_active(&self) -> bool {
        self.thickness_cells > 0 && self.damping_strength > 0.0 && !self.sides.is_empty()
    }

    fn validate(&self, field: &MaterialField) -> Result<()> {
        if !(self.damping_strength.is_finite() && self.damping_strength >= 0.0) {
            return Err(Error::Configuration(format!(
                "sponge damping strength must be non-negative, got {}",
                self.damping_strength
            )));
        }
        let limit = field.nx.min(field.nz) / 2;
        if self.is_active() && self.thickness_cells > limit {
            return Err(Error::Configuration(format!(
                "sponge of {} cells does not fit a {} × {} grid",
                self.thickness_cells, field.nx, field.nz
            )));
        }
        Ok(())
    }

    /// Damping factor at a position given in cell units, and whether the
    /// position lies inside the layer.
    fn factor(&self, x_cells: f64, z_cells: f64, nx: usize, nz: usize) -> (f64, bool) {
        if !self.is_active() {
            return (1.0, false);
        }
        let width = self.thickness_cells as f64;
        let mut factor = 1.0;
        let mut inside = false;
        for side in &self.sides {
            let d = match side {
                Side::Left => width - x_cells,
                Side::Right => x_cells - (nx as f64 - width),
                Side::Bottom => z_cells - (nz as f64 - width),
            };
            if d > 0.0 {
                inside = true;
                factor *= (-(self.damping_strength * d).powi(2)).exp();
            }
        }
        (factor, inside)
    }
}

impl Default for AbsorbingLayerSpec {
    fn default() -> Self {
        Self::disabled()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// s
    pub dt: f64,
    pub n_steps: usize,
    pub courant_fraction: f64,
    pub sponge: AbsorbingLayerSpec,
}

impl SolverParams {
    /// Time step set to `courant_fraction` of the stability bound. Fractions
    /// above one are accepted here so that instability can be demonstrated;
    /// [`SolverParams::validate`] rejects them.
    pub fn from_courant(field: &MaterialField, courant_fraction: f64, n_steps: usize) -> Self {
        Self {
            dt: max_stable_dt(field, courant_fraction),
            n_steps,
            courant_fraction,
            sponge: AbsorbingLayerSpec::disabled(),
        }
    }

    pub fn with_sponge(mut self, sponge: AbsorbingLayerSpec) -> Self {
        self.sponge = sponge;
        self
    }

    /// Checks the CFL invariant and the sponge layout.
    pub fn validate(&self, field: &MaterialField) -> Result<()> {
        if !(self.courant_fraction > 0.0 && self.courant_fraction <= 1.0) {
            return Err(Error::Configuration(format!(
                "courant fraction must lie in (0, 1], got {}",
                self.courant_fraction
            )));
        }
        let bound = max_stable_dt(field, self.courant_fraction);
        if !(self.dt > 0.0 && self.dt <= bound * (1.0 + 1e-12)) {
            return Err(Error::Configuration(format!(
                "time step {:.4e} s exceeds the stability bound {:.4e} s",
                self.dt, bound
            )));
        }
        self.sponge.validate(field)
    }
}

/// `courant_fraction · dx / (c_L,max · √2)`.
pub fn max_stable_dt(field: &MaterialField, courant_fraction: f64) -> f64 {
    courant_fraction * field.dx / (field.max_longitudinal_speed() * std::f64::consts::SQRT_2)
}

/// Selects one of the five staggered unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Vx,
    Vz,
    Sxx,
    Szz,
    Sxz,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::Vx,
        Component::Vz,
        Component::Sxx,
        Component::Szz,
        Component::Sxz,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Component::Vx => "vx",
            Component::Vz => "vz",
            Component::Sxx => "sxx",
            Component::Szz => "szz",
            Component::Sxz => "sxz",
        }
    }

    /// Array shape `(columns, rows)` on an `nx × nz` cell grid.
    pub fn shape(&self, nx: usize, nz: usize) -> (usize, usize) {
        match self {
            Component::Vx => (nx + 1, nz),
            Component::Vz => (nx, nz + 1),
            Component::Sxx | Component::Szz => (nx, nz),
            Component::Sxz => (nx + 1, nz + 1),
        }
    }

    /// Position of node `(0, 0)` in cell units.
    pub fn origin(&self) -> (f64, f64) {
        match self {
            Component::Vx => (0.0, 0.5),
            Component::Vz => (0.5, 0.0),
            Component::Sxx | Component::Szz => (0.5, 0.5),
            Component::Sxz => (0.0, 0.0),
        }
    }
}

/// Particle velocities and stresses at one time level.
///
/// Velocities lag the stresses by half a step: after `n` steps `vx`, `vz`
/// hold `t = (n − ½)·dt` and the stresses `t = n·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefieldState {
    pub nx: usize,
    pub nz: usize,
    pub vx: Vec<f64>,
    pub vz: Vec<f64>,
    pub sxx: Vec<f64>,
    pub szz: Vec<f64>,
    pub sxz: Vec<f64>,
    /// s
    pub time: f64,
    pub step_index: u64,
}

impl WavefieldState {
    pub fn zeros(nx: usize, nz: usize) -> Self {
        Self {
            nx,
            nz,
            vx: vec![0.0; (nx + 1) * nz],
            vz: vec![0.0; nx * (nz + 1)],
            sxx: vec![0.0; nx * nz],
            szz: vec![0.0; nx * nz],
            sxz: vec![0.0; (nx + 1) * (nz + 1)],
            time: 0.0,
            step_index: 0,
        }
    }

    pub fn for_field(field: &MaterialField) -> Self {
        Self::zeros(field.nx, field.nz)
    }

    pub fn component(&self, c: Component) -> &[f64] {
        match c {
            Component::Vx => &self.vx,
            Component::Vz => &self.vz,
            Component::Sxx => &self.sxx,
            Component::Szz => &self.szz,
            Component::Sxz => &self.sxz,
        }
    }

    pub fn component_mut(&mut self, c: Component) -> &mut [f64] {
        match c {
            Component::Vx => &mut self.vx,
            Component::Vz => &mut self.vz,
            Component::Sxx => &mut self.sxx,
            Component::Szz => &mut self.szz,
            Component::Sxz => &mut self.sxz,
        }
    }

    /// Value of `c` at node `(i, j)` of its own staggered grid.
    pub fn at(&self, c: Component, i: usize, j: usize) -> f64 {
        let (cols, _) = c.shape(self.nx, self.nz);
        self.component(c)[j * cols + i]
    }

    pub fn max_abs(&self, c: Component) -> f64 {
        self.component(c).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_velocity(&self) -> f64 {
        self.max_abs(Component::Vx).max(self.max_abs(Component::Vz))
    }

    pub fn is_finite(&self) -> bool {
        Component::ALL
            .iter()
            .all(|c| self.component(*c).iter().all(|v| v.is_finite()))
    }

    fn matches(&self, field: &MaterialField) -> bool {
        self.nx == field.nx
            && self.nz == field.nz
            && Component::ALL.iter().all(|c| {
                let (cols, rows) = c.shape(self.nx, self.nz);
                self.component(*c).len() == cols * rows
            })
    }
}

/// Step-invariant coefficients derived from the material and `dt`.
#[derive(Debug, Clone)]
struct Medium {
    /// Face densities (mean of the two adjoining cells, void counting as 0).
    rho_vx: Vec<f64>,
    rho_vz: Vec<f64>,
    /// `dt / (ρ_face · dx)`, zero on inactive faces.
    bx: Vec<f64>,
    bz: Vec<f64>,
    /// Cell moduli (zero in void cells).
    lambda: Vec<f64>,
    mu: Vec<f64>,
    /// Corner shear modulus, harmonic mean of four solid cells, else zero.
    mu_xz: Vec<f64>,
    /// `dt/dx`-scaled moduli used by the stress update.
    l2m_c: Vec<f64>,
    lam_c: Vec<f64>,
    mu_xz_c: Vec<f64>,
}

impl Medium {
    fn new(field: &MaterialField, dt: f64) -> Self {
        let (nx, nz, dx) = (field.nx, field.nz, field.dx);
        let solid = |i: isize, j: isize| -> Option<(f64, f64, f64)> {
            if i < 0 || j < 0 || i >= nx as isize || j >= nz as isize {
                return None;
            }
            let (i, j) = (i as usize, j as usize);
            (!field.is_void(i, j))
                .then(|| (field.density(i, j), field.lambda(i, j), field.mu(i, j)))
        };
        let rho_of = |c: Option<(f64, f64, f64)>| c.map_or(0.0, |m| m.0);

        let mut rho_vx = vec![0.0; (nx + 1) * nz];
        for j in 0..nz {
            for i in 0..=nx {
                let (ii, jj) = (i as isize, j as isize);
                rho_vx[j * (nx + 1) + i] =
                    0.5 * (rho_of(solid(ii - 1, jj)) + rho_of(solid(ii, jj)));
            }
        }
        let mut rho_vz = vec![0.0; nx * (nz + 1)];
        for j in 0..=nz {
            for i in 0..nx {
                let (ii, jj) = (i as isize, j as isize);
                rho_vz[j * nx + i] = 0.5 * (rho_of(solid(ii, jj - 1)) + rho_of(solid(ii, jj)));
            }
        }
        let inv = |rho: &f64| if *rho > 0.0 { dt / (rho * dx) } else { 0.0 };
        let bx = rho_vx.iter().map(inv).collect();
        let bz = rho_vz.iter().map(inv).collect();

        let mut lambda = vec![0.0; nx * nz];
        let mut mu = vec![0.0; nx * nz];
        for j in 0..nz {
            for i in 0..nx {
                if let Some((_, l, m)) = solid(i as isize, j as isize) {
                    lambda[j * nx + i] = l;
                    mu[j * nx + i] = m;
                }
            }
        }

        let mut mu_xz = vec![0.0; (nx + 1) * (nz + 1)];
        for j in 1..nz {
            for i in 1..nx {
                let (ii, jj) = (i as isize, j as isize);
                let cells = [
                    solid(ii - 1, jj - 1),
                    solid(ii, jj - 1),
                    solid(ii - 1, jj),
                    solid(ii, jj),
                ];
                if cells
                    .iter()
                    .all(|c| matches!(c, Some((_, _, m)) if *m > 0.0))
                {
                    let inv_sum: f64 = cells.iter().map(|c| 1.0 / c.unwrap().2).sum();
                    mu_xz[j * (nx + 1) + i] = 4.0 / inv_sum;
                }
            }
        }

        let s = dt / dx;
        let l2m_c = lambda
            .iter()
            .zip(&mu)
            .map(|(l, m)| s * (l + 2.0 * m))
            .collect();
        let lam_c = lambda.iter().map(|l| s * l).collect();
        let mu_xz_c = mu_xz.iter().map(|m| s * m).collect();
        Self {
            rho_vx,
            rho_vz,
            bx,
            bz,
            lambda,
            mu,
            mu_xz,
            l2m_c,
            lam_c,
            mu_xz_c,
        }
    }
}

/// Per-node sponge factors and energy-exclusion masks for each grid.
#[derive(Debug, Clone)]
struct Sponge {
    factors: [Vec<f64>; 5],
    excluded: [Vec<bool>; 5],
}

impl Sponge {
    fn new(spec: &AbsorbingLayerSpec, nx: usize, nz: usize) -> Option<Self> {
        if !spec.is_active() {
            return None;
        }
        let build = |c: Component| {
            let (cols, rows) = c.shape(nx, nz);
            let (ox, oz) = c.origin();
            let mut f = Vec::with_capacity(cols * rows);
            let mut e = Vec::with_capacity(cols * rows);
            for j in 0..rows {
                for i in 0..cols {
                    let (factor, inside) = spec.factor(i as f64 + ox, j as f64 + oz, nx, nz);
                    f.push(factor);
                    e.push(inside);
                }
            }
            (f, e)
        };
        let parts = Component::ALL.map(build);
        let factors = parts.clone().map(|p| p.0);
        let excluded = parts.map(|p| p.1);
        Some(Self { factors, excluded })
    }
}

/// Applies `kernel` to each row of `data`, returning the largest value the
/// kernel reports (NaN-poisoned rows report +∞).
fn for_rows<F>(data: &mut [f64], row_len: usize, parallel: bool, kernel: F) -> f64
where
    F: Fn(usize, &mut [f64]) -> f64 + Sync + Send,
{
    if parallel {
        data.par_chunks_mut(row_len)
            .enumerate()
            .map(|(j, row)| kernel(j, row))
            .reduce(|| 0.0, f64::max)
    } else {
        data.chunks_mut(row_len)
            .enumerate()
            .map(|(j, row)| kernel(j, row))
            .fold(0.0, f64::max)
    }
}

/// Largest `|v|` in `row`, or +∞ if any value is not finite. Four
/// independent lanes keep the reduction off the add latency chain.
#[inline]
fn row_extent(row: &[f64]) -> f64 {
    let mut mx = [0.0f64; 4];
    let mut poison = [0.0f64; 4];
    let chunks = row.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for k in 0..4 {
            let a = c[k].abs();
            mx[k] = if a > mx[k] { a } else { mx[k] };
            poison[k] += c[k] * 0.0;
        }
    }
    for v in rest {
        let a = v.abs();
        mx[0] = if a > mx[0] { a } else { mx[0] };
        poison[0] += v * 0.0;
    }
    if poison.iter().sum::<f64>().is_nan() {
        f64::INFINITY
    } else {
        mx.into_iter().fold(0.0, f64::max)
    }
}

/// Explicit leapfrog integrator bound to one material field and time step.
#[derive(Debug, Clone)]
pub struct Solver {
    field: MaterialField,
    params: SolverParams,
    medium: Medium,
    sponge: Option<Sponge>,
    /// Particle speeds above this mean strains beyond unity: the run diverged.
    velocity_limit: f64,
    parallel: bool,
}

impl Solver {
    /// Precomputes coefficients. Only `dt > 0` is enforced; use
    /// [`SolverParams::validate`] to also enforce the CFL bound.
    pub fn new(field: &MaterialField, params: &SolverParams) -> Result<Self> {
        if !(params.dt.is_finite() && params.dt > 0.0) {
            return Err(Error::Configuration(format!(
                "time step must be positive, got {}",
                params.dt
            )));
        }
        params.sponge.validate(field)?;
        Ok(Self {
            field: field.clone(),
            params: params.clone(),
            medium: Medium::new(field, params.dt),
            sponge: Sponge::new(&params.sponge, field.nx, field.nz),
            velocity_limit: field.max_longitudinal_speed(),
            parallel: field.nx * field.nz >= PARALLEL_MIN_CELLS,
        })
    }

    pub fn field(&self) -> &MaterialField {
        &self.field
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.params.dt
    }

    pub fn new_state(&self) -> WavefieldState {
        WavefieldState::for_field(&self.field)
    }

    /// Advances one leapfrog step: velocities from the stress divergence,
    /// then stresses from the new velocity gradients, then sponge damping.
    pub fn step(&self, state: &mut WavefieldState) -> Result<()> {
        if !state.matches(&self.field) {
            return Err(Error::Configuration(format!(
                "state shape {} × {} does not match the {} × {} field",
                state.nx, state.nz, self.field.nx, self.field.nz
            )));
        }
        let v_max = self.update_velocity(state);
        let s_max = self.update_stress(state);
        if let Some(sponge) = &self.sponge {
            for (c, factors) in Component::ALL.iter().zip(&sponge.factors) {
                for (v, f) in state.component_mut(*c).iter_mut().zip(factors) {
                    *v *= f;
                }
            }
        }
        state.time += self.params.dt;
        state.step_index += 1;

        if !v_max.is_finite() || !s_max.is_finite() {
            return Err(Error::NumericalInstability {
                step: state.step_index,
                detail: "non-finite field value".into(),
            });
        }
        if v_max > self.velocity_limit {
            return Err(Error::NumericalInstability {
                step: state.step_index,
                detail: format!(
                    "particle velocity {v_max:.3e} m/s exceeds the longitudinal speed {:.1} m/s",
                    self.velocity_limit
                ),
            });
        }
        Ok(())
    }

    fn update_velocity(&self, state: &mut WavefieldState) -> f64 {
        let (nx, nz) = (self.field.nx, self.field.nz);
        let m = &self.medium;
        let WavefieldState {
            vx,
            vz,
            sxx,
            szz,
            sxz,
            ..
        } = state;
        let (sxx, szz, sxz) = (&*sxx, &*szz, &*sxz);

        let vx_max = for_rows(vx, nx + 1, self.parallel, |j, row| {
            let s = &sxx[j * nx..(j + 1) * nx];
            let top = &sxz[j * (nx + 1)..(j + 1) * (nx + 1)];
            let bottom = &sxz[(j + 1) * (nx + 1)..(j + 2) * (nx + 1)];
            let b = &m.bx[j * (nx + 1)..(j + 1) * (nx + 1)];
            // outer faces see zero stress beyond the specimen
            row[0] += b[0] * (s[0] + (bottom[0] - top[0]));
            row[nx] += b[nx] * (-s[nx - 1] + (bottom[nx] - top[nx]));
            for i in 1..nx {
                row[i] += b[i] * ((s[i] - s[i - 1]) + (bottom[i] - top[i]));
            }
            row_extent(row)
        });

        let vz_max = for_rows(vz, nx, self.parallel, |j, row| {
            let corners = &sxz[j * (nx + 1)..(j + 1) * (nx + 1)];
            let b = &m.bz[j * nx..(j + 1) * nx];
            if j == 0 {
                let below = &szz[..nx];
                for i in 0..nx {
                    row[i] += b[i] * ((corners[i + 1] - corners[i]) + below[i]);
                }
            } else if j == nz {
                let above = &szz[(j - 1) * nx..j * nx];
                for i in 0..nx {
                    row[i] += b[i] * ((corners[i + 1] - corners[i]) - above[i]);
                }
            } else {
                let above = &szz[(j - 1) * nx..j * nx];
                let below = &szz[j * nx..(j + 1) * nx];
                for i in 0..nx {
                    row[i] += b[i] * ((corners[i + 1] - corners[i]) + (below[i] - above[i]));
                }
            }
            row_extent(row)
        });
        vx_max.max(vz_max)
    }

    fn update_stress(&self, state: &mut WavefieldState) -> f64 {
        let (nx, nz) = (self.field.nx, self.field.nz);
        let m = &self.medium;
        let WavefieldState {
            vx,
            vz,
            sxx,
            szz,
            sxz,
            ..
        } = state;
        let (vx, vz) = (&*vx, &*vz);

        // σxx and σzz share their rows; update them as pairs.
        let normal_max = if self.parallel {
            sxx.par_chunks_mut(nx)
                .zip(szz.par_chunks_mut(nx))
                .enumerate()
                .map(|(j, (rxx, rzz))| normal_row(j, nx, m, vx, vz, rxx, rzz))
                .reduce(|| 0.0, f64::max)
        } else {
            sxx.chunks_mut(nx)
                .zip(szz.chunks_mut(nx))
                .enumerate()
                .map(|(j, (rxx, rzz))| normal_row(j, nx, m, vx, vz, rxx, rzz))
                .fold(0.0, f64::max)
        };

        let shear_max = for_rows(sxz, nx + 1, self.parallel, |j, row| {
            if j == 0 || j == nz {
                return 0.0;
            }
            let upper = &vx[(j - 1) * (nx + 1)..j * (nx + 1)];
            let lower = &vx[j * (nx + 1)..(j + 1) * (nx + 1)];
            let vzr = &vz[j * nx..(j + 1) * nx];
            let c = &m.mu_xz_c[j * (nx + 1)..(j + 1) * (nx + 1)];
            for i in 1..nx {
                row[i] += c[i] * ((lower[i] - upper[i]) + (vzr[i] - vzr[i - 1]));
            }
            row_extent(row)
        });
        normal_max.max(shear_max)
    }

    /// Discrete elastic energy per unit out-of-plane length, J/m.
    ///
    /// Kinetic energy pairs the stored velocities with the velocities of the
    /// next half step, `½ρ v^{n−½}·v^{n+½}`, the quadratic form that the
    /// leapfrog scheme conserves exactly. Strain energy uses the
    /// plane-strain compliance. Nodes inside the sponge are excluded.
    pub fn total_energy(&self, state: &WavefieldState) -> f64 {
        energy(
            &self.field,
            &self.medium,
            self.sponge.as_ref(),
            self.params.dt,
            state,
        )
    }

    /// Runs `n_steps` steps from rest, calling `on_frame` with the state
    /// before every `frame_every`-th step and sampling every probe before
    /// each step. Returns one trace of length `n_steps` per probe.
    pub fn run<F>(
        &self,
        source: Option<&SourceSpec>,
        probes: &[ReceiverSpec],
        frame_every: usize,
        mut on_frame: F,
    ) -> Result<Vec<Vec<f64>>>
    where
        F: FnMut(usize, &WavefieldState) -> Result<()>,
    {
        if frame_every == 0 {
            return Err(Error::Configuration(
                "frame_every must be at least 1".into(),
            ));
        }
        for probe in probes {
            probe.validate(&self.field)?;
        }
        let injection = source
            .map(|s| s.injection(&self.field, self.params.dt))
            .transpose()?;
        let mut state = self.new_state();
        let mut traces = vec![Vec::with_capacity(self.params.n_steps); probes.len()];
        for k in 0..self.params.n_steps {
            if k % frame_every == 0 {
                on_frame(k / frame_every, &state)?;
            }
            for (trace, probe) in traces.iter_mut().zip(probes) {
                trace.push(record_receiver(&state, &self.field, probe));
            }
            if let (Some(src), Some(inj)) = (source, &injection) {
                let value = src.pulse.sample(state.time);
                inj.apply(&mut state, value);
            }
            self.step(&mut state)?;
        }
        Ok(traces)
    }
}

fn energy(
    field: &MaterialField,
    m: &Medium,
    sponge: Option<&Sponge>,
    dt: f64,
    state: &WavefieldState,
) -> f64 {
    let (nx, nz, dx) = (field.nx, field.nz, field.dx);
    let excluded = |c: usize, k: usize| sponge.is_some_and(|s| s.excluded[c][k]);

    let mut kinetic = 0.0;
    for j in 0..nz {
        for i in 0..=nx {
            let k = j * (nx + 1) + i;
            let v = state.vx[k];
            if v == 0.0 || excluded(0, k) {
                continue;
            }
            let left = if i > 0 {
                state.sxx[j * nx + i - 1]
            } else {
                0.0
            };
            let right = if i < nx { state.sxx[j * nx + i] } else { 0.0 };
            let force = (right - left + state.sxz[k + nx + 1] - state.sxz[k]) / dx;
            kinetic += 0.5 * (m.rho_vx[k] * v * v + dt * v * force);
        }
    }
    for j in 0..=nz {
        for i in 0..nx {
            let k = j * nx + i;
            let v = state.vz[k];
            if v == 0.0 || excluded(1, k) {
                continue;
            }
            let below = if j < nz { state.szz[k] } else { 0.0 };
            let above = if j > 0 { state.szz[k - nx] } else { 0.0 };
            let corner = j * (nx + 1) + i;
            let force = (state.sxz[corner + 1] - state.sxz[corner] + below - above) / dx;
            kinetic += 0.5 * (m.rho_vz[k] * v * v + dt * v * force);
        }
    }

    let mut strain = 0.0;
    for k in 0..nx * nz {
        if excluded(2, k) {
            continue;
        }
        strain += normal_strain_energy(state.sxx[k], state.szz[k], m.lambda[k], m.mu[k]);
    }
    for (k, (s, mu)) in state.sxz.iter().zip(&m.mu_xz).enumerate() {
        if *mu > 0.0 && !excluded(4, k) {
            strain += 0.5 * s * s / mu;
        }
    }
    (kinetic + strain) * dx * dx
}

fn normal_row(
    j: usize,
    nx: usize,
    m: &Medium,
    vx: &[f64],
    vz: &[f64],
    rxx: &mut [f64],
    rzz: &mut [f64],
) -> f64 {
    let vxr = &vx[j * (nx + 1)..(j + 1) * (nx + 1)];
    let vz_top = &vz[j * nx..(j + 1) * nx];
    let vz_bot = &vz[(j + 1) * nx..(j + 2) * nx];
    let l2m = &m.l2m_c[j * nx..(j + 1) * nx];
    let lam = &m.lam_c[j * nx..(j + 1) * nx];
    for i in 0..nx {
        let dvx = vxr[i + 1] - vxr[i];
        let dvz = vz_bot[i] - vz_top[i];
        rxx[i] += l2m[i] * dvx + lam[i] * dvz;
        rzz[i] += lam[i] * dvx + l2m[i] * dvz;
    }
    row_extent(rxx).max(row_extent(rzz))
}

/// `½(σxx εxx + σzz εzz)` with the plane-strain compliance.
fn normal_strain_energy(sxx: f64, szz: f64, lambda: f64, mu: f64) -> f64 {
    if sxx == 0.0 && szz == 0.0 {
        return 0.0;
    }
    if mu == 0.0 {
        // fluid limit: only the mean stress stores energy
        return if lambda > 0.0 {
            (sxx + szz).powi(2) / (8.0 * lambda)
        } else {
            0.0
        };
    }
    let denom = 4.0 * mu * (lambda + mu);
    let exx = ((lambda + 2.0 * mu) * sxx - lambda * szz) / denom;
    let ezz = ((lambda + 2.0 * mu) * szz - lambda * sxx) / denom;
    0.5 * (sxx * exx + szz * ezz)
}

/// One step of a fresh solver; prefer [`Solver`] for repeated stepping.
pub fn step(
    state: &WavefieldState,
    field: &MaterialField,
    params: &SolverParams,
) -> Result<WavefieldState> {
    let solver = Solver::new(field, params)?;
    let mut next = state.clone();
    solver.step(&mut next)?;
    Ok(next)
}

/// See [`Solver::total_energy`]. A non-positive `dt` gives the
/// instantaneous energy `½ρ|v|²` + strain energy.
pub fn total_energy(state: &WavefieldState, field: &MaterialField, params: &SolverParams) -> f64 {
    let dt = params.dt.max(0.0);
    let medium = Medium::new(field, dt);
    let sponge = Sponge::new(&params.sponge, field.nx, field.nz);
    energy(field, &medium, sponge.as_ref(), dt, state)
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub frames: Vec<WavefieldState>,
    pub traces: Vec<Vec<f64>>,
}

/// Runs a full simulation keeping every `frame_every`-th state.
///
/// Snapshot `k` is taken at `t = k·frame_every·dt`; there are
/// `⌈n_steps / frame_every⌉` of them, which is `n_steps / frame_every` when
/// the division is exact.
pub fn run_simulation(
    field: &MaterialField,
    params: &SolverParams,
    source: &SourceSpec,
    probes: &[ReceiverSpec],
    frame_every: usize,
) -> Result<SimulationOutput> {
    let solver = Solver::new(field, params)?;
    let mut frames = Vec::new();
    let traces = solver.run(Some(source), probes, frame_every, |_, state| {
        frames.push(state.clone());
        Ok(())
    })?;
    Ok(SimulationOutput { frames, traces })
}

/// Sidecar header of a raw component dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpHeader {
    pub component: Component,
    /// Array columns and rows of the dumped component.
    pub cols: usize,
    pub rows: usize,
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dt: f64,
    pub step: u64,
}

/// Writes one component as little-endian f64, row-major, to `path` and a
/// `key = value` text header to `path` with `.hdr` appended.
pub fn dump_component(
    state: &WavefieldState,
    component: Component,
    dx: f64,
    dt: f64,
    path: &Path,
) -> Result<()> {
    let data = state.component(component);
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;

    let (cols, rows) = component.shape(state.nx, state.nz);
    let header_path = header_path(path);
    let mut f = fs::File::create(&header_path).map_err(|e| Error::io(&header_path, e))?;
    write!(
        f,
        "component = {}\ncols = {cols}\nrows = {rows}\nnx = {}\nnz = {}\ndx = {dx:e}\ndt = {dt:e}\nstep = {}\n",
        component.name(),
        state.nx,
        state.nz,
        state.step_index
    )
    .map_err(|e| Error::io(&header_path, e))
}

/// Reads a dump written by [`dump_component`].
pub fn read_component(path: &Path) -> Result<(DumpHeader, Vec<f64>)> {
    let header_path = header_path(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let bad = |message: String| Error::Format {
        path: header_path.clone(),
        message,
    };
    let get = |key: &str| -> Result<String> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim().to_string())
            .ok_or_else(|| bad(format!("missing key `{key}`")))
    };
    let component = match get("component")?.as_str() {
        "vx" => Component::Vx,
        "vz" => Component::Vz,
        "sxx" => Component::Sxx,
        "szz" => Component::Szz,
        "sxz" => Component::Sxz,
        other => return Err(bad(format!("unknown component `{other}`"))),
    };
    let num =
        |s: String| -> Result<f64> { s.parse().map_err(|_| bad(format!("bad number `{s}`"))) };
    let header = DumpHeader {
        component,
        cols: num(get("cols")?)? as usize,
        rows: num(get("rows")?)? as usize,
        nx: num(get("nx")?)? as usize,
        nz: num(get("nz")?)? as usize,
        dx: num(get("dx")?)?,
        dt: num(get("dt")?)?,
        step: num(get("step")?)? as u64,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != header.cols * header.rows * 8 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "expected {} values, found {} bytes",
                header.cols * header.rows,
                bytes.len()
            ),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, data))
}

fn header_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    s.into()
}
