//! Finite-volume evolution schemes: exponential-fitting (Scharfetter-Gummel)
//! fluxes for positive diffusion, upwind fluxes for the zero-diffusion limit,
//! positivity-preserving explicit time stepping, and Gibbs stationary states.
//!
//! Both schemes share the rate form: each face (a, b) carries outflow rates
//! per unit mass, and an Euler step is the convex update
//! `ρ_a ← ρ_a (1 − dt Σ r_out) + dt Σ r_in ρ_in`, which keeps masses
//! nonnegative whenever `dt · Σ r_out ≤ 1`. Automatic step control picks
//! `dt = safety / max_K Σ r_out` so that constraint holds by construction.

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::Tessellation;
use crate::potential::DiscretePotentials;
use crate::special::bernoulli;
use crate::util::sum_compensated;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("invalid scheme configuration: {0}")]
    Invalid(String),
    #[error("negative density in cell {cell} at t = {t}")]
    NegativeDensity { cell: usize, t: f64 },
    #[error("stationary-state iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Exponential-fitting two-point flux; requires diffusion strength ε > 0.
    ScharfetterGummel,
    /// Upwind flux for the aggregation limit; requires ε = 0.
    Upwind,
}

#[derive(Debug, Clone, Copy)]
pub enum TimeStepRule {
    /// dt = safety / max_K (total outflow rate of K), recomputed every step.
    Auto { safety: f64 },
    Fixed { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    ExplicitEuler,
    /// Strong-stability-preserving two-stage method:
    /// ρ^{n+1} = ½ρ^n + ½ E(E(ρ^n)).
    Heun,
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub eps: f64,
    pub step: TimeStepRule,
    pub integrator: Integrator,
    pub t_end: f64,
    /// Record the state after every k accepted steps (0 records only the
    /// initial and final states). The final state is always recorded.
    pub record_every: usize,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), SchemeError> {
        match self.kind {
            SchemeKind::ScharfetterGummel if !(self.eps > 0.0) => {
                return Err(SchemeError::Invalid(format!(
                    "exponential-fitting flux needs ε > 0, got {}",
                    self.eps
                )));
            }
            SchemeKind::Upwind if self.eps != 0.0 => {
                return Err(SchemeError::Invalid(format!(
                    "upwind flux is the ε = 0 scheme, got ε = {}",
                    self.eps
                )));
            }
            _ => {}
        }
        if !self.eps.is_finite() {
            return Err(SchemeError::Invalid("non-finite ε".into()));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(SchemeError::Invalid(format!("horizon must be positive, got {}", self.t_end)));
        }
        match self.step {
            TimeStepRule::Auto { safety } => {
                if !(safety > 0.0 && safety < 1.0) {
                    return Err(SchemeError::Invalid(format!(
                        "step safety factor must lie in (0, 1), got {safety}"
                    )));
                }
            }
            TimeStepRule::Fixed { dt } => {
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(SchemeError::Invalid(format!("fixed step must be positive, got {dt}")));
                }
            }
        }
        Ok(())
    }
}

pub const DEFAULT_SAFETY: f64 = 0.9;

// ---------------------------------------------------------------------------
// face fluxes
// ---------------------------------------------------------------------------

/// Exponential-fitting flux through one face:
/// `J = ε τ (𝔟(q/ε) u_a − 𝔟(−q/ε) u_b)` with `𝔟(s) = s/(e^s − 1)` and
/// densities `u = ρ/|K|`.
pub fn sg_face_flux(u_a: f64, u_b: f64, q: f64, eps: f64, tau: f64) -> f64 {
    let s = q / eps;
    eps * tau * (bernoulli(s) * u_a - bernoulli(-s) * u_b)
}

/// Upwind flux through one face for drift `d = −q`:
/// `J = τ (q⁻ u_a − q⁺ u_b)` with `q⁺ = max(q, 0)`, `q⁻ = max(−q, 0)`.
pub fn upwind_face_flux(u_a: f64, u_b: f64, q: f64, tau: f64) -> f64 {
    tau * ((-q).max(0.0) * u_a - q.max(0.0) * u_b)
}

/// Per-face outflow rates per unit mass `(r_{a→b}, r_{b→a})`; the physical
/// flux is `J_f = r_{a→b} ρ_a − r_{b→a} ρ_b`.
fn face_outflow_rates(
    q: f64,
    tau: f64,
    vol_a: f64,
    vol_b: f64,
    kind: SchemeKind,
    eps: f64,
) -> (f64, f64) {
    match kind {
        SchemeKind::ScharfetterGummel => {
            let s = q / eps;
            (eps * tau * bernoulli(s) / vol_a, eps * tau * bernoulli(-s) / vol_b)
        }
        SchemeKind::Upwind => (tau * (-q).max(0.0) / vol_a, tau * q.max(0.0) / vol_b),
    }
}

/// Physical flux on every face, oriented a → b, from cell masses `rho` and
/// face drives `q`.
pub fn face_fluxes(
    tess: &Tessellation,
    q: &[f64],
    rho: &[f64],
    kind: SchemeKind,
    eps: f64,
) -> Vec<f64> {
    let u = tess.densities(rho);
    tess.faces()
        .iter()
        .zip(q)
        .map(|(f, &qf)| match kind {
            SchemeKind::ScharfetterGummel => sg_face_flux(u[f.a], u[f.b], qf, eps, f.tau),
            SchemeKind::Upwind => upwind_face_flux(u[f.a], u[f.b], qf, f.tau),
        })
        .collect()
}

/// Largest positivity-preserving explicit step for the current state:
/// `1 / max_K Σ_f r_out`. `+∞` when nothing moves.
pub fn stable_dt(
    tess: &Tessellation,
    pots: &DiscretePotentials,
    rho: &[f64],
    kind: SchemeKind,
    eps: f64,
) -> f64 {
    let q = crate::potential::q_field(tess, pots, rho);
    let out = outflow_per_cell(tess, &q, kind, eps);
    let m = out.iter().copied().fold(0.0f64, f64::max);
    if m > 0.0 {
        1.0 / m
    } else {
        f64::INFINITY
    }
}

fn outflow_per_cell(tess: &Tessellation, q: &[f64], kind: SchemeKind, eps: f64) -> Vec<f64> {
    let mut out = vec![0.0f64; tess.n_cells()];
    for (f, face) in tess.faces().iter().enumerate() {
        let (ra, rb) = face_outflow_rates(
            q[f],
            face.tau,
            tess.cells()[face.a].volume,
            tess.cells()[face.b].volume,
            kind,
            eps,
        );
        out[face.a] += ra;
        out[face.b] += rb;
    }
    out
}

/// One positivity-preserving Euler stage. Fails with the offending cell when
/// the update produces a negative mass (only possible if `dt` exceeds the
/// stability bound for this state).
fn euler_stage(
    tess: &Tessellation,
    pots: &DiscretePotentials,
    rho: &[f64],
    dt: f64,
    kind: SchemeKind,
    eps: f64,
) -> Result<Vec<f64>, usize> {
    let n = tess.n_cells();
    let q = crate::potential::q_field(tess, pots, rho);
    let mut out = vec![0.0f64; n];
    let mut inflow = vec![0.0f64; n];
    for (f, face) in tess.faces().iter().enumerate() {
        let (ra, rb) = face_outflow_rates(
            q[f],
            face.tau,
            tess.cells()[face.a].volume,
            tess.cells()[face.b].volume,
            kind,
            eps,
        );
        out[face.a] += ra;
        out[face.b] += rb;
        inflow[face.b] += ra * rho[face.a];
        inflow[face.a] += rb * rho[face.b];
    }
    let mut next = vec![0.0f64; n];
    for k in 0..n {
        let keep = 1.0 - dt * out[k];
        if keep < 0.0 {
            return Err(k);
        }
        next[k] = rho[k] * keep + dt * inflow[k];
        if next[k] < 0.0 {
            return Err(k);
        }
    }
    Ok(next)
}

fn integrator_step(
    tess: &Tessellation,
    pots: &DiscretePotentials,
    rho: &[f64],
    dt: f64,
    cfg: &SchemeConfig,
) -> Result<Vec<f64>, usize> {
    match cfg.integrator {
        Integrator::ExplicitEuler => euler_stage(tess, pots, rho, dt, cfg.kind, cfg.eps),
        Integrator::Heun => {
            let s1 = euler_stage(tess, pots, rho, dt, cfg.kind, cfg.eps)?;
            let s2 = euler_stage(tess, pots, &s1, dt, cfg.kind, cfg.eps)?;
            Ok(rho.iter().zip(&s2).map(|(a, b)| 0.5 * a + 0.5 * b).collect())
        }
    }
}

// ---------------------------------------------------------------------------
// trajectories
// ---------------------------------------------------------------------------

/// Recorded states (cell masses), times, and per-face physical fluxes of one
/// run; flux records are evaluated from the recorded state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    mesh: Arc<Tessellation>,
    pub kind: SchemeKind,
    pub eps: f64,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    fluxes: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(mesh: Arc<Tessellation>, kind: SchemeKind, eps: f64) -> Self {
        Trajectory { mesh, kind, eps, times: Vec::new(), states: Vec::new(), fluxes: Vec::new() }
    }

    pub fn push(&mut self, t: f64, rho: Vec<f64>, flux: Vec<f64>) {
        assert_eq!(rho.len(), self.mesh.n_cells());
        assert_eq!(flux.len(), self.mesh.n_faces());
        if let Some(&last) = self.times.last() {
            assert!(t > last, "record times must increase");
        }
        self.times.push(t);
        self.states.push(rho);
        self.fluxes.push(flux);
    }

    pub fn mesh(&self) -> &Arc<Tessellation> {
        &self.mesh
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn flux(&self, i: usize) -> &[f64] {
        &self.fluxes[i]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("empty trajectory")
    }

    /// State at an arbitrary time by linear interpolation between records
    /// (clamped to the recorded range).
    pub fn sample(&self, t: f64) -> Vec<f64> {
        assert!(!self.times.is_empty(), "empty trajectory");
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= *self.times.last().unwrap() {
            return self.states.last().unwrap().clone();
        }
        let j = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(j) => return self.states[j].clone(),
            Err(j) => j,
        };
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = (t - t0) / (t1 - t0);
        self.states[j - 1]
            .iter()
            .zip(&self.states[j])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// solver
// ---------------------------------------------------------------------------

/// Bounded number of automatic step halvings after a rejected stage (only the
/// second stage of the two-stage integrator can reject an automatic step).
const MAX_HALVINGS: u32 = 40;

/// Evolve cell masses to `cfg.t_end`, recording per `cfg.record_every`.
pub fn solve(
    tess: &Arc<Tessellation>,
    pots: &DiscretePotentials,
    rho0: &[f64],
    cfg: &SchemeConfig,
) -> Result<Trajectory, SchemeError> {
    cfg.validate()?;
    if rho0.len() != tess.n_cells() {
        return Err(SchemeError::Invalid(format!(
            "initial state has {} entries for {} cells",
            rho0.len(),
            tess.n_cells()
        )));
    }
    if let Some(k) = rho0.iter().position(|r| !r.is_finite() || *r < 0.0) {
        return Err(SchemeError::Invalid(format!(
            "initial mass of cell {k} is {}",
            rho0[k]
        )));
    }
    if pots.n() != tess.n_cells() {
        return Err(SchemeError::Invalid(format!(
            "potentials sampled on {} cells, mesh has {}",
            pots.n(),
            tess.n_cells()
        )));
    }

    let mut rho = rho0.to_vec();
    let mut t = 0.0f64;
    let mut traj = Trajectory::new(Arc::clone(tess), cfg.kind, cfg.eps);
    let record = |traj: &mut Trajectory, t: f64, rho: &[f64]| {
        let q = crate::potential::q_field(tess, pots, rho);
        let flux = face_fluxes(tess, &q, rho, cfg.kind, cfg.eps);
        traj.push(t, rho.to_vec(), flux);
    };
    record(&mut traj, 0.0, &rho);

    let mut steps: usize = 0;
    while t < cfg.t_end {
        let mut dt = match cfg.step {
            TimeStepRule::Auto { safety } => {
                safety * stable_dt(tess, pots, &rho, cfg.kind, cfg.eps)
            }
            TimeStepRule::Fixed { dt } => dt,
        };
        let remaining = cfg.t_end - t;
        if dt >= remaining {
            dt = remaining;
        }
        let next = match cfg.step {
            TimeStepRule::Fixed { .. } => integrator_step(tess, pots, &rho, dt, cfg)
                .map_err(|cell| SchemeError::NegativeDensity { cell, t })?,
            TimeStepRule::Auto { .. } => {
                let mut attempt = integrator_step(tess, pots, &rho, dt, cfg);
                let mut halvings = 0;
                while let Err(cell) = attempt {
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        return Err(SchemeError::NegativeDensity { cell, t });
                    }
                    dt *= 0.5;
                    attempt = integrator_step(tess, pots, &rho, dt, cfg);
                }
                attempt.unwrap()
            }
        };
        rho = next;
        // a step clipped onto the horizon lands there exactly unless an
        // automatic retry shrank it
        t = if dt == remaining { cfg.t_end } else { t + dt };
        steps += 1;
        if t < cfg.t_end && cfg.record_every > 0 && steps % cfg.record_every == 0 {
            record(&mut traj, t, &rho);
        }
    }
    record(&mut traj, cfg.t_end, &rho);
    Ok(traj)
}

// ---------------------------------------------------------------------------
// stationary states
// ---------------------------------------------------------------------------

/// Normalized Gibbs weights for drive values Q: `|K| e^{−Q_K/ε} / Z`,
/// computed with a max shift so the exponentials never overflow.
pub fn gibbs_weights(tess: &Tessellation, q_cells: &[f64], eps: f64) -> Vec<f64> {
    let m = q_cells.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = tess
        .cells()
        .iter()
        .zip(q_cells)
        .map(|(c, q)| c.volume * (-(q - m) / eps).exp())
        .collect();
    let z = sum_compensated(w.iter().copied());
    w.into_iter().map(|x| x / z).collect()
}

/// Self-consistent Gibbs state of the interacting energy at given total mass:
/// the fixed point of `ρ ↦ mass · gibbs(Q(ρ))`, found by damped iteration.
/// Returns the candidate once its own image agrees with it to `tol` in total
/// variation (relative to the mass).
pub fn stationary_state(
    tess: &Tessellation,
    pots: &DiscretePotentials,
    mass: f64,
    eps: f64,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>, SchemeError> {
    if !(eps > 0.0) {
        return Err(SchemeError::Invalid(
            "stationary states require positive diffusion strength".into(),
        ));
    }
    if !(mass > 0.0) {
        return Err(SchemeError::Invalid(format!("total mass must be positive, got {mass}")));
    }
    let gibbs_map = |rho: &[f64]| -> Vec<f64> {
        let q = pots.q_cells(rho);
        gibbs_weights(tess, &q, eps)
            .into_iter()
            .map(|w| mass * w)
            .collect::<Vec<f64>>()
    };
    let tv = |a: &[f64], b: &[f64]| crate::util::tv_distance(a, b);

    let total = tess.total_volume();
    let mut rho: Vec<f64> =
        tess.cells().iter().map(|c| mass * c.volume / total).collect();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let cand = gibbs_map(&rho);
        residual = tv(&gibbs_map(&cand), &cand);
        if residual <= tol * mass {
            return Ok(cand);
        }
        rho = rho.iter().zip(&cand).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
    }
    Err(SchemeError::NonConvergence { iters: max_iters, residual })
}
