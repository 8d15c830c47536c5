//! Method-of-lines solver for the log-periodic spherically symmetric system in
//! (ϱ̂, ∂ₜϱ̂, ν) on the unit-period torus in ζ, with the nonlocal gravity Ψ.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{d1_periodic, d2_periodic};
use crate::ode::OdeTrajectory;
use crate::params::ModelParams;
use crate::psi::{psi_defect, PsiOperator};

/// One snapshot of the periodic fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub zeta_grid: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub drho_dt: Vec<f64>,
    pub nu: Vec<f64>,
    pub psi: Vec<f64>,
}

impl FieldState {
    pub fn len(&self) -> usize {
        self.zeta_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta_grid.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// ∂_ζϱ̂ by fourth-order periodic differences.
    pub fn drho_dzeta(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        d1_periodic(&self.rho_hat, self.spacing(), &mut out);
        out
    }

    /// ∂_ζν by fourth-order periodic differences.
    pub fn dnu_dzeta(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        d1_periodic(&self.nu, self.spacing(), &mut out);
        out
    }

    /// Normalized contrast deviation u = (ϱ̂ − f)/f.
    pub fn u(&self, f: f64) -> Vec<f64> {
        self.rho_hat.iter().map(|r| (r - f) / f).collect()
    }
}

/// Shape of a unit-periodic profile perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Flat,
    /// cos(2π·mode·ζ).
    Cosine {
        mode: u32,
    },
    /// tanh(s·cos 2πζ)/tanh(s), a smoothed square wave.
    SmoothSquare {
        sharpness: f64,
    },
}

impl Shape {
    pub fn eval(&self, zeta: f64) -> f64 {
        match *self {
            Shape::Flat => 0.0,
            Shape::Cosine { mode } => (2.0 * PI * mode as f64 * zeta).cos(),
            Shape::SmoothSquare { sharpness } => (sharpness * (2.0 * PI * zeta).cos()).tanh() / sharpness.tanh(),
        }
    }
}

/// Data profiles d̂(ζ) = 1 + d_amp·shape and v̂(ζ) = −1 + v_amp·shape in the log-radial variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataProfile {
    pub d_amp: f64,
    pub d_shape: Shape,
    pub v_amp: f64,
    pub v_shape: Shape,
}

impl DataProfile {
    /// d ≡ 1, v ≡ −1: the homogeneous blowup data.
    pub fn homogeneous() -> Self {
        Self { d_amp: 0.0, d_shape: Shape::Flat, v_amp: 0.0, v_shape: Shape::Flat }
    }

    /// d = 1 + ε cos 2πζ with v ≡ −1.
    pub fn cosine(eps: f64) -> Self {
        Self { d_amp: eps, d_shape: Shape::Cosine { mode: 1 }, v_amp: 0.0, v_shape: Shape::Flat }
    }

    pub fn d(&self, zeta: f64) -> f64 {
        1.0 + self.d_amp * self.d_shape.eval(zeta)
    }

    pub fn v(&self, zeta: f64) -> f64 {
        -1.0 + self.v_amp * self.v_shape.eval(zeta)
    }
}

/// Tolerance on the endpoint mismatch of a unit-periodic profile.
pub const PERIODICITY_TOL: f64 = 1e-10;

fn check_periodic(g: &dyn Fn(f64) -> f64) -> Result<()> {
    let h = 1e-4;
    let mut mismatch: f64 = 0.0;
    for z in [0.0, 0.25, 0.5] {
        mismatch = mismatch.max((g(z) - g(z + 1.0)).abs());
        let dz = (g(z + h) - g(z - h)) - (g(z + 1.0 + h) - g(z + 1.0 - h));
        mismatch = mismatch.max(dz.abs());
    }
    if mismatch > PERIODICITY_TOL {
        return Err(Error::NotPeriodic { mismatch });
    }
    Ok(())
}

/// Largest of |d−1|, |v+1| and their first two ζ-derivatives on the grid.
pub fn data_smallness(d: &dyn Fn(f64) -> f64, v: &dyn Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let dv: Vec<f64> = (0..n).map(|j| d(j as f64 * h) - 1.0).collect();
    let vv: Vec<f64> = (0..n).map(|j| v(j as f64 * h) + 1.0).collect();
    let mut worst: f64 = 0.0;
    for arr in [&dv, &vv] {
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        d1_periodic(arr, h, &mut d1);
        d2_periodic(arr, h, &mut d2);
        for a in [arr.as_slice(), &d1, &d2] {
            worst = worst.max(a.iter().map(|x| x.abs()).fold(0.0, f64::max));
        }
    }
    worst
}

/// ∂ₜϱ̂ from the continuity identity given ϱ̂, ∂_ζϱ̂, ν and ∂_ζν.
fn drho_from_continuity(f: f64, f0: f64, r: f64, p: f64, nu: f64, nuz: f64) -> f64 {
    let l = f0 / (1.0 + f);
    (1.0 + r) * (l - l * nu - l * nuz / 3.0) - l * nu * p / 3.0
}

/// Builds the state at t₀ from profiles of ζ with unit period.
pub fn init_from_data(params: &ModelParams, traj: &OdeTrajectory, d: &dyn Fn(f64) -> f64, v: &dyn Fn(f64) -> f64, n: usize) -> Result<FieldState> {
    if n < 16 || !n.is_multiple_of(2) {
        return Err(Error::Domain(format!("grid size must be even and at least 16, got {n}")));
    }
    check_periodic(d)?;
    check_periodic(v)?;
    let t0 = traj.t_start();
    let (f, f0) = traj.state_at(t0)?;
    let zeta_grid: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let rho_hat: Vec<f64> = zeta_grid.iter().map(|&z| params.beta * d(z)).collect();
    let nu: Vec<f64> = zeta_grid.iter().map(|&z| 1.0 + v(z)).collect();
    if let Some((i, r)) = rho_hat.iter().enumerate().find(|(_, r)| !(1.0 + **r > 0.0)) {
        return Err(Error::Vacuum { t: t0, index: i, value: 1.0 + r });
    }
    let mut state = FieldState { t: t0, zeta_grid, rho_hat, drho_dt: vec![0.0; n], nu, psi: vec![0.0; n] };
    let p = state.drho_dzeta();
    let nuz = state.dnu_dzeta();
    state.drho_dt = (0..n).map(|j| drho_from_continuity(f, f0, state.rho_hat[j], p[j], state.nu[j], nuz[j])).collect();
    PsiOperator::new(n)?.apply(&state.u(f), &mut state.psi);
    Ok(state)
}

/// Builds the state at t₀ from a [`DataProfile`].
pub fn init_from_profile(params: &ModelParams, traj: &OdeTrajectory, profile: &DataProfile, n: usize) -> Result<FieldState> {
    init_from_data(params, traj, &|z| profile.d(z), &|z| profile.v(z), n)
}

/// Metric coefficients of the reduced wave operator at one grid point.
pub fn wave_coefficients(params: &ModelParams, t: f64, f: f64, f0: f64, r: f64, nu: f64) -> (f64, f64) {
    let w = params.omega;
    let l = f0 / (1.0 + f);
    let ratio = ((1.0 + r) / (1.0 + f)).powf(w);
    let gzz = (2.0 + w) * (1.0 - params.iota3) / (9.0 * t * t) * (1.0 + r) * ratio - l * l * nu * nu / 9.0;
    (gzz, l * nu / 3.0)
}

/// Time derivatives of (ϱ̂, ∂ₜϱ̂, ν).
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub rho_hat: Vec<f64>,
    pub drho_dt: Vec<f64>,
    pub nu: Vec<f64>,
}

/// Evaluates the right side of the system. `state.psi` is recomputed from ϱ̂ first.
pub struct RhsEvaluator<'a> {
    params: &'a ModelParams,
    traj: &'a OdeTrajectory,
    psi_op: PsiOperator,
}

impl<'a> RhsEvaluator<'a> {
    pub fn new(params: &'a ModelParams, traj: &'a OdeTrajectory, n: usize) -> Result<Self> {
        Ok(Self { params, traj, psi_op: PsiOperator::new(n)? })
    }

    /// Recomputes Ψ of `state` from its ϱ̂.
    pub fn refresh_psi(&self, state: &mut FieldState) -> Result<()> {
        let (f, _) = self.traj.state_at(state.t)?;
        let u = state.u(f);
        self.psi_op.apply(&u, &mut state.psi);
        Ok(())
    }

    /// Largest admissible step: CFL on the characteristic speeds and the ODE time scale.
    pub fn max_step(&self, state: &FieldState, cfl: f64, c_ode: f64) -> Result<f64> {
        let (f, f0) = self.traj.state_at(state.t)?;
        let mut speed: f64 = 0.0;
        for j in 0..state.len() {
            let (gzz, g0z) = wave_coefficients(self.params, state.t, f, f0, state.rho_hat[j], state.nu[j]);
            speed = speed.max((g0z * g0z + gzz.max(0.0)).sqrt() + g0z.abs());
        }
        let dt_cfl = if speed > 0.0 { cfl * state.spacing() / speed } else { f64::INFINITY };
        Ok(dt_cfl.min(c_ode * (1.0 + f) / f0))
    }

    pub fn rates(&self, state: &mut FieldState) -> Result<Rates> {
        self.refresh_psi(state)?;
        let pr = self.params;
        let t = state.t;
        let (f, f0) = self.traj.state_at(t)?;
        let n = state.len();
        let h = state.spacing();
        let mut p = vec![0.0; n];
        let mut prr = vec![0.0; n];
        let mut qz = vec![0.0; n];
        let mut nuz = vec![0.0; n];
        d1_periodic(&state.rho_hat, h, &mut p);
        d2_periodic(&state.rho_hat, h, &mut prr);
        d1_periodic(&state.drho_dt, h, &mut qz);
        d1_periodic(&state.nu, h, &mut nuz);
        let (w, c1, i3, kap) = (pr.omega, 1.0 - pr.iota3, pr.iota3, pr.kappa);
        let l = f0 / (1.0 + f);
        let t2 = t * t;
        let mut out = Rates { rho_hat: state.drho_dt.clone(), drho_dt: vec![0.0; n], nu: vec![0.0; n] };
        for j in 0..n {
            let (r, q, nu, ps, pz) = (state.rho_hat[j], state.drho_dt[j], state.nu[j], state.psi[j], p[j]);
            let one_r = 1.0 + r;
            if !(one_r > 0.0) {
                return Err(Error::Vacuum { t, index: j, value: one_r });
            }
            let ratio = one_r / (1.0 + f);
            let rw = ratio.powf(w);
            let (gzz, g0z) = wave_coefficients(pr, t, f, f0, r, nu);
            if !(gzz > 0.0) {
                return Err(Error::Hyperbolicity { t, index: j, value: gzz });
            }
            let theta = l - q / one_r - l / 3.0 * nu * pz / one_r - l * nu;
            let f1 = -2.0 / 9.0 * l * l * nu * pz
                + (w + 1.0) * (2.0 + w) * c1 / (9.0 * t2) * rw * pz * pz
                + l * l / 9.0 * nu * nu * pz
                + 2.0 * c1 * (1.0 + f) / (9.0 * t2) * (ratio * rw - 1.0) * pz
                + 2.0 * i3 * f / (3.0 * t2) * pz * ps
                + 4.0 * l * l * nu * nu * pz * pz / (27.0 * one_r)
                + 8.0 * l * nu * pz * q / (9.0 * one_r)
                + 2.0 / 3.0 * one_r * theta * theta
                + 2.0 * c1 / (3.0 * t2) * (rw - 1.0) * one_r * one_r
                + (8.0 + 5.0 * w) * c1 / (9.0 * t2) * one_r * rw * pz
                + kap * l * l * one_r;
            out.drho_dt[j] =
                gzz * prr[j] - 2.0 * g0z * qz[j] - (4.0 / (3.0 * t) + kap * l) * q + 2.0 / (3.0 * t2) * r * one_r + 4.0 * q * q / (3.0 * one_r) + f1;
            let g1 = -2.0 * (1.0 + f) * f / (3.0 * t2 * f0) * nu + (1.0 / 3.0 - kap) * l * nu
                - l / 3.0 * nu * nu
                - (2.0 + w) * c1 * (1.0 + f) * rw / (3.0 * t2 * f0) * pz
                - 2.0 * c1 * (1.0 + f) * (1.0 + f) / (3.0 * t2 * f0) * (ratio * rw - 1.0)
                - 2.0 * i3 * (1.0 + f) * f / (t2 * f0) * ps;
            out.nu[j] = -l / 3.0 * nu * nuz[j] + g1;
        }
        Ok(out)
    }

    /// One classical RK4 step of size `dt`.
    pub fn rk4_step(&self, state: &FieldState, dt: f64) -> Result<FieldState> {
        let n = state.len();
        let stage = |base: &FieldState, k: &Rates, a: f64| -> FieldState {
            let mut s = base.clone();
            s.t = base.t + a;
            for j in 0..n {
                s.rho_hat[j] += a * k.rho_hat[j];
                s.drho_dt[j] += a * k.drho_dt[j];
                s.nu[j] += a * k.nu[j];
            }
            s
        };
        let mut s0 = state.clone();
        let k1 = self.rates(&mut s0)?;
        let mut s1 = stage(state, &k1, 0.5 * dt);
        let k2 = self.rates(&mut s1)?;
        let mut s2 = stage(state, &k2, 0.5 * dt);
        let k3 = self.rates(&mut s2)?;
        let mut s3 = stage(state, &k3, dt);
        let k4 = self.rates(&mut s3)?;
        let mut next = state.clone();
        next.t = state.t + dt;
        for j in 0..n {
            next.rho_hat[j] += dt / 6.0 * (k1.rho_hat[j] + 2.0 * k2.rho_hat[j] + 2.0 * k3.rho_hat[j] + k4.rho_hat[j]);
            next.drho_dt[j] += dt / 6.0 * (k1.drho_dt[j] + 2.0 * k2.drho_dt[j] + 2.0 * k3.drho_dt[j] + k4.drho_dt[j]);
            next.nu[j] += dt / 6.0 * (k1.nu[j] + 2.0 * k2.nu[j] + 2.0 * k3.nu[j] + k4.nu[j]);
        }
        self.refresh_psi(&mut next)?;
        Ok(next)
    }
}

/// Defect of the continuity identity, max over the grid.
pub fn continuity_residual(state: &FieldState, traj: &OdeTrajectory) -> Result<f64> {
    let (f, f0) = traj.state_at(state.t)?;
    let p = state.drho_dzeta();
    let nuz = state.dnu_dzeta();
    let mut worst: f64 = 0.0;
    for j in 0..state.len() {
        let q = drho_from_continuity(f, f0, state.rho_hat[j], p[j], state.nu[j], nuz[j]);
        worst = worst.max(((q - state.drho_dt[j]) / (1.0 + state.rho_hat[j])).abs());
    }
    Ok(worst)
}

/// Specific entropy along the grid, with |x| = t^{2/3}(1+f)^{−1/3}e^ζ.
pub fn entropy_field(state: &FieldState, traj: &OdeTrajectory, params: &ModelParams) -> Result<Vec<f64>> {
    let (f, _) = traj.state_at(state.t)?;
    let t = state.t;
    let w = params.omega;
    Ok(state
        .zeta_grid
        .iter()
        .zip(&state.rho_hat)
        .map(|(&z, &r)| {
            let x = t.powf(2.0 / 3.0) * (1.0 + f).powf(-1.0 / 3.0) * z.exp();
            (t.powf(-4.0 / 3.0) * (1.0 + r).powf(2.0 / 3.0 + w) * (1.0 + f).powf(-w) * x * x).ln()
        })
        .collect())
}

/// Pointwise monitors of the main estimates at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub t: f64,
    pub f: f64,
    pub ratio_rho: (f64, f64),
    pub ratio_drho: (f64, f64),
    pub uz_sup: f64,
    pub nu_sup: f64,
    pub continuity_residual: f64,
    pub psi_defect: f64,
}

/// Monitors along a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorSeries {
    pub samples: Vec<MonitorSample>,
}

impl MonitorSeries {
    /// Largest |ϱ̂/f − 1| seen.
    pub fn rho_envelope(&self) -> f64 {
        self.samples.iter().map(|s| (s.ratio_rho.0 - 1.0).abs().max((s.ratio_rho.1 - 1.0).abs())).fold(0.0, f64::max)
    }

    /// Largest |∂ₜϱ̂/f₀ − 1| seen.
    pub fn drho_envelope(&self) -> f64 {
        self.samples.iter().map(|s| (s.ratio_drho.0 - 1.0).abs().max((s.ratio_drho.1 - 1.0).abs())).fold(0.0, f64::max)
    }

    pub fn uz_envelope(&self) -> f64 {
        self.samples.iter().map(|s| s.uz_sup).fold(0.0, f64::max)
    }

    pub fn nu_envelope(&self) -> f64 {
        self.samples.iter().map(|s| s.nu_sup).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.samples
            .iter()
            .all(|s| [s.ratio_rho.0, s.ratio_rho.1, s.ratio_drho.0, s.ratio_drho.1, s.uz_sup, s.nu_sup, s.continuity_residual].iter().all(|v| v.is_finite()))
    }
}

/// Monitor values for one state.
pub fn monitor(state: &FieldState, traj: &OdeTrajectory, params: &ModelParams) -> Result<MonitorSample> {
    let (f, f0) = traj.state_at(state.t)?;
    let minmax = |v: &mut dyn Iterator<Item = f64>| v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let p = state.drho_dzeta();
    Ok(MonitorSample {
        t: state.t,
        f,
        ratio_rho: minmax(&mut state.rho_hat.iter().map(|r| r / f)),
        ratio_drho: minmax(&mut state.drho_dt.iter().map(|q| q / f0)),
        uz_sup: p.iter().map(|x| params.c_scale * x.abs() / (1.0 + f)).fold(0.0, f64::max),
        nu_sup: state.nu.iter().map(|x| x.abs()).fold(0.0, f64::max),
        continuity_residual: continuity_residual(state, traj)?,
        psi_defect: psi_defect(&state.u(f), &state.psi),
    })
}

/// Controls of [`evolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveControls {
    pub cfl: f64,
    /// Fraction of the contrast time scale (1+f)/f' allowed per step.
    pub c_ode: f64,
    /// Stop once the reference contrast reaches this value.
    pub f_stop: f64,
    /// Optional earlier stop time.
    pub t_end: Option<f64>,
    pub dt_min: f64,
    /// Times the solver lands on exactly and stores a snapshot for.
    pub snapshot_times: Vec<f64>,
    /// Record monitors every this many steps (the last step is always recorded).
    pub monitor_every: usize,
    pub max_steps: usize,
}

impl Default for EvolveControls {
    fn default() -> Self {
        Self { cfl: 0.5, c_ode: 2e-3, f_stop: 1e3, t_end: None, dt_min: 1e-14, snapshot_times: Vec::new(), monitor_every: 1, max_steps: 10_000_000 }
    }
}

/// Why an evolution stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    ReachedFStop,
    ReachedTEnd,
    Failed(Error),
}

impl StopReason {
    pub fn label(&self) -> String {
        match self {
            StopReason::ReachedFStop => "reached f_stop".into(),
            StopReason::ReachedTEnd => "reached t_end".into(),
            StopReason::Failed(e) => e.to_string(),
        }
    }
}

/// Result of [`evolve`]: the last accepted state, monitors and snapshots.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub final_state: FieldState,
    pub monitors: MonitorSeries,
    pub snapshots: Vec<FieldState>,
    pub steps: usize,
    pub stop: StopReason,
}

impl Evolution {
    /// The run as a result, failing if it stopped on a numerical error.
    pub fn into_result(self) -> Result<Self> {
        match &self.stop {
            StopReason::Failed(e) => Err(e.clone()),
            _ => Ok(self),
        }
    }
}

/// Integrates from `state` with RK4 until f_stop, t_end or a hard stop.
pub fn evolve(state: FieldState, traj: &OdeTrajectory, params: &ModelParams, controls: &EvolveControls) -> Result<Evolution> {
    let mut t_stop = traj.time_at_f(controls.f_stop.min(traj.f_end()))?;
    let mut reason_at_stop = StopReason::ReachedFStop;
    if let Some(te) = controls.t_end {
        if te < t_stop {
            t_stop = te;
            reason_at_stop = StopReason::ReachedTEnd;
        }
    }
    let ev = RhsEvaluator::new(params, traj, state.len())?;
    let mut stops: Vec<f64> = controls.snapshot_times.iter().copied().filter(|&s| s > state.t && s <= t_stop).collect();
    stops.sort_by(f64::total_cmp);
    let mut cur = state;
    ev.refresh_psi(&mut cur)?;
    let mut monitors = MonitorSeries::default();
    monitors.samples.push(monitor(&cur, traj, params)?);
    let mut snapshots = Vec::new();
    let mut steps = 0;
    let mut next_stop = 0;
    let finish = |cur: FieldState, mut monitors: MonitorSeries, snaps, steps, stop| -> Result<Evolution> {
        if monitors.samples.last().map(|s| s.t) != Some(cur.t) {
            monitors.samples.push(monitor(&cur, traj, params)?);
        }
        Ok(Evolution { final_state: cur, monitors, snapshots: snaps, steps, stop })
    };
    while cur.t < t_stop {
        if steps >= controls.max_steps {
            let e = Error::CflCollapse { t: cur.t, dt: 0.0 };
            return finish(cur, monitors, snapshots, steps, StopReason::Failed(e));
        }
        let mut dt = match ev.max_step(&cur, controls.cfl, controls.c_ode) {
            Ok(v) => v,
            Err(e) => return finish(cur, monitors, snapshots, steps, StopReason::Failed(e)),
        };
        if dt < controls.dt_min {
            let e = Error::CflCollapse { t: cur.t, dt };
            return finish(cur, monitors, snapshots, steps, StopReason::Failed(e));
        }
        let target = if next_stop < stops.len() { stops[next_stop] } else { t_stop };
        let mut landed = false;
        if cur.t + dt >= target * (1.0 - 1e-15) {
            dt = target - cur.t;
            landed = true;
        }
        match ev.rk4_step(&cur, dt) {
            Ok(mut s) => {
                if landed {
                    s.t = target;
                }
                cur = s;
            }
            Err(e) => return finish(cur, monitors, snapshots, steps, StopReason::Failed(e)),
        }
        steps += 1;
        if landed && next_stop < stops.len() && target == stops[next_stop] {
            snapshots.push(cur.clone());
            next_stop += 1;
        }
        if steps % controls.monitor_every.max(1) == 0 {
            monitors.samples.push(monitor(&cur, traj, params)?);
        }
    }
    finish(cur, monitors, snapshots, steps, reason_at_stop)
}
