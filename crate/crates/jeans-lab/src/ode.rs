//! The homogeneous density-contrast ODE
//! f'' + (a/t) f' − (b/t²) f(1+f) − c f'²/(1+f) = 0, f(t₀) = β, f'(t₀) = β₀,
//! its adaptive integration up to a cap on f, the blowup bracket and the
//! analytic envelope certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::bisect;
use crate::params::ModelParams;

/// Integration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    /// Ceiling on t; integration stops there if the cap was not reached.
    pub t_max: f64,
    pub max_steps: usize,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self { rel_tol: 1e-12, abs_tol: 1e-14, h_init: 1e-4, h_min: 1e-15, t_max: 1e9, max_steps: 2_000_000 }
    }
}

/// Default cap on f at which integration stops.
pub const DEFAULT_F_CAP: f64 = 1e6;

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type State = [f64; 2];

/// Continuous extension of one accepted step for the state (y, z) = (ln(1+f), f'/(1+f)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct DenseStep {
    t0: f64,
    h: f64,
    rc: [State; 5],
}

impl DenseStep {
    fn eval(&self, t: f64) -> State {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut out = [0.0; 2];
        for (i, o) in out.iter_mut().enumerate() {
            let r = &self.rc;
            *o = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        out
    }
}

/// Coefficients (a, b, c) of the contrast ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl OdeCoefficients {
    pub fn from_params(p: &ModelParams) -> Self {
        Self { a: p.ode_a, b: p.ode_b, c: p.ode_c }
    }

    /// f'' from (t, f, f').
    pub fn second_derivative(&self, t: f64, f: f64, f0: f64) -> f64 {
        -self.a / t * f0 + self.b / (t * t) * f * (1.0 + f) + self.c * f0 * f0 / (1.0 + f)
    }

    /// Right side in the logarithmic variables y = ln(1+f), z = y'.
    fn rhs_log(&self, t: f64, s: &State) -> State {
        let [y, z] = *s;
        [z, -self.a / t * z + self.b / (t * t) * y.exp_m1() + (self.c - 1.0) * z * z]
    }
}

/// Dense-output record of f and f' from t₀ up to the cap or the time ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeTrajectory {
    pub t_grid: Vec<f64>,
    pub f: Vec<f64>,
    pub f0: Vec<f64>,
    pub f_cap: f64,
    /// True when the integration stopped because f reached `f_cap`.
    pub reached_cap: bool,
    /// Blowup-time estimate, filled by [`OdeTrajectory::attach_blowup_estimate`].
    pub t_m_estimate: Option<f64>,
    pub coefficients: OdeCoefficients,
    steps: Vec<DenseStep>,
}

impl OdeTrajectory {
    pub fn t_start(&self) -> f64 {
        self.t_grid[0]
    }

    pub fn t_end(&self) -> f64 {
        self.t_grid[self.t_grid.len() - 1]
    }

    pub fn f_end(&self) -> f64 {
        self.f[self.f.len() - 1]
    }

    /// Number of accepted steps.
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    fn step_index(&self, t: f64) -> usize {
        let n = self.steps.len();
        let p = self.t_grid.partition_point(|&v| v <= t);
        p.saturating_sub(1).min(n - 1)
    }

    fn log_state(&self, t: f64) -> Result<State> {
        let (lo, hi) = (self.t_start(), self.t_end());
        if !(t >= lo && t <= hi) {
            return Err(Error::Range { what: "t", value: t, lo, hi });
        }
        Ok(self.steps[self.step_index(t)].eval(t))
    }

    /// (f, f') at an arbitrary time inside the trajectory.
    pub fn state_at(&self, t: f64) -> Result<(f64, f64)> {
        let [y, z] = self.log_state(t)?;
        Ok((y.exp_m1(), y.exp() * z))
    }

    /// f'' at an arbitrary time, from the ODE itself.
    pub fn f_second_at(&self, t: f64) -> Result<f64> {
        let (f, f0) = self.state_at(t)?;
        Ok(self.coefficients.second_derivative(t, f, f0))
    }

    /// Time at which f crosses `level`, located on the dense output.
    pub fn time_at_f(&self, level: f64) -> Result<f64> {
        let (f_lo, f_hi) = (self.f[0], self.f_end());
        if !(level >= f_lo && level <= f_hi) {
            return Err(Error::Range { what: "f", value: level, lo: f_lo, hi: f_hi });
        }
        let k = self.f.partition_point(|&v| v < level);
        if k == 0 {
            return Ok(self.t_grid[0]);
        }
        if self.f[k] == level {
            return Ok(self.t_grid[k]);
        }
        let (a, b) = (self.t_grid[k - 1], self.t_grid[k]);
        let step = self.steps[k - 1];
        let y_level = level.ln_1p();
        bisect(|t| step.eval(t)[0] - y_level, a, b, 1e-15 * b.abs())
    }

    /// Runs [`estimate_blowup_time`] and stores the estimate.
    pub fn attach_blowup_estimate(&mut self) -> Result<BlowupEstimate> {
        let est = estimate_blowup_time(self)?;
        self.t_m_estimate = Some(est.t_m);
        Ok(est)
    }
}

fn dp5_step(co: &OdeCoefficients, t: f64, y: &State, k1: &State, h: f64) -> (State, State, State, [State; 7]) {
    let add = |base: &State, terms: &[(f64, &State)]| -> State {
        let mut out = *base;
        for (c, k) in terms {
            out[0] += h * c * k[0];
            out[1] += h * c * k[1];
        }
        out
    };
    let k2 = co.rhs_log(t + C2 * h, &add(y, &[(A21, k1)]));
    let k3 = co.rhs_log(t + C3 * h, &add(y, &[(A31, k1), (A32, &k2)]));
    let k4 = co.rhs_log(t + C4 * h, &add(y, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = co.rhs_log(t + C5 * h, &add(y, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = co.rhs_log(t + h, &add(y, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y_new = add(y, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = co.rhs_log(t + h, &y_new);
    let mut err = [0.0; 2];
    for i in 0..2 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y_new, err, k7, [*k1, k2, k3, k4, k5, k6, k7])
}

/// Integrates the contrast ODE until f ≥ `f_cap` or t reaches `controls.t_max`.
pub fn integrate_contrast(params: &ModelParams, f_cap: f64, controls: &ToleranceSpec) -> Result<OdeTrajectory> {
    if !(f_cap > params.beta) {
        return Err(Error::Domain(format!("f_cap = {f_cap} must exceed beta = {}", params.beta)));
    }
    let co = OdeCoefficients::from_params(params);
    let t0 = params.t0;
    let y_cap = f_cap.ln_1p();
    let mut t = t0;
    let mut y: State = [params.beta.ln_1p(), params.beta0 / (1.0 + params.beta)];
    let mut k1 = co.rhs_log(t, &y);
    let mut h = controls.h_init;
    let mut fac_old = 1e-4f64;
    let mut traj = OdeTrajectory {
        t_grid: vec![t],
        f: vec![params.beta],
        f0: vec![params.beta0],
        f_cap,
        reached_cap: false,
        t_m_estimate: None,
        coefficients: co,
        steps: Vec::new(),
    };
    let mut rejected_last = false;
    for _ in 0..controls.max_steps {
        if t >= controls.t_max {
            return Ok(traj);
        }
        if t + h > controls.t_max {
            h = controls.t_max - t;
        }
        if h < controls.h_min * t.abs().max(1.0) {
            return Err(Error::Stiffness { t, h, f: y[0].exp_m1() });
        }
        let (y_new, err, k7, ks) = dp5_step(&co, t, &y, &k1, h);
        let mut norm = 0.0;
        for i in 0..2 {
            let sc = controls.abs_tol + controls.rel_tol * y[i].abs().max(y_new[i].abs());
            norm += (err[i] / sc).powi(2);
        }
        let norm = (norm / 2.0).sqrt();
        let finite = y_new.iter().all(|v| v.is_finite()) && norm.is_finite();
        if finite && norm <= 1.0 {
            let ydiff = [y_new[0] - y[0], y_new[1] - y[1]];
            let mut rc = [[0.0; 2]; 5];
            for i in 0..2 {
                let bspl = h * ks[0][i] - ydiff[i];
                rc[0][i] = y[i];
                rc[1][i] = ydiff[i];
                rc[2][i] = bspl;
                rc[3][i] = ydiff[i] - h * ks[6][i] - bspl;
                rc[4][i] = h * (D1 * ks[0][i] + D3 * ks[2][i] + D4 * ks[3][i] + D5 * ks[4][i] + D6 * ks[5][i] + D7 * ks[6][i]);
            }
            let step = DenseStep { t0: t, h, rc };
            let t_new = t + h;
            let (mut t_acc, mut y_acc) = (t_new, y_new);
            let mut capped = false;
            if y_new[0] >= y_cap {
                let tc = bisect(|s| step.eval(s)[0] - y_cap, t, t_new, 1e-15 * t_new)?;
                t_acc = tc;
                y_acc = step.eval(tc);
                y_acc[0] = y_cap;
                capped = true;
            }
            let f_acc = y_acc[0].exp_m1();
            let f0_acc = y_acc[0].exp() * y_acc[1];
            if !(f_acc > 0.0 && f0_acc > 0.0) {
                return Err(Error::Consistency(format!("nonpositive contrast at t = {t_acc}: f = {f_acc:e}, f' = {f0_acc:e}")));
            }
            traj.steps.push(step);
            traj.t_grid.push(t_acc);
            traj.f.push(if capped { f_cap } else { f_acc });
            traj.f0.push(f0_acc);
            if capped {
                traj.reached_cap = true;
                return Ok(traj);
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            let fac11 = norm.max(1e-10).powf(0.2 - 0.04 * 0.75);
            let mut fac = fac11 / fac_old.powf(0.04);
            fac = (fac / 0.9).clamp(0.1, 5.0);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            fac_old = norm.max(1e-4);
            h = h_new;
            rejected_last = false;
        } else {
            let shrink = if finite { (norm.powf(0.2) / 0.9).min(5.0) } else { 5.0 };
            h /= shrink.max(1.2);
            rejected_last = true;
        }
    }
    Err(Error::Stiffness { t, h, f: y[0].exp_m1() })
}

/// Fixed-step classical RK4 on (f, f') with `substeps` steps per interval of `nodes`.
///
/// Used as an independent reference for the adaptive integrator.
pub fn rk4_reference(params: &ModelParams, nodes: &[f64], substeps: usize) -> Vec<(f64, f64)> {
    let co = OdeCoefficients::from_params(params);
    let rhs = |t: f64, s: [f64; 2]| [s[1], co.second_derivative(t, s[0], s[1])];
    let mut s = [params.beta, params.beta0];
    let mut out = vec![(s[0], s[1])];
    for w in nodes.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        let mut t = w[0];
        for _ in 0..substeps {
            let k1 = rhs(t, s);
            let k2 = rhs(t + 0.5 * h, [s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
            let k3 = rhs(t + 0.5 * h, [s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
            let k4 = rhs(t + h, [s[0] + h * k3[0], s[1] + h * k3[1]]);
            for i in 0..2 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        out.push((s[0], s[1]));
    }
    out
}

/// Constants of the analytic envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub a_bar: f64,
    pub c_bar: f64,
    pub delta: f64,
    pub big_a: f64,
    pub big_b: f64,
    pub big_c: f64,
    pub big_d: f64,
    pub big_e: f64,
}

impl BoundConstants {
    pub fn new(p: &ModelParams) -> Result<Self> {
        let (ab, cb, dl, b) = (p.a_bar(), p.c_bar(), p.delta(), p.ode_b);
        let (t0, beta) = (p.t0, p.beta);
        let q = t0 * p.beta0 / ((1.0 + beta) * (1.0 + beta));
        let r = beta / (1.0 + beta);
        let lm = 0.5 * (ab - dl);
        let lp = 0.5 * (ab + dl);
        let big_a = t0.powf(-lm) / dl * (q - lp * r);
        let big_b = t0.powf(-lp) / dl * (lm * r - q);
        let s = t0 * p.beta0 / (1.0 + beta);
        let ln1b = beta.ln_1p();
        let big_c = 2.0 / (2.0 + ab + dl) * (ln1b + (ab + dl) / (2.0 * b) * s) * t0.powf(-lp);
        let big_d = (ab + dl) / (2.0 + ab + dl) * (ln1b - s / b) * t0;
        let big_e = cb * 3.0 * p.gamma * t0.powf(1.0 - ab) / ab;
        let k = Self { a_bar: ab, c_bar: cb, delta: dl, big_a, big_b, big_c, big_d, big_e };
        if !(big_b < 0.0 && big_c > 0.0 && big_e > 0.0) {
            return Err(Error::Consistency(format!("envelope constant signs violated: B = {big_b:e}, C = {big_c:e}, E = {big_e:e}")));
        }
        Ok(k)
    }

    fn lm(&self) -> f64 {
        0.5 * (self.a_bar - self.delta)
    }

    fn lp(&self) -> f64 {
        0.5 * (self.a_bar + self.delta)
    }

    /// 𝙰 t^{(ā−△)/2} + 𝙱 t^{(ā+△)/2} + 1, whose first root is t★.
    pub fn bracket_fn(&self, t: f64) -> f64 {
        self.big_a * t.powf(self.lm()) + self.big_b * t.powf(self.lp()) + 1.0
    }

    /// exp(𝙲 t^{(ā+△)/2} + 𝙳/t), the lower envelope of 1+f.
    pub fn lower_envelope(&self, t: f64) -> f64 {
        (self.big_c * t.powf(self.lp()) + self.big_d / t).exp()
    }

    /// Whether the improved lower envelope applies (γ > 1/3 for t₀ = 1).
    pub fn improved_applies(&self, t0: f64) -> bool {
        t0.powf(self.a_bar) > 1.0 / self.big_e
    }

    /// (1+β)(1 − 𝙴t₀^ā + 𝙴t^ā)^{1/c̄}, the improved lower envelope of 1+f.
    pub fn improved_envelope(&self, t: f64, t0: f64, beta: f64) -> f64 {
        let base = 1.0 - self.big_e * t0.powf(self.a_bar) + self.big_e * t.powf(self.a_bar);
        if base <= 0.0 {
            f64::INFINITY
        } else {
            (1.0 + beta) * base.powf(1.0 / self.c_bar)
        }
    }
}

/// Lower and upper bracket of the blowup time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupBracket {
    pub t_star: f64,
    pub t_star_upper: Option<f64>,
    pub constants: BoundConstants,
}

/// Search ceiling for the first root of the bracket function.
pub const BRACKET_CEILING: f64 = 1e12;

/// t★ = first root above t₀ of the bracket function and t^★ = (t₀^ā − 𝙴⁻¹)^{1/ā} when it exists.
pub fn blowup_bracket(params: &ModelParams) -> Result<BlowupBracket> {
    let k = BoundConstants::new(params)?;
    let t0 = params.t0;
    let mut lo = t0;
    let mut hi = t0 * 1.01;
    while k.bracket_fn(hi) > 0.0 {
        lo = hi;
        hi *= 1.5;
        if hi > BRACKET_CEILING {
            return Err(Error::NoBracket { ceiling: BRACKET_CEILING });
        }
    }
    let mut t_star = bisect(|t| k.bracket_fn(t), lo, hi, 1e-15 * hi)?;
    let lm = k.lm();
    let lp = k.lp();
    for _ in 0..2 {
        let d = k.big_a * lm * t_star.powf(lm - 1.0) + k.big_b * lp * t_star.powf(lp - 1.0);
        let next = t_star - k.bracket_fn(t_star) / d;
        if next > lo && next < hi {
            t_star = next;
        }
    }
    let t_star_upper = if k.improved_applies(t0) { Some((t0.powf(k.a_bar) - 1.0 / k.big_e).powf(1.0 / k.a_bar)) } else { None };
    Ok(BlowupBracket { t_star, t_star_upper, constants: k })
}

/// Which envelope failed first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvelopeKind {
    Lower,
    Upper,
    Improved,
}

/// Per-grid-point envelope verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lower_ok: Vec<bool>,
    /// `None` where the upper envelope does not apply (t ≥ t★).
    pub upper_ok: Vec<Option<bool>>,
    /// `None` where the improved envelope does not apply.
    pub improved_ok: Vec<Option<bool>>,
    pub constants: BoundConstants,
    pub t_star: f64,
    pub first_violation: Option<(EnvelopeKind, f64)>,
    /// Relative slack granted to absorb integration error.
    pub slack: f64,
}

impl BoundReport {
    pub fn all_ok(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Relative slack used by [`bound_certificates`], far above the integration tolerance.
pub const CERT_SLACK: f64 = 1e-9;

/// Checks the three envelopes of 1+f at every accepted grid point after t₀.
pub fn bound_certificates(traj: &OdeTrajectory, params: &ModelParams) -> Result<BoundReport> {
    let br = blowup_bracket(params)?;
    let k = br.constants;
    let improved = k.improved_applies(params.t0);
    let n = traj.t_grid.len();
    let mut rep = BoundReport {
        lower_ok: vec![true; n],
        upper_ok: vec![None; n],
        improved_ok: vec![None; n],
        constants: k,
        t_star: br.t_star,
        first_violation: None,
        slack: CERT_SLACK,
    };
    for i in 1..n {
        let t = traj.t_grid[i];
        let one_f = 1.0 + traj.f[i];
        let lower = k.lower_envelope(t) < one_f * (1.0 + CERT_SLACK);
        rep.lower_ok[i] = lower;
        if !lower && rep.first_violation.is_none() {
            rep.first_violation = Some((EnvelopeKind::Lower, t));
        }
        if t < br.t_star {
            let ok = one_f * k.bracket_fn(t) < 1.0 + CERT_SLACK;
            rep.upper_ok[i] = Some(ok);
            if !ok && rep.first_violation.is_none() {
                rep.first_violation = Some((EnvelopeKind::Upper, t));
            }
        }
        if improved {
            let ok = k.improved_envelope(t, params.t0, params.beta) < one_f * (1.0 + CERT_SLACK);
            rep.improved_ok[i] = Some(ok);
            if !ok && rep.first_violation.is_none() {
                rep.first_violation = Some((EnvelopeKind::Improved, t));
            }
        }
    }
    Ok(rep)
}

/// Extrapolated blowup time with its self-consistency spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEstimate {
    pub t_m: f64,
    /// Relative change of the estimate when the ladder is moved down by one rung.
    pub spread_rel: f64,
    pub ladder_caps: [f64; 3],
    pub ladder_times: [f64; 3],
}

fn aitken(t: [f64; 3]) -> f64 {
    let d1 = t[1] - t[0];
    let d2 = t[2] - t[1];
    let den = d2 - d1;
    if den.abs() < 1e-300 {
        t[2]
    } else {
        t[2] - d2 * d2 / den
    }
}

/// Aitken extrapolation of the cap-crossing times on the ladder f_cap/4, f_cap/2, f_cap.
pub fn estimate_blowup_time(traj: &OdeTrajectory) -> Result<BlowupEstimate> {
    if !traj.reached_cap {
        return Err(Error::NoBlowup { f_max: traj.f_end(), cap: traj.f_cap });
    }
    let caps = [traj.f_cap / 4.0, traj.f_cap / 2.0, traj.f_cap];
    let times = [traj.time_at_f(caps[0])?, traj.time_at_f(caps[1])?, traj.t_end()];
    let t_m = aitken(times);
    let lower = [traj.time_at_f(traj.f_cap / 8.0)?, times[0], times[1]];
    let t_lower = aitken(lower);
    Ok(BlowupEstimate { t_m, spread_rel: ((t_m - t_lower) / t_m).abs(), ladder_caps: caps, ladder_times: times })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{build_params, ParamsInput};
    use proptest::prelude::*;

    fn default_params() -> ModelParams {
        build_params(&ParamsInput::default()).unwrap()
    }

    #[test]
    fn initial_data_exact() {
        let p = default_params();
        let tr = integrate_contrast(&p, 1e3, &ToleranceSpec::default()).unwrap();
        assert_eq!(tr.f[0], p.beta);
        assert_eq!(tr.f0[0], p.beta0);
        assert!(tr.reached_cap);
        assert_eq!(tr.f_end(), 1e3);
        assert!(tr.f.windows(2).all(|w| w[1] > w[0]));
        assert!(tr.f0.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn tiny_data_stays_near_fixed_point() {
        let input = ParamsInput { beta: 1e-14, gamma: 1e-14 / (3.0 * (1.0 + 1e-14)), ..ParamsInput::default() };
        let p = build_params(&input).unwrap();
        let ctl = ToleranceSpec { t_max: 10.0, ..ToleranceSpec::default() };
        let tr = integrate_contrast(&p, 1.0, &ctl).unwrap();
        assert!(!tr.reached_cap);
        assert!((tr.t_end() - 10.0).abs() < 1e-12);
        assert!(tr.f.iter().all(|&v| v < 1e-10));
    }

    #[test]
    fn matches_rk4_reference_at_ten_times_resolution() {
        let p = default_params();
        let tr = integrate_contrast(&p, 1e3, &ToleranceSpec::default()).unwrap();
        let reference = rk4_reference(&p, &tr.t_grid, 10);
        for (i, (f, f0)) in reference.iter().enumerate() {
            assert!((f - tr.f[i]).abs() < 1e-7 * (1.0 + tr.f[i]), "f at {i}");
            assert!((f0 - tr.f0[i]).abs() < 1e-7 * (1.0 + tr.f0[i]), "f0 at {i}");
        }
    }

    #[test]
    fn dense_output_matches_ode_identity() {
        let p = default_params();
        let tr = integrate_contrast(&p, 1e4, &ToleranceSpec::default()).unwrap();
        let co = tr.coefficients;
        for i in 1..tr.t_grid.len() - 1 {
            let t = 0.5 * (tr.t_grid[i] + tr.t_grid[i + 1]);
            let h = 1e-4 * (tr.t_grid[i + 1] - tr.t_grid[i]).min(1e-2);
            let d = crate::numerics::d1_centered(|s| tr.state_at(s).unwrap().1, t, h);
            let (f, f0) = tr.state_at(t).unwrap();
            let rhs = co.second_derivative(t, f, f0);
            assert!((d - rhs).abs() < 1e-4 * rhs.abs().max(1.0), "t = {t}: {d} vs {rhs}");
        }
    }

    #[test]
    fn bracket_worked_example() {
        let p = default_params();
        let br = blowup_bracket(&p).unwrap();
        let k = br.constants;
        assert!((k.a_bar + 1.0 / 3.0).abs() < 1e-15);
        assert!((k.delta - 5.0 / 3.0).abs() < 1e-15);
        let a_oracle = 0.6 * (1.65 / 1.21 - 2.0 / 3.0 * 0.1 / 1.1);
        let b_oracle = 0.6 * (-0.1 / 1.1 - 1.65 / 1.21);
        assert!((k.big_a - a_oracle).abs() < 1e-14 && (k.big_a - 0.78182).abs() < 1e-5);
        assert!((k.big_b - b_oracle).abs() < 1e-14 && (k.big_b + 0.87273).abs() < 1e-5);
        let oracle = |t: f64| a_oracle / t + b_oracle * t.powf(2.0 / 3.0) + 1.0;
        let mut lo = 1.0;
        let mut hi = 4.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if oracle(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((br.t_star - lo).abs() < 1e-10);
        assert!((br.t_star - 2.01).abs() < 5e-3);
        let up = br.t_star_upper.unwrap();
        assert!((up - 27.0).abs() < 1e-9);
        assert!(p.t0 < br.t_star && br.t_star < up);
    }

    #[test]
    fn threshold_gamma_has_no_upper_bracket() {
        let p = build_params(&ParamsInput { gamma: 1.0 / 3.0, ..ParamsInput::default() }).unwrap();
        assert!(blowup_bracket(&p).unwrap().t_star_upper.is_none());
    }

    #[test]
    fn envelopes_touch_data_at_t0() {
        let p = default_params();
        let k = BoundConstants::new(&p).unwrap();
        assert!((k.lower_envelope(1.0) - 1.1).abs() < 1e-9);
        assert!(k.lower_envelope(1.0) <= 1.1 + 1e-9);
        assert!((1.0 / k.bracket_fn(1.0) - 1.1).abs() < 1e-12);
        assert!((k.improved_envelope(1.0, 1.0, p.beta) - 1.1).abs() < 1e-12);
        let br = blowup_bracket(&p).unwrap();
        assert!(1.0 / k.bracket_fn(br.t_star * (1.0 - 1e-9)) > 1e6);
    }

    #[test]
    fn certificates_hold_for_worked_example() {
        let p = default_params();
        let tr = integrate_contrast(&p, DEFAULT_F_CAP, &ToleranceSpec::default()).unwrap();
        let rep = bound_certificates(&tr, &p).unwrap();
        assert!(rep.all_ok(), "{:?}", rep.first_violation);
        assert!(rep.upper_ok.iter().any(|v| v.is_some()));
        assert!(rep.improved_ok.iter().any(|v| v.is_some()));
    }

    #[test]
    fn blowup_estimate_inside_bracket() {
        let p = default_params();
        let mut tr = integrate_contrast(&p, DEFAULT_F_CAP, &ToleranceSpec::default()).unwrap();
        let est = tr.attach_blowup_estimate().unwrap();
        let br = blowup_bracket(&p).unwrap();
        assert!(br.t_star <= est.t_m && est.t_m < br.t_star_upper.unwrap());
        assert!(est.spread_rel < 1e-3, "spread {}", est.spread_rel);
        let tr2 = integrate_contrast(&p, 2.0 * DEFAULT_F_CAP, &ToleranceSpec::default()).unwrap();
        let est2 = estimate_blowup_time(&tr2).unwrap();
        assert!(((est2.t_m - est.t_m) / est.t_m).abs() < est.spread_rel);
    }

    #[test]
    fn no_blowup_reported_without_cap() {
        let p = default_params();
        let ctl = ToleranceSpec { t_max: 1.5, ..ToleranceSpec::default() };
        let tr = integrate_contrast(&p, 1e6, &ctl).unwrap();
        assert!(matches!(estimate_blowup_time(&tr), Err(Error::NoBlowup { .. })));
    }

    #[test]
    fn tolerance_refinement_is_consistent() {
        let p = default_params();
        let ctl = ToleranceSpec { rel_tol: 1e-9, abs_tol: 1e-12, ..ToleranceSpec::default() };
        let fine = ToleranceSpec { rel_tol: 0.5e-9, abs_tol: 0.5e-12, ..ToleranceSpec::default() };
        let a = integrate_contrast(&p, 1e4, &ctl).unwrap();
        let b = integrate_contrast(&p, 1e4, &fine).unwrap();
        for &t in &[1.2, 1.5, 1.8, 2.0] {
            if t < a.t_end().min(b.t_end()) {
                let fa = a.state_at(t).unwrap().0;
                let fb = b.state_at(t).unwrap().0;
                assert!((fa - fb).abs() < 10.0 * ctl.rel_tol * (1.0 + fa) * 100.0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn positivity_and_monotonicity(beta in 0.05f64..1.0, gamma in 0.05f64..1.0) {
            let p = build_params(&ParamsInput { beta, gamma, ..ParamsInput::default() }).unwrap();
            let tr = integrate_contrast(&p, 1e3, &ToleranceSpec::default()).unwrap();
            prop_assert!(tr.f.iter().all(|&v| v > 0.0));
            prop_assert!(tr.f0.iter().all(|&v| v > 0.0));
            prop_assert!(tr.f.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
