//! The compactified time τ = −g(t) built on a contrast trajectory, its inverse,
//! and the diagnostics χ, ξ, 𝔊 = χ − 4B and η_θ = 1/(g^θ(1+f)).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect, d1_centered, linear_fit, Pchip};
use crate::ode::OdeTrajectory;
use crate::params::ModelParams;

/// Number of equal sub-intervals each accepted ODE step is split into.
pub const SUBDIVISIONS: usize = 8;

/// Target agreement of the two integral representations of g.
pub const REPRESENTATION_TOL: f64 = 1e-6;

/// Fraction of the cap that opens the terminal window.
pub const TERMINAL_FRACTION: f64 = 0.9;

/// g, τ and the limit diagnostics on a refinement of the trajectory grid.
#[derive(Debug, Clone)]
pub struct TimeMaps {
    pub t_grid: Vec<f64>,
    pub f: Vec<f64>,
    pub f0: Vec<f64>,
    /// g from the exponential of the f'-quotient integral.
    pub g: Vec<f64>,
    pub tau: Vec<f64>,
    /// g from the f-only power-law integral.
    pub g_alt: Vec<f64>,
    /// Largest relative disagreement of `g` and `g_alt`.
    pub representation_rel: f64,
    pub chi: Vec<f64>,
    pub xi: Vec<f64>,
    pub g_frak: Vec<f64>,
    /// (θ, η_θ) pairs.
    pub eta_theta: Vec<(f64, Vec<f64>)>,
    /// Largest relative disagreement of the two algebraic forms of χ.
    pub chi_forms_rel: f64,
    pub a_time: f64,
    pub b: f64,
    pub chi_limit: f64,
    traj: OdeTrajectory,
    inverse: Pchip,
}

fn quotient_integrand(t: f64, f: f64, f0: f64) -> f64 {
    f * (1.0 + f) / (t * t * f0)
}

/// Cumulative Simpson sums on a node set whose consecutive groups of
/// [`SUBDIVISIONS`] + 1 points are equally spaced.
fn cumulative_simpson(t: &[f64], v: &[f64]) -> Vec<f64> {
    let mut cum = vec![0.0; t.len()];
    let mut base = 0.0;
    let groups = (t.len() - 1) / SUBDIVISIONS;
    for gidx in 0..groups {
        let s = gidx * SUBDIVISIONS;
        let h = t[s + 1] - t[s];
        for j in 1..=SUBDIVISIONS {
            let k = s + j;
            cum[k] = if j % 2 == 0 {
                cum[k - 2] + h / 3.0 * (v[k - 2] + 4.0 * v[k - 1] + v[k])
            } else if j == 1 {
                base + h / 24.0 * (9.0 * v[k - 1] + 19.0 * v[k] - 5.0 * v[k + 1] + v[k + 2])
            } else {
                cum[k - 1] + h / 24.0 * (-v[k - 2] + 13.0 * v[k - 1] + 13.0 * v[k] - v[k + 1])
            };
        }
        base = cum[s + SUBDIVISIONS];
    }
    cum
}

/// Computes g from both integral representations and τ = −g.
pub fn compute_g(traj: &OdeTrajectory, params: &ModelParams) -> Result<TimeMaps> {
    let a_time = params.a_time;
    let (a, bb, c) = (params.ode_a, params.ode_b, params.ode_c);
    let n_steps = traj.step_count();
    let mut t_grid = Vec::with_capacity(n_steps * SUBDIVISIONS + 1);
    for k in 0..n_steps {
        let (lo, hi) = (traj.t_grid[k], traj.t_grid[k + 1]);
        for j in 0..SUBDIVISIONS {
            t_grid.push(lo + (hi - lo) * j as f64 / SUBDIVISIONS as f64);
        }
    }
    t_grid.push(traj.t_end());
    let mut f = Vec::with_capacity(t_grid.len());
    let mut f0 = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        if i % SUBDIVISIONS == 0 {
            f.push(traj.f[i / SUBDIVISIONS]);
            f0.push(traj.f0[i / SUBDIVISIONS]);
        } else {
            let (fv, f0v) = traj.state_at(t)?;
            f.push(fv);
            f0.push(f0v);
        }
    }
    let v1: Vec<f64> = (0..t_grid.len()).map(|i| quotient_integrand(t_grid[i], f[i], f0[i])).collect();
    let v2: Vec<f64> = (0..t_grid.len()).map(|i| t_grid[i].powf(a - 2.0) * f[i] * (1.0 + f[i]).powf(1.0 - c)).collect();
    let cum1 = cumulative_simpson(&t_grid, &v1);
    let cum2 = cumulative_simpson(&t_grid, &v2);
    let g: Vec<f64> = cum1.iter().map(|s| (-a_time * s).exp()).collect();
    let g_alt: Vec<f64> = cum2.iter().map(|s| (1.0 + bb * params.b * s).powf(-a_time / bb)).collect();
    let representation_rel = g.iter().zip(&g_alt).map(|(x, y)| ((x - y) / x).abs()).fold(0.0, f64::max);
    if representation_rel > 10.0 * REPRESENTATION_TOL {
        return Err(Error::RepresentationMismatch { rel: representation_rel });
    }
    if g.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Consistency("g is not strictly decreasing".into()));
    }
    let tau: Vec<f64> = g.iter().map(|v| -v).collect();
    let inverse = Pchip::new(tau.clone(), t_grid.clone())?;
    Ok(TimeMaps {
        t_grid,
        f,
        f0,
        g,
        tau,
        g_alt,
        representation_rel,
        chi: Vec::new(),
        xi: Vec::new(),
        g_frak: Vec::new(),
        eta_theta: Vec::new(),
        chi_forms_rel: 0.0,
        a_time,
        b: params.b,
        chi_limit: params.chi_limit(),
        traj: traj.clone(),
        inverse,
    })
}

impl TimeMaps {
    /// The trajectory the maps were built on.
    pub fn trajectory(&self) -> &OdeTrajectory {
        &self.traj
    }

    pub fn t_end(&self) -> f64 {
        self.t_grid[self.t_grid.len() - 1]
    }

    /// Largest τ reached, i.e. −g at the end of the trajectory.
    pub fn tau_end(&self) -> f64 {
        self.tau[self.tau.len() - 1]
    }

    /// Indices of the fine grid that coincide with accepted ODE steps.
    pub fn step_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.t_grid.len()).step_by(SUBDIVISIONS)
    }

    fn node_below(&self, t: f64) -> usize {
        self.t_grid.partition_point(|&v| v <= t).saturating_sub(1).min(self.t_grid.len() - 1)
    }

    /// g at an arbitrary time, continued from the nearest node by Simpson's rule on the dense output.
    pub fn g_at(&self, t: f64) -> Result<f64> {
        let (lo, hi) = (self.t_grid[0], self.t_end());
        if !(t >= lo && t <= hi) {
            return Err(Error::Range { what: "t", value: t, lo, hi });
        }
        let k = self.node_below(t);
        let tk = self.t_grid[k];
        if t == tk {
            return Ok(self.g[k]);
        }
        let integrand = |s: f64| -> Result<f64> {
            let (fv, f0v) = self.traj.state_at(s)?;
            Ok(quotient_integrand(s, fv, f0v))
        };
        let h = t - tk;
        let mid = integrand(tk + 0.5 * h)?;
        let end = integrand(t)?;
        let start = quotient_integrand(tk, self.f[k], self.f0[k]);
        let s = h / 6.0 * (start + 4.0 * mid + end);
        Ok(self.g[k] * (-self.a_time * s).exp())
    }

    /// g'(t) from the definition of g.
    pub fn dg_at(&self, t: f64) -> Result<f64> {
        let (fv, f0v) = self.traj.state_at(t)?;
        Ok(-self.a_time * self.g_at(t)? * quotient_integrand(t, fv, f0v))
    }

    /// χ at an arbitrary time.
    pub fn chi_at(&self, t: f64) -> Result<f64> {
        let (fv, f0v) = self.traj.state_at(t)?;
        Ok(chi_quotient_form(t, fv, f0v, self.g_at(t)?, self.a_time))
    }

    /// The time t with −g(t) = `tau_query`.
    ///
    /// A monotone cubic interpolant of the inverse supplies the first guess,
    /// which is then polished by safeguarded Newton steps on [`TimeMaps::g_at`].
    pub fn invert_tau(&self, tau_query: f64) -> Result<f64> {
        let (lo, hi) = (self.tau[0], self.tau_end());
        if !(tau_query >= lo && tau_query <= hi) {
            return Err(Error::Range { what: "tau", value: tau_query, lo, hi });
        }
        let k = self.tau.partition_point(|&v| v <= tau_query);
        if k == 0 || self.tau[k - 1] == tau_query {
            return Ok(self.t_grid[k.saturating_sub(1)]);
        }
        if k == self.tau.len() {
            return Ok(self.t_end());
        }
        let (mut a, mut b) = (self.t_grid[k - 1], self.t_grid[k]);
        let target = -tau_query;
        let resid = |t: f64| -> Result<f64> { Ok(self.g_at(t)? - target) };
        let mut t = self.inverse.eval(tau_query).clamp(a, b);
        for _ in 0..50 {
            let r = resid(t)?;
            if r.abs() <= 1e-15 * target {
                return Ok(t);
            }
            if r > 0.0 {
                a = t;
            } else {
                b = t;
            }
            let d = self.dg_at(t)?;
            let mut next = t - r / d;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - t).abs() <= 1e-16 * t {
                return Ok(next);
            }
            t = next;
        }
        bisect(|s| self.g_at(s).map(|v| v - target).unwrap_or(f64::NAN), a, b, 1e-15 * b)
    }

    /// Fills χ, ξ, 𝔊 and η_θ on the grid.
    pub fn compute_diagnostics(&mut self, thetas: &[f64]) -> Result<()> {
        let limit = self.chi_limit / self.b;
        for &th in thetas {
            if !(th >= 1.0) || !(self.a_time * th < limit) {
                return Err(Error::Domain(format!("theta = {th} requires theta >= 1 and A*theta < {limit} for eta_theta to vanish at blowup")));
            }
        }
        let n = self.t_grid.len();
        let mut chi = Vec::with_capacity(n);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let (t, f, f0, g) = (self.t_grid[i], self.f[i], self.f0[i], self.g[i]);
            let c1 = chi_quotient_form(t, f, f0, g, self.a_time);
            let c2 = g.powf(-4.0 / (3.0 * self.a_time)) * t.powf(-2.0 / 3.0) * (1.0 + f).powf(2.0 / 3.0) / (self.b * f);
            worst = worst.max(((c1 - c2) / c1).abs());
            if !(c1 > 0.0) {
                return Err(Error::Consistency(format!("chi = {c1:e} not positive at t = {t}")));
            }
            chi.push(c1);
        }
        if worst > 10.0 * REPRESENTATION_TOL {
            return Err(Error::RepresentationMismatch { rel: worst });
        }
        self.chi_forms_rel = worst;
        self.g_frak = chi.iter().map(|c| c - self.chi_limit).collect();
        self.chi = chi;
        self.xi = (0..n).map(|i| 1.0 / (self.g[i] * (1.0 + self.f[i]))).collect();
        self.eta_theta = thetas.iter().map(|&th| (th, (0..n).map(|i| 1.0 / (self.g[i].powf(th) * (1.0 + self.f[i]))).collect())).collect();
        Ok(())
    }

    /// η_θ for a θ passed to [`TimeMaps::compute_diagnostics`].
    pub fn eta(&self, theta: f64) -> Option<&[f64]> {
        self.eta_theta.iter().find(|(th, _)| *th == theta).map(|(_, v)| v.as_slice())
    }

    /// Limits of χ, ξ and η₂ over the sub-grid where f ≥ 0.9·f_cap.
    pub fn terminal_window(&self) -> Option<TerminalReport> {
        if !self.traj.reached_cap || self.chi.is_empty() {
            return None;
        }
        let level = TERMINAL_FRACTION * self.traj.f_cap;
        let idx: Vec<usize> = (0..self.t_grid.len()).filter(|&i| self.f[i] >= level).collect();
        let chi_dev = idx.iter().map(|&i| (self.chi[i] / self.chi_limit - 1.0).abs()).fold(0.0, f64::max);
        let xi_max = idx.iter().map(|&i| self.xi[i]).fold(0.0, f64::max);
        let eta2_max = idx.iter().map(|&i| 1.0 / (self.g[i].powi(2) * (1.0 + self.f[i]))).fold(0.0, f64::max);
        Some(TerminalReport { points: idx.len(), chi_rel_dev: chi_dev, xi_max, eta2_max })
    }

    /// Pointwise checks of the identities tying f', g, χ and the trajectory together.
    pub fn check_identities(&self, params: &ModelParams) -> Result<IdentityReport> {
        let (a, bb, c) = (params.ode_a, params.ode_b, params.ode_c);
        let mut rep = IdentityReport {
            f0_closed_form: 0.0,
            dg_closed_form: 0.0,
            sqrt_chi_form: 0.0,
            representation: self.representation_rel,
            chi_forms: self.chi_forms_rel,
        };
        for i in 0..self.t_grid.len() {
            let (t, f, f0, g) = (self.t_grid[i], self.f[i], self.f0[i], self.g[i]);
            let closed = t.powf(-a) * g.powf(-bb / self.a_time) * (1.0 + f).powf(c) / self.b;
            rep.f0_closed_form = rep.f0_closed_form.max(((f0 - closed) / f0).abs());
            if !self.chi.is_empty() {
                let lhs = (1.0 + f) / (t * f0);
                let rhs = (self.b / (self.chi[i] * f)).sqrt();
                rep.sqrt_chi_form = rep.sqrt_chi_form.max(((lhs - rhs) / lhs).abs());
            }
        }
        for w in self.t_grid.windows(3) {
            let t = w[1];
            let h = 0.05 * (w[1] - w[0]).min(w[2] - w[1]);
            let fd = d1_centered(|s| self.g_at(s).unwrap_or(f64::NAN), t, h);
            let (f, _) = self.traj.state_at(t)?;
            let g = self.g_at(t)?;
            let exact = -self.a_time * self.b * g.powf(bb / self.a_time + 1.0) * t.powf(a - 2.0) * f * (1.0 + f).powf(1.0 - c);
            rep.dg_closed_form = rep.dg_closed_form.max(((fd - exact) / exact).abs());
        }
        Ok(rep)
    }

    /// Analytic ∂ₜχ split into its three terms.
    pub fn dtchi_terms(&self, params: &ModelParams, t: f64, f: f64, chi: f64) -> [f64; 3] {
        let (a, c) = (params.ode_a, params.ode_c);
        let sb = self.b.sqrt();
        let gf = chi - self.chi_limit;
        [-(3.0 - 2.0 * c) * gf * f.sqrt() * chi.sqrt() / (sb * t), -chi.powf(1.5) / (sb * t * f.sqrt()), 2.0 * (1.0 - a) * chi / t]
    }

    /// Fits |𝔊| ∝ (−τ)^p over the last decade of −τ and checks ∂ₜχ against its closed form.
    pub fn check_g_decay(&self, params: &ModelParams) -> Result<GDecayReport> {
        if self.chi.is_empty() {
            return Err(Error::Domain("diagnostics not computed".into()));
        }
        let g_end = -self.tau_end();
        let window: Vec<usize> = (0..self.t_grid.len()).filter(|&i| self.g[i] <= 10.0 * g_end).collect();
        let mut keep = Vec::with_capacity(window.len());
        let mut excised = 0;
        for (j, &i) in window.iter().enumerate() {
            let s = self.g_frak[i].signum();
            let flips = (j > 0 && self.g_frak[window[j - 1]].signum() != s)
                || (j + 1 < window.len() && self.g_frak[window[j + 1]].signum() != s)
                || self.g_frak[i] == 0.0;
            if flips {
                excised += 1;
            } else {
                keep.push(i);
            }
        }
        if keep.len() < 4 {
            return Err(Error::Domain(format!("only {} usable points in the decay window", keep.len())));
        }
        let x: Vec<f64> = keep.iter().map(|&i| self.g[i].ln()).collect();
        let y: Vec<f64> = keep.iter().map(|&i| self.g_frak[i].abs().ln()).collect();
        let (slope, intercept) = linear_fit(&x, &y);

        let mut dtchi_rel: f64 = 0.0;
        let ode_t = &self.traj.t_grid;
        for w in ode_t.windows(3) {
            let t = w[1];
            let h = 0.01 * (w[1] - w[0]).min(w[2] - w[1]);
            let fd = d1_centered(|s| self.chi_at(s).unwrap_or(f64::NAN), t, h);
            let (f, _) = self.traj.state_at(t)?;
            let terms = self.dtchi_terms(params, t, f, self.chi_at(t)?);
            let scale: f64 = terms.iter().map(|v| v.abs()).sum();
            let rhs: f64 = terms.iter().sum();
            dtchi_rel = dtchi_rel.max((fd - rhs).abs() / scale);
        }
        Ok(GDecayReport { slope, constant: intercept.exp(), window_points: keep.len(), excised, zero_crossings_flagged: excised > 0, dtchi_rel })
    }
}

/// χ = t^{2/3} f'/((1+f)^{2/3} f g^{2/(3A)}).
pub fn chi_quotient_form(t: f64, f: f64, f0: f64, g: f64, a_time: f64) -> f64 {
    t.powf(2.0 / 3.0) * f0 / ((1.0 + f).powf(2.0 / 3.0) * f * g.powf(2.0 / (3.0 * a_time)))
}

/// Worst values of the limit diagnostics in the terminal window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalReport {
    pub points: usize,
    /// max |χ/(4B) − 1|.
    pub chi_rel_dev: f64,
    pub xi_max: f64,
    pub eta2_max: f64,
}

impl TerminalReport {
    pub fn passes(&self, chi_tol: f64, decay_tol: f64) -> bool {
        self.points > 0 && self.chi_rel_dev < chi_tol && self.xi_max < decay_tol && self.eta2_max < decay_tol
    }
}

/// Largest relative defects of the closed-form identities along the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// f' against B⁻¹t^{−a}g^{−b/A}(1+f)^c.
    pub f0_closed_form: f64,
    /// Centered differences of g against −ABg^{b/A+1}t^{a−2}f(1+f)^{1−c}.
    pub dg_closed_form: f64,
    /// (1+f)/(tf') against √(B/(χf)).
    pub sqrt_chi_form: f64,
    /// The two integral representations of g.
    pub representation: f64,
    /// The two algebraic forms of χ.
    pub chi_forms: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        [self.f0_closed_form, self.dg_closed_form, self.sqrt_chi_form, self.representation, self.chi_forms].into_iter().fold(0.0, f64::max)
    }
}

/// Power-law fit of |𝔊| in −τ and the ∂ₜχ check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GDecayReport {
    pub slope: f64,
    pub constant: f64,
    pub window_points: usize,
    pub excised: usize,
    pub zero_crossings_flagged: bool,
    /// Largest defect of the finite-difference ∂ₜχ, relative to the sum of the term magnitudes.
    pub dtchi_rel: f64,
}

/// Integrates to `f_cap` and returns fully populated maps with θ ∈ {1, 2}.
pub fn build_time_maps(traj: &OdeTrajectory, params: &ModelParams) -> Result<TimeMaps> {
    let mut maps = compute_g(traj, params)?;
    let limit = params.chi_limit() / params.b;
    let thetas: Vec<f64> = [1.0, 2.0].into_iter().filter(|th| params.a_time * th < limit).collect();
    maps.compute_diagnostics(&thetas)?;
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate_contrast, ToleranceSpec, DEFAULT_F_CAP};
    use crate::params::{build_params, ParamsInput};
    use proptest::prelude::*;

    fn default_maps(cap: f64) -> (ModelParams, TimeMaps) {
        let p = build_params(&ParamsInput::default()).unwrap();
        let tr = integrate_contrast(&p, cap, &ToleranceSpec::default()).unwrap();
        let maps = build_time_maps(&tr, &p).unwrap();
        (p, maps)
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let t: Vec<f64> = (0..=16).map(|i| 1.0 + 0.1 * i as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| x * x * x - 2.0 * x).collect();
        let cum = cumulative_simpson(&t, &v);
        for (x, c) in t.iter().zip(&cum) {
            let exact = (x.powi(4) - 1.0) / 4.0 - (x * x - 1.0);
            assert!((c - exact).abs() < 1e-12, "{x}: {c} vs {exact}");
        }
    }

    #[test]
    fn g_starts_at_one_and_decreases() {
        let (p, maps) = default_maps(DEFAULT_F_CAP);
        assert_eq!(maps.g[0], 1.0);
        assert_eq!(maps.tau[0], -1.0);
        assert!(maps.g.windows(2).all(|w| w[1] < w[0]));
        assert!(maps.representation_rel < REPRESENTATION_TOL, "{}", maps.representation_rel);
        assert!(-maps.tau_end() < 1e-2);
        assert_eq!(maps.xi[0], 1.0 / (1.0 + p.beta));
    }

    #[test]
    fn identities_hold_along_trajectory() {
        let (p, maps) = default_maps(DEFAULT_F_CAP);
        let rep = maps.check_identities(&p).unwrap();
        assert!(rep.f0_closed_form < 1e-6, "{rep:?}");
        assert!(rep.sqrt_chi_form < 1e-6, "{rep:?}");
        assert!(rep.dg_closed_form < 1e-4, "{rep:?}");
        assert!(rep.chi_forms < 1e-6, "{rep:?}");
    }

    #[test]
    fn invert_tau_round_trip() {
        let (_, maps) = default_maps(DEFAULT_F_CAP);
        assert_eq!(maps.invert_tau(-1.0).unwrap(), 1.0);
        let hi = maps.tau_end();
        for i in 0..100 {
            let u = crate::numerics::radical_inverse(i + 1, 2);
            let tq = -1.0 + u * (hi + 1.0);
            let t = maps.invert_tau(tq).unwrap();
            assert!((-maps.g_at(t).unwrap() - tq).abs() < 1e-8);
        }
        let qs: Vec<f64> = (0..50).map(|i| -1.0 + (hi + 1.0) * i as f64 / 50.0).collect();
        let ts: Vec<f64> = qs.iter().map(|&q| maps.invert_tau(q).unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert!(maps.invert_tau(hi + 1e-3).is_err());
        assert!(maps.invert_tau(-1.5).is_err());
    }

    #[test]
    fn terminal_window_limits() {
        let (p, maps) = default_maps(DEFAULT_F_CAP);
        let term = maps.terminal_window().unwrap();
        assert!(term.chi_rel_dev < 0.05, "{term:?}");
        assert!(term.xi_max < 1e-2, "{term:?}");
        // Near blowup η₂ ≈ 8B³t f^{-1/2} for A = 1.
        let n = maps.t_grid.len() - 1;
        let asym = 8.0 * p.b.powi(3) * maps.t_grid[n] / maps.f[n].sqrt();
        let eta2 = maps.eta(2.0).unwrap();
        assert!((eta2[n] / asym - 1.0).abs() < 0.05, "{} vs {asym}", eta2[n]);
    }

    #[test]
    fn eta2_vanishes_at_larger_cap() {
        let (_, maps) = default_maps(1e9);
        let eta2 = maps.eta(2.0).unwrap();
        let tail = &eta2[eta2.len() - 40..];
        assert!(tail.windows(2).all(|w| w[1] < w[0]));
        assert!(eta2[eta2.len() - 1] < 1e-3);
    }

    #[test]
    fn chi_limit_matches_forms() {
        let (_, maps) = default_maps(DEFAULT_F_CAP);
        assert!((maps.chi_limit - 4.0 * maps.b).abs() < 1e-14);
        for i in 0..maps.t_grid.len() {
            assert!(maps.chi[i] > 0.0);
            assert_eq!(maps.g_frak[i], maps.chi[i] - maps.chi_limit);
        }
    }

    #[test]
    fn g_frak_decays_and_dtchi_matches() {
        let (p, maps) = default_maps(DEFAULT_F_CAP);
        let rep = maps.check_g_decay(&p).unwrap();
        assert!(rep.slope >= 0.4, "{rep:?}");
        assert!(rep.dtchi_rel < 1e-3, "{rep:?}");
    }

    #[test]
    fn dtchi_at_initial_time_is_closed_form() {
        let (p, maps) = default_maps(1e3);
        let chi0 = maps.chi[0];
        let oracle_chi0 = p.beta0 / ((1.0 + p.beta).powf(2.0 / 3.0) * p.beta);
        assert!((chi0 - oracle_chi0).abs() < 1e-13 * oracle_chi0);
        let terms = maps.dtchi_terms(&p, 1.0, p.beta, chi0);
        let sb = p.b.sqrt();
        let oracle = -(chi0 - 4.0 * p.b) * p.beta.sqrt() * chi0.sqrt() / (3.0 * sb) - chi0.powf(1.5) / (sb * p.beta.sqrt()) - 2.0 * chi0 / 3.0;
        assert!((terms.iter().sum::<f64>() - oracle).abs() < 1e-12 * oracle.abs());
    }

    #[test]
    fn theta_hypothesis_enforced() {
        let p = build_params(&ParamsInput::default()).unwrap();
        let tr = integrate_contrast(&p, 1e3, &ToleranceSpec::default()).unwrap();
        let mut maps = compute_g(&tr, &p).unwrap();
        assert!(maps.compute_diagnostics(&[4.0]).is_err());
        assert!(maps.compute_diagnostics(&[0.5]).is_err());
        assert!(maps.compute_diagnostics(&[3.5]).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn maps_invariants(beta in 0.05f64..1.0, gamma in 0.35f64..1.0, a in 0.3f64..1.9) {
            let p = build_params(&ParamsInput { beta, gamma, a_time: a, ..ParamsInput::default() }).unwrap();
            let tr = integrate_contrast(&p, 1e4, &ToleranceSpec::default()).unwrap();
            let maps = build_time_maps(&tr, &p).unwrap();
            prop_assert!(maps.g.iter().all(|&g| g > 0.0 && g <= 1.0));
            prop_assert!(maps.g.windows(2).all(|w| w[1] < w[0]));
            prop_assert!(maps.representation_rel < REPRESENTATION_TOL);
            prop_assert!(maps.chi.iter().all(|&c| c > 0.0));
            prop_assert!(maps.xi.iter().all(|&x| x > 0.0));
            prop_assert!(maps.check_identities(&p).unwrap().max() < 1e-4);
        }
    }
}
