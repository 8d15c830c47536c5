//! Fuchsian form of the log-periodic system in the compactified time τ: the
//! field vector 𝒰 = (u₀, u_ζ, u, ν, Ψ), the coefficient blocks B⁰, Bᶻ, 𝔅, H, F
//! and numerical checks of the structural conditions F1–F7.
//!
//! The nonlinear coefficients 𝔷₁..𝔷₇ are obtained by assembling the full
//! singular coefficient rows of the five pre-Fuchsian equations at 𝒰 and
//! subtracting the 𝔷-free constant rows. Each quadratic remainder is attached
//! to one column of its row, so 𝔷ℓ(τ, 0) = 0 holds identically.

use nalgebra::{Matrix5, SymmetricEigen, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{binom_tail_over, d1_periodic, halton, linear_fit};
use crate::ode::OdeTrajectory;
use crate::params::{ModelParams, IOTA3_MAX};
use crate::pde::FieldState;
use crate::timemap::TimeMaps;

/// Reference-solution quantities at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub t: f64,
    pub tau: f64,
    pub f: f64,
    pub f0: f64,
    pub g: f64,
    pub chi: f64,
    pub g_frak: f64,
    pub xi: f64,
}

/// Background at physical time `t`.
pub fn background_at(maps: &TimeMaps, t: f64) -> Result<Background> {
    let (f, f0) = maps.trajectory().state_at(t)?;
    let g = maps.g_at(t)?;
    let chi = maps.chi_at(t)?;
    Ok(Background { t, tau: -g, f, f0, g, chi, g_frak: chi - maps.chi_limit, xi: 1.0 / (g * (1.0 + f)) })
}

/// Background at compactified time `tau`.
pub fn background_at_tau(maps: &TimeMaps, tau: f64) -> Result<Background> {
    let t = maps.invert_tau(tau)?;
    let mut bg = background_at(maps, t)?;
    bg.tau = tau;
    bg.g = -tau;
    bg.xi = 1.0 / (bg.g * (1.0 + bg.f));
    Ok(bg)
}

/// Grid values of 𝒰 at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuchsianFields {
    pub t: f64,
    pub tau: f64,
    pub u0: Vec<f64>,
    pub u_zeta: Vec<f64>,
    pub u: Vec<f64>,
    pub nu: Vec<f64>,
    pub psi: Vec<f64>,
}

impl FuchsianFields {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// 𝒰 at grid index `j`.
    pub fn point(&self, j: usize) -> Vector5<f64> {
        Vector5::new(self.u0[j], self.u_zeta[j], self.u[j], self.nu[j], self.psi[j])
    }

    /// ∂_ζ𝒰 on the grid by fourth-order periodic differences.
    pub fn d_zeta(&self) -> Vec<Vector5<f64>> {
        let n = self.len();
        let h = 1.0 / n as f64;
        let mut cols = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (src, dst) in [&self.u0, &self.u_zeta, &self.u, &self.nu, &self.psi].into_iter().zip(cols.iter_mut()) {
            d1_periodic(src, h, dst);
        }
        (0..n).map(|j| Vector5::new(cols[0][j], cols[1][j], cols[2][j], cols[3][j], cols[4][j])).collect()
    }
}

/// Extracts 𝒰 from a PDE state.
pub fn fuchsian_fields(state: &FieldState, maps: &TimeMaps, params: &ModelParams) -> Result<FuchsianFields> {
    let (f, f0) = maps.trajectory().state_at(state.t)?;
    if f == 0.0 || f0 == 0.0 {
        return Err(Error::Domain(format!("reference contrast degenerate at t = {}: f = {f}, f' = {f0}", state.t)));
    }
    let p = state.drho_dzeta();
    Ok(FuchsianFields {
        t: state.t,
        tau: -maps.g_at(state.t)?,
        u0: state.drho_dt.iter().map(|q| (q - f0) / f0).collect(),
        u_zeta: p.iter().map(|v| params.c_scale * v / (1.0 + f)).collect(),
        u: state.u(f),
        nu: state.nu.clone(),
        psi: state.psi.clone(),
    })
}

/// Fixed constants of the Fuchsian form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormConstants {
    /// λ + (3 − 8ι³)/30, the weight of the u row.
    pub q: f64,
    /// α = (3ι³+2)²B/(6(10λ+ι³+9)).
    pub alpha: f64,
    /// α/B.
    pub alpha_bar: f64,
    /// Coefficient 𝓌 of the sound term: B⁰₂₂ carries 𝓌𝒸⁻²(1 + 1/f) and Bᶻ₁₂ carries 𝓌𝒸⁻¹(1 + 1/f).
    pub wave: f64,
}

impl FormConstants {
    /// The displayed form, with 𝓌 = 1/36.
    pub fn new(params: &ModelParams) -> Self {
        let (lam, i3) = (params.lambda, params.iota3);
        let alpha_bar = (3.0 * i3 + 2.0).powi(2) / (6.0 * (10.0 * lam + i3 + 9.0));
        Self { q: lam + (3.0 - 8.0 * i3) / 30.0, alpha: alpha_bar * params.b, alpha_bar, wave: 1.0 / 36.0 }
    }

    /// The form with 𝓌 = (2+ω)(1−ι³)/9, the homogeneous value of t²𝓰^{ζζ}/(1+f) in the wave equation for ϱ̂.
    pub fn consistent(params: &ModelParams) -> Self {
        Self { wave: (2.0 + params.omega) * (1.0 - params.iota3) / 9.0, ..Self::new(params) }
    }
}

/// All blocks of the Fuchsian system at one (τ, 𝒰).
#[derive(Debug, Clone, PartialEq)]
pub struct FuchsianEval {
    pub tau: f64,
    pub u: Vector5<f64>,
    pub b0: Matrix5<f64>,
    pub bz: Matrix5<f64>,
    pub frak_b: Matrix5<f64>,
    pub h: Vector5<f64>,
    pub f: Vector5<f64>,
    pub z: [f64; 8],
}

impl FuchsianEval {
    /// Σ|𝔷ℓ|.
    pub fn z_sum(&self) -> f64 {
        self.z.iter().map(|v| v.abs()).sum()
    }

    /// B⁰∂_τ𝒰 + Bᶻ∂_ζ𝒰 − 𝔅𝒰/τ − H − (−τ)^{−1/2}F.
    pub fn defect(&self, d_tau: &Vector5<f64>, d_zeta: &Vector5<f64>) -> Vector5<f64> {
        self.b0 * d_tau + self.bz * d_zeta - self.frak_b * self.u / self.tau - self.h - self.f / (-self.tau).sqrt()
    }

    /// Row-wise magnitude of the terms entering [`FuchsianEval::defect`].
    pub fn defect_scale(&self, d_tau: &Vector5<f64>, d_zeta: &Vector5<f64>) -> Vector5<f64> {
        let parts = [self.b0 * d_tau, self.bz * d_zeta, self.frak_b * self.u / self.tau, self.h, self.f / (-self.tau).sqrt()];
        Vector5::from_fn(|i, _| parts.iter().map(|p| p[i].abs()).fold(0.0, f64::max))
    }
}

/// The 𝔷-free constant part of 𝔅, times A.
pub fn frak_b_tilde(params: &ModelParams) -> Matrix5<f64> {
    frak_b_tilde_with(params, &FormConstants::new(params))
}

/// [`frak_b_tilde`] for the form constants `k`.
pub fn frak_b_tilde_with(params: &ModelParams, k: &FormConstants) -> Matrix5<f64> {
    let (lam, i3) = (params.lambda, params.iota3);
    let ci = 1.0 / params.c_scale;
    let s = 2.0 * (3.0 - 8.0 * i3) / 15.0;
    Matrix5::new(
        4.0 * lam,
        0.0,
        s - 4.0 * lam,
        0.0,
        0.0,
        0.0,
        k.wave * ci * ci,
        0.0,
        0.0,
        0.0,
        -s - 4.0 * lam,
        0.0,
        4.0 * lam + s,
        0.0,
        0.0,
        0.0,
        2.0 * (1.0 - i3) / 3.0,
        -2.0 * (1.0 - i3) / 5.0,
        4.0 * lam + 4.0,
        2.0 * i3,
        0.0,
        0.0,
        -k.alpha_bar,
        4.0 / 3.0,
        3.0 * k.alpha_bar,
    )
}

/// 𝔷₀,…,𝔷₇ at (background, 𝒰).
pub fn z_coefficients(bg: &Background, u: &Vector5<f64>, params: &ModelParams) -> Result<[f64; 8]> {
    z_coefficients_with(bg, u, params, &FormConstants::new(params))
}

/// [`z_coefficients`] for the form constants `k`.
pub fn z_coefficients_with(bg: &Background, u: &Vector5<f64>, params: &ModelParams, k: &FormConstants) -> Result<[f64; 8]> {
    let (u0, uz, uu, nu, psi) = (u[0], u[1], u[2], u[3], u[4]);
    let f = bg.f;
    let ff = f / (1.0 + f);
    let y = ff * uu;
    let d = 1.0 + y;
    if !(d > 0.0) {
        return Err(Error::Domain(format!("1 + f u/(1+f) = {d} is not positive")));
    }
    let w = params.omega;
    let c1 = 1.0 - params.iota3;
    let ci = 1.0 / params.c_scale;
    let s = bg.chi / params.b;
    let sg = 4.0 + bg.g_frak / params.b;

    let z0 = k.wave * ci * ci * (1.0 + 1.0 / f) * y * binom_tail_over(1.0 + w, y, 1) - sg * ci * ci / 9.0 * nu * nu;

    let x = y / d - u0 / d - ci / 3.0 * nu * uz / d - nu;
    let phi_over_y = y * binom_tail_over(w + 2.0, y, 2) - y;
    let mut z1 = 2.0 * s / 3.0 * x;
    let mut z2 = 2.0 * s * ci / 9.0 * nu - s * ci / 9.0 * nu * nu;
    let mut z3 = -2.0 * s / 3.0 * x * ff;
    let z4 = 2.0 * s / 3.0 * x * d;
    z2 -= 5.0 * (w + 2.0) * c1 * ci / 9.0 * uu * binom_tail_over(1.0 + w, y, 1);
    z2 -= (w + 1.0) * (w + 2.0) * c1 * ci * ci / (9.0 * ff) * d.powf(w) * uz;
    z2 -= 2.0 * params.iota3 * ci / 3.0 * psi;
    z2 -= 4.0 * s * ci * ci / 27.0 * nu * nu * uz / d;
    z2 -= 8.0 * s * ci / 9.0 * nu * (1.0 + u0) / d;
    z2 += 2.0 * s / 3.0 * x * ci / 3.0 * nu;
    z3 -= 2.0 * c1 / 3.0 * phi_over_y;
    z3 -= 2.0 / 3.0 * ff * uu;
    z1 -= 4.0 * s / (3.0 * d) * (u0 - y);
    z3 += 4.0 * s / (3.0 * d) * (u0 - y) * ff;

    let z5 = (2.0 + w) * c1 * ci / 3.0 * binom_tail_over(w, y, 1) * ff * uz + 2.0 * c1 / 3.0 * y * binom_tail_over(1.0 + w, y, 2);
    let z6 = sg / 3.0 * nu + sg / 3.0 * (3.0 * y / d - 3.0 * u0 / d - ci * nu * uz / d - 3.0 * nu);
    let z7 = sg / 3.0 * y;
    Ok([z0, z1, z2, z3, z4, z5, z6, z7])
}

/// Evaluates every block of the Fuchsian system at (background, 𝒰).
pub fn assemble_matrices(bg: &Background, u: &Vector5<f64>, params: &ModelParams) -> Result<FuchsianEval> {
    assemble_with(bg, u, params, &FormConstants::new(params))
}

/// [`assemble_matrices`] for the form constants `k`.
pub fn assemble_with(bg: &Background, u: &Vector5<f64>, params: &ModelParams, k: &FormConstants) -> Result<FuchsianEval> {
    let z = z_coefficients_with(bg, u, params, k)?;
    assemble_from_z(bg, u, params, k, z)
}

/// The blocks with every 𝔷ℓ set to zero, i.e. the system truncated to its 𝔷-free part.
pub fn assemble_without_z(bg: &Background, u: &Vector5<f64>, params: &ModelParams, k: &FormConstants) -> Result<FuchsianEval> {
    if !(1.0 + bg.f * u[2] / (1.0 + bg.f) > 0.0) {
        return Err(Error::Domain("1 + f u/(1+f) is not positive".into()));
    }
    assemble_from_z(bg, u, params, k, [0.0; 8])
}

fn assemble_from_z(bg: &Background, u: &Vector5<f64>, params: &ModelParams, k: &FormConstants, z: [f64; 8]) -> Result<FuchsianEval> {
    if !(bg.tau < 0.0) {
        return Err(Error::Domain(format!("tau must be negative, got {}", bg.tau)));
    }
    let (u0, uz, uu, nu, psi) = (u[0], u[1], u[2], u[3], u[4]);
    let (lam, i3, a, b) = (params.lambda, params.iota3, params.a_time, params.b);
    let (c, ci) = (params.c_scale, 1.0 / params.c_scale);
    let ws = k.wave * ci * ci;
    let f = bg.f;
    let sg = 4.0 + bg.g_frak / b;
    let d = 1.0 + f * uu / (1.0 + f);
    let xi1 = bg.xi * (1.0 + 1.0 / f);

    let b0_22 = (ws * (1.0 + 1.0 / f) + z[0]) / sg;
    let b0 = Matrix5::from_diagonal(&Vector5::new(1.0, b0_22, k.q, 1.0, 1.0));

    let m = c * (ws * (1.0 + 1.0 / f) + z[0]);
    let mut bz = Matrix5::zeros();
    bz[(0, 0)] = -2.0 * (bg.chi / b) * nu / 3.0;
    bz[(0, 1)] = m;
    bz[(1, 0)] = m;
    bz[(4, 4)] = -k.alpha_bar;
    bz /= a * bg.tau;

    let mut fb = frak_b_tilde_with(params, k);
    fb[(1, 1)] += z[0];
    fb[(0, 0)] += z[1];
    fb[(0, 1)] += z[2];
    fb[(0, 2)] += z[3];
    fb[(0, 3)] += z[4];
    fb[(3, 2)] += z[5];
    fb[(3, 3)] += z[6];
    fb[(4, 3)] += z[7];
    fb /= a;

    let gb = bg.g_frak / b;
    let h = Vector5::new(
        -bg.xi / a * (4.0 * lam + (lam - 1.0 / 6.0) * gb) * uu,
        -ws / a * xi1 * uz,
        k.q / a * xi1 * sg * (u0 - uu),
        -2.0 * (1.0 - i3) / (3.0 * a) * xi1 * d.powf(params.omega) * uz,
        -sg / (3.0 * a) * xi1 * d * nu - sg / a * xi1 * psi,
    );

    let st = bg.g_frak / (-bg.tau).sqrt();
    let fv = Vector5::new(
        -(lam - 1.0 / 6.0) / (a * b) * st * (u0 - uu),
        0.0,
        k.q / (a * b) * st * (u0 - uu),
        -(lam + 5.0 / 6.0) / (a * b) * st * nu,
        -st * nu / (3.0 * a * b),
    );

    Ok(FuchsianEval { tau: bg.tau, u: *u, b0, bz, frak_b: fb, h, f: fv, z })
}

/// 𝚚 of the lower-bound chain, direct form.
pub fn q_direct(lambda: f64, iota3: f64) -> f64 {
    let p = 3.0 * iota3 + 2.0;
    let l = 10.0 * lambda + iota3 + 9.0;
    p * p / (2.0 * l) - 25.0 * p.powi(4) / (216.0 * (3.0 - 13.0 * iota3) * l * l) - 35.0 * p / (36.0 * (13.0 * lambda + 12.0))
}

/// 𝚚 through its factored polynomial form.
pub fn q_factored(lambda: f64, iota3: f64) -> f64 {
    let x = iota3;
    let q1 = (13.0 * x - 3.0) * (351.0 * x + 59.0);
    let q2 = 63531.0 * x.powi(3) + 985062.0 * x * x - 40392.0 * x - 37576.0;
    let q3 = 9319.0 * x.powi(3) + 74103.0 * x * x - 1413.0 * x - 2759.0;
    let l = 10.0 * lambda + x + 9.0;
    -(3.0 * x + 2.0) * (120.0 * lambda * lambda * q1 + lambda * q2 + 6.0 * q3) / (216.0 * (13.0 * lambda + 12.0) * (3.0 - 13.0 * x) * l * l)
}

/// Intermediate lower estimate of 𝚚.
pub fn q_intermediate(lambda: f64, iota3: f64) -> f64 {
    let l = 10.0 * lambda + iota3 + 9.0;
    (775200.0 * lambda * lambda + 717959.0 * lambda + 2196.0) * (3.0 * iota3 + 2.0) / (27000.0 * (13.0 * lambda + 12.0) * (3.0 - 13.0 * iota3) * l * l)
}

/// The third candidate of γ₁ before halving, which 𝚚 must exceed.
pub fn q_floor(lambda: f64, iota3: f64) -> f64 {
    1.0 / (27.0 * (13.0 * lambda + 12.0) * (10.0 * lambda + iota3 + 9.0).powi(2))
}

/// Constants of the eigenvalue sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaConstants {
    pub candidates: [f64; 3],
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma1_hat: f64,
    pub gamma2_hat: f64,
    /// κ = γ₁/(Aγ̂₂).
    pub kappa: f64,
    pub gamma_bar1: f64,
    pub gamma_bar2: f64,
    /// Upper limit 2γ₁γ̂₁/(Aγ̂₂) for the τ⁻¹ coefficient of div B.
    pub beta1_budget: f64,
}

/// γ₁, γ₂ and their B⁰ counterparts for the range `g_range` of 𝔊.
pub fn gamma_constants(lambda: f64, iota3: f64, beta: f64, b: f64, a_time: f64, g_range: (f64, f64)) -> Result<GammaConstants> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if !(iota3 > 0.0 && iota3 <= IOTA3_MAX * (1.0 + 1e-12)) {
        return Err(Error::Iota3OutOfRange { iota3 });
    }
    let (g_min, g_max) = g_range;
    if !(4.0 + g_min / b > 0.0) {
        return Err(Error::Domain(format!("4 + G/B must stay positive; min G = {g_min}, B = {b}")));
    }
    let candidates = [8.0 * lambda / (5.0 * (3.0 + 800.0 * lambda)), 1.0 / 1500.0, q_floor(lambda, iota3)];
    let gamma1 = 0.5 * candidates.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma2 = (8.0 * lambda + 1.0 + gamma1).max(4.0 * lambda + 6.0 + gamma1);
    let gamma1_hat = (7.0f64 / 150.0).min((25.0 / 36.0 - gamma1) / (4.0 + g_max / b));
    let gamma2_hat = 1.0f64.max(lambda + 0.1).max((25.0 / 36.0 + 25.0 / (36.0 * beta) + gamma1) / (4.0 + g_min / b));
    Ok(GammaConstants {
        candidates,
        gamma1,
        gamma2,
        gamma1_hat,
        gamma2_hat,
        kappa: gamma1 / (a_time * gamma2_hat),
        gamma_bar1: gamma1_hat,
        gamma_bar2: gamma2 * gamma2_hat / gamma1,
        beta1_budget: 2.0 * gamma1 * gamma1_hat / (a_time * gamma2_hat),
    })
}

/// Smallest and largest 𝔊 over the tabulated range.
pub fn g_frak_range(maps: &TimeMaps) -> (f64, f64) {
    maps.g_frak.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

/// Maps a point of [0,1]^5 into the closed ball of radius `r`.
pub fn cube_to_ball(c: &[f64], r: f64) -> Vector5<f64> {
    let v = Vector5::from_fn(|i, _| 2.0 * c[i] - 1.0);
    let n2 = v.norm();
    if n2 == 0.0 {
        return v;
    }
    v * (v.amax() / n2) * r
}

fn sym(m: &Matrix5<f64>) -> Matrix5<f64> {
    (m + m.transpose()) * 0.5
}

fn eig_range(m: &Matrix5<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(*m).eigenvalues;
    (e.min(), e.max())
}

/// Controls of [`verify_conditions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckControls {
    /// Number of (τ, 𝒰) samples in the sandwich check.
    pub samples: usize,
    /// Offset into the Halton sequence.
    pub seed: u64,
    /// Ball radius; searched for when absent.
    pub r_tilde: Option<f64>,
    /// Number of τ values on which the ball search is run.
    pub search_taus: usize,
    /// Directions per τ in the ball search.
    pub search_dirs: usize,
}

impl Default for CheckControls {
    fn default() -> Self {
        Self { samples: 10_000, seed: 0, r_tilde: None, search_taus: 16, search_dirs: 64 }
    }
}

/// One sandwich sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigSample {
    pub tau: f64,
    pub b0_min: f64,
    pub b0_max: f64,
    /// Extreme eigenvalues of the symmetric part of 𝔅/κ.
    pub frak_min: f64,
    pub frak_max: f64,
    /// Smallest eigenvalue of sym(𝔅)/κ − B⁰.
    pub gap_min: f64,
    pub z_sum: f64,
}

impl EigSample {
    pub fn passes(&self, k: &GammaConstants) -> bool {
        self.b0_min >= k.gamma_bar1 && self.gap_min >= 0.0 && self.frak_max <= k.gamma_bar2
    }
}

/// Fitted τ-exponents of the labelled parts of div B near τ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivBOrders {
    /// Exponent of the τ⁻¹-labelled part (a)+(b)+(c); at least −1 expected.
    pub inverse_part: f64,
    /// Exponent of the (−τ)^{−1/2}-labelled part (d)+(e); at least −1/2 expected.
    pub sqrt_part: f64,
    /// Largest |τ|·‖(a)+(b)+(c)‖ in the reduced ball.
    pub beta1_estimate: f64,
    /// Radius of the ball in which the β₁ estimate was taken.
    pub radius: f64,
}

/// Verdict on one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub holds: bool,
    pub note: String,
}

/// Outcome of [`verify_conditions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub constants: GammaConstants,
    pub g_range: (f64, f64),
    pub r_tilde: f64,
    pub z_sum_max: f64,
    pub samples: usize,
    pub eig_samples: Vec<EigSample>,
    pub sandwich_ok: bool,
    pub witness: Option<EigSample>,
    pub divb: DivBOrders,
    /// max |𝔊|/√(−τ) on ladders of ratio 1/2 and 1/√2.
    pub g_over_sqrt_tau: (f64, f64),
    pub verdicts: Vec<Verdict>,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.holds)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

/// Geometric τ ladder −1, −r, −r², … down to `tau_end`.
pub fn tau_ladder(tau_end: f64, ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut v = 1.0;
    while v >= -tau_end {
        out.push(-v);
        v *= ratio;
    }
    out
}

fn sample_tau(maps: &TimeMaps, h: f64) -> f64 {
    -(maps.tau_end().abs().powf(h))
}

/// Largest sampled Σ|𝔷ℓ| on the sphere of radius `r`.
fn z_sum_on_sphere(bgs: &[Background], r: f64, dirs: usize, seed: u64, params: &ModelParams) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, bg) in bgs.iter().enumerate() {
        for k in 0..dirs {
            let c = halton((i * dirs + k) as u64, 5, seed);
            let v = Vector5::from_fn(|m, _| 2.0 * c[m] - 1.0);
            let n = v.norm();
            if n == 0.0 {
                continue;
            }
            let u = v * (r / n);
            let z = z_coefficients(bg, &u, params)?;
            worst = worst.max(z.iter().map(|x| x.abs()).sum());
        }
    }
    Ok(worst)
}

/// Largest radius (to 1% in log) with sampled Σ|𝔷ℓ| < γ₁.
pub fn search_r_tilde(maps: &TimeMaps, params: &ModelParams, gamma1: f64, controls: &CheckControls) -> Result<f64> {
    let bgs = (0..controls.search_taus.max(2))
        .map(|i| background_at_tau(maps, sample_tau(maps, i as f64 / (controls.search_taus.max(2) - 1) as f64)))
        .collect::<Result<Vec<_>>>()?;
    let ok = |r: f64| -> Result<bool> { Ok(z_sum_on_sphere(&bgs, r, controls.search_dirs, controls.seed, params)? < gamma1) };
    let mut hi = 0.5;
    let mut lo = hi;
    while !ok(lo)? {
        hi = lo;
        lo *= 0.1;
        if lo < 1e-14 {
            return Err(Error::Consistency("no ball radius keeps sum |z| below gamma1".into()));
        }
    }
    if lo == hi {
        return Ok(lo);
    }
    while (hi / lo).ln() > 0.01 {
        let mid = (lo * hi).sqrt();
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Directional derivative of B⁰ and Bᶻ along `v` at fixed τ.
fn du_blocks(bg: &Background, u: &Vector5<f64>, v: &Vector5<f64>, params: &ModelParams) -> Result<(Matrix5<f64>, Matrix5<f64>)> {
    let n = v.norm();
    if n == 0.0 {
        return Ok((Matrix5::zeros(), Matrix5::zeros()));
    }
    let h = 1e-4 / n;
    let p = assemble_matrices(bg, &(u + v * h), params)?;
    let m = assemble_matrices(bg, &(u - v * h), params)?;
    Ok(((p.b0 - m.b0) / (2.0 * h), (p.bz - m.bz) / (2.0 * h)))
}

/// Labelled parts of div B at (τ, 𝒰, 𝒲): (τ⁻¹ part, (−τ)^{−1/2} part, O(1) part).
pub fn div_b_parts(maps: &TimeMaps, tau: f64, u: &Vector5<f64>, w: &Vector5<f64>, params: &ModelParams) -> Result<(Matrix5<f64>, Matrix5<f64>, Matrix5<f64>)> {
    let bg = background_at_tau(maps, tau)?;
    let ev = assemble_matrices(&bg, u, params)?;
    let b0_inv = ev.b0.try_inverse().ok_or_else(|| Error::Consistency("B0 singular".into()))?;
    let dt = 1e-4 * tau.abs();
    let hi_tau = (tau + dt).min(maps.tau_end());
    let lo_tau = tau - dt;
    let dtau_b0 = (assemble_matrices(&background_at_tau(maps, hi_tau)?, u, params)?.b0
        - assemble_matrices(&background_at_tau(maps, lo_tau.max(-1.0))?, u, params)?.b0)
        / (hi_tau - lo_tau.max(-1.0));
    let apply = |v: Vector5<f64>| du_blocks(&bg, u, &(b0_inv * v), params).map(|x| x.0);
    let part_a = apply(-(ev.bz * w))?;
    let part_b = apply(ev.frak_b * u / tau)?;
    let part_c = du_blocks(&bg, u, w, params)?.1;
    let part_e = apply(ev.f / (-tau).sqrt())?;
    let part_h = apply(ev.h)?;
    Ok((part_a + part_b + part_c, dtau_b0 + part_e, part_h))
}

fn fitted_exponent(taus: &[f64], norms: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = taus.iter().zip(norms).filter(|(_, n)| **n > 0.0).map(|(t, n)| ((-t).ln(), n.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&x, &y).0
}

/// Fits the τ-scaling of the labelled div B parts over the last decade and
/// finds a sub-ball in which the τ⁻¹ coefficient fits the β₁ budget.
pub fn check_div_b(maps: &TimeMaps, params: &ModelParams, r: f64, budget: f64, seed: u64) -> Result<DivBOrders> {
    let tau_end = maps.tau_end();
    let taus: Vec<f64> = (0..=8).map(|k| tau_end * 10f64.powf(k as f64 / 8.0)).filter(|t| *t >= -1.0).collect();
    let dirs = 8;
    let mut inv_exp = f64::NEG_INFINITY;
    let mut sqrt_exp = f64::INFINITY;
    for k in 0..dirs {
        let u = cube_to_ball(&halton(k as u64, 5, seed), r);
        let w = cube_to_ball(&halton(k as u64, 5, seed + 7919), r);
        let mut inv = Vec::new();
        let mut sq = Vec::new();
        for &tau in &taus {
            let (a, d, _) = div_b_parts(maps, tau, &u, &w, params)?;
            inv.push(a.norm());
            sq.push(d.norm());
        }
        inv_exp = inv_exp.max(fitted_exponent(&taus, &inv));
        sqrt_exp = sqrt_exp.min(fitted_exponent(&taus, &sq));
    }
    let all_taus = tau_ladder(tau_end, 0.5);
    let beta1_at = |radius: f64| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..dirs {
            let u = cube_to_ball(&halton(k as u64, 5, seed), radius);
            let w = cube_to_ball(&halton(k as u64, 5, seed + 7919), radius);
            for &tau in &all_taus {
                let (a, _, _) = div_b_parts(maps, tau, &u, &w, params)?;
                worst = worst.max(tau.abs() * a.norm());
            }
        }
        Ok(worst)
    };
    let mut radius = r;
    let mut beta1 = beta1_at(radius)?;
    while beta1 >= budget && radius > r * 1e-8 {
        radius *= 0.1;
        beta1 = beta1_at(radius)?;
    }
    Ok(DivBOrders { inverse_part: inv_exp, sqrt_part: sqrt_exp, beta1_estimate: beta1, radius })
}

/// max |𝔊|/√(−τ) over a geometric ladder of ratio `ratio`.
pub fn g_over_sqrt_tau(maps: &TimeMaps, ratio: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for tau in tau_ladder(maps.tau_end(), ratio) {
        let bg = background_at_tau(maps, tau)?;
        worst = worst.max(bg.g_frak.abs() / (-tau).sqrt());
    }
    Ok(worst)
}

/// Runs the numerical checks of F1–F7 over a trajectory's τ range.
pub fn verify_conditions(maps: &TimeMaps, params: &ModelParams, controls: &CheckControls) -> Result<ConditionReport> {
    let g_range = g_frak_range(maps);
    let k = gamma_constants(params.lambda, params.iota3, params.beta, params.b, params.a_time, g_range)?;
    let r_tilde = match controls.r_tilde {
        Some(r) if r > 0.0 => r,
        Some(r) => return Err(Error::Domain(format!("ball radius must be positive, got {r}"))),
        None => search_r_tilde(maps, params, k.gamma1, controls)?,
    };

    let mut eig_samples = Vec::with_capacity(controls.samples);
    let mut witness = None;
    let mut z_sum_max: f64 = 0.0;
    let mut symmetric = true;
    let mut finite = true;
    for i in 0..controls.samples {
        let c = halton(i as u64, 6, controls.seed);
        let tau = sample_tau(maps, c[0]);
        let bg = background_at_tau(maps, tau)?;
        let u = cube_to_ball(&c[1..], r_tilde);
        let ev = assemble_matrices(&bg, &u, params)?;
        symmetric &= ev.b0 == ev.b0.transpose() && ev.bz == ev.bz.transpose();
        finite &= ev.b0.iter().chain(ev.frak_b.iter()).chain((ev.bz * tau).iter()).all(|v| v.is_finite());
        let (b0_min, b0_max) = eig_range(&ev.b0);
        let fk = sym(&ev.frak_b) / k.kappa;
        let (frak_min, frak_max) = eig_range(&fk);
        let (gap_min, _) = eig_range(&(fk - ev.b0));
        let s = EigSample { tau, b0_min, b0_max, frak_min, frak_max, gap_min, z_sum: ev.z_sum() };
        z_sum_max = z_sum_max.max(s.z_sum);
        if witness.is_none() && !s.passes(&k) {
            witness = Some(s);
        }
        eig_samples.push(s);
    }
    let sandwich_ok = witness.is_none() && !eig_samples.is_empty();

    let ladder = tau_ladder(maps.tau_end(), 0.5);
    let mut zero_ok = true;
    let mut tau_bz_max: f64 = 0.0;
    for &tau in &ladder {
        let bg = background_at_tau(maps, tau)?;
        let ev = assemble_matrices(&bg, &Vector5::zeros(), params)?;
        zero_ok &= ev.h.iter().all(|v| *v == 0.0) && ev.f.iter().all(|v| *v == 0.0) && ev.z.iter().all(|v| *v == 0.0);
        tau_bz_max = tau_bz_max.max((ev.bz * tau).amax());
    }

    let divb = check_div_b(maps, params, r_tilde, k.beta1_budget, controls.seed)?;
    let gs = (g_over_sqrt_tau(maps, 0.5)?, g_over_sqrt_tau(maps, std::f64::consts::FRAC_1_SQRT_2)?);
    let g_stable = gs.0.is_finite() && gs.1.is_finite() && (gs.0 - gs.1).abs() <= 0.1 * gs.0.max(gs.1);

    let orders_ok = divb.inverse_part >= -1.1 && divb.sqrt_part >= -0.6;
    let verdicts = vec![
        Verdict { name: "F1".into(), holds: true, note: "P = identity: constant symmetric projection by construction".into() },
        Verdict {
            name: "F2".into(),
            holds: zero_ok && g_stable,
            note: format!("H(tau,0) = F(tau,0) = 0 on the ladder: {zero_ok}; max |G|/sqrt(-tau) = {:.4e} (ratio 1/2), {:.4e} (ratio 1/sqrt2)", gs.0, gs.1),
        },
        Verdict {
            name: "F3".into(),
            holds: symmetric && finite && tau_bz_max.is_finite(),
            note: format!("B0, Bz symmetric: {symmetric}; blocks finite: {finite}; max |tau Bz| = {tau_bz_max:.4e}"),
        },
        Verdict {
            name: "F4".into(),
            holds: zero_ok && z_sum_max < k.gamma1,
            note: format!("z_l(tau,0) = 0; max sum |z_l| = {z_sum_max:.4e} < gamma1 = {:.4e} in ball R = {r_tilde:.4e}", k.gamma1),
        },
        Verdict { name: "F5".into(), holds: sandwich_ok, note: format!("eigenvalue sandwich over {} samples", eig_samples.len()) },
        Verdict { name: "F6".into(), holds: true, note: "P-perp = 0: off-diagonal projection blocks vanish".into() },
        Verdict {
            name: "F7".into(),
            holds: orders_ok && divb.beta1_estimate < k.beta1_budget,
            note: format!(
                "only the P div B P form applies; tau^-1 part exponent {:.3}, (-tau)^-1/2 part exponent {:.3}; beta1 {:.3e} < budget {:.3e} in ball {:.3e}",
                divb.inverse_part, divb.sqrt_part, divb.beta1_estimate, k.beta1_budget, divb.radius
            ),
        },
    ];
    Ok(ConditionReport {
        constants: k,
        g_range,
        r_tilde,
        z_sum_max,
        samples: eig_samples.len(),
        eig_samples,
        sandwich_ok,
        witness,
        divb,
        g_over_sqrt_tau: gs,
        verdicts,
    })
}

/// Result of checking a PDE run against the Fuchsian system at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceSample {
    pub t: f64,
    pub tau: f64,
    pub n: usize,
    pub dt: f64,
    /// Row-wise max-norm of the defect over the grid.
    pub defect: [f64; 5],
    /// Row-wise max-norm of the individual terms.
    pub scale: [f64; 5],
    /// Same defect with every 𝔷ℓ set to zero.
    pub defect_without_z: [f64; 5],
}

impl EquivalenceSample {
    pub fn max_defect(&self) -> f64 {
        self.defect.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_relative(&self) -> f64 {
        (0..5).map(|i| self.defect[i] / self.scale[i].max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
    }
}

/// Evaluates the Fuchsian defect on five snapshots t_c + k·dt, k = −2..2, with
/// fourth-order differences in t and ζ.
pub fn equivalence_defect(snapshots: &[FieldState], maps: &TimeMaps, params: &ModelParams, k: &FormConstants) -> Result<EquivalenceSample> {
    if snapshots.len() != 5 {
        return Err(Error::Domain(format!("need 5 equally spaced snapshots, got {}", snapshots.len())));
    }
    let dt = snapshots[2].t - snapshots[1].t;
    let fields = snapshots.iter().map(|s| fuchsian_fields(s, maps, params)).collect::<Result<Vec<_>>>()?;
    let centre = &fields[2];
    let bg = background_at(maps, centre.t)?;
    let dtau_dt = -maps.dg_at(centre.t)?;
    let dz = centre.d_zeta();
    let mut defect = [0.0f64; 5];
    let mut scale = [0.0f64; 5];
    let mut defect_without_z = [0.0f64; 5];
    for j in 0..centre.len() {
        let d_t = (fields[0].point(j) - fields[1].point(j) * 8.0 + fields[3].point(j) * 8.0 - fields[4].point(j)) / (12.0 * dt);
        let d_tau = d_t / dtau_dt;
        let ev = assemble_with(&bg, &centre.point(j), params, k)?;
        let bare = assemble_without_z(&bg, &centre.point(j), params, k)?;
        let r = ev.defect(&d_tau, &dz[j]);
        let s = ev.defect_scale(&d_tau, &dz[j]);
        let r0 = bare.defect(&d_tau, &dz[j]);
        for i in 0..5 {
            defect[i] = defect[i].max(r[i].abs());
            scale[i] = scale[i].max(s[i]);
            defect_without_z[i] = defect_without_z[i].max(r0[i].abs());
        }
    }
    Ok(EquivalenceSample { t: centre.t, tau: centre.tau, n: centre.len(), dt, defect, scale, defect_without_z })
}

/// Snapshot times t_c + k·dt, k = −2..2.
pub fn stencil_times(t_centre: f64, dt: f64) -> Vec<f64> {
    (-2..=2).map(|k| t_centre + k as f64 * dt).collect()
}

/// Runs the PDE to the stencil around `t_centre` and evaluates the defect.
pub fn equivalence_from_run(
    state: FieldState,
    traj: &OdeTrajectory,
    maps: &TimeMaps,
    params: &ModelParams,
    t_centre: f64,
    dt: f64,
    controls: &crate::pde::EvolveControls,
    k: &FormConstants,
) -> Result<EquivalenceSample> {
    let times = stencil_times(t_centre, dt);
    let ctl = crate::pde::EvolveControls { t_end: Some(times[4]), snapshot_times: times.clone(), f_stop: traj.f_end(), ..controls.clone() };
    let evo = crate::pde::evolve(state, traj, params, &ctl)?.into_result()?;
    if evo.snapshots.len() != 5 {
        return Err(Error::Consistency(format!("expected 5 snapshots, got {}", evo.snapshots.len())));
    }
    equivalence_defect(&evo.snapshots, maps, params, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate_contrast, ToleranceSpec};
    use crate::params::{build_params, ParamsInput};
    use crate::pde::{init_from_profile, DataProfile, EvolveControls};
    use crate::timemap::build_time_maps;
    use proptest::prelude::*;

    fn setup() -> (ModelParams, TimeMaps) {
        let p = build_params(&ParamsInput::default()).unwrap();
        let tr = integrate_contrast(&p, 1e6, &ToleranceSpec::default()).unwrap();
        let maps = build_time_maps(&tr, &p).unwrap();
        (p, maps)
    }

    #[test]
    fn gamma_constants_match_closed_forms() {
        let k = gamma_constants(0.1, 0.2, 0.1, 1.0, 1.0, (0.0, 0.0)).unwrap();
        assert!((k.candidates[0] - 0.8 / 415.0).abs() < 1e-15);
        assert!((k.candidates[1] - 1.0 / 1500.0).abs() < 1e-18);
        assert!((k.candidates[2] - 1.0 / (27.0 * 13.3 * 10.2 * 10.2)).abs() < 1e-15);
        assert!((k.gamma1 - 1.3383e-5).abs() < 1e-9);
        assert!((k.gamma2 - 6.40001).abs() < 1e-5);
        assert!((k.gamma2 - (6.4 + k.gamma1)).abs() < 1e-15);
    }

    #[test]
    fn gamma_range_rejected_below_vacuum_bound() {
        assert!(gamma_constants(0.1, 0.2, 0.1, 1.0, 1.0, (-4.0, 0.0)).is_err());
        assert!(gamma_constants(0.1, 0.3, 0.1, 1.0, 1.0, (0.0, 0.0)).is_err());
    }

    #[test]
    fn q_forms_agree_and_exceed_floor() {
        for (lam, i3) in [(0.1, 0.2), (0.01, 0.05), (3.0, 0.15), (0.5, 0.2)] {
            let a = q_direct(lam, i3);
            let b = q_factored(lam, i3);
            assert!((a - b).abs() < 1e-12 * a.abs().max(1e-3), "{a} vs {b}");
            assert!(a >= q_intermediate(lam, i3) * (1.0 - 1e-12));
            assert!(q_intermediate(lam, i3) > q_floor(lam, i3));
        }
        assert!((q_direct(0.1, 0.2) - 0.014221).abs() < 1e-5);
    }

    #[test]
    fn zero_field_blocks() {
        let (p, maps) = setup();
        for tau in [-1.0, -0.3, maps.tau_end()] {
            let bg = background_at_tau(&maps, tau).unwrap();
            let ev = assemble_matrices(&bg, &Vector5::zeros(), &p).unwrap();
            assert!(ev.z.iter().all(|z| *z == 0.0));
            assert!(ev.h.iter().all(|v| *v == 0.0));
            assert!(ev.f.iter().all(|v| *v == 0.0));
            let expect = (25.0 / 36.0) * (1.0 + 1.0 / bg.f) / (4.0 + bg.g_frak / p.b);
            assert!((ev.b0[(1, 1)] - expect).abs() < 1e-15);
            assert_eq!(ev.bz, ev.bz.transpose());
        }
    }

    #[test]
    fn frak_b_entry_at_defaults() {
        let p = build_params(&ParamsInput::default()).unwrap();
        let m = frak_b_tilde(&p) / p.a_time;
        assert!((m[(2, 2)] - (0.4 + 0.18 + 2.0 / 3.0 * 0.01)).abs() < 1e-9 || (m[(2, 2)] - 0.58667).abs() < 1e-4);
        assert!((m[(2, 2)] - (4.0 * 0.1 + 2.0 * (3.0 - 1.6) / 15.0)).abs() < 1e-12);
    }

    #[test]
    fn tilde_frak_b_has_room_for_gamma1() {
        let p = build_params(&ParamsInput::default()).unwrap();
        let k = gamma_constants(p.lambda, p.iota3, p.beta, p.b, p.a_time, (0.0, 0.0)).unwrap();
        let (lo, hi) = eig_range(&sym(&(frak_b_tilde(&p) / p.a_time)));
        assert!(lo > 2.0 * k.gamma1 / p.a_time, "{lo}");
        assert!(hi < k.gamma2 / p.a_time);
    }

    #[test]
    fn z_terms_reproduce_row_remainders() {
        let (p, maps) = setup();
        let bg = background_at_tau(&maps, -0.4).unwrap();
        let u = Vector5::new(0.03, -0.02, 0.05, 0.01, 0.015);
        let z = z_coefficients(&bg, &u, &p).unwrap();
        let (u0, uz, uu, nu) = (u[0], u[1], u[2], u[3]);
        let f = bg.f;
        let y = f * uu / (1.0 + f);
        let d = 1.0 + y;
        let w = p.omega;
        let s = bg.chi / p.b;
        let ci = 5.0;
        let c1 = 1.0 - p.iota3;
        let tau = bg.tau;
        let g = bg.g;
        let paren = y / d - u0 / d - ci / 3.0 * nu * uz / d - nu;
        let f2 = -2.0 * s / (9.0 * g) * ci * nu * uz
            + s / (9.0 * g) * ci * nu * nu * uz
            + 5.0 * (w + 2.0) * c1 * (1.0 + f) / (9.0 * f * g) * ci * (d.powf(1.0 + w) - 1.0) * uz
            + (w + 1.0) * (w + 2.0) * c1 / (9.0 * f * g) * d.powf(w) * ci * ci * (1.0 + f) * uz * uz
            + 2.0 * p.iota3 / (3.0 * g) * ci * uz * u[4]
            + 4.0 * s * ci * ci * nu * nu * uz * uz / (27.0 * g * d)
            + 8.0 * s * ci * nu * uz * (1.0 + u0) / (9.0 * g * d)
            + 2.0 * s / (3.0 * g) * d * paren * paren
            + 2.0 * c1 * (1.0 + f) / (3.0 * f * g) * (d.powf(w + 2.0) * (1.0 - d.powf(-w)) - w * y)
            + 2.0 / (3.0 * (1.0 + f) * g) * f * uu * uu
            + 4.0 * s / (3.0 * g * d) * (u0 - y).powi(2);
        let row0 = (z[1] * u0 + z[2] * uz + z[3] * uu + z[4] * nu) / tau;
        assert!((row0 - f2).abs() < 1e-12 * f2.abs().max(1e-3), "{row0} vs {f2}");
        let sg = 4.0 + bg.g_frak / p.b;
        let row3 = (2.0 + w) * c1 / 3.0 * ci * (d.powf(w) - 1.0) * uz
            + 2.0 * c1 * (1.0 + f) / (3.0 * f) * (d.powf(1.0 + w) - 1.0 - (1.0 + w) * y)
            + sg / 3.0 * nu * nu
            + sg / 3.0 * nu * (3.0 * f * uu / (1.0 + f + f * uu) - 3.0 * u0 / d - ci * nu * uz / d - 3.0 * nu);
        assert!((z[5] * uu + z[6] * nu - row3).abs() < 1e-13);
        assert!((z[7] * nu - sg / 3.0 * y * nu).abs() < 1e-15);
        let z0 = 25.0 / 36.0 * (1.0 + 1.0 / f) * (d.powf(-0.6) - 1.0) - 25.0 * sg / 9.0 * nu * nu;
        assert!((z[0] - z0).abs() < 1e-14);
    }

    #[test]
    fn zero_sum_shrinks_with_radius() {
        let (p, maps) = setup();
        let bgs: Vec<_> = [-1.0, -0.2, maps.tau_end()].iter().map(|&t| background_at_tau(&maps, t).unwrap()).collect();
        let mut prev = f64::INFINITY;
        let mut sums = Vec::new();
        for r in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let s = z_sum_on_sphere(&bgs, r, 32, 0, &p).unwrap();
            assert!(s < prev);
            prev = s;
            sums.push(s);
        }
        let ratio = sums[3] / sums[4];
        assert!((ratio - 10.0).abs() < 0.1, "{sums:?}");
    }

    #[test]
    fn fields_of_homogeneous_state_vanish() {
        let (p, maps) = setup();
        let tr = maps.trajectory();
        let s = init_from_profile(&p, tr, &DataProfile::homogeneous(), 32).unwrap();
        let ff = fuchsian_fields(&s, &maps, &p).unwrap();
        for j in 0..32 {
            assert!(ff.point(j).amax() < 1e-15);
        }
        assert_eq!(ff.tau, -1.0);
    }

    #[test]
    fn fields_identities() {
        let (p, maps) = setup();
        let tr = maps.trajectory();
        let n = 128;
        let s = init_from_profile(&p, tr, &DataProfile::cosine(0.05), n).unwrap();
        let evo = crate::pde::evolve(s, tr, &p, &EvolveControls { t_end: Some(1.5), f_stop: 1e3, ..Default::default() }).unwrap();
        let st = &evo.final_state;
        let ff = fuchsian_fields(st, &maps, &p).unwrap();
        let (f, _) = tr.state_at(st.t).unwrap();
        let mut du = vec![0.0; n];
        d1_periodic(&ff.u, 1.0 / n as f64, &mut du);
        let umax = ff.u.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for j in 0..n {
            assert!((ff.u_zeta[j] - p.c_scale * f / (1.0 + f) * du[j]).abs() < 1e-12);
            assert!(ff.psi[j].abs() <= umax / 3.0 + 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gamma_ordering(lam in 1e-3f64..10.0, i3 in 1e-3f64..0.2) {
            let k = gamma_constants(lam, i3, 0.1, 1.0, 1.0, (0.0, 0.0)).unwrap();
            prop_assert!(k.gamma1 > 0.0 && k.gamma2 > k.gamma1);
            prop_assert!(q_direct(lam, i3) > q_floor(lam, i3));
        }

        #[test]
        fn blocks_symmetric(c in prop::collection::vec(0.0f64..1.0, 5), tau in 0.05f64..1.0) {
            let p = build_params(&ParamsInput::default()).unwrap();
            let bg = Background { t: 1.5, tau: -tau, f: 3.0, f0: 4.0, g: tau, chi: 4.1 * p.b, g_frak: 0.1 * p.b, xi: 1.0 / (tau * 4.0) };
            let ev = assemble_matrices(&bg, &cube_to_ball(&c, 0.1), &p).unwrap();
            prop_assert_eq!(ev.b0, ev.b0.transpose());
            prop_assert_eq!(ev.bz, ev.bz.transpose());
        }

        #[test]
        fn cube_map_stays_in_ball(c in prop::collection::vec(0.0f64..1.0, 5), r in 1e-8f64..1.0) {
            prop_assert!(cube_to_ball(&c, r).norm() <= r * (1.0 + 1e-12));
        }
    }
}
