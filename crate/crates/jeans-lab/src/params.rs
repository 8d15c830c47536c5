//! Model constants: the equation-of-state root ι, the contrast-ODE data and the
//! Fuchsian parameters, with their validity ranges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::bisect;

/// Upper end of the ι³ range covered by the stability theorem.
pub const IOTA3_MAX: f64 = 0.2;

/// Residual of the cubic ι³ + 9(K̃/6)^{1/3} ι − 1.
pub fn iota_residual(k_tilde: f64, iota: f64) -> f64 {
    iota.powi(3) + 9.0 * (k_tilde / 6.0).cbrt() * iota - 1.0
}

/// Root ι ∈ (0,1) of ι³ + 9(K̃/6)^{1/3} ι − 1 = 0.
///
/// Bisection on the bracket (0,1) followed by Newton polishing.
pub fn solve_iota(k_tilde: f64) -> Result<f64> {
    if !(k_tilde > 0.0) || !k_tilde.is_finite() {
        return Err(Error::Domain(format!("k_tilde must be positive, got {k_tilde}")));
    }
    let p = 9.0 * (k_tilde / 6.0).cbrt();
    let h = |x: f64| x * x * x + p * x - 1.0;
    let mut x = bisect(h, 0.0, 1.0, 1e-15)?;
    for _ in 0..3 {
        let dh = 3.0 * x * x + p;
        let step = h(x) / dh;
        x -= step;
        if step.abs() < 1e-17 {
            break;
        }
    }
    Ok(x)
}

/// Cardano radical form of ι, used only as a cross-check.
pub fn iota_radical(k_tilde: f64) -> f64 {
    let s = 0.5 * (1.0 + 18.0 * k_tilde).sqrt();
    (s + 0.5).cbrt() - (s - 0.5).cbrt()
}

/// K̃ = 6((1 − ι³)/(9ι))³, the inverse of [`solve_iota`].
pub fn k_from_iota(iota: f64) -> Result<f64> {
    if !(iota > 0.0 && iota <= 1.0) {
        return Err(Error::Domain(format!("iota must lie in (0,1], got {iota}")));
    }
    Ok(6.0 * ((1.0 - iota.powi(3)) / (9.0 * iota)).powi(3))
}

/// User-facing parameter choices from which [`ModelParams`] is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsInput {
    pub k_tilde: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub a_time: f64,
    /// Accept ι³ > 1/5; results are then marked non-certified.
    pub force: bool,
}

impl Default for ParamsInput {
    fn default() -> Self {
        Self { k_tilde: k_from_iota(IOTA3_MAX.cbrt()).expect("valid iota"), beta: 0.1, gamma: 0.5, lambda: 0.1, a_time: 1.0, force: false }
    }
}

impl ParamsInput {
    /// Replaces `k_tilde` by the value giving the requested ι³.
    pub fn with_iota3(mut self, iota3: f64) -> Result<Self> {
        if !(iota3 > 0.0 && iota3 < 1.0) {
            return Err(Error::Domain(format!("iota3 must lie in (0,1), got {iota3}")));
        }
        self.k_tilde = k_from_iota(iota3.cbrt())?;
        Ok(self)
    }
}

/// All constants of the model, validated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub k_tilde: f64,
    /// Pressure constant K with K̃ = K³/π.
    pub k_eos: f64,
    pub iota: f64,
    pub iota3: f64,
    pub beta: f64,
    pub gamma: f64,
    pub beta0: f64,
    pub t0: f64,
    /// The data constant B = (1+β)^{1/3}/(3γ).
    pub b: f64,
    pub omega: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub c_scale: f64,
    pub a_time: f64,
    pub ode_a: f64,
    pub ode_b: f64,
    pub ode_c: f64,
    /// False when the ι³ range check was bypassed.
    pub certified: bool,
}

/// Validates `input` and derives every model constant.
pub fn build_params(input: &ParamsInput) -> Result<ModelParams> {
    let ParamsInput { k_tilde, beta, gamma, lambda, a_time, force } = *input;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if !(a_time > 0.0 && a_time < 2.0) {
        return Err(Error::Domain(format!("A must lie in (0,2) for the eta_theta limits of the compactified time, got {a_time}")));
    }
    let iota = solve_iota(k_tilde)?;
    let iota3 = iota.powi(3);
    if iota3 > IOTA3_MAX * (1.0 + 1e-12) && !force {
        return Err(Error::Iota3OutOfRange { iota3 });
    }
    let params = ModelParams {
        k_tilde,
        k_eos: (std::f64::consts::PI * k_tilde).cbrt(),
        iota,
        iota3,
        beta,
        gamma,
        beta0: 3.0 * (1.0 + beta) * gamma,
        t0: 1.0,
        b: (1.0 + beta).cbrt() / (3.0 * gamma),
        omega: -8.0 / 5.0,
        kappa: 7.0 / 6.0 + lambda,
        lambda,
        c_scale: 0.2,
        a_time,
        ode_a: 4.0 / 3.0,
        ode_b: 2.0 / 3.0,
        ode_c: 4.0 / 3.0,
        certified: iota3 <= IOTA3_MAX * (1.0 + 1e-12),
    };
    params.check_invariants()?;
    Ok(params)
}

impl ModelParams {
    /// Re-checks the invariants of a populated parameter set.
    pub fn check_invariants(&self) -> Result<()> {
        let res = iota_residual(self.k_tilde, self.iota);
        if res.abs() >= 1e-12 {
            return Err(Error::Consistency(format!("iota cubic residual {res:e}")));
        }
        if !(self.iota > 0.0 && self.iota < 1.0) {
            return Err(Error::Consistency(format!("iota = {} outside (0,1)", self.iota)));
        }
        if !(self.kappa > 7.0 / 6.0) {
            return Err(Error::Consistency(format!("kappa = {} not above 7/6", self.kappa)));
        }
        Ok(())
    }

    /// ā = 1 − a of the contrast ODE.
    pub fn a_bar(&self) -> f64 {
        1.0 - self.ode_a
    }

    /// c̄ = 1 − c of the contrast ODE.
    pub fn c_bar(&self) -> f64 {
        1.0 - self.ode_c
    }

    /// △ = √((1−a)² + 4b).
    pub fn delta(&self) -> f64 {
        (self.a_bar().powi(2) + 4.0 * self.ode_b).sqrt()
    }

    /// Limit 2bB/(3 − 2c) of χ at the blowup time (= 4B here).
    pub fn chi_limit(&self) -> f64 {
        2.0 * self.ode_b * self.b / (3.0 - 2.0 * self.ode_c)
    }

    /// Wave-speed constant (2+ω)(1−ι³).
    pub fn sound_factor(&self) -> f64 {
        (2.0 + self.omega) * (1.0 - self.iota3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iota_tends_to_one_for_small_k() {
        let iota = solve_iota(1e-12).unwrap();
        assert!((iota - 1.0).abs() < 1e-3);
    }

    #[test]
    fn iota_fifth_root_case() {
        let target = 0.2f64.cbrt();
        let oracle_k = bisect(|k| solve_iota(k).unwrap() - target, 1e-6, 1.0, 1e-15).unwrap();
        let k = k_from_iota(target).unwrap();
        assert!((k - oracle_k).abs() < 1e-10);
        assert!((k - 0.0211).abs() < 5e-5);
        assert!((solve_iota(k).unwrap() - target).abs() < 1e-12);
        assert!((target - 0.58480).abs() < 1e-5);
    }

    #[test]
    fn k_from_iota_at_one_is_zero() {
        assert_eq!(k_from_iota(1.0).unwrap(), 0.0);
        assert!(k_from_iota(0.0).is_err());
        assert!(k_from_iota(1.5).is_err());
    }

    #[test]
    fn radical_form_agrees() {
        for &k in &[1e-4, 1e-2, 0.5, 3.0, 10.0] {
            assert!((solve_iota(k).unwrap() - iota_radical(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn nonpositive_k_rejected() {
        assert!(solve_iota(0.0).is_err());
        assert!(solve_iota(-1.0).is_err());
    }

    #[test]
    fn default_params_match_worked_example() {
        let p = build_params(&ParamsInput::default()).unwrap();
        assert!((p.iota3 - 0.2).abs() < 1e-12);
        assert!((p.beta0 - 1.65).abs() < 1e-14);
        let b_oracle = 1.1f64.powf(1.0 / 3.0) / 1.5;
        assert!((p.b - b_oracle).abs() < 1e-15);
        assert!((p.b - 0.68819).abs() < 1e-5);
        assert!((p.chi_limit() - 4.0 * p.b).abs() < 1e-14);
        assert!((p.delta() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let base = ParamsInput::default();
        assert!(build_params(&ParamsInput { beta: 0.0, gamma: 0.0, ..base }).is_err());
        assert!(build_params(&ParamsInput { lambda: 0.0, ..base }).is_err());
        assert!(build_params(&ParamsInput { a_time: 2.0, ..base }).is_err());
        let stiff = ParamsInput { k_tilde: 1e-4, ..base };
        assert!(matches!(build_params(&stiff), Err(Error::Iota3OutOfRange { .. })));
        let forced = build_params(&ParamsInput { force: true, ..stiff }).unwrap();
        assert!(!forced.certified);
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_params(&ParamsInput::default()).unwrap();
        let b = build_params(&ParamsInput::default()).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    proptest! {
        #[test]
        fn iota_residual_small_and_round_trip(logk in -8.0f64..1.0) {
            let k = 10f64.powf(logk);
            let iota = solve_iota(k).unwrap();
            prop_assert!(iota_residual(k, iota).abs() < 1e-12);
            let back = solve_iota(k_from_iota(iota).unwrap()).unwrap();
            prop_assert!((back - iota).abs() < 1e-10);
        }

        #[test]
        fn iota_strictly_decreasing(logk in -8.0f64..1.0, step in 1e-3f64..1.0) {
            let k1 = 10f64.powf(logk);
            let k2 = k1 * (1.0 + step);
            prop_assert!(solve_iota(k1).unwrap() > solve_iota(k2).unwrap());
        }

        #[test]
        fn accepted_params_satisfy_invariants(
            iota3 in 0.01f64..0.2, beta in 0.01f64..1.0, gamma in 0.01f64..1.0,
            lambda in 0.01f64..5.0, a in 0.1f64..1.9,
        ) {
            let input = ParamsInput { beta, gamma, lambda, a_time: a, ..ParamsInput::default() }
                .with_iota3(iota3).unwrap();
            let p = build_params(&input).unwrap();
            prop_assert!(iota_residual(p.k_tilde, p.iota).abs() < 1e-12);
            prop_assert_eq!(p.beta0, 3.0 * (1.0 + beta) * gamma);
            prop_assert_eq!(p.b, (1.0 + beta).cbrt() / (3.0 * gamma));
            prop_assert!(p.kappa > 7.0 / 6.0);
        }
    }
}
