use jeans_lab::ode::{blowup_bracket, bound_certificates, integrate_contrast, ToleranceSpec};
use jeans_lab::reference::{family_residual, sample_points, Family};
use jeans_lab::timemap::build_time_maps;
use jeans_lab::{build_params, ParamsInput};

#[test]
fn blowup_time_sits_inside_the_bracket() {
    let p = build_params(&ParamsInput::default()).unwrap();
    let mut tr = integrate_contrast(&p, 1e6, &ToleranceSpec::default()).unwrap();
    let est = tr.attach_blowup_estimate().unwrap();
    let br = blowup_bracket(&p).unwrap();
    assert!(est.t_m >= br.t_star);
    assert!(est.t_m < br.t_star_upper.unwrap());
    assert!(est.spread_rel < 1e-3);
    assert!(bound_certificates(&tr, &p).unwrap().all_ok());
}

#[test]
fn residuals_of_both_families_along_a_trajectory() {
    let p = build_params(&ParamsInput::default()).unwrap();
    let tr = integrate_contrast(&p, 1e4, &ToleranceSpec::default()).unwrap();
    let pts = sample_points(16);
    for t in [1.2, 1.5, 2.0] {
        assert!(family_residual(Family::Background, t, &pts, &p, 1e-3).unwrap().passes());
        assert!(family_residual(Family::Homogeneous(&tr), t, &pts, &p, 1e-3).unwrap().passes());
    }
}

#[test]
fn compactified_time_approaches_its_limits() {
    let p = build_params(&ParamsInput::default()).unwrap();
    let tr = integrate_contrast(&p, 1e6, &ToleranceSpec::default()).unwrap();
    let maps = build_time_maps(&tr, &p).unwrap();
    assert!(maps.check_identities(&p).unwrap().max() < 1e-4);
    let term = maps.terminal_window().unwrap();
    assert!(term.chi_rel_dev < 0.05);
    assert!(term.xi_max < 1e-2);
    let decay = maps.check_g_decay(&p).unwrap();
    assert!(decay.slope >= 0.4);
    assert!(maps.tau.windows(2).all(|w| w[1] > w[0]));
}
