use jeans_lab::fuchsian::{equivalence_from_run, verify_conditions, CheckControls, EquivalenceSample, FormConstants};
use jeans_lab::ode::{integrate_contrast, OdeTrajectory, ToleranceSpec};
use jeans_lab::pde::{init_from_profile, DataProfile, EvolveControls};
use jeans_lab::timemap::{build_time_maps, TimeMaps};
use jeans_lab::{build_params, ModelParams, ParamsInput};

fn setup() -> (ModelParams, OdeTrajectory, TimeMaps) {
    let p = build_params(&ParamsInput::default()).unwrap();
    let tr = integrate_contrast(&p, 1e6, &ToleranceSpec::default()).unwrap();
    let maps = build_time_maps(&tr, &p).unwrap();
    (p, tr, maps)
}

fn ladder(p: &ModelParams, tr: &OdeTrajectory, maps: &TimeMaps, k: &FormConstants) -> Vec<EquivalenceSample> {
    let ctl = EvolveControls { c_ode: 1e-4, ..Default::default() };
    [(32, 0.04), (64, 0.02), (128, 0.01)]
        .iter()
        .map(|&(n, dt)| {
            let s = init_from_profile(p, tr, &DataProfile::cosine(0.05), n).unwrap();
            equivalence_from_run(s, tr, maps, p, 1.5, dt, &ctl, k).unwrap()
        })
        .collect()
}

fn order(a: f64, b: f64) -> f64 {
    (a / b).log2()
}

#[test]
fn sound_coefficient_from_wave_equation_gives_fourth_order_defect() {
    let (p, tr, maps) = setup();
    let runs = ladder(&p, &tr, &maps, &FormConstants::consistent(&p));
    for row in 0..5 {
        for w in runs.windows(2) {
            let o = order(w[0].defect[row], w[1].defect[row]);
            assert!(o > 3.5, "row {row}: order {o}, defects {:?}", runs.iter().map(|r| r.defect[row]).collect::<Vec<_>>());
        }
    }
    assert!(runs[2].max_relative() < 1e-5);
}

#[test]
fn displayed_form_converges_except_in_the_u0_row() {
    let (p, tr, maps) = setup();
    let runs = ladder(&p, &tr, &maps, &FormConstants::new(&p));
    for row in 1..5 {
        let o = order(runs[1].defect[row], runs[2].defect[row]);
        assert!(o > 3.5, "row {row}: order {o}");
    }
    let o = order(runs[1].defect[0], runs[2].defect[0]);
    assert!(o.abs() < 0.1, "row 0 order {o}");
    assert!(runs[2].defect[0] / runs[2].scale[0] > 0.1);
}

#[test]
fn dropping_z_terms_leaves_a_stalled_defect() {
    let (p, tr, maps) = setup();
    let runs = ladder(&p, &tr, &maps, &FormConstants::consistent(&p));
    for row in [0, 3, 4] {
        let o = order(runs[1].defect_without_z[row], runs[2].defect_without_z[row]);
        assert!(o < 0.5, "row {row}: order {o}");
        assert!(runs[2].defect_without_z[row] > 100.0 * runs[2].defect[row]);
    }
}

#[test]
fn conditions_hold_at_documented_parameters() {
    let (p, _, maps) = setup();
    let rep = verify_conditions(&maps, &p, &CheckControls { samples: 2000, ..Default::default() }).unwrap();
    for v in &rep.verdicts {
        assert!(v.holds, "{}: {}", v.name, v.note);
    }
    assert!(rep.z_sum_max < rep.constants.gamma1);
    assert!(rep.divb.beta1_estimate < rep.constants.beta1_budget);
    assert_eq!(rep.samples, 2000);
}
