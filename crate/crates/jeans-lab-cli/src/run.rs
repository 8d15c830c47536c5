//! Subcommand drivers. Each writes its data files and fills a [`Summary`].

use std::path::Path;

use jeans_lab::fuchsian::{equivalence_from_run, verify_conditions, CheckControls, FormConstants};
use jeans_lab::ode::{blowup_bracket, bound_certificates, integrate_contrast, OdeTrajectory};
use jeans_lab::params::{iota_residual, solve_iota};
use jeans_lab::pde::{entropy_field, evolve, init_from_data, init_from_profile, FieldState, StopReason};
use jeans_lab::reference::{family_residual, sample_points, Family, RESIDUAL_THRESHOLD};
use jeans_lab::timemap::build_time_maps;
use jeans_lab::ModelParams;

use crate::artifacts::{Artifacts, Summary};
use crate::config::{Command, FamilyChoice, ProfileSpec, RunConfig};
use crate::error::CliError;

/// Summary and manifest of a finished run.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub manifest: crate::artifacts::Manifest,
}

/// Runs `config`, writing all artifacts under `config.output_dir`.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    if !config.sweep.is_empty() {
        return run_sweep(config);
    }
    let params = config.validate()?;
    let mut art = Artifacts::create(&config.output_dir)?;
    let mut summary = Summary::new(config.command.name());
    summary.value("params", params);
    let result = dispatch(config, &params, &mut art, &mut summary);
    if let Err(e) = &result {
        let _ = std::fs::write(config.output_dir.join("error.json"), serde_json::to_vec_pretty(&e.to_json()).unwrap_or_default());
    }
    result?;
    let manifest = art.finish(config, &summary)?;
    Ok(RunOutcome { summary, manifest })
}

fn run_sweep(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let children: Vec<RunConfig> = config
        .sweep
        .iter()
        .enumerate()
        .map(|(i, p)| RunConfig { params: *p, sweep: Vec::new(), output_dir: config.output_dir.join(format!("sweep-{i:03}")), ..config.clone() })
        .collect();
    let results: Vec<Result<RunOutcome, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = children.iter().map(|c| s.spawn(move || run(c))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(CliError::Numerical("worker panicked".into())))).collect()
    });
    let art = Artifacts::create(&config.output_dir)?;
    let mut summary = Summary::new(config.command.name());
    for (i, r) in results.into_iter().enumerate() {
        summary.absorb(&format!("sweep-{i:03}/"), r?.summary);
    }
    let manifest = art.finish(config, &summary)?;
    Ok(RunOutcome { summary, manifest })
}

fn dispatch(config: &RunConfig, p: &ModelParams, art: &mut Artifacts, summary: &mut Summary) -> Result<(), CliError> {
    match config.command {
        Command::Iota => iota(config, art, summary),
        Command::Ode => ode(config, p, art, summary),
        Command::Blowup => blowup(config, p, art, summary),
        Command::Residuals => residuals(config, p, art, summary),
        Command::Simulate => simulate(config, p, art, summary),
        Command::FuchsianCheck => fuchsian_check(config, p, art, summary),
        Command::Report => {
            iota(config, art, summary)?;
            ode(config, p, art, summary)?;
            blowup(config, p, art, summary)?;
            residuals(config, p, art, summary)?;
            simulate(config, p, art, summary)?;
            fuchsian_check(config, p, art, summary)
        }
    }
}

fn trajectory(config: &RunConfig, p: &ModelParams) -> Result<OdeTrajectory, CliError> {
    Ok(integrate_contrast(p, config.f_cap, &config.tolerances)?)
}

fn iota(config: &RunConfig, art: &mut Artifacts, summary: &mut Summary) -> Result<(), CliError> {
    let mut ks = config.k_values.clone();
    ks.sort_by(f64::total_cmp);
    let iotas = ks.iter().map(|&k| solve_iota(k)).collect::<Result<Vec<_>, _>>()?;
    let resid: Vec<f64> = ks.iter().zip(&iotas).map(|(&k, &i)| iota_residual(k, i)).collect();
    art.csv("iota.csv", &["k_tilde", "iota", "iota3", "cubic_residual"], ks.iter().zip(&iotas).zip(&resid).map(|((&k, &i), &r)| vec![k, i, i.powi(3), r]))?;
    let worst = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    summary.verdict("iota_cubic_residual", worst < 1e-12, format!("max |residual| {worst:.2e}"));
    if ks.len() > 1 {
        let dec = iotas.windows(2).all(|w| w[1] < w[0]);
        summary.verdict("iota_strictly_decreasing", dec, format!("{} values", ks.len()));
    }
    summary.value("k_tilde", &ks);
    summary.value("iota", &iotas);
    Ok(())
}

fn ode(config: &RunConfig, p: &ModelParams, art: &mut Artifacts, summary: &mut Summary) -> Result<(), CliError> {
    let tr = trajectory(config, p)?;
    art.csv("ode.csv", &["t", "f", "f0"], (0..tr.t_grid.len()).map(|i| vec![tr.t_grid[i], tr.f[i], tr.f0[i]]))?;
    let cert = bound_certificates(&tr, p)?;
    summary.verdict(
        "ode_bound_certificates",
        cert.all_ok(),
        match cert.first_violation {
            Some((kind, t)) => format!("{kind:?} envelope violated at t = {t}"),
            None => format!("{} grid points", tr.t_grid.len()),
        },
    );
    summary.value("reached_cap", tr.reached_cap);
    summary.value("t_end", tr.t_end());
    summary.value("f_end", tr.f_end());
    if !tr.reached_cap {
        return Ok(());
    }
    let maps = build_time_maps(&tr, p)?;
    art.csv(
        "compactified.csv",
        &["t", "f", "tau", "g", "chi", "xi", "g_frak"],
        (0..maps.t_grid.len()).map(|i| vec![maps.t_grid[i], maps.f[i], maps.tau[i], maps.g[i], maps.chi[i], maps.xi[i], maps.g_frak[i]]),
    )?;
    let id = maps.check_identities(p)?;
    summary.verdict("compactified_time_identities", id.max() < 1e-4, format!("largest relative defect {:.2e}", id.max()));
    summary.value("identities", id);
    if let Some(term) = maps.terminal_window() {
        summary.verdict("terminal_chi_limit", term.points > 0 && term.chi_rel_dev < 0.05, format!("|chi/4B - 1| = {:.3e}", term.chi_rel_dev));
        summary.verdict("terminal_xi_decay", term.xi_max < 1e-2, format!("max xi = {:.3e}", term.xi_max));
        summary.verdict("terminal_eta2_decay", term.eta2_max < 1e-2, format!("max eta2 = {:.4e}", term.eta2_max));
        summary.value("terminal_window", term);
    }
    let decay = maps.check_g_decay(p)?;
    summary.verdict("g_frak_decay", decay.slope >= 0.4, format!("fitted exponent {:.3}", decay.slope));
    summary.verdict("dtchi_identity", decay.dtchi_rel < 1e-3, format!("relative defect {:.2e}", decay.dtchi_rel));
    summary.value("g_decay", decay);
    Ok(())
}

fn blowup(config: &RunConfig, p: &ModelParams, art: &mut Artifacts, summary: &mut Summary) -> Result<(), CliError> {
    let mut tr = trajectory(config, p)?;
    let br = blowup_bracket(p)?;
    summary.value("t_star", br.t_star);
    summary.value("t_star_upper", br.t_star_upper);
    summary.value("bound_constants", br.constants);
    if !tr.reached_cap {
        summary.value("blowup_detected", false);
        return Ok(());
    }
    let est = tr.attach_blowup_estimate()?;
    art.csv("blowup_ladder.csv", &["f_cap", "t"], (0..3).map(|i| vec![est.ladder_caps[i], est.ladder_times[i]]))?;
    let upper = br.t_star_upper.unwrap_or(f64::INFINITY);
    summary.verdict("bracket_containment", est.t_m >= br.t_star && est.t_m < upper, format!("t_m = {:.10} in [{:.10}, {upper:.6})", est.t_m, br.t_star));
    summary.verdict("extrapolation_spread", est.spread_rel < 1e-3, format!("relative spread {:.2e}", est.spread_rel));
    summary.value("blowup_detected", true);
    summary.value("t_m", est.t_m);
    summary.value("spread_rel", est.spread_rel);
    Ok(())
}

fn residuals(config: &RunConfig, p: &ModelParams, art: &mut Artifacts, summary: &mut Summary) -> Result<(), CliError> {
    let spec = &config.residuals;
    let tr = trajectory(config, p)?;
    let pts = sample_points(spec.points);
    let mut families = Vec::new();
    if matches!(spec.family, FamilyChoice::Background | FamilyChoice::Both) {
        families.push(("background", Family::Background));
    }
    if matches!(spec.family, FamilyChoice::Homogeneous | FamilyChoice::Both) {
        families.push(("homogeneous", Family::Homogeneous(&tr)));
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (name, fam) in families {
        let mut worst: f64 = 0.0;
        for &t in &spec.times {
            let rep = family_residual(fam, t, &pts, p, spec.h)?;
            worst = worst.max(rep.max_norm());
            let mom = rep.momentum.iter().map(|m| m.max).fold(0.0, f64::max);
            rows.push(
                [name.to_string()]
                    .into_iter()
                    .chain([t, rep.continuity.max, mom, rep.entropy_transport.max, rep.poisson.max, rep.max_norm()].iter().map(|x| format!("{x:e}")))
                    .collect(),
            );
            reports.push(rep);
        }
        summary.verdict(&format!("residual_{name}"), worst < RESIDUAL_THRESHOLD, format!("max norm {worst:.2e} over {} times", spec.times.len()));
    }
    art.text_csv("residuals.csv", &["family", "t", "continuity", "momentum", "entropy", "poisson", "max"], &rows)?;
    art.json("residuals.json", &reports)
}

/// Columns ζ, d and v of a profile table.
type ProfileColumns = (Vec<f64>, Vec<f64>, Vec<f64>);

fn periodic_table(path: &Path) -> Result<ProfileColumns, CliError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::Usage(format!("cannot read profile table {}: {e}", path.display())))?;
    let (mut z, mut d, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec.map_err(|e| CliError::Usage(e.to_string()))?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| CliError::Usage(format!("bad profile row {rec:?}")))
        };
        z.push(num(0)?);
        d.push(num(1)?);
        v.push(num(2)?);
    }
    if z.len() < 2 || z.windows(2).any(|w| !(w[1] > w[0])) || z[0] < 0.0 || *z.last().unwrap() >= 1.0 {
        return Err(CliError::Usage("profile table needs increasing zeta in [0,1) with at least two rows".into()));
    }
    Ok((z, d, v))
}

fn periodic_lerp(z: &[f64], y: &[f64], x: f64) -> f64 {
    let x = x.rem_euclid(1.0);
    let i = z.partition_point(|&zi| zi <= x);
    let (za, ya, zb, yb) = match i {
        0 => (z[z.len() - 1] - 1.0, y[y.len() - 1], z[0], y[0]),
        i if i == z.len() => (z[i - 1], y[i - 1], z[0] + 1.0, y[0]),
        i => (z[i - 1], y[i - 1], z[i], y[i]),
    };
    ya + (yb - ya) * (x - za) / (zb - za)
}

fn initial_state(config: &RunConfig, p: &ModelParams, tr: &OdeTrajectory) -> Result<FieldState, CliError> {
    match (&config.profile, config.profile.built_in()) {
        (_, Some(profile)) => Ok(init_from_profile(p, tr, &profile, config.grid)?),
        (ProfileSpec::Table { path }, None) => {
            let (z, d, v) = periodic_table(path)?;
            Ok(init_from_data(p, tr, &|x| periodic_lerp(&z, &d, x), &|x| periodic_lerp(&z, &v, x), config.grid)?)
        }
        _ => unreachable!("every non-table profile is built in"),
    }
}

fn write_state(art: &mut Artifacts, name: &str, s: &FieldState, tr: &OdeTrajectory, p: &ModelParams) -> Result<(), CliError> {
    let ent = entropy_field(s, tr, p)?;
    art.csv(
        name,
        &["zeta", "rho_hat", "drho_dt", "nu", "psi", "s"],
        (0..s.len()).map(|j| vec![s.zeta_grid[j], s.rho_hat[j], s.drho_dt[j], s.nu[j], s.psi[j], ent[j]]),
    )
}

fn simulate(config: &RunConfig, p: &ModelParams, art: &mut Artifacts, summary: &mut Summary) -> Result<(), CliError> {
    let tr = trajectory(config, p)?;
    let state = initial_state(config, p, &tr)?;
    let evo = evolve(state, &tr, p, &config.evolve)?;
    for (i, s) in evo.snapshots.iter().enumerate() {
        write_state(art, &format!("snapshot_{i:03}.csv"), s, &tr, p)?;
    }
    write_state(art, "final_state.csv", &evo.final_state, &tr, p)?;
    let m = &evo.monitors;
    art.csv(
        "monitors.csv",
        &["t", "f", "rho_ratio_min", "rho_ratio_max", "drho_ratio_min", "drho_ratio_max", "uz_sup", "nu_sup", "continuity_residual", "psi_defect"],
        m.samples
            .iter()
            .map(|s| vec![s.t, s.f, s.ratio_rho.0, s.ratio_rho.1, s.ratio_drho.0, s.ratio_drho.1, s.uz_sup, s.nu_sup, s.continuity_residual, s.psi_defect]),
    )?;
    summary.value("grid", config.grid);
    summary.value("steps", evo.steps);
    summary.value("stop_reason", evo.stop.label());
    summary.value("t_final", evo.final_state.t);
    if let StopReason::Failed(e) = evo.stop {
        return Err(e.into());
    }
    summary.verdict("monitors_finite", m.all_finite(), format!("{} monitor samples", m.samples.len()));
    let env = [m.rho_envelope(), m.drho_envelope(), m.uz_envelope()];
    summary.value("rho_envelope", env[0]);
    summary.value("drho_envelope", env[1]);
    summary.value("uz_envelope", env[2]);
    summary.value("nu_envelope", m.nu_envelope());
    match config.profile.amplitude() {
        Some(0.0) => {
            let dev = m.samples.iter().map(|s| s.f * (s.ratio_rho.0 - 1.0).abs().max((s.ratio_rho.1 - 1.0).abs())).fold(0.0, f64::max);
            let nu = m.nu_envelope();
            summary.value("homogeneous_deviation", dev);
            summary.verdict("homogeneous_manifold", dev < 1e-6 && nu < 1e-8, format!("max|rho - f| {dev:.2e}, max|nu| {nu:.2e}"));
        }
        Some(eps) => {
            summary.verdict(
                "perturbation_envelopes",
                env.iter().all(|e| *e < 10.0 * eps),
                format!("rho {:.2e}, drho {:.2e}, u_zeta {:.2e} against 10 eps = {:.1e}", env[0], env[1], env[2], 10.0 * eps),
            );
        }
        None => {}
    }
    Ok(())
}

fn fuchsian_check(config: &RunConfig, p: &ModelParams, art: &mut Artifacts, summary: &mut Summary) -> Result<(), CliError> {
    let tr = trajectory(config, p)?;
    let maps = build_time_maps(&tr, p)?;
    let controls = CheckControls { seed: config.seed, ..config.check.clone() };
    let rep = verify_conditions(&maps, p, &controls)?;
    art.csv(
        "eig_samples.csv",
        &["tau", "b0_min", "b0_max", "frak_min", "frak_max", "gap_min", "z_sum"],
        rep.eig_samples.iter().map(|s| vec![s.tau, s.b0_min, s.b0_max, s.frak_min, s.frak_max, s.gap_min, s.z_sum]),
    )?;
    summary.verdict("eigenvalue_sandwich", rep.sandwich_ok, format!("{} samples in ball of radius {:.3e}", rep.samples, rep.r_tilde));
    for v in &rep.verdicts {
        summary.verdict(&format!("fuchsian_{}", v.name), v.holds, v.note.clone());
    }
    summary.value("gamma_constants", rep.constants);
    summary.value("r_tilde", rep.r_tilde);
    art.json("condition_report.json", &rep)?;
    if let Some(eq) = &config.equivalence {
        let mut forms = Vec::new();
        for (label, k) in [("displayed", FormConstants::new(p)), ("wave_consistent", FormConstants::consistent(p))] {
            let s = initial_state(config, p, &tr)?;
            let sample = equivalence_from_run(s, &tr, &maps, p, eq.t_centre, eq.dt, &config.evolve, &k)?;
            summary.value(&format!("equivalence_{label}_relative_defect"), sample.max_relative());
            forms.push(serde_json::json!({ "form": label, "sample": sample }));
        }
        art.json("equivalence.json", &forms)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_interpolation_wraps() {
        let z = [0.0, 0.25, 0.5, 0.75];
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(periodic_lerp(&z, &y, 0.125), 1.5);
        assert_eq!(periodic_lerp(&z, &y, 0.875), 2.5);
        assert_eq!(periodic_lerp(&z, &y, 1.25), 2.0);
        assert_eq!(periodic_lerp(&z, &y, -0.125), 2.5);
    }
}
