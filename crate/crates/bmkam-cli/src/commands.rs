//! The four experiment commands. Every command writes its artifacts
//! atomically (temp file + rename) into the output directory and records the
//! seed it used.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use bmkam::diophantine::{
    diophantine_sample, zone_bound_sum, BoxRegion, DioParams, RadialSite, ResonanceZone,
};
use bmkam::desing::{
    build_profile, desingularize_system, dynamics_equality_residual, simple_system, InnerProfile,
    TildeFlow,
};
use bmkam::driver::{
    build_schedule, frequency_bounds, run_kam, KamOptions, KamProblem, ScheduleInputs, StopReason,
};
use bmkam::exec::ExecMode;
use bmkam::mechanics::ThreeBodyFlow;
use bmkam::singular::{
    integrate_field, integrate_flow, BmFunction, FlowOptions, PhasePoint, SingularPart,
    Trajectory,
};

use crate::config::*;
use crate::CliError;

pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::config(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(())
}

fn ensure_out(dir: &str) -> Result<PathBuf, CliError> {
    let p = PathBuf::from(dir);
    std::fs::create_dir_all(&p)
        .map_err(|e| CliError::config(format!("cannot create {dir}: {e}")))?;
    Ok(p)
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states[0].phi.len();
    let mut out = String::from("t");
    for j in 1..=n {
        let _ = write!(out, ",phi_{j}");
    }
    for j in 1..=n {
        let _ = write!(out, ",I_{j}");
    }
    out.push_str(",H\n");
    for ((t, s), e) in traj.times.iter().zip(&traj.states).zip(&traj.energy) {
        let _ = write!(out, "{t}");
        for v in &s.phi {
            let _ = write!(out, ",{v}");
        }
        for v in &s.actions {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{e}");
    }
    out
}

pub fn cmd_simulate(cfg: &SimulateConfig, out_dir: &str, quiet: bool) -> Result<(), CliError> {
    let out = ensure_out(out_dir)?;
    let p0 = PhasePoint::new(cfg.p0.phi.clone(), cfg.p0.actions.clone());
    let mut opts = FlowOptions::default();
    if let Some(f) = cfg.i1_floor {
        opts.i1_floor = f;
    }
    if let Some(t) = cfg.energy_tol {
        opts.step_energy_tol = t;
    }
    let traj = match &cfg.system {
        SystemSource::Builtin(b) if b.builtin == "three_body" => {
            let flow = ThreeBodyFlow {
                mass_ratio: b.mass_ratio.unwrap_or(0.01),
            };
            integrate_field(&flow, &p0, cfg.t_end, cfg.dt, &opts).map_err(CliError::from)?
        }
        SystemSource::Builtin(b) => {
            return Err(CliError::config(format!("unknown builtin '{}'", b.builtin)))
        }
        other => {
            let (form, h) = load_system(other)?;
            integrate_flow(&h, &form, &p0, cfg.t_end, cfg.dt, &opts).map_err(CliError::from)?
        }
    };
    write_atomic(&out.join("trajectory.csv"), &trajectory_csv(&traj))?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "steps": traj.times.len() - 1,
        "t_final": traj.times.last(),
        "energy_drift": traj.max_energy_drift(),
        "min_abs_I1": traj.min_abs_i1(),
        "hit_floor": traj.hit_floor,
    });
    write_atomic(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    if !quiet {
        eprintln!(
            "simulate: {} steps, energy drift {:.3e}, min |I1| {:.3e}",
            traj.times.len() - 1,
            traj.max_energy_drift(),
            traj.min_abs_i1()
        );
    }
    Ok(())
}

pub fn cmd_kam(cfg: &KamConfig, out_dir: &str, strict: bool, quiet: bool) -> Result<(), CliError> {
    let out = ensure_out(out_dir)?;
    let (form, hhat) = load_system(&cfg.system)?;
    let domain = cfg.domain.build()?;
    let perturbation = if cfg.perturbation.q0 != 0.0 || cfg.perturbation.q.iter().any(|&x| x != 0.0)
    {
        BmFunction::with_singular(
            SingularPart::new(form.order(), cfg.perturbation.q0, cfg.perturbation.q.clone())
                .map_err(CliError::config)?,
            cfg.perturbation.smooth_part.clone(),
        )
    } else {
        BmFunction::smooth(cfg.perturbation.smooth_part.clone())
    };
    let (m_bound, l_bound, mu) =
        frequency_bounds(&hhat.smooth, hhat.singular.as_ref(), &form, &domain, 4)
            .map_err(CliError::from)?;
    let schedule = build_schedule(&ScheduleInputs {
        m_bound,
        l_bound,
        mu,
        rho1: domain.rho1,
        rho2: domain.rho2,
        tau: cfg.schedule.tau,
        gamma: cfg.schedule.gamma,
        nu: cfg.schedule.nu,
        n: form.dof(),
        q_max: cfg.schedule.q_max,
    })
    .map_err(CliError::from)?;
    let mut opts = KamOptions::default();
    opts.strict = strict;
    if let Some(s) = cfg.stop_factor {
        opts.stop_factor = s;
    }
    let problem = KamProblem {
        form,
        hhat,
        perturbation,
        domain,
    };
    let run = run_kam(&problem, &schedule, &opts).map_err(CliError::from)?;

    let mut log = String::new();
    for r in &run.records {
        let _ = writeln!(log, "{}", serde_json::to_string(r).unwrap());
    }
    write_atomic(&out.join("iterations.jsonl"), &log)?;

    let torus = match &cfg.i0 {
        Some(i0) => match run.torus_frequency(i0) {
            Ok(freq) => {
                let istar = run.reconstructed_action(i0).map_err(CliError::from)?;
                let disp = run.displacement_norm(i0, 8).map_err(CliError::from)?;
                json!({
                    "I0": i0,
                    "I0_star": istar,
                    "frequency": freq,
                    "displacement_sup": disp,
                    "surviving": true,
                })
            }
            Err(bmkam::Error::NotInSurvivingSet(msg)) => json!({
                "I0": i0,
                "surviving": false,
                "reason": msg,
            }),
            Err(e) => return Err(CliError::from(e)),
        },
        None => serde_json::Value::Null,
    };
    let reason = match &run.stop {
        StopReason::Completed => "Completed".to_string(),
        StopReason::Converged { q } => format!("Converged:q={q}"),
        StopReason::HypothesisViolated { which, .. } => format!("HypothesisViolated:{which}"),
    };
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "records": run.records.len(),
        "final_eps": run.final_eps(),
        "stop": reason,
        "bound_ok_all": run.records.iter().skip(1).all(|r| r.bound_ok),
        "hypothesis_warnings": run.hypothesis_warnings,
        "absorbed_singular": run.absorbed_singular,
        "modular_period": run.form.modular_period(),
        "tori": torus,
    });
    write_atomic(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    if !quiet {
        eprintln!(
            "kam: {} records, final eps {:.3e}, stop {reason}",
            run.records.len(),
            run.final_eps()
        );
    }
    if let StopReason::HypothesisViolated { which, .. } = &run.stop {
        return Err(CliError::hypothesis(format!("HypothesisViolated:{which}")));
    }
    Ok(())
}

pub fn cmd_resonances(
    cfg: &ResonancesConfig,
    out_dir: &str,
    seed_override: Option<u64>,
    quiet: bool,
) -> Result<(), CliError> {
    let out = ensure_out(out_dir)?;
    let (form, h) = load_system(&cfg.system)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let g_box =
        BoxRegion::new(cfg.sample_box.lo.clone(), cfg.sample_box.hi.clone()).map_err(CliError::from)?;
    let dio = DioParams::new(cfg.dio.tau, cfg.dio.gamma, cfg.dio.k_scan).map_err(CliError::from)?;
    let smooth = h.smooth.clone();
    let n = form.dof();
    let u_map = move |i: &[f64]| smooth.grad(&vec![0.0; n], i).1;
    let survey = diophantine_sample(
        &g_box,
        &form,
        h.singular.as_ref(),
        &u_map,
        &dio,
        cfg.n_samples,
        seed,
        ExecMode::default(),
    )
    .map_err(CliError::from)?;

    let mut csv = String::new();
    let dim = g_box.dim();
    for j in 1..=dim {
        let _ = write!(csv, "I_{j},");
    }
    csv.push_str("kept,worst_divisor,worst_k\n");
    for row in &survey.rows {
        for v in &row.point {
            let _ = write!(csv, "{v},");
        }
        let kmarks: Vec<String> = row.worst_mode.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(
            csv,
            "{},{},{}",
            row.kept as u8,
            row.worst_divisor,
            kmarks.join(";")
        );
    }
    write_atomic(&out.join("samples.csv"), &csv)?;

    let mid = 0.5 * (g_box.lo[0] + g_box.hi[0]);
    let site = if cfg.at_z || mid == 0.0 {
        RadialSite::AtZ
    } else {
        RadialSite::Off(mid)
    };
    // the union bound is evaluated over the frequency image of the box
    let freq_box = frequency_image_box(&g_box, &u_map);
    let bound_sum = zone_bound_sum(&freq_box, &form, site, &dio).map_err(CliError::from)?;

    if cfg.compare_bounds {
        let mut zcsv = String::from("k,alpha,analytic_bound,mc_measure,mc_sigma\n");
        for k in bmkam::diophantine::modes_up_to(dim, cfg.dio.k_scan.min(6)) {
            let l1: i32 = k.iter().map(|x| x.abs()).sum();
            let alpha = cfg.dio.gamma / (l1 as f64).powf(cfg.dio.tau);
            let zone = ResonanceZone::new(k.clone(), alpha, site).map_err(CliError::from)?;
            let bound = zone.measure_bound(&freq_box, &form).map_err(CliError::from)?;
            let (mc, sigma) = zone
                .monte_carlo_measure(
                    &freq_box,
                    &form,
                    h.singular.as_ref(),
                    20_000,
                    seed ^ 0x5eed,
                    ExecMode::default(),
                )
                .map_err(CliError::from)?;
            let kmarks: Vec<String> = k.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(zcsv, "{},{alpha},{bound},{mc},{sigma}", kmarks.join(";"));
        }
        write_atomic(&out.join("zones.csv"), &zcsv)?;
    }

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "n_samples": cfg.n_samples,
        "kept_fraction": survey.kept_fraction,
        "sigma": survey.sigma,
        "zone_bound_sum": bound_sum,
        "box_volume": g_box.volume(),
    });
    write_atomic(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    if !quiet {
        eprintln!(
            "resonances: kept {:.4} +- {:.4} of {} samples (seed {seed})",
            survey.kept_fraction, survey.sigma, cfg.n_samples
        );
    }
    Ok(())
}

fn frequency_image_box(
    g_box: &BoxRegion,
    u_map: &dyn Fn(&[f64]) -> Vec<f64>,
) -> BoxRegion {
    let n = g_box.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in bmkam::numerics::tensor_grid(&g_box.lo, &g_box.hi, 5) {
        let u = u_map(&p);
        for j in 0..n {
            lo[j] = lo[j].min(u[j]);
            hi[j] = hi[j].max(u[j]);
        }
    }
    for j in 0..n {
        if hi[j] - lo[j] < 1e-9 {
            lo[j] -= 0.5;
            hi[j] += 0.5;
        }
    }
    BoxRegion::new(lo, hi).expect("frequency image box")
}

pub fn cmd_desing(
    cfg: &DesingConfig,
    out_dir: &str,
    seed_override: Option<u64>,
    quiet: bool,
) -> Result<(), CliError> {
    let out = ensure_out(out_dir)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let (form, moment) = simple_system(cfg.n, cfg.m).map_err(CliError::from)?;
    let mut reports = Vec::new();
    let mut fields_csv = String::from(
        "eps,I_1,phi_1,component,side,phidot_1,phidot_2,Idot_1,Idot_2\n",
    );
    use rand::Rng;
    let mut rng = rand_seed(seed);
    let samples: Vec<PhasePoint> = (0..cfg.n_samples)
        .map(|_| {
            PhasePoint::new(
                vec![
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                ],
                vec![rng.gen_range(0.02..0.5), rng.gen_range(0.5..1.5)],
            )
        })
        .collect();
    for &eps in &cfg.eps_list {
        let mut inner = InnerProfile::default_for(cfg.m);
        if let Some(c) = cfg.core_coef {
            inner.core_coef = c;
        }
        if let Some(a) = cfg.core_radius {
            inner.core_radius = a;
        }
        let profile = build_profile(cfg.m, eps, inner).map_err(CliError::from)?;
        match cfg.mode.as_str() {
            "residual" => {
                let residual = dynamics_equality_residual(&moment, &form, &profile, &samples)
                    .map_err(CliError::from)?;
                let sys = desingularize_system(&moment, &form, &profile).map_err(CliError::from)?;
                for p in samples.iter().take(50) {
                    for j in 0..2 {
                        let (po, io) = sys.original_velocity(j, p).map_err(CliError::from)?;
                        let (pd, id) = sys.desing_velocity(j, p).map_err(CliError::from)?;
                        let _ = writeln!(
                            fields_csv,
                            "{eps},{},{},{j},original,{},{},{},{}",
                            p.i1(), p.phi[0], po[0], po[1], io[0], io[1]
                        );
                        let _ = writeln!(
                            fields_csv,
                            "{eps},{},{},{j},desingularized,{},{},{},{}",
                            p.i1(), p.phi[0], pd[0], pd[1], id[0], id[1]
                        );
                    }
                }
                reports.push(json!({
                    "eps": eps,
                    "mode": "residual",
                    "residual": residual,
                    "profile": &profile,
                    "effective_core_coef": profile.effective_core_coef(),
                }));
            }
            "transport" => {
                let t_end = cfg.t_end.unwrap_or(10.0);
                let dt = cfg.dt.unwrap_or(1e-3);
                let mismatch =
                    transport_mismatch(&form, &moment, &profile, t_end, dt).map_err(CliError::from)?;
                reports.push(json!({"eps": eps, "mode": "transport", "max_mismatch": mismatch}));
            }
            other => return Err(CliError::config(format!("unknown desing mode '{other}'"))),
        }
    }
    if cfg.mode == "residual" {
        write_atomic(&out.join("fields.csv"), &fields_csv)?;
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "m": cfg.m,
        "reports": reports,
    });
    write_atomic(
        &out.join("report.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    if !quiet {
        eprintln!("desing: {} report(s) written", cfg.eps_list.len());
    }
    Ok(())
}

fn rand_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Integrate the desingularized Hamiltonian in the tilde chart, pull the
/// trajectory back, and compare with the original-side trajectory.
pub fn transport_mismatch(
    form: &bmkam::singular::ActionAngleForm,
    moment: &bmkam::desing::MomentMap,
    profile: &bmkam::desing::Profile,
    t_end: f64,
    dt: f64,
) -> bmkam::Result<f64> {
    use num_complex::Complex64;
    let sys = desingularize_system(moment, form, profile)?;
    // smooth Hamiltonian part h(I2) + R(phi2): independent of pair 1
    let i0 = vec![0.0, 1.0];
    let mut smooth = bmkam::fourier::FourierTaylor::zero(2, 8, 4, i0);
    smooth.add_term(&[0, 0], &[0, 2], Complex64::new(0.5, 0.0));
    smooth.add_term(&[0, 0], &[0, 1], Complex64::new(1.0, 0.0));
    smooth.add_cos(&[0, 1], &[0, 0], 1e-3);
    let h_original = BmFunction {
        singular: moment[0].singular.clone(),
        smooth: smooth.clone(),
    };
    let p0 = PhasePoint::new(vec![0.3, 1.1], vec![0.6 * profile.eps, 1.0]);
    let opts = FlowOptions {
        i1_floor: 0.0,
        step_energy_tol: 1e-5,
    };
    let original = integrate_flow(&h_original, form, &p0, t_end, dt, &opts)?;
    let tilde_flow = TildeFlow {
        sys: &sys,
        smooth: &smooth,
        seed_i1: p0.i1(),
    };
    let y0 = tilde_flow.push(&p0);
    let tilde = integrate_field(&tilde_flow, &y0, t_end, dt, &opts)?;
    let mut worst: f64 = 0.0;
    let count = original.states.len().min(tilde.states.len());
    for idx in (0..count).step_by(25) {
        let a = &original.states[idx];
        let b = tilde_flow.pull(&tilde.states[idx])?;
        for j in 0..2 {
            worst = worst.max((a.phi[j] - b.phi[j]).abs());
            worst = worst.max((a.actions[j] - b.actions[j]).abs());
        }
    }
    Ok(worst)
}
