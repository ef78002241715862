//! End-to-end behavior of the normalization pipeline on the desk model.

mod common;

use bmkam::driver::{run_kam, StopReason};
use bmkam::fourier::FourierTaylor;
use bmkam::singular::{integrate_flow, BmFunction, FlowOptions, SingularPart};
use common::*;

#[test]
fn zero_perturbation_is_a_fixed_point() {
    let (mut problem, schedule) = desk_problem(1e-6, 2e-4);
    problem.perturbation = BmFunction::smooth(FourierTaylor::zero(2, 64, 8, problem.domain.midpoint()));
    let run = run_kam(&problem, &schedule, &default_opts()).unwrap();
    assert_eq!(run.records.len(), 1);
    assert_eq!(run.records[0].eps, 0.0);
    assert!(matches!(run.stop, StopReason::Converged { q: 0 }));
    // the torus map is the identity: no transforms, I0* = I0
    let i0 = problem.domain.midpoint();
    let p = run.torus_point(&[0.4, 0.9], &i0).unwrap();
    assert!((p.phi[0] - 0.4).abs() < 1e-12 && (p.phi[1] - 0.9).abs() < 1e-12);
    assert!((p.actions[0] - i0[0]).abs() < 1e-10 && (p.actions[1] - i0[1]).abs() < 1e-10);
    let u = run.torus_frequency(&i0).unwrap();
    assert!((u[0] - 1.0).abs() < 1e-12 && (u[1] - GOLDEN).abs() < 1e-12);
}

#[test]
fn torus_displacement_scales_linearly_with_the_perturbation() {
    let mut disps = Vec::new();
    for eps in [1e-6, 1e-7] {
        let (problem, schedule) = desk_problem(eps, 2e-4);
        let run = run_kam(&problem, &schedule, &default_opts()).unwrap();
        disps.push(run.displacement_norm(&problem.domain.midpoint(), 6).unwrap());
    }
    let ratio = disps[0] / disps[1];
    assert!(
        (5.0..20.0).contains(&ratio),
        "displacement should scale about linearly in eps: {disps:?} ratio {ratio}"
    );
}

#[test]
fn purely_singular_perturbation_is_absorbed_without_iterating() {
    let (mut problem, schedule) = desk_problem(1e-6, 2e-4);
    // f = R_zeta(I1) = r0 log I1 only
    problem.perturbation = BmFunction::with_singular(
        SingularPart::new(1, 0.25, vec![]).unwrap(),
        FourierTaylor::zero(2, 64, 8, problem.domain.midpoint()),
    );
    let run = run_kam(&problem, &schedule, &default_opts()).unwrap();
    assert!(run.absorbed_singular);
    assert_eq!(run.records.len(), 1);
    assert_eq!(run.records[0].eps, 0.0);
    // K' = K (1 - rhat_m/(qhat_m' + rhat_m)): q0 = 1, r0 = 0.25 ->
    // qhat new = 1.25, K' = c1/qhat = 0.8
    let expected = 1.0 / 1.25;
    assert!((run.form.modular_period() - expected).abs() < 1e-14);
}

#[test]
fn desk_run_contracts_quadratically_and_reconstructs_the_torus() {
    let (problem, schedule) = desk_problem(1e-6, 2e-4);
    let run = run_kam(&problem, &schedule, &default_opts()).unwrap();
    assert!(run.records.len() >= 3, "need a few stages, got {}", run.records.len());
    // remainder strictly decreasing, with fast contraction after stage 1
    for w in run.records.windows(2) {
        assert!(
            w[1].eps < w[0].eps,
            "eps must decrease: {} -> {}",
            w[0].eps,
            w[1].eps
        );
    }
    let last = run.records.last().unwrap();
    assert!(last.eps < 1e-20, "final eps {:e}", last.eps);

    // h-update telescoping: h(q) - h(0) = sum of absorbed averages, checked
    // through the frequency at the base point: u_final - u_init is the
    // accumulated average gradient, which is O(eps^2) for zero-average f
    let i0 = &problem.domain.midpoint();
    let u0 = problem.hhat.smooth.grad(&[0.0, 0.0], i0).1;
    let uf = run.final_h.smooth.grad(&[0.0, 0.0], i0).1;
    let shift = (0..2)
        .map(|j| (uf[j] - u0[j]).abs())
        .fold(0.0_f64, f64::max);
    assert!(shift < 1e-9, "frequency shift {shift:e}");

    // reconstructed actions and frequency
    let istar = run.reconstructed_action(i0).unwrap();
    assert!((istar[0] - i0[0]).abs() < 1e-6);
    let freq = run.torus_frequency(i0).unwrap();
    // u'(I0) = (B u1 + A, u2) = (1, golden) for the unperturbed system;
    // perturbation corrections are second order here
    assert!((freq[0] - 1.0).abs() < 1e-6, "freq {freq:?}");
    assert!((freq[1] - GOLDEN).abs() < 1e-6);

    // the reconstructed torus point flows (under the original perturbed H)
    // staying close to the torus: pull the trajectory back and watch I
    let h_full = BmFunction {
        singular: problem.hhat.singular.clone(),
        smooth: problem.hhat.smooth.add(&problem.perturbation.smooth),
    };
    let start = run.torus_point(&[0.0, 0.0], i0).unwrap();
    let traj = integrate_flow(
        &h_full,
        &run.form,
        &start,
        20.0,
        0.002,
        &FlowOptions::default(),
    )
    .unwrap();
    let mut worst = 0.0_f64;
    for s in traj.states.iter().step_by(100) {
        let back = run.pull_back(s).unwrap();
        for j in 0..2 {
            worst = worst.max((back.actions[j] - istar[j]).abs());
        }
    }
    assert!(worst < 1e-5, "tube deviation {worst:e}");
}

#[test]
fn strict_mode_stops_on_the_stated_hypotheses() {
    let (problem, schedule) = desk_problem(1e-6, 2e-4);
    let mut opts = default_opts();
    opts.strict = true;
    let run = run_kam(&problem, &schedule, &opts).unwrap();
    match run.stop {
        StopReason::HypothesisViolated { q: 0, ref which } => {
            assert!(which.contains("kam1"), "reason: {which}");
        }
        ref other => panic!("expected a hypothesis stop, got {other:?}"),
    }
    assert!(!run.hypothesis_warnings.is_empty());
}

#[test]
fn divergent_iterations_are_reported() {
    // a perturbation far too large for the tiny box: remainders grow
    let (mut problem, schedule) = desk_problem(1e-6, 2e-4);
    problem.perturbation = desk_perturbation(0.5, &problem.domain.midpoint());
    let err = run_kam(&problem, &schedule, &default_opts());
    assert!(err.is_err(), "expected failure, got {:?}", err.as_ref().map(|r| r.final_eps()));
}

#[test]
fn resonant_target_frequency_is_rejected() {
    // base the run at I0 = (1, 1.5): the mode (3, -2) resonates exactly
    // (3*1 - 2*1.5 = 0), which the stage pre-check must report
    let model = desk_model(2e-4);
    let i0 = vec![1.0, 1.5];
    let domain = bmkam::fourier::Domain::new(
        vec![1.0 - 2e-4, 1.5 - 2e-4],
        vec![1.0 + 2e-4, 1.5 + 2e-4],
        2.0,
        0.1,
    )
    .unwrap();
    let mut smooth = FourierTaylor::zero(2, 64, 8, i0.clone());
    smooth.add_term(&[0, 0], &[2, 0], num_complex::Complex64::new(0.5, 0.0));
    smooth.add_term(&[0, 0], &[0, 0], num_complex::Complex64::new(1.125, 0.0));
    smooth.add_term(&[0, 0], &[0, 1], num_complex::Complex64::new(1.5, 0.0));
    smooth.add_term(&[0, 0], &[0, 2], num_complex::Complex64::new(0.5, 0.0));
    let hhat = BmFunction::with_singular(
        SingularPart::new(1, 1.0, vec![]).unwrap(),
        smooth,
    );
    let schedule = desk_schedule(&model, 6);
    let problem = bmkam::driver::KamProblem {
        form: model.form.clone(),
        hhat,
        perturbation: desk_perturbation(1e-6, &i0),
        domain,
    };
    match run_kam(&problem, &schedule, &default_opts()) {
        Err(bmkam::Error::NonResonanceViolated(msg)) => {
            // any integer multiple of (3, -2) is exactly resonant here
            assert!(msg.contains("mode ["), "msg: {msg}");
        }
        Err(other) => panic!("expected a non-resonance rejection, got {other:?}"),
        Ok(run) => panic!("run must not proceed; final eps {:e}", run.final_eps()),
    }
}

#[test]
fn at_z_frequency_locks_to_the_inverse_modular_period() {
    let (problem, schedule) = desk_problem(1e-6, 2e-4);
    let run = run_kam(&problem, &schedule, &default_opts()).unwrap();
    // evaluate the reconstructed frequency map on the critical set
    let istar = vec![0.0, GOLDEN];
    let u = run.final_h.smooth.grad(&[0.0, 0.0], &istar).1;
    let b = run.form.b_factor(0.0).unwrap();
    let a = run
        .form
        .a_factor(run.final_h.singular.as_ref().unwrap(), 0.0)
        .unwrap();
    let first = b * u[0] + a;
    assert!((first - 1.0 / run.form.modular_period()).abs() < 1e-14);
}
