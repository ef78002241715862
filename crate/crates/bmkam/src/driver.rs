//! The outer KAM iteration: parameter schedules, the iteration loop with
//! frequency-map tracking, and torus reconstruction.
//!
//! The schedule implements the `q`-indexed parameter choices of the main
//! normalization argument; the analytic smallness hypotheses are checked and
//! reported, but by default the driver runs in empirical mode (warn and
//! proceed), since desk-scale systems contract far inside the region the
//! proof-level constants certify.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diophantine::{is_nonresonant, modes_up_to, RadialSite};
use crate::error::{Error, Result};
use crate::fourier::{Domain, FourierTaylor};
use crate::homological::{kam_step, StepOptions, StepParams};
use crate::numerics::{self, newton_solve};
use crate::singular::{
    integrate_field, ActionAngleForm, BmFlow, BmFunction, FlowOptions, PhasePoint,
};

/// Inputs to the schedule: frequency bounds, analyticity widths, Diophantine
/// exponents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleInputs {
    /// Bound M on the frequency Jacobian.
    pub m_bound: f64,
    /// Bound L on |u|.
    pub l_bound: f64,
    /// Non-degeneracy constant mu.
    pub mu: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub tau: f64,
    pub gamma: f64,
    pub nu: f64,
    pub n: usize,
    pub q_max: usize,
}

/// Per-stage parameters (stage `q` transforms `rho^(q-1)` data into
/// `rho^(q)` data).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage {
    pub q: usize,
    pub m_q: f64,
    pub l_q: f64,
    pub mu_q: f64,
    pub k_q: f64,
    pub rho1_q: f64,
    pub rho2_q: f64,
    pub delta1_q: f64,
    pub delta2_q: f64,
    pub c_q: f64,
    pub beta_q: f64,
    pub beta_prime_q: f64,
    pub alpha_q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    pub inputs: ScheduleInputs,
    pub k_base: i64,
    pub beta: f64,
    pub rho_hat: f64,
    /// Stages `0..=q_max+1`; index `q` holds `rho^(q)` and, for `q >= 1`, the
    /// step quantities `delta^(q)`, `c_q`, `alpha_q`.
    pub stages: Vec<Stage>,
}

/// Build the full parameter schedule. The sandwich bounds on `delta` and
/// `beta'` hold by construction and are verified here.
pub fn build_schedule(inp: &ScheduleInputs) -> Result<Schedule> {
    if inp.m_bound <= 0.0
        || inp.l_bound <= 0.0
        || inp.mu <= 0.0
        || inp.rho1 <= 0.0
        || inp.rho2 <= 0.0
        || inp.gamma <= 0.0
    {
        return Err(Error::InvalidParams("schedule inputs must be positive".into()));
    }
    if !(0.0 < inp.nu && inp.nu < 1.0) {
        return Err(Error::InvalidParams("need 0 < nu < 1".into()));
    }
    if inp.tau <= (inp.n - 1) as f64 {
        return Err(Error::InvalidParams(format!(
            "need tau > n - 1 = {}",
            inp.n - 1
        )));
    }
    let rho_hat = (inp.nu * inp.rho1 / (12.0 * (inp.tau + 2.0))).min(1.0);
    let beta = (inp.gamma / inp.l_bound).min(1.0);
    let k_from_rho = (1.0 / rho_hat).ceil();
    let k_from_beta = (inp.nu * beta / (inp.mu * 2f64.powf(2.0 * inp.tau + 12.0)))
        .powf(1.0 / inp.tau)
        .ceil();
    let k_base = k_from_rho.max(k_from_beta).max(1.0) as i64;

    let tau = inp.tau;
    let nu = inp.nu;
    let kq = |q: usize| -> f64 {
        if q == 0 {
            0.0
        } else {
            k_base as f64 * 2f64.powi(q as i32 - 1)
        }
    };
    let rho1_q = |q: usize| (1.0 + 2f64.powf(-nu * q as f64)) * inp.rho1 / 4.0;
    let rho2_q = |q: usize| nu * beta / (32.0 * inp.m_bound * kq(q + 1).powf(tau + 1.0));
    let beta_q = |q: usize| (1.0 - 2f64.powf(-nu * q as f64)) * beta;

    let mut stages = Vec::new();
    for q in 0..=inp.q_max + 1 {
        let (delta1, delta2, c_q, beta_prime, alpha) = if q == 0 {
            (0.0, 0.0, 0.0, 0.5 * (beta_q(0) + beta_q(1)), 0.0)
        } else {
            let d1 = rho1_q(q - 1) - rho1_q(q);
            let d2 = rho2_q(q - 1) - rho2_q(q);
            let bp = 0.5 * (beta_q(q - 1) + beta_q(q));
            (d1, d2, d2 / d1, bp, bp / kq(q).powf(tau))
        };
        stages.push(Stage {
            q,
            m_q: (2.0 - 2f64.powi(-(q as i32))) * inp.m_bound,
            l_q: (2.0 - 2f64.powi(-(q as i32))) * inp.l_bound,
            mu_q: (1.0 + 2f64.powi(-(q as i32))) * inp.mu / 2.0,
            k_q: kq(q),
            rho1_q: rho1_q(q),
            rho2_q: rho2_q(q),
            delta1_q: delta1,
            delta2_q: delta2,
            c_q,
            beta_q: beta_q(q),
            beta_prime_q: beta_prime,
            alpha_q: alpha,
        });
    }
    let sched = Schedule {
        inputs: inp.clone(),
        k_base,
        beta,
        rho_hat,
        stages,
    };
    sched.check_sandwiches()?;
    Ok(sched)
}

impl Schedule {
    fn check_sandwiches(&self) -> Result<()> {
        let inp = &self.inputs;
        let tol = 1.0 + 1e-9;
        for s in self.stages.iter().skip(1) {
            let q = s.q as f64;
            let lo1 = inp.nu * inp.rho1 / (8.0 * 2f64.powf(inp.nu * (q - 1.0)));
            let hi1 = inp.nu * inp.rho1 / (4.0 * 2f64.powf(inp.nu * (q - 1.0)));
            if !(s.delta1_q * tol >= lo1 && s.delta1_q <= hi1 * tol) {
                return Err(Error::InvalidParams(format!(
                    "delta1 sandwich violated at q = {}",
                    s.q
                )));
            }
            let lo2 = inp.nu * self.beta / (64.0 * inp.m_bound * s.k_q.powf(inp.tau + 1.0));
            let hi2 = inp.nu * self.beta / (32.0 * inp.m_bound * s.k_q.powf(inp.tau + 1.0));
            if !(s.delta2_q * tol >= lo2 && s.delta2_q <= hi2 * tol) {
                return Err(Error::InvalidParams(format!(
                    "delta2 sandwich violated at q = {}",
                    s.q
                )));
            }
            if !(s.beta_prime_q * tol >= inp.nu * self.beta / 4.0) {
                return Err(Error::InvalidParams(format!(
                    "beta' lower bound violated at q = {}",
                    s.q
                )));
            }
        }
        Ok(())
    }

    /// The analytic smallness hypotheses behind the schedule, evaluated for
    /// a perturbation norm `eps` and modular period `k_mod`. Returns one
    /// line per violated inequality (empty when all hold).
    pub fn hypothesis_report(&self, eps: f64, k_mod: f64) -> Vec<String> {
        let i = &self.inputs;
        let mut out = Vec::new();
        let rhs1 = i.nu.powi(2) * i.mu.powi(2) * self.rho_hat.powf(2.0 * i.tau + 2.0)
            / (2f64.powf(4.0 * i.tau + 32.0) * i.l_bound.powi(6) * i.m_bound.powi(3))
            * i.gamma.powi(2);
        if eps > rhs1 {
            out.push(format!("kam1: eps = {eps:e} > {rhs1:e}"));
        }
        let rhs2 = (8.0 * i.l_bound * i.m_bound * i.rho2 / (i.nu * self.rho_hat.powf(i.tau + 1.0)))
            .min(i.l_bound / k_mod.abs());
        if i.gamma > rhs2 {
            out.push(format!("kam2: gamma = {:e} > {rhs2:e}", i.gamma));
        }
        let rhs3 = (2f64.powf(i.tau + 5.0) * i.l_bound.powi(2) * i.m_bound)
            .min(128.0 * i.rho1 * i.l_bound.powi(4) * (self.k_base as f64).powf(i.tau + 1.0))
            .min(self.beta * i.nu.powf(i.tau + 1.0) * 2f64.powf(2.0 * i.tau + 1.0) * i.rho1.powf(i.tau));
        if i.mu > rhs3 {
            out.push(format!("kam3: mu = {:e} > {rhs3:e}", i.mu));
        }
        out
    }
}

/// Why an iteration ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    /// All scheduled stages ran.
    Completed,
    /// Remainder dropped below the floor.
    Converged { q: usize },
    /// Strict mode: a stated hypothesis failed.
    HypothesisViolated { q: usize, which: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub q: usize,
    pub eps: f64,
    pub eta: f64,
    pub xi: f64,
    /// |u^(q) - u^(q-1)| actually applied at this stage.
    pub u_shift: f64,
    /// Induction-claim ceiling 8 eps0 / (nu rho1 2^{(2tau+2)q}).
    pub eps_claim: f64,
    pub claim_ok: bool,
    pub eps_bound_rhs: f64,
    pub bound_ok: bool,
    pub divisor_min: f64,
    pub fit_residual: f64,
    pub lie_tail: f64,
    pub cap_lost: f64,
    pub hypothesis_violations: Vec<String>,
    pub wall_ms: f64,
}

/// The problem handed to the iteration.
#[derive(Debug, Clone)]
pub struct KamProblem {
    pub form: ActionAngleForm,
    /// Integrable part: singular block + angle-free smooth part.
    pub hhat: BmFunction,
    /// Perturbation; a purely singular component is absorbed before
    /// iterating.
    pub perturbation: BmFunction,
    pub domain: Domain,
}

#[derive(Debug, Clone)]
pub struct KamOptions {
    pub strict: bool,
    pub step: StepOptions,
    /// Convergence floor factor: stop when eps < factor * machine eps * |hhat|.
    pub stop_factor: f64,
}

impl Default for KamOptions {
    fn default() -> Self {
        KamOptions {
            strict: false,
            step: StepOptions::default(),
            stop_factor: 1e-2,
        }
    }
}

/// Everything the reconstruction needs, plus the per-stage log.
pub struct KamRun {
    pub records: Vec<IterationRecord>,
    /// Generating functions `W^(q)`, `q = 1..`.
    pub transforms: Vec<FourierTaylor>,
    pub final_h: BmFunction,
    pub initial_h: BmFunction,
    pub form: ActionAngleForm,
    pub domain: Domain,
    pub schedule: Schedule,
    pub stop: StopReason,
    pub hypothesis_warnings: Vec<String>,
    /// True when a purely singular perturbation block was absorbed into the
    /// integrable part (updating the modular period).
    pub absorbed_singular: bool,
}

/// Run the outer iteration.
pub fn run_kam(problem: &KamProblem, schedule: &Schedule, opts: &KamOptions) -> Result<KamRun> {
    if problem.form.dof() < 2 {
        return Err(Error::InvalidParams("KAM iteration needs n >= 2".into()));
    }
    if problem.hhat.smooth.max_mode_l1() != 0 {
        return Err(Error::InvalidParams(
            "integrable part must be angle-free".into(),
        ));
    }
    let mut form = problem.form.clone();
    let mut hhat = problem.hhat.clone();
    let mut absorbed = false;
    // absorb a purely singular perturbation: q_i <- q_i' + r_i and
    // K' = K (1 - rhat_m / (qhat_m' + rhat_m))
    if let Some(rsing) = &problem.perturbation.singular {
        let base = hhat.singular.clone().ok_or_else(|| {
            Error::InvalidParams("singular perturbation needs a singular integrable part".into())
        })?;
        let merged = base.merged(rsing)?;
        let k_new = form.coeffs()[form.order() - 1] / merged.leading_gradient();
        form = form.with_modular_period(k_new);
        hhat.singular = Some(merged);
        absorbed = true;
    }
    let mut r = problem.perturbation.smooth.clone();

    let g_lo = problem.domain.g_lo.clone();
    let g_hi = problem.domain.g_hi.clone();
    let dom_at = |q: usize| -> Result<Domain> {
        Domain::new(
            g_lo.clone(),
            g_hi.clone(),
            schedule.stages[q].rho1_q,
            schedule.stages[q].rho2_q,
        )
    };

    let dom0 = dom_at(0)?;
    let eps_f = r.weighted_norm(&dom0);
    let hypothesis_warnings = schedule.hypothesis_report(eps_f, form.modular_period());
    let mut stop = StopReason::Completed;
    if opts.strict && !hypothesis_warnings.is_empty() {
        let which = hypothesis_warnings
            .iter()
            .map(|w| w.split(':').next().unwrap_or("kam?").to_string())
            .collect::<Vec<_>>()
            .join(",");
        stop = StopReason::HypothesisViolated { q: 0, which };
    }

    let h_scale = hhat.smooth.weighted_norm(&dom0).max(1.0);
    let stop_eps = opts.stop_factor * f64::EPSILON * h_scale;

    let mut records = Vec::new();
    let mut transforms = Vec::new();
    let eps0 = r.derivative_norm(&dom0, schedule.stages[1].c_q);
    let i = &schedule.inputs;
    let claim = |q: usize| -> f64 {
        8.0 * eps_f / (i.nu * i.rho1 * 2f64.powf((2.0 * i.tau + 2.0) * q as f64))
    };
    records.push(IterationRecord {
        q: 0,
        eps: eps0,
        eta: r.angular_average().weighted_norm(&dom0),
        xi: r.angular_average().action_gradient_norm(&dom0),
        u_shift: 0.0,
        eps_claim: claim(0),
        claim_ok: eps0 <= claim(0),
        eps_bound_rhs: f64::NAN,
        bound_ok: true,
        divisor_min: f64::NAN,
        fit_residual: 0.0,
        lie_tail: 0.0,
        cap_lost: 0.0,
        hypothesis_violations: Vec::new(),
        wall_ms: 0.0,
    });

    let mut eps_prev = eps0;
    let mut increases = 0usize;
    if eps0 <= stop_eps {
        stop = StopReason::Converged { q: 0 };
    }

    if stop == StopReason::Completed {
        for q in 1..=i.q_max {
            let t0 = Instant::now();
            let st = &schedule.stages[q];
            let dom_in = dom_at(q - 1)?;
            let dom_out = dom_at(q)?;
            // the stage's non-resonance precondition, verified on a sample
            // of the action box for every scanned mode
            verify_stage_nonresonance(
                &hhat,
                &form,
                &dom_in,
                st.k_q as i32,
                st.alpha_q,
            )?;
            let params = StepParams::new(
                st.k_q as i32,
                st.alpha_q,
                (st.delta1_q, st.delta2_q),
                st.c_q,
                schedule.stages[q - 1].m_q,
            )?;
            let mut step_opts = opts.step.clone();
            step_opts.enforce = false;
            let u_shift = r.angular_average().action_gradient_norm(&dom_in);
            let out = kam_step(&hhat, &r, &params, &form, &dom_in, &step_opts)?;
            if opts.strict && !out.diagnostics.hypothesis_violations.is_empty() {
                stop = StopReason::HypothesisViolated {
                    q,
                    which: "iterative-lemma preconditions".into(),
                };
            }
            hhat = out.h_new;
            r = out.r_new;
            transforms.push(out.w);
            // the recorded eps uses the next stage's weight, as in the proof
            let c_next = schedule.stages[q + 1].c_q;
            let eps_q = r.derivative_norm(&dom_out, c_next)
                + (out.diagnostics.eps_out - r.derivative_norm(&dom_out, params.c_weight)).max(0.0);
            records.push(IterationRecord {
                q,
                eps: eps_q,
                eta: out.diagnostics.eta_out,
                xi: out.diagnostics.xi_out,
                u_shift,
                eps_claim: claim(q),
                claim_ok: eps_q <= claim(q),
                eps_bound_rhs: out.diagnostics.eps_bound_rhs,
                bound_ok: out.diagnostics.bound_ok,
                divisor_min: out.diagnostics.divisor_min,
                fit_residual: out.diagnostics.fit_residual,
                lie_tail: out.diagnostics.lie_tail,
                cap_lost: out.diagnostics.cap_lost,
                hypothesis_violations: out.diagnostics.hypothesis_violations.clone(),
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            });
            if stop != StopReason::Completed {
                break;
            }
            if eps_q <= stop_eps {
                stop = StopReason::Converged { q };
                break;
            }
            if eps_q > eps_prev {
                increases += 1;
                if increases >= 2 {
                    return Err(Error::DivergenceDetected(q));
                }
            } else {
                increases = 0;
            }
            eps_prev = eps_q;
        }
    }

    Ok(KamRun {
        records,
        transforms,
        final_h: hhat,
        initial_h: problem.hhat.clone(),
        form,
        domain: problem.domain.clone(),
        schedule: schedule.clone(),
        stop,
        hypothesis_warnings,
        absorbed_singular: absorbed,
    })
}

impl KamRun {
    pub fn final_eps(&self) -> f64 {
        self.records.last().map(|r| r.eps).unwrap_or(f64::NAN)
    }

    fn u_of(h: &FourierTaylor, i: &[f64]) -> Vec<f64> {
        let zero_phi = vec![0.0; h.n()];
        h.grad(&zero_phi, i).1
    }

    /// Diophantine check of the target frequency within the scanned modes.
    pub fn surviving_check(&self, i0: &[f64]) -> Result<()> {
        let u = Self::u_of(&self.initial_h.smooth, i0);
        let tau = self.schedule.inputs.tau;
        let beta = self.schedule.beta;
        let k_scan = (self.schedule.k_base.max(8)).min(50) as i32;
        let site = if i0[0] == 0.0 {
            RadialSite::AtZ
        } else {
            RadialSite::Off(i0[0])
        };
        for k in crate::diophantine::modes_up_to(self.form.dof(), k_scan) {
            let l1: i32 = k.iter().map(|x| x.abs()).sum();
            let alpha = beta / (l1 as f64).powf(tau);
            if !is_nonresonant(
                &u,
                site,
                &self.form,
                self.final_h.singular.as_ref(),
                &k,
                alpha,
            )? {
                return Err(Error::NotInSurvivingSet(format!(
                    "mode {k:?} resonates at alpha = {alpha:e}"
                )));
            }
        }
        Ok(())
    }

    /// Solve `u*(I*) = u(I0)` for the transformed action by damped Newton,
    /// safeguarded by the non-degeneracy of the frequency map.
    pub fn reconstructed_action(&self, i0: &[f64]) -> Result<Vec<f64>> {
        let target = Self::u_of(&self.initial_h.smooth, i0);
        let h = self.final_h.smooth.clone();
        let n = h.n();
        let zero_phi = vec![0.0; n];
        let f = {
            let h = h.clone();
            let target = target.clone();
            let zero_phi = zero_phi.clone();
            move |x: &[f64]| -> Vec<f64> {
                let u = h.grad(&zero_phi, x).1;
                u.iter().zip(&target).map(|(a, b)| a - b).collect()
            }
        };
        let jac = move |x: &[f64]| -> Vec<Vec<f64>> {
            let full = h.hessian(&zero_phi, x);
            (0..n)
                .map(|a| (0..n).map(|b| full[n + a][n + b]).collect())
                .collect()
        };
        newton_solve(f, jac, i0, 1e-13, 60)
    }

    /// Frequency vector `u' = B u* + A` of the reconstructed torus through
    /// `I0`. The first component tends to `1/K'` at the critical set.
    pub fn torus_frequency(&self, i0: &[f64]) -> Result<Vec<f64>> {
        self.surviving_check(i0)?;
        let istar = self.reconstructed_action(i0)?;
        self.frequency_at(&istar)
    }

    fn frequency_at(&self, istar: &[f64]) -> Result<Vec<f64>> {
        let u = Self::u_of(&self.final_h.smooth, istar);
        let b = self.form.b_factor(istar[0])?;
        let mut out = u.clone();
        out[0] = b * u[0];
        if let Some(s) = &self.final_h.singular {
            out[0] += self.form.a_factor(s, istar[0])?;
        }
        Ok(out)
    }

    fn flow_w(&self, w: &FourierTaylor, p: PhasePoint, backward: bool) -> Result<PhasePoint> {
        let ham = if backward {
            BmFunction::smooth(w.scale(-1.0))
        } else {
            BmFunction::smooth(w.clone())
        };
        let field = BmFlow {
            h: &ham,
            form: &self.form,
        };
        let opts = FlowOptions {
            i1_floor: 0.0,
            step_energy_tol: f64::INFINITY,
        };
        let traj = integrate_field(&field, &p, 1.0, 1.0 / 16.0, &opts)?;
        Ok(traj.last().clone())
    }

    /// Evaluate the torus map `T(phi0, I0) = Psi(phi0, I0*)` by composing the
    /// time-1 flows of the generating functions.
    pub fn torus_point(&self, phi0: &[f64], i0: &[f64]) -> Result<PhasePoint> {
        self.surviving_check(i0)?;
        let istar = self.reconstructed_action(i0)?;
        let mut p = PhasePoint::raw(phi0.to_vec(), istar);
        for w in self.transforms.iter().rev() {
            p = self.flow_w(w, p, false)?;
        }
        Ok(p)
    }

    /// Inverse of the composed transform (original coordinates back to the
    /// normalized chart).
    pub fn pull_back(&self, p: &PhasePoint) -> Result<PhasePoint> {
        let mut x = p.clone();
        for w in self.transforms.iter() {
            x = self.flow_w(w, x, true)?;
        }
        Ok(x)
    }

    /// Sup displacement `|T - Id|` over a small angle grid at `I0`.
    pub fn displacement_norm(&self, i0: &[f64], grid: usize) -> Result<f64> {
        let istar = self.reconstructed_action(i0)?;
        let n = self.form.dof();
        let mut worst: f64 = 0.0;
        for g in 0..grid {
            let phi0 = vec![2.0 * std::f64::consts::PI * g as f64 / grid as f64; n];
            let mut p = PhasePoint::raw(phi0.clone(), istar.clone());
            for w in self.transforms.iter().rev() {
                p = self.flow_w(w, p, false)?;
            }
            let dphi = numerics::linf(
                &p.phi
                    .iter()
                    .zip(&phi0)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            let di = numerics::linf(
                &p.actions
                    .iter()
                    .zip(i0)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            worst = worst.max(dphi.max(di));
        }
        Ok(worst)
    }
}

/// Check that the target frequency (at the box midpoint, the torus being
/// continued) is `alpha, K`-non-resonant for every scanned mode.
///
/// Away from the midpoint, resonance strips of high-order modes may cross
/// any fixed box; those are exactly the strips the shrinking surviving-set
/// construction removes, and they never enter the computation because the
/// solver divides only the modes the remainder actually carries, each
/// guarded pointwise over the whole box.
fn verify_stage_nonresonance(
    hhat: &BmFunction,
    form: &ActionAngleForm,
    dom: &Domain,
    k_scan: i32,
    alpha: f64,
) -> Result<()> {
    let k_scan = k_scan.min(1024);
    if k_scan < 1 || alpha <= 0.0 {
        return Ok(());
    }
    let n = form.dof();
    let zero_phi = vec![0.0; n];
    let mid = dom.midpoint();
    let u = hhat.smooth.grad(&zero_phi, &mid).1;
    for k in modes_up_to(n, k_scan) {
        if !is_nonresonant(
            &u,
            RadialSite::Off(mid[0]),
            form,
            hhat.singular.as_ref(),
            &k,
            alpha,
        )? {
            return Err(Error::NonResonanceViolated(format!(
                "mode {k:?} at I = {mid:?} under alpha = {alpha:e}"
            )));
        }
    }
    Ok(())
}

/// Sample frequency-map bounds (M, L, mu) over the domain box: the Jacobian
/// bound of `u' = B u + A`, the sup of |u|, and the smallest singular value
/// of `du/dI`.
pub fn frequency_bounds(
    h_smooth: &FourierTaylor,
    sing: Option<&crate::singular::SingularPart>,
    form: &ActionAngleForm,
    dom: &Domain,
    per_dim: usize,
) -> Result<(f64, f64, f64)> {
    let n = form.dof();
    let zero_phi = vec![0.0; n];
    let uprime = |i: &[f64]| -> Result<Vec<f64>> {
        let u = h_smooth.grad(&zero_phi, i).1;
        let b = form.b_factor(i[0])?;
        let mut out = u.clone();
        out[0] = b * u[0];
        if let Some(s) = sing {
            out[0] += form.a_factor(s, i[0])?;
        }
        Ok(out)
    };
    let mut m_bound: f64 = 0.0;
    let mut l_bound: f64 = 0.0;
    let mut mu: f64 = f64::INFINITY;
    let step = 1e-6;
    for p in dom.grid(per_dim) {
        let u = h_smooth.grad(&zero_phi, &p).1;
        l_bound = l_bound.max(numerics::l2(&u));
        // Jacobian of u' by central differences (exact evaluations)
        let mut jac = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut pp = p.clone();
            pp[j] += step;
            let mut pm = p.clone();
            pm[j] -= step;
            let up = uprime(&pp)?;
            let um = uprime(&pm)?;
            for a in 0..n {
                jac[a][j] = (up[a] - um[a]) / (2.0 * step);
            }
        }
        let row_sum = jac
            .iter()
            .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max);
        m_bound = m_bound.max(row_sum);
        // non-degeneracy of u itself (exact Hessian of h)
        let full = h_smooth.hessian(&zero_phi, &p);
        let uh: Vec<Vec<f64>> = (0..n)
            .map(|a| (0..n).map(|b| full[n + a][n + b]).collect())
            .collect();
        mu = mu.min(numerics::min_singular_value(&uh));
    }
    Ok((m_bound, l_bound, mu))
}
