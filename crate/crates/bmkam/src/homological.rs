//! One normalization step: homological-equation solve, Lie-series
//! composition, remainder assembly.
//!
//! The generating function solves `{W, hhat} = R_{<=K} - R_0` mode by mode:
//! `W_k = R_k / (i (k1 B u1 + kbar.ubar + k1 A))`. The divisor depends on the
//! actions, so each mode is divided pointwise on a Chebyshev grid over `G`
//! and refitted by a polynomial; the fit residual is carried explicitly as
//! part of the new remainder, never dropped.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::fourier::{Domain, FourierTaylor};
use crate::numerics::PolyFitter;
use crate::singular::{ActionAngleForm, BmFunction, SingularPart};

/// Parameters of a single step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepParams {
    /// Truncation order K.
    pub k_trunc: i32,
    /// Non-resonance level alpha.
    pub alpha: f64,
    /// Width losses (delta1, delta2).
    pub delta: (f64, f64),
    /// Norm weight c.
    pub c_weight: f64,
    /// Frequency-Jacobian bound M.
    pub m_bound: f64,
    /// A = 1 + 2 M c / alpha.
    pub a_bound: f64,
}

impl StepParams {
    pub fn new(k_trunc: i32, alpha: f64, delta: (f64, f64), c_weight: f64, m_bound: f64) -> Result<Self> {
        if k_trunc < 1 || alpha <= 0.0 || delta.0 <= 0.0 || delta.1 <= 0.0 || c_weight <= 0.0 {
            return Err(Error::InvalidParams("step parameters must be positive".into()));
        }
        Ok(StepParams {
            k_trunc,
            alpha,
            delta,
            c_weight,
            m_bound,
            a_bound: 1.0 + 2.0 * m_bound * c_weight / alpha,
        })
    }

    pub fn delta_hat(&self) -> f64 {
        (self.c_weight * self.delta.0).min(self.delta.1)
    }
}

/// Numerical knobs for a step.
#[derive(Debug, Clone)]
pub struct StepOptions {
    /// Enforce the analytic preconditions (strict mode) instead of recording
    /// them as warnings.
    pub enforce: bool,
    /// Polynomial degree for divisor division and coefficient fits.
    pub fit_deg: u8,
    /// Minimum Lie-series order before the tail test may stop the expansion.
    pub lie_order: usize,
    pub exec: ExecMode,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            enforce: false,
            fit_deg: 8,
            lie_order: 6,
            exec: ExecMode::default(),
        }
    }
}

/// Outcome of the homological solve.
#[derive(Debug)]
pub struct HomologicalSolution {
    pub w: FourierTaylor,
    /// Explicit residual `R_k - i d_k W_k` on the solved modes.
    pub residual: FourierTaylor,
    pub divisor_min: f64,
    pub fit_residual: f64,
}

fn canonical_modes(r: &FourierTaylor, k_trunc: i32) -> Vec<Vec<i32>> {
    r.modes()
        .filter(|k| {
            let l1: i32 = k.iter().map(|x| x.abs()).sum();
            l1 > 0 && l1 <= k_trunc
        })
        .filter(|k| {
            // canonical representative: first nonzero component positive
            k.iter().find(|&&x| x != 0).map(|&x| x > 0).unwrap_or(false)
        })
        .cloned()
        .collect()
}

/// Solve `{W, hhat}_{<=K} = R_{<=K} - R_0` for the generating function.
///
/// `h_smooth` supplies the frequency map `u = dh/dI`; `sing` supplies the
/// singular contribution through `A(I1)`.
pub fn solve_homological(
    r: &FourierTaylor,
    h_smooth: &FourierTaylor,
    form: &ActionAngleForm,
    sing: Option<&SingularPart>,
    k_trunc: i32,
    dom: &Domain,
    alpha: f64,
    opts: &StepOptions,
) -> Result<HomologicalSolution> {
    let n = form.dof();
    let modes = canonical_modes(r, k_trunc);
    let grid = dom.grid(opts.fit_deg as usize + 3);
    let i0 = r.i0().to_vec();
    let fitter = PolyFitter::new(&grid, &i0, opts.fit_deg);
    let zero_phi = vec![0.0; n];

    // frequency values and scaling factors at the grid nodes (shared by all
    // modes)
    struct Node {
        u: Vec<f64>,
        b: f64,
        a: f64,
    }
    let nodes: Vec<Node> = grid
        .iter()
        .map(|p| -> Result<Node> {
            let (_, u) = h_smooth.grad(&zero_phi, p);
            let b = form.b_factor(p[0])?;
            let a = match sing {
                Some(s) => form.a_factor(s, p[0])?,
                None => 0.0,
            };
            Ok(Node { u, b, a })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_mode = map_indexed(opts.exec, &modes, |k| -> Result<_> {
        let mut dmin = f64::INFINITY;
        let mut wvals = Vec::with_capacity(grid.len());
        let mut rvals = Vec::with_capacity(grid.len());
        for (node, p) in nodes.iter().zip(&grid) {
            let mut d = k[0] as f64 * (node.b * node.u[0] + node.a);
            for j in 1..n {
                d += k[j] as f64 * node.u[j];
            }
            dmin = dmin.min(d.abs());
            if d.abs() < alpha {
                return Err(Error::SmallDivisor {
                    mode: k.clone(),
                    divisor: d.abs(),
                    alpha,
                });
            }
            let rk = r.mode_value(k, p);
            rvals.push((rk, d));
            wvals.push(rk / Complex64::new(0.0, d));
        }
        Ok((k.clone(), wvals, rvals, dmin))
    });

    let mut w = FourierTaylor::zero(n, k_trunc.max(r.k_cap()), opts.fit_deg.max(r.deg()), i0.clone());
    let mut residual = FourierTaylor::zero(n, w.k_cap(), w.deg(), i0.clone());
    let mut divisor_min = f64::INFINITY;
    let mut fit_residual: f64 = 0.0;
    let mut divisors: Vec<(Vec<i32>, Vec<f64>)> = Vec::new();
    for item in per_mode {
        let (k, wvals, rvals, dmin) = item?;
        divisor_min = divisor_min.min(dmin);
        let fr = w.set_mode_from_fit(&k, &fitter, &wvals)?;
        fit_residual = fit_residual.max(fr);
        divisors.push((k, rvals.iter().map(|(_, d)| *d).collect()));
    }
    // drop fit dust before the residual pass so the carried residual
    // reflects the generator actually returned
    w.prune_terms(dom, 1e-15);
    for (k, ds) in &divisors {
        let resvals: Vec<Complex64> = ds
            .iter()
            .zip(&grid)
            .map(|(d, p)| r.mode_value(k, p) - Complex64::new(0.0, *d) * w.mode_value(k, p))
            .collect();
        let fr = residual.set_mode_from_fit(k, &fitter, &resvals)?;
        fit_residual = fit_residual.max(fr);
    }
    residual.prune_terms(dom, 1e-13);
    Ok(HomologicalSolution {
        w,
        residual,
        divisor_min,
        fit_residual,
    })
}

/// Polynomial stand-ins for `B(I1)` (and `B u1 + A`) over a domain, with the
/// recorded fit residuals. Keeps the bracket algebra inside [`FourierTaylor`].
pub struct BracketContext {
    pub b_fit: FourierTaylor,
    pub b_fit_residual: f64,
}

impl BracketContext {
    pub fn new(
        form: &ActionAngleForm,
        dom: &Domain,
        i0: &[f64],
        k_cap: i32,
        deg: u8,
    ) -> Result<Self> {
        let n = form.dof();
        let form2 = form.clone();
        let f = move |p: &[f64]| form2.b_factor(p[0]).unwrap_or(f64::NAN);
        let (b_fit, b_fit_residual) =
            FourierTaylor::fit_action_function(n, k_cap, deg, i0, dom, &f)?;
        if !b_fit_residual.is_finite() {
            return Err(Error::DenominatorZero(dom.midpoint()[0]));
        }
        Ok(BracketContext {
            b_fit,
            b_fit_residual,
        })
    }

    /// `{a, b}` in the fixed module convention, as a capped product algebra.
    /// Returns the bracket, the certified capping loss and a bound on the
    /// error introduced by the polynomial `B` stand-in.
    pub fn bracket(
        &self,
        a: &FourierTaylor,
        b: &FourierTaylor,
        dom: &Domain,
    ) -> (FourierTaylor, f64, f64) {
        self.bracket_floored(a, b, dom, 0.0)
    }

    /// Bracket with a certified per-product floor (see
    /// [`FourierTaylor::mul_floored`]); all skipped mass is accounted in the
    /// loss term.
    pub fn bracket_floored(
        &self,
        a: &FourierTaylor,
        b: &FourierTaylor,
        dom: &Domain,
        floor: f64,
    ) -> (FourierTaylor, f64, f64) {
        let n = a.n();
        let mut lost = 0.0;
        // first-pair block, weighted by B
        let (t1, l1) = a.diff_angle(0).mul_floored(&b.diff_action(0), dom, floor);
        let (t2, l2) = a.diff_action(0).mul_floored(&b.diff_angle(0), dom, floor);
        lost += l1 + l2;
        let pair1 = t1.sub(&t2);
        let (weighted, l3) = pair1.mul_floored(&self.b_fit, dom, floor);
        lost += l3;
        let fit_err = self.b_fit_residual * pair1.weighted_norm(dom);
        let mut acc = weighted;
        for j in 1..n {
            let (p, la) = a.diff_angle(j).mul_floored(&b.diff_action(j), dom, floor);
            let (q, lb) = a.diff_action(j).mul_floored(&b.diff_angle(j), dom, floor);
            lost += la + lb;
            acc = acc.add(&p).sub(&q);
        }
        // keep iterated brackets from accreting negligible fit dust
        lost += acc.prune_terms(dom, 1e-14);
        (acc, lost, fit_err)
    }
}

/// `gamma_m(x) = sum_l l!/(l+m)! x^l` for `0 <= x < 1`.
pub fn gamma_series(m: usize, x: f64) -> f64 {
    let mut term = 1.0;
    for i in 1..=m {
        term /= i as f64;
    }
    let mut sum = term;
    let mut l = 0usize;
    loop {
        term *= (l + 1) as f64 / (l + 1 + m) as f64 * x;
        sum += term;
        l += 1;
        if term < 1e-18 * sum || l > 2000 {
            return sum;
        }
    }
}

/// Result of a truncated Lie transform.
pub struct LieSeries {
    pub sum: FourierTaylor,
    /// Analytic bound for the dropped tail (function norm on the shrunk
    /// domain).
    pub tail_bound: f64,
    pub cap_lost: f64,
    pub fit_error: f64,
    pub orders_used: usize,
}

fn lie_precondition(w: &FourierTaylor, dom: &Domain, delta: (f64, f64), c: f64) -> Result<f64> {
    let dw = w.derivative_norm(dom, c);
    let dhat = (c * delta.0).min(delta.1);
    let x = 2.0 * std::f64::consts::E * dw / dhat;
    if x >= 1.0 {
        return Err(Error::LieSeriesDiverges { ratio: x });
    }
    Ok(x)
}

/// Truncated Lie series `sum_{j=0}^{J} t^j/j! L_W^j f` (`J = opts.lie_order`)
/// for a smooth `f`, with the tail bound from the remainder lemma.
pub fn lie_transform(
    f: &FourierTaylor,
    w: &FourierTaylor,
    t: f64,
    ctx: &BracketContext,
    dom: &Domain,
    delta: (f64, f64),
    c: f64,
    opts: &StepOptions,
) -> Result<LieSeries> {
    let x = lie_precondition(w, dom, delta, c)?;
    let (first, lost, fe) = ctx.bracket(f, w, dom);
    let mut series = lie_sum_from(
        first,
        0,
        w,
        t,
        x,
        ctx,
        dom,
        opts.lie_order,
        f64::INFINITY,
        0.0,
    )?;
    series.cap_lost += lost;
    series.fit_error += fe;
    series.sum = f.add(&series.sum);
    Ok(series)
}

/// Accumulate `sum_{j > start_order} t^j/j! L_W^j f` given the first stored
/// term `first_term = L_W^{start_order + 1} f`. Expansion continues past
/// `min_order` until the analytic tail bound drops below `tail_target` (or a
/// hard cap is reached); the final tail bound is returned.
#[allow(clippy::too_many_arguments)]
fn lie_sum_from(
    first_term: FourierTaylor,
    start_order: usize,
    w: &FourierTaylor,
    t: f64,
    x: f64,
    ctx: &BracketContext,
    dom: &Domain,
    min_order: usize,
    tail_target: f64,
    mul_floor: f64,
) -> Result<LieSeries> {
    let hard_cap = (2 * min_order).max(min_order + 6);
    let mut term = first_term;
    let mut sum = FourierTaylor::zero(term.n(), term.k_cap(), term.deg(), term.i0().to_vec());
    let mut cap_lost = 0.0;
    let mut fit_error = 0.0;
    let mut factorial = 1.0;
    for i in 1..=start_order + 1 {
        factorial *= i as f64;
    }
    let mut j = start_order + 1;
    loop {
        sum = sum.add(&term.scale(t.powi(j as i32) / factorial));
        let (next, lost, fe) = ctx.bracket_floored(&term, w, dom, mul_floor);
        cap_lost += lost;
        fit_error += fe;
        let tail = gamma_series(j + 1, x) * t.powi((j + 1) as i32) * next.weighted_norm(dom);
        if (j >= min_order && tail <= tail_target) || j >= hard_cap {
            return Ok(LieSeries {
                sum,
                tail_bound: tail,
                cap_lost,
                fit_error,
                orders_used: j,
            });
        }
        j += 1;
        factorial *= j as f64;
        term = next;
    }
}

/// Per-step diagnostics; everything a reviewer of the iteration needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub eps_in: f64,
    pub eps_out: f64,
    /// Right-hand side of the contraction display.
    pub eps_bound_rhs: f64,
    pub bound_ok: bool,
    pub eta_out: f64,
    pub xi_out: f64,
    pub w_deriv_norm: f64,
    pub w_bound_rhs: f64,
    pub w_bound_ok: bool,
    pub transform_dist_bound: f64,
    pub divisor_min: f64,
    pub fit_residual: f64,
    pub lie_tail: f64,
    pub cap_lost: f64,
    pub hypothesis_violations: Vec<String>,
}

/// A completed step.
pub struct StepResult {
    pub w: FourierTaylor,
    pub h_new: BmFunction,
    pub r_new: FourierTaylor,
    pub diagnostics: StepDiagnostics,
}

/// Run one full normalization step on `H = hhat + R`.
pub fn kam_step(
    hhat: &BmFunction,
    r: &FourierTaylor,
    params: &StepParams,
    form: &ActionAngleForm,
    dom: &Domain,
    opts: &StepOptions,
) -> Result<StepResult> {
    if hhat.smooth.max_mode_l1() != 0 {
        return Err(Error::InvalidParams(
            "integrable part must not depend on the angles".into(),
        ));
    }
    let c = params.c_weight;
    let dhat = params.delta_hat();
    let eps_in = r.derivative_norm(dom, c);
    let mut violations = Vec::new();
    if eps_in > params.alpha * dhat / (74.0 * params.a_bound) {
        violations.push(format!(
            "|DR| = {eps_in:e} exceeds alpha*delta_hat/(74A) = {:e}",
            params.alpha * dhat / (74.0 * params.a_bound)
        ));
    }
    if dom.rho2 > params.alpha / (2.0 * params.m_bound * params.k_trunc as f64) {
        violations.push(format!(
            "rho2 = {:e} exceeds alpha/(2MK) = {:e}",
            dom.rho2,
            params.alpha / (2.0 * params.m_bound * params.k_trunc as f64)
        ));
    }
    if opts.enforce && !violations.is_empty() {
        return Err(Error::HypothesisViolated(violations.join("; ")));
    }

    let solution = solve_homological(
        r,
        &hhat.smooth,
        form,
        hhat.singular.as_ref(),
        params.k_trunc,
        dom,
        params.alpha,
        opts,
    )?;
    let w = solution.w;

    // h_new = hhat + R_0
    let r0 = r.angular_average();
    let mut h_new = hhat.clone();
    h_new.smooth = h_new.smooth.add(&r0);

    // {hhat, W} = -(R_{<=K} - R_0) + residual, exactly by construction
    let hw = r
        .truncate_low(params.k_trunc, false)
        .scale(-1.0)
        .add(&solution.residual);

    let ctx = BracketContext::new(form, dom, r.i0(), w.k_cap(), opts.fit_deg)?;
    let x = lie_precondition(&w, dom, params.delta, c)?;
    // tail budget: scaled tails must stay below 1e-2 of the incoming norm
    let tail_target = 1e-2 * eps_in * dhat / c;
    // certified product floor for the iterated brackets, well under the
    // tail budget
    let mul_floor = 1e-6 * tail_target;
    // r_2(hhat, W, 1): orders >= 2, built from L^1 hhat = hw
    let (l2h, lost_h1, fe_h1) = ctx.bracket_floored(&hw, &w, dom, mul_floor);
    let series_h = lie_sum_from(
        l2h,
        1,
        &w,
        1.0,
        x,
        &ctx,
        dom,
        opts.lie_order,
        tail_target,
        mul_floor,
    )?;
    // r_1(R, W, 1): orders >= 1
    let (l1r, lost_r1, fe_r1) = ctx.bracket_floored(r, &w, dom, mul_floor);
    let series_r = lie_sum_from(
        l1r,
        0,
        &w,
        1.0,
        x,
        &ctx,
        dom,
        opts.lie_order,
        tail_target,
        mul_floor,
    )?;

    let mut r_new = r
        .truncate_high(params.k_trunc)
        .add(&solution.residual)
        .add(&series_h.sum)
        .add(&series_r.sum);

    let dom_out = dom.shrunk(params.delta.0, params.delta.1)?;
    let pruned = r_new.prune_terms(&dom_out, 1e-14);

    let lie_tail = series_h.tail_bound + series_r.tail_bound;
    let cap_lost =
        series_h.cap_lost + series_r.cap_lost + lost_h1 + lost_r1 + pruned;
    let fit_spill = fe_h1 + fe_r1 + series_h.fit_error + series_r.fit_error;
    // convert dropped function-norm mass into a derivative-norm allowance
    let eps_out = r_new.derivative_norm(&dom_out, c)
        + (c / dhat) * (lie_tail + cap_lost + fit_spill);
    let eps_bound_rhs = (-(params.k_trunc as f64) * params.delta.0).exp() * eps_in
        + 14.0 * params.a_bound / (params.alpha * dhat) * eps_in * eps_in;
    let w_deriv_norm = w.derivative_norm(dom, c);
    let w_bound_rhs = 2.0 * params.a_bound / params.alpha * eps_in;

    let diagnostics = StepDiagnostics {
        eps_in,
        eps_out,
        eps_bound_rhs,
        bound_ok: eps_out <= eps_bound_rhs,
        eta_out: r_new.angular_average().weighted_norm(&dom_out),
        xi_out: r_new.angular_average().action_gradient_norm(&dom_out),
        w_deriv_norm,
        w_bound_rhs,
        w_bound_ok: w_deriv_norm <= w_bound_rhs,
        transform_dist_bound: 2.0 * params.a_bound / params.alpha * eps_in,
        divisor_min: solution.divisor_min,
        fit_residual: solution.fit_residual,
        lie_tail,
        cap_lost,
        hypothesis_violations: violations,
    };
    Ok(StepResult {
        w,
        h_new,
        r_new,
        diagnostics,
    })
}
