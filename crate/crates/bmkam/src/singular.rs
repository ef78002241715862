//! b^m-functions, the action-angle b^m-symplectic form, the singular Poisson
//! bracket, Hamiltonian vector fields and trajectory integration.
//!
//! Conventions used throughout the crate (one fixed choice, applied
//! everywhere):
//!
//! ```text
//! {f,g} = B(I1) (df/dphi1 dg/dI1 - df/dI1 dg/dphi1)
//!         + sum_{i>=2} (df/dphi_i dg/dI_i - df/dI_i dg/dphi_i)
//! ```
//!
//! with `B(I1) = 1 / sum_j c_j I1^{-j}`, and Hamilton's equations derived
//! from `xdot = {x, H}`:
//!
//! ```text
//! phidot_1 = B dH/dI1,   Idot_1 = -B dH/dphi1,
//! phidot_i =   dH/dI_i,  Idot_i =   -dH/dphi_i   (i >= 2).
//! ```
//!
//! With this pairing `{I_i, phi_i} = -1` away from the weight, the
//! unperturbed frequency vector is `u' = (B u_1 + A, u_2, ..., u_n)`, and the
//! mode-wise division `W_k = R_k / (i (k1 B u1 + kbar.ubar + k1 A))` makes
//! `{hhat, W}` cancel the low angular part of a perturbation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::FourierTaylor;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// The Laurent/log singular block `zeta(x) = q0 log x + sum_i q_i x^{-i}` of a
/// b^m-function, with constant coefficients (normal-form assumption).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularPart {
    m: usize,
    q0: f64,
    q: Vec<f64>,
}

impl SingularPart {
    pub fn new(m: usize, q0: f64, q: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParams("singularity order m must be >= 1".into()));
        }
        if q.len() != m - 1 {
            return Err(Error::InvalidParams(format!(
                "expected {} inverse-power coefficients for m = {m}, got {}",
                m - 1,
                q.len()
            )));
        }
        Ok(SingularPart { m, q0, q })
    }

    pub fn order(&self) -> usize {
        self.m
    }
    pub fn log_coeff(&self) -> f64 {
        self.q0
    }
    pub fn inv_coeffs(&self) -> &[f64] {
        &self.q
    }

    /// Gradient coefficients `qhat_1 = q0`, `qhat_i = -(i-1) q_{i-1}`, so that
    /// `zeta'(x) = sum_j qhat_j x^{-j}`.
    pub fn gradient_coeffs(&self) -> Vec<f64> {
        let mut qh = Vec::with_capacity(self.m);
        qh.push(self.q0);
        for i in 2..=self.m {
            qh.push(-((i - 1) as f64) * self.q[i - 2]);
        }
        qh
    }

    /// Leading gradient coefficient; a maximal-degree singularity needs it
    /// nonzero.
    pub fn leading_gradient(&self) -> f64 {
        *self.gradient_coeffs().last().unwrap()
    }

    pub fn value(&self, i1: f64) -> f64 {
        let mut v = self.q0 * i1.abs().ln();
        for (i, &qi) in self.q.iter().enumerate() {
            v += qi * i1.powi(-((i + 1) as i32));
        }
        v
    }

    pub fn derivative(&self, i1: f64) -> f64 {
        self.gradient_coeffs()
            .iter()
            .enumerate()
            .map(|(j, &qh)| qh * i1.powi(-((j + 1) as i32)))
            .sum()
    }

    /// Add another singular block (same or lower order), coefficient-wise.
    pub fn merged(&self, other: &SingularPart) -> Result<SingularPart> {
        if other.m > self.m {
            return Err(Error::OrderMismatch {
                found: other.m,
                max: self.m,
            });
        }
        let mut q = self.q.clone();
        for (i, &r) in other.q.iter().enumerate() {
            q[i] += r;
        }
        SingularPart::new(self.m, self.q0 + other.q0, q)
    }
}

/// Action-angle b^m-symplectic form data: `omega = (sum_j c_j / I1^j) dI1 ^
/// dphi1 + sum_{i>=2} dI_i ^ dphi_i`, plus the modular period.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionAngleForm {
    n: usize,
    m: usize,
    c: Vec<f64>,
    k_mod: f64,
}

impl ActionAngleForm {
    pub fn new(n: usize, m: usize, c: Vec<f64>, k_mod: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParams("need n >= 1 and m >= 1".into()));
        }
        if c.len() != m {
            return Err(Error::InvalidParams(format!(
                "expected {m} Laurent coefficients, got {}",
                c.len()
            )));
        }
        if c[m - 1] == 0.0 {
            return Err(Error::InvalidParams("leading coefficient c_m must be nonzero".into()));
        }
        Ok(ActionAngleForm { n, m, c, k_mod })
    }

    /// Build the form paired with a singular Hamiltonian block, deriving the
    /// modular period from `c_m / qhat_m`.
    pub fn paired_with(n: usize, c: Vec<f64>, sing: &SingularPart) -> Result<Self> {
        let m = c.len();
        if sing.order() != m {
            return Err(Error::OrderMismatch {
                found: sing.order(),
                max: m,
            });
        }
        let qh_m = sing.leading_gradient();
        if qh_m == 0.0 {
            return Err(Error::InvalidParams(
                "maximal-degree singularity requires qhat_m != 0".into(),
            ));
        }
        let k_mod = c[m - 1] / qh_m;
        ActionAngleForm::new(n, m, c, k_mod)
    }

    pub fn dof(&self) -> usize {
        self.n
    }
    pub fn order(&self) -> usize {
        self.m
    }
    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }
    pub fn modular_period(&self) -> f64 {
        self.k_mod
    }
    pub fn with_modular_period(mut self, k_mod: f64) -> Self {
        self.k_mod = k_mod;
        self
    }

    /// Compatibility `c_m / qhat_m = K'` when paired with a singular part.
    pub fn pairing_residual(&self, sing: &SingularPart) -> f64 {
        (self.c[self.m - 1] / sing.leading_gradient() - self.k_mod).abs()
    }

    /// `sum_j c_j I1^{m-j}`: the Laurent sum cleared of negative powers.
    fn s_poly(&self, i1: f64) -> f64 {
        let mut s = 0.0;
        for (idx, &cj) in self.c.iter().enumerate() {
            let j = idx + 1;
            s += cj * i1.powi((self.m - j) as i32);
        }
        s
    }

    fn s_poly_prime(&self, i1: f64) -> f64 {
        let mut s = 0.0;
        for (idx, &cj) in self.c.iter().enumerate() {
            let j = idx + 1;
            let e = (self.m - j) as i32;
            if e > 0 {
                s += cj * e as f64 * i1.powi(e - 1);
            }
        }
        s
    }

    /// `sum_j c_j / I1^j`; diverges at the critical set.
    pub fn laurent_sum(&self, i1: f64) -> Result<f64> {
        if i1 == 0.0 {
            return Err(Error::DenominatorZero(0.0));
        }
        Ok(self.s_poly(i1) / i1.powi(self.m as i32))
    }

    /// `B(I1) = 1 / (sum c_j I1^{-j})`; `I1 = 0` is the at-Z sentinel and
    /// returns the limit value 0.
    pub fn b_factor(&self, i1: f64) -> Result<f64> {
        let s = self.s_poly(i1);
        if s == 0.0 {
            return Err(Error::DenominatorZero(i1));
        }
        Ok(i1.powi(self.m as i32) / s)
    }

    /// Exact derivative of `B`.
    pub fn b_factor_prime(&self, i1: f64) -> Result<f64> {
        let s = self.s_poly(i1);
        if s == 0.0 {
            return Err(Error::DenominatorZero(i1));
        }
        let m = self.m as i32;
        let num = (m as f64) * i1.powi(m - 1) * s - i1.powi(m) * self.s_poly_prime(i1);
        Ok(num / (s * s))
    }

    /// `A(I1) = (sum qhat_j I1^{-j}) / (sum c_j I1^{-j})`; at the sentinel
    /// `I1 = 0` this is the limit `qhat_m / c_m = 1/K'`.
    pub fn a_factor(&self, sing: &SingularPart, i1: f64) -> Result<f64> {
        if sing.order() > self.m {
            return Err(Error::OrderMismatch {
                found: sing.order(),
                max: self.m,
            });
        }
        let s = self.s_poly(i1);
        if s == 0.0 {
            return Err(Error::DenominatorZero(i1));
        }
        let qh = sing.gradient_coeffs();
        let mut num = 0.0;
        for (idx, &q) in qh.iter().enumerate() {
            let j = idx + 1;
            num += q * i1.powi((self.m - j) as i32);
        }
        Ok(num / s)
    }
}

/// A phase-space point. Angles are stored as given; [`PhasePoint::new`]
/// canonicalizes them into `[0, 2 pi)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhasePoint {
    pub phi: Vec<f64>,
    pub actions: Vec<f64>,
    pub side: i8,
}

impl PhasePoint {
    pub fn new(phi: Vec<f64>, actions: Vec<f64>) -> Self {
        let phi = phi.into_iter().map(canonical_angle).collect();
        Self::raw(phi, actions)
    }

    /// Keep angles as given (continuous trajectories, non-periodic charts).
    pub fn raw(phi: Vec<f64>, actions: Vec<f64>) -> Self {
        assert_eq!(phi.len(), actions.len());
        let side = if actions[0] > 0.0 {
            1
        } else if actions[0] < 0.0 {
            -1
        } else {
            0
        };
        PhasePoint { phi, actions, side }
    }

    pub fn i1(&self) -> f64 {
        self.actions[0]
    }

    pub fn canonical(&self) -> PhasePoint {
        PhasePoint::new(self.phi.clone(), self.actions.clone())
    }
}

pub fn canonical_angle(x: f64) -> f64 {
    let mut y = x % TWO_PI;
    if y < 0.0 {
        y += TWO_PI;
    }
    y
}

/// A b^m-function: optional singular block in `I1` plus a smooth part.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BmFunction {
    pub singular: Option<SingularPart>,
    pub smooth: FourierTaylor,
}

impl BmFunction {
    pub fn smooth(smooth: FourierTaylor) -> Self {
        BmFunction {
            singular: None,
            smooth,
        }
    }

    pub fn with_singular(sing: SingularPart, smooth: FourierTaylor) -> Self {
        BmFunction {
            singular: Some(sing),
            smooth,
        }
    }

    pub fn value(&self, p: &PhasePoint) -> f64 {
        let mut v = self.smooth.eval(&p.phi, &p.actions);
        if let Some(s) = &self.singular {
            v += s.value(p.i1());
        }
        v
    }

    /// Check the singular order against a form.
    pub fn check_order(&self, form: &ActionAngleForm) -> Result<()> {
        if let Some(s) = &self.singular {
            if s.order() > form.order() {
                return Err(Error::OrderMismatch {
                    found: s.order(),
                    max: form.order(),
                });
            }
        }
        Ok(())
    }

    /// Hamiltonian pair velocity `(phidot, Idot)` under the form. Finite at
    /// the critical set: the singular contribution enters through the stable
    /// ratio `A(I1)`.
    pub fn pair_velocity(
        &self,
        form: &ActionAngleForm,
        phi: &[f64],
        actions: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_order(form)?;
        let i1 = actions[0];
        let b = form.b_factor(i1)?;
        let (gphi, gact) = self.smooth.gradient_pair(phi, actions);
        let n = form.dof();
        let mut phidot = vec![0.0; n];
        let mut idot = vec![0.0; n];
        phidot[0] = b * gact[0];
        if let Some(s) = &self.singular {
            phidot[0] += form.a_factor(s, i1)?;
        }
        idot[0] = -b * gphi[0];
        for j in 1..n {
            phidot[j] = gact[j];
            idot[j] = -gphi[j];
        }
        Ok((phidot, idot))
    }
}

// FourierTaylor::grad allocates names (dphi, dI); keep a small alias so call
// sites in this module read as a pair.
trait GradientPair {
    fn gradient_pair(&self, phi: &[f64], i: &[f64]) -> (Vec<f64>, Vec<f64>);
}
impl GradientPair for FourierTaylor {
    fn gradient_pair(&self, phi: &[f64], i: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.grad(phi, i)
    }
}

/// The Hamiltonian vector field of `f` at `p`: `(phidot, Idot)`, the
/// generator of `xdot = {x, f}`.
pub fn hamiltonian_vector_field(
    f: &BmFunction,
    form: &ActionAngleForm,
    p: &PhasePoint,
) -> Result<(Vec<f64>, Vec<f64>)> {
    f.pair_velocity(form, &p.phi, &p.actions)
}

/// Pointwise singular Poisson bracket `{f, g}` at `p`.
pub fn poisson_bracket(
    f: &BmFunction,
    g: &BmFunction,
    form: &ActionAngleForm,
    p: &PhasePoint,
) -> Result<f64> {
    f.check_order(form)?;
    g.check_order(form)?;
    let i1 = p.i1();
    let b = form.b_factor(i1)?;
    let (f_phi, f_act) = f.smooth.grad(&p.phi, &p.actions);
    let (g_phi, g_act) = g.smooth.grad(&p.phi, &p.actions);
    let mut acc = b * (f_phi[0] * g_act[0] - f_act[0] * g_phi[0]);
    if let Some(s) = &g.singular {
        acc += form.a_factor(s, i1)? * f_phi[0];
    }
    if let Some(s) = &f.singular {
        acc -= form.a_factor(s, i1)? * g_phi[0];
    }
    for j in 1..form.dof() {
        acc += f_phi[j] * g_act[j] - f_act[j] * g_phi[j];
    }
    Ok(acc)
}

/// Bracket from explicitly supplied gradients (used to bracket coordinate
/// functions, which are not trigonometric polynomials).
#[allow(clippy::too_many_arguments)]
pub fn poisson_bracket_gradients(
    form: &ActionAngleForm,
    i1: f64,
    f_dphi: &[f64],
    f_dact: &[f64],
    g_dphi: &[f64],
    g_dact: &[f64],
) -> Result<f64> {
    let b = form.b_factor(i1)?;
    let mut acc = b * (f_dphi[0] * g_dact[0] - f_dact[0] * g_dphi[0]);
    for j in 1..form.dof() {
        acc += f_dphi[j] * g_dact[j] - f_dact[j] * g_dphi[j];
    }
    Ok(acc)
}

/// Cyclic Jacobi sum `{{f,g},h} + {{g,h},f} + {{h,f},g}` at `p`, evaluated
/// with exact first and second derivatives (smooth arguments).
pub fn jacobi_cyclic(
    f: &FourierTaylor,
    g: &FourierTaylor,
    h: &FourierTaylor,
    form: &ActionAngleForm,
    p: &PhasePoint,
) -> Result<f64> {
    Ok(nested_bracket(f, g, h, form, p)?
        + nested_bracket(g, h, f, form, p)?
        + nested_bracket(h, f, g, form, p)?)
}

/// `{{f,g}, h}` at `p` for smooth arguments.
pub fn nested_bracket(
    f: &FourierTaylor,
    g: &FourierTaylor,
    h: &FourierTaylor,
    form: &ActionAngleForm,
    p: &PhasePoint,
) -> Result<f64> {
    let n = form.dof();
    let i1 = p.i1();
    let b = form.b_factor(i1)?;
    let bp = form.b_factor_prime(i1)?;
    let (f_phi, f_act) = f.grad(&p.phi, &p.actions);
    let (g_phi, g_act) = g.grad(&p.phi, &p.actions);
    let hf = f.hessian(&p.phi, &p.actions);
    let hg = g.hessian(&p.phi, &p.actions);
    // A = {f,g} = B*P + Q with P the first pair, Q the rest.
    let pval = f_phi[0] * g_act[0] - f_act[0] * g_phi[0];
    // gradient of A in the 2n coordinates (phi.., I..)
    let d = 2 * n;
    let mut grad_a = vec![0.0; d];
    for x in 0..d {
        // dP/dx and dQ/dx via the Hessians: index phi_j = j, I_j = n + j
        let dp = hf[0][x] * g_act[0] + f_phi[0] * hg[n][x] - hf[n][x] * g_phi[0]
            - f_act[0] * hg[0][x];
        let mut dq = 0.0;
        for j in 1..n {
            dq += hf[j][x] * g_act[j] + f_phi[j] * hg[n + j][x]
                - hf[n + j][x] * g_phi[j]
                - f_act[j] * hg[j][x];
        }
        grad_a[x] = b * dp + dq;
        if x == n {
            grad_a[x] += bp * pval;
        }
    }
    let (h_phi, h_act) = h.grad(&p.phi, &p.actions);
    let mut acc = b * (grad_a[0] * h_act[0] - grad_a[n] * h_phi[0]);
    for j in 1..n {
        acc += grad_a[j] * h_act[j] - grad_a[n + j] * h_phi[j];
    }
    Ok(acc)
}

/// A trajectory sample: times, states, recorded energy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub energy: Vec<f64>,
    /// Integration stopped early because |I1| fell below the floor.
    pub hit_floor: bool,
}

impl Trajectory {
    pub fn last(&self) -> &PhasePoint {
        self.states.last().unwrap()
    }

    pub fn min_abs_i1(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.i1().abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }

    /// Mean angular velocity per angle, with wrap-around unwrapping.
    pub fn rotation_number(&self) -> Vec<f64> {
        let n = self.states[0].phi.len();
        let mut total = vec![0.0; n];
        for w in self.states.windows(2) {
            for j in 0..n {
                let mut d = w[1].phi[j] - w[0].phi[j];
                while d > std::f64::consts::PI {
                    d -= TWO_PI;
                }
                while d < -std::f64::consts::PI {
                    d += TWO_PI;
                }
                total[j] += d;
            }
        }
        let span = self.times.last().unwrap() - self.times[0];
        total.iter().map(|t| t / span).collect()
    }
}

/// Anything that produces a phase-space velocity and an energy; the b^m flow
/// and the desingularized/mechanics flows all implement this.
pub trait FlowField {
    fn velocity(&self, t: f64, phi: &[f64], actions: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    fn energy(&self, phi: &[f64], actions: &[f64]) -> f64;
}

/// The b^m Hamiltonian flow of `h` under `form`.
pub struct BmFlow<'a> {
    pub h: &'a BmFunction,
    pub form: &'a ActionAngleForm,
}

impl FlowField for BmFlow<'_> {
    fn velocity(&self, _t: f64, phi: &[f64], actions: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.h.pair_velocity(self.form, phi, actions)
    }
    fn energy(&self, phi: &[f64], actions: &[f64]) -> f64 {
        let p = PhasePoint::raw(phi.to_vec(), actions.to_vec());
        self.h.value(&p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Halt (partial result) when |I1| drops below this.
    pub i1_floor: f64,
    /// Per-step energy-drift tolerance.
    pub step_energy_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            i1_floor: 1e-8,
            step_energy_tol: 1e-6,
        }
    }
}

/// Classical fixed-step RK4 for a [`FlowField`]. Symplecticity is monitored
/// through the recorded energy, not enforced.
pub fn integrate_field(
    field: &dyn FlowField,
    p0: &PhasePoint,
    t_end: f64,
    dt: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    if dt <= 0.0 || t_end <= 0.0 {
        return Err(Error::InvalidParams("need dt > 0 and t_end > 0".into()));
    }
    let n = p0.phi.len();
    let mut phi = p0.phi.clone();
    let mut act = p0.actions.clone();
    let side0 = p0.side;
    let mut times = vec![0.0];
    let mut states = vec![PhasePoint::raw(phi.clone(), act.clone())];
    let mut energy = vec![field.energy(&phi, &act)];
    let mut hit_floor = false;
    let steps = (t_end / dt).ceil() as usize;
    let mut t = 0.0;
    for step in 0..steps {
        let h = if (step + 1) as f64 * dt > t_end {
            t_end - t
        } else {
            dt
        };
        if h <= 0.0 {
            break;
        }
        let stage = |ph: &[f64], ac: &[f64]| field.velocity(t, ph, ac);
        let (k1p, k1a) = stage(&phi, &act)?;
        let (p2, a2) = advance(&phi, &act, &k1p, &k1a, 0.5 * h);
        let (k2p, k2a) = stage(&p2, &a2)?;
        let (p3, a3) = advance(&phi, &act, &k2p, &k2a, 0.5 * h);
        let (k3p, k3a) = stage(&p3, &a3)?;
        let (p4, a4) = advance(&phi, &act, &k3p, &k3a, h);
        let (k4p, k4a) = stage(&p4, &a4)?;
        for j in 0..n {
            phi[j] += h / 6.0 * (k1p[j] + 2.0 * k2p[j] + 2.0 * k3p[j] + k4p[j]);
            act[j] += h / 6.0 * (k1a[j] + 2.0 * k2a[j] + 2.0 * k3a[j] + k4a[j]);
        }
        t += h;
        if side0 != 0 && act[0].signum() as i8 != side0 && act[0] != 0.0 {
            return Err(Error::CrossedCriticalSet(t));
        }
        let e = field.energy(&phi, &act);
        let drift = (e - energy[energy.len() - 1]).abs();
        if drift > opts.step_energy_tol {
            return Err(Error::StepTooLarge {
                drift,
                tol: opts.step_energy_tol,
            });
        }
        times.push(t);
        states.push(PhasePoint::raw(phi.clone(), act.clone()));
        energy.push(e);
        if act[0].abs() < opts.i1_floor {
            hit_floor = true;
            break;
        }
    }
    Ok(Trajectory {
        times,
        states,
        energy,
        hit_floor,
    })
}

fn advance(phi: &[f64], act: &[f64], dp: &[f64], da: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    (
        phi.iter().zip(dp).map(|(x, d)| x + h * d).collect(),
        act.iter().zip(da).map(|(x, d)| x + h * d).collect(),
    )
}

/// Integrate the b^m Hamiltonian flow of `h`.
pub fn integrate_flow(
    h: &BmFunction,
    form: &ActionAngleForm,
    p0: &PhasePoint,
    t_end: f64,
    dt: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    if p0.i1() == 0.0 {
        return Err(Error::InvalidParams("trajectory start must have I1 != 0".into()));
    }
    h.check_order(form)?;
    integrate_field(&BmFlow { h, form }, p0, t_end, dt, opts)
}

/// Observed defining-function bound: max of |I1dot| / |I1|^m along the flow
/// of `h`. Finite for smooth `h`; the flow is then a b^m-map.
pub fn defining_function_ratio(
    h: &BmFunction,
    form: &ActionAngleForm,
    p0: &PhasePoint,
    t_end: f64,
    dt: f64,
    opts: &FlowOptions,
) -> Result<f64> {
    let traj = integrate_flow(h, form, p0, t_end, dt, opts)?;
    let mut worst: f64 = 0.0;
    for s in &traj.states {
        let (_, idot) = h.pair_velocity(form, &s.phi, &s.actions)?;
        let ratio = idot[0].abs() / s.i1().abs().powi(form.order() as i32);
        worst = worst.max(ratio);
    }
    Ok(worst)
}
