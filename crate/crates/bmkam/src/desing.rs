//! Desingularization of b^m-forms and of b^m-integrable systems: smoothing
//! profiles `f_eps`, the induced symplectic (even order) or folded (odd
//! order) forms, the tilde coordinate maps, and the check that the dynamics
//! are preserved.
//!
//! The profile `f` is the identity-derivative model `f'(x) = x^{-m}` outside
//! `[-2, 2]`, glued to a polynomial core through a blend region; scaling
//! gives `f_eps(x) = eps^{-(m-1)} f(x/eps)`, so `f_eps'(x) = x^{-m}` exactly
//! for `|x| > 2 eps` and the desingularized form coincides with the original
//! one there.
//!
//! Even order: odd `f`, linear core `c x` on `[-a, a]`, `f' > 0` on `[-1,1]`.
//! Odd order: even `f`, core `c x^2 + 2` on `[-1, 1]` with `c > 0`, so `f'`
//! vanishes only at the fold `x = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::FourierTaylor;
use crate::numerics::{adaptive_simpson, lu_solve};
use crate::singular::{ActionAngleForm, BmFunction, FlowField, PhasePoint};

/// Parity of the singularity order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Inner-profile data: the polynomial core of the smoothing function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerProfile {
    /// Even order: core slope (`f = c x` on the core). Odd order: core
    /// curvature (`f = c x^2 + 2` on `[-1, 1]`).
    pub core_coef: f64,
    /// Even order only: core half-width `a` in `(0, 1)`.
    pub core_radius: f64,
}

impl InnerProfile {
    pub fn default_for(m: usize) -> Self {
        if m % 2 == 0 {
            InnerProfile {
                core_coef: 2.0 - 2f64.powi(1 - m as i32) + 0.1,
                core_radius: 0.2,
            }
        } else {
            InnerProfile {
                core_coef: 1.0,
                core_radius: 1.0,
            }
        }
    }
}

/// An `f_eps` smoothing profile for singularity order `m`.
#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    pub m: usize,
    pub eps: f64,
    pub parity: Parity,
    pub inner: InnerProfile,
    /// Blend polynomial coefficients in `(x - x_lo)` on the positive side.
    blend: Vec<f64>,
    blend_range: (f64, f64),
    /// Additive constant of the outer branch on the positive side.
    outer_shift: f64,
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &ci)| i as f64 * ci)
        .collect()
}

/// Primitive of `x^{-m}` (the outer-branch shape): `log x` for `m = 1`,
/// `-1/((m-1) x^{m-1})` otherwise.
fn outer_value(m: usize, x: f64) -> f64 {
    if m == 1 {
        x.abs().ln()
    } else {
        -1.0 / ((m as f64 - 1.0) * x.powi(m as i32 - 1))
    }
}

pub fn build_profile(m: usize, eps: f64, inner: InnerProfile) -> Result<Profile> {
    if m == 0 || eps <= 0.0 {
        return Err(Error::InvalidParams("need m >= 1 and eps > 0".into()));
    }
    let parity = if m % 2 == 0 { Parity::Even } else { Parity::Odd };
    let c = inner.core_coef;
    let profile = match parity {
        Parity::Even => {
            let a = inner.core_radius;
            if !(0.0 < a && a < 1.0) || c <= 0.0 {
                return Err(Error::BadInnerSpec(
                    "even profile needs 0 < core_radius < 1 and a positive slope".into(),
                ));
            }
            // quintic on [a, 1] matching value/slope/curvature of the core at
            // a and of the outer branch (shifted by +2) at 1
            let h = 1.0 - a;
            let (v1, d1, s1) = (c * a, c, 0.0);
            let v2 = outer_value(m, 1.0) + 2.0;
            let (d2, s2) = (1.0, -(m as f64));
            let blend = hermite_quintic(h, v1, d1, s1, v2, d2, s2)?;
            Profile {
                m,
                eps,
                parity,
                inner,
                blend,
                blend_range: (a, 1.0),
                outer_shift: 2.0,
            }
        }
        Parity::Odd => {
            if c <= 0.0 {
                return Err(Error::BadInnerSpec(
                    "odd profile needs a positive core curvature".into(),
                ));
            }
            // quartic on [1, 2] matching value/slope/curvature of the core at
            // 1 and slope/curvature of the outer branch at 2; the outer
            // additive constant follows from continuity
            let (v1, d1, s1) = (c + 2.0, 2.0 * c, 2.0 * c);
            let d2 = 2f64.powi(-(m as i32));
            let s2 = -(m as f64) * 2f64.powi(-(m as i32) - 1);
            let blend = hermite_quartic(1.0, v1, d1, s1, d2, s2)?;
            let outer_shift = poly_eval(&blend, 1.0) - outer_value(m, 2.0);
            Profile {
                m,
                eps,
                parity,
                inner,
                blend,
                blend_range: (1.0, 2.0),
                outer_shift,
            }
        }
    };
    profile.validate()?;
    Ok(profile)
}

/// Quintic with prescribed value/derivative/curvature at both ends of `[0,h]`.
fn hermite_quintic(h: f64, v1: f64, d1: f64, s1: f64, v2: f64, d2: f64, s2: f64) -> Result<Vec<f64>> {
    let mut a = vec![vec![0.0; 6]; 6];
    // value, derivative, curvature at 0
    a[0][0] = 1.0;
    a[1][1] = 1.0;
    a[2][2] = 2.0;
    for j in 0..6 {
        a[3][j] = h.powi(j as i32);
        if j >= 1 {
            a[4][j] = j as f64 * h.powi(j as i32 - 1);
        }
        if j >= 2 {
            a[5][j] = (j * (j - 1)) as f64 * h.powi(j as i32 - 2);
        }
    }
    lu_solve(&a, &[v1, d1, s1, v2, d2, s2])
}

/// Quartic on `[0, h]` with value/derivative/curvature at 0 and
/// derivative/curvature at `h`.
fn hermite_quartic(h: f64, v1: f64, d1: f64, s1: f64, d2: f64, s2: f64) -> Result<Vec<f64>> {
    let mut a = vec![vec![0.0; 5]; 5];
    a[0][0] = 1.0;
    a[1][1] = 1.0;
    a[2][2] = 2.0;
    for j in 1..5 {
        a[3][j] = j as f64 * h.powi(j as i32 - 1);
    }
    for j in 2..5 {
        a[4][j] = (j * (j - 1)) as f64 * h.powi(j as i32 - 2);
    }
    lu_solve(&a, &[v1, d1, s1, d2, s2])
}

impl Profile {
    /// The unscaled profile `f` on the positive axis (extended by parity).
    pub fn f(&self, x: f64) -> f64 {
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let y = x.abs();
        let v = match self.parity {
            Parity::Even => {
                let a = self.blend_range.0;
                if y <= a {
                    self.inner.core_coef * y
                } else if y <= 1.0 {
                    poly_eval(&self.blend, y - a)
                } else {
                    outer_value(self.m, y) + self.outer_shift
                }
            }
            Parity::Odd => {
                if y <= 1.0 {
                    self.inner.core_coef * y * y + 2.0
                } else if y <= 2.0 {
                    poly_eval(&self.blend, y - 1.0)
                } else {
                    outer_value(self.m, y) + self.outer_shift
                }
            }
        };
        match self.parity {
            Parity::Even => sign * v,
            Parity::Odd => v,
        }
    }

    pub fn f_prime(&self, x: f64) -> f64 {
        let y = x.abs();
        let dpos = match self.parity {
            Parity::Even => {
                let a = self.blend_range.0;
                if y <= a {
                    self.inner.core_coef
                } else if y <= 1.0 {
                    poly_eval(&poly_derivative(&self.blend), y - a)
                } else {
                    y.powi(-(self.m as i32))
                }
            }
            Parity::Odd => {
                if y <= 1.0 {
                    2.0 * self.inner.core_coef * y
                } else if y <= 2.0 {
                    poly_eval(&poly_derivative(&self.blend), y - 1.0)
                } else {
                    y.powi(-(self.m as i32))
                }
            }
        };
        // even f: f' is even; odd f: f' is odd
        match self.parity {
            Parity::Even => dpos,
            Parity::Odd => {
                if x < 0.0 {
                    -dpos
                } else {
                    dpos
                }
            }
        }
    }

    pub fn f_second(&self, x: f64) -> f64 {
        let y = x.abs();
        let d2 = poly_derivative(&poly_derivative(&self.blend));
        let spos = match self.parity {
            Parity::Even => {
                let a = self.blend_range.0;
                if y <= a {
                    0.0
                } else if y <= 1.0 {
                    poly_eval(&d2, y - a)
                } else {
                    -(self.m as f64) * y.powi(-(self.m as i32) - 1)
                }
            }
            Parity::Odd => {
                if y <= 1.0 {
                    2.0 * self.inner.core_coef
                } else if y <= 2.0 {
                    poly_eval(&d2, y - 1.0)
                } else {
                    -(self.m as f64) * y.powi(-(self.m as i32) - 1)
                }
            }
        };
        match self.parity {
            Parity::Even => {
                if x < 0.0 {
                    -spos
                } else {
                    spos
                }
            }
            Parity::Odd => spos,
        }
    }

    /// `f_eps(x) = eps^{-(m-1)} f(x/eps)`.
    pub fn f_eps(&self, x: f64) -> f64 {
        self.eps.powi(-(self.m as i32 - 1)) * self.f(x / self.eps)
    }

    pub fn f_eps_prime(&self, x: f64) -> f64 {
        self.eps.powi(-(self.m as i32)) * self.f_prime(x / self.eps)
    }

    pub fn f_eps_second(&self, x: f64) -> f64 {
        self.eps.powi(-(self.m as i32) - 1) * self.f_second(x / self.eps)
    }

    /// Effective core coefficient: `f_eps = c' x` (even) or
    /// `c' x^2 + 2/eps^{m-1}` (odd) near the critical set.
    pub fn effective_core_coef(&self) -> f64 {
        match self.parity {
            Parity::Even => self.inner.core_coef * self.eps.powi(-(self.m as i32)),
            Parity::Odd => self.inner.core_coef * self.eps.powi(-(self.m as i32) - 1),
        }
    }

    /// `F_eps^i(x) = f_eps'(x) x^{m-i}`.
    pub fn f_cap(&self, i: usize, x: f64) -> f64 {
        self.f_eps_prime(x) * x.powi((self.m - i) as i32)
    }

    /// `G_eps^i(x) = int_0^x F_eps^i`, by adaptive quadrature split at the
    /// gluing radii.
    pub fn g_cap(&self, i: usize, x: f64) -> f64 {
        let e = self.eps;
        let breaks: Vec<f64> = [-2.0 * e, -e, -self.blend_range.0 * e, 0.0,
            self.blend_range.0 * e, e, 2.0 * e]
            .to_vec();
        adaptive_simpson(&|t| self.f_cap(i, t), 0.0, x, 1e-12, &breaks)
    }

    /// Gluing radii on the positive axis (unscaled).
    fn gluing_points(&self) -> Vec<f64> {
        match self.parity {
            Parity::Even => vec![self.blend_range.0, 1.0],
            Parity::Odd => vec![1.0, 2.0],
        }
    }

    fn validate(&self) -> Result<()> {
        // C1 continuity at the gluing points
        for &g in &self.gluing_points() {
            for sign in [-1.0, 1.0] {
                let x = sign * g;
                let below = (self.f(x - 1e-9 * sign), self.f_prime(x - 1e-9 * sign));
                let above = (self.f(x + 1e-9 * sign), self.f_prime(x + 1e-9 * sign));
                if (below.0 - above.0).abs() > 1e-6 || (below.1 - above.1).abs() > 1e-5 {
                    return Err(Error::BadInnerSpec(format!(
                        "profile not C1 at x = {x}: value jump {:e}, slope jump {:e}",
                        (below.0 - above.0).abs(),
                        (below.1 - above.1).abs()
                    )));
                }
            }
        }
        match self.parity {
            Parity::Even => {
                // f odd with f' > 0 on [-1, 1]
                for i in 0..=400 {
                    let x = -1.0 + 2.0 * i as f64 / 400.0;
                    if self.f_prime(x) <= 0.0 {
                        return Err(Error::BadInnerSpec(format!(
                            "even profile loses monotonicity at x = {x}"
                        )));
                    }
                    if (self.f(x) + self.f(-x)).abs() > 1e-10 {
                        return Err(Error::BadInnerSpec("even profile must be odd".into()));
                    }
                }
            }
            Parity::Odd => {
                // f even and strictly increasing on (0, 2]; the derivative
                // vanishes only at the fold x = 0
                for i in 1..=400 {
                    let x = 2.0 * i as f64 / 400.0;
                    if self.f_prime(x) <= 0.0 {
                        return Err(Error::BadInnerSpec(format!(
                            "odd profile derivative must stay positive for x > 0 (x = {x})"
                        )));
                    }
                    if (self.f(x) - self.f(-x)).abs() > 1e-10 {
                        return Err(Error::BadInnerSpec("odd profile must be even".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The desingularized two-form `omega_eps = a(I1) dI1 ^ dphi1 + sum dI_j ^
/// dphi_j` induced by a profile on an action-angle Laurent form.
pub struct DesingForm<'a> {
    pub form: &'a ActionAngleForm,
    pub profile: &'a Profile,
}

impl<'a> DesingForm<'a> {
    pub fn new(form: &'a ActionAngleForm, profile: &'a Profile) -> Result<Self> {
        if profile.m != form.order() {
            return Err(Error::OrderMismatch {
                found: profile.m,
                max: form.order(),
            });
        }
        Ok(DesingForm { form, profile })
    }

    /// Coefficient `a(I1) = sum_j c_j F_eps^j(I1)`.
    pub fn coeff(&self, i1: f64) -> f64 {
        self.form
            .coeffs()
            .iter()
            .enumerate()
            .map(|(idx, &cj)| cj * self.profile.f_cap(idx + 1, i1))
            .sum()
    }

    pub fn coeff_prime(&self, i1: f64) -> f64 {
        // d/dx [f_eps'(x) x^{m-j}]
        self.form
            .coeffs()
            .iter()
            .enumerate()
            .map(|(idx, &cj)| {
                let j = idx + 1;
                let e = (self.profile.m - j) as i32;
                let power_term = if e > 0 {
                    e as f64 * i1.powi(e - 1) * self.profile.f_eps_prime(i1)
                } else {
                    0.0
                };
                cj * (self.profile.f_eps_second(i1) * i1.powi(e) + power_term)
            })
            .sum()
    }

    /// Max |a(I1) - sum c_j I1^{-j}| over samples outside the 2 eps
    /// neighborhood (should vanish identically).
    pub fn agreement_residual(&self, samples: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &x in samples {
            if x.abs() <= 2.0 * self.profile.eps {
                continue;
            }
            let lhs = self.coeff(x);
            let rhs = self.form.laurent_sum(x)?;
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
        Ok(worst)
    }
}

/// A b^m moment map: first component singular, the rest smooth.
pub type MomentMap = Vec<BmFunction>;

/// The desingularized integrable system: `mu_eps` components and the tilde
/// coordinate maps.
pub struct DesingSystem {
    pub form: ActionAngleForm,
    pub profile: Profile,
    /// Gradient coefficients of the singular first component.
    f1_hat: Vec<f64>,
    pub moment: MomentMap,
}

pub fn desingularize_system(
    moment: &MomentMap,
    form: &ActionAngleForm,
    profile: &Profile,
) -> Result<DesingSystem> {
    if profile.m != form.order() {
        return Err(Error::OrderMismatch {
            found: profile.m,
            max: form.order(),
        });
    }
    let f1 = moment
        .first()
        .and_then(|f| f.singular.as_ref())
        .ok_or_else(|| Error::NotSimple("first component must carry the singular block".into()))?;
    if f1.order() != form.order() {
        return Err(Error::OrderMismatch {
            found: f1.order(),
            max: form.order(),
        });
    }
    Ok(DesingSystem {
        form: form.clone(),
        profile: profile.clone(),
        f1_hat: f1.gradient_coeffs(),
        moment: moment.clone(),
    })
}

impl DesingSystem {
    /// First desingularized component `f_{1 eps}(x) = sum_i chat_i G_eps^i(x)`.
    pub fn f1_eps(&self, i1: f64) -> f64 {
        self.f1_hat
            .iter()
            .enumerate()
            .map(|(idx, &ch)| ch * self.profile.g_cap(idx + 1, i1))
            .sum()
    }

    pub fn f1_eps_prime(&self, i1: f64) -> f64 {
        self.f1_hat
            .iter()
            .enumerate()
            .map(|(idx, &ch)| ch * self.profile.f_cap(idx + 1, i1))
            .sum()
    }

    /// The pair-1 rescaling `rho(I1) = f_eps'(I1) I1^m` shared by both tilde
    /// maps (the hatted coefficients cancel between numerator and
    /// denominator).
    pub fn tilde_ratio(&self, i1: f64) -> f64 {
        self.profile.f_eps_prime(i1) * i1.powi(self.profile.m as i32)
    }

    fn tilde_ratio_prime(&self, i1: f64) -> f64 {
        let m = self.profile.m as i32;
        self.profile.f_eps_second(i1) * i1.powi(m)
            + self.profile.f_eps_prime(i1) * m as f64 * i1.powi(m - 1)
    }

    /// `I1 tilde = int_0^{I1} rho`.
    pub fn i_tilde(&self, i1: f64) -> f64 {
        let e = self.profile.eps;
        let breaks = [-2.0 * e, -e, 0.0, e, 2.0 * e];
        adaptive_simpson(&|t| self.tilde_ratio(t), 0.0, i1, 1e-12, &breaks)
    }

    /// Inverse of the monotone map `i_tilde` (Newton with bisection backup).
    pub fn i_tilde_inv(&self, y: f64, seed: f64) -> Result<f64> {
        let mut x = seed;
        for _ in 0..60 {
            let fx = self.i_tilde(x) - y;
            if fx.abs() < 1e-13 * (1.0 + y.abs()) {
                return Ok(x);
            }
            let d = self.tilde_ratio(x);
            if d.abs() < 1e-14 {
                break;
            }
            x -= fx / d;
        }
        // bisection fallback on a bracket around the seed
        let mut lo = seed;
        let mut hi = seed;
        let grow = 0.1 * (seed.abs() + 1.0);
        for _ in 0..200 {
            lo -= grow;
            hi += grow;
            if (self.i_tilde(lo) - y) * (self.i_tilde(hi) - y) <= 0.0 {
                break;
            }
        }
        let mut flo = self.i_tilde(lo) - y;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = self.i_tilde(mid) - y;
            if fm.abs() < 1e-13 * (1.0 + y.abs()) {
                return Ok(mid);
            }
            if flo * fm <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
                flo = fm;
            }
        }
        Err(Error::InvalidParams("tilde-map inversion failed".into()))
    }

    pub fn phi_tilde(&self, i1: f64, phi1: f64) -> f64 {
        self.tilde_ratio(i1) * phi1
    }

    /// Value of the j-th desingularized component at a point (tilde
    /// substitution for j >= 2).
    pub fn mu_eps_value(&self, j: usize, p: &PhasePoint) -> f64 {
        if j == 0 {
            return self.f1_eps(p.i1());
        }
        let mut phi = p.phi.clone();
        let mut act = p.actions.clone();
        act[0] = self.i_tilde(p.i1());
        phi[0] = self.phi_tilde(p.i1(), p.phi[0]);
        self.moment[j].smooth.eval(&phi, &act)
    }

    /// Hamiltonian velocity of the j-th desingularized component under
    /// `omega_eps`.
    pub fn desing_velocity(&self, j: usize, p: &PhasePoint) -> Result<(Vec<f64>, Vec<f64>)> {
        let dform = DesingForm::new(&self.form, &self.profile)?;
        let a = dform.coeff(p.i1());
        if a == 0.0 {
            return Err(Error::DenominatorZero(p.i1()));
        }
        let n = self.form.dof();
        let mut dphi = vec![0.0; n];
        let mut dact = vec![0.0; n];
        if j == 0 {
            dact[0] = self.f1_eps_prime(p.i1());
        } else {
            // chain rule through the tilde substitution
            let f = &self.moment[j].smooth;
            let mut phi = p.phi.clone();
            let mut act = p.actions.clone();
            let rho = self.tilde_ratio(p.i1());
            let rho_p = self.tilde_ratio_prime(p.i1());
            act[0] = self.i_tilde(p.i1());
            phi[0] = rho * p.phi[0];
            let (gphi, gact) = f.grad(&phi, &act);
            for k in 0..n {
                dphi[k] = gphi[k];
                dact[k] = gact[k];
            }
            dact[0] = gact[0] * rho + gphi[0] * rho_p * p.phi[0];
            dphi[0] = gphi[0] * rho;
        }
        let mut phidot = vec![0.0; n];
        let mut idot = vec![0.0; n];
        phidot[0] = dact[0] / a;
        idot[0] = -dphi[0] / a;
        for k in 1..n {
            phidot[k] = dact[k];
            idot[k] = -dphi[k];
        }
        Ok((phidot, idot))
    }

    /// Original-side velocity of the j-th component under the b^m form.
    pub fn original_velocity(&self, j: usize, p: &PhasePoint) -> Result<(Vec<f64>, Vec<f64>)> {
        self.moment[j].pair_velocity(&self.form, &p.phi, &p.actions)
    }

    /// Folded-function condition at the critical set: `df_j|_Z` annihilates
    /// `ker omega_eps|_Z = span(d/dI1, d/dphi1)` (odd order). Returns the max
    /// violation over the supplied Z samples.
    pub fn folded_condition_residual(&self, z_samples: &[PhasePoint]) -> Result<f64> {
        if self.profile.parity != Parity::Odd {
            return Err(Error::InvalidParams(
                "folded condition applies to odd order only".into(),
            ));
        }
        let mut worst: f64 = 0.0;
        for p in z_samples {
            // component 0: d f1_eps / dI1 at I1 = 0
            worst = worst.max(self.f1_eps_prime(0.0).abs());
            for j in 1..self.moment.len() {
                let f = &self.moment[j].smooth;
                let mut phi = p.phi.clone();
                let mut act = p.actions.clone();
                act[0] = self.i_tilde(0.0);
                phi[0] = self.phi_tilde(0.0, p.phi[0]);
                let (gphi, gact) = f.grad(&phi, &act);
                let rho = self.tilde_ratio(0.0);
                let rho_p = self.tilde_ratio_prime(0.0);
                let d_i1 = gact[0] * rho + gphi[0] * rho_p * p.phi[0];
                let d_phi1 = gphi[0] * rho;
                worst = worst.max(d_i1.abs()).max(d_phi1.abs());
            }
        }
        Ok(worst)
    }
}

/// Dynamics-preservation check: max over samples and components of the
/// difference of the two Hamiltonian vector fields, each computed
/// independently on its side.
pub fn dynamics_equality_residual(
    moment: &MomentMap,
    form: &ActionAngleForm,
    profile: &Profile,
    samples: &[PhasePoint],
) -> Result<f64> {
    let sys = desingularize_system(moment, form, profile)?;
    let mut worst: f64 = 0.0;
    for p in samples {
        for j in 0..moment.len() {
            let (po, io) = sys.original_velocity(j, p)?;
            let (pd, id) = sys.desing_velocity(j, p)?;
            for k in 0..form.dof() {
                worst = worst.max((po[k] - pd[k]).abs()).max((io[k] - id[k]).abs());
            }
        }
    }
    Ok(worst)
}

/// The desingularized flow of a Hamiltonian `H = f1_eps + h(I2..) +
/// R(I2.., phi2..)` expressed in the tilde chart; used for the transport
/// checks. The state is `(phi_tilde, I_tilde)`.
pub struct TildeFlow<'a> {
    pub sys: &'a DesingSystem,
    /// Smooth part of the Hamiltonian, independent of pair 1.
    pub smooth: &'a FourierTaylor,
    /// Seed for inverting the radial tilde map (side selection).
    pub seed_i1: f64,
}

impl TildeFlow<'_> {
    /// Push a point from the original chart into the tilde chart.
    pub fn push(&self, p: &PhasePoint) -> PhasePoint {
        let mut phi = p.phi.clone();
        let mut act = p.actions.clone();
        act[0] = self.sys.i_tilde(p.i1());
        phi[0] = self.sys.phi_tilde(p.i1(), p.phi[0]);
        PhasePoint::raw(phi, act)
    }

    /// Pull a tilde-chart point back to the original chart.
    pub fn pull(&self, p: &PhasePoint) -> Result<PhasePoint> {
        let i1 = self.sys.i_tilde_inv(p.i1(), self.seed_i1)?;
        let rho = self.sys.tilde_ratio(i1);
        let mut phi = p.phi.clone();
        let mut act = p.actions.clone();
        act[0] = i1;
        phi[0] = p.phi[0] / rho;
        Ok(PhasePoint::raw(phi, act))
    }
}

impl FlowField for TildeFlow<'_> {
    fn velocity(&self, _t: f64, phi: &[f64], actions: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let y = PhasePoint::raw(phi.to_vec(), actions.to_vec());
        let x = self.pull(&y)?;
        // velocity in the original chart under omega_eps
        let dform = DesingForm::new(&self.sys.form, &self.sys.profile)?;
        let a = dform.coeff(x.i1());
        let n = self.sys.form.dof();
        let (gphi, gact) = self.smooth.grad(&x.phi, &x.actions);
        let mut phidot = vec![0.0; n];
        let mut idot = vec![0.0; n];
        phidot[0] = (self.sys.f1_eps_prime(x.i1()) + gact[0]) / a;
        idot[0] = -gphi[0] / a;
        for k in 1..n {
            phidot[k] = gact[k];
            idot[k] = -gphi[k];
        }
        // chain rule into the tilde chart
        let rho = self.sys.tilde_ratio(x.i1());
        let rho_p = self.sys.tilde_ratio_prime(x.i1());
        let mut out_phi = phidot.clone();
        let mut out_act = idot.clone();
        out_act[0] = rho * idot[0];
        out_phi[0] = rho_p * x.phi[0] * idot[0] + rho * phidot[0];
        Ok((out_phi, out_act))
    }

    fn energy(&self, phi: &[f64], actions: &[f64]) -> f64 {
        let y = PhasePoint::raw(phi.to_vec(), actions.to_vec());
        match self.pull(&y) {
            Ok(x) => self.sys.f1_eps(x.i1()) + self.smooth.eval(&x.phi, &x.actions),
            Err(_) => f64::NAN,
        }
    }
}

/// A simple b^m system `(1/I1^{m-1}, I2, ..., In)` with `omega = I1^{-m} dI1
/// ^ dphi1 + ...`, the reduction behind the desingularized KAM corollaries.
pub fn simple_system(n: usize, m: usize) -> Result<(ActionAngleForm, MomentMap)> {
    if m < 2 {
        return Err(Error::NotSimple("simple systems need m >= 2".into()));
    }
    let mut c = vec![0.0; m];
    c[m - 1] = 1.0;
    let mut q = vec![0.0; m - 1];
    q[m - 2] = 1.0;
    let sing = crate::singular::SingularPart::new(m, 0.0, q)?;
    let form = ActionAngleForm::paired_with(n, c, &sing)?;
    let i0 = vec![0.0; n];
    let mut moment: MomentMap = vec![BmFunction::with_singular(
        sing,
        FourierTaylor::zero(n, 4, 2, i0.clone()),
    )];
    for j in 1..n {
        let mut smooth = FourierTaylor::zero(n, 4, 2, i0.clone());
        let mut e = vec![0u8; n];
        e[j] = 1;
        smooth.add_term(&vec![0; n], &e, num_complex::Complex64::new(1.0, 0.0));
        moment.push(BmFunction::smooth(smooth));
    }
    Ok((form, moment))
}
