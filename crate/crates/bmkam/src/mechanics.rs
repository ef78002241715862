//! Worked singular-symplectic systems: b^m surfaces with their moment maps,
//! and the celestial-mechanics coordinate-change pullbacks with their
//! degeneracy loci.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{adaptive_simpson, newton_solve, pfaffian4};
use crate::singular::{ActionAngleForm, FlowField};

// ---------------------------------------------------------------------------
// surfaces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceKind {
    /// `(S^2, {h = 0}, dh/h^m ^ dtheta)`
    Sphere,
    /// `(T^2, {theta1 in {0, pi}}, dtheta1/sin^m(theta1) ^ dtheta2)`
    Torus,
}

/// A b^m surface with its rotational moment map.
#[derive(Debug, Clone)]
pub struct SurfaceSystem {
    pub kind: SurfaceKind,
    pub m: usize,
}

pub fn sphere_system(m: usize) -> Result<SurfaceSystem> {
    if m == 0 {
        return Err(Error::InvalidParams("need m >= 1".into()));
    }
    Ok(SurfaceSystem {
        kind: SurfaceKind::Sphere,
        m,
    })
}

pub fn torus_system(m: usize) -> Result<SurfaceSystem> {
    if m == 0 {
        return Err(Error::InvalidParams("need m >= 1".into()));
    }
    Ok(SurfaceSystem {
        kind: SurfaceKind::Torus,
        m,
    })
}

impl SurfaceSystem {
    /// Coefficient `w` of the area form `w(x) dx ^ dtheta`.
    pub fn omega_coeff(&self, x: f64) -> f64 {
        match self.kind {
            SurfaceKind::Sphere => x.powi(-(self.m as i32)),
            SurfaceKind::Torus => x.sin().powi(-(self.m as i32)),
        }
    }

    /// The moment map of the rotation action. Sphere: `log|h|` for `m = 1`,
    /// `-1/((m-1) h^{m-1})` for higher order. Torus: `-cos/sin` at `m = 2`,
    /// numerical antiderivative of `1/sin^m` per branch otherwise.
    pub fn moment(&self, x: f64) -> Result<f64> {
        match self.kind {
            SurfaceKind::Sphere => Ok(if self.m == 1 {
                x.abs().ln()
            } else {
                -1.0 / ((self.m as f64 - 1.0) * x.powi(self.m as i32 - 1))
            }),
            SurfaceKind::Torus => {
                if self.m == 2 {
                    return Ok(-x.cos() / x.sin());
                }
                let reference = self.torus_branch_reference(x)?;
                Ok(adaptive_simpson(
                    &|t: f64| t.sin().powi(-(self.m as i32)),
                    reference,
                    x,
                    1e-13,
                    &[],
                ))
            }
        }
    }

    fn torus_branch_reference(&self, x: f64) -> Result<f64> {
        let pi = std::f64::consts::PI;
        let y = x.rem_euclid(2.0 * pi);
        let margin = 1e-6;
        if (y.sin()).abs() < margin {
            return Err(Error::BranchCrossing(format!(
                "theta1 = {x} is too close to the critical circles"
            )));
        }
        Ok(if y < pi {
            0.5 * pi + (x - y)
        } else {
            1.5 * pi + (x - y)
        })
    }

    /// Residual of `iota_X omega + d mu = 0` at a sample (finite-difference
    /// differential with Richardson refinement).
    pub fn moment_identity_residual(&self, x: f64) -> Result<f64> {
        let h1 = 1e-4 * x.abs().max(0.1);
        let d = |h: f64| -> Result<f64> {
            Ok((self.moment(x + h)? - self.moment(x - h)?) / (2.0 * h))
        };
        let d1 = d(h1)?;
        let d2 = d(h1 / 2.0)?;
        let richardson = (4.0 * d2 - d1) / 3.0;
        // iota_{d/dtheta} omega = -w(x) dx, so d mu must equal w(x) dx
        Ok((richardson - self.omega_coeff(x)).abs() / self.omega_coeff(x).abs().max(1.0))
    }
}

// ---------------------------------------------------------------------------
// planar pullback forms
// ---------------------------------------------------------------------------

/// Which explicit pullback a [`PulledBackForm`] holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PulledBackKind {
    /// Double-collision regularization `x = r^gamma e^{i theta}`,
    /// `y = r^{-beta gamma} (v + i w) e^{i theta}`.
    McGehee { alpha: f64 },
    /// Non-symplectic Levi-Civita transform `(q, p) = (u^2/2, p)`.
    KeplerLeviCivita,
    /// Elliptic coordinates of the two-fixed-centers problem.
    TwoFixedCenters,
    /// McGehee infinity chart `r = 2/x^2` of the restricted three-body
    /// problem.
    ThreeBodyMcGehee,
}

/// A 2-form on a 4-dimensional chart, stored through its antisymmetric
/// coefficient matrix. The declared density is the Pfaffian, so
/// `omega ^ omega = 2 * density * vol`.
#[derive(Debug, Clone)]
pub struct PulledBackForm {
    pub coords: [&'static str; 4],
    pub kind: PulledBackKind,
}

impl PulledBackForm {
    /// Antisymmetric coefficient matrix at a chart point.
    pub fn coeff_matrix(&self, x: &[f64; 4]) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        let set = |i: usize, j: usize, v: f64, a: &mut [[f64; 4]; 4]| {
            a[i][j] = v;
            a[j][i] = -v;
        };
        match &self.kind {
            PulledBackKind::McGehee { alpha } => {
                // coords (r, theta, v, w)
                let (r, _theta, _v, w) = (x[0], x[1], x[2], x[3]);
                let beta = alpha / 2.0;
                let gamma = 1.0 / (1.0 + beta);
                let e1 = -alpha * gamma; // dr ^ dv and dr ^ dtheta weight
                let e2 = gamma * (1.0 - beta); // dtheta ^ dw weight
                set(0, 2, gamma * r.powf(e1), &mut a);
                set(0, 1, -gamma * (1.0 - beta) * r.powf(e1) * w, &mut a);
                set(1, 3, r.powf(e2), &mut a);
            }
            PulledBackKind::KeplerLeviCivita => {
                // coords (u1, p1, u2, p2); density-consistent signs
                let (u1, u2) = (x[0], x[2]);
                set(0, 1, u1, &mut a); // du1 ^ dp1
                set(0, 3, u2, &mut a); // du1 ^ dp2
                set(2, 1, u2, &mut a); // du2 ^ dp1
                set(2, 3, u1, &mut a); // du2 ^ dp2
            }
            PulledBackKind::TwoFixedCenters => {
                // coords (lambda, p1, nu, p2)
                let (l, n) = (x[0], x[2]);
                let cc = l.cosh() * n.cos();
                let ss = l.sinh() * n.sin();
                set(0, 1, cc, &mut a); // dlambda ^ dp1
                set(2, 3, cc, &mut a); // dnu ^ dp2
                set(2, 1, -ss, &mut a); // dnu ^ dp1
                set(0, 3, -ss, &mut a); // dlambda ^ dp2
            }
            PulledBackKind::ThreeBodyMcGehee => {
                // coords (x, P_r, alpha, P_alpha)
                let xr = x[0];
                set(0, 1, 4.0 / xr.powi(3), &mut a);
                set(2, 3, 1.0, &mut a);
            }
        }
        a
    }

    /// Closed-form Pfaffian density.
    pub fn density(&self, x: &[f64; 4]) -> f64 {
        match &self.kind {
            PulledBackKind::McGehee { alpha } => {
                let gamma = 1.0 / (1.0 + alpha / 2.0);
                -gamma * x[0].powf(mcgehee_density_exponent(*alpha))
            }
            PulledBackKind::KeplerLeviCivita => x[0] * x[0] - x[2] * x[2],
            PulledBackKind::TwoFixedCenters => {
                let (l, n) = (x[0], x[2]);
                (l.cosh() * n.cos()).powi(2) - (l.sinh() * n.sin()).powi(2)
            }
            PulledBackKind::ThreeBodyMcGehee => 4.0 / x[0].powi(3),
        }
    }

    /// Independent density evaluation through the Pfaffian of the
    /// coefficient matrix.
    pub fn pfaffian(&self, x: &[f64; 4]) -> f64 {
        pfaffian4(&self.coeff_matrix(x))
    }
}

/// `(2 - 3 alpha) / (2 + alpha)`.
pub fn mcgehee_density_exponent(alpha: f64) -> f64 {
    (2.0 - 3.0 * alpha) / (2.0 + alpha)
}

/// Outcome of the two-stage b^m test for the double-collision pullback.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McGeheeClassification {
    pub density_exponent: f64,
    /// Candidate order read off the density when the exponent is a negative
    /// integer (a density exponent alone never certifies the structure).
    pub candidate_order: Option<u32>,
    /// Whether the form itself has Laurent structure: integer `dr`-weights
    /// and a regular non-radial block.
    pub section_ok: bool,
    pub certified_order: Option<u32>,
}

pub fn mcgehee_double_collision(alpha: f64) -> Result<(PulledBackForm, McGeheeClassification)> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParams("need alpha > 0".into()));
    }
    let form = PulledBackForm {
        coords: ["r", "theta", "v", "w"],
        kind: PulledBackKind::McGehee { alpha },
    };
    let f = mcgehee_density_exponent(alpha);
    let is_int = |x: f64| (x - x.round()).abs() < 1e-12;
    let candidate = if f < 0.0 && is_int(f) {
        Some((-f.round()) as u32)
    } else {
        None
    };
    let beta = alpha / 2.0;
    let gamma = 1.0 / (1.0 + beta);
    let e1 = -alpha * gamma;
    let e2 = gamma * (1.0 - beta);
    let section_ok = is_int(e1) && is_int(e2) && e2 >= 0.0;
    let certified = match candidate {
        Some(m) if section_ok && (-e1.round()) as u32 == m => Some(m),
        _ => None,
    };
    Ok((
        form,
        McGeheeClassification {
            density_exponent: f,
            candidate_order: candidate,
            section_ok,
            certified_order: certified,
        },
    ))
}

pub fn kepler_levi_civita() -> PulledBackForm {
    PulledBackForm {
        coords: ["u1", "p1", "u2", "p2"],
        kind: PulledBackKind::KeplerLeviCivita,
    }
}

/// The Kepler degeneracy locus `u1 = +-u2`; the restricted form does not
/// have maximal rank there, so the degeneracy is not a clean fold.
pub fn kepler_fold_locus(u1: f64, u2: f64) -> f64 {
    u1 * u1 - u2 * u2
}

pub fn two_fixed_centers() -> PulledBackForm {
    PulledBackForm {
        coords: ["lambda", "p1", "nu", "p2"],
        kind: PulledBackKind::TwoFixedCenters,
    }
}

/// The degeneracy locus computed from the density's actual vanishing.
pub fn two_centers_locus_residual(l: f64, n: f64) -> f64 {
    (l.cosh() * n.cos()).powi(2) - (l.sinh() * n.sin()).powi(2)
}

/// The printed locus equation in the source display (kept as metadata; the
/// density gives `cosh^2(lambda) cos^2(nu) = sinh^2(lambda) sin^2(nu)`).
pub const TWO_CENTERS_PRINTED_LOCUS: &str = "cosh(lambda) cos(nu) = sinh(lambda) sin(lambda)";

/// Elliptic coordinates `(q1, q2) = (sinh(l) cos(n), cosh(l) sin(n))`.
pub fn elliptic_to_cartesian(l: f64, n: f64) -> (f64, f64) {
    (l.sinh() * n.cos(), l.cosh() * n.sin())
}

/// Numeric inverse of the elliptic chart (Newton), valid off the foci.
pub fn cartesian_to_elliptic(q1: f64, q2: f64, seed: (f64, f64)) -> Result<(f64, f64)> {
    let f = |x: &[f64]| {
        let (a, b) = elliptic_to_cartesian(x[0], x[1]);
        vec![a - q1, b - q2]
    };
    let jac = |x: &[f64]| {
        let (l, n) = (x[0], x[1]);
        vec![
            vec![l.cosh() * n.cos(), -l.sinh() * n.sin()],
            vec![l.sinh() * n.sin(), l.cosh() * n.cos()],
        ]
    };
    let r = newton_solve(f, jac, &[seed.0, seed.1], 1e-12, 80)?;
    Ok((r[0], r[1]))
}

// ---------------------------------------------------------------------------
// restricted three-body infinity chart
// ---------------------------------------------------------------------------

pub fn three_body_mcgehee() -> (PulledBackForm, ActionAngleForm) {
    let form = PulledBackForm {
        coords: ["x", "P_r", "alpha", "P_alpha"],
        kind: PulledBackKind::ThreeBodyMcGehee,
    };
    // order-3 singular block paired as actions (x, P_alpha), angles
    // (P_r, alpha); the modular normalization is nominal since the chart
    // carries no singular Hamiltonian block.
    let aa = ActionAngleForm::new(2, 3, vec![0.0, 0.0, 4.0], 1.0).expect("static data");
    (form, aa)
}

/// Chain-rule recomputation of the `dx ^ dP_r` coefficient from `r = 2/x^2`:
/// `dP_r ^ dr = (dr/dx)^{-1}`-free route, compared against the stored 4/x^3.
pub fn three_body_chain_rule_coeff(x: f64) -> f64 {
    // r = 2/x^2 -> dr = -4 x^{-3} dx, and dP_r ^ dr = -dr ^ dP_r
    let dr_dx = -4.0 / x.powi(3);
    -dr_dx
}

/// The transformed Hamiltonian `H = P_r^2/2 + x^4 P_alpha^2 / 8 + U(x, alpha)`
/// with primaries of mass ratio `mu` at `(+-1/2, 0)`. State layout: actions
/// `(x, P_alpha)`, angles `(P_r, alpha)`.
#[derive(Debug, Clone)]
pub struct ThreeBodyFlow {
    pub mass_ratio: f64,
}

impl ThreeBodyFlow {
    const SEPARATION: f64 = 0.5;

    fn potential_terms(&self, x: f64, alpha: f64) -> (f64, f64, f64) {
        let r = 2.0 / (x * x);
        let a = Self::SEPARATION;
        let d1 = (r * r - 2.0 * a * r * alpha.cos() + a * a).sqrt();
        let d2 = (r * r + 2.0 * a * r * alpha.cos() + a * a).sqrt();
        let u = -(1.0 - self.mass_ratio) / d1 - self.mass_ratio / d2;
        // dU/dr and dU/dalpha in closed form
        let du_dr = (1.0 - self.mass_ratio) * (r - a * alpha.cos()) / d1.powi(3)
            + self.mass_ratio * (r + a * alpha.cos()) / d2.powi(3);
        let du_dalpha = (1.0 - self.mass_ratio) * (a * r * alpha.sin()) / d1.powi(3)
            - self.mass_ratio * (a * r * alpha.sin()) / d2.powi(3);
        (u, du_dr, du_dalpha)
    }

    pub fn hamiltonian(&self, phi: &[f64], actions: &[f64]) -> f64 {
        let (x, p_alpha) = (actions[0], actions[1]);
        let (p_r, alpha) = (phi[0], phi[1]);
        let (u, _, _) = self.potential_terms(x, alpha);
        0.5 * p_r * p_r + x.powi(4) * p_alpha * p_alpha / 8.0 + u
    }
}

impl FlowField for ThreeBodyFlow {
    fn velocity(&self, _t: f64, phi: &[f64], actions: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (x, p_alpha) = (actions[0], actions[1]);
        let (p_r, alpha) = (phi[0], phi[1]);
        if x == 0.0 {
            return Err(Error::DenominatorZero(0.0));
        }
        let b = x.powi(3) / 4.0;
        let (_, du_dr, du_dalpha) = self.potential_terms(x, alpha);
        let dh_dx = x.powi(3) * p_alpha * p_alpha / 2.0 + du_dr * (-4.0 / x.powi(3));
        let dh_dpr = p_r;
        let dh_dpalpha = x.powi(4) * p_alpha / 4.0;
        // pair 1 scaled by B = x^3/4, pair 2 standard
        Ok((
            vec![b * dh_dx, dh_dpalpha],
            vec![-b * dh_dpr, -du_dalpha],
        ))
    }

    fn energy(&self, phi: &[f64], actions: &[f64]) -> f64 {
        self.hamiltonian(phi, actions)
    }
}
