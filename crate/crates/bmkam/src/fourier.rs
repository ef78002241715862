//! Truncated Fourier series in the angles with polynomial action dependence:
//! the single function representation used everywhere in the crate.
//!
//! A [`FourierTaylor`] stores, for each integer mode `k` with `|k|_1 <=
//! k_cap`, a complex polynomial in the centered actions `I - I0` of total
//! degree `<= deg`. Reality is maintained structurally: the coefficient at
//! `-k` is always the conjugate of the coefficient at `k`. Sums over modes
//! run in the fixed `BTreeMap` order, so results do not depend on evaluation
//! strategy.
//!
//! The weighted norms follow the analytic-function convention: a mode
//! contributes its action-polynomial bound on the complex widening of the box
//! times `exp(|k|_1 * rho1)`. The polynomial bound is the coefficient-wise
//! majorant `sum |c_beta| * r^beta` with `r_j = max |G_j - I0_j| + rho2`; this
//! is a certified upper estimate of the sup on the widened domain, monotone
//! in both widths, which is what makes the Cauchy and tail inequalities hold
//! term by term with zero violations.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{tensor_grid, PolyFitter};

/// Analyticity widths and the action box `G`.
///
/// `rho1` widens the angles into a complex strip, `rho2` widens the action
/// box. The box must stay on one side of the critical set `{I1 = 0}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Domain {
    pub g_lo: Vec<f64>,
    pub g_hi: Vec<f64>,
    pub rho1: f64,
    pub rho2: f64,
}

impl Domain {
    pub fn new(g_lo: Vec<f64>, g_hi: Vec<f64>, rho1: f64, rho2: f64) -> Result<Self> {
        if g_lo.len() != g_hi.len() || g_lo.is_empty() {
            return Err(Error::InvalidParams("domain box dimension mismatch".into()));
        }
        if rho1 <= 0.0 || rho2 <= 0.0 {
            return Err(Error::InvalidParams("analyticity widths must be > 0".into()));
        }
        for (l, h) in g_lo.iter().zip(&g_hi) {
            if !(l <= h) {
                return Err(Error::InvalidParams("empty domain box".into()));
            }
        }
        if g_lo[0] <= 0.0 && g_hi[0] >= 0.0 {
            return Err(Error::InvalidParams(
                "action box must avoid I1 = 0 (one-sided)".into(),
            ));
        }
        Ok(Domain {
            g_lo,
            g_hi,
            rho1,
            rho2,
        })
    }

    pub fn dim(&self) -> usize {
        self.g_lo.len()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.g_lo
            .iter()
            .zip(&self.g_hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    /// Shrink the analyticity widths by `delta = (d1, d2)`.
    pub fn shrunk(&self, d1: f64, d2: f64) -> Result<Domain> {
        Domain::new(
            self.g_lo.clone(),
            self.g_hi.clone(),
            self.rho1 - d1,
            self.rho2 - d2,
        )
    }

    /// Per-axis majorant radius around `i0` including the complex widening.
    fn radii(&self, i0: &[f64]) -> Vec<f64> {
        i0.iter()
            .enumerate()
            .map(|(j, &c)| (self.g_lo[j] - c).abs().max((self.g_hi[j] - c).abs()) + self.rho2)
            .collect()
    }

    pub fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        tensor_grid(&self.g_lo, &self.g_hi, per_dim)
    }

    pub fn contains(&self, i: &[f64]) -> bool {
        i.iter()
            .enumerate()
            .all(|(j, &x)| x >= self.g_lo[j] - 1e-12 && x <= self.g_hi[j] + 1e-12)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ModePoly {
    pub(crate) terms: BTreeMap<Vec<u8>, Complex64>,
}

impl ModePoly {
    fn insert(&mut self, expo: Vec<u8>, c: Complex64) {
        if c.norm_sqr() == 0.0 {
            return;
        }
        let slot = self.terms.entry(expo).or_insert(Complex64::new(0.0, 0.0));
        *slot += c;
        if slot.norm_sqr() == 0.0 {
            // exact cancellation
            let key: Vec<Vec<u8>> = self
                .terms
                .iter()
                .filter(|(_, v)| v.norm_sqr() == 0.0)
                .map(|(k, _)| k.clone())
                .collect();
            for k in key {
                self.terms.remove(&k);
            }
        }
    }

    fn conj(&self) -> ModePoly {
        ModePoly {
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), c.conj()))
                .collect(),
        }
    }

    fn scale(&self, s: Complex64) -> ModePoly {
        let mut out = ModePoly::default();
        for (e, c) in &self.terms {
            out.insert(e.clone(), c * s);
        }
        out
    }

    fn add_assign(&mut self, other: &ModePoly) {
        for (e, c) in &other.terms {
            self.insert(e.clone(), *c);
        }
    }

    fn eval(&self, di: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let mut m = 1.0;
            for (j, &p) in e.iter().enumerate() {
                m *= di[j].powi(p as i32);
            }
            acc += c * m;
        }
        acc
    }

    fn diff(&self, var: usize) -> ModePoly {
        let mut out = ModePoly::default();
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[var] -= 1;
            out.insert(e2, c * (e[var] as f64));
        }
        out
    }

    /// Coefficient majorant over the widened box.
    fn bound(&self, radii: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut m = c.norm();
                for (j, &p) in e.iter().enumerate() {
                    m *= radii[j].powi(p as i32);
                }
                m
            })
            .sum()
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Real-valued truncated Fourier series with polynomial action dependence.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTaylor {
    n: usize,
    k_cap: i32,
    deg: u8,
    i0: Vec<f64>,
    modes: BTreeMap<Vec<i32>, ModePoly>,
}

fn mode_l1(k: &[i32]) -> i32 {
    k.iter().map(|x| x.abs()).sum()
}

fn neg_mode(k: &[i32]) -> Vec<i32> {
    k.iter().map(|x| -x).collect()
}

impl FourierTaylor {
    pub fn zero(n: usize, k_cap: i32, deg: u8, i0: Vec<f64>) -> Self {
        assert_eq!(i0.len(), n);
        FourierTaylor {
            n,
            k_cap,
            deg,
            i0,
            modes: BTreeMap::new(),
        }
    }

    pub fn constant(v: f64, n: usize, k_cap: i32, deg: u8, i0: Vec<f64>) -> Self {
        let mut f = Self::zero(n, k_cap, deg, i0);
        f.add_term(&vec![0; n], &vec![0; n], Complex64::new(v, 0.0));
        f
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k_cap(&self) -> i32 {
        self.k_cap
    }
    pub fn deg(&self) -> u8 {
        self.deg
    }
    pub fn i0(&self) -> &[f64] {
        &self.i0
    }
    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }
    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    /// Largest `|k|_1` actually stored.
    pub fn max_mode_l1(&self) -> i32 {
        self.modes.keys().map(|k| mode_l1(k)).max().unwrap_or(0)
    }

    pub fn with_caps(mut self, k_cap: i32, deg: u8) -> Self {
        assert!(k_cap >= self.max_mode_l1());
        self.k_cap = k_cap;
        self.deg = self.deg.max(deg);
        self
    }

    pub fn modes(&self) -> impl Iterator<Item = &Vec<i32>> {
        self.modes.keys()
    }

    /// Add `c * (I - I0)^expo * e^{i k.phi}` together with its conjugate
    /// mirror at `-k`, keeping the series real.
    pub fn add_term(&mut self, k: &[i32], expo: &[u8], c: Complex64) {
        assert_eq!(k.len(), self.n);
        assert!(mode_l1(k) <= self.k_cap, "mode exceeds k_cap");
        assert!(
            expo.iter().map(|&e| e as u16).sum::<u16>() as u8 <= self.deg,
            "degree exceeds cap"
        );
        if k.iter().all(|&x| x == 0) {
            self.entry(k.to_vec()).insert(expo.to_vec(), Complex64::new(c.re, 0.0));
        } else {
            self.entry(k.to_vec()).insert(expo.to_vec(), c * 0.5);
            self.entry(neg_mode(k)).insert(expo.to_vec(), c.conj() * 0.5);
        }
        self.prune_zeros();
    }

    /// Add `amp * cos(k.phi) * (I - I0)^expo`.
    pub fn add_cos(&mut self, k: &[i32], expo: &[u8], amp: f64) {
        self.add_term(k, expo, Complex64::new(amp, 0.0));
    }

    /// Add `amp * sin(k.phi) * (I - I0)^expo`.
    pub fn add_sin(&mut self, k: &[i32], expo: &[u8], amp: f64) {
        // sin = (e^{ik} - e^{-ik})/(2i): coefficient at +k is -i*amp/2
        self.add_term(k, expo, Complex64::new(0.0, -amp));
    }

    fn entry(&mut self, k: Vec<i32>) -> &mut ModePoly {
        self.modes.entry(k).or_default()
    }

    fn prune_zeros(&mut self) {
        self.modes.retain(|_, p| !p.is_zero());
    }

    /// Value at a real phase-space point.
    pub fn eval(&self, phi: &[f64], i: &[f64]) -> f64 {
        let di: Vec<f64> = i.iter().zip(&self.i0).map(|(a, b)| a - b).collect();
        let mut acc = 0.0;
        for (k, p) in &self.modes {
            let th: f64 = k.iter().zip(phi).map(|(&kk, &ph)| kk as f64 * ph).sum();
            let c = p.eval(&di);
            acc += c.re * th.cos() - c.im * th.sin();
        }
        acc
    }

    /// Exact gradient `(d/dphi, d/dI)` at a real point.
    pub fn grad(&self, phi: &[f64], i: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let di: Vec<f64> = i.iter().zip(&self.i0).map(|(a, b)| a - b).collect();
        let mut dphi = vec![0.0; self.n];
        let mut dact = vec![0.0; self.n];
        for (k, p) in &self.modes {
            let th: f64 = k.iter().zip(phi).map(|(&kk, &ph)| kk as f64 * ph).sum();
            let (cth, sth) = (th.cos(), th.sin());
            let c = p.eval(&di);
            // d/dphi_j of Re(c e^{i th}) = Re(i k_j c e^{i th})
            for j in 0..self.n {
                let kj = k[j] as f64;
                dphi[j] += -kj * (c.re * sth + c.im * cth);
            }
            for j in 0..self.n {
                let dc = p.diff(j).eval(&di);
                dact[j] += dc.re * cth - dc.im * sth;
            }
        }
        (dphi, dact)
    }

    /// Exact Hessian in the ordering `(phi_1..phi_n, I_1..I_n)`.
    pub fn hessian(&self, phi: &[f64], i: &[f64]) -> Vec<Vec<f64>> {
        let di: Vec<f64> = i.iter().zip(&self.i0).map(|(a, b)| a - b).collect();
        let d = 2 * self.n;
        let mut h = vec![vec![0.0; d]; d];
        for (k, p) in &self.modes {
            let th: f64 = k.iter().zip(phi).map(|(&kk, &ph)| kk as f64 * ph).sum();
            let (cth, sth) = (th.cos(), th.sin());
            let c = p.eval(&di);
            for a in 0..self.n {
                let ka = k[a] as f64;
                for b in 0..self.n {
                    let kb = k[b] as f64;
                    // phi-phi: Re((i ka)(i kb) c e) = -ka kb Re(c e)
                    h[a][b] += -ka * kb * (c.re * cth - c.im * sth);
                }
                for b in 0..self.n {
                    let dcb = p.diff(b).eval(&di);
                    // phi_a, I_b: Re(i ka dc e)
                    let v = -ka * (dcb.re * sth + dcb.im * cth);
                    h[a][self.n + b] += v;
                    h[self.n + b][a] += v;
                }
            }
            for a in 0..self.n {
                for b in 0..self.n {
                    let d2 = p.diff(a).diff(b).eval(&di);
                    h[self.n + a][self.n + b] += d2.re * cth - d2.im * sth;
                }
            }
        }
        h
    }

    /// Angular average: the `k = 0` part only.
    pub fn angular_average(&self) -> FourierTaylor {
        let mut out = Self::zero(self.n, self.k_cap, self.deg, self.i0.clone());
        if let Some(p) = self.modes.get(&vec![0; self.n]) {
            out.modes.insert(vec![0; self.n], p.clone());
        }
        out
    }

    /// Keep modes with `0 < |k|_1 <= kmax`, plus `k = 0` when `keep_average`.
    pub fn truncate_low(&self, kmax: i32, keep_average: bool) -> FourierTaylor {
        let mut out = Self::zero(self.n, self.k_cap, self.deg, self.i0.clone());
        for (k, p) in &self.modes {
            let l1 = mode_l1(k);
            if (l1 > 0 && l1 <= kmax) || (l1 == 0 && keep_average) {
                out.modes.insert(k.clone(), p.clone());
            }
        }
        out
    }

    /// Keep modes with `|k|_1 > kmax`.
    pub fn truncate_high(&self, kmax: i32) -> FourierTaylor {
        let mut out = Self::zero(self.n, self.k_cap, self.deg, self.i0.clone());
        for (k, p) in &self.modes {
            if mode_l1(k) > kmax {
                out.modes.insert(k.clone(), p.clone());
            }
        }
        out
    }

    pub fn add(&self, other: &FourierTaylor) -> FourierTaylor {
        self.combined(other, 1.0)
    }

    pub fn sub(&self, other: &FourierTaylor) -> FourierTaylor {
        self.combined(other, -1.0)
    }

    fn combined(&self, other: &FourierTaylor, sign: f64) -> FourierTaylor {
        assert_eq!(self.n, other.n);
        assert_eq!(self.i0, other.i0, "base points must match");
        let mut out = self.clone();
        out.k_cap = self.k_cap.max(other.k_cap);
        out.deg = self.deg.max(other.deg);
        for (k, p) in &other.modes {
            out.entry(k.clone())
                .add_assign(&p.scale(Complex64::new(sign, 0.0)));
        }
        out.prune_zeros();
        out
    }

    pub fn scale(&self, s: f64) -> FourierTaylor {
        let mut out = self.clone();
        for p in out.modes.values_mut() {
            *p = p.scale(Complex64::new(s, 0.0));
        }
        out.prune_zeros();
        out
    }

    /// Product with mode/degree capping. The certified norm of every dropped
    /// term (with respect to `dom`) is returned; capping is never silent.
    pub fn mul(&self, other: &FourierTaylor, dom: &Domain) -> (FourierTaylor, f64) {
        self.mul_floored(other, dom, 0.0)
    }

    /// Product that additionally skips mode pairs whose certified
    /// contribution to the weighted norm is below `abs_floor / pair_count`;
    /// the skipped mass is accounted in the returned loss. Keeps iterated
    /// brackets of wide spectra tractable without silent truncation.
    pub fn mul_floored(
        &self,
        other: &FourierTaylor,
        dom: &Domain,
        abs_floor: f64,
    ) -> (FourierTaylor, f64) {
        assert_eq!(self.n, other.n);
        assert_eq!(self.i0, other.i0, "base points must match");
        let k_cap = self.k_cap.max(other.k_cap);
        let deg = self.deg.max(other.deg);
        let mut out = Self::zero(self.n, k_cap, deg, self.i0.clone());
        let radii = dom.radii(&self.i0);
        let mut lost = 0.0;
        // weighted per-mode bounds; the contribution of a pair (ka, kb) to
        // the product norm is at most bound(ka) * bound(kb) since
        // |ka + kb|_1 <= |ka|_1 + |kb|_1
        let bounds_a: Vec<(&Vec<i32>, &ModePoly, f64)> = self
            .modes
            .iter()
            .map(|(k, p)| (k, p, p.bound(&radii) * (mode_l1(k) as f64 * dom.rho1).exp()))
            .collect();
        let bounds_b: Vec<(&Vec<i32>, &ModePoly, f64)> = other
            .modes
            .iter()
            .map(|(k, p)| (k, p, p.bound(&radii) * (mode_l1(k) as f64 * dom.rho1).exp()))
            .collect();
        let pair_floor = if abs_floor > 0.0 {
            abs_floor / ((bounds_a.len() * bounds_b.len()).max(1) as f64)
        } else {
            0.0
        };
        for (ka, pa, na) in &bounds_a {
            for (kb, pb, nb) in &bounds_b {
                if pair_floor > 0.0 && na * nb < pair_floor {
                    lost += na * nb;
                    continue;
                }
                let k: Vec<i32> = ka.iter().zip(kb.iter()).map(|(a, b)| a + b).collect();
                let mode_ok = mode_l1(&k) <= k_cap;
                let weight = (mode_l1(&k) as f64 * dom.rho1).exp();
                for (ea, ca) in &pa.terms {
                    for (eb, cb) in &pb.terms {
                        let e: Vec<u8> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                        let c = ca * cb;
                        let tot: u8 = e.iter().sum();
                        if mode_ok && tot <= deg {
                            out.entry(k.clone()).insert(e, c);
                        } else {
                            let mut m = c.norm();
                            for (j, &p) in e.iter().enumerate() {
                                m *= radii[j].powi(p as i32);
                            }
                            lost += m * weight;
                        }
                    }
                }
            }
        }
        out.prune_zeros();
        (out, lost)
    }

    /// Termwise derivative with respect to an angle.
    pub fn diff_angle(&self, j: usize) -> FourierTaylor {
        let mut out = Self::zero(self.n, self.k_cap, self.deg, self.i0.clone());
        for (k, p) in &self.modes {
            if k[j] == 0 {
                continue;
            }
            out.modes
                .insert(k.clone(), p.scale(Complex64::new(0.0, k[j] as f64)));
        }
        out
    }

    /// Termwise derivative with respect to an action.
    pub fn diff_action(&self, j: usize) -> FourierTaylor {
        let mut out = Self::zero(self.n, self.k_cap, self.deg, self.i0.clone());
        for (k, p) in &self.modes {
            let d = p.diff(j);
            if !d.is_zero() {
                out.modes.insert(k.clone(), d);
            }
        }
        out
    }

    /// Weighted analytic norm: sum over modes of the action majorant times
    /// `exp(|k|_1 rho1)`.
    pub fn weighted_norm(&self, dom: &Domain) -> f64 {
        let radii = dom.radii(&self.i0);
        self.modes
            .iter()
            .map(|(k, p)| p.bound(&radii) * (mode_l1(k) as f64 * dom.rho1).exp())
            .sum()
    }

    /// Norm of the angular gradient as an l1 vector field.
    pub fn angle_gradient_norm(&self, dom: &Domain) -> f64 {
        let radii = dom.radii(&self.i0);
        self.modes
            .iter()
            .map(|(k, p)| {
                (mode_l1(k) as f64) * p.bound(&radii) * (mode_l1(k) as f64 * dom.rho1).exp()
            })
            .sum()
    }

    /// Norm of the action gradient as an l-infinity vector field.
    pub fn action_gradient_norm(&self, dom: &Domain) -> f64 {
        let radii = dom.radii(&self.i0);
        self.modes
            .iter()
            .map(|(k, p)| {
                let comp = (0..self.n)
                    .map(|j| p.diff(j).bound(&radii))
                    .fold(0.0_f64, f64::max);
                comp * (mode_l1(k) as f64 * dom.rho1).exp()
            })
            .sum()
    }

    /// The c-weighted derivative norm `max(|df/dphi|_1, c |df/dI|_inf)`.
    pub fn derivative_norm(&self, dom: &Domain, c: f64) -> f64 {
        assert!(c > 0.0);
        self.angle_gradient_norm(dom)
            .max(c * self.action_gradient_norm(dom))
    }

    /// Drop individual polynomial terms whose certified contribution is
    /// negligible relative to the whole series; the summed dropped mass is
    /// returned and stays below `rel * weighted_norm`. Keeps the term count
    /// of iterated products bounded.
    pub fn prune_terms(&mut self, dom: &Domain, rel: f64) -> f64 {
        let radii = dom.radii(&self.i0);
        let norm = self.weighted_norm(dom);
        if norm == 0.0 {
            return 0.0;
        }
        let total_terms: usize = self.modes.values().map(|p| p.terms.len()).sum();
        let floor = rel * norm / total_terms.max(1) as f64;
        let mut lost = 0.0;
        for (k, p) in self.modes.iter_mut() {
            let weight = (mode_l1(k) as f64 * dom.rho1).exp();
            let doomed: Vec<Vec<u8>> = p
                .terms
                .iter()
                .filter(|(e, c)| {
                    let mut m = c.norm();
                    for (j, &pw) in e.iter().enumerate() {
                        m *= radii[j].powi(pw as i32);
                    }
                    m * weight < floor
                })
                .map(|(e, _)| e.clone())
                .collect();
            for e in doomed {
                if let Some(c) = p.terms.remove(&e) {
                    let mut m = c.norm();
                    for (j, &pw) in e.iter().enumerate() {
                        m *= radii[j].powi(pw as i32);
                    }
                    lost += m * weight;
                }
            }
        }
        self.prune_zeros();
        lost
    }

    /// Drop modes whose certified norm contribution is below `threshold`;
    /// returns the total dropped mass.
    pub fn prune_below(&mut self, dom: &Domain, threshold: f64) -> f64 {
        let radii = dom.radii(&self.i0);
        let mut lost = 0.0;
        let keys: Vec<Vec<i32>> = self
            .modes
            .iter()
            .filter(|(k, p)| p.bound(&radii) * (mode_l1(k) as f64 * dom.rho1).exp() < threshold)
            .map(|(k, _)| k.clone())
            .collect();
        for k in keys {
            if let Some(p) = self.modes.remove(&k) {
                lost += p.bound(&radii) * (mode_l1(&k) as f64 * dom.rho1).exp();
            }
        }
        lost
    }

    /// Re-center the polynomial part at a new base point (exact shift).
    pub fn recentered(&self, new_i0: &[f64]) -> FourierTaylor {
        assert_eq!(new_i0.len(), self.n);
        let shift: Vec<f64> = new_i0.iter().zip(&self.i0).map(|(a, b)| a - b).collect();
        let mut out = Self::zero(self.n, self.k_cap, self.deg, new_i0.to_vec());
        for (k, p) in &self.modes {
            let mut np = ModePoly::default();
            for (e, c) in &p.terms {
                // (x + s)^e expansion per variable
                let mut partial: Vec<(Vec<u8>, f64)> = vec![(vec![], 1.0)];
                for (j, &pj) in e.iter().enumerate() {
                    let mut next = Vec::new();
                    for (pref, w) in &partial {
                        for m in 0..=pj {
                            let bin = binomial(pj, m);
                            let coef = w * bin * shift[j].powi((pj - m) as i32);
                            let mut e2 = pref.clone();
                            e2.push(m);
                            next.push((e2, coef));
                        }
                    }
                    partial = next;
                }
                for (e2, w) in partial {
                    np.insert(e2, c * w);
                }
            }
            if !np.is_zero() {
                out.modes.insert(k.clone(), np);
            }
        }
        out
    }

    /// Fit a scalar function of the actions by a `k = 0` polynomial on a
    /// Chebyshev grid over the domain box; returns the fit and its max grid
    /// residual.
    pub fn fit_action_function(
        n: usize,
        k_cap: i32,
        deg: u8,
        i0: &[f64],
        dom: &Domain,
        f: &dyn Fn(&[f64]) -> f64,
    ) -> Result<(FourierTaylor, f64)> {
        let grid = dom.grid(deg as usize + 3);
        let fitter = PolyFitter::new(&grid, i0, deg);
        let vals: Vec<f64> = grid.iter().map(|p| f(p)).collect();
        let (coeffs, resid) = fitter.fit(&vals)?;
        let mut out = Self::zero(n, k_cap, deg, i0.to_vec());
        let mut poly = ModePoly::default();
        for (c, e) in coeffs.iter().zip(&fitter.exponents) {
            poly.insert(e.clone(), Complex64::new(*c, 0.0));
        }
        if !poly.is_zero() {
            out.modes.insert(vec![0; n], poly);
        }
        Ok((out, resid))
    }

    /// Replace the polynomial of a single mode pair from complex grid values
    /// (used by the homological solver). The conjugate mirror at `-k` is set
    /// automatically.
    pub(crate) fn set_mode_from_fit(
        &mut self,
        k: &[i32],
        fitter: &PolyFitter,
        values: &[Complex64],
    ) -> Result<f64> {
        let re: Vec<f64> = values.iter().map(|v| v.re).collect();
        let im: Vec<f64> = values.iter().map(|v| v.im).collect();
        let (cr, rr) = fitter.fit(&re)?;
        let (ci, ri) = fitter.fit(&im)?;
        let mut poly = ModePoly::default();
        for ((a, b), e) in cr.iter().zip(&ci).zip(&fitter.exponents) {
            poly.insert(e.clone(), Complex64::new(*a, *b));
        }
        let conj = poly.conj();
        if !poly.is_zero() {
            self.modes.insert(k.to_vec(), poly);
            self.modes.insert(neg_mode(k), conj);
        }
        Ok(rr.max(ri))
    }

    /// Complex coefficient polynomial of mode `k` evaluated at the actions `i`.
    pub fn mode_value(&self, k: &[i32], i: &[f64]) -> Complex64 {
        let di: Vec<f64> = i.iter().zip(&self.i0).map(|(a, b)| a - b).collect();
        self.modes
            .get(k)
            .map(|p| p.eval(&di))
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Certified norm contribution of a single mode pair.
    pub fn mode_norm(&self, k: &[i32], dom: &Domain) -> f64 {
        let radii = dom.radii(&self.i0);
        self.modes
            .get(k)
            .map(|p| p.bound(&radii) * (mode_l1(k) as f64 * dom.rho1).exp())
            .unwrap_or(0.0)
    }
}

fn binomial(n: u8, k: u8) -> f64 {
    let mut v = 1.0;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

// ---------------------------------------------------------------------------
// serialization (schema: {n, K_cap, deg, I0, modes:[{k, re_poly, im_poly}]})
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModeJson {
    k: Vec<i32>,
    re_poly: BTreeMap<String, f64>,
    im_poly: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct FourierTaylorJson {
    n: usize,
    #[serde(rename = "K_cap")]
    k_cap: i32,
    deg: u8,
    #[serde(rename = "I0")]
    i0: Vec<f64>,
    modes: Vec<ModeJson>,
}

fn expo_key(e: &[u8]) -> String {
    e.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_expo(s: &str, n: usize) -> std::result::Result<Vec<u8>, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != n {
        return Err(format!("exponent key '{s}' has wrong arity"));
    }
    parts
        .iter()
        .map(|p| p.trim().parse::<u8>().map_err(|e| e.to_string()))
        .collect()
}

impl Serialize for FourierTaylor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let modes = self
            .modes
            .iter()
            .map(|(k, p)| {
                let mut re = BTreeMap::new();
                let mut im = BTreeMap::new();
                for (e, c) in &p.terms {
                    if c.re != 0.0 {
                        re.insert(expo_key(e), c.re);
                    }
                    if c.im != 0.0 {
                        im.insert(expo_key(e), c.im);
                    }
                }
                ModeJson {
                    k: k.clone(),
                    re_poly: re,
                    im_poly: im,
                }
            })
            .collect();
        FourierTaylorJson {
            n: self.n,
            k_cap: self.k_cap,
            deg: self.deg,
            i0: self.i0.clone(),
            modes,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FourierTaylor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = FourierTaylorJson::deserialize(d)?;
        let mut out = FourierTaylor::zero(raw.n, raw.k_cap, raw.deg, raw.i0);
        for m in raw.modes {
            if m.k.len() != raw.n {
                return Err(serde::de::Error::custom("mode arity mismatch"));
            }
            let mut poly = ModePoly::default();
            for (key, v) in &m.re_poly {
                let e = parse_expo(key, raw.n).map_err(serde::de::Error::custom)?;
                poly.insert(e, Complex64::new(*v, 0.0));
            }
            for (key, v) in &m.im_poly {
                let e = parse_expo(key, raw.n).map_err(serde::de::Error::custom)?;
                poly.insert(e, Complex64::new(0.0, *v));
            }
            if mode_l1(&m.k) > raw.k_cap {
                return Err(serde::de::Error::custom("mode exceeds K_cap"));
            }
            if !poly.is_zero() {
                out.modes.insert(m.k, poly);
            }
        }
        // enforce reality on load
        let keys: Vec<Vec<i32>> = out.modes.keys().cloned().collect();
        for k in keys {
            let neg = neg_mode(&k);
            let have = out.modes.get(&k).cloned().unwrap_or_default();
            let mirror = out.modes.get(&neg).cloned().unwrap_or_default();
            let sym = {
                let mut s = have.scale(Complex64::new(0.5, 0.0));
                s.add_assign(&mirror.conj().scale(Complex64::new(0.5, 0.0)));
                s
            };
            if !sym.is_zero() {
                out.modes.insert(neg.clone(), sym.conj());
                out.modes.insert(k, sym);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dom2() -> Domain {
        Domain::new(vec![0.8, -0.5], vec![1.2, 0.5], 0.5, 0.1).unwrap()
    }

    #[test]
    fn eval_matches_closed_form() {
        let mut f = FourierTaylor::zero(2, 8, 3, vec![1.0, 0.0]);
        f.add_cos(&[1, 0], &[0, 0], 2.0);
        f.add_sin(&[0, 2], &[0, 0], -0.5);
        f.add_term(&[0, 0], &[1, 0], Complex64::new(3.0, 0.0));
        let phi = [0.3, 1.1];
        let i = [1.2, 0.4];
        let expect = 2.0 * (0.3_f64).cos() - 0.5 * (2.2_f64).sin() + 3.0 * (1.2 - 1.0);
        assert_relative_eq!(f.eval(&phi, &i), expect, epsilon = 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut f = FourierTaylor::zero(2, 8, 3, vec![1.0, 0.0]);
        f.add_cos(&[1, 1], &[0, 1], 1.3);
        f.add_sin(&[2, 0], &[1, 0], 0.7);
        f.add_term(&[0, 0], &[2, 1], Complex64::new(-0.4, 0.0));
        let phi = [0.4, -0.9];
        let i = [1.05, 0.2];
        let (dphi, di) = f.grad(&phi, &i);
        let h = 1e-6;
        for j in 0..2 {
            let mut pp = phi;
            pp[j] += h;
            let mut pm = phi;
            pm[j] -= h;
            let fd = (f.eval(&pp, &i) - f.eval(&pm, &i)) / (2.0 * h);
            assert_relative_eq!(dphi[j], fd, epsilon = 1e-8);
            let mut ip = i;
            ip[j] += h;
            let mut im = i;
            im[j] -= h;
            let fd = (f.eval(&phi, &ip) - f.eval(&phi, &im)) / (2.0 * h);
            assert_relative_eq!(di[j], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn angular_average_extracts_zero_mode() {
        let mut f = FourierTaylor::zero(2, 8, 2, vec![1.0, 0.0]);
        f.add_sin(&[1, 0], &[0, 0], 1.0);
        assert!(f.angular_average().is_zero());

        let mut g = FourierTaylor::constant(3.0, 2, 8, 2, vec![1.0, 0.0]);
        g.add_cos(&[0, 1], &[0, 0], 1.0);
        let avg = g.angular_average();
        assert_relative_eq!(avg.eval(&[0.0, 0.0], &[1.0, 0.0]), 3.0);

        let mut h = FourierTaylor::zero(2, 8, 2, vec![1.0, 0.0]);
        h.add_term(&[0, 0], &[0, 1], Complex64::new(1.0, 0.0));
        h.add_cos(&[1, 0], &[0, 0], 2.0);
        let avg = h.angular_average();
        assert_relative_eq!(avg.eval(&[0.7, 0.1], &[1.0, 0.25]), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn truncation_partition_is_exact() {
        let mut f = FourierTaylor::zero(2, 10, 2, vec![1.0, 0.0]);
        f.add_cos(&[1, 0], &[0, 0], 1.0);
        f.add_cos(&[3, 0], &[0, 0], 0.5);
        f.add_sin(&[0, 4], &[1, 0], 0.25);
        f.add_term(&[0, 0], &[0, 2], Complex64::new(2.0, 0.0));
        let k = 2;
        let rebuilt = f
            .truncate_low(k, false)
            .add(&f.truncate_high(k))
            .add(&f.angular_average());
        assert_eq!(rebuilt, f);
        // K >= K_cap kills the high part
        assert!(f.truncate_high(10).is_zero());
        let low = f.truncate_low(2, false);
        assert_eq!(low.mode_count(), 2); // cos(phi1) only, stored as +-k
    }

    #[test]
    fn weighted_norm_examples() {
        let dom = dom2();
        // unit-coefficient single mode pair: |f_k| = 1 total, weight e^{rho1}
        let mut f = FourierTaylor::zero(2, 4, 2, vec![1.0, 0.0]);
        f.add_cos(&[1, 0], &[0, 0], 1.0);
        let norm = f.weighted_norm(&dom);
        assert_relative_eq!(norm, (0.5_f64).exp(), epsilon = 1e-12);

        let z = FourierTaylor::zero(2, 4, 2, vec![1.0, 0.0]);
        assert_eq!(z.weighted_norm(&dom), 0.0);

        let c = FourierTaylor::constant(-2.5, 2, 4, 2, vec![1.0, 0.0]);
        assert_relative_eq!(c.weighted_norm(&dom), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn derivative_norm_examples() {
        let dom = dom2();
        let c = FourierTaylor::constant(4.0, 2, 4, 2, vec![1.0, 0.0]);
        assert_eq!(c.derivative_norm(&dom, 1.0), 0.0);

        let mut f = FourierTaylor::zero(2, 4, 2, vec![1.0, 0.0]);
        f.add_sin(&[1, 0], &[0, 0], 1.0);
        // |d f/d phi|_1 = |cos phi_1| weighted: e^{rho1}
        assert_relative_eq!(
            f.derivative_norm(&dom, 1.0),
            (0.5_f64).exp(),
            epsilon = 1e-12
        );
        // scaling linearity
        let g = f.scale(-3.0);
        assert_relative_eq!(
            g.derivative_norm(&dom, 1.0),
            3.0 * f.derivative_norm(&dom, 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn differentiation_examples() {
        let mut f = FourierTaylor::zero(2, 4, 3, vec![1.0, 0.0]);
        f.add_cos(&[1, 0], &[0, 0], 1.0);
        let df = f.diff_angle(0);
        // d/dphi cos(phi1) = -sin(phi1)
        let phi = [0.37, 0.0];
        assert_relative_eq!(
            df.eval(&phi, &[1.0, 0.0]),
            -(0.37_f64).sin(),
            epsilon = 1e-14
        );

        let mut g = FourierTaylor::zero(2, 4, 3, vec![1.0, 0.5]);
        g.add_term(&[0, 0], &[0, 2], Complex64::new(1.0, 0.0));
        let dg = g.diff_action(1);
        assert_relative_eq!(dg.eval(&[0.0, 0.0], &[1.0, 0.9]), 2.0 * 0.4, epsilon = 1e-14);

        // mixed partials commute
        let mut h = FourierTaylor::zero(2, 6, 3, vec![1.0, 0.0]);
        h.add_sin(&[2, 1], &[1, 1], 0.8);
        let a = h.diff_angle(0).diff_action(1);
        let b = h.diff_action(1).diff_angle(0);
        let p = [0.2, 0.9];
        let i = [1.1, 0.3];
        assert_relative_eq!(a.eval(&p, &i), b.eval(&p, &i), epsilon = 1e-13);
    }

    #[test]
    fn product_is_exact_when_caps_allow() {
        let dom = dom2();
        let mut f = FourierTaylor::zero(2, 8, 4, vec![1.0, 0.0]);
        f.add_cos(&[1, 0], &[0, 0], 1.0);
        let mut g = FourierTaylor::zero(2, 8, 4, vec![1.0, 0.0]);
        g.add_cos(&[1, 0], &[0, 0], 1.0);
        let (prod, lost) = f.mul(&g, &dom);
        assert_eq!(lost, 0.0);
        let phi = [0.77, 0.0];
        assert_relative_eq!(
            prod.eval(&phi, &[1.0, 0.0]),
            (0.77_f64).cos().powi(2),
            epsilon = 1e-14
        );
    }

    #[test]
    fn capping_is_reported() {
        let dom = dom2();
        let mut f = FourierTaylor::zero(2, 1, 1, vec![1.0, 0.0]);
        f.add_cos(&[1, 0], &[0, 0], 1.0);
        let (_, lost) = f.mul(&f, &dom);
        assert!(lost > 0.0, "mode 2 must be reported as dropped");
    }

    #[test]
    fn cauchy_inequalities_hold_termwise() {
        let dom = dom2();
        let mut rng = 1234u64;
        let mut rnd = || {
            // xorshift
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng % 2000) as f64 / 1000.0 - 1.0
        };
        for _ in 0..50 {
            let mut f = FourierTaylor::zero(2, 8, 3, vec![1.0, 0.0]);
            for _ in 0..5 {
                let k = [(rnd() * 3.0) as i32, (rnd() * 3.0) as i32];
                let e = [(rnd().abs() * 2.0) as u8, (rnd().abs() * 2.0) as u8];
                f.add_cos(&k, &e, rnd());
                f.add_sin(&k, &e, rnd());
            }
            let d1 = 0.2 * (1.0 + rnd().abs());
            let d2 = 0.04 * (1.0 + rnd().abs());
            let full = f.weighted_norm(&dom);
            let dphi: f64 = {
                let shrunk = Domain::new(
                    dom.g_lo.clone(),
                    dom.g_hi.clone(),
                    dom.rho1 - d1.min(0.4),
                    dom.rho2,
                )
                .unwrap();
                f.angle_gradient_norm(&shrunk)
            };
            assert!(
                dphi <= full / (std::f64::consts::E * d1.min(0.4)) + 1e-12,
                "angle Cauchy violated"
            );
            let di: f64 = {
                let shrunk = Domain::new(
                    dom.g_lo.clone(),
                    dom.g_hi.clone(),
                    dom.rho1,
                    dom.rho2 - d2.min(0.09),
                )
                .unwrap();
                f.action_gradient_norm(&shrunk)
            };
            assert!(di <= full / d2.min(0.09) + 1e-12, "action Cauchy violated");
        }
    }

    #[test]
    fn serde_roundtrip() {
        let mut f = FourierTaylor::zero(2, 6, 3, vec![1.0, 0.5]);
        f.add_cos(&[1, -1], &[1, 0], 0.25);
        f.add_sin(&[0, 2], &[0, 1], -1.5);
        let s = serde_json::to_string(&f).unwrap();
        let g: FourierTaylor = serde_json::from_str(&s).unwrap();
        let phi = [0.3, 0.8];
        let i = [1.1, 0.6];
        assert_relative_eq!(f.eval(&phi, &i), g.eval(&phi, &i), epsilon = 1e-15);
    }
}
