//! Non-resonance predicates, resonant-zone geometry and measure bounds, and
//! Diophantine-set sampling, including the special structure at the critical
//! set where `B -> 0` and the first divisor component locks to `k1/K'`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::singular::{ActionAngleForm, SingularPart};

/// Where a zone/predicate is evaluated radially: at a fixed `I1`, or on the
/// critical set (where the scaling factors take their limit values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialSite {
    Off(f64),
    AtZ,
}

/// Axis-aligned box of frequencies (or actions).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidParams("bad box".into()));
        }
        Ok(BoxRegion { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| rng.gen_range(*a..=*b))
            .collect()
    }

    /// Shrink by `margin` on every side.
    pub fn shrunk(&self, margin: f64) -> Result<BoxRegion> {
        let lo: Vec<f64> = self.lo.iter().map(|a| a + margin).collect();
        let hi: Vec<f64> = self.hi.iter().map(|b| b - margin).collect();
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::EmptyShrunkDomain);
        }
        BoxRegion::new(lo, hi)
    }
}

/// Diophantine exponents: `tau > n-1`, `gamma > 0`, mode scan cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DioParams {
    pub tau: f64,
    pub gamma: f64,
    pub k_scan: i32,
}

impl DioParams {
    pub fn new(tau: f64, gamma: f64, k_scan: i32) -> Result<Self> {
        if gamma < 0.0 || k_scan < 1 {
            return Err(Error::InvalidParams("bad Diophantine parameters".into()));
        }
        Ok(DioParams {
            tau,
            gamma,
            k_scan,
        })
    }
}

/// All integer modes `0 < |k|_1 <= k_max`, in a fixed deterministic order.
pub fn modes_up_to(n: usize, k_max: i32) -> Vec<Vec<i32>> {
    fn rec(n: usize, left: i32, cur: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if cur.len() == n - 1 {
            for last in -left..=left {
                cur.push(last);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for v in -left..=left {
            cur.push(v);
            rec(n, left - v.abs(), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    let mut cur = Vec::new();
    rec(n, k_max, &mut cur, &mut out);
    out.retain(|k| k.iter().any(|&x| x != 0));
    out
}

fn scaled_divisor(
    u: &[f64],
    site: RadialSite,
    form: &ActionAngleForm,
    sing: Option<&SingularPart>,
    k: &[i32],
) -> Result<f64> {
    let (b, a) = match site {
        RadialSite::Off(i1) => {
            let b = form.b_factor(i1)?;
            let a = match sing {
                Some(s) => form.a_factor(s, i1)?,
                None => 0.0,
            };
            (b, a)
        }
        RadialSite::AtZ => {
            let a = match sing {
                Some(s) => form.a_factor(s, 0.0)?,
                None => 1.0 / form.modular_period(),
            };
            (0.0, a)
        }
    };
    let mut d = k[0] as f64 * (b * u[0] + a);
    for j in 1..u.len() {
        d += k[j] as f64 * u[j];
    }
    Ok(d)
}

/// `|k1 (B u1 + A) + kbar.ubar| >= alpha`. At the critical set the divisor is
/// `kbar.ubar + k1/K'`.
pub fn is_nonresonant(
    u: &[f64],
    site: RadialSite,
    form: &ActionAngleForm,
    sing: Option<&SingularPart>,
    k: &[i32],
    alpha: f64,
) -> Result<bool> {
    if k.iter().all(|&x| x == 0) {
        return Err(Error::InvalidParams("mode k must be nonzero".into()));
    }
    Ok(scaled_divisor(u, site, form, sing, k)?.abs() >= alpha)
}

/// A single resonant strip in frequency space.
#[derive(Debug, Clone)]
pub struct ResonanceZone {
    pub k: Vec<i32>,
    pub alpha: f64,
    pub site: RadialSite,
}

impl ResonanceZone {
    pub fn new(k: Vec<i32>, alpha: f64, site: RadialSite) -> Result<Self> {
        if k.iter().all(|&x| x == 0) || alpha <= 0.0 {
            return Err(Error::InvalidParams("zone needs k != 0 and alpha > 0".into()));
        }
        Ok(ResonanceZone { k, alpha, site })
    }

    /// The weighted mode length `|k|_{2,omega} = sqrt(B^2 k1^2 + |kbar|^2)`.
    pub fn mode_weight(&self, form: &ActionAngleForm) -> Result<f64> {
        let b = match self.site {
            RadialSite::Off(i1) => form.b_factor(i1)?,
            RadialSite::AtZ => 0.0,
        };
        let mut s = (b * self.k[0] as f64).powi(2);
        for j in 1..self.k.len() {
            s += (self.k[j] as f64).powi(2);
        }
        Ok(s.sqrt())
    }

    /// Analytic strip-measure bound for the zone intersected with `f_box`.
    pub fn measure_bound(&self, f_box: &BoxRegion, form: &ActionAngleForm) -> Result<f64> {
        let n = f_box.dim();
        let kbar_zero = self.k[1..].iter().all(|&x| x == 0);
        if matches!(self.site, RadialSite::AtZ) && kbar_zero {
            // at Z the divisor is the constant k1/K': all or nothing
            let lock = (self.k[0] as f64 / form.modular_period()).abs();
            return Ok(if self.alpha <= lock {
                0.0
            } else {
                f_box.diameter().powi(n as i32)
            });
        }
        let w = self.mode_weight(form)?;
        if w == 0.0 {
            return Err(Error::DegenerateMode);
        }
        Ok(f_box.diameter().powi(n as i32 - 1) * 2.0 * self.alpha / w)
    }

    /// Bound sensitivity over a radial range (the weight depends on where
    /// `B` is evaluated inside the zone); returns (min, max) of the bound.
    pub fn measure_bound_range(
        &self,
        f_box: &BoxRegion,
        form: &ActionAngleForm,
        i1_range: (f64, f64),
        samples: usize,
    ) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for s in 0..samples.max(2) {
            let t = s as f64 / (samples.max(2) - 1) as f64;
            let i1 = i1_range.0 + t * (i1_range.1 - i1_range.0);
            let z = ResonanceZone {
                k: self.k.clone(),
                alpha: self.alpha,
                site: RadialSite::Off(i1),
            };
            let b = z.measure_bound(f_box, form)?;
            lo = lo.min(b);
            hi = hi.max(b);
        }
        Ok((lo, hi))
    }

    /// Monte-Carlo estimate of the zone measure inside `f_box`:
    /// (estimate, one-sigma statistical error), both in absolute measure.
    #[allow(clippy::too_many_arguments)]
    pub fn monte_carlo_measure(
        &self,
        f_box: &BoxRegion,
        form: &ActionAngleForm,
        sing: Option<&SingularPart>,
        n_samples: usize,
        seed: u64,
        exec: ExecMode,
    ) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..n_samples).map(|_| f_box.sample(&mut rng)).collect();
        let flags = map_indexed(exec, &points, |j| {
            scaled_divisor(j, self.site, form, sing, &self.k)
                .map(|d| d.abs() < self.alpha)
                .unwrap_or(false)
        });
        let hits = flags.iter().filter(|&&x| x).count() as f64;
        let p = hits / n_samples as f64;
        let vol = f_box.volume();
        let sigma = (p * (1.0 - p) / n_samples as f64).sqrt() * vol;
        Ok((p * vol, sigma))
    }
}

/// Whether `beta <= 1/K'`, i.e. whether every at-Z zone with `kbar = 0` is
/// empty so only `kbar != 0` modes matter there.
pub fn critical_set_budget(beta: f64, k_mod: f64) -> bool {
    beta <= (1.0 / k_mod).abs()
}

/// One row of a sampling survey.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRow {
    pub point: Vec<f64>,
    pub kept: bool,
    pub worst_divisor: f64,
    pub worst_mode: Vec<i32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Survey {
    pub kept_fraction: f64,
    pub sigma: f64,
    pub seed: u64,
    pub rows: Vec<SampleRow>,
}

impl Survey {
    pub fn kept_points(&self) -> Vec<&SampleRow> {
        self.rows.iter().filter(|r| r.kept).collect()
    }
}

/// Sample the Diophantine surviving set: uniform points of `G - 2 gamma/mu`,
/// kept iff non-resonant with `alpha = gamma/|k|_1^tau` for every scanned
/// mode. Deterministic under the seed.
#[allow(clippy::too_many_arguments)]
pub fn diophantine_sample(
    g_box: &BoxRegion,
    form: &ActionAngleForm,
    sing: Option<&SingularPart>,
    u_map: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    dio: &DioParams,
    n_samples: usize,
    seed: u64,
    exec: ExecMode,
) -> Result<Survey> {
    if n_samples == 0 {
        return Err(Error::InvalidParams("need at least one sample".into()));
    }
    let mu = estimate_nondegeneracy(g_box, u_map);
    let margin = if dio.gamma == 0.0 {
        0.0
    } else {
        2.0 * dio.gamma / mu
    };
    let inner = g_box.shrunk(margin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n_samples).map(|_| inner.sample(&mut rng)).collect();
    let modes = modes_up_to(g_box.dim(), dio.k_scan);
    let rows: Vec<SampleRow> = map_indexed(exec, &points, |p| {
        let u = u_map(p);
        let site = if p[0] == 0.0 {
            RadialSite::AtZ
        } else {
            RadialSite::Off(p[0])
        };
        let mut kept = true;
        let mut worst_margin = f64::INFINITY;
        let mut worst_divisor = f64::INFINITY;
        let mut worst_mode = vec![0; p.len()];
        for k in &modes {
            let l1: i32 = k.iter().map(|x| x.abs()).sum();
            let alpha = dio.gamma / (l1 as f64).powf(dio.tau);
            let d = match scaled_divisor(&u, site, form, sing, k) {
                Ok(d) => d.abs(),
                Err(_) => 0.0,
            };
            if d < alpha {
                kept = false;
            }
            // track the tightest divisor relative to its threshold
            let rel = if alpha > 0.0 { d / alpha } else { f64::INFINITY };
            if rel < worst_margin {
                worst_margin = rel;
                worst_divisor = d;
                worst_mode = k.clone();
            }
        }
        SampleRow {
            point: p.clone(),
            kept,
            worst_divisor,
            worst_mode,
        }
    });
    let kept = rows.iter().filter(|r| r.kept).count() as f64;
    let p = kept / n_samples as f64;
    Ok(Survey {
        kept_fraction: p,
        sigma: (p * (1.0 - p) / n_samples as f64).sqrt(),
        seed,
        rows,
    })
}

fn estimate_nondegeneracy(g_box: &BoxRegion, u_map: &(dyn Fn(&[f64]) -> Vec<f64> + Sync)) -> f64 {
    let n = g_box.dim();
    let grid = crate::numerics::tensor_grid(&g_box.lo, &g_box.hi, 3);
    let mut mu = f64::INFINITY;
    for p in grid {
        let mut jac = vec![vec![0.0; n]; n];
        let step: Vec<f64> = g_box
            .lo
            .iter()
            .zip(&g_box.hi)
            .map(|(a, b)| 1e-6 * (b - a).max(1e-6))
            .collect();
        for j in 0..n {
            let mut pp = p.clone();
            pp[j] += step[j];
            let mut pm = p.clone();
            pm[j] -= step[j];
            let up = u_map(&pp);
            let um = u_map(&pm);
            for a in 0..n {
                jac[a][j] = (up[a] - um[a]) / (2.0 * step[j]);
            }
        }
        mu = mu.min(crate::numerics::min_singular_value(&jac));
    }
    mu.max(1e-12)
}

/// Sum of the analytic per-zone bounds over all scanned modes (the union
/// bound for the excluded measure).
pub fn zone_bound_sum(
    f_box: &BoxRegion,
    form: &ActionAngleForm,
    site: RadialSite,
    dio: &DioParams,
) -> Result<f64> {
    let mut total = 0.0;
    for k in modes_up_to(f_box.dim(), dio.k_scan) {
        let l1: i32 = k.iter().map(|x| x.abs()).sum();
        let alpha = dio.gamma / (l1 as f64).powf(dio.tau);
        let kbar_zero = k[1..].iter().all(|&x| x == 0);
        if matches!(site, RadialSite::AtZ) && kbar_zero {
            let lock = (k[0] as f64 / form.modular_period()).abs();
            if alpha > lock {
                total += f_box.diameter().powi(f_box.dim() as i32);
            }
            continue;
        }
        let zone = ResonanceZone::new(k, alpha, site)?;
        total += zone.measure_bound(f_box, form)?;
    }
    Ok(total)
}

/// Partial sum of `1/(|k|_1^tau |kbar|)` over `kbar != 0`, `|k|_1 <= k_max`:
/// the series whose convergence (for `tau > n-1`) controls the zone-union
/// measure.
pub fn resonance_series_partial(tau: f64, n: usize, k_max: i32) -> f64 {
    modes_up_to(n, k_max)
        .into_iter()
        .filter(|k| k[1..].iter().any(|&x| x != 0))
        .map(|k| {
            let l1: i32 = k.iter().map(|x| x.abs()).sum();
            let kbar: f64 = k[1..]
                .iter()
                .map(|&x| (x as f64) * (x as f64))
                .sum::<f64>()
                .sqrt();
            1.0 / ((l1 as f64).powf(tau) * kbar)
        })
        .sum()
}
