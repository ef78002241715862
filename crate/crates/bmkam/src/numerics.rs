//! Small dense numerics shared across the crate: Chebyshev grids, least-squares
//! polynomial fitting, adaptive quadrature, Newton iteration and a few matrix
//! helpers. Everything here is deliberately sized for n <= 4 dimensional
//! problems; no external linear-algebra dependency is warranted.

use crate::error::{Error, Result};

/// Chebyshev points of the first kind mapped to `[lo, hi]`, in increasing order.
pub fn chebyshev_nodes(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 1);
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut xs: Vec<f64> = (0..count)
        .map(|j| {
            let theta = std::f64::consts::PI * (2.0 * j as f64 + 1.0) / (2.0 * count as f64);
            mid + half * theta.cos()
        })
        .collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs
}

/// Tensor grid over a box, `per_dim` Chebyshev nodes in each dimension.
pub fn tensor_grid(lo: &[f64], hi: &[f64], per_dim: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(hi)
        .map(|(&a, &b)| chebyshev_nodes(a, b, per_dim))
        .collect();
    let mut points = vec![vec![]];
    for axis in &axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &x in axis {
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// All exponent multi-indices in `n` variables with total degree <= `deg`,
/// in a fixed canonical (graded) order.
pub fn exponents_up_to(n: usize, deg: u8) -> Vec<Vec<u8>> {
    fn collect_exact(n: usize, cur: &mut Vec<u8>, pos: usize, left: u8, out: &mut Vec<Vec<u8>>) {
        if pos == n - 1 {
            cur[pos] = left;
            out.push(cur.clone());
            cur[pos] = 0;
            return;
        }
        for e in 0..=left {
            cur[pos] = e;
            collect_exact(n, cur, pos + 1, left - e, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u8; n];
    for total in 0..=deg {
        collect_exact(n, &mut cur, 0, total, &mut out);
    }
    out
}

/// Dense Cholesky solve of a symmetric positive-definite system.
pub fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::InvalidParams(
                        "normal matrix not positive definite".into(),
                    ));
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Ok(x)
}

/// Gaussian elimination with partial pivoting, for small general systems.
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return Err(Error::InvalidParams("singular linear system".into()));
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for c in i + 1..n {
            s -= m[i][c] * x[c];
        }
        x[i] = s / m[i][i];
    }
    Ok(x)
}

/// Coefficients of the Chebyshev polynomials `T_0..T_deg` in the monomial
/// basis: `cheb[k][j]` is the `t^j` coefficient of `T_k(t)`.
fn chebyshev_monomial_table(deg: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; deg + 1]; deg + 1];
    t[0][0] = 1.0;
    if deg >= 1 {
        t[1][1] = 1.0;
    }
    for k in 2..=deg {
        for j in 0..deg {
            let shift = 2.0 * t[k - 1][j];
            t[k][j + 1] += shift;
        }
        for j in 0..=deg {
            let sub = t[k - 2][j];
            t[k][j] -= sub;
        }
    }
    t
}

fn chebyshev_value(k: usize, t: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let (mut a, mut b) = (1.0, t);
    for _ in 1..k {
        let c = 2.0 * t * b - a;
        a = b;
        b = c;
    }
    b
}

/// Least-squares fit of scalar samples by a total-degree polynomial. The fit
/// is performed in a tensor Chebyshev basis of the scaled offsets
/// `(x - center)/scale` (well-conditioned on Chebyshev grids) and the result
/// is converted to the unscaled monomial basis `(x - center)^beta`, ordered
/// as [`exponents_up_to`]. The factorization is reused across right-hand
/// sides.
pub struct PolyFitter {
    pub exponents: Vec<Vec<u8>>,
    center: Vec<f64>,
    scale: Vec<f64>,
    basis: Vec<Vec<f64>>, // rows: points, cols: Chebyshev products
    normal: Vec<Vec<f64>>,
    cheb_table: Vec<Vec<f64>>,
    deg: usize,
}

impl PolyFitter {
    pub fn new(points: &[Vec<f64>], center: &[f64], deg: u8) -> Self {
        let n = center.len();
        let mut scale = vec![0.0_f64; n];
        for p in points {
            for j in 0..n {
                scale[j] = scale[j].max((p[j] - center[j]).abs());
            }
        }
        for s in scale.iter_mut() {
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        let exponents = exponents_up_to(n, deg);
        let basis: Vec<Vec<f64>> = points
            .iter()
            .map(|p| {
                exponents
                    .iter()
                    .map(|e| {
                        let mut v = 1.0;
                        for j in 0..n {
                            let t = (p[j] - center[j]) / scale[j];
                            v *= chebyshev_value(e[j] as usize, t);
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let m = exponents.len();
        let mut normal = vec![vec![0.0; m]; m];
        for row in &basis {
            for i in 0..m {
                for j in 0..=i {
                    normal[i][j] += row[i] * row[j];
                }
            }
        }
        for i in 0..m {
            for j in i + 1..m {
                normal[i][j] = normal[j][i];
            }
        }
        PolyFitter {
            exponents,
            center: center.to_vec(),
            scale,
            basis,
            normal,
            cheb_table: chebyshev_monomial_table(deg as usize),
            deg: deg as usize,
        }
    }

    /// Fit one set of sample values; returns (coefficients in the unscaled
    /// `(x - center)^beta` basis, max abs residual on the fitting grid).
    pub fn fit(&self, values: &[f64]) -> Result<(Vec<f64>, f64)> {
        let m = self.exponents.len();
        let n = self.center.len();
        let mut rhs = vec![0.0; m];
        for (row, &v) in self.basis.iter().zip(values) {
            for i in 0..m {
                rhs[i] += row[i] * v;
            }
        }
        let cheb_coeffs = cholesky_solve(&self.normal, &rhs)?;
        let mut resid: f64 = 0.0;
        for (row, &v) in self.basis.iter().zip(values) {
            let pred: f64 = row.iter().zip(&cheb_coeffs).map(|(b, c)| b * c).sum();
            resid = resid.max((pred - v).abs());
        }
        // convert tensor-Chebyshev coefficients to scaled monomials
        let mut mono = vec![0.0; m];
        let index_of: std::collections::HashMap<&Vec<u8>, usize> = self
            .exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e, i))
            .collect();
        for (i, e) in self.exponents.iter().enumerate() {
            let c = cheb_coeffs[i];
            if c == 0.0 {
                continue;
            }
            // expand the product of T_{e_j} into monomials
            let mut partial: Vec<(Vec<u8>, f64)> = vec![(Vec::new(), c)];
            for j in 0..n {
                let mut next = Vec::new();
                for (pref, w) in &partial {
                    for p in 0..=self.deg {
                        let cj = self.cheb_table[e[j] as usize][p];
                        if cj == 0.0 {
                            continue;
                        }
                        let mut e2 = pref.clone();
                        e2.push(p as u8);
                        next.push((e2, w * cj));
                    }
                }
                partial = next;
            }
            for (e2, w) in partial {
                if let Some(&idx) = index_of.get(&e2) {
                    mono[idx] += w;
                }
            }
        }
        let coeffs = mono
            .iter()
            .zip(&self.exponents)
            .map(|(c, e)| {
                let mut f = *c;
                for j in 0..n {
                    f /= self.scale[j].powi(e[j] as i32);
                }
                f
            })
            .collect();
        Ok((coeffs, resid))
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`, splitting first at
/// the supplied breakpoints.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, breaks: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = vec![lo];
    for &c in breaks {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.push(hi);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += simpson_rec(f, w[0], w[1], tol / (cuts.len() as f64 - 1.0), 0);
    }
    sign * total
}

fn simpson_one<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let whole = simpson_one(f, a, b);
    let left = simpson_one(f, a, m);
    let right = simpson_one(f, m, b);
    let err = (left + right - whole).abs();
    if err < 15.0 * tol || depth > 40 {
        left + right + (left + right - whole) / 15.0
    } else {
        simpson_rec(f, a, m, 0.5 * tol, depth + 1) + simpson_rec(f, m, b, 0.5 * tol, depth + 1)
    }
}

/// Damped Newton iteration for a square system.
pub fn newton_solve<F, J>(f: F, jac: J, x0: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut norm = linf(&fx);
    for _ in 0..max_iter {
        if norm <= tol {
            return Ok(x);
        }
        let j = jac(&x);
        let step = lu_solve(&j, &fx)?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - lambda * s).collect();
            let ft = f(&trial);
            let nt = linf(&ft);
            if nt < norm || lambda < 1.0 / 64.0 {
                x = trial;
                fx = ft;
                norm = nt;
                break;
            }
            lambda *= 0.5;
        }
    }
    if norm <= tol {
        Ok(x)
    } else {
        Err(Error::InvalidParams(format!(
            "Newton iteration stalled at residual {norm:e}"
        )))
    }
}

pub fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Smallest singular value of a small matrix.
pub fn min_singular_value(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let cols = a[0].len();
    let mut ata = vec![vec![0.0; cols]; cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut s = 0.0;
            for r in 0..n {
                s += a[r][i] * a[r][j];
            }
            ata[i][j] = s;
        }
    }
    sym_eigenvalues(&ata)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
        .sqrt()
}

/// Pfaffian of a 4x4 antisymmetric matrix: a01*a23 - a02*a13 + a03*a12.
pub fn pfaffian4(a: &[[f64; 4]; 4]) -> f64 {
    a[0][1] * a[2][3] - a[0][2] * a[1][3] + a[0][3] * a[1][2]
}
