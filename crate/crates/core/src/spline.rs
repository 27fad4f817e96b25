//! B-spline bases with clamped (repeated) boundary knots.
//!
//! A degree-`p` basis with `K` interior knots on `[a, b]` has `K + p + 1`
//! functions. Evaluation follows the Cox-de Boor recursion together with its
//! derivative form; the roughness penalty `D_q = ∫ N^(q)(t) N^(q)(t)' dt` is
//! integrated exactly with per-subinterval Gauss-Legendre quadrature.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degrees above this are rejected; nothing in the library needs them and the
/// recursion loses accuracy well before this point.
pub const MAX_DEGREE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    lo: f64,
    hi: f64,
    degree: usize,
    interior_count: usize,
    knots: Vec<f64>,
}

/// One evaluated row `N^(r)(t)` of the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow {
    pub values: Vec<f64>,
    pub deriv_order: usize,
}

/// Gram matrix of the `q`-th derivatives of the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub order: usize,
    pub entries: DMatrix<f64>,
}

impl PenaltyMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `c' D c`
    pub fn quadratic_form(&self, c: &[f64]) -> f64 {
        let d = &self.entries;
        let mut acc = 0.0;
        for i in 0..d.nrows() {
            let mut row = 0.0;
            for j in 0..d.ncols() {
                row += d[(i, j)] * c[j];
            }
            acc += c[i] * row;
        }
        acc
    }
}

/// Equally spaced interior knots: knot `j` sits at `a + j (b - a) / (K + 1)`.
pub fn build_knots(a: f64, b: f64, interior_count: usize, degree: usize) -> Result<KnotVector> {
    check_domain(a, b)?;
    let h = (b - a) / (interior_count + 1) as f64;
    let interior = (1..=interior_count).map(|j| a + j as f64 * h).collect();
    KnotVector::from_interior(a, b, degree, interior)
}

fn check_domain(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::DegenerateDomain { lo: a, hi: b });
    }
    Ok(())
}

impl KnotVector {
    /// Builds a clamped knot vector from explicit interior knots.
    pub fn from_interior(a: f64, b: f64, degree: usize, interior: Vec<f64>) -> Result<Self> {
        check_domain(a, b)?;
        if degree > MAX_DEGREE {
            return Err(Error::InvalidDegree(degree));
        }
        let mut prev = a;
        for &k in &interior {
            if !(k > prev && k < b) {
                return Err(Error::InvalidKnots(format!(
                    "interior knot {k} must be strictly increasing inside ({a}, {b})"
                )));
            }
            prev = k;
        }
        let interior_count = interior.len();
        let mut knots = Vec::with_capacity(interior_count + 2 * degree + 2);
        knots.extend(std::iter::repeat_n(a, degree + 1));
        knots.extend(interior);
        knots.extend(std::iter::repeat_n(b, degree + 1));
        Ok(Self {
            lo: a,
            hi: b,
            degree,
            interior_count,
            knots,
        })
    }

    /// Interior knots at empirical quantiles of `sample` (deduplicated).
    pub fn quantile(
        a: f64,
        b: f64,
        interior_count: usize,
        degree: usize,
        sample: &[f64],
    ) -> Result<Self> {
        check_domain(a, b)?;
        let mut s: Vec<f64> = sample
            .iter()
            .copied()
            .filter(|v| v.is_finite() && *v > a && *v < b)
            .collect();
        if s.is_empty() {
            return Err(Error::InvalidKnots(
                "no sample points inside the domain".into(),
            ));
        }
        s.sort_by(f64::total_cmp);
        let mut interior: Vec<f64> = Vec::with_capacity(interior_count);
        for j in 1..=interior_count {
            let pos = j as f64 / (interior_count + 1) as f64 * (s.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(s.len() - 1);
            let v = s[lo] + (pos - lo as f64) * (s[hi] - s[lo]);
            if interior.last().is_none_or(|&last| v > last) {
                interior.push(v);
            }
        }
        Self::from_interior(a, b, degree, interior)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_count(&self) -> usize {
        self.interior_count
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `K + p + 1`
    pub fn n_basis(&self) -> usize {
        self.interior_count + self.degree + 1
    }

    /// Ratio of the largest to the smallest knot spacing.
    pub fn mesh_ratio(&self) -> f64 {
        let p = self.degree;
        let spans: Vec<f64> = self.knots[p..=p + self.interior_count + 1]
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect();
        let max = spans.iter().copied().fold(f64::MIN, f64::max);
        let min = spans.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    /// Greville abscissae; used as coefficients these reproduce `f(t) = t`.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        if p == 0 {
            return (0..self.n_basis())
                .map(|j| 0.5 * (self.knots[j] + self.knots[j + 1]))
                .collect();
        }
        (0..self.n_basis())
            .map(|j| self.knots[j + 1..=j + p].iter().sum::<f64>() / p as f64)
            .collect()
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    fn check_point(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                t,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    /// Knot span index `s` with `knots[s] <= t < knots[s+1]`; the last
    /// non-empty span is used at `t = b`.
    pub fn find_span(&self, t: f64) -> usize {
        let nb = self.n_basis();
        let count = self.knots[..nb].partition_point(|&k| k <= t);
        count.saturating_sub(1).clamp(self.degree, nb - 1)
    }

    /// Nonzero basis functions and derivatives at `t`.
    ///
    /// Fills `ders[k][j]` with the `k`-th derivative of basis function
    /// `span - p + j` for `k <= max_order` and returns `span`. Derivatives of
    /// order above `p` are zero.
    pub fn eval_nonzero(&self, t: f64, max_order: usize, ders: &mut [Vec<f64>]) -> usize {
        let p = self.degree;
        let u = &self.knots;
        let span = self.find_span(t);
        let n = max_order.min(p);

        // ndu holds basis values (upper triangle) and knot differences (lower).
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        for row in ders.iter_mut().take(max_order + 1) {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }

        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }

        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().take(n + 1).skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        span
    }

    /// Full row `N^(r)(t)` of length `K + p + 1`.
    pub fn eval(&self, t: f64, r: usize) -> Result<BasisRow> {
        self.check_point(t)?;
        let mut values = vec![0.0; self.n_basis()];
        if r <= self.degree {
            let p = self.degree;
            let mut ders = vec![vec![0.0; p + 1]; r + 1];
            let span = self.eval_nonzero(t, r, &mut ders);
            values[span - p..=span].copy_from_slice(&ders[r]);
        }
        Ok(BasisRow {
            values,
            deriv_order: r,
        })
    }

    /// Basis values at every point of `grid`, as a `grid.len() x n_basis` matrix.
    pub fn basis_matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.degree;
        let mut out = DMatrix::zeros(grid.len(), self.n_basis());
        let mut ders = vec![vec![0.0; p + 1]];
        for (k, &t) in grid.iter().enumerate() {
            self.check_point(t)?;
            let span = self.eval_nonzero(t, 0, &mut ders);
            for j in 0..=p {
                out[(k, span - p + j)] = ders[0][j];
            }
        }
        Ok(out)
    }

    /// Spline `N(t)' c`.
    pub fn eval_spline(&self, coefs: &[f64], t: f64) -> Result<f64> {
        self.check_point(t)?;
        let p = self.degree;
        let mut ders = vec![vec![0.0; p + 1]];
        let span = self.eval_nonzero(t, 0, &mut ders);
        Ok((0..=p).map(|j| ders[0][j] * coefs[span - p + j]).sum())
    }
}

/// Evaluates `N^(r)(t)`; orders above the degree give the zero row.
pub fn eval_basis(kv: &KnotVector, t: f64, r: usize) -> Result<BasisRow> {
    kv.eval(t, r)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(m, x);
                dp = d;
                break;
            }
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `D_q` with `p + 1` Gauss-Legendre nodes per knot span.
pub fn penalty_matrix(kv: &KnotVector, q: usize) -> Result<PenaltyMatrix> {
    penalty_matrix_with_nodes(kv, q, kv.degree() + 1)
}

/// `D_q` with an explicit node count per span; exact once
/// `nodes >= p - q + 1`.
pub fn penalty_matrix_with_nodes(kv: &KnotVector, q: usize, nodes: usize) -> Result<PenaltyMatrix> {
    let p = kv.degree();
    if q > p {
        return Err(Error::PenaltyOrder { q, p });
    }
    let nb = kv.n_basis();
    let (x, w) = gauss_legendre(nodes.max(1));
    let knots = kv.knots();
    let mut upper = DMatrix::<f64>::zeros(nb, nb);
    let mut ders = vec![vec![0.0; p + 1]; q + 1];
    for s in p..nb {
        let (u0, u1) = (knots[s], knots[s + 1]);
        if u1 <= u0 {
            continue;
        }
        let half = 0.5 * (u1 - u0);
        let mid = 0.5 * (u1 + u0);
        for (xi, wi) in x.iter().zip(&w) {
            let t = mid + half * xi;
            let span = kv.eval_nonzero(t, q, &mut ders);
            debug_assert_eq!(span, s);
            let row = &ders[q];
            for i in 0..=p {
                for j in i..=p {
                    upper[(s - p + i, s - p + j)] += wi * half * row[i] * row[j];
                }
            }
        }
    }
    let mut entries = upper.clone();
    for i in 0..nb {
        for j in 0..i {
            entries[(i, j)] = upper[(j, i)];
        }
    }
    Ok(PenaltyMatrix { order: q, entries })
}
