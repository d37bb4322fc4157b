//! Dense linear algebra on weighted L² spaces.
//!
//! Functions on a finite space with weights `w` are handled in whitened coordinates
//! `v = sqrt(w) * f`, in which the `L^2(w)` inner product is the Euclidean one.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value threshold for every rank decision.
pub const RANK_TOL: f64 = 1e-9;

/// A finite measure used as the weight of an `L^2` space.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSpace {
    pub weights: Vec<f64>,
    sqrt_w: Vec<f64>,
}

impl WeightedSpace {
    pub fn new(weights: Vec<f64>) -> Self {
        let sqrt_w = weights.iter().map(|w| w.max(0.0).sqrt()).collect();
        WeightedSpace { weights, sqrt_w }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_w
    }

    pub fn whiten(&self, f: &[f64]) -> DVector<f64> {
        DVector::from_iterator(f.len(), f.iter().zip(&self.sqrt_w).map(|(x, s)| x * s))
    }

    /// Inverse of [`whiten`](Self::whiten) on the support; zero elsewhere.
    pub fn unwhiten(&self, v: &DVector<f64>) -> Vec<f64> {
        v.iter()
            .zip(&self.sqrt_w)
            .map(|(x, s)| if *s > 0.0 { x / s } else { 0.0 })
            .collect()
    }

    pub fn whiten_columns(&self, cols: &[Vec<f64>]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.len(), cols.len());
        for (j, c) in cols.iter().enumerate() {
            for i in 0..self.len() {
                m[(i, j)] = c[i] * self.sqrt_w[i];
            }
        }
        m
    }

    pub fn unwhiten_columns(&self, m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.ncols())
            .map(|j| self.unwhiten(&m.column(j).into_owned()))
            .collect()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, a)| w * a).sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Orthonormal whitened basis of the mean-zero functions supported on the support of `w`.
    pub fn mean_zero_basis(&self) -> DMatrix<f64> {
        let n = self.len();
        let support: Vec<usize> = (0..n).filter(|&i| self.sqrt_w[i] > 0.0).collect();
        let total: f64 = support.iter().map(|&i| self.weights[i]).sum();
        let mut cols = Vec::with_capacity(support.len());
        let mut unit = DVector::zeros(n);
        for &i in &support {
            unit[i] = self.sqrt_w[i] / total.sqrt();
        }
        cols.push(unit.clone());
        for &i in &support {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            cols.push(e);
        }
        let m = DMatrix::from_columns(&cols);
        let q = gram_schmidt(&m, RANK_TOL);
        q.columns(1, q.ncols().saturating_sub(1)).into_owned()
    }
}

/// Modified Gram-Schmidt with one reorthogonalization pass.
///
/// Columns whose remaining norm falls below `tol` times their original norm are dropped.
pub fn gram_schmidt(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let col = m.column(j).into_owned();
        let orig = col.norm();
        if orig == 0.0 {
            continue;
        }
        let mut v = col;
        for _pass in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let nv = v.norm();
        if nv > tol * orig.max(1.0) {
            basis.push(v / nv);
        }
    }
    if basis.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

/// Full singular value decomposition `m = U diag(s) V^T` with `s` in decreasing order.
struct Svd {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
}

impl Svd {
    fn new(m: &DMatrix<f64>) -> Svd {
        let (r, c) = m.shape();
        let f = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
        let svd = f.svd().expect("the SVD of a finite matrix converges");
        let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
        let mut order: Vec<usize> = (0..s.nrows()).collect();
        order.sort_by(|a, b| s[*b].total_cmp(&s[*a]));
        let mut uo = DMatrix::from_fn(r, r, |i, j| u[(i, j)]);
        let mut vo = DMatrix::from_fn(c, c, |i, j| v[(i, j)]);
        for (dst, &src) in order.iter().enumerate() {
            uo.set_column(dst, &DVector::from_fn(r, |i, _| u[(i, src)]));
            vo.set_column(dst, &DVector::from_fn(c, |i, _| v[(i, src)]));
        }
        Svd {
            u: uo,
            s: order.iter().map(|&i| s[i]).collect(),
            v: vo,
        }
    }

    /// Number of singular values above `RANK_TOL` times the largest.
    fn rank(&self) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        if smax <= 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&x| x > RANK_TOL * smax).count()
    }
}

/// Orthonormal basis of the column space, rank decided by singular values.
pub fn column_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = Svd::new(m);
    svd.u.columns(0, svd.rank()).into_owned()
}

/// Numerical rank.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    Svd::new(m).rank()
}

/// Orthonormal basis of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = Svd::new(m);
    let r = svd.rank();
    svd.v.columns(r, n - r).into_owned()
}

/// Minimum-norm least-squares solution of `a x = b` with the module-wide rank threshold.
///
/// Returns the solution and the residual norm `|a x - b|`.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    if a.ncols() == 0 || a.nrows() == 0 {
        return (DVector::zeros(a.ncols()), b.norm());
    }
    let svd = Svd::new(a);
    let mut x = DVector::zeros(a.ncols());
    for i in 0..svd.rank() {
        let c = svd.u.column(i).dot(b) / svd.s[i];
        x += svd.v.column(i) * c;
    }
    let r = (a * &x - b).norm();
    (x, r)
}

/// Moore-Penrose pseudoinverse with the module-wide rank threshold.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = Svd::new(a);
    let mut out = DMatrix::zeros(n, m);
    for i in 0..svd.rank() {
        out += svd.v.column(i) * svd.u.column(i).transpose() / svd.s[i];
    }
    out
}

/// Singular values in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    Svd::new(a).s
}

/// Minimum-norm solution of the normal equations `(m^T m) x = b`, with the rank decided on
/// the singular values of `m` rather than on those of `m^T m`.
///
/// Returns the solution and the number of discarded directions.
pub fn normal_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return (DVector::zeros(n), n);
    }
    let svd = Svd::new(m);
    let r = svd.rank();
    let mut x = DVector::zeros(n);
    for i in 0..r {
        let c = svd.v.column(i).dot(b) / (svd.s[i] * svd.s[i]);
        x += svd.v.column(i) * c;
    }
    (x, n - r)
}

/// Orthonormal basis of the intersection of two subspaces given by orthonormal bases.
pub fn intersect(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 || b.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let mut stacked = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    stacked.view_mut((0, 0), a.shape()).copy_from(a);
    stacked
        .view_mut((0, a.ncols()), b.shape())
        .copy_from(&(-b));
    let ns = null_space(&stacked);
    if ns.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let coeffs = ns.rows(0, a.ncols()).into_owned();
    column_space(&(a * coeffs))
}

/// Orthogonal projection onto the span of orthonormal columns.
pub fn project(basis: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    if basis.ncols() == 0 {
        return DVector::zeros(v.len());
    }
    basis * (basis.transpose() * v)
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hcat(parts: &[&DMatrix<f64>], nrows: usize) -> DMatrix<f64> {
    let ncols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(nrows, ncols);
    let mut c = 0;
    for p in parts {
        out.view_mut((0, c), p.shape()).copy_from(*p);
        c += p.ncols();
    }
    out
}
