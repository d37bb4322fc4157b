//! The score operator `A_{Q,U,lambda}` of a fused-data model, its adjoint, the component
//! spaces `D_k^(j)(Q)` and `R_k^(j)(P)`, the information operator and the tangent space.
//!
//! `H = T(Q,Q) x prod_j L^2_0(U^(j)) x L^2_0(lambda)` is represented through orthonormal
//! bases of each factor; a coordinate vector of `H` stacks the factor coordinates in that
//! order. Observed-data functions are whitened with `sqrt(P(o))`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::discrete::linalg::{column_space, gram_schmidt, project, WeightedSpace, RANK_TOL};
use crate::discrete::ops::describe;
use crate::discrete::LinearOpMatrix;
use crate::error::{Error, Result};
use crate::model::{
    assemble_observed_law, canonical_u, check_alignment, check_strong_alignment, CompiledSpec,
    FusedLaw, StrongBounds,
};
use crate::{IdealFunction, ObsFunction, Pmf};

/// A perturbation direction `(h_Q, h_U^(1..J), h_lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HVector {
    /// Function on the ideal cells.
    pub h_q: IdealFunction,
    /// One function per source on its cells in block order.
    pub h_u: Vec<Vec<f64>>,
    /// Function of the source index.
    pub h_lambda: Vec<f64>,
}

impl HVector {
    pub fn scale(&self, c: f64) -> HVector {
        HVector {
            h_q: self.h_q.iter().map(|x| x * c).collect(),
            h_u: self
                .h_u
                .iter()
                .map(|v| v.iter().map(|x| x * c).collect())
                .collect(),
            h_lambda: self.h_lambda.iter().map(|x| x * c).collect(),
        }
    }

    /// Largest absolute entry over all components.
    pub fn max_abs(&self) -> f64 {
        self.h_q
            .iter()
            .chain(self.h_u.iter().flatten())
            .chain(&self.h_lambda)
            .fold(0.0, |a, b| a.max(b.abs()))
    }
}

/// An orthonormal basis of a subspace of a weighted `L^2` space, stored whitened.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    pub space: WeightedSpace,
    /// Whitened orthonormal columns.
    pub columns: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// Basis vectors as functions.
    pub fn functions(&self) -> Vec<Vec<f64>> {
        self.space.unwhiten_columns(&self.columns)
    }

    /// Orthogonal projection of a function onto the subspace.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        self.space
            .unwhiten(&project(&self.columns, &self.space.whiten(f)))
    }

    /// `L^2` distance of a function from the subspace.
    pub fn residual(&self, f: &[f64]) -> f64 {
        let v = self.space.whiten(f);
        (&v - project(&self.columns, &v)).norm()
    }
}

/// Components `m_k^(j)`, `n_k^(j)` and `gamma` of an observed-data function.
///
/// `m[j][k]` and `n[j][k]` are indexed by the cells of `Zbar_{k+1}^(j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsDecomposition {
    pub m: Vec<Vec<Vec<f64>>>,
    pub n: Vec<Vec<Vec<f64>>>,
    pub gamma: Vec<f64>,
}

/// A fused-data model bound to a strongly aligned triple `(Q, U, P)`.
#[derive(Clone, Debug)]
pub struct FusedModel {
    pub spec: CompiledSpec,
    pub q: Pmf,
    pub u: Vec<Pmf>,
    pub law: FusedLaw,
    pub bounds: StrongBounds,
    restricted: bool,
    q_space: WeightedSpace,
    u_spaces: Vec<WeightedSpace>,
    lambda_space: WeightedSpace,
    obs_space: WeightedSpace,
    basis_q: DMatrix<f64>,
    basis_u: Vec<DMatrix<f64>>,
    basis_lambda: DMatrix<f64>,
    /// `Q` masses of `Zbar_k^(j)` cells.
    q_pre: Vec<Vec<Vec<f64>>>,
    /// `P(. | S=j)` masses of `Zbar_k^(j)` cells.
    p_pre: Vec<Vec<Vec<f64>>>,
    /// `U^(j)` masses of `Zbar_k^(j)` cells.
    u_pre: Vec<Vec<Vec<f64>>>,
    score: OnceLock<DMatrix<f64>>,
    tangent: OnceLock<DMatrix<f64>>,
}

impl FusedModel {
    /// Builds `P_{Q,U,lambda}` and binds the model to it.
    pub fn new(q: Pmf, u: Vec<Pmf>, lambda: Vec<f64>, spec: CompiledSpec) -> Result<Self> {
        let law = assemble_observed_law(&q, &u, &lambda, &spec)?;
        Self::bind(q, u, law, spec)
    }

    /// Binds an observed law aligned with `q`, taking `U^(j) := P(. | S=j)`.
    pub fn from_law(q: Pmf, law: FusedLaw, spec: CompiledSpec) -> Result<Self> {
        let report = check_alignment(&law, &q, &spec)?;
        if !report.aligned {
            return Err(Error::Misaligned(format!(
                "blocks {:?} disagree with the ideal law; support violations: {:?}",
                report.flagged(),
                report.support_violations
            )));
        }
        let u = canonical_u(&law);
        Self::bind(q, u, law, spec)
    }

    fn bind(q: Pmf, u: Vec<Pmf>, law: FusedLaw, spec: CompiledSpec) -> Result<Self> {
        let bounds = check_strong_alignment(&law, &q, &u, &spec)?;
        let q_space = WeightedSpace::new(q.mass().to_vec());
        let u_spaces: Vec<WeightedSpace> =
            u.iter().map(|x| WeightedSpace::new(x.mass().to_vec())).collect();
        let lambda_space = WeightedSpace::new(law.lambda.clone());
        let obs_space = WeightedSpace::new(law.obs_mass());
        let basis_q = q_space.mean_zero_basis();
        let basis_u = u_spaces.iter().map(|s| s.mean_zero_basis()).collect();
        let basis_lambda = lambda_space.mean_zero_basis();
        let mut q_pre = Vec::new();
        let mut p_pre = Vec::new();
        let mut u_pre = Vec::new();
        for (j, chain) in spec.chains.iter().enumerate() {
            q_pre.push(chain.w_prefix.iter().map(|p| p.sum(q.mass())).collect());
            p_pre.push(chain.z_prefix.iter().map(|p| p.sum(law.sources[j].mass())).collect());
            u_pre.push(chain.z_prefix.iter().map(|p| p.sum(u[j].mass())).collect());
        }
        Ok(FusedModel {
            spec,
            q,
            u,
            law,
            bounds,
            restricted: false,
            q_space,
            u_spaces,
            lambda_space,
            obs_space,
            basis_q,
            basis_u,
            basis_lambda,
            q_pre,
            p_pre,
            u_pre,
            score: OnceLock::new(),
            tangent: OnceLock::new(),
        })
    }

    /// Restricts the ideal model: `T(Q,Q)` becomes the span of the given mean-zero functions.
    pub fn with_tangent_basis(mut self, functions: &[Vec<f64>]) -> Result<Self> {
        let n = self.q.space().len();
        if let Some(bad) = functions.iter().find(|f| f.len() != n) {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        let centered: Vec<Vec<f64>> = functions
            .iter()
            .map(|f| {
                let mu = self.q_space.mean(f);
                f.iter().map(|x| x - mu).collect()
            })
            .collect();
        let m = self.q_space.whiten_columns(&centered);
        self.basis_q = column_space(&m);
        self.restricted = true;
        self.score = OnceLock::new();
        self.tangent = OnceLock::new();
        Ok(self)
    }

    pub fn is_restricted(&self) -> bool {
        self.restricted
    }

    pub fn num_sources(&self) -> usize {
        self.spec.num_sources()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.law.lambda
    }

    pub fn q_space(&self) -> &WeightedSpace {
        &self.q_space
    }

    pub fn obs_space(&self) -> &WeightedSpace {
        &self.obs_space
    }

    pub fn u_space(&self, j: usize) -> &WeightedSpace {
        &self.u_spaces[j]
    }

    /// Orthonormal basis of `T(Q,Q)` in `L^2(Q)`.
    pub fn tangent_q(&self) -> SubspaceBasis {
        SubspaceBasis {
            space: self.q_space.clone(),
            columns: self.basis_q.clone(),
        }
    }

    /// Projection onto `T(Q,Q)`.
    pub fn project_tq(&self, h: &[f64]) -> Vec<f64> {
        self.q_space
            .unwhiten(&project(&self.basis_q, &self.q_space.whiten(h)))
    }

    /// Dimensions of the `Q`, `U^(j)` and `lambda` blocks of `H`.
    pub fn h_dims(&self) -> (usize, Vec<usize>, usize) {
        (
            self.basis_q.ncols(),
            self.basis_u.iter().map(|b| b.ncols()).collect(),
            self.basis_lambda.ncols(),
        )
    }

    pub fn h_dim(&self) -> usize {
        let (a, b, c) = self.h_dims();
        a + b.iter().sum::<usize>() + c
    }

    /// The element of `H` with the given coordinates.
    pub fn h_from_coords(&self, c: &DVector<f64>) -> HVector {
        let (nq, nu, _) = self.h_dims();
        let mut off = 0;
        let take = |b: &DMatrix<f64>, s: &WeightedSpace, off: &mut usize| {
            let part = c.rows(*off, b.ncols()).into_owned();
            *off += b.ncols();
            s.unwhiten(&(b * part))
        };
        let h_q = take(&self.basis_q, &self.q_space, &mut off);
        debug_assert_eq!(off, nq);
        let h_u = self
            .basis_u
            .iter()
            .zip(&self.u_spaces)
            .map(|(b, s)| take(b, s, &mut off))
            .collect();
        debug_assert_eq!(off, nq + nu.iter().sum::<usize>());
        let h_lambda = take(&self.basis_lambda, &self.lambda_space, &mut off);
        HVector { h_q, h_u, h_lambda }
    }

    /// Coordinates of the projection of `h` onto `H`.
    pub fn h_coords(&self, h: &HVector) -> DVector<f64> {
        let mut parts: Vec<f64> = Vec::with_capacity(self.h_dim());
        parts.extend((self.basis_q.transpose() * self.q_space.whiten(&h.h_q)).iter());
        for ((b, s), hu) in self.basis_u.iter().zip(&self.u_spaces).zip(&h.h_u) {
            parts.extend((b.transpose() * s.whiten(hu)).iter());
        }
        parts.extend((self.basis_lambda.transpose() * self.lambda_space.whiten(&h.h_lambda)).iter());
        DVector::from_vec(parts)
    }

    /// `<a, b>_H`.
    pub fn h_inner(&self, a: &HVector, b: &HVector) -> f64 {
        self.q_space.inner(&a.h_q, &b.h_q)
            + a.h_u
                .iter()
                .zip(&b.h_u)
                .zip(&self.u_spaces)
                .map(|((x, y), s)| s.inner(x, y))
                .sum::<f64>()
            + self.lambda_space.inner(&a.h_lambda, &b.h_lambda)
    }

    pub fn h_zero(&self) -> HVector {
        HVector {
            h_q: vec![0.0; self.q.space().len()],
            h_u: self.u.iter().map(|u| vec![0.0; u.space().len()]).collect(),
            h_lambda: vec![0.0; self.num_sources()],
        }
    }

    /// `Pi[h | D_k^(j)(Q)]` as a table over `Zbar_{k+1}^(j)`.
    pub fn proj_d_prefix(&self, j: usize, k: usize, h: &[f64]) -> Vec<f64> {
        let chain = &self.spec.chains[j];
        let lo = chain.w_prefix[k].cond_mean(self.q.mass(), h);
        let hi = chain.w_prefix[k + 1].cond_mean(self.q.mass(), h);
        hi.iter()
            .enumerate()
            .map(|(b, v)| {
                let a = chain.parent(k, b);
                if chain.masks[k][a] {
                    v - lo[a]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `Pi[h | D_k^(j)(Q)]` as a function on the ideal cells.
    pub fn proj_d(&self, j: usize, k: usize, h: &[f64]) -> Vec<f64> {
        self.spec.chains[j].w_prefix[k + 1].lift(&self.proj_d_prefix(j, k, h))
    }

    /// `Pi[h | oplus_k D_k^(j)(Q)]` as a function on the ideal cells.
    pub fn proj_d_source(&self, j: usize, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; h.len()];
        for k in 0..self.spec.chains[j].num_blocks() {
            for (o, v) in out.iter_mut().zip(self.proj_d(j, k, h)) {
                *o += v;
            }
        }
        out
    }

    /// Projection of a function of `Z^(j)` onto `R_k^(j)` under the given weights.
    fn proj_r_prefix_with(&self, j: usize, k: usize, w: &[f64], h: &[f64]) -> Vec<f64> {
        let chain = &self.spec.chains[j];
        let lo = chain.z_prefix[k].cond_mean(w, h);
        let hi = chain.z_prefix[k + 1].cond_mean(w, h);
        hi.iter()
            .enumerate()
            .map(|(b, v)| {
                let a = chain.parent(k, b);
                if chain.masks[k][a] {
                    0.0
                } else {
                    v - lo[a]
                }
            })
            .collect()
    }

    /// `Pi[h_U | R_k^(j)]` in `L^2(U^(j))`, as a table over `Zbar_{k+1}^(j)`.
    pub fn proj_r_prefix(&self, j: usize, k: usize, h: &[f64]) -> Vec<f64> {
        self.proj_r_prefix_with(j, k, self.u[j].mass(), h)
    }

    /// Orthonormal basis of `D_k^(j)(Q)` in `L^2(Q)`; `k` counts blocks from 0.
    pub fn basis_d(&self, j: usize, k: usize) -> SubspaceBasis {
        let n = self.q.space().len();
        let mut cols = Vec::new();
        for i in 0..n {
            let s = self.q_space.sqrt_weights()[i];
            if s > 0.0 {
                let mut f = vec![0.0; n];
                f[i] = 1.0 / s;
                cols.push(self.proj_d(j, k, &f));
            }
        }
        SubspaceBasis {
            space: self.q_space.clone(),
            columns: column_space(&self.q_space.whiten_columns(&cols)),
        }
    }

    /// Orthonormal basis of `oplus_k D_k^(j)(Q)`.
    pub fn basis_d_source(&self, j: usize) -> SubspaceBasis {
        let parts: Vec<DMatrix<f64>> = (0..self.spec.chains[j].num_blocks())
            .map(|k| self.basis_d(j, k).columns)
            .collect();
        let refs: Vec<&DMatrix<f64>> = parts.iter().collect();
        let stacked = crate::discrete::linalg::hcat(&refs, self.q.space().len());
        SubspaceBasis {
            space: self.q_space.clone(),
            columns: gram_schmidt(&stacked, RANK_TOL),
        }
    }

    /// Orthonormal basis of `R_k^(j)(P)` in `L^2(P(. | S=j))`.
    pub fn basis_r(&self, j: usize, k: usize) -> SubspaceBasis {
        let p = self.law.sources[j].mass();
        let space = WeightedSpace::new(p.to_vec());
        let chain = &self.spec.chains[j];
        let n = p.len();
        let mut cols = Vec::new();
        for i in 0..n {
            let s = space.sqrt_weights()[i];
            if s > 0.0 {
                let mut f = vec![0.0; n];
                f[i] = 1.0 / s;
                let pre = self.proj_r_prefix_with(j, k, p, &f);
                cols.push(chain.z_prefix[k + 1].lift(&pre));
            }
        }
        let columns = column_space(&space.whiten_columns(&cols));
        SubspaceBasis { space, columns }
    }

    /// The score `A h`.
    pub fn apply_a(&self, h: &HVector) -> ObsFunction {
        let mut out = Vec::with_capacity(self.law.num_obs_cells());
        for (j, chain) in self.spec.chains.iter().enumerate() {
            let mut g = vec![h.h_lambda[j]; chain.z_space.len()];
            for k in 0..chain.num_blocks() {
                let d = self.proj_d_prefix(j, k, &h.h_q);
                let r = self.proj_r_prefix(j, k, &h.h_u[j]);
                let map = &chain.z_prefix[k + 1].map;
                for (z, gz) in g.iter_mut().enumerate() {
                    *gz += d[map[z]] + r[map[z]];
                }
            }
            out.extend(g);
        }
        out
    }

    /// Splits an observed function into its source slices.
    pub fn split_obs<'a>(&self, g: &'a [f64]) -> Vec<&'a [f64]> {
        let offs = self.law.offsets();
        (0..self.num_sources())
            .map(|j| &g[offs[j]..offs[j + 1]])
            .collect()
    }

    /// `g = sum_j 1(s=j) sum_k (m_k^(j) + n_k^(j)) + gamma(s)`.
    pub fn decompose_obs_function(&self, g: &[f64]) -> ObsDecomposition {
        let parts = self.split_obs(g);
        let mut m = Vec::new();
        let mut n = Vec::new();
        let mut gamma = Vec::new();
        for (j, chain) in self.spec.chains.iter().enumerate() {
            let p = self.law.sources[j].mass();
            let gj = parts[j];
            gamma.push(p.iter().zip(gj).map(|(a, b)| a * b).sum());
            let mut mj = Vec::new();
            let mut nj = Vec::new();
            let mut lo = chain.z_prefix[0].cond_mean(p, gj);
            for k in 0..chain.num_blocks() {
                let hi = chain.z_prefix[k + 1].cond_mean(p, gj);
                let mut mk = vec![0.0; hi.len()];
                let mut nk = vec![0.0; hi.len()];
                for b in 0..hi.len() {
                    let a = chain.parent(k, b);
                    let inc = hi[b] - lo[a];
                    if chain.masks[k][a] {
                        mk[b] = inc;
                    } else {
                        nk[b] = inc;
                    }
                }
                mj.push(mk);
                nj.push(nk);
                lo = hi;
            }
            m.push(mj);
            n.push(nj);
        }
        ObsDecomposition { m, n, gamma }
    }

    /// Reassembles an observed function from its decomposition.
    pub fn recompose(&self, d: &ObsDecomposition) -> ObsFunction {
        let mut out = Vec::new();
        for (j, chain) in self.spec.chains.iter().enumerate() {
            for z in 0..chain.z_space.len() {
                let mut v = d.gamma[j];
                for k in 0..chain.num_blocks() {
                    let b = chain.z_prefix[k + 1].map[z];
                    v += d.m[j][k][b] + d.n[j][k][b];
                }
                out.push(v);
            }
        }
        out
    }

    /// `dP(. | S=j)/dQ` at the cells of `Zbar_k^(j)`; zero where `Q` vanishes.
    pub fn ratio_pq(&self, j: usize, k: usize) -> Vec<f64> {
        self.p_pre[j][k]
            .iter()
            .zip(&self.q_pre[j][k])
            .map(|(p, q)| if *q > 0.0 { p / q } else { 0.0 })
            .collect()
    }

    /// `dQ/dP(. | S=j)` at the cells of `Zbar_k^(j)`; zero where `P(. | S=j)` vanishes.
    pub fn ratio_qp(&self, j: usize, k: usize) -> Vec<f64> {
        self.p_pre[j][k]
            .iter()
            .zip(&self.q_pre[j][k])
            .map(|(p, q)| if *p > 0.0 { q / p } else { 0.0 })
            .collect()
    }

    /// `dP(. | S=j)/dU^(j)` at the cells of `Zbar_k^(j)`.
    fn ratio_pu(&self, j: usize, k: usize) -> Vec<f64> {
        self.p_pre[j][k]
            .iter()
            .zip(&self.u_pre[j][k])
            .map(|(p, u)| if *u > 0.0 { p / u } else { 0.0 })
            .collect()
    }

    /// The unprojected `Q` component of the adjoint: `sum (dP/dQ) lambda_j m_k^(j)` on ideal cells.
    pub fn adjoint_q_raw(&self, d: &ObsDecomposition) -> Vec<f64> {
        let n = self.q.space().len();
        let mut out = vec![0.0; n];
        for (j, chain) in self.spec.chains.iter().enumerate() {
            let lam = self.law.lambda[j];
            for k in 0..chain.num_blocks() {
                if !chain.block_aligned_anywhere(k) {
                    continue;
                }
                let ratio = self.ratio_pq(j, k);
                let lo = &chain.w_prefix[k].map;
                let hi = &chain.w_prefix[k + 1].map;
                for w in 0..n {
                    out[w] += lam * ratio[lo[w]] * d.m[j][k][hi[w]];
                }
            }
        }
        out
    }

    /// The adjoint `A* g`.
    pub fn apply_a_star(&self, g: &[f64]) -> HVector {
        let d = self.decompose_obs_function(g);
        let h_q = self.project_tq(&self.adjoint_q_raw(&d));
        let mut h_u = Vec::new();
        for (j, chain) in self.spec.chains.iter().enumerate() {
            let lam = self.law.lambda[j];
            let mut hu = vec![0.0; chain.z_space.len()];
            for k in 0..chain.num_blocks() {
                let ratio = self.ratio_pu(j, k);
                let lo = &chain.z_prefix[k].map;
                let hi = &chain.z_prefix[k + 1].map;
                for (z, v) in hu.iter_mut().enumerate() {
                    *v += lam * ratio[lo[z]] * d.n[j][k][hi[z]];
                }
            }
            h_u.push(hu);
        }
        HVector {
            h_q,
            h_u,
            h_lambda: d.gamma,
        }
    }

    /// Matrix of `A` from `H` coordinates to whitened observed functions.
    pub fn score_matrix(&self) -> &DMatrix<f64> {
        self.score.get_or_init(|| {
            let dim = self.h_dim();
            let rows = self.law.num_obs_cells();
            let mut m = DMatrix::zeros(rows, dim);
            for c in 0..dim {
                let mut e = DVector::zeros(dim);
                e[c] = 1.0;
                let g = self.apply_a(&self.h_from_coords(&e));
                m.set_column(c, &self.obs_space.whiten(&g));
            }
            m
        })
    }

    /// Matrix of `A*` from whitened observed functions to `H` coordinates.
    pub fn adjoint_matrix(&self) -> DMatrix<f64> {
        let rows = self.law.num_obs_cells();
        let dim = self.h_dim();
        let mut m = DMatrix::zeros(dim, rows);
        for r in 0..rows {
            let mut e = DVector::zeros(rows);
            e[r] = 1.0;
            let g = self.obs_space.unwhiten(&e);
            m.set_column(r, &self.h_coords(&self.apply_a_star(&g)));
        }
        m
    }

    /// `A* A` in `H` coordinates.
    pub fn information_operator(&self) -> LinearOpMatrix<f64> {
        let m = self.score_matrix();
        LinearOpMatrix {
            domain: "H".into(),
            codomain: "H".into(),
            entries: m.transpose() * m,
        }
    }

    /// Whitened orthonormal basis of the tangent space `T(P,P)`.
    fn tangent_columns(&self) -> &DMatrix<f64> {
        self.tangent
            .get_or_init(|| column_space(self.score_matrix()))
    }

    /// The observed-data tangent space as a subspace of `L^2(P)`.
    pub fn tangent_space(&self) -> SubspaceBasis {
        SubspaceBasis {
            space: self.obs_space.clone(),
            columns: self.tangent_columns().clone(),
        }
    }

    /// Dimension of `L^2_0(P)`.
    pub fn obs_mean_zero_dim(&self) -> usize {
        self.obs_space.mean_zero_basis().ncols()
    }

    /// Descriptions of the observed cells, for CSV headers.
    pub fn obs_cell_names(&self) -> Vec<String> {
        (0..self.law.num_obs_cells())
            .map(|o| self.law.cell_name(o))
            .collect()
    }

    /// Description of the ideal space.
    pub fn ideal_description(&self) -> String {
        describe(self.q.space())
    }

    /// Names of the `H` coordinates.
    pub fn h_coord_names(&self) -> Vec<String> {
        let (nq, nu, nl) = self.h_dims();
        let mut out: Vec<String> = (0..nq).map(|i| format!("Q[{i}]")).collect();
        for (j, n) in nu.iter().enumerate() {
            out.extend((0..*n).map(|i| format!("U{}[{i}]", j + 1)));
        }
        out.extend((0..nl).map(|i| format!("lambda[{i}]")));
        out
    }
}
