//! Observed-data influence functions: decomposition of an ideal influence function over the
//! aligned component spaces, the lift to the observed data, the family of influence
//! functions of a two-source model, and the efficient influence function.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discrete::linalg::{column_space, hcat, intersect, lstsq_min_norm, normal_solve, project};
use crate::error::{Error, Result};
use crate::model::FusedLaw;
use crate::score::FusedModel;
use crate::{IdealFunction, ObsFunction};

/// Relative least-squares residual above which a decomposition step fails.
pub const DECOMPOSE_TOL: f64 = 1e-8;

/// Relative residual above which the information equation is declared unsolvable.
pub const RANGE_TOL: f64 = 1e-9;

/// Components `m_k^(j) in D_k^(j)(Q)` of an ideal influence function.
#[derive(Clone, Debug, PartialEq)]
pub struct IfDecomposition {
    /// The decomposed ideal influence function.
    pub psi: IdealFunction,
    /// `m[j][k]` as functions on the ideal cells.
    pub m: Vec<Vec<IdealFunction>>,
    /// The particular solutions `f~^(j)` chosen at each step.
    pub tilde_f: Vec<IdealFunction>,
}

impl IfDecomposition {
    /// `sum_k m_k^(j)`.
    pub fn source_total(&self, j: usize) -> IdealFunction {
        let mut out = vec![0.0; self.psi.len()];
        for mk in &self.m[j] {
            for (o, v) in out.iter_mut().zip(mk) {
                *o += v;
            }
        }
        out
    }

    /// Largest absolute entry of `psi - sum_{j,k} m_k^(j)`.
    pub fn reconstruction_error(&self) -> f64 {
        let mut r = self.psi.clone();
        for j in 0..self.m.len() {
            for (x, v) in r.iter_mut().zip(self.source_total(j)) {
                *x -= v;
            }
        }
        r.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Splits `f` into its projections on `D_k^(j)(Q)`, `k = 1..K^(j)`.
fn split_source(model: &FusedModel, j: usize, f: &[f64]) -> Vec<IdealFunction> {
    (0..model.spec.chains[j].num_blocks())
        .map(|k| model.proj_d(j, k, f))
        .collect()
}

/// Whitened basis of `sum_{l in ls} oplus_k D_k^(l)(Q)`.
fn stacked_d(model: &FusedModel, ls: impl Iterator<Item = usize>) -> DMatrix<f64> {
    let parts: Vec<DMatrix<f64>> = ls.map(|l| model.basis_d_source(l).columns).collect();
    let refs: Vec<&DMatrix<f64>> = parts.iter().collect();
    hcat(&refs, model.q.space().len())
}

/// Solves `Pi[f | D^(j)perp] = Pi[r | D^(j)perp]` for `f` in the span of `g` (minimum norm).
///
/// Returns `f` (whitened) and the relative residual.
fn solve_step(dj: &DMatrix<f64>, g: &DMatrix<f64>, r: &DVector<f64>) -> (DVector<f64>, f64) {
    let perp = |v: &DMatrix<f64>| v - dj * (dj.transpose() * v);
    let rp = r - project(dj, r);
    let scale = r.norm();
    if g.ncols() == 0 {
        let res = rp.norm();
        return (DVector::zeros(r.len()), relative(res, scale));
    }
    let a = perp(g);
    let (x, res) = lstsq_min_norm(&a, &rp);
    (g * x, relative(res, scale))
}

fn relative(res: f64, scale: f64) -> f64 {
    if scale <= f64::MIN_POSITIVE {
        0.0
    } else {
        res / scale
    }
}

/// Algorithm DECOMPOSE with minimum-norm choices of `f~^(j)`.
pub fn decompose_algorithm(model: &FusedModel, psi: &[f64]) -> Result<IfDecomposition> {
    decompose_impl(model, psi, None)
}

/// Algorithm DECOMPOSE with the given choices of `f~^(j)` (checked to solve each step).
pub fn decompose_with_choices(
    model: &FusedModel,
    psi: &[f64],
    choices: &[IdealFunction],
) -> Result<IfDecomposition> {
    decompose_impl(model, psi, Some(choices))
}

fn decompose_impl(
    model: &FusedModel,
    psi: &[f64],
    choices: Option<&[IdealFunction]>,
) -> Result<IfDecomposition> {
    let qs = model.q_space();
    let n_src = model.num_sources();
    let scale = qs.norm(psi);
    let mut m = Vec::with_capacity(n_src);
    let mut tilde_f = Vec::with_capacity(n_src);
    let mut r = psi.to_vec();
    for j in 0..n_src {
        let dj = model.basis_d_source(j).columns;
        let rw = qs.whiten(&r);
        let (f, res) = match choices {
            None => {
                let g = stacked_d(model, j + 1..n_src);
                let (fw, res) = solve_step(&dj, &g, &rw);
                (qs.unwhiten(&fw), res)
            }
            Some(c) => {
                let f = c[j].clone();
                let d = qs.whiten(&sub(&r, &f));
                let res = (&d - project(&dj, &d)).norm();
                (f, relative(res, rw.norm()))
            }
        };
        let res_abs = res * qs.norm(&r);
        if res > DECOMPOSE_TOL && res_abs > DECOMPOSE_TOL * scale.max(1e-300) {
            return Err(Error::DecomposeFail {
                source_index: j + 1,
                residual: res,
            });
        }
        let mj = split_source(model, j, &sub(&r, &f));
        for mk in &mj {
            r = sub(&r, mk);
        }
        m.push(mj);
        tilde_f.push(f);
    }
    Ok(IfDecomposition {
        psi: psi.to_vec(),
        m,
        tilde_f,
    })
}

/// Two-source solver: finds `m^(2)` in `oplus_k D_k^(2)(Q)` with
/// `(I - Pi_{D^(1)}) m^(2) = (I - Pi_{D^(1)}) psi`, and sets `m^(1) = psi - m^(2)`.
pub fn two_source_solve(model: &FusedModel, psi: &[f64]) -> Result<IfDecomposition> {
    if model.num_sources() != 2 {
        return Err(Error::InvalidArgument(format!(
            "the two-source solver needs 2 sources, found {}",
            model.num_sources()
        )));
    }
    let qs = model.q_space();
    let d1 = model.basis_d_source(0).columns;
    let d2 = model.basis_d_source(1).columns;
    let (m2w, res) = solve_step(&d1, &d2, &qs.whiten(psi));
    if res > DECOMPOSE_TOL {
        return Err(Error::DecomposeFail {
            source_index: 1,
            residual: res,
        });
    }
    let m2 = qs.unwhiten(&m2w);
    let m1 = sub(psi, &m2);
    Ok(IfDecomposition {
        psi: psi.to_vec(),
        m: vec![split_source(model, 0, &m1), split_source(model, 1, &m2)],
        tilde_f: vec![m2, vec![0.0; psi.len()]],
    })
}

/// `phi(o) = sum_j 1(s=j)/P(S=j) sum_k (dQ/dP(.|S=j))(zbar_{k-1}) m_k^(j)(zbar_k)`.
pub fn lift_to_observed(model: &FusedModel, dec: &IfDecomposition) -> ObsFunction {
    lift_components(model, &dec.m)
}

/// The lift applied to arbitrary per-source ideal functions, projected on each `D_k^(j)`.
pub fn lift_components(model: &FusedModel, m: &[Vec<IdealFunction>]) -> ObsFunction {
    let mut out = Vec::with_capacity(model.law.num_obs_cells());
    for (j, chain) in model.spec.chains.iter().enumerate() {
        let lam = model.lambda()[j];
        let mut phi = vec![0.0; chain.z_space.len()];
        for (k, mk) in m[j].iter().enumerate() {
            let vals = model.proj_d_prefix(j, k, mk);
            let ratio = model.ratio_qp(j, k);
            let lo = &chain.z_prefix[k].map;
            let hi = &chain.z_prefix[k + 1].map;
            for (z, v) in phi.iter_mut().enumerate() {
                *v += ratio[lo[z]] * vals[hi[z]] / lam;
            }
        }
        out.extend(phi);
    }
    out
}

/// Largest component-wise deviation of `A* phi` from `(Pi[psi | T(Q,Q)], 0, 0)`.
pub fn gradient_residual(model: &FusedModel, phi: &[f64], psi: &[f64]) -> f64 {
    let a = model.apply_a_star(phi);
    let target = model.project_tq(psi);
    let rq = a
        .h_q
        .iter()
        .zip(&target)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let ru = a.h_u.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    let rl = a.h_lambda.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    rq.max(ru).max(rl)
}

/// `var_P(f) = E_P[f^2]` for a mean-zero observed function.
pub fn variance(p: &FusedLaw, f: &[f64]) -> f64 {
    p.obs_mass().iter().zip(f).map(|(m, v)| m * v * v).sum()
}

/// The affine family `{base + sum_i c_i directions[i]}` of influence functions.
#[derive(Clone, Debug, PartialEq)]
pub struct IfFamily {
    pub base: ObsFunction,
    pub directions: Vec<ObsFunction>,
}

impl IfFamily {
    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    pub fn member(&self, coeffs: &[f64]) -> ObsFunction {
        let mut out = self.base.clone();
        for (c, d) in coeffs.iter().zip(&self.directions) {
            for (o, v) in out.iter_mut().zip(d) {
                *o += c * v;
            }
        }
        out
    }
}

/// Orthonormal basis (as functions) of `D^(1)(Q) cap D^(2)(Q)`.
pub fn d_intersection(model: &FusedModel) -> Result<Vec<IdealFunction>> {
    if model.num_sources() != 2 {
        return Err(Error::InvalidArgument(
            "the intersection is defined for two sources".into(),
        ));
    }
    let d1 = model.basis_d_source(0).columns;
    let d2 = model.basis_d_source(1).columns;
    let f = intersect(&d1, &d2);
    Ok(model.q_space().unwhiten_columns(&f))
}

/// All influence functions corresponding to the decomposed ideal influence function.
pub fn if_family(model: &FusedModel, dec: &IfDecomposition) -> Result<IfFamily> {
    let base = lift_to_observed(model, dec);
    let directions = d_intersection(model)?
        .iter()
        .map(|f| {
            let neg: Vec<f64> = f.iter().map(|x| -x).collect();
            lift_components(
                model,
                &[split_source(model, 0, f), split_source(model, 1, &neg)],
            )
        })
        .collect();
    Ok(IfFamily { base, directions })
}

/// Projection of an influence function onto the tangent space.
pub fn eif_project(model: &FusedModel, phi: &[f64]) -> ObsFunction {
    model.tangent_space().project(phi)
}

/// Solution of the information equation.
#[derive(Clone, Debug, PartialEq)]
pub struct EifSolution {
    /// The `Q` component of the solution `h`.
    pub h_q: IdealFunction,
    /// `phi_eff = A h`.
    pub phi: ObsFunction,
    /// Relative residual of `A*A h = (psi_eff, 0, 0)`.
    pub residual: f64,
    /// Number of singular values discarded by the pseudoinverse.
    pub truncated: usize,
}

/// Solves `A*A h = (Pi[psi | T(Q,Q)], 0, 0)` in the minimum-norm sense and returns `A h`.
pub fn eif_solve(model: &FusedModel, psi: &[f64]) -> Result<EifSolution> {
    let m = model.score_matrix();
    let mut target = model.h_zero();
    target.h_q = model.project_tq(psi);
    let b = model.h_coords(&target);
    let (c, truncated) = normal_solve(m, &b);
    let info = m.transpose() * m;
    let res = relative((&info * &c - &b).norm(), b.norm());
    if res > RANGE_TOL {
        return Err(Error::NotInRange(res));
    }
    let phi = model.obs_space().unwhiten(&(m * &c));
    let h = model.h_from_coords(&c);
    Ok(EifSolution {
        h_q: h.h_q,
        phi,
        residual: res,
        truncated,
    })
}

/// Outcome of a pathwise-differentiability search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Differentiability {
    pub differentiable: bool,
    /// A decomposable ideal influence function, when one exists.
    pub witness: Option<IdealFunction>,
    /// Relative distance of the family from the decomposable set.
    pub residual: f64,
}

/// Searches the affine family `psi + span(directions)` of ideal influence functions for a
/// member that DECOMPOSE accepts.
pub fn check_pathwise_differentiable(
    model: &FusedModel,
    psi: &[f64],
    directions: &[IdealFunction],
) -> Differentiability {
    let qs = model.q_space();
    let s = column_space(&stacked_d(model, 0..model.num_sources()));
    let perp = |v: &DVector<f64>| v - project(&s, v);
    let pw = qs.whiten(psi);
    let scale = pw.norm();
    let witness = if directions.is_empty() {
        psi.to_vec()
    } else {
        let n = qs.whiten_columns(directions);
        let mut a = DMatrix::zeros(n.nrows(), n.ncols());
        for c in 0..n.ncols() {
            a.set_column(c, &perp(&n.column(c).into_owned()));
        }
        let (x, _) = lstsq_min_norm(&a, &(-perp(&pw)));
        add(psi, &qs.unwhiten(&(n * x)))
    };
    let residual = relative(perp(&qs.whiten(&witness)).norm(), scale);
    match decompose_algorithm(model, &witness) {
        Ok(_) if residual <= DECOMPOSE_TOL => Differentiability {
            differentiable: true,
            witness: Some(witness),
            residual,
        },
        _ => Differentiability {
            differentiable: false,
            witness: None,
            residual,
        },
    }
}
