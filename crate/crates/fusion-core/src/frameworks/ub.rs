//! Two sources over the same vector `W = (U, B)`: one source shares the law of `U` given `B`
//! with the ideal law, the other shares the law of `B` given `U`, either at a single anchor
//! level `u0` or at every level.
//!
//! Covers joint reconstruction from the two cross-conditionals, the unique influence
//! function under anchor alignment, the family of influence functions under full alignment,
//! and the efficient influence function of the fully aligned model for finite `U`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::tables::{frames, ratio, to_obs, SourceFrame};
use super::FusedFramework;
use crate::discrete::linalg::{null_space, pinv, rank};
use crate::discrete::{AxisSet, PmfMode, Projection, RealTable};
use crate::error::{Error, Result};
use crate::influence::{variance, IfFamily};
use crate::model::{AlignmentSpec, CompiledSpec, FusedLaw, Region, SourceSpec};
use crate::score::FusedModel;
use crate::{IdealFunction, ObsFunction, Pmf};

/// Which axes play `U` and `B`, which source carries which alignment, and the anchor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UbRoles {
    pub u: Vec<String>,
    pub b: Vec<String>,
    /// Source (0-based) whose law of `U` given `B` is aligned for every `b`.
    pub full_source: usize,
    /// Source (0-based) whose law of `B` given `U` is aligned at `u0` (or everywhere).
    pub anchor_source: usize,
    /// Anchor level of `U`, one label per `U` axis.
    pub u0: Vec<String>,
}

/// Builds `q(b, u) = q(b) p(u | b)` with
/// `q(b) ∝ p(b | u0) / p(u0 | b)`.
///
/// `p_u_given_b` is a table over `B ++ U` and `p_b_given_u0` a table over `B`.
pub fn reconstruct_joint<S: AsRef<str>>(
    p_u_given_b: &RealTable<f64>,
    p_b_given_u0: &RealTable<f64>,
    u0: &[S],
) -> Result<Pmf> {
    let b_space = &p_b_given_u0.space;
    let nb_axes = b_space.axes().len();
    let joint = &p_u_given_b.space;
    if joint.axes().len() <= nb_axes || joint.axes()[..nb_axes] != *b_space.axes() {
        return Err(Error::InvalidArgument(
            "the U-given-B table must be indexed by B followed by U".into(),
        ));
    }
    let u_space = AxisSet::new(joint.axes()[nb_axes..].to_vec())?;
    let u0 = u_space.index_of_labels(u0)?;
    let nu = u_space.len();
    let mut qb = Vec::with_capacity(b_space.len());
    for b in 0..b_space.len() {
        let pb = p_b_given_u0.values[b];
        let pu0 = p_u_given_b.values[b * nu + u0];
        if pb > 0.0 && pu0 <= 0.0 {
            return Err(Error::Positivity(format!(
                "p(u0 | b) vanishes at b = {} while p(b | u0) > 0",
                b_space.cell_name(b)
            )));
        }
        qb.push(ratio(pb, pu0));
    }
    let total: f64 = qb.iter().sum();
    if total <= 0.0 {
        return Err(Error::Positivity("p(b | u0) has no mass".into()));
    }
    let mass: Vec<f64> = (0..joint.len())
        .map(|c| qb[c / nu] / total * p_u_given_b.values[c])
        .collect();
    let mode = if mass.iter().all(|&m| m > 0.0) {
        PmfMode::Strict
    } else {
        PmfMode::Relaxed
    };
    Pmf::from_weights(joint.clone(), mass, mode)
}

/// Ideal-space view of a two-source `(U, B)` model.
struct UbView {
    w: AxisSet,
    pu: Projection,
    pb: Projection,
    u0: usize,
    frames: Vec<SourceFrame>,
    roles: UbRoles,
}

impl UbView {
    fn new(law: &FusedLaw, spec: &CompiledSpec, roles: &UbRoles) -> Result<Self> {
        let w = spec.ideal.clone();
        if spec.num_sources() != 2
            || roles.full_source > 1
            || roles.anchor_source > 1
            || roles.full_source == roles.anchor_source
        {
            return Err(Error::InvalidSpec(
                "a U/B model has exactly two sources with distinct roles".into(),
            ));
        }
        if roles.u.len() + roles.b.len() != w.axes().len() {
            return Err(Error::InvalidSpec("U and B must partition the ideal axes".into()));
        }
        let pu = w.projection(&roles.u)?;
        let pb = w.projection(&roles.b)?;
        let u0 = pu.sub.index_of_labels(&roles.u0)?;
        let frames = frames(law, spec)?;
        for (j, f) in frames.iter().enumerate() {
            if f.p.space() != &w {
                return Err(Error::InvalidSpec(format!(
                    "source {} must observe every ideal axis",
                    j + 1
                )));
            }
        }
        Ok(UbView {
            w,
            pu,
            pb,
            u0,
            frames,
            roles: roles.clone(),
        })
    }

    fn pf(&self) -> &[f64] {
        self.frames[self.roles.full_source].p.mass()
    }

    fn pa(&self) -> &[f64] {
        self.frames[self.roles.anchor_source].p.mass()
    }

    fn lift_b_sum(&self, f: &[f64]) -> Vec<f64> {
        self.pb.lift(&self.pb.sum(f))
    }

    fn lift_u_sum(&self, f: &[f64]) -> Vec<f64> {
        self.pu.lift(&self.pu.sum(f))
    }

    fn is_u0(&self, w: usize) -> bool {
        self.pu.map[w] == self.u0
    }

    /// `q(u0 | b(w))` at every cell.
    fn q_u0_given_b(&self, q: &[f64]) -> Vec<f64> {
        let at_u0: Vec<f64> = (0..q.len())
            .map(|w| if self.is_u0(w) { q[w] } else { 0.0 })
            .collect();
        let num = self.lift_b_sum(&at_u0);
        let den = self.lift_b_sum(q);
        num.iter().zip(&den).map(|(n, d)| ratio(*n, *d)).collect()
    }

    fn assemble(&self, full: Vec<f64>, anchor: Vec<f64>) -> ObsFunction {
        let mut parts = vec![Vec::new(), Vec::new()];
        parts[self.roles.full_source] = full;
        parts[self.roles.anchor_source] = anchor;
        to_obs(&self.frames, &parts)
    }

    fn check_q(&self, q: &Pmf) -> Result<()> {
        if q.space() != &self.w {
            return Err(Error::InvalidArgument(
                "ideal law is not defined on the ideal space".into(),
            ));
        }
        Ok(())
    }
}

/// The ideal law recovered from the full source's `U | B` and the anchor source's `B | u0`,
/// on the ideal space.
pub fn reconstruct_ub(law: &FusedLaw, spec: &CompiledSpec, roles: &UbRoles) -> Result<Pmf> {
    let v = UbView::new(law, spec, roles)?;
    reconstruct_at(&v, v.u0)
}

/// Average of the reconstructions over several anchors (used under full alignment).
pub fn reconstruct_ub_average(
    law: &FusedLaw,
    spec: &CompiledSpec,
    roles: &UbRoles,
    anchors: &[usize],
) -> Result<Pmf> {
    let v = UbView::new(law, spec, roles)?;
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("no anchors given".into()));
    }
    let mut acc = vec![0.0; v.w.len()];
    for &a in anchors {
        if a >= v.pu.sub.len() {
            return Err(Error::InvalidArgument(format!("anchor index {a} out of range")));
        }
        let q = reconstruct_at(&v, a)?;
        for (x, m) in acc.iter_mut().zip(q.mass()) {
            *x += m / anchors.len() as f64;
        }
    }
    let mode = if acc.iter().all(|&m| m > 0.0) {
        PmfMode::Strict
    } else {
        PmfMode::Relaxed
    };
    Pmf::from_weights(v.w.clone(), acc, mode)
}

fn reconstruct_at(v: &UbView, u0: usize) -> Result<Pmf> {
    let full = &v.frames[v.roles.full_source].p;
    let anchor = &v.frames[v.roles.anchor_source].p;
    let relaxed_full = full.with_mode(PmfMode::Relaxed)?;
    let relaxed_anchor = anchor.with_mode(PmfMode::Relaxed)?;
    let p_u_b = relaxed_full.conditional(&v.roles.u, &v.roles.b)?;
    let p_b_u = relaxed_anchor.conditional(&v.roles.b, &v.roles.u)?;
    let nb = v.pb.sub.len();
    if relaxed_anchor.marginal(&v.roles.u)?.mass()[u0] <= 0.0 {
        return Err(Error::Positivity(format!(
            "anchor level {} has no mass in source {}",
            v.pu.sub.cell_name(u0),
            v.roles.anchor_source + 1
        )));
    }
    let slice = RealTable::new(v.pb.sub.clone(), p_b_u.values[u0 * nb..(u0 + 1) * nb].to_vec())?;
    let labels: Vec<String> = v.pu.sub.labels(u0).iter().map(|s| s.to_string()).collect();
    let joint = reconstruct_joint(&p_u_b, &slice, &labels)?;
    let names = v.w.names();
    let q = joint.marginal(&names)?;
    let mode = joint.mode();
    Pmf::new(q.space().clone(), q.into_mass(), mode)
}

/// The unique influence function when `B | U` is aligned only at `u0`:
///
/// `I(s=f)/λ_f · q(b)/p_f(b) · {ψ¹ − I(u=u0)/q(u0|b) · E_Q[ψ¹|b]}
///  + I(s=a)/λ_a · q(u0)/p_a(u0) · I(u=u0)/q(u0|b) · E_Q[ψ¹|b]`.
pub fn generic_ub_if(
    law: &FusedLaw,
    spec: &CompiledSpec,
    roles: &UbRoles,
    q: &Pmf,
    psi: &[f64],
) -> Result<ObsFunction> {
    let v = UbView::new(law, spec, roles)?;
    v.check_q(q)?;
    let qm = q.mass();
    let qb = v.lift_b_sum(qm);
    let q_u0_b = v.q_u0_given_b(qm);
    if let Some(w) = (0..qm.len()).find(|&w| qb[w] > 0.0 && q_u0_b[w] <= 0.0) {
        return Err(Error::Positivity(format!(
            "q(u0 | b) vanishes at {}",
            v.w.cell_name(w)
        )));
    }
    let eb = v.pb.lift(&v.pb.cond_mean(qm, psi));
    let pfb = v.lift_b_sum(v.pf());
    let q_u0 = v.pu.sum(qm)[v.u0];
    let pa_u0 = v.pu.sum(v.pa())[v.u0];
    if pa_u0 <= 0.0 {
        return Err(Error::Positivity("the anchor level has no mass in the anchor source".into()));
    }
    let lf = law.lambda[roles.full_source];
    let la = law.lambda[roles.anchor_source];
    let mut full = vec![0.0; qm.len()];
    let mut anchor = vec![0.0; qm.len()];
    for w in 0..qm.len() {
        let ind = if v.is_u0(w) { ratio(1.0, q_u0_b[w]) } else { 0.0 };
        full[w] = ratio(qb[w], pfb[w]) / lf * (psi[w] - ind * eb[w]);
        anchor[w] = q_u0 / pa_u0 / la * ind * eb[w];
    }
    Ok(v.assemble(full, anchor))
}

/// Basis of `F = {f : E_Q[f | U] = E_Q[f | B] = 0}`, zero off the support of `Q`.
pub fn ub_free_directions(q: &Pmf, roles: &UbRoles) -> Result<Vec<IdealFunction>> {
    let w = q.space();
    let pu = w.projection(&roles.u)?;
    let pb = w.projection(&roles.b)?;
    let qm = q.mass();
    let n = w.len();
    let zeros = qm.iter().filter(|&&m| m <= 0.0).count();
    let rows = pu.sub.len() + pb.sub.len() + zeros;
    let mut c = DMatrix::zeros(rows, n);
    for cell in 0..n {
        c[(pu.map[cell], cell)] = qm[cell];
        c[(pu.sub.len() + pb.map[cell], cell)] = qm[cell];
    }
    let mut r = pu.sub.len() + pb.sub.len();
    for (cell, &m) in qm.iter().enumerate() {
        if m <= 0.0 {
            c[(r, cell)] = 1.0;
            r += 1;
        }
    }
    let ns = null_space(&c);
    Ok((0..ns.ncols()).map(|k| ns.column(k).iter().copied().collect()).collect())
}

/// The influence functions under full alignment of both cross-conditionals: the anchor
/// member with weight `κ = q(u)q(b)/q(u,b)` plus the directions
/// `[I(s=f)/λ_f · q(b)/p_f(b) − I(s=a)/λ_a · q(u)/p_a(u)] f`, `f ∈ F`.
pub fn generic_ub_full_if(
    law: &FusedLaw,
    spec: &CompiledSpec,
    roles: &UbRoles,
    q: &Pmf,
    psi: &[f64],
) -> Result<IfFamily> {
    let v = UbView::new(law, spec, roles)?;
    v.check_q(q)?;
    let qm = q.mass();
    let qb = v.lift_b_sum(qm);
    let qu = v.lift_u_sum(qm);
    let eb = v.pb.lift(&v.pb.cond_mean(qm, psi));
    let pfb = v.lift_b_sum(v.pf());
    let pau = v.lift_u_sum(v.pa());
    let lf = law.lambda[roles.full_source];
    let la = law.lambda[roles.anchor_source];
    let wf: Vec<f64> = (0..qm.len()).map(|w| ratio(qb[w], pfb[w]) / lf).collect();
    let wa: Vec<f64> = (0..qm.len()).map(|w| ratio(qu[w], pau[w]) / la).collect();
    let mut full = vec![0.0; qm.len()];
    let mut anchor = vec![0.0; qm.len()];
    for w in 0..qm.len() {
        let kappa = ratio(qu[w] * qb[w], qm[w]);
        full[w] = wf[w] * (psi[w] - kappa * eb[w]);
        anchor[w] = wa[w] * kappa * eb[w];
    }
    let base = v.assemble(full, anchor);
    let directions = ub_free_directions(q, roles)?
        .into_iter()
        .map(|f| {
            let a: Vec<f64> = f.iter().zip(&wf).map(|(x, c)| x * c).collect();
            let b: Vec<f64> = f.iter().zip(&wa).map(|(x, c)| -x * c).collect();
            v.assemble(a, b)
        })
        .collect();
    Ok(IfFamily { base, directions })
}

/// Efficient influence function of the fully aligned model with finite `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct UbEif {
    /// The solution `h` on the ideal cells, centered under `Q`.
    pub h: IdealFunction,
    pub phi: ObsFunction,
    /// Number of directions dropped by the pseudoinverse in the `T x T` system.
    pub truncated: usize,
}

/// Solves `h − π_f E_Q[h|B] − π_a E_Q[h|U] = (q/p) ψ¹` with `p` the mixture of the two source
/// laws and `π_j = P(S=j | U, B)`, by reducing it to a `T x T` system for `k = E_Q[h|U]`,
/// and returns `φ = I(s=f){h − E_Q[h|B]} + I(s=a){h − E_Q[h|U]}`.
pub fn generic_ub_eif_discrete(
    law: &FusedLaw,
    spec: &CompiledSpec,
    roles: &UbRoles,
    q: &Pmf,
    psi: &[f64],
) -> Result<UbEif> {
    let v = UbView::new(law, spec, roles)?;
    v.check_q(q)?;
    let qm = q.mass();
    let n = qm.len();
    let nt = v.pu.sub.len();
    let nb = v.pb.sub.len();
    let lf = law.lambda[roles.full_source];
    let la = law.lambda[roles.anchor_source];
    let mut cell = vec![vec![0usize; nb]; nt];
    for w in 0..n {
        cell[v.pu.map[w]][v.pb.map[w]] = w;
    }
    let (pf, pa) = (v.pf(), v.pa());
    let mut pi = vec![0.0; n];
    let mut r = vec![0.0; n];
    for w in 0..n {
        let mix = lf * pf[w] + la * pa[w];
        if qm[w] <= 0.0 || mix <= 0.0 {
            return Err(Error::Positivity(format!(
                "the efficient influence function needs positive mass at {}",
                v.w.cell_name(w)
            )));
        }
        pi[w] = lf * pf[w] / mix;
        r[w] = qm[w] / mix * psi[w];
    }
    let qb = v.pb.sum(qm);
    let qu = v.pu.sum(qm);
    // Per-b matrices M(b) = (I − π(b) β(b)')^{-1}, with β(b) = q(. | b).
    let mut m_of_b = Vec::with_capacity(nb);
    for b in 0..nb {
        let pib = DVector::from_fn(nt, |t, _| pi[cell[t][b]]);
        let beta = DVector::from_fn(nt, |t, _| qm[cell[t][b]] / qb[b]);
        let a = DMatrix::identity(nt, nt) - &pib * beta.transpose();
        let inv = a.try_inverse().ok_or_else(|| {
            Error::Singular(format!("I − π β' is singular at b = {}", v.pb.sub.cell_name(b)))
        })?;
        m_of_b.push(inv);
    }
    let mut g = DMatrix::identity(nt, nt);
    let mut c = DVector::zeros(nt);
    for b in 0..nb {
        let d = DMatrix::from_fn(nt, nt, |i, j| if i == j { 1.0 - pi[cell[i][b]] } else { 0.0 });
        let md = &m_of_b[b] * d;
        let rb = DVector::from_fn(nt, |t, _| r[cell[t][b]]);
        let mr = &m_of_b[b] * rb;
        for t in 0..nt {
            let wgt = qm[cell[t][b]] / qu[t];
            for s in 0..nt {
                g[(t, s)] -= wgt * md[(t, s)];
            }
            c[t] += wgt * mr[t];
        }
    }
    let k = pinv(&g) * &c;
    let truncated = nt - rank(&g);
    let mut h = vec![0.0; n];
    for b in 0..nb {
        let rhs = DVector::from_fn(nt, |t, _| r[cell[t][b]] + (1.0 - pi[cell[t][b]]) * k[t]);
        let hb = &m_of_b[b] * rhs;
        for t in 0..nt {
            h[cell[t][b]] = hb[t];
        }
    }
    let mean: f64 = qm.iter().zip(&h).map(|(a, b)| a * b).sum();
    for x in h.iter_mut() {
        *x -= mean;
    }
    let eb = v.pb.lift(&v.pb.cond_mean(qm, &h));
    let eu = v.pu.lift(&v.pu.cond_mean(qm, &h));
    let full: Vec<f64> = h.iter().zip(&eb).map(|(a, b)| a - b).collect();
    let anchor: Vec<f64> = h.iter().zip(&eu).map(|(a, b)| a - b).collect();
    Ok(UbEif {
        phi: v.assemble(full, anchor),
        h,
        truncated,
    })
}

/// Outcome of comparing the single-source influence function with the efficient one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveVsObedient {
    /// Variance of `I(s=f) I(b=b*)/(λ_f p_f(b*)) (I(u=u*) − P_f(u*|b*))`.
    pub var_naive: f64,
    pub var_eff: f64,
    pub gap: f64,
    /// Relative `L^2(P)` distance of the single-source function from the tangent space.
    pub incompatibility: f64,
    /// Gradient-equation residuals of the single-source and efficient functions.
    pub naive_gradient_residual: f64,
    pub eff_gradient_residual: f64,
    /// Whether `U` and `B` determine each other on the support of `Q`.
    pub invertible: bool,
}

/// Whether every `b` carries exactly one `u` and every `u` exactly one `b` under `q`.
pub fn is_invertible_map(q: &Pmf, roles: &UbRoles) -> Result<bool> {
    let w = q.space();
    let pu = w.projection(&roles.u)?;
    let pb = w.projection(&roles.b)?;
    let mut per_u = vec![0usize; pu.sub.len()];
    let mut per_b = vec![0usize; pb.sub.len()];
    for (cell, &m) in q.mass().iter().enumerate() {
        if m > 0.0 {
            per_u[pu.map[cell]] += 1;
            per_b[pb.map[cell]] += 1;
        }
    }
    Ok(per_u.iter().all(|&c| c == 1) && per_b.iter().all(|&c| c == 1))
}

/// The target `Q(U=u*|B=b*)` and its ideal influence function
/// `I(b=b*)/q(b*) (I(u=u*) − Q(u*|b*))`.
pub fn ub_target(q: &Pmf, roles: &UbRoles, u_star: usize, b_star: usize) -> Result<(f64, IdealFunction)> {
    let w = q.space();
    let pu = w.projection(&roles.u)?;
    let pb = w.projection(&roles.b)?;
    let qm = q.mass();
    let qb = pb.sum(qm)[b_star];
    if qb <= 0.0 {
        return Err(Error::Positivity("the target level of B has no mass".into()));
    }
    let joint: f64 = (0..qm.len())
        .filter(|&c| pu.map[c] == u_star && pb.map[c] == b_star)
        .map(|c| qm[c])
        .sum();
    let value = joint / qb;
    let psi = (0..qm.len())
        .map(|c| {
            if pb.map[c] == b_star {
                let iu = if pu.map[c] == u_star { 1.0 } else { 0.0 };
                (iu - value) / qb
            } else {
                0.0
            }
        })
        .collect();
    Ok((value, psi))
}

/// Compares the influence function that uses only the full source with the efficient one
/// for `ψ(Q) = Q(U=u*|B=b*)` on a fully aligned model.
pub fn naive_vs_obedient_demo(
    model: &FusedModel,
    roles: &UbRoles,
    u_star: usize,
    b_star: usize,
) -> Result<NaiveVsObedient> {
    let v = UbView::new(&model.law, &model.spec, roles)?;
    let invertible = is_invertible_map(&model.q, roles)?;
    let (_, psi) = ub_target(&model.q, roles, u_star, b_star)?;
    let pf = v.pf();
    let pfb = v.pb.sum(pf)[b_star];
    let (p_ub, _) = {
        let full = &v.frames[roles.full_source].p;
        let relaxed = full.with_mode(PmfMode::Relaxed)?;
        ub_target(&relaxed, roles, u_star, b_star)?
    };
    let lf = law_lambda(model, roles.full_source);
    let full: Vec<f64> = (0..v.w.len())
        .map(|c| {
            if v.pb.map[c] == b_star {
                let iu = if v.pu.map[c] == u_star { 1.0 } else { 0.0 };
                (iu - p_ub) / (lf * pfb)
            } else {
                0.0
            }
        })
        .collect();
    let naive = v.assemble(full, vec![0.0; v.w.len()]);
    let eff = crate::influence::eif_project(model, &naive);
    let var_naive = variance(&model.law, &naive);
    let var_eff = variance(&model.law, &eff);
    let os = model.obs_space();
    let dist = os.norm(&naive.iter().zip(&eff).map(|(a, b)| a - b).collect::<Vec<_>>());
    let scale = os.norm(&naive);
    Ok(NaiveVsObedient {
        var_naive,
        var_eff,
        gap: var_naive - var_eff,
        incompatibility: if scale > 0.0 { dist / scale } else { 0.0 },
        naive_gradient_residual: crate::influence::gradient_residual(model, &naive, &psi),
        eff_gradient_residual: crate::influence::gradient_residual(model, &eff, &psi),
        invertible,
    })
}

fn law_lambda(model: &FusedModel, j: usize) -> f64 {
    model.law.lambda[j]
}

/// The `(U, B)` framework on an ideal space with an axis `U` (the remaining axes form `B`),
/// targeting `Q(U=u*|B=b*)`. Source 1 shares `U | B`; source 2 shares `B | U` at the anchor
/// only (`full = false`) or at every level (`full = true`).
#[derive(Clone, Debug)]
pub struct GenericUb {
    full: bool,
    roles: UbRoles,
    u_star: usize,
    b_star: usize,
    spec: CompiledSpec,
}

impl GenericUb {
    /// `anchor` is the label of `u0`; `target` lists the labels of `(u*, b*)` in ideal order.
    /// Both default to first levels.
    pub fn new(
        ideal: &AxisSet,
        full: bool,
        anchor: Option<&[String]>,
        target: Option<&[String]>,
    ) -> Result<Self> {
        let u_axis = ideal.axis("U")?;
        if u_axis.len() < 2 {
            return Err(Error::Degenerate("U needs at least two levels".into()));
        }
        let b: Vec<String> = ideal
            .names()
            .into_iter()
            .filter(|n| *n != "U")
            .map(String::from)
            .collect();
        if b.is_empty() {
            return Err(Error::InvalidSpec("B needs at least one axis".into()));
        }
        let u0 = match anchor {
            Some(a) => a.to_vec(),
            None => vec![u_axis.levels[0].clone()],
        };
        let u_space = ideal.sub(&["U"])?;
        let anchor_cell = u_space.index_of_labels(&u0)?;
        let roles = UbRoles {
            u: vec!["U".into()],
            b: b.clone(),
            full_source: 0,
            anchor_source: 1,
            u0: u0.clone(),
        };
        let target_cell = match target {
            Some(t) => ideal.index_of_labels(t)?,
            None => 0,
        };
        let u_star = ideal.projection(&["U"])?.map[target_cell];
        let b_star = ideal.projection(&b)?.map[target_cell];
        let b_refs: Vec<&str> = b.iter().map(String::as_str).collect();
        let region = if full {
            Region::All
        } else {
            Region::Tuples(vec![u_space.labels(anchor_cell).iter().map(|s| s.to_string()).collect()])
        };
        let spec = AlignmentSpec::new(vec![
            SourceSpec::new(vec![b_refs.clone(), vec!["U"]], vec![Region::Empty, Region::All]),
            SourceSpec::new(vec![vec!["U"], b_refs], vec![Region::Empty, region]),
        ])
        .compile(ideal)?;
        Ok(GenericUb {
            full,
            roles,
            u_star,
            b_star,
            spec,
        })
    }

    pub fn roles(&self) -> &UbRoles {
        &self.roles
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    /// Cell indices of `u*` in the `U` space and `b*` in the `B` space.
    pub fn target_cells(&self) -> (usize, usize) {
        (self.u_star, self.b_star)
    }
}

impl FusedFramework for GenericUb {
    fn spec(&self) -> &CompiledSpec {
        &self.spec
    }

    fn psi(&self, q: &Pmf) -> Result<f64> {
        Ok(ub_target(q, &self.roles, self.u_star, self.b_star)?.0)
    }

    fn ideal_if(&self, q: &Pmf) -> Result<IdealFunction> {
        Ok(ub_target(q, &self.roles, self.u_star, self.b_star)?.1)
    }

    /// `ψ` evaluated at the reconstructed ideal law.
    fn phi(&self, law: &FusedLaw) -> Result<f64> {
        let q = self.reconstruct_q(law)?;
        self.psi(&q)
    }

    fn reconstruct_q(&self, law: &FusedLaw) -> Result<Pmf> {
        reconstruct_ub(law, &self.spec, &self.roles)
    }

    fn reconstruct_q_obedient(&self, law: &FusedLaw) -> Result<Pmf> {
        if self.full {
            let n = self.spec.ideal.axis("U")?.len();
            let all: Vec<usize> = (0..n).collect();
            reconstruct_ub_average(law, &self.spec, &self.roles, &all)
        } else {
            self.reconstruct_q(law)
        }
    }

    fn closed_form_if(&self, law: &FusedLaw) -> Result<ObsFunction> {
        let q = self.reconstruct_q(law)?;
        let psi = self.ideal_if(&q)?;
        if self.full {
            Ok(generic_ub_full_if(law, &self.spec, &self.roles, &q, &psi)?.base)
        } else {
            generic_ub_if(law, &self.spec, &self.roles, &q, &psi)
        }
    }

    fn if_family(&self, law: &FusedLaw) -> Result<IfFamily> {
        let q = self.reconstruct_q(law)?;
        let psi = self.ideal_if(&q)?;
        if self.full {
            generic_ub_full_if(law, &self.spec, &self.roles, &q, &psi)
        } else {
            Ok(IfFamily {
                base: generic_ub_if(law, &self.spec, &self.roles, &q, &psi)?,
                directions: Vec::new(),
            })
        }
    }

    fn eif(&self, law: &FusedLaw) -> Result<ObsFunction> {
        if self.full {
            let q = self.reconstruct_q(law)?;
            let psi = self.ideal_if(&q)?;
            Ok(generic_ub_eif_discrete(law, &self.spec, &self.roles, &q, &psi)?.phi)
        } else {
            self.closed_form_if(law)
        }
    }
}
