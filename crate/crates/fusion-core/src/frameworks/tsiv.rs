//! Two-sample instrumental variables: source 1 observes `(L, Y)`, source 2 observes
//! `(L, X)`, both sharing their conditional law given the instrument `L` with the ideal law.
//! The target is the slope `φ` of `E[Y|L] = τ + φ E[X|L]`.

use nalgebra::{DMatrix, Matrix2, Vector2};

use super::tables::{frames, ratio, to_obs, SourceFrame};
use super::FusedFramework;
use crate::discrete::linalg::{null_space, singular_values};
use crate::discrete::{AxisSet, PmfMode};
use crate::error::{Error, Result};
use crate::model::{AlignmentSpec, CompiledSpec, FusedLaw, Region, SourceSpec};
use crate::{IdealFunction, ObsFunction, Pmf};

/// Largest admissible condition number of `B(t)`.
pub const MAX_CONDITION: f64 = 1e8;

/// Smallest admissible weighted variance of `E[X|L]` across instrument levels.
pub const MIN_INSTRUMENT_VARIANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Tsiv {
    spec: CompiledSpec,
}

/// Solution of the weighted moment fit and the per-instrument quantities it uses.
#[derive(Clone, Debug, PartialEq)]
pub struct TsivFit {
    pub tau: f64,
    pub phi: f64,
    /// Weighted root-mean-square residual of `E[Y|l] − τ − φ E[X|l]`.
    pub residual: f64,
    /// `E[Y | l, S=1]`.
    pub m_y: Vec<f64>,
    /// `E[X | l, S=2]`.
    pub m_x: Vec<f64>,
    /// `P(l | S=1)` and `P(l | S=2)`.
    pub p1_l: Vec<f64>,
    pub p2_l: Vec<f64>,
}

/// Weighted least squares of `m_y` on `(1, m_x)` with weights `w`.
fn wls(w: &[f64], m_x: &[f64], m_y: &[f64]) -> Result<(f64, f64, f64)> {
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(m_x).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = w.iter().zip(m_y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let vx = w.iter().zip(m_x).map(|(a, b)| a * (b - mx).powi(2)).sum::<f64>() / sw;
    if vx < MIN_INSTRUMENT_VARIANCE {
        return Err(Error::Degenerate(
            "E[X | L] does not vary with the instrument".into(),
        ));
    }
    let cxy = w
        .iter()
        .zip(m_x.iter().zip(m_y))
        .map(|(a, (x, y))| a * (x - mx) * (y - my))
        .sum::<f64>()
        / sw;
    let phi = cxy / vx;
    let tau = my - phi * mx;
    let rss = w
        .iter()
        .zip(m_x.iter().zip(m_y))
        .map(|(a, (x, y))| a * (y - tau - phi * x).powi(2))
        .sum::<f64>()
        / sw;
    Ok((tau, phi, rss.sqrt()))
}

/// `E[value | L]` and `P(L)` of a source frame.
fn instrument_means(fr: &SourceFrame, value: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let space = fr.p.space();
    let proj = space.projection(&["L"])?;
    let v = space.numeric_axis::<f64>(value)?;
    Ok((proj.cond_mean(fr.p.mass(), &v), proj.sum(fr.p.mass())))
}

fn invert(b: Matrix2<f64>) -> Result<Matrix2<f64>> {
    let sv = singular_values(&DMatrix::from_iterator(2, 2, b.iter().copied()));
    let cond = if sv[1] > 0.0 { sv[0] / sv[1] } else { f64::INFINITY };
    if cond > MAX_CONDITION {
        return Err(Error::Singular(format!("B(t) has condition number {cond:.3e}")));
    }
    b.try_inverse()
        .ok_or_else(|| Error::Singular("B(t) is not invertible".into()))
}

impl Tsiv {
    /// The ideal space must consist of the numeric axes `L`, `X` and `Y`.
    pub fn new(ideal: &AxisSet) -> Result<Self> {
        let mut names = ideal.names();
        names.sort();
        if names != ["L", "X", "Y"] {
            return Err(Error::InvalidSpec(
                "the instrumental-variables framework needs exactly the axes L, X and Y".into(),
            ));
        }
        for a in ["L", "X", "Y"] {
            ideal.axis(a)?.numeric_levels()?;
        }
        let spec = AlignmentSpec::new(vec![
            SourceSpec::new(vec![vec!["L"], vec!["Y"]], vec![Region::Empty, Region::All]),
            SourceSpec::new(vec![vec!["L"], vec!["X"]], vec![Region::Empty, Region::All]),
        ])
        .compile(ideal)?;
        Ok(Tsiv { spec })
    }

    fn num_instruments(&self) -> usize {
        self.spec.ideal.axis("L").map(|a| a.len()).unwrap_or(0)
    }

    /// Weighted least-squares solution of the moment equation with weights `P(l|S=1)`.
    pub fn tsiv_solve(&self, law: &FusedLaw) -> Result<TsivFit> {
        let fr = frames(law, &self.spec)?;
        let (m_y, p1_l) = instrument_means(&fr[0], "Y")?;
        let (m_x, p2_l) = instrument_means(&fr[1], "X")?;
        if let Some(l) = (0..p1_l.len()).find(|&l| p1_l[l] > 0.0 && p2_l[l] <= 0.0) {
            return Err(Error::Positivity(format!(
                "instrument level {l} is missing from source 2"
            )));
        }
        let (tau, phi, residual) = wls(&p1_l, &m_x, &m_y)?;
        Ok(TsivFit {
            tau,
            phi,
            residual,
            m_y,
            m_x,
            p1_l,
            p2_l,
        })
    }

    /// `ε_P` on the observed cells, per source frame.
    fn epsilon(&self, law: &FusedLaw, fit: &TsivFit, fr: &[SourceFrame]) -> Result<[Vec<f64>; 2]> {
        let (l1, l2) = (law.lambda[0], law.lambda[1]);
        let s1 = fr[0].p.space();
        let l_1 = s1.projection(&["L"])?.map;
        let y = s1.numeric_axis::<f64>("Y")?;
        let e1 = (0..s1.len())
            .map(|c| {
                let l = l_1[c];
                ratio(fit.p2_l[l], fit.p1_l[l]) * (y[c] - fit.m_y[l]) / l1
            })
            .collect();
        let s2 = fr[1].p.space();
        let l_2 = s2.projection(&["L"])?.map;
        let x = s2.numeric_axis::<f64>("X")?;
        let e2 = (0..s2.len())
            .map(|c| (fit.m_y[l_2[c]] - fit.tau - fit.phi * x[c]) / l2)
            .collect();
        Ok([e1, e2])
    }

    /// `ν(o) = B(t)^{-1} t(l) ε_P(o)` with `B(t) = E_{P(.|S=2)}[t(L) (1, X)']`; both
    /// components (intercept, slope).
    pub fn tsiv_if(&self, law: &FusedLaw, t: &[[f64; 2]]) -> Result<[ObsFunction; 2]> {
        let fit = self.tsiv_solve(law)?;
        self.if_at(law, &fit, t)
    }

    fn if_at(&self, law: &FusedLaw, fit: &TsivFit, t: &[[f64; 2]]) -> Result<[ObsFunction; 2]> {
        let nl = fit.p2_l.len();
        if t.len() != nl {
            return Err(Error::ShapeMismatch {
                expected: nl,
                found: t.len(),
            });
        }
        let mut b = Matrix2::zeros();
        for (l, tl) in t.iter().enumerate() {
            for i in 0..2 {
                b[(i, 0)] += fit.p2_l[l] * tl[i];
                b[(i, 1)] += fit.p2_l[l] * tl[i] * fit.m_x[l];
            }
        }
        let binv = invert(b)?;
        let fr = frames(law, &self.spec)?;
        let eps = self.epsilon(law, fit, &fr)?;
        let mut out: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
        for (j, e) in eps.iter().enumerate() {
            let lmap = fr[j].p.space().projection(&["L"])?.map;
            let mut comp = [vec![0.0; e.len()], vec![0.0; e.len()]];
            for c in 0..e.len() {
                let l = lmap[c];
                let v = binv * Vector2::new(t[l][0], t[l][1]) * e[c];
                comp[0][c] = v[0];
                comp[1][c] = v[1];
            }
            out[0].push(comp[0].clone());
            out[1].push(comp[1].clone());
        }
        Ok([to_obs(&fr, &out[0]), to_obs(&fr, &out[1])])
    }

    /// The efficient index `t_eff(l) = σ^{-2}(l) E_P[U | l]` with
    /// `U = I(S=2)/P(S=2) (1, X)'` and `σ²(l) = E_P[ε_P² | l]`.
    pub fn efficient_index(&self, law: &FusedLaw) -> Result<Vec<[f64; 2]>> {
        let fit = self.tsiv_solve(law)?;
        self.efficient_index_at(law, &fit)
    }

    fn efficient_index_at(&self, law: &FusedLaw, fit: &TsivFit) -> Result<Vec<[f64; 2]>> {
        let fr = frames(law, &self.spec)?;
        let eps = self.epsilon(law, fit, &fr)?;
        let (l1, l2) = (law.lambda[0], law.lambda[1]);
        let nl = fit.p1_l.len();
        let mut t = Vec::with_capacity(nl);
        let mut second = [vec![0.0; nl], vec![0.0; nl]];
        for (j, e) in eps.iter().enumerate() {
            let proj = fr[j].p.space().projection(&["L"])?;
            let sq: Vec<f64> = e.iter().map(|v| v * v).collect();
            second[j] = proj.cond_mean(fr[j].p.mass(), &sq);
        }
        for (l, (s1, s2)) in second[0].iter().zip(&second[1]).enumerate() {
            let (a, b) = (l1 * fit.p1_l[l], l2 * fit.p2_l[l]);
            let pl = a + b;
            if pl <= 0.0 {
                t.push([0.0, 0.0]);
                continue;
            }
            let sigma2 = (a * s1 + b * s2) / pl;
            if sigma2 <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "zero conditional variance at instrument level {l}"
                )));
            }
            let s2 = b / pl / l2;
            t.push([s2 / sigma2, s2 * fit.m_x[l] / sigma2]);
        }
        Ok(t)
    }

    /// Efficient influence function of the slope.
    pub fn tsiv_eif(&self, law: &FusedLaw) -> Result<ObsFunction> {
        let fit = self.tsiv_solve(law)?;
        let t = self.efficient_index_at(law, &fit)?;
        let [_, slope] = self.if_at(law, &fit, &t)?;
        Ok(slope)
    }

    /// `E_Q[Y|l]`, `E_Q[X|l]` and `q(l)`.
    fn ideal_means(&self, q: &Pmf) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let w = q.space();
        let proj = w.projection(&["L"])?;
        let y = w.numeric_axis::<f64>("Y")?;
        let x = w.numeric_axis::<f64>("X")?;
        Ok((
            proj.cond_mean(q.mass(), &y),
            proj.cond_mean(q.mass(), &x),
            proj.sum(q.mass()),
        ))
    }

    /// `(α, ψ)` of the ideal law.
    pub fn ideal_params(&self, q: &Pmf) -> Result<(f64, f64)> {
        let (my, mx, ql) = self.ideal_means(q)?;
        let (a, p, _) = wls(&ql, &mx, &my)?;
        Ok((a, p))
    }

    /// The default ideal index `g(l) = (1, E_Q[X|l])`.
    pub fn default_index(&self, q: &Pmf) -> Result<Vec<[f64; 2]>> {
        let (_, mx, _) = self.ideal_means(q)?;
        Ok(mx.iter().map(|m| [1.0, *m]).collect())
    }

    /// Slope component of `B_Q(g)^{-1} g(l) (y − α − ψ x)`.
    pub fn ideal_if_with(&self, q: &Pmf, g: &[[f64; 2]]) -> Result<IdealFunction> {
        let (alpha, psi) = self.ideal_params(q)?;
        let w = q.space();
        let lmap = w.projection(&["L"])?.map;
        let y = w.numeric_axis::<f64>("Y")?;
        let x = w.numeric_axis::<f64>("X")?;
        let mut b = Matrix2::zeros();
        for c in 0..w.len() {
            let gl = g[lmap[c]];
            for i in 0..2 {
                b[(i, 0)] += q.mass()[c] * gl[i];
                b[(i, 1)] += q.mass()[c] * gl[i] * x[c];
            }
        }
        let binv = invert(b)?;
        Ok((0..w.len())
            .map(|c| {
                let gl = g[lmap[c]];
                let v = binv * Vector2::new(gl[0], gl[1]);
                v[1] * (y[c] - alpha - psi * x[c])
            })
            .collect())
    }

    /// `t_{g,q}(l) = g(l) q(l) / P(l | S=2)`.
    pub fn index_for_ideal(&self, law: &FusedLaw, q: &Pmf, g: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
        let fit = self.tsiv_solve(law)?;
        let (_, _, ql) = self.ideal_means(q)?;
        Ok((0..ql.len())
            .map(|l| {
                let r = ratio(ql[l], fit.p2_l[l]);
                [g[l][0] * r, g[l][1] * r]
            })
            .collect())
    }
}

impl FusedFramework for Tsiv {
    fn spec(&self) -> &CompiledSpec {
        &self.spec
    }

    fn psi(&self, q: &Pmf) -> Result<f64> {
        Ok(self.ideal_params(q)?.1)
    }

    fn ideal_if(&self, q: &Pmf) -> Result<IdealFunction> {
        let g = self.default_index(q)?;
        self.ideal_if_with(q, &g)
    }

    fn phi(&self, law: &FusedLaw) -> Result<f64> {
        Ok(self.tsiv_solve(law)?.phi)
    }

    /// The representative `q(l) = P(l|S=1)`, `q(x, y | l) = P(x|l,S=2) P(y|l,S=1)`.
    fn reconstruct_q(&self, law: &FusedLaw) -> Result<Pmf> {
        let fr = frames(law, &self.spec)?;
        let w = &self.spec.ideal;
        let lx = w.projection(&["L", "X"])?.map;
        let ly = w.projection(&["L", "Y"])?.map;
        let l = w.projection(&["L"])?.map;
        let p1 = fr[0].p.marginal(&["L", "Y"])?;
        let p2 = fr[1].p.marginal(&["L", "X"])?;
        let p1l = p1.space().projection(&["L"])?.sum(p1.mass());
        let p2l = p2.space().projection(&["L"])?.sum(p2.mass());
        let mass: Vec<f64> = (0..w.len())
            .map(|c| {
                let li = l[c];
                let py = ratio(p1.mass()[ly[c]], p1l[li]);
                let px = ratio(p2.mass()[lx[c]], p2l[li]);
                p1l[li] * py * px
            })
            .collect();
        let mode = if mass.iter().all(|&m| m > 0.0) {
            PmfMode::Strict
        } else {
            PmfMode::Relaxed
        };
        Pmf::from_weights(w.clone(), mass, mode)
    }

    /// The representative with `P(y|l,S=1)` replaced by the linear tilt
    /// `p(y|l)(1 + c_l (y − m_Y(l)))` whose mean is the fitted `τ + φ m_X(l)`, so that the
    /// moment equation holds exactly.
    fn reconstruct_q_obedient(&self, law: &FusedLaw) -> Result<Pmf> {
        let fit = self.tsiv_solve(law)?;
        let q = self.reconstruct_q(law)?;
        let w = q.space();
        let lp = w.projection(&["L"])?;
        let y = w.numeric_axis::<f64>("Y")?;
        let my = lp.cond_mean(q.mass(), &y);
        let dev: Vec<f64> = (0..w.len()).map(|c| (y[c] - my[lp.map[c]]).powi(2)).collect();
        let vy = lp.cond_mean(q.mass(), &dev);
        let mut mass = q.mass().to_vec();
        for (c, m) in mass.iter_mut().enumerate() {
            let l = lp.map[c];
            let shift = fit.tau + fit.phi * fit.m_x[l] - my[l];
            if shift == 0.0 {
                continue;
            }
            if vy[l] <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "Y is constant at instrument level {l}; the moment equation cannot be met"
                )));
            }
            let factor = 1.0 + shift / vy[l] * (y[c] - my[l]);
            if factor < 0.0 {
                return Err(Error::Positivity(format!(
                    "no positive tilt meets the moment equation at instrument level {l}"
                )));
            }
            *m *= factor;
        }
        let mode = if mass.iter().all(|&m| m > 0.0) {
            PmfMode::Strict
        } else {
            PmfMode::Relaxed
        };
        Pmf::from_weights(w.clone(), mass, mode)
    }

    /// `tsiv_if` at `t_{g,q}` for the default ideal index of the representative ideal law.
    fn closed_form_if(&self, law: &FusedLaw) -> Result<ObsFunction> {
        let q = self.reconstruct_q(law)?;
        let g = self.default_index(&q)?;
        let t = self.index_for_ideal(law, &q, &g)?;
        let [_, slope] = self.tsiv_if(law, &t)?;
        Ok(slope)
    }

    fn eif(&self, law: &FusedLaw) -> Result<ObsFunction> {
        self.tsiv_eif(law)
    }

    /// With three or more instrument levels the moment equation restricts `Q`; the tangent
    /// space is `{h : E_Q[h] = 0, E_Q[ε h | L] ∈ span(1, E_Q[X|L])}` with
    /// `ε = Y − α − ψ X`.
    fn tangent_basis(&self, q: &Pmf) -> Result<Option<Vec<IdealFunction>>> {
        let nl = self.num_instruments();
        if nl < 3 {
            return Ok(None);
        }
        let (alpha, psi) = self.ideal_params(q)?;
        let (_, mx, ql) = self.ideal_means(q)?;
        let w = q.space();
        let lmap = w.projection(&["L"])?.map;
        let y = w.numeric_axis::<f64>("Y")?;
        let x = w.numeric_axis::<f64>("X")?;
        let n = w.len();
        let mut c = DMatrix::zeros(nl, n);
        for cell in 0..n {
            let l = lmap[cell];
            c[(l, cell)] = ratio(q.mass()[cell], ql[l]) * (y[cell] - alpha - psi * x[cell]);
        }
        let span = DMatrix::from_fn(nl, 2, |l, k| if k == 0 { 1.0 } else { mx[l] });
        let basis = crate::discrete::linalg::column_space(&span);
        let perp = DMatrix::identity(nl, nl) - &basis * basis.transpose();
        let mut rows = perp * c;
        rows = rows.insert_row(nl, 0.0);
        for cell in 0..n {
            rows[(nl, cell)] = q.mass()[cell];
        }
        let ns = null_space(&rows);
        Ok(Some(
            (0..ns.ncols())
                .map(|k| ns.column(k).iter().copied().collect())
                .collect(),
        ))
    }
}
