//! Prevalence of a binary outcome `Y` measured through a proxy `V`: source 1 observes
//! `(X, V)` from the target population, source 2 observes `(X, Y, V)` with the law of `V`
//! given `(X, Y)` shared with the target.

use super::tables::{frames, ratio, require_levels01, to_obs};
use super::FusedFramework;
use crate::discrete::{AxisSet, PmfMode, RealTable};
use crate::error::{Error, Result};
use crate::model::{AlignmentSpec, CompiledSpec, FusedLaw, Region, SourceSpec};
use crate::{IdealFunction, ObsFunction, Pmf};

/// Smallest admissible `|E[V|Y=1,X] − E[V|Y=0,X]|`.
pub const MIN_INSTRUMENT_GAP: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Prevalence {
    x: Vec<String>,
    spec: CompiledSpec,
}

/// `E[V | X, Y=0]` and `E[V | X, Y=1]` per `X` cell.
struct ProxyMeans {
    e0: Vec<f64>,
    e1: Vec<f64>,
}

impl Prevalence {
    /// The ideal space must contain binary axes `V` and `Y` with levels `0, 1`; every other
    /// axis is a covariate.
    pub fn new(ideal: &AxisSet) -> Result<Self> {
        require_levels01(ideal, "V")?;
        require_levels01(ideal, "Y")?;
        let x: Vec<String> = ideal
            .names()
            .into_iter()
            .filter(|n| *n != "V" && *n != "Y")
            .map(String::from)
            .collect();
        let mut s1: Vec<&str> = x.iter().map(String::as_str).collect();
        s1.push("V");
        let mut s2: Vec<&str> = x.iter().map(String::as_str).collect();
        s2.push("Y");
        let spec = AlignmentSpec::new(vec![
            SourceSpec::new(vec![s1], vec![Region::Star]),
            SourceSpec::new(vec![s2, vec!["V"]], vec![Region::Empty, Region::All]),
        ])
        .compile(ideal)?;
        Ok(Prevalence { x, spec })
    }

    fn x_names(&self) -> Vec<&str> {
        self.x.iter().map(String::as_str).collect()
    }

    fn xy_names(&self) -> Vec<&str> {
        let mut n = self.x_names();
        n.push("Y");
        n
    }

    /// Proxy means from a law on a space containing `X`, `V` and `Y`.
    fn proxy_means(&self, p: &Pmf) -> Result<ProxyMeans> {
        let proj = p.space().projection(&self.xy_names())?;
        let den = proj.sum(p.mass());
        if let Some(c) = den.iter().position(|d| *d <= 0.0) {
            return Err(Error::Positivity(format!(
                "no mass at {}",
                proj.sub.cell_name(c)
            )));
        }
        let v = p.space().numeric_axis::<f64>("V")?;
        let e = proj.cond_mean(p.mass(), &v);
        let nx = e.len() / 2;
        let e0: Vec<f64> = (0..nx).map(|x| e[2 * x]).collect();
        let e1: Vec<f64> = (0..nx).map(|x| e[2 * x + 1]).collect();
        let xs = self.spec.ideal.sub(&self.x_names())?;
        for x in 0..nx {
            if (e1[x] - e0[x]).abs() < MIN_INSTRUMENT_GAP {
                return Err(Error::Degenerate(format!(
                    "E[V|Y=1,X] and E[V|Y=0,X] coincide at {}",
                    xs.cell_name(x)
                )));
            }
        }
        Ok(ProxyMeans { e0, e1 })
    }

    /// `m(x, v) = (v − e0(x)) / (e1(x) − e0(x))` at every cell of `space`, with `X` cells
    /// numbered as in the ideal space.
    fn m_on(&self, pm: &ProxyMeans, space: &AxisSet) -> Result<Vec<f64>> {
        let xmap = space.projection(&self.x_names())?.map;
        let v = space.numeric_axis::<f64>("V")?;
        Ok((0..space.len())
            .map(|c| {
                let x = xmap[c];
                (v[c] - pm.e0[x]) / (pm.e1[x] - pm.e0[x])
            })
            .collect())
    }

    /// The solution `m_Q(x, v)` of `E_Q[m | X, Y] = Y`, as a table over `(X, V)`.
    pub fn m_q(&self, q: &Pmf) -> Result<RealTable<f64>> {
        let pm = self.proxy_means(q)?;
        let mut names = self.x_names();
        names.push("V");
        let space = self.spec.ideal.sub(&names)?;
        let values = self.m_on(&pm, &space)?;
        RealTable::new(space, values)
    }

    /// `E_{P(.|S=1)}[m_{P(.|S=2)}(X, V)]`.
    pub fn phi_prevalence(&self, law: &FusedLaw) -> Result<f64> {
        let fr = frames(law, &self.spec)?;
        let pm = self.proxy_means(&fr[1].p)?;
        let m = self.m_on(&pm, fr[0].p.space())?;
        Ok(fr[0].p.expect(&m))
    }

    /// Observed influence function of a general ideal influence function `ψ¹`, written as
    /// `a + bV + cY + dVY` per covariate cell.
    pub fn if_general(&self, law: &FusedLaw, q: &Pmf, psi: &[f64]) -> Result<ObsFunction> {
        let fr = frames(law, &self.spec)?;
        let w = &self.spec.ideal;
        let pm = self.proxy_means(&fr[1].p)?;
        let xproj = w.projection(&self.x_names())?;
        let v_idx = w.projection(&["V"])?.map;
        let y_idx = w.projection(&["Y"])?.map;
        let nx = xproj.sub.len();
        let mut vals = vec![[[0.0; 2]; 2]; nx];
        for c in 0..w.len() {
            vals[xproj.map[c]][v_idx[c]][y_idx[c]] = psi[c];
        }
        let coef = |x: usize| {
            let t = &vals[x];
            let a = t[0][0];
            (a, t[1][0] - a, t[0][1] - a, t[1][1] - t[1][0] - t[0][1] + a)
        };
        let (l1, l2) = (law.lambda[0], law.lambda[1]);
        let s1_space = fr[0].p.space();
        let s1_x = s1_space.projection(&self.x_names())?.map;
        let s1_v = s1_space.numeric_axis::<f64>("V")?;
        let s1_m = self.m_on(&pm, s1_space)?;
        let part1: Vec<f64> = (0..s1_space.len())
            .map(|c| {
                let x = s1_x[c];
                let (a, b, cc, d) = coef(x);
                (a + b * s1_v[c] + cc * s1_m[c] + d * s1_m[c] * pm.e1[x]) / l1
            })
            .collect();
        let xy = w.projection(&self.xy_names())?;
        let qxy = xy.lift(&xy.sum(q.mass()));
        let s2 = &fr[1].p;
        let pxy = xy.lift(&xy.sum(s2.mass()));
        let m_w = self.m_on(&pm, w)?;
        let v = w.numeric_axis::<f64>("V")?;
        let y = w.numeric_axis::<f64>("Y")?;
        let part2: Vec<f64> = (0..w.len())
            .map(|c| {
                let x = xproj.map[c];
                let (_, _, cc, d) = coef(x);
                ratio(qxy[c], pxy[c]) / l2
                    * (cc * (y[c] - m_w[c]) + d * (v[c] * y[c] - m_w[c] * pm.e1[x]))
            })
            .collect();
        Ok(to_obs(&fr, &[part1, part2]))
    }
}

impl FusedFramework for Prevalence {
    fn spec(&self) -> &CompiledSpec {
        &self.spec
    }

    fn psi(&self, q: &Pmf) -> Result<f64> {
        Ok(q.expect(&q.space().numeric_axis::<f64>("Y")?))
    }

    fn ideal_if(&self, q: &Pmf) -> Result<IdealFunction> {
        let psi = self.psi(q)?;
        Ok(q.space()
            .numeric_axis::<f64>("Y")?
            .into_iter()
            .map(|y| y - psi)
            .collect())
    }

    fn phi(&self, law: &FusedLaw) -> Result<f64> {
        self.phi_prevalence(law)
    }

    /// `q(x) = P(x|S=1)`, `Q(Y=1|x) = E_{P(.|S=1)}[m | x]`, `Q(v|x,y) = P(v|x,y,S=2)`.
    fn reconstruct_q(&self, law: &FusedLaw) -> Result<Pmf> {
        let fr = frames(law, &self.spec)?;
        let w = &self.spec.ideal;
        let pm = self.proxy_means(&fr[1].p)?;
        let p1 = &fr[0].p;
        let m1 = self.m_on(&pm, p1.space())?;
        let x1 = p1.space().projection(&self.x_names())?;
        let qx = x1.sum(p1.mass());
        let py1 = x1.cond_mean(p1.mass(), &m1);
        let xs = &x1.sub;
        for (x, p) in py1.iter().enumerate() {
            if qx[x] > 0.0 && !(-1e-12..=1.0 + 1e-12).contains(p) {
                return Err(Error::Positivity(format!(
                    "the implied Q(Y=1 | {}) = {p} lies outside [0, 1]",
                    xs.cell_name(x)
                )));
            }
        }
        let p2 = &fr[1].p;
        let xy = w.projection(&self.xy_names())?;
        let den = xy.lift(&xy.sum(p2.mass()));
        let xproj = w.projection(&self.x_names())?;
        let y = w.numeric_axis::<f64>("Y")?;
        let mass: Vec<f64> = (0..w.len())
            .map(|c| {
                let x = xproj.map[c];
                let py = py1[x].clamp(0.0, 1.0);
                let qy = if y[c] > 0.5 { py } else { 1.0 - py };
                qx[x] * qy * ratio(p2.mass()[c], den[c])
            })
            .collect();
        let mode = if mass.iter().all(|&m| m > 0.0) {
            PmfMode::Strict
        } else {
            PmfMode::Relaxed
        };
        Pmf::from_weights(w.clone(), mass, mode)
    }

    fn closed_form_if(&self, law: &FusedLaw) -> Result<ObsFunction> {
        let q = self.reconstruct_q(law)?;
        let psi = self.ideal_if(&q)?;
        self.if_general(law, &q, &psi)
    }
}
