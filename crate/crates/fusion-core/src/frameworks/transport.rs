//! Transporting an average treatment effect from a trial (source 1, observing `(L, A, Y)`)
//! to a target population (source 2), under four alignment scenarios:
//!
//! - `I`: `Y | L, A` aligned in source 1; the covariate law of the target is observed.
//! - `Ii`: source 2 observes `(Y, L, A)` and shares `(L, A) | Y=1` (cases only).
//! - `IiiA`: as `Ii` but `(L, A) | Y` is shared for both outcome levels.
//! - `IiiB`: `(L, A) | Y` shared everywhere, and `Y | L, A` shared only at `(l0, A=0)`.

use serde::{Deserialize, Serialize};

use super::tables::{frames, ratio, require_levels01, to_obs};
use super::ub::{
    generic_ub_eif_discrete, generic_ub_full_if, generic_ub_if, reconstruct_ub,
    reconstruct_ub_average, UbRoles,
};
use super::FusedFramework;
use crate::discrete::{AxisSet, PmfMode};
use crate::error::{Error, Result};
use crate::influence::IfFamily;
use crate::model::{AlignmentSpec, CompiledSpec, FusedLaw, Region, SourceSpec};
use crate::{IdealFunction, ObsFunction, Pmf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    I,
    Ii,
    IiiA,
    IiiB,
}

#[derive(Clone, Debug)]
pub struct Transport {
    scenario: Scenario,
    l: Vec<String>,
    l0: Vec<String>,
    spec: CompiledSpec,
}

/// Outcome regressions of a law over `(L.., A, Y)`: cells are numbered `(l, a)` → `2l + a`.
struct Arms {
    /// `P(L=l, A=a)`.
    pla: Vec<f64>,
    /// `P(Y=1 | L=l, A=a)`.
    mu: Vec<f64>,
}

impl Arms {
    fn of(mass: &[f64]) -> Arms {
        let n = mass.len() / 2;
        let pla: Vec<f64> = (0..n).map(|c| mass[2 * c] + mass[2 * c + 1]).collect();
        let mu = (0..n).map(|c| ratio(mass[2 * c + 1], pla[c])).collect();
        Arms { pla, mu }
    }

    fn nl(&self) -> usize {
        self.pla.len() / 2
    }

    fn cate(&self, l: usize) -> f64 {
        self.mu[2 * l + 1] - self.mu[2 * l]
    }
}

impl Transport {
    /// The ideal space must end with binary axes `A` and `Y` (levels `0, 1`); the preceding
    /// axes are the covariates `L`. `l0` selects the anchor covariate level for `IiiB` and
    /// defaults to the first level of every covariate.
    pub fn new(ideal: &AxisSet, scenario: Scenario, l0: Option<&[String]>) -> Result<Self> {
        require_levels01(ideal, "A")?;
        require_levels01(ideal, "Y")?;
        let names = ideal.names();
        let n = names.len();
        if n < 3 || names[n - 2] != "A" || names[n - 1] != "Y" {
            return Err(Error::InvalidSpec(
                "transport needs covariate axes followed by `A` and `Y`".into(),
            ));
        }
        let l: Vec<String> = names[..n - 2].iter().map(|s| s.to_string()).collect();
        let l0: Vec<String> = match l0 {
            Some(v) => v.to_vec(),
            None => l
                .iter()
                .map(|a| ideal.axis(a).map(|x| x.levels[0].clone()))
                .collect::<Result<_>>()?,
        };
        ideal.sub(&l)?.index_of_labels(&l0)?;
        let la: Vec<&str> = l.iter().map(String::as_str).chain(["A"]).collect();
        let lv: Vec<&str> = l.iter().map(String::as_str).collect();
        let one = vec![vec!["1".to_string()]];
        let mut anchor: Vec<String> = l0.clone();
        anchor.push("0".into());
        let s1_full = SourceSpec::new(vec![la.clone(), vec!["Y"]], vec![Region::Empty, Region::All]);
        let s2_cc = |r: Region| SourceSpec::new(vec![vec!["Y"], la.clone()], vec![Region::Empty, r]);
        let sources = match scenario {
            Scenario::I => vec![s1_full, SourceSpec::new(vec![lv], vec![Region::Star])],
            Scenario::Ii => vec![s1_full, s2_cc(Region::Tuples(one))],
            Scenario::IiiA => vec![s1_full, s2_cc(Region::All)],
            Scenario::IiiB => vec![
                SourceSpec::new(
                    vec![la.clone(), vec!["Y"]],
                    vec![Region::Empty, Region::Tuples(vec![anchor])],
                ),
                s2_cc(Region::All),
            ],
        };
        let spec = AlignmentSpec::new(sources).compile(ideal)?;
        Ok(Transport {
            scenario,
            l,
            l0,
            spec,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// Roles of `U` and `B` for the case-control scenarios.
    pub fn roles(&self) -> Option<UbRoles> {
        let la: Vec<String> = self.l.iter().cloned().chain(["A".to_string()]).collect();
        match self.scenario {
            Scenario::I => None,
            Scenario::Ii | Scenario::IiiA => Some(UbRoles {
                u: vec!["Y".into()],
                b: la,
                full_source: 0,
                anchor_source: 1,
                u0: vec!["1".into()],
            }),
            Scenario::IiiB => {
                let mut u0 = self.l0.clone();
                u0.push("0".into());
                Some(UbRoles {
                    u: la,
                    b: vec!["Y".into()],
                    full_source: 1,
                    anchor_source: 0,
                    u0,
                })
            }
        }
    }

    fn l0_index(&self) -> Result<usize> {
        self.spec.ideal.sub(&self.l)?.index_of_labels(&self.l0)
    }

    /// The scenario's identification formula.
    pub fn ate_transport_phi(&self, law: &FusedLaw) -> Result<f64> {
        let fr = frames(law, &self.spec)?;
        let arms = Arms::of(fr[0].p.mass());
        let nl = arms.nl();
        match self.scenario {
            Scenario::I => {
                let p2l = fr[1].p.mass();
                for c in 0..2 * nl {
                    if p2l[c / 2] > 0.0 && arms.pla[c] <= 0.0 {
                        return Err(Error::Positivity(
                            "a target covariate level is missing a trial arm".into(),
                        ));
                    }
                }
                Ok((0..nl).map(|l| p2l[l] * arms.cate(l)).sum())
            }
            Scenario::Ii | Scenario::IiiA => {
                let p2 = fr[1].p.mass();
                let mut w = vec![0.0; nl];
                for c in 0..2 * nl {
                    if p2[2 * c + 1] > 0.0 && arms.mu[c] <= 0.0 {
                        return Err(Error::Positivity(
                            "P(Y=1 | l, a, S=1) vanishes where cases are observed".into(),
                        ));
                    }
                    w[c / 2] += ratio(p2[2 * c + 1], arms.mu[c]);
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Positivity("no cases in source 2".into()));
                }
                Ok((0..nl).map(|l| w[l] / total * arms.cate(l)).sum())
            }
            Scenario::IiiB => {
                let p2 = fr[1].p.mass();
                let py = [
                    (0..2 * nl).map(|c| p2[2 * c]).sum::<f64>(),
                    (0..2 * nl).map(|c| p2[2 * c + 1]).sum::<f64>(),
                ];
                if py[0] <= 0.0 || py[1] <= 0.0 {
                    return Err(Error::Positivity("source 2 lacks an outcome level".into()));
                }
                let cond = |c: usize, y: usize| p2[2 * c + y] / py[y];
                let u0 = 2 * self.l0_index()?;
                let mu0 = arms.mu[u0];
                if mu0 <= 0.0 || mu0 >= 1.0 || cond(u0, 0) <= 0.0 || cond(u0, 1) <= 0.0 {
                    return Err(Error::Positivity("the anchor cell (l0, A=0) is degenerate".into()));
                }
                let alpha = 1.0 / (1.0 + (cond(u0, 1) / mu0) / (cond(u0, 0) / (1.0 - mu0)));
                let mut phi = 0.0;
                for l in 0..nl {
                    let pl1 = cond(2 * l, 1) + cond(2 * l + 1, 1);
                    let pl0 = cond(2 * l, 0) + cond(2 * l + 1, 0);
                    let ql = pl1 * alpha + pl0 * (1.0 - alpha);
                    for a in 0..2 {
                        let c = 2 * l + a;
                        let omega = ratio(
                            cond(c, 1),
                            cond(c, 1) * alpha + cond(c, 0) * (1.0 - alpha),
                        );
                        let sign = if a == 1 { 1.0 } else { -1.0 };
                        phi += sign * omega * ql;
                    }
                }
                Ok(alpha * phi)
            }
        }
    }

    /// Closed-form influence function of scenario `I`.
    fn if_i(&self, law: &FusedLaw) -> Result<ObsFunction> {
        let fr = frames(law, &self.spec)?;
        let p1 = fr[0].p.mass();
        let arms = Arms::of(p1);
        let nl = arms.nl();
        let phi = self.ate_transport_phi(law)?;
        let p2l = fr[1].p.mass();
        let (l1, l2) = (law.lambda[0], law.lambda[1]);
        let part1: Vec<f64> = (0..p1.len())
            .map(|w| {
                let (c, y) = (w / 2, (w % 2) as f64);
                let (l, a) = (c / 2, c % 2);
                let p1l = arms.pla[2 * l] + arms.pla[2 * l + 1];
                let p1al = ratio(arms.pla[c], p1l);
                let sign = if a == 1 { 1.0 } else { -1.0 };
                ratio(p2l[l], p1l) * sign * ratio(1.0, p1al) * (y - arms.mu[c]) / l1
            })
            .collect();
        let part2: Vec<f64> = (0..nl).map(|l| (arms.cate(l) - phi) / l2).collect();
        Ok(to_obs(&fr, &[part1, part2]))
    }

    /// Closed-form influence function of scenario `Ii`.
    fn if_ii(&self, law: &FusedLaw) -> Result<ObsFunction> {
        let fr = frames(law, &self.spec)?;
        let q = self.reconstruct_q(law)?;
        let qa = Arms::of(q.mass());
        let nl = qa.nl();
        let psi = self.psi(&q)?;
        let p1 = Arms::of(fr[0].p.mass());
        let p2 = fr[1].p.mass();
        let q_y1: f64 = (0..2 * nl).map(|c| q.mass()[2 * c + 1]).sum();
        let p2_y1: f64 = (0..2 * nl).map(|c| p2[2 * c + 1]).sum();
        let (l1, l2) = (law.lambda[0], law.lambda[1]);
        let mut part1 = vec![0.0; 4 * nl];
        let mut part2 = vec![0.0; 4 * nl];
        for (w, (v1, v2)) in part1.iter_mut().zip(part2.iter_mut()).enumerate() {
            let (c, y) = (w / 2, (w % 2) as f64);
            let (l, a) = (c / 2, c % 2);
            let mu = qa.mu[c];
            let ql = qa.pla[2 * l] + qa.pla[2 * l + 1];
            let qal = ratio(qa.pla[c], ql);
            let sign = if a == 1 { 1.0 } else { -1.0 };
            let centered = qa.cate(l) - psi;
            *v1 = ratio(qa.pla[c], p1.pla[c]) * (y - mu) / mu
                * (sign * mu / qal - centered)
                / l1;
            *v2 = q_y1 / p2_y1 * y / mu * centered / l2;
        }
        Ok(to_obs(&fr, &[part1, part2]))
    }
}

/// `E_Q[μ1(L) − μ0(L)]` for a law over `(L.., A, Y)`.
pub fn ate(q: &Pmf) -> f64 {
    let arms = Arms::of(q.mass());
    (0..arms.nl())
        .map(|l| (arms.pla[2 * l] + arms.pla[2 * l + 1]) * arms.cate(l))
        .sum()
}

/// `CATE(l) − ψ + (2a − 1)/q(a|l) · (y − μ_a(l))`.
pub fn aipw_ideal_if(q: &Pmf) -> Result<IdealFunction> {
    let arms = Arms::of(q.mass());
    let psi = ate(q);
    let mut out = vec![0.0; q.mass().len()];
    for (w, o) in out.iter_mut().enumerate() {
        let (c, y) = (w / 2, (w % 2) as f64);
        let (l, a) = (c / 2, c % 2);
        let ql = arms.pla[2 * l] + arms.pla[2 * l + 1];
        if ql <= 0.0 {
            continue;
        }
        let qal = arms.pla[c] / ql;
        if qal <= 0.0 || qal >= 1.0 {
            return Err(Error::Positivity(format!(
                "q(A | l) is degenerate at {}",
                q.space().cell_name(w)
            )));
        }
        let sign = if a == 1 { 1.0 } else { -1.0 };
        *o = arms.cate(l) - psi + sign / qal * (y - arms.mu[c]);
    }
    Ok(out)
}

impl FusedFramework for Transport {
    fn spec(&self) -> &CompiledSpec {
        &self.spec
    }

    fn psi(&self, q: &Pmf) -> Result<f64> {
        Ok(ate(q))
    }

    fn ideal_if(&self, q: &Pmf) -> Result<IdealFunction> {
        aipw_ideal_if(q)
    }

    fn phi(&self, law: &FusedLaw) -> Result<f64> {
        self.ate_transport_phi(law)
    }

    /// Scenario `I` has no unique ideal law; the representative
    /// `P(l|S=2) P(a|l,S=1) P(y|l,a,S=1)` is returned.
    fn reconstruct_q(&self, law: &FusedLaw) -> Result<Pmf> {
        match self.roles() {
            Some(r) => reconstruct_ub(law, &self.spec, &r),
            None => {
                let fr = frames(law, &self.spec)?;
                let p1 = fr[0].p.mass();
                let p2l = fr[1].p.mass();
                let arms = Arms::of(p1);
                let mass: Vec<f64> = (0..p1.len())
                    .map(|w| {
                        let c = w / 2;
                        let l = c / 2;
                        let p1l = arms.pla[2 * l] + arms.pla[2 * l + 1];
                        p2l[l] * ratio(p1[w], p1l)
                    })
                    .collect();
                let mode = if mass.iter().all(|&m| m > 0.0) {
                    PmfMode::Strict
                } else {
                    PmfMode::Relaxed
                };
                Pmf::from_weights(self.spec.ideal.clone(), mass, mode)
            }
        }
    }

    fn reconstruct_q_obedient(&self, law: &FusedLaw) -> Result<Pmf> {
        match (self.scenario, self.roles()) {
            (Scenario::IiiA, Some(r)) => reconstruct_ub_average(law, &self.spec, &r, &[0, 1]),
            _ => self.reconstruct_q(law),
        }
    }

    fn closed_form_if(&self, law: &FusedLaw) -> Result<ObsFunction> {
        match self.scenario {
            Scenario::I => self.if_i(law),
            Scenario::Ii => self.if_ii(law),
            Scenario::IiiA => Ok(self.if_family(law)?.base),
            Scenario::IiiB => {
                let q = self.reconstruct_q(law)?;
                let psi = aipw_ideal_if(&q)?;
                let roles = self.roles().expect("case-control scenario");
                generic_ub_if(law, &self.spec, &roles, &q, &psi)
            }
        }
    }

    fn if_family(&self, law: &FusedLaw) -> Result<IfFamily> {
        match self.scenario {
            Scenario::IiiA => {
                let q = self.reconstruct_q(law)?;
                let psi = aipw_ideal_if(&q)?;
                let roles = self.roles().expect("case-control scenario");
                generic_ub_full_if(law, &self.spec, &roles, &q, &psi)
            }
            _ => Ok(IfFamily {
                base: self.closed_form_if(law)?,
                directions: Vec::new(),
            }),
        }
    }

    fn eif(&self, law: &FusedLaw) -> Result<ObsFunction> {
        match self.scenario {
            Scenario::IiiA => {
                let q = self.reconstruct_q(law)?;
                let psi = aipw_ideal_if(&q)?;
                let roles = self.roles().expect("case-control scenario");
                Ok(generic_ub_eif_discrete(law, &self.spec, &roles, &q, &psi)?.phi)
            }
            _ => self.closed_form_if(law),
        }
    }
}
