//! Independent numerical oracles: random instances, multiplicative tilts, finite-difference
//! pathwise-derivative checks, a non-contraction counterexample for `I − A*A`, and the
//! efficiency comparison of the transport scenarios on a fixed data-generating process.
//!
//! The oracles here only evaluate identification functionals and observed masses along
//! explicit paths; they never call into the influence-function machinery.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::discrete::linalg::{singular_values, RANK_TOL};
use crate::error::{Error, Result};
use crate::frameworks::{Framework, FrameworkKind, FrameworkParams, FusedFramework};
use crate::influence::variance;
use crate::model::{assemble_observed_law, AlignmentSpec, CompiledSpec, FusedLaw, Region, SourceSpec};
use crate::score::{FusedModel, HVector};
use crate::{Axis, AxisSet, ObsFunction, Pmf, PmfMode};

/// A strictly positive law on `space` with masses proportional to uniform draws on `[0.2, 1]`.
pub fn random_pmf<R: Rng + ?Sized>(space: &AxisSet, rng: &mut R) -> Pmf {
    let w: Vec<f64> = (0..space.len()).map(|_| rng.random_range(0.2..1.0)).collect();
    Pmf::from_weights(space.clone(), w, PmfMode::Strict).expect("positive weights")
}

/// A framework together with a parameter `(Q, U, λ)` of its fused-data model.
#[derive(Clone, Debug)]
pub struct Instance {
    pub framework: Framework,
    pub q: Pmf,
    pub u: Vec<Pmf>,
    pub lambda: Vec<f64>,
}

impl Instance {
    /// The observed law `P_{Q,U,λ}`.
    pub fn law(&self) -> Result<FusedLaw> {
        assemble_observed_law(&self.q, &self.u, &self.lambda, self.framework.spec())
    }

    /// The fused model at `(Q, U, λ)`, restricted to the framework's ideal tangent space.
    pub fn model(&self) -> Result<FusedModel> {
        let m = FusedModel::new(
            self.q.clone(),
            self.u.clone(),
            self.lambda.clone(),
            self.framework.spec().clone(),
        )?;
        match self.framework.tangent_basis(&self.q)? {
            Some(b) => m.with_tangent_basis(&b),
            None => Ok(m),
        }
    }
}

/// Random two-source lambda with both weights in `[0.2, 0.8]`.
fn random_lambda<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let l1 = rng.random_range(0.2..0.8);
    vec![l1, 1.0 - l1]
}

/// An ideal law satisfying the instrumental moment `E[Y|L] = α + ψ E[X|L]` with `X ⊥ Y | L`.
fn random_tsiv_q<R: Rng + ?Sized>(space: &AxisSet, rng: &mut R) -> Result<Pmf> {
    let l = space.projection(&["L"])?;
    let lx = space.projection(&["L", "X"])?;
    let x = space.numeric_axis::<f64>("X")?;
    let y = space.numeric_axis::<f64>("Y")?;
    let ql: Vec<f64> = (0..l.sub.len()).map(|_| rng.random_range(0.2..1.0)).collect();
    let qlx: Vec<f64> = (0..lx.sub.len()).map(|_| rng.random_range(0.2..1.0)).collect();
    let lx_l = lx.sub.projection(&["L"])?;
    let lx_tot = lx_l.lift(&lx_l.sum(&qlx));
    let x_lx = lx.sub.numeric_axis::<f64>("X")?;
    let mx = lx_l.cond_mean(&qlx, &x_lx);
    let (xmin, xmax) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(*v), b.max(*v))
    });
    let span = (xmax - xmin).max(1.0);
    let psi = rng.random_range(-0.3..0.3) / span;
    let alpha = 0.5 - psi * (xmin + xmax) / 2.0;
    let mass: Vec<f64> = (0..space.len())
        .map(|c| {
            let li = l.map[c];
            let p1 = alpha + psi * mx[li];
            let py = if y[c] > 0.5 { p1 } else { 1.0 - p1 };
            ql[li] * qlx[lx.map[c]] / lx_tot[lx.map[c]] * py
        })
        .collect();
    Pmf::from_weights(space.clone(), mass, PmfMode::Strict)
}

/// An ideal law whose proxy `V` separates the outcome: `P(V=1|x,Y=1) ∈ [0.6, 0.9]` and
/// `P(V=1|x,Y=0) ∈ [0.1, 0.4]`.
fn random_prevalence_q<R: Rng + ?Sized>(space: &AxisSet, rng: &mut R) -> Result<Pmf> {
    let xy = space.projection(&space.names().into_iter().filter(|n| *n != "V").collect::<Vec<_>>())?;
    let qxy: Vec<f64> = (0..xy.sub.len()).map(|_| rng.random_range(0.2..1.0)).collect();
    let y_xy = xy.sub.numeric_axis::<f64>("Y")?;
    let pv: Vec<f64> = y_xy
        .iter()
        .map(|y| {
            if *y > 0.5 {
                rng.random_range(0.6..0.9)
            } else {
                rng.random_range(0.1..0.4)
            }
        })
        .collect();
    let v = space.numeric_axis::<f64>("V")?;
    let mass = (0..space.len())
        .map(|c| qxy[xy.map[c]] * bernoulli(pv[xy.map[c]], v[c]))
        .collect();
    Pmf::from_weights(space.clone(), mass, PmfMode::Strict)
}

/// A random parameter of the framework on its default ideal space.
pub fn random_instance<R: Rng + ?Sized>(kind: FrameworkKind, rng: &mut R) -> Result<Instance> {
    let framework = Framework::new(kind, &kind.default_ideal(), &FrameworkParams::default())?;
    let spec = framework.spec();
    let q = match kind {
        FrameworkKind::Tsiv => random_tsiv_q(&spec.ideal, rng)?,
        FrameworkKind::Prevalence => random_prevalence_q(&spec.ideal, rng)?,
        _ => random_pmf(&spec.ideal, rng),
    };
    let u = spec.chains.iter().map(|c| random_pmf(&c.z_space, rng)).collect();
    Ok(Instance {
        framework,
        q,
        u,
        lambda: random_lambda(rng),
    })
}

/// A random alignment collection with `sources` sources on a random ideal space of three
/// axes with two or three levels each.
pub fn random_spec<R: Rng + ?Sized>(sources: usize, rng: &mut R) -> Result<CompiledSpec> {
    let names = ["A", "B", "C"];
    let axes: Vec<Axis> = names
        .iter()
        .map(|n| Axis::indexed(*n, rng.random_range(2..=3)))
        .collect();
    let ideal = AxisSet::new(axes)?;
    loop {
        let mut specs = Vec::with_capacity(sources);
        for _ in 0..sources {
            let mut obs: Vec<&str> = names.to_vec();
            obs.shuffle(rng);
            obs.truncate(rng.random_range(1..=names.len()));
            let n_blocks = rng.random_range(1..=obs.len());
            let mut cuts: Vec<usize> = (1..obs.len()).collect();
            cuts.shuffle(rng);
            cuts.truncate(n_blocks - 1);
            cuts.sort_unstable();
            let mut blocks: Vec<Vec<&str>> = Vec::new();
            let mut start = 0;
            for c in cuts.into_iter().chain([obs.len()]) {
                blocks.push(obs[start..c].to_vec());
                start = c;
            }
            let mut regions = Vec::with_capacity(blocks.len());
            let mut prefix: Vec<&str> = Vec::new();
            for (k, b) in blocks.iter().enumerate() {
                let r = if k == 0 {
                    if rng.random_bool(0.5) {
                        Region::Star
                    } else {
                        Region::Empty
                    }
                } else {
                    match rng.random_range(0..3) {
                        0 => Region::All,
                        1 => Region::Empty,
                        _ => {
                            let pre = ideal.sub(&prefix)?;
                            let tuples: Vec<Vec<String>> = (0..pre.len())
                                .filter(|_| rng.random_bool(0.5))
                                .map(|c| pre.labels(c).iter().map(|s| s.to_string()).collect())
                                .collect();
                            if tuples.is_empty() {
                                Region::Empty
                            } else {
                                Region::Tuples(tuples)
                            }
                        }
                    }
                };
                regions.push(r);
                prefix.extend(b.iter().copied());
            }
            specs.push(SourceSpec::new(blocks, regions));
        }
        if let Ok(spec) = AlignmentSpec::new(specs).compile(&ideal) {
            return Ok(spec);
        }
    }
}

/// A random fused model with `sources` sources and strictly positive tables.
pub fn random_model<R: Rng + ?Sized>(sources: usize, rng: &mut R) -> Result<FusedModel> {
    let spec = random_spec(sources, rng)?;
    let q = random_pmf(&spec.ideal, rng);
    let u = spec.chains.iter().map(|c| random_pmf(&c.z_space, rng)).collect();
    let w: Vec<f64> = (0..sources).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    let lambda = w.iter().map(|x| x / total).collect();
    FusedModel::new(q, u, lambda, spec)
}

/// A random direction of `H` with entries bounded by one in absolute value.
pub fn random_direction<R: Rng + ?Sized>(model: &FusedModel, rng: &mut R) -> HVector {
    let c = DVector::from_fn(model.h_dim(), |_, _| rng.random_range(-1.0..1.0));
    let h = model.h_from_coords(&c);
    let m = h.max_abs();
    if m > 0.0 {
        h.scale(1.0 / m)
    } else {
        h
    }
}

/// The largest step for which every tilted table stays strictly positive.
pub fn t_max(h: &HVector) -> f64 {
    let m = h.max_abs();
    if m > 0.0 {
        0.5 / m
    } else {
        f64::INFINITY
    }
}

fn tilt_pmf(p: &Pmf, h: &[f64], t: f64) -> Result<Pmf> {
    let w: Vec<f64> = p.mass().iter().zip(h).map(|(m, x)| m * (1.0 + t * x)).collect();
    let mode = if w.iter().all(|&m| m > 0.0) {
        PmfMode::Strict
    } else {
        PmfMode::Relaxed
    };
    Pmf::from_weights(p.space().clone(), w, mode)
}

/// The submodel `(Q(1 + t h_Q), U(1 + t h_U), λ(1 + t h_λ))`.
pub fn tilt(
    q: &Pmf,
    u: &[Pmf],
    lambda: &[f64],
    h: &HVector,
    t: f64,
) -> Result<(Pmf, Vec<Pmf>, Vec<f64>)> {
    if t.abs() > t_max(h) {
        return Err(Error::Positivity(format!(
            "step {t} exceeds the admissible bound {}",
            t_max(h)
        )));
    }
    let qt = tilt_pmf(q, &h.h_q, t)?;
    let ut = u
        .iter()
        .zip(&h.h_u)
        .map(|(p, hu)| tilt_pmf(p, hu, t))
        .collect::<Result<Vec<_>>>()?;
    let lt: Vec<f64> = lambda
        .iter()
        .zip(&h.h_lambda)
        .map(|(l, x)| l * (1.0 + t * x))
        .collect();
    let total: f64 = lt.iter().sum();
    Ok((qt, ut, lt.into_iter().map(|l| l / total).collect()))
}

/// The observed law along the submodel through `model` in direction `h`.
pub fn tilted_law(model: &FusedModel, h: &HVector, t: f64) -> Result<FusedLaw> {
    let (q, u, l) = tilt(&model.q, &model.u, model.lambda(), h, t)?;
    assemble_observed_law(&q, &u, &l, &model.spec)
}

/// Central difference of the observed masses, `dP_t/dt` at `t = 0`.
fn mass_derivative(model: &FusedModel, h: &HVector, s: f64) -> Result<Vec<f64>> {
    let plus = tilted_law(model, h, s)?.obs_mass();
    let minus = tilted_law(model, h, -s)?.obs_mass();
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(a, b)| (a - b) / (2.0 * s))
        .collect())
}

/// The numerical score `(dP_t/dt) / P` at `t = 0`, with one Richardson step.
pub fn numerical_score(model: &FusedModel, h: &HVector, step: f64) -> Result<ObsFunction> {
    let d1 = mass_derivative(model, h, step)?;
    let d2 = mass_derivative(model, h, step / 2.0)?;
    Ok(model
        .law
        .obs_mass()
        .iter()
        .zip(d1.iter().zip(&d2))
        .map(|(p, (a, b))| if *p > 0.0 { (4.0 * b - a) / (3.0 * p) } else { 0.0 })
        .collect())
}

/// Result of a finite-difference pathwise-derivative check.
#[derive(Clone, Debug, Serialize)]
pub struct PathwiseReport {
    /// Finite-difference derivative of `φ(P_t)` at `t = 0`.
    pub derivative: f64,
    /// `E_P[φ¹ · score]`, with the score obtained by differentiating the observed masses.
    pub inner: f64,
    /// `|derivative − inner|`.
    pub residual: f64,
    /// Whether the Richardson step was needed.
    pub richardson: bool,
}

fn phi_derivative(
    fw: &dyn FusedFramework,
    model: &FusedModel,
    h: &HVector,
    s: f64,
) -> Result<f64> {
    let plus = fw.phi(&tilted_law(model, h, s)?)?;
    let minus = fw.phi(&tilted_law(model, h, -s)?)?;
    Ok((plus - minus) / (2.0 * s))
}

fn inner_along(phi1: &[f64], model: &FusedModel, h: &HVector, s: f64) -> Result<f64> {
    let d = mass_derivative(model, h, s)?;
    Ok(phi1.iter().zip(&d).map(|(f, p)| f * p).sum())
}

/// Compares the derivative of `φ` along the tilt in direction `h` with `E_P[φ¹ · score]`.
pub fn pathwise_check(
    fw: &dyn FusedFramework,
    model: &FusedModel,
    phi1: &[f64],
    h: &HVector,
    step: f64,
) -> Result<PathwiseReport> {
    if phi1.len() != model.law.num_obs_cells() {
        return Err(Error::ShapeMismatch {
            expected: model.law.num_obs_cells(),
            found: phi1.len(),
        });
    }
    let derivative = phi_derivative(fw, model, h, step)?;
    let inner = inner_along(phi1, model, h, step)?;
    let residual = (derivative - inner).abs();
    if residual <= 1e-6 {
        return Ok(PathwiseReport {
            derivative,
            inner,
            residual,
            richardson: false,
        });
    }
    let half = step / 2.0;
    let derivative = (4.0 * phi_derivative(fw, model, h, half)? - derivative) / 3.0;
    let inner = (4.0 * inner_along(phi1, model, h, half)? - inner) / 3.0;
    Ok(PathwiseReport {
        derivative,
        inner,
        residual: (derivative - inner).abs(),
        richardson: true,
    })
}

/// Parameters of the two-source non-contraction construction: a binary `Y` and a
/// categorical `X`, with `X | Y` shared by source 1 and the law of `Y` shared by source 2.
#[derive(Clone, Debug, Serialize)]
pub struct ContractionConfig {
    /// `P(Y=1 | S=1)`.
    pub p_y1_s1: f64,
    /// `P(Y=1 | S=2) = Q(Y=1)`.
    pub p_y1_s2: f64,
    /// `P(S=1)`.
    pub p_s1: f64,
    /// Number of levels of `X`.
    pub x_levels: usize,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        ContractionConfig {
            p_y1_s1: 0.9,
            p_y1_s2: 0.1,
            p_s1: 0.5,
            x_levels: 3,
        }
    }
}

impl ContractionConfig {
    /// `1 − P(Y=1|S=1) P(S=1) / Q(Y=1)`.
    pub fn factor(&self) -> f64 {
        1.0 - self.p_y1_s1 * self.p_s1 / self.p_y1_s2
    }

    /// A configuration with `|factor| = target` and `factor ≤ 0`, keeping `P(Y=1|S=1) = 0.9`
    /// and `P(S=1) = 0.5`.
    pub fn for_factor(target: f64) -> Result<Self> {
        let base = ContractionConfig::default();
        let p_y1_s2 = base.p_y1_s1 * base.p_s1 / (1.0 + target);
        if !(target.is_finite() && target > 0.0 && p_y1_s2 > 0.0 && p_y1_s2 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "no positive construction attains factor {target}"
            )));
        }
        Ok(ContractionConfig { p_y1_s2, ..base })
    }
}

/// Outcome of the non-contraction construction.
#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub config: ContractionConfig,
    /// The closed-form factor `1 − P(Y=1|S=1) P(S=1) / Q(Y=1)`.
    pub factor: f64,
    /// `‖(I − A*A) h‖ / ‖h‖` computed with the operator.
    pub ratio: f64,
    /// `|ratio − |factor||`.
    pub factor_residual: f64,
    /// Whether `ratio > 1`.
    pub non_contraction: bool,
    /// Whether `|factor| = 1` within `1e-12`.
    pub boundary: bool,
    /// Condition number of `A*A` restricted to the orthogonal complement of its null space.
    pub condition_number: f64,
    /// Largest relative residual of the explicit inverse on random targets.
    pub inverse_residual: f64,
}

fn contraction_model<R: Rng + ?Sized>(cfg: &ContractionConfig, rng: &mut R) -> Result<FusedModel> {
    let probs = [cfg.p_y1_s1, cfg.p_y1_s2, cfg.p_s1];
    if cfg.x_levels < 2 || probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::InvalidArgument(
            "the construction needs probabilities in (0, 1) and at least two X levels".into(),
        ));
    }
    let ideal = AxisSet::new(vec![
        Axis::indexed("X", cfg.x_levels),
        Axis::new("Y", &["0", "1"]),
    ])?;
    let spec = AlignmentSpec::new(vec![
        SourceSpec::new(vec![vec!["Y"], vec!["X"]], vec![Region::Empty, Region::All]),
        SourceSpec::new(vec![vec!["Y"], vec!["X"]], vec![Region::Star, Region::Empty]),
    ])
    .compile(&ideal)?;
    let with_y = |p: &Pmf, py1: f64| -> Result<Pmf> {
        let s = p.space();
        let yp = s.projection(&["Y"])?;
        let y = s.numeric_axis::<f64>("Y")?;
        let py = yp.lift(&yp.sum(p.mass()));
        let w = (0..s.len())
            .map(|c| p.mass()[c] / py[c] * if y[c] > 0.5 { py1 } else { 1.0 - py1 })
            .collect();
        Pmf::from_weights(s.clone(), w, PmfMode::Strict)
    };
    let q = with_y(&random_pmf(&ideal, rng), cfg.p_y1_s2)?;
    let u1 = with_y(&random_pmf(&spec.chains[0].z_space, rng), cfg.p_y1_s1)?;
    let u2 = random_pmf(&spec.chains[1].z_space, rng);
    let law = assemble_observed_law(&q, &[u1, u2], &[cfg.p_s1, 1.0 - cfg.p_s1], &spec)?;
    FusedModel::from_law(q, law, spec)
}

fn h_norm(model: &FusedModel, h: &HVector) -> f64 {
    model.h_inner(h, h).sqrt()
}

fn h_sub(a: &HVector, b: &HVector) -> HVector {
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>();
    HVector {
        h_q: d(&a.h_q, &b.h_q),
        h_u: a.h_u.iter().zip(&b.h_u).map(|(x, y)| d(x, y)).collect(),
        h_lambda: d(&a.h_lambda, &b.h_lambda),
    }
}

/// The closed-form inverse of `A*A` on the orthogonal complement of its null space, for the
/// canonical free laws `U^(j) = P(. | S=j)`.
fn contraction_inverse(model: &FusedModel, h: &HVector) -> Result<HVector> {
    let q = &model.q;
    let w = q.space();
    let yp = w.projection(&["Y"])?;
    let qy = yp.lift(&yp.sum(q.mass()));
    let ey = yp.lift(&yp.cond_mean(q.mass(), &h.h_q));
    let p1 = &model.law.sources[0];
    let z1 = p1.space();
    let z1y = z1.projection(&["Y"])?;
    let p1y = z1y.sum(p1.mass());
    let w_to_y = yp.map.clone();
    let (l1, l2) = (model.lambda()[0], model.lambda()[1]);
    let h_q = (0..w.len())
        .map(|c| qy[c] / (p1y[w_to_y[c]] * l1) * (h.h_q[c] - ey[c]) + ey[c] / l2)
        .collect();
    let h_u = h
        .h_u
        .iter()
        .zip(model.lambda())
        .map(|(v, l)| v.iter().map(|x| x / l).collect())
        .collect();
    Ok(HVector {
        h_q,
        h_u,
        h_lambda: h.h_lambda.clone(),
    })
}

/// Builds the two-source construction and checks that `I − A*A` expands the direction
/// `h_Q(x, y) = I(y=1)(f(x) − E_Q[f|Y=y])`, that `A*A` is well conditioned on the complement
/// of its null space, and that the closed-form inverse solves `A*A h̃ = h` there.
pub fn contraction_counterexample<R: Rng + ?Sized>(
    cfg: &ContractionConfig,
    rng: &mut R,
) -> Result<ContractionReport> {
    let model = contraction_model(cfg, rng)?;
    let w = model.q.space();
    let x = w.projection(&["X"])?.map;
    let y = w.numeric_axis::<f64>("Y")?;
    let yp = w.projection(&["Y"])?;
    let f: Vec<f64> = (0..w.len()).map(|c| (x[c] as f64 + 1.0).powi(2)).collect();
    let ef = yp.lift(&yp.cond_mean(model.q.mass(), &f));
    let mut h = model.h_zero();
    h.h_q = (0..w.len()).map(|c| y[c] * (f[c] - ef[c])).collect();
    let aah = model.apply_a_star(&model.apply_a(&h));
    let ratio = h_norm(&model, &h_sub(&h, &aah)) / h_norm(&model, &h);
    let factor = cfg.factor();

    let info = &model.information_operator().entries;
    let sv = singular_values(info);
    let top = sv.iter().cloned().fold(0.0, f64::max);
    let low = sv
        .iter()
        .cloned()
        .filter(|s| *s > RANK_TOL * top.max(1.0))
        .fold(f64::INFINITY, f64::min);
    let condition_number = top / low;

    let mut inverse_residual: f64 = 0.0;
    for _ in 0..10 {
        let c = DVector::from_fn(model.h_dim(), |_, _| rng.random_range(-1.0..1.0));
        let target = info * c;
        let ht = contraction_inverse(&model, &model.h_from_coords(&target))?;
        let back = info * model.h_coords(&ht);
        inverse_residual = inverse_residual.max((back - &target).norm() / target.norm());
    }
    Ok(ContractionReport {
        config: cfg.clone(),
        factor,
        ratio,
        factor_residual: (ratio - factor.abs()).abs(),
        non_contraction: ratio > 1.0 + 1e-12,
        boundary: (factor.abs() - 1.0).abs() <= 1e-12,
        condition_number,
        inverse_residual,
    })
}

/// Inverse logit.
pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The default grid `P(S=1) ∈ {0.05, 0.10, ..., 0.95}`.
pub fn appendix_c_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

fn appendix_c_space() -> AxisSet {
    FrameworkKind::TransportIi.default_ideal()
}

fn outcome_prob(a: f64, l1: f64, l2: f64) -> f64 {
    expit(0.5 + 0.5 * a + 0.25 * l1 - 0.25 * l2)
}

fn cell_values(space: &AxisSet) -> Result<[Vec<f64>; 4]> {
    Ok([
        space.numeric_axis::<f64>("L1")?,
        space.numeric_axis::<f64>("L2")?,
        space.numeric_axis::<f64>("A")?,
        space.numeric_axis::<f64>("Y")?,
    ])
}

fn bernoulli(p: f64, v: f64) -> f64 {
    if v > 0.5 {
        p
    } else {
        1.0 - p
    }
}

/// The target-population law: `L1`, `L2` independent and uniform, logistic treatment and
/// outcome models.
pub fn appendix_c_q() -> Pmf {
    let w = appendix_c_space();
    let [l1, l2, a, y] = cell_values(&w).expect("numeric axes");
    let mass: Vec<f64> = (0..w.len())
        .map(|c| {
            let pa = expit(-0.2 - 0.15 * l1[c] + 0.25 * l2[c]);
            bernoulli(pa, a[c]) * bernoulli(outcome_prob(a[c], l1[c], l2[c]), y[c]) / 6.0
        })
        .collect();
    Pmf::new(w, mass, PmfMode::Strict).expect("normalized by construction")
}

/// Source laws in ideal-axis order: a trial population with its own covariate and treatment
/// laws and the target outcome model, and a case-control sample with `P(Y=1) = 0.4` and the
/// target law of `(L, A)` given `Y`.
fn appendix_c_sources(q: &Pmf) -> Result<[Pmf; 2]> {
    let w = q.space();
    let [l1, l2, a, y] = cell_values(w)?;
    let pl1 = |v: f64| if v < 1.5 { 0.4 } else { 0.6 };
    let pl2 = |v: f64| [0.3, 0.33, 0.37][(v.round() as usize) - 1];
    let p1: Vec<f64> = (0..w.len())
        .map(|c| {
            let pa = expit(0.1 - 0.2 * l1[c] + 0.2 * l2[c]);
            pl1(l1[c])
                * pl2(l2[c])
                * bernoulli(pa, a[c])
                * bernoulli(outcome_prob(a[c], l1[c], l2[c]), y[c])
        })
        .collect();
    let yp = w.projection(&["Y"])?;
    let qy = yp.lift(&yp.sum(q.mass()));
    let p2: Vec<f64> = (0..w.len())
        .map(|c| q.mass()[c] / qy[c] * bernoulli(0.4, y[c]))
        .collect();
    Ok([
        Pmf::from_weights(w.clone(), p1, PmfMode::Strict)?,
        Pmf::from_weights(w.clone(), p2, PmfMode::Strict)?,
    ])
}

/// The observed law of the case-control transport data-generating process under the
/// source layout of `fw` (scenarios `Ii`, `IiiA` or `IiiB`).
pub fn appendix_c_law(fw: &Framework, p_s1: f64) -> Result<FusedLaw> {
    if !(p_s1 > 0.0 && p_s1 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "P(S=1) = {p_s1} must lie strictly between 0 and 1"
        )));
    }
    match fw.kind() {
        FrameworkKind::TransportIi | FrameworkKind::TransportIiia | FrameworkKind::TransportIiib => {}
        k => {
            return Err(Error::InvalidArgument(format!(
                "the case-control design has no layout for framework `{k}`"
            )))
        }
    }
    let q = appendix_c_q();
    if fw.spec().ideal != *q.space() {
        return Err(Error::InvalidArgument(
            "the framework is not bound to the (L1, L2, A, Y) space".into(),
        ));
    }
    let sources = appendix_c_sources(&q)?;
    let laws = fw
        .spec()
        .chains
        .iter()
        .zip(&sources)
        .map(|(c, p)| p.marginal(&c.z_space.names()))
        .collect::<Result<Vec<_>>>()?;
    FusedLaw::new(vec![p_s1, 1.0 - p_s1], laws)
}

/// One row of the efficiency comparison.
#[derive(Clone, Debug, Serialize)]
pub struct AreRow {
    pub p_s1: f64,
    pub var_iiia: f64,
    pub var_ii: f64,
    pub var_iiib: f64,
    /// `var_ii / var_iiia`.
    pub are_ii: f64,
    /// `var_iiib / var_iiia`.
    pub are_iiib: f64,
}

impl AreRow {
    pub const COLUMNS: [&'static str; 6] =
        ["p_s1", "var_iiia", "var_ii", "var_iiib", "are_ii", "are_iiib"];

    pub fn values(&self) -> [f64; 6] {
        [
            self.p_s1,
            self.var_iiia,
            self.var_ii,
            self.var_iiib,
            self.are_ii,
            self.are_iiib,
        ]
    }
}

/// Efficient-influence-function variances of scenarios (ii), (iii.a) and (iii.b) on the
/// case-control transport law, for each `P(S=1)` in the grid, sorted by `P(S=1)`.
pub fn are_curves(grid: &[f64]) -> Result<Vec<AreRow>> {
    let fws = [
        Framework::with_defaults(FrameworkKind::TransportIiia),
        Framework::with_defaults(FrameworkKind::TransportIi),
        Framework::with_defaults(FrameworkKind::TransportIiib),
    ];
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&p| {
            let mut v = [0.0; 3];
            for (slot, fw) in v.iter_mut().zip(&fws) {
                let law = appendix_c_law(fw, p)?;
                *slot = variance(&law, &fw.eif(&law)?);
            }
            Ok(AreRow {
                p_s1: p,
                var_iiia: v[0],
                var_ii: v[1],
                var_iiib: v[2],
                are_ii: v[1] / v[0],
                are_iiib: v[2] / v[0],
            })
        })
        .collect()
}

