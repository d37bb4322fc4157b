//! Sampling from fused laws, empirical laws, projection of an empirical law into the model,
//! one-step estimation and a Monte Carlo harness.
//!
//! Replication `r` at the `i`-th sample size of a Monte Carlo run draws from a ChaCha8
//! generator seeded with the run seed and positioned on stream `(i << 32) | r`, so every
//! replication is reproducible on its own and results do not depend on the thread count.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrete::json::fmt17;
use crate::error::{Error, Result};
use crate::frameworks::FusedFramework;
use crate::influence::variance;
use crate::model::{assemble_observed_law, canonical_u, FusedLaw};
use crate::{AxisSet, ObsFunction, Pmf, PmfMode};

/// Smallest replication count accepted by [`monte_carlo`].
pub const MIN_REPS: usize = 100;

/// Two-sided 97.5% standard normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

/// One observation: the source index and the cell of its observed space (block order).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub source: usize,
    pub cell: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub seed: u64,
    pub stream: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Cell counts per source, for sources with the given numbers of cells.
    pub fn counts(&self, cells: &[usize]) -> Result<Vec<Vec<u64>>> {
        let mut out: Vec<Vec<u64>> = cells.iter().map(|&n| vec![0; n]).collect();
        for r in &self.records {
            let slot = out
                .get_mut(r.source)
                .and_then(|v| v.get_mut(r.cell))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "record (source {}, cell {}) lies outside the declared spaces",
                        r.source + 1,
                        r.cell
                    ))
                })?;
            *slot += 1;
        }
        Ok(out)
    }

    /// Records as level labels, one row per observation.
    pub fn labelled<'a>(&self, spaces: &'a [AxisSet]) -> Result<Vec<(usize, Vec<&'a str>)>> {
        self.records
            .iter()
            .map(|r| {
                let space = spaces.get(r.source).ok_or_else(|| {
                    Error::InvalidArgument(format!("unknown source {}", r.source + 1))
                })?;
                if r.cell >= space.len() {
                    return Err(Error::InvalidArgument(format!(
                        "cell {} outside source {}",
                        r.cell,
                        r.source + 1
                    )));
                }
                Ok((r.source, space.labels(r.cell)))
            })
            .collect()
    }
}

fn weighted(w: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(w.iter().copied())
        .map_err(|e| Error::InvalidArgument(format!("cannot sample from weights: {e}")))
}

/// `n` i.i.d. draws of `(S, Z^(S))` with the generator seeded by `seed` on stream `stream`.
pub fn sample_stream(law: &FusedLaw, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let s_dist = weighted(&law.lambda)?;
    let z_dist = law
        .sources
        .iter()
        .map(|p| weighted(p.mass()))
        .collect::<Result<Vec<_>>>()?;
    let records = (0..n)
        .map(|_| {
            let source = s_dist.sample(&mut rng);
            Record {
                source,
                cell: z_dist[source].sample(&mut rng),
            }
        })
        .collect();
    Ok(Dataset {
        records,
        seed,
        stream,
    })
}

/// `n` i.i.d. draws on stream 0.
pub fn sample(law: &FusedLaw, n: usize, seed: u64) -> Result<Dataset> {
    sample_stream(law, n, seed, 0)
}

/// An empirical law together with the number of cells raised to the mass floor.
#[derive(Clone, Debug)]
pub struct EmpiricalLaw {
    pub law: FusedLaw,
    pub floored_cells: usize,
}

/// Frequency tables per source and the empirical source proportions. Empty cells are
/// raised to the mass floor.
pub fn empirical_law(d: &Dataset, spaces: &[AxisSet]) -> Result<EmpiricalLaw> {
    let cells: Vec<usize> = spaces.iter().map(AxisSet::len).collect();
    let counts = d.counts(&cells)?;
    let n = d.len() as f64;
    let mut sources = Vec::with_capacity(spaces.len());
    let mut lambda = Vec::with_capacity(spaces.len());
    let mut floored_cells = 0;
    for (j, (space, c)) in spaces.iter().zip(&counts).enumerate() {
        let total: u64 = c.iter().sum();
        if total == 0 {
            return Err(Error::Positivity(format!(
                "source {} has no observations",
                j + 1
            )));
        }
        floored_cells += c.iter().filter(|&&k| k == 0).count();
        let w: Vec<f64> = c.iter().map(|&k| k as f64).collect();
        sources.push(Pmf::from_weights(space.clone(), w, PmfMode::Floor)?);
        lambda.push(total as f64 / n);
    }
    Ok(EmpiricalLaw {
        law: FusedLaw::new(lambda, sources)?,
        floored_cells,
    })
}

/// A model-obedient observed law and the ideal law it was built from.
#[derive(Clone, Debug)]
pub struct Projection {
    pub law: FusedLaw,
    pub q: Pmf,
}

/// Rebuilds `P_{Q̂, U, λ}` from the framework's obedient reconstruction `Q̂` of `p`, with
/// the free laws `U^(j) = p(. | S=j)` and the proportions of `p`.
pub fn obedient_projection(fw: &dyn FusedFramework, p: &FusedLaw) -> Result<Projection> {
    let q = fw.reconstruct_q_obedient(p)?;
    let law = assemble_observed_law(&q, &canonical_u(p), &p.lambda, fw.spec())?;
    Ok(Projection { law, q })
}

/// A one-step estimate.
#[derive(Clone, Debug, Serialize)]
pub struct OneStep {
    pub estimate: f64,
    pub plug_in: f64,
    /// Sample mean of the influence function at the fitted law.
    pub correction: f64,
    /// Sample standard deviation of the influence function over `sqrt(n)`.
    pub se: f64,
    pub n: usize,
    pub floored_cells: usize,
}

/// `φ(P̂) + n^{-1} Σ φ¹_{P̂}(O_i)` with `P̂` the empirical law, projected into the model when
/// `obedient` is set, and `φ¹` the framework's efficient influence function.
pub fn one_step(d: &Dataset, fw: &dyn FusedFramework, obedient: bool) -> Result<OneStep> {
    let spaces: Vec<AxisSet> = fw.spec().chains.iter().map(|c| c.z_space.clone()).collect();
    let emp = empirical_law(d, &spaces)?;
    let mut est = one_step_from(d, fw, &emp.law, obedient)?;
    est.floored_cells = emp.floored_cells;
    Ok(est)
}

/// The one-step estimator started from an arbitrary initial estimate of the observed law,
/// such as a smoothed or machine-learned fit.
///
/// The influence function is centered under the fitted law. A law outside the model can
/// leave the closed forms off-center; at the unprojected empirical law the centered
/// correction vanishes and the estimate equals the plug-in.
pub fn one_step_from(
    d: &Dataset,
    fw: &dyn FusedFramework,
    initial: &FusedLaw,
    obedient: bool,
) -> Result<OneStep> {
    if d.is_empty() {
        return Err(Error::InvalidArgument("the dataset is empty".into()));
    }
    let cells: Vec<usize> = initial.sources.iter().map(|p| p.space().len()).collect();
    d.counts(&cells)?;
    let projected;
    let fitted = if obedient {
        projected = obedient_projection(fw, initial)?.law;
        &projected
    } else {
        initial
    };
    let plug_in = fw.phi(fitted)?;
    let mut phi1 = fw.eif(fitted)?;
    let mean = fitted.expect(&phi1);
    phi1.iter_mut().for_each(|v| *v -= mean);
    let (correction, sd) = sample_moments(d, fitted, &phi1);
    let n = d.len();
    Ok(OneStep {
        estimate: plug_in + correction,
        plug_in,
        correction,
        se: sd / (n as f64).sqrt(),
        n,
        floored_cells: 0,
    })
}

/// Sample mean and standard deviation (divisor `n − 1`) of an observed function.
fn sample_moments(d: &Dataset, law: &FusedLaw, f: &ObsFunction) -> (f64, f64) {
    let offsets = law.offsets();
    let n = d.len() as f64;
    let vals = d.records.iter().map(|r| f[offsets[r.source] + r.cell]);
    let mean = vals.clone().sum::<f64>() / n;
    let ss: f64 = vals.map(|v| (v - mean).powi(2)).sum();
    let sd = if d.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Summary of the replications at one sample size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloRow {
    pub n: usize,
    /// Replications that produced an estimate.
    pub reps: usize,
    /// Replications at which the framework could not be evaluated.
    pub failures: usize,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub sqrt_n_bias: f64,
    /// Monte Carlo standard error of the bias.
    pub bias_mc_se: f64,
    pub emp_sd: f64,
    pub emp_var: f64,
    pub mean_se: f64,
    /// `var_P(φ¹_eff) / n`.
    pub eff_var_over_n: f64,
    /// `emp_var / eff_var_over_n`.
    pub var_ratio: f64,
    /// Share of 95% Wald intervals containing the truth.
    pub coverage: f64,
    pub mean_plug_in: f64,
    pub floored_cells: usize,
}

impl MonteCarloRow {
    pub const COLUMNS: [&'static str; 16] = [
        "n",
        "reps",
        "failures",
        "truth",
        "mean_estimate",
        "bias",
        "sqrt_n_bias",
        "bias_mc_se",
        "emp_sd",
        "emp_var",
        "mean_se",
        "eff_var_over_n",
        "var_ratio",
        "coverage",
        "mean_plug_in",
        "floored_cells",
    ];

    fn csv_line(&self) -> String {
        let f = [
            self.truth,
            self.mean_estimate,
            self.bias,
            self.sqrt_n_bias,
            self.bias_mc_se,
            self.emp_sd,
            self.emp_var,
            self.mean_se,
            self.eff_var_over_n,
            self.var_ratio,
            self.coverage,
            self.mean_plug_in,
        ];
        let mut parts = vec![self.n.to_string(), self.reps.to_string(), self.failures.to_string()];
        parts.extend(f.iter().map(|x| fmt17(*x)));
        parts.push(self.floored_cells.to_string());
        parts.join(",")
    }
}

/// Monte Carlo configuration.
#[derive(Clone, Debug, Serialize)]
pub struct MonteCarloConfig {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub obedient: bool,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub rows: Vec<MonteCarloRow>,
}

impl MonteCarloReport {
    pub fn to_csv(&self) -> String {
        let mut out = MonteCarloRow::COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Runs `reps` one-step estimations at every sample size of the grid.
pub fn monte_carlo(
    fw: &(dyn FusedFramework + Sync),
    law: &FusedLaw,
    cfg: &MonteCarloConfig,
) -> Result<MonteCarloReport> {
    if cfg.reps < MIN_REPS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_REPS} replications are required, got {}",
            cfg.reps
        )));
    }
    if cfg.n_grid.is_empty() || cfg.n_grid.contains(&0) {
        return Err(Error::InvalidArgument(
            "the sample-size grid must be nonempty and positive".into(),
        ));
    }
    let truth = fw.phi(law)?;
    let var_eff = variance(law, &fw.eif(law)?);
    let threads = cfg.threads.max(1);
    let rows = cfg
        .n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let run = |rep: usize| {
                let stream = ((i as u64) << 32) | rep as u64;
                sample_stream(law, n, cfg.seed, stream)
                    .and_then(|d| one_step(&d, fw, cfg.obedient))
                    .ok()
            };
            let results = run_parallel(cfg.reps, threads, &run);
            summarize(n, truth, var_eff, &results)
        })
        .collect();
    Ok(MonteCarloReport { rows })
}

/// Evaluates `f(0..count)` on `threads` workers; results keep replication order.
fn run_parallel<T: Send>(count: usize, threads: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
    if threads == 1 {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let lo = (t * chunk).min(count);
                let hi = ((t + 1) * chunk).min(count);
                scope.spawn(move || (lo..hi).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn summarize(n: usize, truth: f64, var_eff: f64, results: &[Option<OneStep>]) -> MonteCarloRow {
    let ok: Vec<&OneStep> = results.iter().flatten().collect();
    let k = ok.len() as f64;
    let mean = |f: &dyn Fn(&OneStep) -> f64| ok.iter().map(|o| f(o)).sum::<f64>() / k;
    let mean_estimate = mean(&|o| o.estimate);
    let emp_var = if ok.len() > 1 {
        ok.iter().map(|o| (o.estimate - mean_estimate).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let covered = ok
        .iter()
        .filter(|o| (o.estimate - truth).abs() <= Z_975 * o.se)
        .count();
    let bias = mean_estimate - truth;
    MonteCarloRow {
        n,
        reps: ok.len(),
        failures: results.len() - ok.len(),
        truth,
        mean_estimate,
        bias,
        sqrt_n_bias: (n as f64).sqrt() * bias,
        bias_mc_se: (emp_var / k).sqrt(),
        emp_sd: emp_var.sqrt(),
        emp_var,
        mean_se: mean(&|o| o.se),
        eff_var_over_n: var_eff / n as f64,
        var_ratio: emp_var * n as f64 / var_eff,
        coverage: covered as f64 / k,
        mean_plug_in: mean(&|o| o.plug_in),
        floored_cells: ok.iter().map(|o| o.floored_cells).sum(),
    }
}
