//! Observed-data laws `P_{Q,U,lambda}` built by chaining aligned and free conditionals.

use crate::discrete::{FinitePmf, PmfMode};
use crate::error::{Error, Result};
use crate::model::spec::{CompiledSpec, SourceChain};
use crate::Pmf;

/// Tolerance on the source weights summing to one.
const LAMBDA_TOL: f64 = 1e-12;

/// The law of the observed data: source weights and one table per source over `Z^(j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedLaw {
    pub lambda: Vec<f64>,
    pub sources: Vec<Pmf>,
}

impl FusedLaw {
    pub fn new(lambda: Vec<f64>, sources: Vec<Pmf>) -> Result<Self> {
        validate_lambda(&lambda)?;
        if lambda.len() != sources.len() {
            return Err(Error::ShapeMismatch {
                expected: lambda.len(),
                found: sources.len(),
            });
        }
        Ok(FusedLaw { lambda, sources })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    /// Offsets of each source's cells in the observed enumeration.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = vec![0];
        for s in &self.sources {
            out.push(out.last().unwrap() + s.space().len());
        }
        out
    }

    pub fn num_obs_cells(&self) -> usize {
        self.sources.iter().map(|s| s.space().len()).sum()
    }

    /// `P(S=j, Z^(j)=z)` over the concatenated observed cells.
    pub fn obs_mass(&self) -> Vec<f64> {
        self.sources
            .iter()
            .zip(&self.lambda)
            .flat_map(|(p, l)| p.mass().iter().map(move |m| m * l))
            .collect()
    }

    /// Source index and within-source cell of an observed cell.
    pub fn locate(&self, obs: usize) -> (usize, usize) {
        let offs = self.offsets();
        let j = offs.iter().rposition(|&o| o <= obs).unwrap().min(self.sources.len() - 1);
        (j, obs - offs[j])
    }

    /// Human-readable name of an observed cell such as `S=2,Y=1,X=0`.
    pub fn cell_name(&self, obs: usize) -> String {
        let (j, z) = self.locate(obs);
        let rest = self.sources[j].space().cell_name(z);
        if rest.is_empty() {
            format!("S={}", j + 1)
        } else {
            format!("S={},{}", j + 1, rest)
        }
    }

    /// Expectation of an observed-data function.
    pub fn expect(&self, g: &[f64]) -> f64 {
        self.obs_mass().iter().zip(g).map(|(m, v)| m * v).sum()
    }

    /// The same law with every source table in the given mode.
    pub fn with_mode(&self, mode: PmfMode) -> Result<Self> {
        let sources = self
            .sources
            .iter()
            .map(|p| p.with_mode(mode))
            .collect::<Result<Vec<_>>>()?;
        FusedLaw::new(self.lambda.clone(), sources)
    }
}

pub(crate) fn validate_lambda(lambda: &[f64]) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::InvalidSpec("no sources".into()));
    }
    if let Some(i) = lambda.iter().position(|l| !l.is_finite() || *l <= 0.0) {
        return Err(Error::Positivity(format!(
            "source weight lambda({}) must be positive",
            i + 1
        )));
    }
    let total: f64 = lambda.iter().sum();
    if (total - 1.0).abs() > LAMBDA_TOL {
        return Err(Error::NotNormalized(total));
    }
    Ok(())
}

/// Masses of the prefix vectors `Zbar_k`, `k = 0..=K`, of a table over `Z^(j)`.
pub(crate) fn prefix_masses(chain: &SourceChain, z_mass: &[f64]) -> Vec<Vec<f64>> {
    chain.z_prefix.iter().map(|p| p.sum(z_mass)).collect()
}

/// Conditional of block `k` given `Zbar_k`, indexed by `Zbar_{k+1}` cells; zero on null prefixes.
pub(crate) fn block_conditional(chain: &SourceChain, pre: &[Vec<f64>], k: usize) -> Vec<f64> {
    pre[k + 1]
        .iter()
        .enumerate()
        .map(|(b, &m)| {
            let d = pre[k][chain.parent(k, b)];
            if d > 0.0 {
                m / d
            } else {
                0.0
            }
        })
        .collect()
}

/// Marginal of the ideal law on a source space.
pub(crate) fn ideal_on_source(chain: &SourceChain, q: &Pmf) -> Vec<f64> {
    chain.w_to_z.sum(q.mass())
}

/// Builds `P_{Q,U,lambda}`: block `k` of source `j` follows `Q` on its aligned region and
/// `U^(j)` elsewhere.
pub fn assemble_observed_law(
    q: &Pmf,
    u: &[Pmf],
    lambda: &[f64],
    spec: &CompiledSpec,
) -> Result<FusedLaw> {
    validate_lambda(lambda)?;
    if q.space() != &spec.ideal {
        return Err(Error::InvalidArgument(
            "ideal law is not defined on the specification's ideal space".into(),
        ));
    }
    if u.len() != spec.num_sources() || lambda.len() != spec.num_sources() {
        return Err(Error::ShapeMismatch {
            expected: spec.num_sources(),
            found: u.len().min(lambda.len()),
        });
    }
    let mut sources = Vec::with_capacity(u.len());
    for (j, (chain, uj)) in spec.chains.iter().zip(u).enumerate() {
        if uj.space() != &chain.z_space {
            return Err(Error::InvalidArgument(format!(
                "U for source {} is not defined on the source space",
                j + 1
            )));
        }
        let q_pre = prefix_masses(chain, &ideal_on_source(chain, q));
        let u_pre = prefix_masses(chain, uj.mass());
        let k_total = chain.num_blocks();
        let mut mass = vec![1.0];
        for k in 0..k_total {
            let qc = block_conditional(chain, &q_pre, k);
            let uc = block_conditional(chain, &u_pre, k);
            let next_len = chain.z_prefix[k + 1].sub.len();
            let mut next = vec![0.0; next_len];
            for (b, slot) in next.iter_mut().enumerate() {
                let a = chain.parent(k, b);
                if mass[a] == 0.0 {
                    continue;
                }
                let (cond, base) = if chain.masks[k][a] {
                    (qc[b], &q_pre[k])
                } else {
                    (uc[b], &u_pre[k])
                };
                if base[a] <= 0.0 {
                    return Err(Error::Positivity(format!(
                        "source {}: block {} conditional undefined at {}",
                        j + 1,
                        k + 1,
                        describe_prefix(chain, k, a)
                    )));
                }
                *slot = mass[a] * cond;
            }
            mass = next;
        }
        let mode = if mass.iter().all(|&m| m > 0.0) {
            PmfMode::Strict
        } else {
            PmfMode::Relaxed
        };
        let total: f64 = mass.iter().sum();
        let mass = mass.into_iter().map(|m| m / total).collect();
        sources.push(FinitePmf::new(chain.z_space.clone(), mass, mode)?);
    }
    FusedLaw::new(lambda.to_vec(), sources)
}

/// The canonical free laws `U^(j) := P(. | S=j)`.
pub fn canonical_u(p: &FusedLaw) -> Vec<Pmf> {
    p.sources.clone()
}

pub(crate) fn describe_prefix(chain: &SourceChain, k: usize, cell: usize) -> String {
    let name = chain.z_prefix[k].sub.cell_name(cell);
    if name.is_empty() {
        "the marginal".to_string()
    } else {
        name
    }
}
