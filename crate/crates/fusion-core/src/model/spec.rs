//! Alignment collections: which conditionals of each source agree with the ideal law.

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::discrete::{AxisSet, Projection};
use crate::error::{Error, Result};

/// The set of preceding-block values on which a block's conditional is aligned.
///
/// For the first block the preceding vector is degenerate and only [`Region::Star`]
/// (the marginal is aligned) or [`Region::Empty`] (it is not) are meaningful.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Region {
    Star,
    Empty,
    All,
    Tuples(Vec<Vec<String>>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RegionRepr {
    Name(String),
    Tuples(Vec<Vec<String>>),
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = match self {
            Region::Star => RegionRepr::Name("star".into()),
            Region::Empty => RegionRepr::Name("empty".into()),
            Region::All => RegionRepr::Name("all".into()),
            Region::Tuples(t) => RegionRepr::Tuples(t.clone()),
        };
        r.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RegionRepr::deserialize(d)? {
            RegionRepr::Name(n) => match n.as_str() {
                "star" => Ok(Region::Star),
                "empty" => Ok(Region::Empty),
                "all" => Ok(Region::All),
                other => Err(de::Error::custom(format!(
                    "unknown region `{other}`; expected star, empty, all or a list of level tuples"
                ))),
            },
            RegionRepr::Tuples(t) => Ok(Region::Tuples(t)),
        }
    }
}

/// One data source: its observed axes, their block partition and the aligned regions.
///
/// The concatenation of `blocks` fixes the permuted order `Z = (Z_1, ..., Z_K)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub observed_axes: Vec<String>,
    pub blocks: Vec<Vec<String>>,
    pub regions: Vec<Region>,
}

impl SourceSpec {
    pub fn new(blocks: Vec<Vec<&str>>, regions: Vec<Region>) -> Self {
        let blocks: Vec<Vec<String>> = blocks
            .into_iter()
            .map(|b| b.into_iter().map(String::from).collect())
            .collect();
        SourceSpec {
            observed_axes: blocks.iter().flatten().cloned().collect(),
            blocks,
            regions,
        }
    }

    /// Axis names in block order.
    pub fn z_names(&self) -> Vec<String> {
        self.blocks.iter().flatten().cloned().collect()
    }

    /// The permutation taking `observed_axes` to block order: `z[i] = observed[perm[i]]`.
    pub fn permutation(&self) -> Vec<usize> {
        self.z_names()
            .iter()
            .map(|n| self.observed_axes.iter().position(|o| o == n).unwrap_or(usize::MAX))
            .collect()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// The alignment collection: one [`SourceSpec`] per source, sources numbered from 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentSpec {
    pub sources: Vec<SourceSpec>,
}

impl AlignmentSpec {
    pub fn new(sources: Vec<SourceSpec>) -> Self {
        AlignmentSpec { sources }
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    /// Resolves names against the ideal space and precomputes all projections.
    pub fn compile(&self, ideal: &AxisSet) -> Result<CompiledSpec> {
        if self.sources.is_empty() {
            return Err(Error::InvalidSpec("at least one source is required".into()));
        }
        let chains = self
            .sources
            .iter()
            .enumerate()
            .map(|(j, s)| SourceChain::compile(ideal, s, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledSpec {
            ideal: ideal.clone(),
            spec: self.clone(),
            chains,
        })
    }
}

/// A source specification resolved against the ideal space.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceChain {
    /// Source space `Z^(j)` in block order.
    pub z_space: AxisSet,
    /// Ideal cells to source cells.
    pub w_to_z: Projection,
    /// Ideal cells to prefix cells `Zbar_k`, for `k = 0..=K`.
    pub w_prefix: Vec<Projection>,
    /// Source cells to prefix cells `Zbar_k`, for `k = 0..=K`.
    pub z_prefix: Vec<Projection>,
    /// For block `k` (0-based), the aligned region as a mask over `Zbar_k` cells.
    pub masks: Vec<Vec<bool>>,
    /// Number of cells of each block.
    pub block_sizes: Vec<usize>,
}

impl SourceChain {
    fn compile(ideal: &AxisSet, src: &SourceSpec, j: usize) -> Result<SourceChain> {
        let tag = format!("source {}", j + 1);
        if src.blocks.is_empty() {
            return Err(Error::InvalidSpec(format!("{tag}: no blocks")));
        }
        if src.blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::InvalidSpec(format!("{tag}: empty block")));
        }
        if src.regions.len() != src.blocks.len() {
            return Err(Error::InvalidSpec(format!(
                "{tag}: {} blocks but {} regions",
                src.blocks.len(),
                src.regions.len()
            )));
        }
        let z_names = src.z_names();
        let mut sorted_z = z_names.clone();
        sorted_z.sort();
        let mut sorted_obs = src.observed_axes.clone();
        sorted_obs.sort();
        if sorted_z != sorted_obs {
            return Err(Error::InvalidSpec(format!(
                "{tag}: blocks do not partition the observed axes"
            )));
        }
        for n in &z_names {
            ideal.axis(n)?;
        }
        let z_space = ideal.sub(&z_names)?;
        let w_to_z = ideal.projection(&z_names)?;
        let k_total = src.blocks.len();
        let mut w_prefix = Vec::with_capacity(k_total + 1);
        let mut z_prefix = Vec::with_capacity(k_total + 1);
        let mut names: Vec<String> = Vec::new();
        for k in 0..=k_total {
            if k > 0 {
                names.extend(src.blocks[k - 1].iter().cloned());
            }
            w_prefix.push(ideal.projection(&names)?);
            z_prefix.push(z_space.projection(&names)?);
        }
        let mut masks = Vec::with_capacity(k_total);
        for (k, region) in src.regions.iter().enumerate() {
            let pre = &z_prefix[k].sub;
            let mask = match region {
                Region::Star | Region::All => vec![true; pre.len()],
                Region::Empty => vec![false; pre.len()],
                Region::Tuples(tuples) => {
                    if k == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "{tag}: the first block's region must be star or empty"
                        )));
                    }
                    let mut m = vec![false; pre.len()];
                    for t in tuples {
                        m[pre.index_of_labels(t)?] = true;
                    }
                    m
                }
            };
            if k > 0 && *region == Region::Star {
                return Err(Error::InvalidSpec(format!(
                    "{tag}: `star` is reserved for the first block; use `all`"
                )));
            }
            masks.push(mask);
        }
        let block_sizes = src
            .blocks
            .iter()
            .map(|b| b.iter().map(|n| ideal.axis(n).map(|a| a.len())).product())
            .collect::<Result<Vec<usize>>>()?;
        Ok(SourceChain {
            z_space,
            w_to_z,
            w_prefix,
            z_prefix,
            masks,
            block_sizes,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.masks.len()
    }

    /// Index of the `Zbar_k` cell preceding a `Zbar_{k+1}` cell.
    pub fn parent(&self, k: usize, cell: usize) -> usize {
        cell / self.block_sizes[k]
    }

    /// Region mask for block `k` pulled up to `Zbar_{k+1}` cells.
    pub fn mask_up(&self, k: usize) -> Vec<bool> {
        (0..self.z_prefix[k + 1].sub.len())
            .map(|c| self.masks[k][self.parent(k, c)])
            .collect()
    }

    /// Whether any part of block `k` is aligned.
    pub fn block_aligned_anywhere(&self, k: usize) -> bool {
        self.masks[k].iter().any(|&b| b)
    }
}

/// An alignment collection resolved against an ideal space.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledSpec {
    pub ideal: AxisSet,
    pub spec: AlignmentSpec,
    pub chains: Vec<SourceChain>,
}

impl CompiledSpec {
    pub fn num_sources(&self) -> usize {
        self.chains.len()
    }

    /// Offsets of each source's cells in the observed enumeration.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.chains.len() + 1);
        let mut acc = 0;
        out.push(0);
        for c in &self.chains {
            acc += c.z_space.len();
            out.push(acc);
        }
        out
    }

    /// Number of observed cells `sum_j |range(Z^(j))|`.
    pub fn num_obs_cells(&self) -> usize {
        self.chains.iter().map(|c| c.z_space.len()).sum()
    }
}
