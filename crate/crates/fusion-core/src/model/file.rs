//! JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discrete::json::PmfJson;
use crate::discrete::PmfMode;
use crate::error::{Error, Result};
use crate::model::law::{assemble_observed_law, FusedLaw};
use crate::model::spec::{AlignmentSpec, CompiledSpec, SourceSpec};
use crate::Pmf;

/// `{"ideal": pmf, "sources": [...], "lambda": [...], "source_laws": [...]}` or
/// `"derive_from_ideal": true` in place of `source_laws`.
///
/// With `derive_from_ideal`, each source law is assembled from the ideal law and the
/// optional `free_laws` (defaulting to the ideal marginals on each source space).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub ideal: PmfJson,
    pub sources: Vec<SourceSpec>,
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_laws: Option<Vec<PmfJson>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub derive_from_ideal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_laws: Option<Vec<PmfJson>>,
    /// Functions on the ideal space spanning the tangent space of a restricted ideal model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangent_basis: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub mode: PmfMode,
}

/// A model file resolved into tables.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub q: Pmf,
    pub spec: CompiledSpec,
    pub law: FusedLaw,
    pub tangent_basis: Option<Vec<Vec<f64>>>,
}

impl ModelFile {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn resolve(self) -> Result<LoadedModel> {
        let q = self.ideal.into_pmf(self.mode)?;
        let spec = AlignmentSpec::new(self.sources).compile(q.space())?;
        let law = match (self.source_laws, self.derive_from_ideal) {
            (Some(_), true) => {
                return Err(Error::InvalidSpec(
                    "give either source_laws or derive_from_ideal, not both".into(),
                ))
            }
            (Some(laws), false) => {
                let sources = laws
                    .into_iter()
                    .map(|l| l.into_pmf(self.mode))
                    .collect::<Result<Vec<_>>>()?;
                FusedLaw::new(self.lambda, sources)?
            }
            (None, true) => {
                let u = match self.free_laws {
                    Some(laws) => laws
                        .into_iter()
                        .map(|l| l.into_pmf(self.mode))
                        .collect::<Result<Vec<_>>>()?,
                    None => spec
                        .chains
                        .iter()
                        .map(|c| q.marginal(&c.z_space.names()))
                        .collect::<Result<Vec<_>>>()?,
                };
                assemble_observed_law(&q, &u, &self.lambda, &spec)?
            }
            (None, false) => {
                return Err(Error::InvalidSpec(
                    "a model file needs source_laws or derive_from_ideal".into(),
                ))
            }
        };
        if law.sources.len() != spec.num_sources() {
            return Err(Error::ShapeMismatch {
                expected: spec.num_sources(),
                found: law.sources.len(),
            });
        }
        for (j, (s, c)) in law.sources.iter().zip(&spec.chains).enumerate() {
            if s.space() != &c.z_space {
                return Err(Error::InvalidSpec(format!(
                    "source law {} must list the axes {:?} in block order",
                    j + 1,
                    c.z_space.names()
                )));
            }
        }
        if let Some(basis) = &self.tangent_basis {
            if let Some(bad) = basis.iter().find(|b| b.len() != q.space().len()) {
                return Err(Error::ShapeMismatch {
                    expected: q.space().len(),
                    found: bad.len(),
                });
            }
        }
        Ok(LoadedModel {
            q,
            spec,
            law,
            tangent_basis: self.tangent_basis,
        })
    }
}

impl LoadedModel {
    pub fn read(path: &Path) -> Result<Self> {
        ModelFile::read(path)?.resolve()
    }

    /// The model file describing this model with explicit source laws.
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            ideal: PmfJson::from_pmf(&self.q),
            sources: self.spec.spec.sources.clone(),
            lambda: self.law.lambda.clone(),
            source_laws: Some(self.law.sources.iter().map(PmfJson::from_pmf).collect()),
            derive_from_ideal: false,
            free_laws: None,
            tangent_basis: self.tangent_basis.clone(),
            mode: self.q.mode(),
        }
    }
}
