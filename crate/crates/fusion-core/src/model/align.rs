//! Alignment, strong alignment and equivalence of ideal laws under a collection.

use serde::{Deserialize, Serialize};

use crate::discrete::DEFAULT_TOL;
use crate::error::{Error, Result};
use crate::model::law::{block_conditional, describe_prefix, ideal_on_source, prefix_masses, FusedLaw};
use crate::model::spec::CompiledSpec;
use crate::Pmf;

/// Largest conditional discrepancy found for one block of one source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDiscrepancy {
    /// Source number, from 1.
    pub source: usize,
    /// Block number, from 1.
    pub block: usize,
    /// `max |P(z_k | zbar, S=j) - Q(z_k | zbar)|` over the aligned region.
    pub discrepancy: f64,
}

/// Strong-alignment constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongBounds {
    /// Tightest `delta` with `1/delta <= dP(.|S=j)/dQ <= delta` on the aligned regions.
    pub delta: f64,
    /// Tightest `epsilon` with `1/epsilon <= dP(.|S=j)/dU^(j) <= epsilon` off them.
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub aligned: bool,
    pub tolerance: f64,
    pub discrepancies: Vec<BlockDiscrepancy>,
    pub support_violations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strong: Option<StrongBounds>,
}

impl AlignmentReport {
    /// Blocks whose discrepancy exceeds the tolerance.
    pub fn flagged(&self) -> Vec<(usize, usize)> {
        self.discrepancies
            .iter()
            .filter(|d| d.discrepancy > self.tolerance)
            .map(|d| (d.source, d.block))
            .collect()
    }
}

fn check_spaces(p: &FusedLaw, q: &Pmf, spec: &CompiledSpec) -> Result<()> {
    if q.space() != &spec.ideal {
        return Err(Error::InvalidArgument(
            "ideal law is not defined on the specification's ideal space".into(),
        ));
    }
    if p.num_sources() != spec.num_sources() {
        return Err(Error::ShapeMismatch {
            expected: spec.num_sources(),
            found: p.num_sources(),
        });
    }
    for (j, (src, chain)) in p.sources.iter().zip(&spec.chains).enumerate() {
        if src.space() != &chain.z_space {
            return Err(Error::InvalidArgument(format!(
                "source {} law is not defined on the source space {:?}",
                j + 1,
                chain.z_space.names()
            )));
        }
    }
    Ok(())
}

/// Checks that the source conditionals agree with those of `q` on every aligned region.
pub fn check_alignment(p: &FusedLaw, q: &Pmf, spec: &CompiledSpec) -> Result<AlignmentReport> {
    check_alignment_tol(p, q, spec, DEFAULT_TOL)
}

pub fn check_alignment_tol(
    p: &FusedLaw,
    q: &Pmf,
    spec: &CompiledSpec,
    tol: f64,
) -> Result<AlignmentReport> {
    check_spaces(p, q, spec)?;
    let mut discrepancies = Vec::new();
    let mut support_violations = Vec::new();
    for (j, chain) in spec.chains.iter().enumerate() {
        let q_pre = prefix_masses(chain, &ideal_on_source(chain, q));
        let p_pre = prefix_masses(chain, p.sources[j].mass());
        for k in 0..chain.num_blocks() {
            if !chain.block_aligned_anywhere(k) {
                continue;
            }
            let qc = block_conditional(chain, &q_pre, k);
            let pc = block_conditional(chain, &p_pre, k);
            for (a, &on) in chain.masks[k].iter().enumerate() {
                if !on {
                    continue;
                }
                if k > 0 && (q_pre[k][a] <= 0.0 || p_pre[k][a] <= 0.0) {
                    support_violations.push(format!(
                        "source {} block {}: aligned cell {} lies outside the support",
                        j + 1,
                        k + 1,
                        describe_prefix(chain, k, a)
                    ));
                }
            }
            let mut worst: f64 = 0.0;
            for (b, (x, y)) in pc.iter().zip(&qc).enumerate() {
                let a = chain.parent(k, b);
                if chain.masks[k][a] && q_pre[k][a] > 0.0 {
                    worst = worst.max((x - y).abs());
                }
            }
            discrepancies.push(BlockDiscrepancy {
                source: j + 1,
                block: k + 1,
                discrepancy: worst,
            });
        }
    }
    let aligned =
        support_violations.is_empty() && discrepancies.iter().all(|d| d.discrepancy <= tol);
    Ok(AlignmentReport {
        aligned,
        tolerance: tol,
        discrepancies,
        support_violations,
        strong: None,
    })
}

fn widen(bound: &mut f64, ratio: f64) {
    *bound = bound.max(ratio).max(1.0 / ratio);
}

/// Computes the strong-alignment constants of `(Q, U, P)`.
pub fn check_strong_alignment(
    p: &FusedLaw,
    q: &Pmf,
    u: &[Pmf],
    spec: &CompiledSpec,
) -> Result<StrongBounds> {
    let report = check_alignment(p, q, spec)?;
    if !report.aligned {
        return Err(Error::Misaligned(format!(
            "blocks {:?} disagree with the ideal law",
            report.flagged()
        )));
    }
    let mut delta: f64 = 1.0;
    let mut epsilon: f64 = 1.0;
    for (j, chain) in spec.chains.iter().enumerate() {
        let q_pre = prefix_masses(chain, &ideal_on_source(chain, q));
        let p_pre = prefix_masses(chain, p.sources[j].mass());
        let u_pre = prefix_masses(chain, u[j].mass());
        for k in 1..chain.num_blocks() {
            for (a, &on) in chain.masks[k].iter().enumerate() {
                if on {
                    if q_pre[k][a] <= 0.0 {
                        continue;
                    }
                    let r = p_pre[k][a] / q_pre[k][a];
                    if r <= 0.0 {
                        return Err(Error::Positivity(format!(
                            "source {}: dP/dQ vanishes at aligned cell {}",
                            j + 1,
                            describe_prefix(chain, k, a)
                        )));
                    }
                    widen(&mut delta, r);
                } else if p_pre[k][a] > 0.0 {
                    if u_pre[k][a] <= 0.0 {
                        return Err(Error::Positivity(format!(
                            "source {}: dP/dU is unbounded at {}",
                            j + 1,
                            describe_prefix(chain, k, a)
                        )));
                    }
                    widen(&mut epsilon, p_pre[k][a] / u_pre[k][a]);
                }
            }
        }
    }
    Ok(StrongBounds { delta, epsilon })
}

/// True iff every aligned conditional of `q1` and `q2` agrees on its region.
pub fn c_equivalent(q1: &Pmf, q2: &Pmf, spec: &CompiledSpec) -> bool {
    if q1.space() != &spec.ideal || q2.space() != &spec.ideal {
        return false;
    }
    for chain in &spec.chains {
        let a_pre = prefix_masses(chain, &ideal_on_source(chain, q1));
        let b_pre = prefix_masses(chain, &ideal_on_source(chain, q2));
        for k in 0..chain.num_blocks() {
            if !chain.block_aligned_anywhere(k) {
                continue;
            }
            let ac = block_conditional(chain, &a_pre, k);
            let bc = block_conditional(chain, &b_pre, k);
            for (b, (x, y)) in ac.iter().zip(&bc).enumerate() {
                let a = chain.parent(k, b);
                if !chain.masks[k][a] {
                    continue;
                }
                let pos = (a_pre[k][a] > 0.0, b_pre[k][a] > 0.0);
                if pos.0 != pos.1 || (pos.0 && (x - y).abs() > DEFAULT_TOL) {
                    return false;
                }
            }
        }
    }
    true
}
