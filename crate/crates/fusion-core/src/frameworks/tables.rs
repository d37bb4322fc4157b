//! Table plumbing shared by the frameworks: source tables in ideal-axis order and
//! conditional quantities lifted back to every cell.

use crate::error::{Error, Result};
use crate::model::{CompiledSpec, FusedLaw};
use crate::{ObsFunction, Pmf};

/// A source law re-indexed so that its axes follow the ideal-space order.
#[derive(Clone, Debug)]
pub(crate) struct SourceFrame {
    /// `P(. | S=j)` over the observed axes in ideal order.
    pub p: Pmf,
    /// Source cell (block order) to cell of `p`.
    z_to_w: Vec<usize>,
}

impl SourceFrame {
    pub fn new(law: &FusedLaw, spec: &CompiledSpec, j: usize) -> Result<Self> {
        let z = &spec.chains[j].z_space;
        let names: Vec<&str> = spec
            .ideal
            .names()
            .into_iter()
            .filter(|n| z.position(n).is_some())
            .collect();
        let src = &law.sources[j];
        if src.space() != z {
            return Err(Error::InvalidArgument(format!(
                "source {} law is not defined on {:?}",
                j + 1,
                z.names()
            )));
        }
        let p = src.marginal(&names)?.with_mode(src.mode())?;
        let z_to_w = z.projection(&names)?.map;
        Ok(SourceFrame { p, z_to_w })
    }

    /// A function on the cells of `p`, re-indexed to the source cells.
    pub fn to_z(&self, f: &[f64]) -> Vec<f64> {
        self.z_to_w.iter().map(|&i| f[i]).collect()
    }
}

pub(crate) fn frames(law: &FusedLaw, spec: &CompiledSpec) -> Result<Vec<SourceFrame>> {
    (0..spec.num_sources())
        .map(|j| SourceFrame::new(law, spec, j))
        .collect()
}

/// Concatenates per-source functions (each in ideal order) into an observed function.
pub(crate) fn to_obs(frames: &[SourceFrame], parts: &[Vec<f64>]) -> ObsFunction {
    frames
        .iter()
        .zip(parts)
        .flat_map(|(fr, f)| fr.to_z(f))
        .collect()
}

/// `n / d`, with the convention `0` where `d` vanishes.
pub(crate) fn ratio(n: f64, d: f64) -> f64 {
    if d > 0.0 {
        n / d
    } else {
        0.0
    }
}

/// Checks that an axis has exactly the levels `0, 1` in that order.
pub(crate) fn require_levels01(space: &crate::AxisSet, axis: &str) -> Result<()> {
    let a = space.axis(axis)?;
    if a.levels != ["0", "1"] {
        return Err(Error::InvalidSpec(format!(
            "axis `{axis}` must be binary with levels 0, 1 in that order"
        )));
    }
    Ok(())
}
