//! Probability tables and real-valued tables over finite product spaces.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::axes::AxisSet;
use crate::error::{Error, Result};

/// Floor used by [`PmfMode::Floor`] before renormalizing.
pub const MASS_FLOOR: f64 = 1e-12;

/// Tolerance on the total mass of a table.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// How zero cells are treated when a table is constructed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PmfMode {
    /// Every cell must carry positive mass.
    #[default]
    Strict,
    /// Cells below [`MASS_FLOOR`] are raised to it and the table is renormalized.
    Floor,
    /// Zero cells are kept; conditionals on zero-mass cells are reported as undefined.
    Relaxed,
}

pub(crate) fn sum_tol<T: Float>(n: usize) -> T {
    let eps_based = T::epsilon() * T::from(64 * n.max(1)).unwrap();
    eps_based.max(T::from(NORMALIZATION_TOL).unwrap())
}

/// A probability mass function on an [`AxisSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct FinitePmf<T> {
    space: AxisSet,
    mass: Vec<T>,
    mode: PmfMode,
}

impl<T: Float> FinitePmf<T> {
    /// Validates a table that is already normalized.
    pub fn new(space: AxisSet, mass: Vec<T>, mode: PmfMode) -> Result<Self> {
        if mass.len() != space.len() {
            return Err(Error::ShapeMismatch {
                expected: space.len(),
                found: mass.len(),
            });
        }
        if let Some(i) = mass.iter().position(|m| !m.is_finite() || *m < T::zero()) {
            return Err(Error::InvalidMass(i));
        }
        let total = mass.iter().fold(T::zero(), |a, &b| a + b);
        if (total - T::one()).abs() > sum_tol::<T>(mass.len()) {
            return Err(Error::NotNormalized(total.to_f64().unwrap_or(f64::NAN)));
        }
        let mut pmf = FinitePmf { space, mass, mode };
        pmf.apply_mode()?;
        Ok(pmf)
    }

    /// Normalizes nonnegative weights into a table.
    pub fn from_weights(space: AxisSet, weights: Vec<T>, mode: PmfMode) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::ShapeMismatch {
                expected: space.len(),
                found: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|m| !m.is_finite() || *m < T::zero()) {
            return Err(Error::InvalidMass(i));
        }
        let total = weights.iter().fold(T::zero(), |a, &b| a + b);
        if total <= T::zero() {
            return Err(Error::NotNormalized(0.0));
        }
        let mass = weights.into_iter().map(|w| w / total).collect();
        let mut pmf = FinitePmf { space, mass, mode };
        pmf.apply_mode()?;
        Ok(pmf)
    }

    pub fn uniform(space: AxisSet) -> Self {
        let n = T::from(space.len()).unwrap();
        let mass = vec![T::one() / n; space.len()];
        FinitePmf {
            space,
            mass,
            mode: PmfMode::Strict,
        }
    }

    fn apply_mode(&mut self) -> Result<()> {
        match self.mode {
            PmfMode::Strict => {
                if let Some(i) = self.mass.iter().position(|m| *m <= T::zero()) {
                    return Err(Error::ZeroMass(i));
                }
            }
            PmfMode::Floor => {
                let floor = T::from(MASS_FLOOR).unwrap();
                if self.mass.iter().any(|m| *m < floor) {
                    for m in &mut self.mass {
                        if *m < floor {
                            *m = floor;
                        }
                    }
                    let total = self.mass.iter().fold(T::zero(), |a, &b| a + b);
                    for m in &mut self.mass {
                        *m = *m / total;
                    }
                }
            }
            PmfMode::Relaxed => {}
        }
        Ok(())
    }

    pub fn space(&self) -> &AxisSet {
        &self.space
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn mode(&self) -> PmfMode {
        self.mode
    }

    pub fn into_mass(self) -> Vec<T> {
        self.mass
    }

    /// Same table under a different zero-cell policy.
    pub fn with_mode(&self, mode: PmfMode) -> Result<Self> {
        FinitePmf::new(self.space.clone(), self.mass.clone(), mode)
    }

    /// Mass of the cell with the given labels.
    pub fn prob<S: AsRef<str>>(&self, labels: &[S]) -> Result<T> {
        Ok(self.mass[self.space.index_of_labels(labels)?])
    }

    /// Support indicator per cell.
    pub fn support(&self) -> Vec<bool> {
        self.mass.iter().map(|m| *m > T::zero()).collect()
    }

    /// Marginal over the named axes, in the given order.
    pub fn marginal<S: AsRef<str>>(&self, keep: &[S]) -> Result<FinitePmf<T>> {
        let proj = self.space.projection(keep)?;
        let mass = proj.sum(&self.mass);
        let mode = match self.mode {
            PmfMode::Strict => PmfMode::Strict,
            _ => PmfMode::Relaxed,
        };
        Ok(FinitePmf {
            space: proj.sub,
            mass,
            mode,
        })
    }

    /// Conditional table `p(target | given)` over the axes `given ++ target`.
    ///
    /// Given-cells with zero mass yield an error in strict mode and zeros otherwise.
    pub fn conditional<S: AsRef<str>>(&self, target: &[S], given: &[S]) -> Result<RealTable<T>> {
        for t in target {
            if given.iter().any(|g| g.as_ref() == t.as_ref()) {
                return Err(Error::InvalidArgument(format!(
                    "axis `{}` is both target and given",
                    t.as_ref()
                )));
            }
        }
        let names: Vec<&str> = given
            .iter()
            .map(|s| s.as_ref())
            .chain(target.iter().map(|s| s.as_ref()))
            .collect();
        let joint = self.marginal(&names)?;
        let given_names: Vec<&str> = given.iter().map(|s| s.as_ref()).collect();
        let proj = joint.space.projection(&given_names)?;
        let den = proj.sum(&joint.mass);
        let mut values = Vec::with_capacity(joint.mass.len());
        for (cell, &m) in joint.mass.iter().enumerate() {
            let d = den[proj.map[cell]];
            if d > T::zero() {
                values.push(m / d);
            } else if self.mode == PmfMode::Strict {
                return Err(Error::ZeroConditioningMass(proj.map[cell]));
            } else {
                values.push(T::zero());
            }
        }
        Ok(RealTable {
            space: joint.space,
            values,
        })
    }

    /// `E[f]`.
    pub fn expect(&self, f: &[T]) -> T {
        self.mass
            .iter()
            .zip(f)
            .fold(T::zero(), |a, (&m, &v)| a + m * v)
    }

    /// `E[f | given]` as a table over the given axes.
    pub fn cond_expect<S: AsRef<str>>(&self, f: &[T], given: &[S]) -> Result<RealTable<T>> {
        let proj = self.space.projection(given)?;
        if self.mode == PmfMode::Strict {
            let den = proj.sum(&self.mass);
            if let Some(i) = den.iter().position(|d| *d <= T::zero()) {
                return Err(Error::ZeroConditioningMass(i));
            }
        }
        Ok(RealTable {
            values: proj.cond_mean(&self.mass, f),
            space: proj.sub,
        })
    }
}

/// A real-valued function on a product space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealTable<T> {
    pub space: AxisSet,
    pub values: Vec<T>,
}

impl<T: Float> RealTable<T> {
    pub fn new(space: AxisSet, values: Vec<T>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::ShapeMismatch {
                expected: space.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMass(i));
        }
        Ok(RealTable { space, values })
    }

    pub fn get<S: AsRef<str>>(&self, labels: &[S]) -> Result<T> {
        Ok(self.values[self.space.index_of_labels(labels)?])
    }

    /// Pull back to a larger space containing all of this table's axes.
    pub fn lift_to(&self, space: &AxisSet) -> Result<Vec<T>> {
        let proj = space.projection(&self.space.names())?;
        Ok(proj.lift(&self.values))
    }
}
