//! Named categorical axes, their product space, and projections onto sub-products.
//!
//! Cells of a product space are enumerated row-major in the declared axis order:
//! the last axis varies fastest.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One categorical coordinate with ordered level labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub levels: Vec<String>,
}

impl Axis {
    pub fn new<S: Into<String>, L: ToString>(name: S, levels: &[L]) -> Self {
        Axis {
            name: name.into(),
            levels: levels.iter().map(|l| l.to_string()).collect(),
        }
    }

    /// Levels `0, 1, ..., n-1` as labels.
    pub fn indexed<S: Into<String>>(name: S, n: usize) -> Self {
        Axis {
            name: name.into(),
            levels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level_index(&self, label: &str) -> Result<usize> {
        self.levels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLevel {
                axis: self.name.clone(),
                level: label.to_string(),
            })
    }

    /// Numeric value of every level, for axes whose labels are numbers.
    pub fn numeric_levels(&self) -> Result<Vec<f64>> {
        self.levels
            .iter()
            .map(|l| {
                l.trim().parse::<f64>().map_err(|_| Error::NonNumericLevel {
                    axis: self.name.clone(),
                    level: l.clone(),
                })
            })
            .collect()
    }
}

/// An ordered product of axes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Axis>", into = "Vec<Axis>")]
pub struct AxisSet {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl TryFrom<Vec<Axis>> for AxisSet {
    type Error = Error;
    fn try_from(axes: Vec<Axis>) -> Result<Self> {
        AxisSet::new(axes)
    }
}

impl From<AxisSet> for Vec<Axis> {
    fn from(set: AxisSet) -> Self {
        set.axes
    }
}

impl AxisSet {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::DuplicateAxis(a.name.clone()));
            }
            if a.levels.is_empty() {
                return Err(Error::EmptyAxis(a.name.clone()));
            }
            for (k, l) in a.levels.iter().enumerate() {
                if a.levels[..k].contains(l) {
                    return Err(Error::DuplicateLevel {
                        axis: a.name.clone(),
                        level: l.clone(),
                    });
                }
            }
        }
        let mut strides = vec![1; axes.len()];
        for i in (0..axes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].len();
        }
        let len = axes.iter().map(Axis::len).product();
        Ok(AxisSet { axes, strides, len })
    }

    /// The zero-dimensional product with a single cell.
    pub fn unit() -> Self {
        AxisSet {
            axes: Vec::new(),
            strides: Vec::new(),
            len: 1,
        }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn names(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.name.as_str()).collect()
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    pub fn axis(&self, name: &str) -> Result<&Axis> {
        self.position(name)
            .map(|i| &self.axes[i])
            .ok_or_else(|| Error::UnknownAxis(name.to_string()))
    }

    /// Level indices of a cell, one per axis.
    pub fn coords(&self, cell: usize) -> Vec<usize> {
        self.axes
            .iter()
            .zip(&self.strides)
            .map(|(a, s)| (cell / s) % a.len())
            .collect()
    }

    /// Cell index of a tuple of level indices.
    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    /// Cell index of a tuple of level labels.
    pub fn index_of_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<usize> {
        if labels.len() != self.axes.len() {
            return Err(Error::ShapeMismatch {
                expected: self.axes.len(),
                found: labels.len(),
            });
        }
        let mut idx = 0;
        for ((a, s), l) in self.axes.iter().zip(&self.strides).zip(labels) {
            idx += a.level_index(l.as_ref())? * s;
        }
        Ok(idx)
    }

    /// Level labels of a cell.
    pub fn labels(&self, cell: usize) -> Vec<&str> {
        self.coords(cell)
            .into_iter()
            .zip(&self.axes)
            .map(|(c, a)| a.levels[c].as_str())
            .collect()
    }

    /// Human-readable cell name such as `X=1,Y=0`.
    pub fn cell_name(&self, cell: usize) -> String {
        self.labels(cell)
            .iter()
            .zip(&self.axes)
            .map(|(l, a)| format!("{}={}", a.name, l))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Sub-product over the named axes, in the given order.
    pub fn sub<S: AsRef<str>>(&self, names: &[S]) -> Result<AxisSet> {
        let axes = names
            .iter()
            .map(|n| self.axis(n.as_ref()).cloned())
            .collect::<Result<Vec<_>>>()?;
        AxisSet::new(axes)
    }

    /// Concatenation of two products with disjoint names.
    pub fn concat(&self, other: &AxisSet) -> Result<AxisSet> {
        let mut axes = self.axes.clone();
        axes.extend(other.axes.iter().cloned());
        AxisSet::new(axes)
    }

    /// Projection of this space onto the named axes (in the given order).
    pub fn projection<S: AsRef<str>>(&self, names: &[S]) -> Result<Projection> {
        let sub = self.sub(names)?;
        let pos: Vec<usize> = names
            .iter()
            .map(|n| self.position(n.as_ref()).expect("checked by sub"))
            .collect();
        let map = (0..self.len)
            .map(|cell| {
                let c = self.coords(cell);
                let sc: Vec<usize> = pos.iter().map(|&p| c[p]).collect();
                sub.index(&sc)
            })
            .collect();
        Ok(Projection { sub, map })
    }

    /// Numeric value of a named axis at every cell.
    pub fn numeric_axis<T: Float>(&self, name: &str) -> Result<Vec<T>> {
        let p = self.position(name).ok_or_else(|| Error::UnknownAxis(name.into()))?;
        let vals = self.axes[p].numeric_levels()?;
        Ok((0..self.len)
            .map(|cell| T::from(vals[(cell / self.strides[p]) % self.axes[p].len()]).unwrap())
            .collect())
    }

    /// Indicator of `axis == level` at every cell.
    pub fn indicator<T: Float>(&self, name: &str, level: &str) -> Result<Vec<T>> {
        let p = self.position(name).ok_or_else(|| Error::UnknownAxis(name.into()))?;
        let li = self.axes[p].level_index(level)?;
        Ok((0..self.len)
            .map(|cell| {
                if (cell / self.strides[p]) % self.axes[p].len() == li {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect())
    }
}

/// A map from the cells of a product space to the cells of a sub-product.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Projection {
    pub sub: AxisSet,
    pub map: Vec<usize>,
}

impl Projection {
    /// Sum of `w` within each sub-cell.
    pub fn sum<T: Float>(&self, w: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.sub.len()];
        for (cell, &t) in self.map.iter().enumerate() {
            out[t] = out[t] + w[cell];
        }
        out
    }

    /// Weighted conditional mean of `f` within each sub-cell; zero where the weight vanishes.
    pub fn cond_mean<T: Float>(&self, w: &[T], f: &[T]) -> Vec<T> {
        let mut num = vec![T::zero(); self.sub.len()];
        let mut den = vec![T::zero(); self.sub.len()];
        for (cell, &t) in self.map.iter().enumerate() {
            num[t] = num[t] + w[cell] * f[cell];
            den[t] = den[t] + w[cell];
        }
        num.iter()
            .zip(&den)
            .map(|(&n, &d)| if d > T::zero() { n / d } else { T::zero() })
            .collect()
    }

    /// Pull back a function on the sub-product to the full product.
    pub fn lift<T: Float>(&self, g: &[T]) -> Vec<T> {
        self.map.iter().map(|&t| g[t]).collect()
    }
}
