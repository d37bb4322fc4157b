//! Free-function forms of the table operations, plus operator matrices.

use nalgebra::DMatrix;
use num_traits::Float;

use super::axes::AxisSet;
use super::pmf::{FinitePmf, RealTable};
use crate::error::{Error, Result};

/// A dense matrix together with descriptions of its domain and codomain.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOpMatrix<T: nalgebra::Scalar> {
    pub domain: String,
    pub codomain: String,
    pub entries: DMatrix<T>,
}

impl<T: Float + nalgebra::Scalar> LinearOpMatrix<T> {
    /// Applies the matrix to a vector.
    pub fn apply(&self, f: &[T]) -> Vec<T> {
        let (r, c) = self.entries.shape();
        assert_eq!(c, f.len(), "operator applied to a vector of the wrong length");
        (0..r)
            .map(|i| (0..c).fold(T::zero(), |a, j| a + self.entries[(i, j)] * f[j]))
            .collect()
    }
}

/// Marginal of `p` over the named axes.
pub fn marginal<T: Float, S: AsRef<str>>(p: &FinitePmf<T>, keep: &[S]) -> Result<FinitePmf<T>> {
    p.marginal(keep)
}

/// Conditional table `p(target | given)`.
pub fn conditional<T: Float, S: AsRef<str>>(
    p: &FinitePmf<T>,
    target: &[S],
    given: &[S],
) -> Result<RealTable<T>> {
    p.conditional(target, given)
}

/// Ratio of the marginals of `num` and `den` over `axes`; zero off the support of `den`.
pub fn rn_ratio<T: Float, S: AsRef<str>>(
    num: &FinitePmf<T>,
    den: &FinitePmf<T>,
    axes: &[S],
) -> Result<RealTable<T>> {
    let n = num.marginal(axes)?;
    let d = den.marginal(axes)?;
    if n.space() != d.space() {
        return Err(Error::InvalidArgument(
            "numerator and denominator disagree on the axes' levels".into(),
        ));
    }
    let values = n
        .mass()
        .iter()
        .zip(d.mass())
        .map(|(&a, &b)| if b > T::zero() { a / b } else { T::zero() })
        .collect();
    RealTable::new(d.space().clone(), values)
}

/// The conditional-expectation projection `f -> E_p[f | to_axes]` acting on functions of `from_axes`.
///
/// Domain and codomain are both functions on the `from_axes` product, so the matrix is idempotent.
pub fn cond_exp_operator<T: Float + nalgebra::Scalar, S: AsRef<str>>(
    p: &FinitePmf<T>,
    from_axes: &[S],
    to_axes: &[S],
) -> Result<LinearOpMatrix<T>> {
    for t in to_axes {
        if !from_axes.iter().any(|f| f.as_ref() == t.as_ref()) {
            return Err(Error::InvalidArgument(format!(
                "target axis `{}` is not among the source axes",
                t.as_ref()
            )));
        }
    }
    let from = p.marginal(from_axes)?;
    let proj = from.space().projection(to_axes)?;
    let den = proj.sum(from.mass());
    let n = from.space().len();
    let mut m = DMatrix::from_element(n, n, T::zero());
    for i in 0..n {
        let d = den[proj.map[i]];
        if d <= T::zero() {
            if from.mode() == super::pmf::PmfMode::Strict {
                return Err(Error::ZeroConditioningMass(proj.map[i]));
            }
            continue;
        }
        for j in 0..n {
            if proj.map[j] == proj.map[i] {
                m[(i, j)] = from.mass()[j] / d;
            }
        }
    }
    Ok(LinearOpMatrix {
        domain: describe(from.space()),
        codomain: describe(from.space()),
        entries: m,
    })
}

/// `<f, g>` in `L^2(p)`.
pub fn l2_inner<T: Float>(p: &FinitePmf<T>, f: &RealTable<T>, g: &RealTable<T>) -> Result<T> {
    if &f.space != p.space() || &g.space != p.space() {
        return Err(Error::InvalidArgument(
            "functions are not defined on the measure's space".into(),
        ));
    }
    Ok(p.mass()
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .fold(T::zero(), |a, (&m, (&x, &y))| a + m * x * y))
}

/// True iff both tables live on the same space and have the same support.
pub fn mutually_abs_continuous<T: Float>(p: &FinitePmf<T>, q: &FinitePmf<T>) -> bool {
    p.space() == q.space() && p.support() == q.support()
}

pub(crate) fn describe(space: &AxisSet) -> String {
    if space.dim() == 0 {
        "()".to_string()
    } else {
        format!("({})", space.names().join(","))
    }
}
