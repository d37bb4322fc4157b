//! Worked fused-data frameworks with an identified parameter: the identification
//! functional `φ(P)`, the ideal target `ψ(Q)` and its influence function, reconstruction of
//! the ideal law from the observed one, and closed-form observed influence functions.

pub mod prevalence;
mod tables;
pub mod transport;
pub mod tsiv;
pub mod ub;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discrete::{Axis, AxisSet};
use crate::error::{Error, Result};
use crate::influence::IfFamily;
use crate::model::{CompiledSpec, FusedLaw};
use crate::score::FusedModel;
use crate::{IdealFunction, ObsFunction, Pmf};

pub use prevalence::Prevalence;
pub use transport::{aipw_ideal_if, ate, Scenario, Transport};
pub use tsiv::{Tsiv, TsivFit};
pub use ub::{
    generic_ub_eif_discrete, generic_ub_full_if, generic_ub_if, naive_vs_obedient_demo,
    reconstruct_joint, GenericUb, NaiveVsObedient, UbEif, UbRoles,
};

/// Common interface of the frameworks.
pub trait FusedFramework {
    /// The alignment collection of the framework on its ideal space.
    fn spec(&self) -> &CompiledSpec;

    /// The target `ψ(Q)`.
    fn psi(&self, q: &Pmf) -> Result<f64>;

    /// An influence function of `ψ` at `Q` (the unique one when the ideal model is
    /// nonparametric).
    fn ideal_if(&self, q: &Pmf) -> Result<IdealFunction>;

    /// The identification functional, computed from the observed law only.
    fn phi(&self, law: &FusedLaw) -> Result<f64>;

    /// An ideal law aligned with `law` (the unique one when the alignments determine it).
    fn reconstruct_q(&self, law: &FusedLaw) -> Result<Pmf>;

    /// The reconstruction used to project an arbitrary observed law into the model.
    fn reconstruct_q_obedient(&self, law: &FusedLaw) -> Result<Pmf> {
        self.reconstruct_q(law)
    }

    /// The framework's closed-form observed-data influence function.
    fn closed_form_if(&self, law: &FusedLaw) -> Result<ObsFunction>;

    /// All closed-form influence functions: the closed form plus free directions.
    fn if_family(&self, law: &FusedLaw) -> Result<IfFamily> {
        Ok(IfFamily {
            base: self.closed_form_if(law)?,
            directions: Vec::new(),
        })
    }

    /// The efficient influence function.
    fn eif(&self, law: &FusedLaw) -> Result<ObsFunction> {
        self.closed_form_if(law)
    }

    /// Basis of the ideal tangent space when the ideal model is restricted.
    fn tangent_basis(&self, _q: &Pmf) -> Result<Option<Vec<IdealFunction>>> {
        Ok(None)
    }

    /// The generic model bound to `law` and the reconstructed ideal law.
    fn model(&self, law: &FusedLaw) -> Result<FusedModel> {
        let q = self.reconstruct_q(law)?;
        self.bind(q, law)
    }

    /// The generic model bound to `law` and a given aligned ideal law.
    fn bind(&self, q: Pmf, law: &FusedLaw) -> Result<FusedModel> {
        let basis = self.tangent_basis(&q)?;
        let m = FusedModel::from_law(q, law.clone(), self.spec().clone())?;
        match basis {
            Some(b) => m.with_tangent_basis(&b),
            None => Ok(m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameworkKind {
    Prevalence,
    Tsiv,
    TransportI,
    TransportIi,
    TransportIiia,
    TransportIiib,
    UbPoint,
    UbFull,
}

impl FrameworkKind {
    pub const ALL: [FrameworkKind; 8] = [
        FrameworkKind::Prevalence,
        FrameworkKind::Tsiv,
        FrameworkKind::TransportI,
        FrameworkKind::TransportIi,
        FrameworkKind::TransportIiia,
        FrameworkKind::TransportIiib,
        FrameworkKind::UbPoint,
        FrameworkKind::UbFull,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FrameworkKind::Prevalence => "prevalence",
            FrameworkKind::Tsiv => "tsiv",
            FrameworkKind::TransportI => "transport-i",
            FrameworkKind::TransportIi => "transport-ii",
            FrameworkKind::TransportIiia => "transport-iiia",
            FrameworkKind::TransportIiib => "transport-iiib",
            FrameworkKind::UbPoint => "ub-point",
            FrameworkKind::UbFull => "ub-full",
        }
    }

    /// Whether the framework admits more than one influence function.
    pub fn has_free_directions(&self) -> bool {
        matches!(self, FrameworkKind::TransportIiia | FrameworkKind::UbFull)
    }

    /// A small ideal space with the axes the framework expects.
    pub fn default_ideal(&self) -> AxisSet {
        let bin = |n: &str| Axis::new(n, &["0", "1"]);
        let axes = match self {
            FrameworkKind::Prevalence => vec![Axis::indexed("X", 2), bin("V"), bin("Y")],
            FrameworkKind::Tsiv => vec![
                Axis::new("L", &["0", "1", "2"]),
                Axis::new("X", &["0", "1", "2"]),
                bin("Y"),
            ],
            FrameworkKind::TransportI
            | FrameworkKind::TransportIi
            | FrameworkKind::TransportIiia
            | FrameworkKind::TransportIiib => vec![
                Axis::new("L1", &["1", "2"]),
                Axis::new("L2", &["1", "2", "3"]),
                bin("A"),
                bin("Y"),
            ],
            FrameworkKind::UbPoint | FrameworkKind::UbFull => {
                vec![Axis::indexed("U", 3), Axis::indexed("B", 3)]
            }
        };
        AxisSet::new(axes).expect("distinct axis names")
    }
}

impl fmt::Display for FrameworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrameworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FrameworkKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = FrameworkKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!(
                    "unknown framework `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Framework parameters that are not implied by the ideal space.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameworkParams {
    /// Anchor level: `u0` for the `(U, B)` frameworks, the covariate level `l0` for
    /// transport scenario `IiiB`.
    pub anchor: Option<Vec<String>>,
    /// Target cell `(u*, b*)` of the `(U, B)` frameworks, in ideal-axis order.
    pub target: Option<Vec<String>>,
}

#[derive(Clone, Debug)]
enum Inner {
    Prevalence(Prevalence),
    Tsiv(Tsiv),
    Transport(Transport),
    Ub(GenericUb),
}

/// A framework bound to an ideal space.
#[derive(Clone, Debug)]
pub struct Framework {
    kind: FrameworkKind,
    inner: Inner,
}

macro_rules! dispatch {
    ($self:expr, $f:ident => $e:expr) => {
        match &$self.inner {
            Inner::Prevalence($f) => $e,
            Inner::Tsiv($f) => $e,
            Inner::Transport($f) => $e,
            Inner::Ub($f) => $e,
        }
    };
}

impl Framework {
    pub fn new(kind: FrameworkKind, ideal: &AxisSet, params: &FrameworkParams) -> Result<Self> {
        let anchor = params.anchor.as_deref();
        let inner = match kind {
            FrameworkKind::Prevalence => Inner::Prevalence(Prevalence::new(ideal)?),
            FrameworkKind::Tsiv => Inner::Tsiv(Tsiv::new(ideal)?),
            FrameworkKind::TransportI => Inner::Transport(Transport::new(ideal, Scenario::I, None)?),
            FrameworkKind::TransportIi => {
                Inner::Transport(Transport::new(ideal, Scenario::Ii, None)?)
            }
            FrameworkKind::TransportIiia => {
                Inner::Transport(Transport::new(ideal, Scenario::IiiA, None)?)
            }
            FrameworkKind::TransportIiib => {
                Inner::Transport(Transport::new(ideal, Scenario::IiiB, anchor)?)
            }
            FrameworkKind::UbPoint | FrameworkKind::UbFull => Inner::Ub(GenericUb::new(
                ideal,
                kind == FrameworkKind::UbFull,
                anchor,
                params.target.as_deref(),
            )?),
        };
        Ok(Framework { kind, inner })
    }

    /// The framework on its default ideal space.
    pub fn with_defaults(kind: FrameworkKind) -> Self {
        Framework::new(kind, &kind.default_ideal(), &FrameworkParams::default())
            .expect("default spaces satisfy every framework")
    }

    pub fn kind(&self) -> FrameworkKind {
        self.kind
    }

    pub fn as_prevalence(&self) -> Option<&Prevalence> {
        match &self.inner {
            Inner::Prevalence(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_tsiv(&self) -> Option<&Tsiv> {
        match &self.inner {
            Inner::Tsiv(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_transport(&self) -> Option<&Transport> {
        match &self.inner {
            Inner::Transport(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_ub(&self) -> Option<&GenericUb> {
        match &self.inner {
            Inner::Ub(p) => Some(p),
            _ => None,
        }
    }

    /// `(U, B)` roles for the frameworks that have them.
    pub fn ub_roles(&self) -> Option<UbRoles> {
        match &self.inner {
            Inner::Transport(t) => t.roles(),
            Inner::Ub(u) => Some(u.roles().clone()),
            _ => None,
        }
    }
}

impl FusedFramework for Framework {
    fn spec(&self) -> &CompiledSpec {
        dispatch!(self, f => f.spec())
    }

    fn psi(&self, q: &Pmf) -> Result<f64> {
        dispatch!(self, f => f.psi(q))
    }

    fn ideal_if(&self, q: &Pmf) -> Result<IdealFunction> {
        dispatch!(self, f => f.ideal_if(q))
    }

    fn phi(&self, law: &FusedLaw) -> Result<f64> {
        dispatch!(self, f => f.phi(law))
    }

    fn reconstruct_q(&self, law: &FusedLaw) -> Result<Pmf> {
        dispatch!(self, f => f.reconstruct_q(law))
    }

    fn reconstruct_q_obedient(&self, law: &FusedLaw) -> Result<Pmf> {
        dispatch!(self, f => f.reconstruct_q_obedient(law))
    }

    fn closed_form_if(&self, law: &FusedLaw) -> Result<ObsFunction> {
        dispatch!(self, f => f.closed_form_if(law))
    }

    fn if_family(&self, law: &FusedLaw) -> Result<IfFamily> {
        dispatch!(self, f => f.if_family(law))
    }

    fn eif(&self, law: &FusedLaw) -> Result<ObsFunction> {
        dispatch!(self, f => f.eif(law))
    }

    fn tangent_basis(&self, q: &Pmf) -> Result<Option<Vec<IdealFunction>>> {
        dispatch!(self, f => f.tangent_basis(q))
    }
}
