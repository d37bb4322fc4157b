//! JSON form of probability tables and a formatter that writes every float with
//! 17 significant digits.

use std::io;

use serde::{Deserialize, Serialize};

use super::axes::{Axis, AxisSet};
use super::pmf::{FinitePmf, PmfMode};
use crate::error::Result;

/// `{"axes":[{"name":..,"levels":[..]}],"mass":[..row-major..]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfJson {
    pub axes: Vec<Axis>,
    pub mass: Vec<f64>,
}

impl PmfJson {
    pub fn from_pmf(p: &FinitePmf<f64>) -> Self {
        PmfJson {
            axes: p.space().axes().to_vec(),
            mass: p.mass().to_vec(),
        }
    }

    pub fn into_pmf(self, mode: PmfMode) -> Result<FinitePmf<f64>> {
        FinitePmf::new(AxisSet::new(self.axes)?, self.mass, mode)
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        // Non-finite values are not valid JSON numbers.
        "null".to_string()
    }
}

/// A compact JSON formatter that writes floats via [`fmt17`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        writer.write_all(fmt17(value as f64).as_bytes())
    }
}

/// Serializes any value to JSON with 17-significant-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn pmf_to_json(p: &FinitePmf<f64>) -> Result<String> {
    to_json_string(&PmfJson::from_pmf(p))
}

pub fn pmf_from_json(s: &str, mode: PmfMode) -> Result<FinitePmf<f64>> {
    let j: PmfJson = serde_json::from_str(s)?;
    j.into_pmf(mode)
}
