//! Distance kernels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `1 - cos(a, b)`, in `[0, 2]`.
    Cosine,
    Euclidean,
}

impl Metric {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Metric::Cosine => 0,
            Metric::Euclidean => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Metric::Cosine),
            1 => Some(Metric::Euclidean),
            _ => None,
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Metric::Cosine => cosine_distance(a, b),
            Metric::Euclidean => {
                check_dims(a, b)?;
                Ok(euclidean_unchecked(a, b))
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = OodError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(OodError::Parameter(format!("unknown metric {other:?}"))),
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(OodError::Parameter(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub(crate) fn euclidean_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

/// Cosine distance from precomputed squared norms. `sqrt(aa * bb)` keeps
/// `d(z, z) == 0` exact.
#[inline]
pub(crate) fn cosine_from_parts(ab: f64, aa: f64, bb: f64) -> f64 {
    (1.0 - ab / (aa * bb).sqrt()).clamp(0.0, 2.0)
}

/// `1 - (a . b) / (|a| |b|)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let aa = sq_norm(a);
    let bb = sq_norm(b);
    if aa == 0.0 || bb == 0.0 {
        return Err(OodError::Domain(
            "cosine distance is undefined for a zero vector".into(),
        ));
    }
    Ok(cosine_from_parts(dot(a, b), aa, bb))
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Metric::Euclidean.distance(a, b)
}
