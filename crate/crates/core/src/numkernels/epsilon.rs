use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// A privacy budget: a positive real, or `Infinite` for no noise at all.
///
/// Serialized as a JSON number, or as the string `"inf"` when infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Finite(f64),
    Infinite,
}

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if value == f64::INFINITY {
            Ok(Epsilon::Infinite)
        } else if value > 0.0 && value.is_finite() {
            Ok(Epsilon::Finite(value))
        } else {
            Err(Error::Argument(format!("epsilon must be positive or \"inf\", got {value}")))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Epsilon::Infinite)
    }

    pub fn value(self) -> f64 {
        match self {
            Epsilon::Finite(e) => e,
            Epsilon::Infinite => f64::INFINITY,
        }
    }

    /// This budget divided by `parts` (used for the even marginal/correlation
    /// split and for strict composition across columns).
    pub fn divide(self, parts: f64) -> Epsilon {
        match self {
            Epsilon::Finite(e) => Epsilon::Finite(e / parts),
            Epsilon::Infinite => Epsilon::Infinite,
        }
    }

    /// Laplace scale `sensitivity / ε`, or `None` when no noise is due.
    pub fn laplace_scale(self, sensitivity: f64) -> Option<f64> {
        match self {
            Epsilon::Finite(e) => Some(sensitivity / e),
            Epsilon::Infinite => None,
        }
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Finite(1.0)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Epsilon::Finite(e) => write!(f, "{e}"),
            Epsilon::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" => Ok(Epsilon::Infinite),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Argument(format!("epsilon must be a positive number or \"inf\", got `{s}`")))
                .and_then(Epsilon::new),
        }
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Epsilon::Finite(e) => serializer.serialize_f64(*e),
            Epsilon::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Epsilon::new(v).map_err(de::Error::custom),
            Repr::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}
