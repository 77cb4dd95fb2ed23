//! Time units at the I/O boundary. Everything inside is dimensionless
//! (times in 1/σ_hf); a material preset fixes how many nanoseconds that is.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::failure::Failure;

pub const GAAS_NS: f64 = 10.0;
pub const SI_NS: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Units {
    #[default]
    Dimensionless,
    GaAs,
    Si,
    /// Nanoseconds per 1/σ_hf.
    Custom(f64),
}

impl Units {
    /// Output time = internal time × this factor.
    pub fn time_scale(self) -> f64 {
        match self {
            Units::Dimensionless => 1.0,
            Units::GaAs => GAAS_NS,
            Units::Si => SI_NS,
            Units::Custom(ns) => ns,
        }
    }
}

impl FromStr for Units {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dimensionless" => Ok(Units::Dimensionless),
            "gaas" => Ok(Units::GaAs),
            "si" => Ok(Units::Si),
            other => {
                let ns = other
                    .strip_prefix("custom:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite() && *v > 0.0);
                ns.map(Units::Custom).ok_or_else(|| {
                    Failure::usage(format!(
                        "invalid units '{s}' (expected dimensionless, gaas, si or custom:<ns>)"
                    ))
                })
            }
        }
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Units::Dimensionless => f.write_str("dimensionless"),
            Units::GaAs => f.write_str("gaas"),
            Units::Si => f.write_str("si"),
            Units::Custom(ns) => write!(f, "custom:{ns}"),
        }
    }
}

impl Serialize for Units {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Units {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|e: Failure| serde::de::Error::custom(e.message))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_presets() {
        assert_eq!("gaas".parse::<Units>().unwrap().time_scale(), 10.0);
        assert_eq!("Si".parse::<Units>().unwrap().time_scale(), 300.0);
        assert_eq!("custom:12.5".parse::<Units>().unwrap().time_scale(), 12.5);
        assert!("custom:-1".parse::<Units>().is_err());
        assert!("furlongs".parse::<Units>().is_err());
    }

    #[test]
    fn round_trip_json() {
        for u in [Units::Dimensionless, Units::GaAs, Units::Si, Units::Custom(7.0)] {
            let s = serde_json::to_string(&u).unwrap();
            assert_eq!(serde_json::from_str::<Units>(&s).unwrap(), u);
        }
    }
}
