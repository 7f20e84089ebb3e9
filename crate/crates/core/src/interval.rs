use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interval procedure tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    UmauZ,
    UmauT,
    Eb,
    FabZ,
    FabT,
    #[serde(rename = "qbound")]
    QBound,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::UmauZ,
        Method::UmauT,
        Method::Eb,
        Method::FabZ,
        Method::FabT,
        Method::QBound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::UmauZ => "umau_z",
            Method::UmauT => "umau_t",
            Method::Eb => "eb",
            Method::FabZ => "fab_z",
            Method::FabT => "fab_t",
            Method::QBound => "qbound",
        }
    }

    /// Procedures whose frequentist coverage is exactly 1 − α for every mean.
    pub fn is_exact(self) -> bool {
        matches!(
            self,
            Method::UmauZ | Method::UmauT | Method::FabZ | Method::FabT
        )
    }

    /// Procedures that need within-group replicate data (a sample sd).
    pub fn needs_replicates(self) -> bool {
        matches!(self, Method::UmauT | Method::FabT)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown method `{s}`")))
    }
}

/// A confidence interval with its nominal level `1 − α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: Method,
}

impl Interval {
    pub fn new(lower: f64, upper: f64, level: f64, method: Method) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::domain(format!(
                "interval lower bound {lower} exceeds upper bound {upper}"
            )));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::domain(format!("level {level} not in (0, 1)")));
        }
        Ok(Self {
            lower,
            upper,
            level,
            method,
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Checks `0 < alpha < 1`.
pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_tags_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert!("fab".parse::<Method>().is_err());
    }

    #[test]
    fn interval_invariants() {
        assert!(Interval::new(1.0, 0.0, 0.95, Method::Eb).is_err());
        assert!(Interval::new(0.0, 1.0, 1.0, Method::Eb).is_err());
        let iv = Interval::new(-1.0, 3.0, 0.95, Method::Eb).unwrap();
        assert_eq!(iv.width(), 4.0);
        assert!(iv.contains(3.0) && !iv.contains(3.1));
    }
}
