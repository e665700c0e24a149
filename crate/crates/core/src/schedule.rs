//! Learning-rate schedules `gamma(t)` in continuous time `t = k / d`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable description of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { gamma: f64 },
    /// `values[k]` applies on `[breaks[k-1], breaks[k])`, with
    /// `values.len() == breaks.len() + 1`.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone)]
enum Kind {
    Constant(f64),
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A learning rate `0 <= gamma(t) <= bound`.
#[derive(Clone)]
pub struct Schedule {
    kind: Kind,
    bound: f64,
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Constant(g) => write!(f, "Schedule::Constant({g})"),
            Kind::Piecewise { breaks, values } => {
                write!(f, "Schedule::Piecewise({breaks:?}, {values:?})")
            }
            Kind::Custom(_) => write!(f, "Schedule::Custom(bound = {})", self.bound),
        }
    }
}

fn check_rate(g: f64) -> Result<()> {
    if g.is_finite() && g >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("gamma", format!("learning rate {g} must be finite and >= 0")))
    }
}

impl Schedule {
    pub fn constant(gamma: f64) -> Result<Self> {
        check_rate(gamma)?;
        Ok(Self {
            kind: Kind::Constant(gamma),
            bound: gamma,
        })
    }

    pub fn piecewise(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(Error::invalid(
                "values",
                "piecewise schedule needs one more value than breakpoints",
            ));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("breaks", "breakpoints must be finite and increasing"));
        }
        for &v in &values {
            check_rate(v)?;
        }
        let bound = values.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            kind: Kind::Piecewise { breaks, values },
            bound,
        })
    }

    /// Arbitrary schedule; values are clamped into `[0, bound]`.
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, bound: f64) -> Result<Self> {
        check_rate(bound)?;
        Ok(Self {
            kind: Kind::Custom(Arc::new(f)),
            bound,
        })
    }

    pub fn from_spec(spec: &ScheduleSpec) -> Result<Self> {
        match spec {
            ScheduleSpec::Constant { gamma } => Self::constant(*gamma),
            ScheduleSpec::Piecewise { breaks, values } => {
                Self::piecewise(breaks.clone(), values.clone())
            }
        }
    }

    /// Serializable form, if the schedule has one.
    pub fn spec(&self) -> Option<ScheduleSpec> {
        match &self.kind {
            Kind::Constant(g) => Some(ScheduleSpec::Constant { gamma: *g }),
            Kind::Piecewise { breaks, values } => Some(ScheduleSpec::Piecewise {
                breaks: breaks.clone(),
                values: values.clone(),
            }),
            Kind::Custom(_) => None,
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn gamma(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Constant(g) => *g,
            Kind::Piecewise { breaks, values } => {
                values[breaks.partition_point(|b| *b <= t)]
            }
            Kind::Custom(f) => {
                let g = f(t);
                if g.is_nan() {
                    0.0
                } else {
                    g.clamp(0.0, self.bound)
                }
            }
        }
    }

    /// Constant value, if the schedule is constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.kind {
            Kind::Constant(g) => Some(g),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_lookup() {
        let s = Schedule::piecewise(vec![1.0, 2.0], vec![0.5, 0.3, 0.1]).unwrap();
        assert_eq!(s.gamma(0.0), 0.5);
        assert_eq!(s.gamma(1.0), 0.3);
        assert_eq!(s.gamma(1.5), 0.3);
        assert_eq!(s.gamma(7.0), 0.1);
        assert_eq!(s.bound(), 0.5);
    }

    #[test]
    fn rejects_negative_rates() {
        assert!(Schedule::constant(-0.1).is_err());
        assert!(Schedule::piecewise(vec![1.0], vec![0.1, -1.0]).is_err());
        assert!(Schedule::piecewise(vec![2.0, 1.0], vec![0.1, 0.1, 0.1]).is_err());
    }

    #[test]
    fn custom_is_clamped() {
        let s = Schedule::custom(|t| 1.0 / (1.0 + t) - 0.2, 0.5).unwrap();
        assert_eq!(s.gamma(0.0), 0.5);
        assert_eq!(s.gamma(100.0), 0.0);
        assert!(s.spec().is_none());
    }

    #[test]
    fn spec_round_trip() {
        let spec = ScheduleSpec::Piecewise {
            breaks: vec![3.0],
            values: vec![0.9, 0.45],
        };
        assert_eq!(Schedule::from_spec(&spec).unwrap().spec(), Some(spec));
    }
}
