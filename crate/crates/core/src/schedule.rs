//! Per-round resupply and income schedules.
//!
//! A schedule maps a 1-based round index to a non-negative amount. Sellers
//! use one for the Good they receive each round, buyers for their income.
//! Every kind is clamped at zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupplySchedule {
    Constant {
        value: f64,
    },
    /// `amplitude * cos(2 pi round / period) + offset`
    Cosine {
        amplitude: f64,
        period: f64,
        offset: f64,
    },
    Linear {
        slope: f64,
        intercept: f64,
    },
    /// `before` for rounds earlier than `switch_round`, `after` from then on.
    Step {
        before: f64,
        after: f64,
        switch_round: usize,
    },
    /// `capacity / (1 + exp(-rate (round - midpoint)))`; a negative rate gives
    /// a declining curve.
    Logistic {
        capacity: f64,
        rate: f64,
        midpoint: f64,
    },
    /// Damped oscillation around `base`:
    /// `base + amplitude * exp(-damping round) * sin(2 pi round / period)`.
    Bullwhip {
        base: f64,
        amplitude: f64,
        damping: f64,
        period: f64,
    },
    /// Hubbert curve, the derivative of a logistic, peaking at `center` with
    /// value `peak`.
    Hubbert {
        peak: f64,
        width: f64,
        center: f64,
    },
}

impl SupplySchedule {
    pub fn constant(value: f64) -> Self {
        SupplySchedule::Constant { value }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SupplySchedule::Constant { .. })
    }

    /// Amount emitted in `round` (1-based).
    pub fn evaluate(&self, round: usize) -> f64 {
        let t = round as f64;
        let raw = match *self {
            SupplySchedule::Constant { value } => value,
            SupplySchedule::Cosine {
                amplitude,
                period,
                offset,
            } => amplitude * (2.0 * PI * t / period).cos() + offset,
            SupplySchedule::Linear { slope, intercept } => intercept + slope * t,
            SupplySchedule::Step {
                before,
                after,
                switch_round,
            } => {
                if round < switch_round {
                    before
                } else {
                    after
                }
            }
            SupplySchedule::Logistic {
                capacity,
                rate,
                midpoint,
            } => capacity / (1.0 + (-rate * (t - midpoint)).exp()),
            SupplySchedule::Bullwhip {
                base,
                amplitude,
                damping,
                period,
            } => base + amplitude * (-damping * t).exp() * (2.0 * PI * t / period).sin(),
            SupplySchedule::Hubbert {
                peak,
                width,
                center,
            } => {
                let e = (-(t - center) / width).exp();
                4.0 * peak * e / ((1.0 + e) * (1.0 + e))
            }
        };
        if raw.is_finite() {
            raw.max(0.0)
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite"))
            }
        };
        match *self {
            SupplySchedule::Constant { value } => {
                finite("value", value)?;
                if value < 0.0 {
                    return Err("constant schedule value must be non-negative".into());
                }
            }
            SupplySchedule::Cosine {
                amplitude,
                period,
                offset,
            } => {
                finite("amplitude", amplitude)?;
                finite("offset", offset)?;
                if !(period.is_finite() && period > 0.0) {
                    return Err("cosine period must be positive".into());
                }
            }
            SupplySchedule::Linear { slope, intercept } => {
                finite("slope", slope)?;
                finite("intercept", intercept)?;
            }
            SupplySchedule::Step { before, after, .. } => {
                finite("before", before)?;
                finite("after", after)?;
            }
            SupplySchedule::Logistic {
                capacity,
                rate,
                midpoint,
            } => {
                finite("capacity", capacity)?;
                finite("rate", rate)?;
                finite("midpoint", midpoint)?;
            }
            SupplySchedule::Bullwhip {
                base,
                amplitude,
                damping,
                period,
            } => {
                finite("base", base)?;
                finite("amplitude", amplitude)?;
                finite("damping", damping)?;
                if !(period.is_finite() && period > 0.0) {
                    return Err("bullwhip period must be positive".into());
                }
            }
            SupplySchedule::Hubbert {
                peak,
                width,
                center,
            } => {
                finite("peak", peak)?;
                finite("center", center)?;
                if !(width.is_finite() && width > 0.0) {
                    return Err("hubbert width must be positive".into());
                }
            }
        }
        Ok(())
    }
}

impl Default for SupplySchedule {
    fn default() -> Self {
        SupplySchedule::constant(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_full_period() {
        let s = SupplySchedule::Cosine {
            amplitude: 0.25,
            period: 10.0,
            offset: 0.75,
        };
        assert!((s.evaluate(10) - 1.0).abs() < 1e-12);
        assert!((s.evaluate(5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_and_step() {
        assert_eq!(SupplySchedule::constant(1.0).evaluate(7), 1.0);
        let s = SupplySchedule::Step {
            before: 1.0,
            after: 0.5,
            switch_round: 20,
        };
        assert_eq!(s.evaluate(19), 1.0);
        assert_eq!(s.evaluate(20), 0.5);
    }

    #[test]
    fn clamped_at_zero() {
        let s = SupplySchedule::Linear {
            slope: -0.1,
            intercept: 1.0,
        };
        assert!((s.evaluate(5) - 0.5).abs() < 1e-12);
        assert_eq!(s.evaluate(20), 0.0);
    }

    #[test]
    fn hubbert_peaks_at_center() {
        let s = SupplySchedule::Hubbert {
            peak: 1.2,
            width: 8.0,
            center: 40.0,
        };
        assert!((s.evaluate(40) - 1.2).abs() < 1e-12);
        assert!(s.evaluate(20) < s.evaluate(30));
        assert!(s.evaluate(60) < s.evaluate(50));
    }

    #[test]
    fn logistic_midpoint_is_half_capacity() {
        let s = SupplySchedule::Logistic {
            capacity: 1.0,
            rate: -0.1,
            midpoint: 30.0,
        };
        assert!((s.evaluate(30) - 0.5).abs() < 1e-12);
        assert!(s.evaluate(10) > s.evaluate(50));
    }

    #[test]
    fn bullwhip_decays_to_base() {
        let s = SupplySchedule::Bullwhip {
            base: 1.0,
            amplitude: 0.5,
            damping: 0.05,
            period: 12.0,
        };
        assert!((s.evaluate(400) - 1.0).abs() < 1e-6);
        assert!((s.evaluate(3) - 1.0).abs() > 0.1);
    }
}
