//! Learning-rate schedules and the compounded weights they induce.
//!
//! After `t` updates of the form `x_t = (1-η_t) x_{t-1} + η_t y_t`, the
//! iterate is the weighted sum `Σ_{i=0..t} η_i^{(t)} y_i` (with `y_0 = x_0`)
//! where
//!
//! ```text
//! η_0^{(t)} = Π_{j=1..t} (1 - η_j)
//! η_i^{(t)} = η_i Π_{j=i+1..t} (1 - η_j)     0 < i ≤ t
//! ```
//!
//! and the weights sum to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default power of `log T` in the rescaled-linear rate for Q-learning.
pub const Q_LEARNING_LOG_EXPONENT: u32 = 3;
/// Default power of `log T` for TD learning and finite-horizon Q-learning.
pub const TD_LOG_EXPONENT: u32 = 2;

/// A learning-rate rule `t ↦ η_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `η_t = 1 / (1 + c (1-γ) t / (log T)^k)` with `log T` floored at 1.
    RescaledLinear {
        c: f64,
        log_exponent: u32,
        horizon: u64,
        gamma: f64,
    },
    /// `η_t ≡ η`.
    Constant { eta: f64 },
    /// `η_t = t^{-ω}`, `η_0 = 1`.
    Polynomial { omega: f64 },
    /// `η_t = 1/t`, `η_0 = 1`.
    Linear,
}

impl Schedule {
    pub fn rescaled_linear(c: f64, log_exponent: u32, horizon: u64, gamma: f64) -> Result<Self> {
        let s = Schedule::RescaledLinear {
            c,
            log_exponent,
            horizon,
            gamma,
        };
        s.validate().map(|_| s)
    }

    pub fn constant(eta: f64) -> Result<Self> {
        let s = Schedule::Constant { eta };
        s.validate().map(|_| s)
    }

    pub fn polynomial(omega: f64) -> Result<Self> {
        let s = Schedule::Polynomial { omega };
        s.validate().map(|_| s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            Schedule::RescaledLinear { c, horizon, gamma, .. } => {
                if !(c > 0.0 && c.is_finite()) {
                    return bad(format!("rescaled-linear c must be positive, got {c}"));
                }
                if horizon < 2 {
                    return bad(format!("rescaled-linear horizon T must be >= 2, got {horizon}"));
                }
                if !(0.0..1.0).contains(&gamma) {
                    return bad(format!("rescaled-linear gamma must be in [0,1), got {gamma}"));
                }
            }
            Schedule::Constant { eta } => {
                if !(eta > 0.0 && eta <= 1.0) {
                    return bad(format!("constant eta must be in (0,1], got {eta}"));
                }
            }
            Schedule::Polynomial { omega } => {
                if !(omega > 0.0 && omega < 1.0) {
                    return bad(format!("polynomial omega must be in (0,1), got {omega}"));
                }
            }
            Schedule::Linear => {}
        }
        Ok(())
    }

    /// The learning rate `η_t`.
    pub fn rate(&self, t: u64) -> Result<f64> {
        self.validate()?;
        Ok(self.rate_unchecked(t))
    }

    /// `η_t` without re-validating parameters; callers validate once up front.
    #[inline]
    pub(crate) fn rate_unchecked(&self, t: u64) -> f64 {
        match *self {
            Schedule::RescaledLinear {
                c,
                log_exponent,
                horizon,
                gamma,
            } => {
                let log_factor = (horizon as f64).ln().max(1.0).powi(log_exponent as i32);
                1.0 / (1.0 + c * (1.0 - gamma) * t as f64 / log_factor)
            }
            Schedule::Constant { eta } => eta,
            Schedule::Polynomial { omega } => {
                if t == 0 {
                    1.0
                } else {
                    (t as f64).powf(-omega)
                }
            }
            Schedule::Linear => {
                if t == 0 {
                    1.0
                } else {
                    1.0 / t as f64
                }
            }
        }
    }

    /// `η_1, …, η_t` (index 0 of the result is `η_1`).
    pub fn rates(&self, t: u64) -> Result<Vec<f64>> {
        self.validate()?;
        Ok((1..=t).map(|i| self.rate_unchecked(i)).collect())
    }
}

/// Weights `η_0^{(t)}, …, η_t^{(t)}`, computed in one backward pass.
pub fn compounded_weights(schedule: &Schedule, t: u64) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::InvalidParameter("compounded weights need t >= 1".into()));
    }
    schedule.validate()?;
    let t = t as usize;
    let mut w = vec![0.0; t + 1];
    let mut tail = 1.0;
    for i in (1..=t).rev() {
        let eta = schedule.rate_unchecked(i as u64);
        w[i] = eta * tail;
        tail *= 1.0 - eta;
    }
    w[0] = tail;
    Ok(w)
}

/// `Π_{i=1..t} (1 - factor · η_i)`.
pub fn shrinkage_product(schedule: &Schedule, t: u64, factor: f64) -> Result<f64> {
    schedule.validate()?;
    Ok((1..=t).map(|i| 1.0 - factor * schedule.rate_unchecked(i)).product())
}

/// Constant step size of the form used for asynchronous Q-learning:
/// `η = min(1, c (log T)^k / ((1-γ) T μ_min))`.
pub fn async_constant_rate(c: f64, log_exponent: u32, horizon: u64, gamma: f64, mu_min: f64) -> Result<f64> {
    if !(c > 0.0) || horizon < 2 || !(gamma > 0.0 && gamma < 1.0) || !(mu_min > 0.0 && mu_min <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "async rate needs c > 0, T >= 2, gamma in (0,1), mu_min in (0,1]; got c={c}, T={horizon}, gamma={gamma}, mu_min={mu_min}"
        )));
    }
    let log_factor = (horizon as f64).ln().max(1.0).powi(log_exponent as i32);
    Ok((c * log_factor / ((1.0 - gamma) * horizon as f64 * mu_min)).min(1.0))
}

/// A schedule family without the run-specific `T` and `γ`, as written in
/// experiment configs: `{"kind": "rescaled_linear", "c": 1.0, "log_exponent": 3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    RescaledLinear {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log_exponent: Option<u32>,
    },
    Constant {
        eta: f64,
    },
    Polynomial {
        omega: f64,
    },
    Linear,
    /// Constant `η = min(1, c (log T)^k / ((1-γ) T μ_min))` for asynchronous
    /// Q-learning. A missing `mu_min` is estimated from the behaviour chain.
    AsyncConstant {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log_exponent: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_min: Option<f64>,
    },
}

impl ScheduleSpec {
    /// True for an asynchronous constant rate whose `μ_min` must be supplied
    /// by the caller.
    pub fn needs_mu_min(&self) -> bool {
        matches!(self, ScheduleSpec::AsyncConstant { mu_min: None, .. })
    }

    /// Instantiates the family for a run of `horizon` iterations at discount
    /// `gamma`; `default_log_exponent` fills a missing `log_exponent`.
    pub fn bind(&self, horizon: u64, gamma: f64, default_log_exponent: u32) -> Result<Schedule> {
        self.bind_with_mu_min(horizon, gamma, default_log_exponent, None)
    }

    /// [`ScheduleSpec::bind`] with an estimate of `μ_min`, used only when the
    /// schedule does not fix one.
    pub fn bind_with_mu_min(
        &self,
        horizon: u64,
        gamma: f64,
        default_log_exponent: u32,
        estimated_mu_min: Option<f64>,
    ) -> Result<Schedule> {
        let s = match *self {
            ScheduleSpec::RescaledLinear { c, log_exponent } => Schedule::RescaledLinear {
                c,
                log_exponent: log_exponent.unwrap_or(default_log_exponent),
                horizon: horizon.max(2),
                gamma,
            },
            ScheduleSpec::Constant { eta } => Schedule::Constant { eta },
            ScheduleSpec::Polynomial { omega } => Schedule::Polynomial { omega },
            ScheduleSpec::Linear => Schedule::Linear,
            ScheduleSpec::AsyncConstant { c, log_exponent, mu_min } => {
                let mu = mu_min.or(estimated_mu_min).ok_or_else(|| {
                    Error::InvalidParameter("async constant rate needs mu_min or a behaviour chain to estimate it".into())
                })?;
                let k = log_exponent.unwrap_or(default_log_exponent);
                Schedule::Constant {
                    eta: async_constant_rate(c, k, horizon, gamma, mu)?,
                }
            }
        };
        s.validate().map(|_| s)
    }
}
