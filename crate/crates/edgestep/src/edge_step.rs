//! Catalog of edge-step functions `f(t) = min(1, l(t) * t^-gamma)` and the
//! expected vertex count `F(t) = E V_t` they induce.
//!
//! Every family factors into a slowly varying part `l` and a pure power
//! `t^-gamma`. The slowly varying parts are defined with shifted log
//! arguments (`log(e t)`, `log log(e^2 t)`) so they are finite and positive
//! at `t = 1`; below `t = 1` they are extended as the constant `l(1)`, which
//! only matters inside the quadratures of [`crate::karamata`].

use std::fmt;
use std::sync::Mutex;

use crate::{Error, Result};

/// An edge-step function. `evaluate(t)` is the probability that step `t`
/// performs a vertex-step (brings a new vertex) rather than an edge-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeStepSpec {
    /// `f(t) = min(1, c * t^-gamma)`; the slowly varying part is the constant `c`.
    PowerLaw { c: f64, gamma: f64 },
    /// `l(t) = log(e t)^-c`, i.e. `(1 + ln t)^-c`.
    InverseLogPower { c: f64, gamma: f64 },
    /// `l(t) = 1 / log(log(e^2 t))`, i.e. `1 / ln(2 + ln t)`.
    InverseLogLog { gamma: f64 },
    /// `l(t) = exp(-(ln t)^sv_delta)` with `sv_delta` in (0, 1).
    ExpNegLogDelta { sv_delta: f64, gamma: f64 },
    /// `f(t) = p` for all `t`. Not decreasing to zero; its degree-law exponent
    /// is `2 + p/(2-p)` instead of `2 - gamma`.
    Constant { p: f64 },
}

impl EdgeStepSpec {
    pub fn validate(&self) -> Result<()> {
        fn finite(name: &str, x: f64) -> Result<f64> {
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Domain(format!("{name} must be finite, got {x}")))
            }
        }
        match *self {
            EdgeStepSpec::PowerLaw { c, gamma } | EdgeStepSpec::InverseLogPower { c, gamma } => {
                if finite("c", c)? <= 0.0 {
                    return Err(Error::Domain(format!("c must be positive, got {c}")));
                }
                Self::validate_gamma(finite("gamma", gamma)?)
            }
            EdgeStepSpec::InverseLogLog { gamma } => Self::validate_gamma(finite("gamma", gamma)?),
            EdgeStepSpec::ExpNegLogDelta { sv_delta, gamma } => {
                if !(finite("sv_delta", sv_delta)? > 0.0 && sv_delta < 1.0) {
                    return Err(Error::Domain(format!(
                        "sv_delta must lie in (0, 1), got {sv_delta}"
                    )));
                }
                Self::validate_gamma(finite("gamma", gamma)?)
            }
            EdgeStepSpec::Constant { p } => {
                if !(finite("p", p)? > 0.0 && p <= 1.0) {
                    return Err(Error::Domain(format!("p must lie in (0, 1], got {p}")));
                }
                Ok(())
            }
        }
    }

    fn validate_gamma(gamma: f64) -> Result<()> {
        if gamma < 0.0 {
            return Err(Error::Domain(format!(
                "gamma must be non-negative, got {gamma}"
            )));
        }
        Ok(())
    }

    /// The regular-variation index `gamma` (0 for the constant family).
    pub fn gamma(&self) -> f64 {
        match *self {
            EdgeStepSpec::PowerLaw { gamma, .. }
            | EdgeStepSpec::InverseLogPower { gamma, .. }
            | EdgeStepSpec::InverseLogLog { gamma }
            | EdgeStepSpec::ExpNegLogDelta { gamma, .. } => gamma,
            EdgeStepSpec::Constant { .. } => 0.0,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            EdgeStepSpec::PowerLaw { .. } => "power_law",
            EdgeStepSpec::InverseLogPower { .. } => "inverse_log_power",
            EdgeStepSpec::InverseLogLog { .. } => "inverse_log_log",
            EdgeStepSpec::ExpNegLogDelta { .. } => "exp_neg_log_delta",
            EdgeStepSpec::Constant { .. } => "constant",
        }
    }

    /// The slowly varying part `l(x)`, extended as `l(1)` for `x < 1`.
    pub fn ell(&self, x: f64) -> f64 {
        let x = x.max(1.0);
        match *self {
            EdgeStepSpec::PowerLaw { c, .. } => c,
            EdgeStepSpec::InverseLogPower { c, .. } => {
                let lg = 1.0 + x.ln();
                if c == 1.0 {
                    1.0 / lg
                } else {
                    lg.powf(-c)
                }
            }
            EdgeStepSpec::InverseLogLog { .. } => 1.0 / (2.0 + x.ln()).ln(),
            EdgeStepSpec::ExpNegLogDelta { sv_delta, .. } => (-x.ln().powf(sv_delta)).exp(),
            EdgeStepSpec::Constant { p } => p,
        }
    }

    /// `f(t) = min(1, l(t) * t^-gamma)`. The clamp matters only near `t = 1`
    /// (e.g. `c > 1`, or the log-log family whose `l(1) > 1`) and preserves
    /// monotonicity.
    #[inline]
    pub fn evaluate(&self, t: u64) -> f64 {
        debug_assert!(t >= 1, "edge-step functions are defined for t >= 1");
        let x = t as f64;
        let v = self.ell(x) * power_neg(x, self.gamma());
        if v > 1.0 {
            1.0
        } else {
            v
        }
    }

    /// Single-line `key=value` form, e.g. `family=power_law c=1.0 gamma=0.5`.
    pub fn to_kv(&self) -> String {
        match *self {
            EdgeStepSpec::PowerLaw { c, gamma } => {
                format!("family=power_law c={c:?} gamma={gamma:?}")
            }
            EdgeStepSpec::InverseLogPower { c, gamma } => {
                format!("family=inverse_log_power c={c:?} gamma={gamma:?}")
            }
            EdgeStepSpec::InverseLogLog { gamma } => {
                format!("family=inverse_log_log gamma={gamma:?}")
            }
            EdgeStepSpec::ExpNegLogDelta { sv_delta, gamma } => {
                format!("family=exp_neg_log_delta sv_delta={sv_delta:?} gamma={gamma:?}")
            }
            EdgeStepSpec::Constant { p } => format!("family=constant p={p:?}"),
        }
    }

    /// Parses the `key=value` form produced by [`EdgeStepSpec::to_kv`].
    /// Tokens are whitespace-separated; unknown or duplicate keys are errors,
    /// as are missing or extraneous parameters for the named family.
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut family = None;
        let mut params: Vec<(String, f64)> = Vec::new();
        for token in text.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{token}`")))?;
            if key == "family" {
                if family.replace(value.to_string()).is_some() {
                    return Err(Error::Parse("duplicate key `family`".into()));
                }
            } else {
                if params.iter().any(|(k, _)| k == key) {
                    return Err(Error::Parse(format!("duplicate key `{key}`")));
                }
                let parsed: f64 = value
                    .parse()
                    .map_err(|_| Error::Parse(format!("invalid number for `{key}`: `{value}`")))?;
                params.push((key.to_string(), parsed));
            }
        }
        let family = family.ok_or_else(|| Error::Parse("missing key `family`".into()))?;
        let spec = Self::from_params(&family, &params)?;
        spec.validate()?;
        Ok(spec)
    }

    fn from_params(family: &str, params: &[(String, f64)]) -> Result<Self> {
        let get = |key: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::Parse(format!("family `{family}` requires key `{key}`")))
        };
        let expect_keys = |keys: &[&str]| -> Result<()> {
            for (k, _) in params {
                if !keys.contains(&k.as_str()) {
                    return Err(Error::Parse(format!(
                        "unknown key `{k}` for family `{family}`"
                    )));
                }
            }
            Ok(())
        };
        match family {
            "power_law" => {
                expect_keys(&["c", "gamma"])?;
                Ok(EdgeStepSpec::PowerLaw {
                    c: get("c")?,
                    gamma: get("gamma")?,
                })
            }
            "inverse_log_power" => {
                expect_keys(&["c", "gamma"])?;
                Ok(EdgeStepSpec::InverseLogPower {
                    c: get("c")?,
                    gamma: get("gamma")?,
                })
            }
            "inverse_log_log" => {
                expect_keys(&["gamma"])?;
                Ok(EdgeStepSpec::InverseLogLog {
                    gamma: get("gamma")?,
                })
            }
            "exp_neg_log_delta" => {
                expect_keys(&["sv_delta", "gamma"])?;
                Ok(EdgeStepSpec::ExpNegLogDelta {
                    sv_delta: get("sv_delta")?,
                    gamma: get("gamma")?,
                })
            }
            "constant" => {
                expect_keys(&["p"])?;
                Ok(EdgeStepSpec::Constant { p: get("p")? })
            }
            other => Err(Error::Parse(format!(
                "unknown family `{other}` (expected power_law, inverse_log_power, \
                 inverse_log_log, exp_neg_log_delta, or constant)"
            ))),
        }
    }
}

impl fmt::Display for EdgeStepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv())
    }
}

#[inline]
fn power_neg(x: f64, gamma: f64) -> f64 {
    // The grid exponents 0, 1/2, 1 sit in every hot loop; powf costs several
    // times what sqrt does.
    if gamma == 0.0 {
        1.0
    } else if gamma == 0.5 {
        1.0 / x.sqrt()
    } else if gamma == 1.0 {
        1.0 / x
    } else {
        x.powf(-gamma)
    }
}

/// Memoized expected vertex count `F(t) = 1 + sum_{s=2..t} f(s)`.
///
/// Queries extend an internal prefix-sum table on demand, so repeated lookups
/// at checkpoint times are O(1) amortized. The table is behind a mutex;
/// concurrent callers see exactly the values a sequential fill produces.
pub struct VertexExpectation {
    spec: EdgeStepSpec,
    sums: Mutex<Vec<f64>>,
}

impl VertexExpectation {
    pub fn new(spec: EdgeStepSpec) -> Self {
        VertexExpectation {
            spec,
            sums: Mutex::new(vec![1.0]),
        }
    }

    pub fn spec(&self) -> EdgeStepSpec {
        self.spec
    }

    /// `F(t)`. The initial graph has one vertex, so `F(1) = 1`.
    pub fn at(&self, t: u64) -> f64 {
        assert!(t >= 1, "F(t) is defined for t >= 1");
        let idx = (t - 1) as usize;
        let mut sums = self.sums.lock().unwrap();
        while sums.len() <= idx {
            let next_t = sums.len() as u64 + 1;
            let last = *sums.last().unwrap();
            sums.push(last + self.spec.evaluate(next_t));
        }
        sums[idx]
    }

    /// The power-law asymptotic `l(t) t^(1-gamma) / (1-gamma)` that `F(t)`
    /// tracks when `f` decreases to zero with index `gamma < 1`.
    pub fn asymptotic(&self, t: u64) -> Result<f64> {
        let gamma = self.spec.gamma();
        if gamma >= 1.0 {
            return Err(Error::UnsupportedRegime(format!(
                "F has no power-law asymptotic for gamma={gamma} >= 1"
            )));
        }
        let x = t as f64;
        Ok(self.spec.ell(x) * x.powf(1.0 - gamma) / (1.0 - gamma))
    }
}
