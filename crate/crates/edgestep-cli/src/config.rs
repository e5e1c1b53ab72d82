//! Plain-text experiment configuration: `key=value` tokens separated by
//! whitespace, `#` to end of line is a comment. Files and command-line
//! overrides feed the same key map, and the resolved form written next to
//! every run's outputs parses back to an identical configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use edgestep::edge_step::EdgeStepSpec;

/// Ordered key -> value map with the textual grammar attached.
pub type KvMap = BTreeMap<String, String>;

/// Splits config text into a key map. Rejects malformed tokens and keys
/// given twice; unknown keys are caught later when the map is interpreted.
pub fn parse_tokens(text: &str) -> Result<KvMap, String> {
    let mut map = KvMap::new();
    for raw_line in text.lines() {
        let line = raw_line.split('#').next().unwrap_or("");
        for token in line.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{token}`"))?;
            if key.is_empty() || value.is_empty() {
                return Err(format!("expected key=value, got `{token}`"));
            }
            if map.insert(key.to_string(), value.to_string()).is_some() {
                return Err(format!("key `{key}` given more than once"));
            }
        }
    }
    Ok(map)
}

/// Fully resolved experiment parameters shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: EdgeStepSpec,
    pub delta: f64,
    pub checkpoints: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
    pub d_max: usize,
    pub d_report: u64,
    pub a: f64,
    pub alpha: f64,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

/// Keys that select and parameterize the edge-step family.
pub const SPEC_KEYS: [&str; 5] = ["family", "c", "gamma", "p", "sv_delta"];

const OTHER_KEYS: [&str; 10] = [
    "delta",
    "checkpoints",
    "replicas",
    "seed",
    "d_max",
    "d_report",
    "a",
    "alpha",
    "threads",
    "out",
];

fn parse_value<T: std::str::FromStr>(map: &KvMap, key: &str) -> Result<Option<T>, String> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| format!("key `{key}` has unusable value `{raw}`")),
    }
}

fn require<T>(value: Option<T>, key: &str) -> Result<T, String> {
    value.ok_or_else(|| format!("missing required key `{key}`"))
}

/// Builds the edge-step function from the spec keys, rejecting parameters
/// that do not apply to the chosen family.
pub fn build_spec(map: &KvMap) -> Result<EdgeStepSpec, String> {
    let family = require(map.get("family"), "family")?;
    let c: Option<f64> = parse_value(map, "c")?;
    let gamma: Option<f64> = parse_value(map, "gamma")?;
    let p: Option<f64> = parse_value(map, "p")?;
    let sv_delta: Option<f64> = parse_value(map, "sv_delta")?;

    let reject = |key: &str, present: bool| {
        if present {
            Err(format!("key `{key}` does not apply to family {family}"))
        } else {
            Ok(())
        }
    };
    let spec = match family.as_str() {
        "power_law" => {
            reject("p", p.is_some())?;
            reject("sv_delta", sv_delta.is_some())?;
            EdgeStepSpec::PowerLaw {
                c: c.unwrap_or(1.0),
                gamma: require(gamma, "gamma")?,
            }
        }
        "inverse_log_power" => {
            reject("p", p.is_some())?;
            reject("sv_delta", sv_delta.is_some())?;
            EdgeStepSpec::InverseLogPower {
                c: c.unwrap_or(1.0),
                gamma: require(gamma, "gamma")?,
            }
        }
        "inverse_log_log" => {
            reject("c", c.is_some())?;
            reject("p", p.is_some())?;
            reject("sv_delta", sv_delta.is_some())?;
            EdgeStepSpec::InverseLogLog {
                gamma: require(gamma, "gamma")?,
            }
        }
        "exp_neg_log_delta" => {
            reject("c", c.is_some())?;
            reject("p", p.is_some())?;
            EdgeStepSpec::ExpNegLogDelta {
                sv_delta: sv_delta.unwrap_or(0.5),
                gamma: require(gamma, "gamma")?,
            }
        }
        "constant" => {
            reject("c", c.is_some())?;
            reject("gamma", gamma.is_some())?;
            reject("sv_delta", sv_delta.is_some())?;
            EdgeStepSpec::Constant {
                p: require(p, "p")?,
            }
        }
        other => return Err(format!("unknown family `{other}`")),
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

impl ExperimentConfig {
    /// Interprets a complete key map, applying defaults and validating
    /// ranges. Unknown keys are errors.
    pub fn from_map(map: &KvMap) -> Result<Self, String> {
        for key in map.keys() {
            if !SPEC_KEYS.contains(&key.as_str()) && !OTHER_KEYS.contains(&key.as_str()) {
                return Err(format!("unknown key `{key}`"));
            }
        }
        let spec = build_spec(map)?;

        let delta: f64 = parse_value(map, "delta")?.unwrap_or(0.0);
        if !delta.is_finite() || delta < 0.0 {
            return Err(format!("delta must be finite and >= 0, got {delta}"));
        }

        let raw = require(map.get("checkpoints"), "checkpoints")?;
        let mut checkpoints = Vec::new();
        for piece in raw.split(',') {
            let t: u64 = piece
                .parse()
                .map_err(|_| format!("bad checkpoint `{piece}` in `{raw}`"))?;
            if t < 1 {
                return Err("checkpoints must be >= 1".into());
            }
            if checkpoints.last().is_some_and(|&prev| t <= prev) {
                return Err(format!("checkpoints must be strictly ascending, got `{raw}`"));
            }
            checkpoints.push(t);
        }

        let replicas: usize = parse_value(map, "replicas")?.unwrap_or(1);
        if replicas < 1 {
            return Err("replicas must be >= 1".into());
        }
        let seed: u64 = parse_value(map, "seed")?.unwrap_or(1);
        let d_max: usize = parse_value(map, "d_max")?.unwrap_or(64);
        if d_max < 2 {
            return Err("d_max must be >= 2".into());
        }
        let d_report: u64 = parse_value(map, "d_report")?.unwrap_or(20);
        if d_report < 1 || d_report > d_max as u64 {
            return Err(format!("d_report must lie in 1..=d_max ({d_max}), got {d_report}"));
        }
        let a: f64 = parse_value(map, "a")?.unwrap_or(3.0);
        if !(a.is_finite() && a > 0.0) {
            return Err(format!("a must be positive and finite, got {a}"));
        }
        let alpha: f64 = parse_value(map, "alpha")?.unwrap_or(0.5);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(format!("alpha must lie in (0, 1), got {alpha}"));
        }
        let threads: Option<usize> = parse_value(map, "threads")?;
        if threads == Some(0) {
            return Err("threads must be >= 1".into());
        }
        let out = PathBuf::from(require(map.get("out"), "out")?);

        Ok(ExperimentConfig {
            spec,
            delta,
            checkpoints,
            replicas,
            seed,
            d_max,
            d_report,
            a,
            alpha,
            threads,
            out,
        })
    }

    /// Serializes to the text grammar, one key per line. Floats use
    /// round-trip formatting, so `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for token in self.spec.to_kv().split_whitespace() {
            writeln!(out, "{token}").unwrap();
        }
        writeln!(out, "delta={:?}", self.delta).unwrap();
        let grid: Vec<String> = self.checkpoints.iter().map(u64::to_string).collect();
        writeln!(out, "checkpoints={}", grid.join(",")).unwrap();
        writeln!(out, "replicas={}", self.replicas).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        writeln!(out, "d_max={}", self.d_max).unwrap();
        writeln!(out, "d_report={}", self.d_report).unwrap();
        writeln!(out, "a={:?}", self.a).unwrap();
        writeln!(out, "alpha={:?}", self.alpha).unwrap();
        if let Some(threads) = self.threads {
            writeln!(out, "threads={threads}").unwrap();
        }
        writeln!(out, "out={}", self.out.display()).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<ExperimentConfig, String> {
        ExperimentConfig::from_map(&parse_tokens(text)?)
    }

    fn base_text() -> &'static str {
        "family=power_law gamma=0.5\ncheckpoints=1,100 out=runs/demo\n"
    }

    #[test]
    fn parses_with_defaults() {
        let cfg = parse(base_text()).unwrap();
        assert_eq!(cfg.spec, EdgeStepSpec::PowerLaw { c: 1.0, gamma: 0.5 });
        assert_eq!(cfg.delta, 0.0);
        assert_eq!(cfg.checkpoints, vec![1, 100]);
        assert_eq!(cfg.replicas, 1);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.d_max, 64);
        assert_eq!(cfg.d_report, 20);
        assert_eq!(cfg.a, 3.0);
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.threads, None);
        assert_eq!(cfg.out, PathBuf::from("runs/demo"));
    }

    #[test]
    fn comments_and_newlines_are_interchangeable_with_spaces() {
        let text = "family=constant # the flat family\np=0.25\ncheckpoints=5\nout=x\n";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.spec, EdgeStepSpec::Constant { p: 0.25 });
        let flat = "family=constant p=0.25 checkpoints=5 out=x";
        assert_eq!(cfg, parse(flat).unwrap());
    }

    #[test]
    fn missing_and_malformed_keys_name_the_offender() {
        let err = parse("checkpoints=1 out=x").unwrap_err();
        assert!(err.contains("`family`"), "{err}");
        let err = parse("family=power_law checkpoints=1 out=x").unwrap_err();
        assert!(err.contains("`gamma`"), "{err}");
        let err = parse("family=constant checkpoints=1 out=x").unwrap_err();
        assert!(err.contains("`p`"), "{err}");
        let err = parse(base_text().replace("out=runs/demo", "").as_str())
            .unwrap_err();
        assert!(err.contains("`out`"), "{err}");
        let err = parse("family=power_law gamma=0.5 gamma=0.6 out=x")
            .unwrap_err();
        assert!(err.contains("more than once"), "{err}");
        let err =
            parse("family=power_law gamma=0.5 checkpoints=1 out=x mystery=1")
                .unwrap_err();
        assert!(err.contains("unknown key"), "{err}");
        let err = parse("family=power_law gamma=0.5 p=0.5 checkpoints=1 out=x")
            .unwrap_err();
        assert!(err.contains("does not apply"), "{err}");
    }

    #[test]
    fn range_checks_reject_bad_values() {
        for bad in [
            "family=power_law gamma=0.5 checkpoints=5,5 out=x",
            "family=power_law gamma=0.5 checkpoints=5,4 out=x",
            "family=power_law gamma=0.5 checkpoints=1 out=x replicas=0",
            "family=power_law gamma=0.5 checkpoints=1 out=x d_max=1",
            "family=power_law gamma=0.5 checkpoints=1 out=x d_report=80",
            "family=power_law gamma=0.5 checkpoints=1 out=x alpha=1.0",
            "family=power_law gamma=0.5 checkpoints=1 out=x a=-1",
            "family=power_law gamma=0.5 checkpoints=1 out=x delta=-0.5",
            "family=power_law gamma=0.5 checkpoints=1 out=x threads=0",
            "family=power_law gamma=-0.5 checkpoints=1 out=x",
        ] {
            assert!(parse(bad).is_err(), "accepted `{bad}`");
        }
    }

    #[test]
    fn fixed_round_trip() {
        let text = "family=exp_neg_log_delta sv_delta=0.75 gamma=0.3 delta=1.5 \
                    checkpoints=1,10,100 replicas=7 seed=42 d_max=32 d_report=9 \
                    a=2.5 alpha=0.25 threads=3 out=somewhere";
        let cfg = parse(text).unwrap();
        assert_eq!(parse(&cfg.to_text()).unwrap(), cfg);
    }

    fn spec_strategy() -> impl Strategy<Value = EdgeStepSpec> {
        let finite = |lo: f64, hi: f64| (lo..hi).prop_map(|x| x);
        prop_oneof![
            (finite(0.1, 8.0), finite(0.0, 1.5))
                .prop_map(|(c, gamma)| EdgeStepSpec::PowerLaw { c, gamma }),
            (finite(0.1, 8.0), finite(0.0, 1.5))
                .prop_map(|(c, gamma)| EdgeStepSpec::InverseLogPower { c, gamma }),
            finite(0.0, 1.5).prop_map(|gamma| EdgeStepSpec::InverseLogLog { gamma }),
            (finite(0.05, 0.95), finite(0.0, 1.5))
                .prop_map(|(sv_delta, gamma)| EdgeStepSpec::ExpNegLogDelta { sv_delta, gamma }),
            finite(0.05, 1.0).prop_map(|p| EdgeStepSpec::Constant { p }),
        ]
    }

    proptest! {
        #[test]
        fn random_configs_round_trip(
            spec in spec_strategy(),
            delta in 0.0f64..4.0,
            raw_checkpoints in proptest::collection::btree_set(1u64..1_000_000, 1..6),
            replicas in 1usize..64,
            seed in any::<u64>(),
            d_max in 2usize..128,
            a in 0.1f64..9.0,
            alpha in 0.05f64..0.95,
            threads in proptest::option::of(1usize..16),
            out in "[a-z][a-z0-9_/.-]{0,14}",
        ) {
            let cfg = ExperimentConfig {
                spec,
                delta,
                checkpoints: raw_checkpoints.into_iter().collect(),
                replicas,
                seed,
                d_max,
                d_report: (d_max as u64).min(20),
                a,
                alpha,
                threads,
                out: PathBuf::from(out),
            };
            let parsed = parse(&cfg.to_text()).unwrap();
            prop_assert_eq!(parsed, cfg);
        }
    }
}
