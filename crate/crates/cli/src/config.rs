use std::fmt;
use std::path::{Path, PathBuf};

use refugia::continuation::ContinuationConfig;
use refugia::evolution::EvolutionConfig;
use refugia::steady::NewtonConfig;
use refugia::{DomainSpec, Grid, ModelParams};
use serde::{Deserialize, Serialize};

/// Problems with the configuration itself, reported with exit code 3.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweeps {
    /// Flux strengths for `asymptotics --mode alpha`, increasing.
    pub alphas: Vec<f64>,
    /// Multiples of `σ₁` for `asymptotics --mode lambda0`, decreasing.
    pub lambda_factors: Vec<f64>,
}

impl Default for Sweeps {
    fn default() -> Self {
        Sweeps {
            alphas: vec![1.0, 10.0, 100.0, 1000.0],
            lambda_factors: vec![0.2, 0.1, 0.05, 0.025],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub model: ModelParams,
    pub newton: NewtonConfig,
    pub continuation: ContinuationConfig,
    pub evolution: EvolutionConfig,
    pub sweeps: Sweeps,
    /// Seed for multistart sampling.
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: DomainSpec::ring_fixture(),
            model: ModelParams {
                lambda: 1.0,
                mu: 2.0,
                b: 1.0,
                c: 1.0,
                alpha: 1.0,
            },
            newton: NewtonConfig::default(),
            continuation: ContinuationConfig::default(),
            evolution: EvolutionConfig::default(),
            sweeps: Sweeps::default(),
            seed: 0,
            output: PathBuf::from("refugia-out"),
        }
    }
}

impl RunConfig {
    /// Check everything that can be checked without running a solver, and
    /// build the grid.
    pub fn validate(&self) -> Result<Grid, ConfigError> {
        self.model
            .validate()
            .map_err(|e| ConfigError(format!("model: {e}")))?;
        let grid = Grid::build(&self.domain).map_err(|e| ConfigError(format!("domain: {e}")))?;
        if !self.sweeps.alphas.windows(2).all(|w| w[1] > w[0]) {
            return Err(ConfigError("sweeps.alphas must be strictly increasing".into()));
        }
        if !self.sweeps.lambda_factors.windows(2).all(|w| w[1] < w[0])
            || self.sweeps.lambda_factors.iter().any(|f| !(*f > 0.0))
        {
            return Err(ConfigError(
                "sweeps.lambda_factors must be positive and strictly decreasing".into(),
            ));
        }
        let c = &self.continuation;
        if !(c.ds_min > 0.0 && c.ds_min <= c.ds && c.ds <= c.ds_max) {
            return Err(ConfigError(
                "continuation needs 0 < ds_min <= ds <= ds_max".into(),
            ));
        }
        let e = &self.evolution;
        if !(e.dt_min > 0.0 && e.dt_min <= e.dt && e.dt <= e.dt_max && e.t_final > 0.0) {
            return Err(ConfigError(
                "evolution needs 0 < dt_min <= dt <= dt_max and t_final > 0".into(),
            ));
        }
        Ok(grid)
    }
}

/// Read a TOML or JSON config, chosen by extension (`.json` is JSON,
/// anything else TOML).
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text, path.extension().is_some_and(|e| e == "json"))
        .map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
}

pub fn parse_str(text: &str, json: bool) -> Result<RunConfig, ConfigError> {
    if json {
        serde_json::from_str(text).map_err(|e| {
            let line = text.lines().nth(e.line().saturating_sub(1)).unwrap_or("");
            ConfigError(format!("{e}\n  | {}", line.trim_end()))
        })
    } else {
        // toml errors already quote the offending line.
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }
}

/// `a:b:n` gives `n` evenly spaced values from `a` to `b`; a trailing
/// `:log` spaces them geometrically.
pub fn parse_range(s: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = || ConfigError(format!("expected a:b:n or a:b:n:log, got '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    let log = match parts.len() {
        3 => false,
        4 if parts[3] == "log" => true,
        _ => return Err(bad()),
    };
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    if log && !(a > 0.0 && b > 0.0) {
        return Err(ConfigError(format!("log range needs positive ends, got '{s}'")));
    }
    let t = |k: usize| k as f64 / (n - 1) as f64;
    Ok((0..n)
        .map(|k| {
            if log {
                (a.ln() + (b.ln() - a.ln()) * t(k)).exp()
            } else {
                a + (b - a) * t(k)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        let l = parse_range("1:100:3:log").unwrap();
        assert!((l[1] - 10.0).abs() < 1e-12);
        assert!(parse_range("1:2").is_err());
        assert!(parse_range("0:1:3:log").is_err());
        assert!(parse_range("a:1:3").is_err());
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg = parse_str(
            "[domain]\nkind = \"ring1d\"\ncircumference = 6.283185307179586\nrefuge_length = 3.14159\nnodes = 64\n",
            false,
        )
        .unwrap();
        assert_eq!(cfg.model, RunConfig::default().model);
        cfg.validate().unwrap();
    }

    #[test]
    fn negative_predation_is_rejected() {
        let cfg = parse_str(
            "[model]\nlambda = 1.0\nmu = 2.0\nb = -1.0\nc = 1.0\nalpha = 0.0\n",
            false,
        )
        .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.0.contains("b must be positive"), "{err}");
    }

    #[test]
    fn refuge_covering_the_ring_is_rejected() {
        let cfg = parse_str(
            r#"{"domain": {"kind": "ring1d", "circumference": 1.0, "refuge_length": 1.0, "nodes": 64}}"#,
            true,
        )
        .unwrap();
        assert!(cfg.validate().unwrap_err().0.starts_with("domain:"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_context() {
        let err = parse_str("seed = 1\nsead = 2\n", false).unwrap_err();
        assert!(err.0.contains("sead"), "{err}");
        let err = parse_str("{\n  \"newton\": {\"tol\": 1e-9, \"iters\": 3}\n}", true).unwrap_err();
        assert!(err.0.contains("iters") && err.0.contains("line 2"), "{err}");
    }
}
