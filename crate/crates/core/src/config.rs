//! TOML run configuration: schema, defaults, `--set` overrides, and the
//! projections into simulation / frequency-analysis inputs.
//!
//! All fields have defaults matching the reference parameter set, so an empty
//! config (or none at all) runs the standard scenario grid. Unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::composition::Strategy;
use crate::error::{Error, Result};
use crate::frequency::{FrequencyGrid, Scenario};
use crate::models::{CaccParams, OvmParams};
use crate::sim::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub traffic: TrafficSection,
    pub ovm: OvmParams,
    pub cacc: CaccParams,
    pub lqr: LqrSection,
    pub simulation: SimulationSection,
    pub frequency: FrequencySection,
    pub scenarios: ScenarioSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    /// Chain length in the frequency-domain criterion.
    pub n_analysis: usize,
    /// Follower count in nonlinear simulations.
    pub n_sim: usize,
    pub v_star: f64,
    pub vehicle_length: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        Self {
            n_analysis: 1000,
            n_sim: 100,
            v_star: 15.0,
            vehicle_length: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrSection {
    pub q: f64,
    pub r: f64,
}

impl Default for LqrSection {
    fn default() -> Self {
        Self { q: 1.0, r: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub dt: f64,
    pub t_end: f64,
    pub accel_limit: f64,
    pub perturbation: bool,
    /// Seed list for sweep aggregation.
    pub seeds: Vec<u64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t_end: 150.0,
            accel_limit: 2.0,
            perturbation: true,
            seeds: (1..=10).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrequencySection {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl Default for FrequencySection {
    fn default() -> Self {
        Self {
            omega_min: 1e-2,
            omega_max: 1e2,
            points: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub strategies: Vec<Strategy>,
    pub penetrations: Vec<f64>,
    pub platoon_sizes: Vec<usize>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::Cacc, Strategy::Mpf, Strategy::Msl],
            penetrations: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            platoon_sizes: vec![4, 6, 8],
        }
    }
}

/// Cell selection for the single-run `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub strategy: Strategy,
    pub p: f64,
    pub m_max: usize,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::Msl,
            p: 0.2,
            m_max: 6,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            format: OutputFormat::Csv,
        }
    }
}

impl RunConfig {
    /// Load from an optional file, then apply dotted-path `--set` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.ovm.validate().map_err(as_config)?;
        self.cacc.validate().map_err(as_config)?;
        let t = &self.traffic;
        if t.n_analysis == 0 || t.n_sim < 2 {
            return Err(Error::Config(
                "traffic requires n_analysis >= 1 and n_sim >= 2".into(),
            ));
        }
        if !(0.0 < t.v_star && t.v_star < self.ovm.v_max) {
            return Err(Error::Config(format!(
                "v_star = {} outside (0, v_max)",
                t.v_star
            )));
        }
        if self.lqr.q <= 0.0 || self.lqr.r <= 0.0 {
            return Err(Error::Config("lqr weights must be positive".into()));
        }
        let f = &self.frequency;
        if !(f.omega_min > 0.0 && f.omega_max > f.omega_min && f.points >= 2) {
            return Err(Error::Config(
                "frequency grid requires 0 < omega_min < omega_max and points >= 2".into(),
            ));
        }
        for &p in self
            .scenarios
            .penetrations
            .iter()
            .chain(std::iter::once(&self.simulate.p))
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("penetration {p} outside [0, 1]")));
            }
        }
        for &m in self
            .scenarios
            .platoon_sizes
            .iter()
            .chain(std::iter::once(&self.simulate.m_max))
        {
            if m < 2 {
                return Err(Error::Config(format!("platoon size {m} < 2")));
            }
        }
        if self.simulation.seeds.is_empty() {
            return Err(Error::Config("seed list must not be empty".into()));
        }
        // remaining dynamic constraints checked by SimConfig::validate
        self.sim_config(self.simulate.strategy, self.simulate.p, self.simulate.m_max, 0)
            .validate()
            .map_err(as_config)
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::log_spaced(
            self.frequency.omega_min,
            self.frequency.omega_max,
            self.frequency.points,
        )
    }

    pub fn scenario(&self, strategy: Strategy, p: f64, m_max: usize) -> Scenario {
        Scenario {
            strategy,
            p,
            m_max,
            n: self.traffic.n_analysis,
            ovm: self.ovm,
            cacc: self.cacc,
            v_star: self.traffic.v_star,
            q: self.lqr.q,
            r: self.lqr.r,
        }
    }

    pub fn sim_config(&self, strategy: Strategy, p: f64, m_max: usize, seed: u64) -> SimConfig {
        SimConfig {
            n: self.traffic.n_sim,
            p,
            m_max,
            strategy,
            seed,
            dt: self.simulation.dt,
            t_end: self.simulation.t_end,
            v_star: self.traffic.v_star,
            accel_limit: self.simulation.accel_limit,
            vehicle_length: self.traffic.vehicle_length,
            perturbation: self.simulation.perturbation,
            ovm: self.ovm,
            cacc: self.cacc,
            q: self.lqr.q,
            r: self.lqr.r,
        }
    }

    /// Canonical TOML text; embedded in output metadata blocks.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn as_config(e: Error) -> Error {
    Error::Config(e.to_string())
}

/// Apply one `section.key=value` override. The value is parsed as TOML when
/// possible (numbers, booleans, arrays) and falls back to a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override `{spec}` has an empty key")));
    }
    let mut current = table;
    for &k in &keys[..keys.len() - 1] {
        current = current
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{spec}`: `{k}` is not a table")))?;
    }
    current.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_reference_values() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.traffic.n_analysis, 1000);
        assert_eq!(cfg.traffic.n_sim, 100);
        assert_eq!(cfg.ovm.alpha, 0.6);
        assert_eq!(cfg.cacc.k_p, 0.45);
        assert_eq!(cfg.simulation.dt, 0.1);
        assert_eq!(cfg.scenarios.strategies.len(), 3);
        assert_eq!(cfg.simulation.seeds, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        // deterministic serialization
        assert_eq!(text, back.to_toml_string());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[traffic]\nbogus = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn overrides_apply_with_types() {
        let cfg = RunConfig::load(
            None,
            &[
                "traffic.n_sim=50".to_string(),
                "simulate.strategy=mpf".to_string(),
                "scenarios.penetrations=[0.2, 0.4]".to_string(),
                "simulation.perturbation=false".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.traffic.n_sim, 50);
        assert_eq!(cfg.simulate.strategy, Strategy::Mpf);
        assert_eq!(cfg.scenarios.penetrations, vec![0.2, 0.4]);
        assert!(!cfg.simulation.perturbation);
    }

    #[test]
    fn bad_overrides_rejected() {
        assert!(RunConfig::load(None, &["no_equals".to_string()]).is_err());
        assert!(RunConfig::load(None, &["traffic.n_sim=zebra".to_string()]).is_err());
        assert!(RunConfig::load(None, &["simulate.p=1.5".to_string()]).is_err());
        assert!(RunConfig::load(None, &["traffic.=1".to_string()]).is_err());
    }

    #[test]
    fn validation_catches_bad_sections() {
        let mut cfg = RunConfig::default();
        cfg.frequency.omega_min = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.traffic.v_star = 40.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.simulation.seeds.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn projections_carry_fields() {
        let cfg = RunConfig::default();
        let sc = cfg.scenario(Strategy::Msl, 0.3, 4);
        assert_eq!(sc.n, 1000);
        assert_eq!(sc.v_star, 15.0);
        let sim = cfg.sim_config(Strategy::Mpf, 0.2, 6, 9);
        assert_eq!(sim.n, 100);
        assert_eq!(sim.seed, 9);
        assert_eq!(sim.t_end, 150.0);
    }
}
