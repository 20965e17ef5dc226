//! Scenario files: one JSON document describing a complete episode.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Actuation, TriggerConfig};
use crate::funnel::SynthesisConfig;
use crate::sequencer::SequencerConfig;
use crate::sim::{run_episode, EpisodeConfig, EpisodeResult, Plant, PlantConfig, SimError};
use crate::stl::{parse_formula, ParseError, SequentialFormula, SmoothingConfig, StlError};

/// The two-task, three-robot scenario shipped with the crate.
pub const PAPER_SCENARIO: &str = include_str!("../scenarios/paper.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("formula: {0}")]
    Parse(#[from] ParseError),
    #[error("formula: {0}")]
    Formula(#[from] StlError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub plant: PlantConfig,
    pub formula: String,
    pub x0: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Synthesis rules for tasks without an entry in `tasks`.
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub tasks: Vec<SynthesisConfig>,
    #[serde(default)]
    pub trigger: TriggerConfig,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub tail: f64,
    #[serde(default = "default_gain")]
    pub gain: f64,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_eta() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_horizon() -> f64 {
    100.0
}
fn default_gain() -> f64 {
    1.0
}

/// Everything needed to call [`run_episode`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub theta: SequentialFormula,
    pub plant: Plant,
    pub x0: Vec<f64>,
    pub config: EpisodeConfig,
}

impl Prepared {
    pub fn run(&self) -> Result<EpisodeResult, SimError> {
        run_episode(&self.theta, &self.plant, &self.x0, &self.config)
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn paper() -> Self {
        Self::from_json(PAPER_SCENARIO).expect("bundled scenario parses")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn episode_config(&self) -> Result<EpisodeConfig, ScenarioError> {
        let cfg = EpisodeConfig {
            dt: self.dt,
            horizon: self.horizon,
            tail: self.tail,
            seed: self.seed,
            gain: self.gain,
            trigger: self.trigger.clone(),
            sequencer: SequencerConfig {
                smoothing: SmoothingConfig::new(self.eta)?,
                synthesis: self.synthesis.clone(),
                tasks: self.tasks.clone(),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and checks every part of the scenario without running it.
    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        let theta = parse_formula(&self.formula)?;
        let plant = self.plant.build(self.noise)?;
        if self.x0.len() != plant.state_dim() {
            return Err(ScenarioError::Invalid(format!(
                "x0 has {} entries, plant state has {}",
                self.x0.len(),
                plant.state_dim()
            )));
        }
        if let Some(i) = self.x0.iter().position(|v| !v.is_finite()) {
            return Err(ScenarioError::Invalid(format!("x0[{i}] is not finite")));
        }
        theta.check_dimension(plant.state_dim())?;
        if self.tasks.len() > theta.task_count() {
            return Err(ScenarioError::Invalid(format!(
                "{} task overrides for {} tasks",
                self.tasks.len(),
                theta.task_count()
            )));
        }
        Ok(Prepared {
            theta,
            plant,
            x0: self.x0.clone(),
            config: self.episode_config()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "plant": {"type": "single_integrator", "dim": 2},
        "formula": "G[2,10] ball(0,1;3,4;5)",
        "x0": [-3, -4]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_json(SMALL).unwrap();
        assert_eq!(s.eta, 1.0);
        assert_eq!(s.dt, 0.01);
        assert_eq!(s.horizon, 100.0);
        assert_eq!(s.trigger, TriggerConfig::default());
        assert!(s.prepare().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SMALL.replace("\"x0\"", "\"speed\": 1, \"x0\"");
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("unknown field `speed`"), "{err}");
        let text = SMALL.replace("\"dim\": 2", "\"dim\": 2, \"mass\": 1");
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn semantic_checks() {
        let mut s = Scenario::from_json(SMALL).unwrap();
        s.x0 = vec![0.0];
        assert!(matches!(s.prepare(), Err(ScenarioError::Invalid(_))));
        let mut s = Scenario::from_json(SMALL).unwrap();
        s.formula = "G[2,10] ball(0,4;3,4;5)".into();
        assert!(matches!(s.prepare(), Err(ScenarioError::Formula(_))));
        let mut s = Scenario::from_json(SMALL).unwrap();
        s.formula = "G[2,10] ball(0,1;3,4".into();
        assert!(matches!(s.prepare(), Err(ScenarioError::Parse(_))));
        let mut s = Scenario::from_json(SMALL).unwrap();
        s.dt = 0.0;
        assert!(matches!(s.prepare(), Err(ScenarioError::Sim(_))));
        let mut s = Scenario::from_json(SMALL).unwrap();
        s.eta = -1.0;
        assert!(matches!(s.prepare(), Err(ScenarioError::Formula(_))));
    }

    #[test]
    fn round_trip() {
        let s = Scenario::paper();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        let p = s.prepare().unwrap();
        assert_eq!(p.theta.task_count(), 2);
        assert_eq!(p.x0.len(), 9);
    }

    #[test]
    fn schema_lists_every_field() {
        let schema: serde_json::Value =
            serde_json::from_str(include_str!("../../../schema/scenario.schema.json")).unwrap();
        let props = schema["properties"].as_object().unwrap();
        let doc = serde_json::to_value(Scenario::paper()).unwrap();
        let mut keys: Vec<_> = doc.as_object().unwrap().keys().cloned().collect();
        let mut listed: Vec<_> = props.keys().cloned().collect();
        keys.sort();
        listed.sort();
        assert_eq!(keys, listed);
        assert_eq!(schema["additionalProperties"], false);
        for name in ["synthesis", "trigger"] {
            let sub = &schema["$defs"][name]["properties"];
            let doc = &doc[if name == "synthesis" { "synthesis" } else { "trigger" }];
            let mut a: Vec<_> = doc.as_object().unwrap().keys().cloned().collect();
            let mut b: Vec<_> = sub.as_object().unwrap().keys().cloned().collect();
            a.sort();
            b.sort();
            assert_eq!(a, b, "{name}");
        }
    }
}
