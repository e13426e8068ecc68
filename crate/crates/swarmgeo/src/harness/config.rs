//! Run configuration: a TOML file naming the world's inputs plus the
//! protocol, training, and model knobs. CLI flags override file values.
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{
    load_corpus, AgentBackend, AgentId, AgentProfile, HttpAgent, Roster, SimWorld, SimulatedAgent,
};
use crate::discussion::DiscussionConfig;
use crate::geo::{load_gazetteer, GazetteerEntry};
use crate::learn::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_k: usize,
    pub d_h: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { d_k: 64, d_h: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub gazetteer: PathBuf,
    pub roster: PathBuf,
    /// Optional retrieval corpus JSONL; absent means the corpus derives
    /// from the gazetteer's canonical names.
    pub corpus: Option<PathBuf>,
    /// Train share of the dataset split.
    pub split_fraction: f64,
    pub image_token_cost: u64,
    pub retrieval_bonus: f64,
    pub discussion: DiscussionConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gazetteer: PathBuf::new(),
            roster: PathBuf::new(),
            corpus: None,
            split_fraction: 0.8,
            image_token_cost: 1000,
            retrieval_bonus: 0.15,
            discussion: DiscussionConfig::default(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Validation(format!("config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&raw)
            .map_err(|e| HarnessError::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.gazetteer = resolve(base, &cfg.gazetteer);
        cfg.roster = resolve(base, &cfg.roster);
        cfg.corpus = cfg.corpus.as_ref().map(|c| resolve(base, c));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.gazetteer.as_os_str().is_empty() {
            return Err(HarnessError::Validation(
                "config: gazetteer path missing".into(),
            ));
        }
        if self.roster.as_os_str().is_empty() {
            return Err(HarnessError::Validation(
                "config: roster path missing".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.split_fraction) {
            return Err(HarnessError::Validation(format!(
                "split_fraction {} outside [0, 1)",
                self.split_fraction
            )));
        }
        self.discussion
            .validate()
            .map_err(|e| HarnessError::Validation(e.to_string()))?;
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || p.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// The roster file: each agent is either a simulated profile or an HTTP
/// endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RosterSpec {
    pub agents: Vec<AgentSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<AgentProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<u64>,
}

impl RosterSpec {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Validation(format!("roster {}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| HarnessError::Validation(format!("roster {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let raw = serde_json::to_string_pretty(self).expect("roster spec serializes");
        std::fs::write(path, raw).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }
}

/// Everything a run needs, assembled from a config.
pub struct World {
    pub roster: Roster,
    pub gazetteer: Vec<GazetteerEntry>,
    pub sim_world: Arc<SimWorld>,
}

pub fn build_world(cfg: &RunConfig) -> Result<World, HarnessError> {
    let gazetteer =
        load_gazetteer(&cfg.gazetteer).map_err(|e| HarnessError::Validation(e.to_string()))?;
    let mut sim_world =
        SimWorld::from_gazetteer(gazetteer.clone(), cfg.discussion.th_km, cfg.retrieval_bonus);
    if let Some(corpus_path) = &cfg.corpus {
        sim_world.corpus =
            load_corpus(corpus_path).map_err(|e| HarnessError::Validation(e.to_string()))?;
    }
    let sim_world = Arc::new(sim_world);
    let spec = RosterSpec::load(&cfg.roster)?;
    let roster = build_roster(&spec, sim_world.clone())?;
    if roster.len() < cfg.discussion.k {
        return Err(HarnessError::Validation(format!(
            "roster has {} agents but k = {}",
            roster.len(),
            cfg.discussion.k
        )));
    }
    Ok(World {
        roster,
        gazetteer,
        sim_world,
    })
}

pub fn build_roster(spec: &RosterSpec, sim_world: Arc<SimWorld>) -> Result<Roster, HarnessError> {
    let mut agents: Vec<Box<dyn AgentBackend>> = Vec::with_capacity(spec.agents.len());
    for (index, a) in spec.agents.iter().enumerate() {
        let id = AgentId {
            index,
            name: a.name.clone(),
        };
        let backend: Box<dyn AgentBackend> = match (&a.profile, &a.endpoint) {
            (Some(profile), None) => Box::new(
                SimulatedAgent::new(id, profile.clone(), sim_world.clone())
                    .map_err(|e| HarnessError::Validation(format!("agent {}: {e}", a.name)))?,
            ),
            (None, Some(endpoint)) => Box::new(HttpAgent::new(
                id,
                endpoint.clone(),
                a.timeout_s.map(std::time::Duration::from_secs),
            )),
            _ => {
                return Err(HarnessError::Validation(format!(
                    "agent {}: exactly one of profile/endpoint required",
                    a.name
                )))
            }
        };
        agents.push(backend);
    }
    Roster::new(agents).map_err(|e| HarnessError::Validation(e.to_string()))
}
