use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabelingParams;
use crate::mining::{MiningParams, Thresholds};

pub const SCHEMA_VERSION: u32 = 1;

/// Which provenance channels are open. Channel 4 is all three at once.
///
/// * `ch1`: experimenter to miner (datasheet with knowledge snapshot)
/// * `ch2`: miner to labeler (miner knowledge and the full info sheet)
/// * `ch3`: experimenter to labeler (datasheet with knowledge snapshot)
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct ChannelPolicy {
    pub ch1: bool,
    pub ch2: bool,
    pub ch3: bool,
}

impl ChannelPolicy {
    pub const NONE: ChannelPolicy = ChannelPolicy {
        ch1: false,
        ch2: false,
        ch3: false,
    };
    pub const ALL: ChannelPolicy = ChannelPolicy {
        ch1: true,
        ch2: true,
        ch3: true,
    };

    /// Bit 0 is ch1, bit 1 ch2, bit 2 ch3.
    pub fn mask(self) -> u8 {
        self.ch1 as u8 | (self.ch2 as u8) << 1 | (self.ch3 as u8) << 2
    }

    pub fn from_mask(mask: u8) -> ChannelPolicy {
        ChannelPolicy {
            ch1: mask & 1 != 0,
            ch2: mask & 2 != 0,
            ch3: mask & 4 != 0,
        }
    }

    /// All eight combinations in mask order.
    pub fn combinations() -> impl Iterator<Item = ChannelPolicy> {
        (0u8..8).map(ChannelPolicy::from_mask)
    }

    pub fn is_channel4(self) -> bool {
        self == ChannelPolicy::ALL
    }

    pub fn label(self) -> String {
        if self == ChannelPolicy::NONE {
            return "none".into();
        }
        if self.is_channel4() {
            return "ch4".into();
        }
        let mut parts = Vec::new();
        if self.ch1 {
            parts.push("ch1");
        }
        if self.ch2 {
            parts.push("ch2");
        }
        if self.ch3 {
            parts.push("ch3");
        }
        parts.join("_")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSpec {
    pub variables: usize,
    pub trees: usize,
    pub p_stay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub count: usize,
    pub coverage: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamSpec {
    pub count: usize,
    pub size: usize,
    /// Explicit member lists, one per team. When present, `size` is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamsSpec {
    pub experimenting: TeamSpec,
    pub mining: TeamSpec,
    pub labeling: TeamSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub target_width: usize,
    pub selection_prob: f64,
    pub noise_rate: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningSpec {
    pub veto_confidence: f64,
}

impl Default for MiningSpec {
    fn default() -> Self {
        MiningSpec {
            veto_confidence: MiningParams::default().veto_confidence,
        }
    }
}

/// Which inputs each team consumes. Absent lists mean complete wiring.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wiring {
    /// Per miner: dataset (experimenting team) indices to mine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mining: Option<Vec<Vec<usize>>>,
    /// Per labeler: `[dataset, miner]` information products to label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeling: Option<Vec<Vec<[usize; 2]>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default = "default_scenario_name")]
    pub scenario: String,
    pub ground_truth: GroundTruthSpec,
    pub agents: AgentSpec,
    pub teams: TeamsSpec,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub mining: MiningSpec,
    #[serde(default)]
    pub labeling: LabelingParams,
    /// Peer access `H` as adjacency lists: miner `j` reads the knowledge of
    /// every miner listed in `peer_access[j]`. Missing rows mean no access.
    #[serde(default)]
    pub peer_access: Vec<Vec<usize>>,
    #[serde(default)]
    pub wiring: Wiring,
    #[serde(default)]
    pub channels: ChannelPolicy,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_scenario_name() -> String {
    "default".into()
}

fn one() -> usize {
    1
}

impl Default for ScenarioConfig {
    /// The reference scenario: 30 variables in 3 trees, two teams per role.
    fn default() -> Self {
        let team = TeamSpec {
            count: 2,
            size: 3,
            members: None,
        };
        ScenarioConfig {
            schema: SCHEMA_VERSION,
            scenario: default_scenario_name(),
            ground_truth: GroundTruthSpec {
                variables: 30,
                trees: 3,
                p_stay: 0.9,
            },
            agents: AgentSpec {
                count: 12,
                coverage: 0.2,
                accuracy: 0.85,
            },
            teams: TeamsSpec {
                experimenting: team.clone(),
                mining: team.clone(),
                labeling: team,
            },
            experiment: ExperimentSpec {
                target_width: 10,
                selection_prob: 0.5,
                noise_rate: 0.1,
                samples: 5000,
            },
            mining: MiningSpec::default(),
            labeling: LabelingParams {
                thresholds: Thresholds::default(),
                veto_confidence: 0.8,
                trust_confidence: 0.9,
            },
            peer_access: Vec::new(),
            wiring: Wiring::default(),
            channels: ChannelPolicy::ALL,
            replicates: 50,
            seed: 0,
        }
    }
}

fn unit_interval(path: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::config(path, format!("{x} not in [0, 1]")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<ScenarioConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ScenarioConfig::from_json(&text)
    }

    pub fn mining_params(&self) -> MiningParams {
        MiningParams {
            report_all: true,
            veto_confidence: self.mining.veto_confidence,
            thresholds: self.labeling.thresholds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::config(
                "schema",
                format!(
                    "unsupported schema {} (expected {SCHEMA_VERSION})",
                    self.schema
                ),
            ));
        }
        if self.scenario.is_empty()
            || !self
                .scenario
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::config("scenario", "must be non-empty [A-Za-z0-9_-]"));
        }
        let g = &self.ground_truth;
        if g.variables < 2 {
            return Err(Error::config(
                "ground_truth.variables",
                "at least 2 required",
            ));
        }
        if g.trees == 0 || g.trees > g.variables {
            return Err(Error::config(
                "ground_truth.trees",
                format!("{} not in [1, {}]", g.trees, g.variables),
            ));
        }
        if !(g.p_stay > 0.5 && g.p_stay < 1.0) {
            return Err(Error::config(
                "ground_truth.p_stay",
                format!("{} not in (0.5, 1)", g.p_stay),
            ));
        }
        let a = &self.agents;
        if a.count == 0 {
            return Err(Error::config("agents.count", "at least one agent required"));
        }
        unit_interval("agents.coverage", a.coverage)?;
        unit_interval("agents.accuracy", a.accuracy)?;
        for (role, t) in [
            ("experimenting", &self.teams.experimenting),
            ("mining", &self.teams.mining),
            ("labeling", &self.teams.labeling),
        ] {
            let base = format!("teams.{role}");
            if t.count == 0 {
                return Err(Error::config(
                    format!("{base}.count"),
                    "at least one team required",
                ));
            }
            match &t.members {
                Some(lists) => {
                    if lists.len() != t.count {
                        return Err(Error::config(
                            format!("{base}.members"),
                            format!("{} lists for {} teams", lists.len(), t.count),
                        ));
                    }
                    for (i, list) in lists.iter().enumerate() {
                        if list.is_empty() {
                            return Err(Error::config(
                                format!("{base}.members[{i}]"),
                                "empty team",
                            ));
                        }
                        if let Some(bad) = list.iter().find(|&&m| m >= a.count) {
                            return Err(Error::config(
                                format!("{base}.members[{i}]"),
                                format!("agent {bad} not in pool of {}", a.count),
                            ));
                        }
                    }
                }
                None => {
                    if t.size == 0 || t.size > a.count {
                        return Err(Error::config(
                            format!("{base}.size"),
                            format!("{} not in [1, {}]", t.size, a.count),
                        ));
                    }
                }
            }
        }
        let e = &self.experiment;
        if e.target_width < 2 || e.target_width > g.variables {
            return Err(Error::config(
                "experiment.target_width",
                format!("{} not in [2, {}]", e.target_width, g.variables),
            ));
        }
        unit_interval("experiment.selection_prob", e.selection_prob)?;
        if !(0.0..0.5).contains(&e.noise_rate) {
            return Err(Error::config(
                "experiment.noise_rate",
                format!("{} not in [0, 0.5)", e.noise_rate),
            ));
        }
        if e.samples == 0 {
            return Err(Error::config(
                "experiment.samples",
                "at least one sample required",
            ));
        }
        self.mining_params().validate()?;
        self.labeling.validate()?;

        let (ne, nm, nl) = (
            self.teams.experimenting.count,
            self.teams.mining.count,
            self.teams.labeling.count,
        );
        if self.peer_access.len() > nm {
            return Err(Error::config(
                "peer_access",
                format!("{} rows for {nm} miners", self.peer_access.len()),
            ));
        }
        for (j, row) in self.peer_access.iter().enumerate() {
            if let Some(&h) = row.iter().find(|&&h| h >= nm || h == j) {
                return Err(Error::config(
                    format!("peer_access[{j}]"),
                    format!("invalid peer {h}"),
                ));
            }
        }
        if let Some(w) = &self.wiring.mining {
            if w.len() != nm {
                return Err(Error::config(
                    "wiring.mining",
                    format!("{} rows for {nm} miners", w.len()),
                ));
            }
            for (j, row) in w.iter().enumerate() {
                if let Some(&i) = row.iter().find(|&&i| i >= ne) {
                    return Err(Error::config(
                        format!("wiring.mining[{j}]"),
                        format!("no dataset {i}"),
                    ));
                }
            }
        }
        if let Some(w) = &self.wiring.labeling {
            if w.len() != nl {
                return Err(Error::config(
                    "wiring.labeling",
                    format!("{} rows for {nl} labelers", w.len()),
                ));
            }
            for (l, row) in w.iter().enumerate() {
                for &[i, j] in row {
                    if !self.miner_reads(j, i) {
                        return Err(Error::config(
                            format!("wiring.labeling[{l}]"),
                            format!("miner {j} does not mine dataset {i}"),
                        ));
                    }
                }
            }
        }
        if self.replicates == 0 {
            return Err(Error::config(
                "replicates",
                "at least one replicate required",
            ));
        }
        Ok(())
    }

    /// Datasets mined by miner `j`, in ascending order.
    pub fn datasets_for_miner(&self, j: usize) -> Vec<usize> {
        let mut v = match &self.wiring.mining {
            Some(w) => w.get(j).cloned().unwrap_or_default(),
            None => (0..self.teams.experimenting.count).collect(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }

    fn miner_reads(&self, j: usize, i: usize) -> bool {
        j < self.teams.mining.count && self.datasets_for_miner(j).contains(&i)
    }

    /// `(dataset, miner)` products read by labeler `l`, in ascending order.
    pub fn products_for_labeler(&self, l: usize) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = match &self.wiring.labeling {
            Some(w) => w
                .get(l)
                .map(|row| row.iter().map(|&[i, j]| (i, j)).collect())
                .unwrap_or_default(),
            None => (0..self.teams.mining.count)
                .flat_map(|j| self.datasets_for_miner(j).into_iter().map(move |i| (i, j)))
                .collect(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn peers_of(&self, j: usize) -> Vec<usize> {
        let mut v = self.peer_access.get(j).cloned().unwrap_or_default();
        v.sort_unstable();
        v.dedup();
        v
    }
}
