//! Wires teams into the experimenting → mining → labeling topology, gates
//! provenance delivery by channel, and executes runs and sweeps.
//!
//! All randomness is consumed by the data stage (ground truth, priors, team
//! membership, designs and datasets) and is derived only from the data seed,
//! so changing the channel policy never perturbs upstream draws.

mod config;
mod sweep;

pub use config::{
    AgentSpec, ChannelPolicy, ExperimentSpec, GroundTruthSpec, MiningSpec, ScenarioConfig,
    TeamSpec, TeamsSpec, Wiring, SCHEMA_VERSION,
};
pub use sweep::{sign_test, sweep, ComboSummary, SignTest, SweepOutcome, SweepRow, SweepSummary};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experimenting::{design_experiment, sample_dataset, Dataset, Datasheet};
use crate::knowledge::{
    build_ground_truth, AgentPool, GroundTruth, KnowledgeBase, Pair, Role, Team, TeamId,
};
use crate::labeling::{build_effective_prior, label, reinterpret, LabeledKnowledge, Triple};
use crate::metrics::{openness, OpennessReport};
use crate::mining::{mine, Information, Tag};
use crate::seed::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub team: TeamId,
    pub rows: usize,
    pub hash: String,
    pub datasheet: Datasheet,
}

/// What reached a labeler for one information product, and what it did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleTrail {
    pub triple: Triple,
    pub info_sheet_delivered: bool,
    pub miner_knowledge_delivered: bool,
    pub experimenter_provenance_delivered: bool,
    pub effective_prior_size: usize,
    pub patterns_in: usize,
    pub patterns_out: usize,
    pub vetoed: Vec<Pair>,
    pub corrected_by_labeler: usize,
    pub selection_tagged_by_labeler: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema: u32,
    pub scenario: String,
    pub seed: u64,
    pub data_seed: u64,
    pub channels: ChannelPolicy,
    pub combo_mask: u8,
    pub config: ScenarioConfig,
    pub ground_truth: GroundTruth,
    pub teams: Vec<Team>,
    pub datasets: Vec<DatasetRecord>,
    pub information: Vec<Information>,
    pub trails: Vec<TripleTrail>,
    pub labelings: Vec<LabeledKnowledge>,
    pub report: OpennessReport,
}

/// Upstream state shared by every channel combination of one data seed.
#[derive(Debug, Clone)]
pub struct DataStage {
    pub ground_truth: GroundTruth,
    pub pool: AgentPool,
    pub experimenting: Vec<Team>,
    pub mining: Vec<Team>,
    pub labeling: Vec<Team>,
    pub datasets: Vec<(Dataset, Datasheet)>,
}

fn form_teams(
    cfg: &ScenarioConfig,
    role: Role,
    pool: &AgentPool,
    data_seed: u64,
) -> Result<Vec<Team>> {
    let (spec, tag) = match role {
        Role::Experimenting => (&cfg.teams.experimenting, 0),
        Role::Mining => (&cfg.teams.mining, 1),
        Role::Labeling => (&cfg.teams.labeling, 2),
    };
    (0..spec.count)
        .map(|t| {
            let members = match &spec.members {
                Some(lists) => lists[t].clone(),
                None => {
                    let mut rng =
                        rng_from_seed(derive_seed(data_seed, &[stream::TEAMS, tag, t as u64]));
                    sample(&mut rng, pool.len(), spec.size).into_vec()
                }
            };
            Team::form(TeamId(t), role, members, pool)
        })
        .collect()
}

/// Builds the ground truth, agents, teams and datasets for a data seed.
pub fn data_stage(cfg: &ScenarioConfig, data_seed: u64) -> Result<DataStage> {
    cfg.validate()?;
    let g = &cfg.ground_truth;
    let ground_truth = build_ground_truth(
        g.variables,
        g.trees,
        g.p_stay,
        &mut rng_from_seed(derive_seed(data_seed, &[stream::GROUND_TRUTH])),
    )?;
    let pool = AgentPool::sample(
        &ground_truth,
        cfg.agents.count,
        cfg.agents.coverage,
        cfg.agents.accuracy,
        &mut rng_from_seed(derive_seed(data_seed, &[stream::AGENT_PRIORS])),
    )?;
    let experimenting = form_teams(cfg, Role::Experimenting, &pool, data_seed)?;
    let mining = form_teams(cfg, Role::Mining, &pool, data_seed)?;
    let labeling = form_teams(cfg, Role::Labeling, &pool, data_seed)?;

    let e = &cfg.experiment;
    let datasets = experimenting
        .iter()
        .map(|team| {
            let i = team.id.0 as u64;
            let design = design_experiment(
                &team.knowledge,
                ground_truth.m(),
                e.target_width,
                e.selection_prob,
                e.noise_rate,
                e.samples,
                &mut rng_from_seed(derive_seed(data_seed, &[stream::DESIGN, i])),
            )?;
            let (ds, mut sheet) = sample_dataset(
                &ground_truth,
                &design,
                team.id,
                derive_seed(data_seed, &[stream::DATASET, i]),
            )?;
            sheet.knowledge_snapshot = Some(team.knowledge.clone());
            Ok((ds, sheet))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DataStage {
        ground_truth,
        pool,
        experimenting,
        mining,
        labeling,
        datasets,
    })
}

/// The copy of an information product a labeler receives. Without channel 2
/// only the patterns arrive; the info sheet's provenance is withheld.
fn deliver_information(info: &Information, ch2: bool) -> Information {
    let mut out = info.clone();
    if !ch2 {
        out.info_sheet.upstream_datasheet = None;
        out.info_sheet.knowledge_snapshot = None;
    }
    out
}

/// Executes the mining and labeling stages over a prepared data stage.
pub fn run_stage(
    cfg: &ScenarioConfig,
    stage: &DataStage,
    channels: ChannelPolicy,
    seed: u64,
    data_seed: u64,
) -> Result<RunResult> {
    let mining_params = cfg.mining_params();
    let nm = stage.mining.len();

    // information[j][i]: miner j's product on dataset i.
    let mut information: Vec<Vec<Option<Information>>> = vec![vec![None; stage.datasets.len()]; nm];
    for miner in &stage.mining {
        let j = miner.id.0;
        let peers: Vec<&KnowledgeBase> = cfg
            .peers_of(j)
            .into_iter()
            .map(|h| &stage.mining[h].knowledge)
            .collect();
        for i in cfg.datasets_for_miner(j) {
            let (ds, sheet) = &stage.datasets[i];
            let delivered = channels.ch1.then_some(sheet);
            let mut info = mine(
                ds,
                &miner.knowledge,
                delivered,
                &peers,
                &mining_params,
                TeamId(i),
                miner.id,
            );
            info.info_sheet.knowledge_snapshot = Some(miner.knowledge.clone());
            information[j][i] = Some(info);
        }
    }

    let mut trails = Vec::new();
    let mut labelings = Vec::new();
    for labeler in &stage.labeling {
        for (i, j) in cfg.products_for_labeler(labeler.id.0) {
            let info = information[j][i].as_ref().expect("validated wiring");
            let delivered = deliver_information(info, channels.ch2);
            let sheet = &stage.datasets[i].1;
            // Redacted to None unless channel 2 is open.
            let miner_kb = delivered.info_sheet.knowledge_snapshot.as_ref();
            let direct = channels.ch3.then_some(sheet);
            let exp_kb = direct.and_then(|s| s.knowledge_snapshot.as_ref());
            let peers: Vec<&KnowledgeBase> = if channels.ch2 {
                cfg.peers_of(j)
                    .into_iter()
                    .map(|h| &stage.mining[h].knowledge)
                    .collect()
            } else {
                Vec::new()
            };
            let prior = build_effective_prior(&labeler.knowledge, miner_kb, exp_kb, &peers);
            let reinterpreted = reinterpret(&delivered, &prior, direct, &cfg.labeling);
            let labeled = label(&reinterpreted, &prior, &cfg.labeling, labeler.id);

            let kept: std::collections::BTreeSet<Pair> =
                reinterpreted.patterns.iter().map(|p| p.pair).collect();
            let newly = |tag: Tag| {
                reinterpreted
                    .patterns
                    .iter()
                    .filter(|p| {
                        p.has(tag) && !delivered.pattern(p.pair).is_some_and(|q| q.has(tag))
                    })
                    .count()
            };
            trails.push(TripleTrail {
                triple: labeled.triple,
                info_sheet_delivered: channels.ch2,
                miner_knowledge_delivered: miner_kb.is_some(),
                experimenter_provenance_delivered: direct.is_some(),
                effective_prior_size: prior.claims.len(),
                patterns_in: delivered.patterns.len(),
                patterns_out: reinterpreted.patterns.len(),
                vetoed: delivered
                    .patterns
                    .iter()
                    .map(|p| p.pair)
                    .filter(|p| !kept.contains(p))
                    .collect(),
                corrected_by_labeler: newly(Tag::NoiseCorrected),
                selection_tagged_by_labeler: newly(Tag::SelectionConditioned),
            });
            labelings.push(labeled);
        }
    }

    let report = openness(&labelings, &stage.ground_truth)?;
    let mut teams = stage.experimenting.clone();
    teams.extend(stage.mining.iter().cloned());
    teams.extend(stage.labeling.iter().cloned());

    Ok(RunResult {
        schema: config::SCHEMA_VERSION,
        scenario: cfg.scenario.clone(),
        seed,
        data_seed,
        channels,
        combo_mask: channels.mask(),
        config: cfg.clone(),
        ground_truth: stage.ground_truth.clone(),
        teams,
        datasets: stage
            .datasets
            .iter()
            .map(|(ds, sheet)| DatasetRecord {
                team: sheet.team_id,
                rows: ds.len(),
                hash: ds.content_hash(),
                datasheet: sheet.clone(),
            })
            .collect(),
        information: information.into_iter().flatten().flatten().collect(),
        trails,
        labelings,
        report,
    })
}

/// Runs the scenario under its configured channel policy. `seed` seeds the
/// data stage directly.
pub fn run(cfg: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    run_with_channels(cfg, cfg.channels, seed)
}

pub fn run_with_channels(
    cfg: &ScenarioConfig,
    channels: ChannelPolicy,
    seed: u64,
) -> Result<RunResult> {
    let stage = data_stage(cfg, seed)?;
    run_stage(cfg, &stage, channels, seed, seed)
}
