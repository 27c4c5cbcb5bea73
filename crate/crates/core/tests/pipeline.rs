mod common;

use std::collections::BTreeSet;

use ktsim::experimenting::ExperimentDesign;
use ktsim::knowledge::{rectify, GroundTruth, KnowledgeBase, Polarity, TeamId};
use ktsim::labeling::{build_effective_prior, reinterpret};
use ktsim::mining::{mine, MiningParams};
use ktsim::orchestrator::{
    data_stage, run, run_with_channels, ChannelPolicy, RunResult, ScenarioConfig,
};

fn small(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.experiment.samples = 2000;
    cfg.seed = seed;
    cfg
}

/// One team of the same three agents in every role.
fn self_driving_lab() -> ScenarioConfig {
    let mut cfg = small(0);
    for spec in [
        &mut cfg.teams.experimenting,
        &mut cfg.teams.mining,
        &mut cfg.teams.labeling,
    ] {
        spec.count = 1;
        spec.members = Some(vec![vec![0, 1, 2]]);
    }
    cfg.agents.coverage = 0.5;
    cfg.channels = ChannelPolicy::ALL;
    cfg
}

#[test]
fn default_config_file_matches_builtin_default() {
    let loaded = ScenarioConfig::load(&common::default_config_path()).unwrap();
    assert_eq!(loaded, ScenarioConfig::default());
}

#[test]
fn same_seed_same_json() {
    let cfg = small(5);
    let a = serde_json::to_string(&run(&cfg, 5).unwrap()).unwrap();
    let b = serde_json::to_string(&run(&cfg, 5).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_string(&run(&cfg, 6).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn run_json_roundtrips() {
    let r = run(&small(2), 2).unwrap();
    let back: RunResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn channels_never_alter_datasets() {
    let cfg = small(9);
    let runs: Vec<RunResult> = ChannelPolicy::combinations()
        .map(|p| run_with_channels(&cfg, p, 9).unwrap())
        .collect();
    for r in &runs[1..] {
        assert_eq!(r.datasets, runs[0].datasets);
        assert_eq!(r.ground_truth, runs[0].ground_truth);
        assert_eq!(r.teams, runs[0].teams);
    }
}

#[test]
fn teams_hold_rectified_member_priors() {
    let stage = data_stage(&small(4), 4).unwrap();
    for team in stage
        .experimenting
        .iter()
        .chain(&stage.mining)
        .chain(&stage.labeling)
    {
        let priors: Vec<&KnowledgeBase> =
            team.members.iter().map(|&a| stage.pool.prior(a)).collect();
        assert_eq!(team.knowledge, rectify(&priors).unwrap());
    }
}

fn union_find_roots(gt: &GroundTruth) -> Vec<usize> {
    let mut root: Vec<usize> = (0..gt.m()).collect();
    fn find(root: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while root[r] != r {
            r = root[r];
        }
        root[x] = r;
        r
    }
    for v in 0..gt.m() {
        if let Some(p) = gt.parent(v) {
            let (a, b) = (find(&mut root, v), find(&mut root, p));
            root[a] = b;
        }
    }
    (0..gt.m()).map(|v| find(&mut root, v)).collect()
}

#[test]
fn reported_openness_matches_a_recount() {
    for seed in 0..4 {
        let r = run(&small(seed), seed).unwrap();
        let roots = union_find_roots(&r.ground_truth);
        let mut seen = BTreeSet::new();
        for lk in &r.labelings {
            seen.extend(lk.claims());
        }
        let truthful = seen
            .iter()
            .filter(|c| {
                let joined = roots[c.pair.u().0] == roots[c.pair.v().0];
                joined == (c.polarity == Polarity::Dependent)
            })
            .count();
        let t = truthful as i64;
        let f = (seen.len() - truthful) as i64;
        assert_eq!(r.report.union_size, seen.len());
        assert_eq!(r.report.openness, t - f);
        if !seen.is_empty() {
            assert!((r.report.normalized - (t - f) as f64 / seen.len() as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn closed_channel_two_withholds_provenance() {
    let cfg = small(3);
    let r = run_with_channels(&cfg, ChannelPolicy::from_mask(1 | 4), 3).unwrap();
    for t in &r.trails {
        assert!(!t.info_sheet_delivered);
        assert!(!t.miner_knowledge_delivered);
        assert!(t.experimenter_provenance_delivered);
    }
    let r = run_with_channels(&cfg, ChannelPolicy::ALL, 3).unwrap();
    assert!(r
        .trails
        .iter()
        .all(|t| t.info_sheet_delivered && t.miner_knowledge_delivered));
}

#[test]
fn labeler_correction_matches_miner_correction() {
    let stage = data_stage(&small(12), 12).unwrap();
    let params = MiningParams::default();
    let empty = KnowledgeBase::new();
    let labeling = ScenarioConfig::default().labeling;
    for (ds, sheet) in &stage.datasets {
        let mut bare = sheet.clone();
        bare.knowledge_snapshot = None;
        let by_miner = mine(ds, &empty, Some(&bare), &[], &params, TeamId(0), TeamId(0));
        let blind = mine(ds, &empty, None, &[], &params, TeamId(0), TeamId(0));
        let prior = build_effective_prior(&empty, None, None, &[]);
        let by_labeler = reinterpret(&blind, &prior, Some(&bare), &labeling);
        assert_eq!(by_miner.patterns.len(), by_labeler.patterns.len());
        for (a, b) in by_miner.patterns.iter().zip(&by_labeler.patterns) {
            assert_eq!(a.pair, b.pair);
            assert!((a.phi - b.phi).abs() < 1e-12);
            assert_eq!(a.tags, b.tags);
        }
    }
}

#[test]
fn self_driving_lab_reinterpretation_is_identity() {
    let cfg = self_driving_lab();
    for seed in 0..10 {
        let stage = data_stage(&cfg, seed).unwrap();
        let kb = &stage.labeling[0].knowledge;
        assert_eq!(kb, &stage.mining[0].knowledge);
        assert_eq!(kb, &stage.experimenting[0].knowledge);

        let r = run(&cfg, seed).unwrap();
        assert_eq!(r.information.len(), 1);
        let t = &r.trails[0];
        assert!(t.vetoed.is_empty(), "seed {seed}: vetoed {:?}", t.vetoed);
        assert_eq!(t.corrected_by_labeler, 0);
        assert_eq!(t.selection_tagged_by_labeler, 0);
        assert_eq!(t.patterns_in, t.patterns_out);

        let (_, sheet) = &stage.datasets[0];
        let info = &r.information[0];
        let prior = build_effective_prior(kb, Some(kb), Some(kb), &[]);
        assert_eq!(&reinterpret(info, &prior, Some(sheet), &cfg.labeling), info);
    }
}

#[test]
fn design_follows_team_beliefs() {
    let stage = data_stage(&small(21), 21).unwrap();
    for (team, (_, sheet)) in stage.experimenting.iter().zip(&stage.datasets) {
        let design: ExperimentDesign = ExperimentDesign {
            measured: sheet.measured.clone(),
            selection: sheet.selection,
            noise_rate: sheet.noise_rate,
            n: sheet.n,
        };
        design.validate(stage.ground_truth.m()).unwrap();
        // The most confident Dependent belief is always measured.
        if let Some(top) = team
            .knowledge
            .iter()
            .filter(|w| w.claim.polarity == Polarity::Dependent)
            .max_by(|a, b| a.confidence.total_cmp(&b.confidence))
        {
            assert!(sheet.measured.contains(&top.claim.pair.u()));
            assert!(sheet.measured.contains(&top.claim.pair.v()));
        }
        assert_eq!(sheet.knowledge_snapshot.as_ref(), Some(&team.knowledge));
    }
}
