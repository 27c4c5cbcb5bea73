//! Openness scoring against the ground truth, and the randomized validator
//! for the labeler's monotonicity property.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experimenting::{design_experiment, sample_dataset};
use crate::knowledge::{
    build_ground_truth, membership, negate, sample_agent_prior, true_knowledge, Claim, GroundTruth,
    KnowledgeBase, Membership, Pair, TeamId, WeightedClaim,
};
use crate::labeling::{
    label_with, reinterpret, EffectivePrior, LabeledKnowledge, Passthrough, Triple,
};
use crate::mining::{mine, MiningParams};
use crate::orchestrator::ScenarioConfig;
use crate::seed::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleReport {
    pub triple: Triple,
    pub size: usize,
    pub true_count: usize,
    pub false_count: usize,
    pub openness: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpennessReport {
    pub union_size: usize,
    pub true_count: usize,
    pub false_count: usize,
    pub openness: i64,
    pub normalized: f64,
    pub per_triple: Vec<TripleReport>,
}

fn count(claims: &BTreeSet<Claim>, gt: &GroundTruth) -> (usize, usize) {
    let t = claims
        .iter()
        .filter(|&&c| membership(c, gt) == Membership::InK)
        .count();
    (t, claims.len() - t)
}

/// Size of the true part minus size of the false part of the union of all
/// labeled claims.
///
/// The union is over claims, so opposite polarities on one pair from
/// different triples both enter and each counts on its own side.
pub fn openness(labelings: &[LabeledKnowledge], gt: &GroundTruth) -> Result<OpennessReport> {
    let mut by_triple: BTreeMap<Triple, BTreeSet<Claim>> = BTreeMap::new();
    for lk in labelings {
        let slot = by_triple.entry(lk.triple).or_default();
        for c in lk.claims() {
            if c.pair.v().0 >= gt.m() {
                return Err(Error::Precondition(format!(
                    "claim {c} outside the {} modeled variables",
                    gt.m()
                )));
            }
            slot.insert(c);
        }
    }
    let union: BTreeSet<Claim> = by_triple.values().flatten().copied().collect();
    let (true_count, false_count) = count(&union, gt);
    let per_triple = by_triple
        .into_iter()
        .map(|(triple, claims)| {
            let (t, f) = count(&claims, gt);
            TripleReport {
                triple,
                size: claims.len(),
                true_count: t,
                false_count: f,
                openness: t as i64 - f as i64,
            }
        })
        .collect();
    let union_size = union.len();
    let openness = true_count as i64 - false_count as i64;
    Ok(OpennessReport {
        union_size,
        true_count,
        false_count,
        openness,
        normalized: if union_size == 0 {
            0.0
        } else {
            openness as f64 / union_size as f64
        },
        per_triple,
    })
}

/// Which side of the universe the added claim was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    True,
    False,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTranscript {
    pub trial: usize,
    pub seed: u64,
    pub side: Side,
    pub added: WeightedClaim,
    pub prior_size: usize,
    pub patterns: usize,
    /// |output ∩ K| for side `true`, |output ∩ K^c| for side `false`.
    pub before: usize,
    pub after: usize,
}

impl TrialTranscript {
    pub fn violated(&self) -> bool {
        self.after < self.before
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub trials: usize,
    pub violations: usize,
    pub skipped: usize,
    pub passthrough: Passthrough,
    /// Transcripts of violating trials only.
    pub transcripts: Vec<TrialTranscript>,
}

/// Randomized check of the labeler's monotonicity.
///
/// Each trial builds a fresh ground truth, dataset, mined information and
/// effective prior from the scenario's parameters, then adds one claim with
/// confidence at least max(veto, trust) on a measured pair the prior does not
/// yet cover. The claim is true in even trials and false in odd ones; a trial
/// violates when the matching side of the labeled output shrinks.
pub fn validate_monotonicity(
    trials: usize,
    scenario: &ScenarioConfig,
    seed: u64,
    passthrough: Passthrough,
) -> Result<MonotonicityReport> {
    if trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    scenario.validate()?;
    let outcomes: Vec<Option<TrialTranscript>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            run_trial(
                t,
                scenario,
                derive_seed(seed, &[stream::TRIAL, t as u64]),
                passthrough,
            )
        })
        .collect::<Result<_>>()?;
    let skipped = outcomes.iter().filter(|o| o.is_none()).count();
    let transcripts: Vec<TrialTranscript> = outcomes
        .into_iter()
        .flatten()
        .filter(TrialTranscript::violated)
        .collect();
    Ok(MonotonicityReport {
        trials,
        violations: transcripts.len(),
        skipped,
        passthrough,
        transcripts,
    })
}

fn side_count(lk: &LabeledKnowledge, gt: &GroundTruth, side: Side) -> usize {
    let want = match side {
        Side::True => Membership::InK,
        Side::False => Membership::InKc,
    };
    lk.claims().filter(|&c| membership(c, gt) == want).count()
}

fn run_trial(
    trial: usize,
    cfg: &ScenarioConfig,
    seed: u64,
    passthrough: Passthrough,
) -> Result<Option<TrialTranscript>> {
    let mut rng = rng_from_seed(seed);
    let g = &cfg.ground_truth;
    let gt = build_ground_truth(g.variables, g.trees, g.p_stay, &mut rng)?;
    let (cov, acc) = (cfg.agents.coverage, cfg.agents.accuracy);

    let e = &cfg.experiment;
    let design = design_experiment(
        &KnowledgeBase::new(),
        gt.m(),
        e.target_width,
        e.selection_prob,
        e.noise_rate,
        e.samples,
        &mut rng,
    )?;
    let (ds, mut sheet) = sample_dataset(&gt, &design, TeamId(0), rng.gen())?;
    sheet.knowledge_snapshot = Some(sample_agent_prior(&gt, cov, acc, &mut rng)?);

    let miner_kb = sample_agent_prior(&gt, cov, acc, &mut rng)?;
    let mining = MiningParams {
        report_all: true,
        veto_confidence: cfg.mining.veto_confidence,
        thresholds: cfg.labeling.thresholds,
    };
    let delivered = rng.gen_bool(0.5).then_some(&sheet);
    let info = mine(
        &ds,
        &miner_kb,
        delivered,
        &[],
        &mining,
        TeamId(0),
        TeamId(0),
    );
    let direct = rng.gen_bool(0.5).then_some(&sheet);

    let base = sample_agent_prior(&gt, cov, acc, &mut rng)?;
    let side = if trial.is_multiple_of(2) {
        Side::True
    } else {
        Side::False
    };
    let mut candidates: Vec<Pair> = info
        .patterns
        .iter()
        .map(|p| p.pair)
        .filter(|&p| base.get(p).is_none())
        .collect();
    if candidates.is_empty() {
        candidates = Pair::all(gt.m())
            .filter(|&p| base.get(p).is_none())
            .collect();
    }
    let Some(&pair) = candidates.choose(&mut rng) else {
        return Ok(None);
    };
    let truth = true_knowledge(&gt)
        .into_iter()
        .find(|c| c.pair == pair)
        .expect("every pair has a true claim");
    let claim = match side {
        Side::True => truth,
        Side::False => negate(truth),
    };
    let floor = cfg
        .labeling
        .veto_confidence
        .max(cfg.labeling.trust_confidence);
    let added = WeightedClaim::new(claim, rng.gen_range(floor..=1.0))?;

    let params = &cfg.labeling;
    let outcome = |prior: &EffectivePrior| {
        let reinterpreted = reinterpret(&info, prior, direct, params);
        label_with(&reinterpreted, prior, params, TeamId(0), passthrough)
    };
    let before_prior = EffectivePrior::from_knowledge(base.clone());
    let mut grown = base;
    grown.insert(added);
    let after_prior = EffectivePrior::from_knowledge(grown);

    Ok(Some(TrialTranscript {
        trial,
        seed,
        side,
        added,
        prior_size: before_prior.claims.len(),
        patterns: info.patterns.len(),
        before: side_count(&outcome(&before_prior), &gt, side),
        after: side_count(&outcome(&after_prior), &gt, side),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::Origin;

    fn chain_gt() -> GroundTruth {
        // Trees {0,1,2} and {3,4}.
        GroundTruth::from_parents(vec![None, Some(0), Some(1), None, Some(3)], 0.9).unwrap()
    }

    fn labeled(l: usize, claims: &[Claim]) -> LabeledKnowledge {
        let mut lk = LabeledKnowledge::new(Triple {
            experimenting: TeamId(0),
            mining: TeamId(0),
            labeling: TeamId(l),
        });
        for &c in claims {
            lk.set(c, Origin::Pattern);
        }
        lk
    }

    #[test]
    fn empty_union_is_zero() {
        let r = openness(&[], &chain_gt()).unwrap();
        assert_eq!((r.union_size, r.openness, r.normalized), (0, 0, 0.0));
    }

    #[test]
    fn three_true_one_false() {
        let gt = chain_gt();
        let lk = labeled(
            0,
            &[
                Claim::dep(0, 1),
                Claim::dep(3, 4),
                Claim::indep(0, 3),
                Claim::indep(1, 2),
            ],
        );
        let r = openness(&[lk], &gt).unwrap();
        assert_eq!((r.true_count, r.false_count, r.openness), (3, 1, 2));
        assert_eq!(r.normalized, 0.5);
        assert_eq!(r.per_triple.len(), 1);
        assert_eq!(r.per_triple[0].openness, 2);
    }

    #[test]
    fn identical_triples_are_idempotent() {
        let gt = chain_gt();
        let a = labeled(0, &[Claim::dep(0, 2), Claim::indep(2, 4)]);
        let mut b = a.clone();
        b.triple.labeling = TeamId(1);
        let one = openness(std::slice::from_ref(&a), &gt).unwrap();
        let two = openness(&[a, b], &gt).unwrap();
        assert_eq!(
            (
                one.union_size,
                one.true_count,
                one.false_count,
                one.openness
            ),
            (
                two.union_size,
                two.true_count,
                two.false_count,
                two.openness
            )
        );
    }

    #[test]
    fn opposite_polarities_both_count() {
        let gt = chain_gt();
        let a = labeled(0, &[Claim::dep(0, 1)]);
        let b = labeled(1, &[Claim::indep(0, 1)]);
        let r = openness(&[a, b], &gt).unwrap();
        assert_eq!(
            (r.union_size, r.true_count, r.false_count, r.openness),
            (2, 1, 1, 0)
        );
    }

    #[test]
    fn out_of_range_claims_rejected() {
        let lk = labeled(0, &[Claim::dep(0, 9)]);
        assert!(openness(&[lk], &chain_gt()).is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = ScenarioConfig::default();
        assert!(validate_monotonicity(0, &cfg, 1, Passthrough::Normal).is_err());
    }
}
