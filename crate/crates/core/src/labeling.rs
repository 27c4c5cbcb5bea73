//! The labeling stage: reinterpretation of mined information under the
//! labeler's effective knowledge, then labeling into claims.
//!
//! Labeling is built from two rules: a confident prior claim vetoes any
//! pattern that contradicts it, and every trusted prior claim is passed
//! through to the output, overwriting whatever a pattern produced on its
//! pair. Together they make the count of true (or false) output claims
//! non-decreasing when a true (or false) claim is added to the prior on a
//! previously unclaimed pair.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experimenting::Datasheet;
use crate::knowledge::{negate, Claim, KnowledgeBase, Pair, Polarity, TeamId};
use crate::mining::{contradicted, correct_attenuation, Information, Tag, Thresholds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingParams {
    pub thresholds: Thresholds,
    pub veto_confidence: f64,
    pub trust_confidence: f64,
}

impl Default for LabelingParams {
    fn default() -> Self {
        LabelingParams {
            thresholds: Thresholds::default(),
            veto_confidence: 0.8,
            trust_confidence: 0.9,
        }
    }
}

impl LabelingParams {
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate("labeling.thresholds")?;
        for (name, x) in [
            ("labeling.veto_confidence", self.veto_confidence),
            ("labeling.trust_confidence", self.trust_confidence),
        ] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::config(name, format!("{x} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// How trusted prior claims reach the output.
///
/// Only `Normal` is a faithful labeler; the other two exist for negative
/// controls of the monotonicity validator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Passthrough {
    #[default]
    Normal,
    Disabled,
    /// Emits the negation of each trusted claim.
    Inverted,
}

/// Union of the knowledge bases available to a labeler, one claim per pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EffectivePrior {
    pub claims: KnowledgeBase,
}

impl EffectivePrior {
    pub fn from_knowledge(claims: KnowledgeBase) -> EffectivePrior {
        EffectivePrior { claims }
    }
}

/// Merges delivered knowledge with precedence labeler > miner > experimenter
/// > peers (in list order). The higher-precedence claim wins a pair outright.
pub fn build_effective_prior(
    own: &KnowledgeBase,
    delivered_miner: Option<&KnowledgeBase>,
    delivered_exp: Option<&KnowledgeBase>,
    peers: &[&KnowledgeBase],
) -> EffectivePrior {
    let mut claims = own.clone();
    let rest = delivered_miner
        .into_iter()
        .chain(delivered_exp)
        .chain(peers.iter().copied());
    for kb in rest {
        for wc in kb.iter() {
            claims.insert_if_absent(wc);
        }
    }
    EffectivePrior { claims }
}

/// Rewrites mined information in light of the labeler's knowledge and any
/// available datasheet.
///
/// The datasheet is `direct` when the experimenter sent it, otherwise the one
/// embedded in the info sheet. Uncorrected patterns get the same attenuation
/// correction a miner would apply, a selection the miner did not know about
/// is tagged, and patterns contradicting a prior claim held with at least
/// the veto confidence are removed. Patterns already marked `disputed`
/// upstream are left in place; labeling ignores them either way.
pub fn reinterpret(
    info: &Information,
    prior: &EffectivePrior,
    direct: Option<&Datasheet>,
    params: &LabelingParams,
) -> Information {
    let sheet = direct.or(info.info_sheet.upstream_datasheet.as_ref());
    let noise = sheet.map(|s| s.noise_rate).filter(|&x| x > 0.0);
    let selection = sheet.and_then(|s| s.selection);

    let mut out = info.clone();
    out.patterns.retain_mut(|p| {
        if p.has(Tag::Degenerate) {
            return true;
        }
        if let Some(delta) = noise {
            if !p.has(Tag::NoiseCorrected) {
                p.phi = correct_attenuation(p.phi, delta);
                p.tags.insert(Tag::NoiseCorrected);
            }
        }
        if let Some(sel) = selection {
            if !p.pair.contains(sel.variable) {
                p.tags.insert(Tag::SelectionConditioned);
            }
        }
        if p.has(Tag::Disputed) {
            return true;
        }
        match params.thresholds.implied(p.phi) {
            Some(implied) => {
                !contradicted([&prior.claims], p.pair, implied, params.veto_confidence)
            }
            None => true,
        }
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Pattern,
    PriorPassthrough,
}

/// Producing teams (i, j, l) of a labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub experimenting: TeamId,
    pub mining: TeamId,
    pub labeling: TeamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LabeledRecord {
    u: usize,
    v: usize,
    polarity: Polarity,
    origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledKnowledge {
    pub triple: Triple,
    #[serde(with = "labeled_claims")]
    claims: BTreeMap<Pair, (Polarity, Origin)>,
}

mod labeled_claims {
    use super::*;

    pub fn serialize<S: serde::Serializer>(
        claims: &BTreeMap<Pair, (Polarity, Origin)>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(claims.iter().map(|(p, &(polarity, origin))| LabeledRecord {
            u: p.u().0,
            v: p.v().0,
            polarity,
            origin,
        }))
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<Pair, (Polarity, Origin)>, D::Error> {
        let records = Vec::<LabeledRecord>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for r in records {
            let pair = Pair::new(r.u, r.v)
                .ok_or_else(|| serde::de::Error::custom("pair endpoints must differ"))?;
            if out.insert(pair, (r.polarity, r.origin)).is_some() {
                return Err(serde::de::Error::custom(format!(
                    "pair {pair} labeled twice"
                )));
            }
        }
        Ok(out)
    }
}

impl LabeledKnowledge {
    pub fn new(triple: Triple) -> LabeledKnowledge {
        LabeledKnowledge {
            triple,
            claims: BTreeMap::new(),
        }
    }

    /// Sets the claim on its pair, replacing any earlier one.
    pub fn set(&mut self, claim: Claim, origin: Origin) {
        self.claims.insert(claim.pair, (claim.polarity, origin));
    }

    pub fn claims(&self) -> impl Iterator<Item = Claim> + '_ {
        self.claims.iter().map(|(&p, &(pol, _))| Claim::new(p, pol))
    }

    pub fn entries(&self) -> impl Iterator<Item = (Claim, Origin)> + '_ {
        self.claims
            .iter()
            .map(|(&p, &(pol, o))| (Claim::new(p, pol), o))
    }

    pub fn get(&self, pair: Pair) -> Option<(Claim, Origin)> {
        self.claims
            .get(&pair)
            .map(|&(pol, o)| (Claim::new(pair, pol), o))
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }
}

/// Turns reinterpreted patterns into claims, then passes trusted prior
/// claims through.
pub fn label(
    info: &Information,
    prior: &EffectivePrior,
    params: &LabelingParams,
    labeler: TeamId,
) -> LabeledKnowledge {
    label_with(info, prior, params, labeler, Passthrough::Normal)
}

pub fn label_with(
    info: &Information,
    prior: &EffectivePrior,
    params: &LabelingParams,
    labeler: TeamId,
    passthrough: Passthrough,
) -> LabeledKnowledge {
    let mut out = LabeledKnowledge::new(Triple {
        experimenting: info.info_sheet.dataset_team,
        mining: info.info_sheet.mining_team,
        labeling: labeler,
    });
    for p in &info.patterns {
        if p.has(Tag::Degenerate) || p.has(Tag::Disputed) {
            continue;
        }
        match params.thresholds.implied(p.phi) {
            Some(Polarity::Dependent) => {
                out.set(Claim::new(p.pair, Polarity::Dependent), Origin::Pattern)
            }
            Some(Polarity::Independent) if !p.has(Tag::SelectionConditioned) => {
                out.set(Claim::new(p.pair, Polarity::Independent), Origin::Pattern)
            }
            _ => {}
        }
    }
    for wc in prior.claims.iter() {
        if wc.confidence < params.trust_confidence {
            continue;
        }
        match passthrough {
            Passthrough::Normal => out.set(wc.claim, Origin::PriorPassthrough),
            Passthrough::Inverted => out.set(negate(wc.claim), Origin::PriorPassthrough),
            Passthrough::Disabled => {}
        }
    }
    out
}
