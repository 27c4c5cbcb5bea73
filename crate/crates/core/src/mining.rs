//! The mining stage: exhaustive pairwise phi patterns, provenance-aware
//! corrections when a datasheet was delivered, and the information sheet.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experimenting::{Dataset, Datasheet};
use crate::knowledge::{KnowledgeBase, Pair, Polarity, TeamId};

/// Cutoffs mapping |phi| onto an implied polarity. Between them is the
/// abstention band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub dep: f64,
    pub indep: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            dep: 0.3,
            indep: 0.05,
        }
    }
}

impl Thresholds {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(0.0 <= self.indep && self.indep < self.dep && self.dep <= 1.0) {
            return Err(Error::config(
                path,
                format!("need 0 <= indep ({}) < dep ({}) <= 1", self.indep, self.dep),
            ));
        }
        Ok(())
    }

    pub fn implied(&self, phi: f64) -> Option<Polarity> {
        let a = phi.abs();
        if a >= self.dep {
            Some(Polarity::Dependent)
        } else if a <= self.indep {
            Some(Polarity::Independent)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    NoiseCorrected,
    SelectionConditioned,
    Degenerate,
    Disputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub pair: Pair,
    pub phi: f64,
    pub support: usize,
    pub tags: BTreeSet<Tag>,
}

impl Pattern {
    pub fn has(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    pub report_all: bool,
    pub veto_confidence: f64,
    pub thresholds: Thresholds,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            report_all: true,
            veto_confidence: 0.8,
            thresholds: Thresholds::default(),
        }
    }
}

impl MiningParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.veto_confidence > 0.0 && self.veto_confidence <= 1.0) {
            return Err(Error::config(
                "mining.veto_confidence",
                format!("{} not in (0, 1]", self.veto_confidence),
            ));
        }
        if !self.report_all {
            return Err(Error::config(
                "mining.report_all",
                "only exhaustive reporting is supported",
            ));
        }
        self.thresholds.validate("labeling.thresholds")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corrections {
    pub noise_corrected: bool,
    pub selection_conditioned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoSheet {
    pub dataset_team: TeamId,
    pub mining_team: TeamId,
    pub params: MiningParams,
    pub corrections_applied: Corrections,
    pub upstream_datasheet: Option<Datasheet>,
    pub knowledge_snapshot: Option<KnowledgeBase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Information {
    pub patterns: Vec<Pattern>,
    pub info_sheet: InfoSheet,
}

impl Information {
    pub fn pattern(&self, pair: Pair) -> Option<&Pattern> {
        self.patterns.iter().find(|p| p.pair == pair)
    }
}

/// A contingency table with an empty row or column margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegenerateTable;

impl std::fmt::Display for DegenerateTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("contingency table has a zero margin")
    }
}

impl std::error::Error for DegenerateTable {}

/// Phi from 2x2 counts `n11, n10, n01, n00` (first index is the `u` bit).
pub fn phi_from_counts(
    n11: u64,
    n10: u64,
    n01: u64,
    n00: u64,
) -> std::result::Result<f64, DegenerateTable> {
    let (a, b, c, d) = (n11 as f64, n10 as f64, n01 as f64, n00 as f64);
    let margins = (a + b) * (c + d) * (a + c) * (b + d);
    if margins == 0.0 {
        return Err(DegenerateTable);
    }
    Ok(((a * d - b * c) / margins.sqrt()).clamp(-1.0, 1.0))
}

pub fn phi_coefficient(
    ds: &Dataset,
    u: crate::knowledge::VarId,
    v: crate::knowledge::VarId,
) -> Result<std::result::Result<f64, DegenerateTable>> {
    let (iu, iv) = match (ds.column_index(u), ds.column_index(v)) {
        (Some(iu), Some(iv)) => (iu, iv),
        _ => {
            return Err(Error::Precondition(format!(
                "variables {u} and {v} must both be measured"
            )))
        }
    };
    Ok(phi_at(ds, iu, iv))
}

fn phi_at(ds: &Dataset, iu: usize, iv: usize) -> std::result::Result<f64, DegenerateTable> {
    let mut n = [0u64; 4];
    for row in ds.rows() {
        n[((row[iu] << 1) | row[iv]) as usize] += 1;
    }
    phi_from_counts(n[3], n[2], n[1], n[0])
}

/// Undoes symmetric bit-flip attenuation: phi / (1 - 2δ)², clamped to [-1, 1].
pub fn correct_attenuation(phi: f64, noise_rate: f64) -> f64 {
    let keep = 1.0 - 2.0 * noise_rate;
    (phi / (keep * keep)).clamp(-1.0, 1.0)
}

/// True when some claim with confidence at least `min_confidence` holds the
/// opposite of `implied` on `pair`.
pub(crate) fn contradicted<'a>(
    sources: impl IntoIterator<Item = &'a KnowledgeBase>,
    pair: Pair,
    implied: Polarity,
    min_confidence: f64,
) -> bool {
    sources.into_iter().any(|kb| {
        kb.get(pair)
            .is_some_and(|w| w.confidence >= min_confidence && w.claim.polarity != implied)
    })
}

/// Extracts one pattern per measured pair.
///
/// Upstream knowledge enters only through `delivered`: its noise rate drives
/// the attenuation correction, its selection drives `selection_conditioned`
/// tags and its knowledge snapshot joins the dispute check.
pub fn mine(
    ds: &Dataset,
    miner_kb: &KnowledgeBase,
    delivered: Option<&Datasheet>,
    peer_kbs: &[&KnowledgeBase],
    params: &MiningParams,
    dataset_team: TeamId,
    mining_team: TeamId,
) -> Information {
    let noise = delivered.map(|d| d.noise_rate).filter(|&x| x > 0.0);
    let selection = delivered.and_then(|d| d.selection);

    let mut sources: Vec<&KnowledgeBase> = vec![miner_kb];
    if let Some(snapshot) = delivered.and_then(|d| d.knowledge_snapshot.as_ref()) {
        sources.push(snapshot);
    }
    sources.extend(peer_kbs.iter().copied());

    let cols = ds.columns();
    let mut patterns = Vec::with_capacity(cols.len() * cols.len().saturating_sub(1) / 2);
    for iu in 0..cols.len() {
        for iv in iu + 1..cols.len() {
            let pair = Pair::new(cols[iu].0, cols[iv].0).expect("distinct columns");
            let mut tags = BTreeSet::new();
            let phi = match phi_at(ds, iu, iv) {
                Err(DegenerateTable) => {
                    tags.insert(Tag::Degenerate);
                    0.0
                }
                Ok(raw) => match noise {
                    Some(delta) => {
                        tags.insert(Tag::NoiseCorrected);
                        correct_attenuation(raw, delta)
                    }
                    None => raw,
                },
            };
            if let Some(sel) = selection {
                if !pair.contains(sel.variable) {
                    tags.insert(Tag::SelectionConditioned);
                }
            }
            if !tags.contains(&Tag::Degenerate) {
                if let Some(implied) = params.thresholds.implied(phi) {
                    if contradicted(
                        sources.iter().copied(),
                        pair,
                        implied,
                        params.veto_confidence,
                    ) {
                        tags.insert(Tag::Disputed);
                    }
                }
            }
            patterns.push(Pattern {
                pair,
                phi,
                support: ds.len(),
                tags,
            });
        }
    }
    patterns.sort_by_key(|p| p.pair);

    Information {
        patterns,
        info_sheet: InfoSheet {
            dataset_team,
            mining_team,
            params: *params,
            corrections_applied: Corrections {
                noise_corrected: noise.is_some(),
                selection_conditioned: selection.is_some(),
            },
            upstream_datasheet: delivered.cloned(),
            knowledge_snapshot: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experimenting::Selection;
    use crate::knowledge::{Claim, VarId, WeightedClaim};

    fn ds(cols: &[usize], rows: &[&[u8]]) -> Dataset {
        let rows: Vec<Vec<u8>> = rows.iter().map(|r| r.to_vec()).collect();
        Dataset::from_rows(cols.iter().copied().map(VarId).collect(), &rows).unwrap()
    }

    fn sheet(delta: f64, selection: Option<usize>, cols: &[usize]) -> Datasheet {
        Datasheet {
            team_id: TeamId(0),
            measured: cols.iter().copied().map(VarId).collect(),
            selection: selection.map(|s| Selection {
                variable: VarId(s),
                value: 1,
            }),
            noise_rate: delta,
            n: 0,
            seed_fingerprint: "0".into(),
            knowledge_snapshot: None,
        }
    }

    #[test]
    fn phi_extremes() {
        let same = ds(&[0, 1], &[&[0, 0], &[1, 1], &[1, 1], &[0, 0], &[1, 1]]);
        assert_eq!(phi_coefficient(&same, VarId(0), VarId(1)).unwrap(), Ok(1.0));
        let comp = ds(&[0, 1], &[&[0, 1], &[1, 0], &[1, 0]]);
        assert_eq!(
            phi_coefficient(&comp, VarId(0), VarId(1)).unwrap(),
            Ok(-1.0)
        );
        let indep = ds(&[0, 1], &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        assert_eq!(
            phi_coefficient(&indep, VarId(0), VarId(1)).unwrap(),
            Ok(0.0)
        );
        let flat = ds(&[0, 1], &[&[1, 0], &[1, 1]]);
        assert_eq!(
            phi_coefficient(&flat, VarId(0), VarId(1)).unwrap(),
            Err(DegenerateTable)
        );
        assert!(phi_coefficient(&flat, VarId(0), VarId(5)).is_err());
    }

    #[test]
    fn phi_from_counts_matches_hand_value() {
        // (20*30 - 10*40) / sqrt(30*70*60*40) = 200 / sqrt(5_040_000)
        let phi = phi_from_counts(20, 10, 40, 30).unwrap();
        assert!((phi - 200.0 / 5_040_000f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn one_pattern_per_pair_and_degenerate_tagging() {
        let d = ds(
            &[1, 4, 6],
            &[&[0, 1, 1], &[1, 1, 0], &[1, 1, 1], &[0, 1, 0]],
        );
        let info = mine(
            &d,
            &KnowledgeBase::new(),
            None,
            &[],
            &MiningParams::default(),
            TeamId(0),
            TeamId(0),
        );
        assert_eq!(info.patterns.len(), 3);
        let p = info.pattern(Pair::new(1, 4).unwrap()).unwrap();
        assert!(p.has(Tag::Degenerate));
        assert_eq!(p.phi, 0.0);
        assert!(info.info_sheet.upstream_datasheet.is_none());
        assert_eq!(info.info_sheet.corrections_applied, Corrections::default());
    }

    #[test]
    fn correction_and_clamping() {
        assert!((correct_attenuation(0.512, 0.1) - 0.8).abs() < 1e-12);
        assert_eq!(correct_attenuation(0.9, 0.2), 1.0);
        assert_eq!(correct_attenuation(-0.9, 0.2), -1.0);

        let d = ds(
            &[0, 1],
            &[
                &[0, 0],
                &[1, 1],
                &[0, 1],
                &[1, 1],
                &[0, 0],
                &[1, 0],
                &[1, 1],
            ],
        );
        let raw = mine(
            &d,
            &KnowledgeBase::new(),
            None,
            &[],
            &MiningParams::default(),
            TeamId(0),
            TeamId(0),
        );
        let s = sheet(0.1, None, &[0, 1]);
        let fixed = mine(
            &d,
            &KnowledgeBase::new(),
            Some(&s),
            &[],
            &MiningParams::default(),
            TeamId(0),
            TeamId(0),
        );
        let (r, c) = (&raw.patterns[0], &fixed.patterns[0]);
        assert!(c.has(Tag::NoiseCorrected));
        assert!(!r.has(Tag::NoiseCorrected));
        assert_eq!(c.phi, correct_attenuation(r.phi, 0.1));
        assert!(fixed.info_sheet.corrections_applied.noise_corrected);
        assert_eq!(fixed.info_sheet.upstream_datasheet.as_ref(), Some(&s));
    }

    #[test]
    fn zero_noise_datasheet_changes_only_provenance() {
        let d = ds(
            &[0, 1, 2],
            &[&[0, 0, 1], &[1, 1, 0], &[0, 1, 1], &[1, 1, 1], &[0, 0, 0]],
        );
        let p = MiningParams::default();
        let plain = mine(
            &d,
            &KnowledgeBase::new(),
            None,
            &[],
            &p,
            TeamId(0),
            TeamId(1),
        );
        let s = sheet(0.0, None, &[0, 1, 2]);
        let with = mine(
            &d,
            &KnowledgeBase::new(),
            Some(&s),
            &[],
            &p,
            TeamId(0),
            TeamId(1),
        );
        assert_eq!(plain.patterns, with.patterns);
        assert!(!with.info_sheet.corrections_applied.noise_corrected);
    }

    #[test]
    fn selection_tags_pairs_without_selected_variable() {
        let d = ds(
            &[0, 1, 2],
            &[&[0, 1, 1], &[1, 1, 0], &[0, 1, 1], &[1, 0, 1]],
        );
        let s = sheet(0.0, Some(1), &[0, 1, 2]);
        let info = mine(
            &d,
            &KnowledgeBase::new(),
            Some(&s),
            &[],
            &MiningParams::default(),
            TeamId(0),
            TeamId(0),
        );
        for p in &info.patterns {
            assert_eq!(p.has(Tag::SelectionConditioned), !p.pair.contains(VarId(1)));
        }
    }

    #[test]
    fn confident_contradictions_are_disputed() {
        let d = ds(&[0, 1], &[&[0, 0], &[1, 1], &[0, 0], &[1, 1]]);
        let strong: KnowledgeBase = [WeightedClaim::new(Claim::indep(0, 1), 0.9).unwrap()]
            .into_iter()
            .collect();
        let weak: KnowledgeBase = [WeightedClaim::new(Claim::indep(0, 1), 0.6).unwrap()]
            .into_iter()
            .collect();
        let agree: KnowledgeBase = [WeightedClaim::new(Claim::dep(0, 1), 0.99).unwrap()]
            .into_iter()
            .collect();
        let p = MiningParams::default();
        let run = |kb: &KnowledgeBase, peers: &[&KnowledgeBase]| {
            mine(&d, kb, None, peers, &p, TeamId(0), TeamId(0)).patterns[0].has(Tag::Disputed)
        };
        assert!(run(&strong, &[]));
        assert!(!run(&weak, &[]));
        assert!(!run(&agree, &[]));
        assert!(run(&agree, &[&strong]));

        // The delivered experimenter snapshot joins the dispute check.
        let mut s = sheet(0.0, None, &[0, 1]);
        s.knowledge_snapshot = Some(strong.clone());
        let info = mine(
            &d,
            &KnowledgeBase::new(),
            Some(&s),
            &[],
            &p,
            TeamId(0),
            TeamId(0),
        );
        assert!(info.patterns[0].has(Tag::Disputed));
    }

    #[test]
    fn information_json_shape() {
        let d = ds(&[0, 1], &[&[0, 0], &[1, 1]]);
        let info = mine(
            &d,
            &KnowledgeBase::new(),
            None,
            &[],
            &MiningParams::default(),
            TeamId(0),
            TeamId(0),
        );
        let v = serde_json::to_value(&info).unwrap();
        assert_eq!(v["patterns"][0]["pair"]["u"], 0);
        assert_eq!(v["patterns"][0]["tags"], serde_json::json!([]));
        assert!(v["info_sheet"]["upstream_datasheet"].is_null());
        let back: Information = serde_json::from_value(v).unwrap();
        assert_eq!(back, info);
    }
}
