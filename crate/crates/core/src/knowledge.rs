//! The knowledge universe: pairwise dependence claims over a forest-structured
//! binary model, agent priors and rectified team knowledge.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An unordered variable pair stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    u: VarId,
    v: VarId,
}

impl Pair {
    pub fn new(a: usize, b: usize) -> Option<Pair> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Pair {
                u: VarId(a),
                v: VarId(b),
            }),
            std::cmp::Ordering::Greater => Some(Pair {
                u: VarId(b),
                v: VarId(a),
            }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn u(&self) -> VarId {
        self.u
    }

    pub fn v(&self) -> VarId {
        self.v
    }

    pub fn contains(&self, x: VarId) -> bool {
        self.u == x || self.v == x
    }

    /// All pairs over `m` variables in canonical order.
    pub fn all(m: usize) -> impl Iterator<Item = Pair> {
        (0..m).flat_map(move |u| {
            (u + 1..m).map(move |v| Pair {
                u: VarId(u),
                v: VarId(v),
            })
        })
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.u, self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct PairRecord {
    u: usize,
    v: usize,
}

impl serde::Serialize for Pair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PairRecord {
            u: self.u().0,
            v: self.v().0,
        }
        .serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for Pair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PairRecord::deserialize(d)?;
        Pair::new(r.u, r.v).ok_or_else(|| serde::de::Error::custom("pair endpoints must differ"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "dep")]
    Dependent,
    #[serde(rename = "indep")]
    Independent,
}

impl Polarity {
    pub fn flip(self) -> Polarity {
        match self {
            Polarity::Dependent => Polarity::Independent,
            Polarity::Independent => Polarity::Dependent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Claim {
    pub pair: Pair,
    pub polarity: Polarity,
}

impl Claim {
    pub fn new(pair: Pair, polarity: Polarity) -> Claim {
        Claim { pair, polarity }
    }

    pub fn dep(a: usize, b: usize) -> Claim {
        Claim::new(
            Pair::new(a, b).expect("distinct variables"),
            Polarity::Dependent,
        )
    }

    pub fn indep(a: usize, b: usize) -> Claim {
        Claim::new(
            Pair::new(a, b).expect("distinct variables"),
            Polarity::Independent,
        )
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.polarity {
            Polarity::Dependent => "Dep",
            Polarity::Independent => "Indep",
        };
        write!(f, "{tag}{}", self.pair)
    }
}

/// The complementary claim: same pair, opposite polarity.
pub fn negate(c: Claim) -> Claim {
    Claim::new(c.pair, c.polarity.flip())
}

/// Wire form shared by every claim-carrying JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClaimRecord {
    u: usize,
    v: usize,
    polarity: Polarity,
    confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "ClaimRecord", try_from = "ClaimRecord")]
pub struct WeightedClaim {
    pub claim: Claim,
    pub confidence: f64,
}

impl WeightedClaim {
    pub fn new(claim: Claim, confidence: f64) -> Result<WeightedClaim> {
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(Error::Precondition(format!(
                "confidence {confidence} outside (0, 1]"
            )));
        }
        Ok(WeightedClaim { claim, confidence })
    }
}

impl From<WeightedClaim> for ClaimRecord {
    fn from(w: WeightedClaim) -> Self {
        ClaimRecord {
            u: w.claim.pair.u.0,
            v: w.claim.pair.v.0,
            polarity: w.claim.polarity,
            confidence: w.confidence,
        }
    }
}

impl TryFrom<ClaimRecord> for WeightedClaim {
    type Error = String;

    fn try_from(r: ClaimRecord) -> std::result::Result<Self, Self::Error> {
        if r.u == r.v {
            return Err(format!("claim on self-pair ({}, {})", r.u, r.v));
        }
        let pair = Pair::new(r.u, r.v).expect("checked distinct");
        WeightedClaim::new(Claim::new(pair, r.polarity), r.confidence).map_err(|e| e.to_string())
    }
}

/// A set of weighted claims holding at most one claim per pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<WeightedClaim>", try_from = "Vec<WeightedClaim>")]
pub struct KnowledgeBase {
    entries: BTreeMap<Pair, (Polarity, f64)>,
}

impl KnowledgeBase {
    pub fn new() -> KnowledgeBase {
        KnowledgeBase::default()
    }

    /// Inserts a claim, replacing any claim already held on the same pair.
    pub fn insert(&mut self, wc: WeightedClaim) -> Option<WeightedClaim> {
        self.entries
            .insert(wc.claim.pair, (wc.claim.polarity, wc.confidence))
            .map(|(polarity, confidence)| WeightedClaim {
                claim: Claim::new(wc.claim.pair, polarity),
                confidence,
            })
    }

    /// Inserts only if the pair is not yet claimed. Returns whether it was inserted.
    pub fn insert_if_absent(&mut self, wc: WeightedClaim) -> bool {
        if self.entries.contains_key(&wc.claim.pair) {
            return false;
        }
        self.entries
            .insert(wc.claim.pair, (wc.claim.polarity, wc.confidence));
        true
    }

    pub fn get(&self, pair: Pair) -> Option<WeightedClaim> {
        self.entries
            .get(&pair)
            .map(|&(polarity, confidence)| WeightedClaim {
                claim: Claim::new(pair, polarity),
                confidence,
            })
    }

    pub fn contains_claim(&self, c: Claim) -> bool {
        self.entries
            .get(&c.pair)
            .is_some_and(|&(p, _)| p == c.polarity)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Claims in canonical pair order.
    pub fn iter(&self) -> impl Iterator<Item = WeightedClaim> + '_ {
        self.entries
            .iter()
            .map(|(&pair, &(polarity, confidence))| WeightedClaim {
                claim: Claim::new(pair, polarity),
                confidence,
            })
    }

    pub fn claims(&self) -> impl Iterator<Item = Claim> + '_ {
        self.iter().map(|w| w.claim)
    }

    /// Largest variable index mentioned, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.entries.keys().map(|p| p.v.0).max()
    }
}

impl From<KnowledgeBase> for Vec<WeightedClaim> {
    fn from(kb: KnowledgeBase) -> Self {
        kb.iter().collect()
    }
}

impl TryFrom<Vec<WeightedClaim>> for KnowledgeBase {
    type Error = String;

    fn try_from(claims: Vec<WeightedClaim>) -> std::result::Result<Self, Self::Error> {
        let mut kb = KnowledgeBase::new();
        for wc in claims {
            if !kb.insert_if_absent(wc) {
                return Err(format!("pair {} claimed twice", wc.claim.pair));
            }
        }
        Ok(kb)
    }
}

impl FromIterator<WeightedClaim> for KnowledgeBase {
    /// Later claims on an already-present pair replace earlier ones.
    fn from_iter<I: IntoIterator<Item = WeightedClaim>>(iter: I) -> Self {
        let mut kb = KnowledgeBase::new();
        for wc in iter {
            kb.insert(wc);
        }
        kb
    }
}

/// Tree-structured generative model over binary variables.
///
/// Each root is a fair coin; each child copies its parent's bit with
/// probability `p_stay` and flips it otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroundTruthRecord", into = "GroundTruthRecord")]
pub struct GroundTruth {
    parent: Vec<Option<usize>>,
    p_stay: f64,
    root: Vec<usize>,
    depth: Vec<usize>,
    order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRecord {
    m: usize,
    parent: Vec<Option<usize>>,
    p_stay: f64,
}

impl From<GroundTruth> for GroundTruthRecord {
    fn from(gt: GroundTruth) -> Self {
        GroundTruthRecord {
            m: gt.parent.len(),
            parent: gt.parent,
            p_stay: gt.p_stay,
        }
    }
}

impl TryFrom<GroundTruthRecord> for GroundTruth {
    type Error = String;

    fn try_from(r: GroundTruthRecord) -> std::result::Result<Self, Self::Error> {
        if r.m != r.parent.len() {
            return Err(format!("m = {} but {} parent entries", r.m, r.parent.len()));
        }
        GroundTruth::from_parents(r.parent, r.p_stay).map_err(|e| e.to_string())
    }
}

fn check_p_stay(p_stay: f64) -> Result<()> {
    if !(p_stay > 0.5 && p_stay < 1.0) {
        return Err(Error::config("p_stay", format!("{p_stay} not in (0.5, 1)")));
    }
    Ok(())
}

impl GroundTruth {
    /// Builds a model from explicit parent links, rejecting cycles and
    /// out-of-range parents.
    pub fn from_parents(parent: Vec<Option<usize>>, p_stay: f64) -> Result<GroundTruth> {
        check_p_stay(p_stay)?;
        let m = parent.len();
        if m == 0 {
            return Err(Error::config("m", "at least one variable required"));
        }
        let mut children = vec![Vec::new(); m];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= m {
                    return Err(Error::config(
                        format!("parent[{v}]"),
                        format!("parent {p} out of range"),
                    ));
                }
                if p == v {
                    return Err(Error::config(format!("parent[{v}]"), "self loop"));
                }
                children[p].push(v);
            }
        }
        let mut root = vec![usize::MAX; m];
        let mut depth = vec![0; m];
        let mut order = Vec::with_capacity(m);
        for r in (0..m).filter(|&v| parent[v].is_none()) {
            root[r] = r;
            let mut stack = vec![r];
            while let Some(x) = stack.pop() {
                order.push(x);
                for &c in children[x].iter().rev() {
                    root[c] = r;
                    depth[c] = depth[x] + 1;
                    stack.push(c);
                }
            }
        }
        if order.len() != m {
            return Err(Error::config("parent", "parent links contain a cycle"));
        }
        Ok(GroundTruth {
            parent,
            p_stay,
            root,
            depth,
            order,
        })
    }

    pub fn m(&self) -> usize {
        self.parent.len()
    }

    pub fn p_stay(&self) -> f64 {
        self.p_stay
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn root_of(&self, v: usize) -> usize {
        self.root[v]
    }

    pub fn tree_count(&self) -> usize {
        self.parent.iter().filter(|p| p.is_none()).count()
    }

    pub fn edge_count(&self) -> usize {
        self.m() - self.tree_count()
    }

    pub fn same_tree(&self, u: usize, v: usize) -> bool {
        self.root[u] == self.root[v]
    }

    /// Vertices ordered so every parent precedes its children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Vertices on the tree path from `u` to `v` inclusive, or `None` across trees.
    pub fn path(&self, u: usize, v: usize) -> Option<Vec<usize>> {
        if !self.same_tree(u, v) {
            return None;
        }
        let (mut a, mut b) = (u, v);
        let mut up = vec![a];
        let mut down = vec![b];
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("non-root");
            up.push(a);
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("non-root");
            down.push(b);
        }
        while a != b {
            a = self.parent[a].expect("non-root");
            b = self.parent[b].expect("non-root");
            up.push(a);
            down.push(b);
        }
        down.pop();
        up.extend(down.into_iter().rev());
        Some(up)
    }

    pub fn distance(&self, u: usize, v: usize) -> Option<usize> {
        self.path(u, v).map(|p| p.len() - 1)
    }
}

/// Samples a uniformly random rooted labeled forest on `m` variables with
/// exactly `tree_count` trees.
///
/// Uses the coalescent construction: starting from singletons, repeatedly
/// pick a uniform vertex and attach to it the root of a uniformly chosen
/// other tree.
pub fn build_ground_truth<R: Rng + ?Sized>(
    m: usize,
    tree_count: usize,
    p_stay: f64,
    rng: &mut R,
) -> Result<GroundTruth> {
    if m == 0 {
        return Err(Error::config("m", "at least one variable required"));
    }
    if tree_count == 0 || tree_count > m {
        return Err(Error::config(
            "tree_count",
            format!("{tree_count} not in [1, {m}]"),
        ));
    }
    check_p_stay(p_stay)?;

    let mut parent: Vec<Option<usize>> = vec![None; m];
    let mut root: Vec<usize> = (0..m).collect();
    let mut roots: Vec<usize> = (0..m).collect();
    for _ in 0..(m - tree_count) {
        let v = rng.gen_range(0..m);
        let own = root[v];
        let others: Vec<usize> = roots.iter().copied().filter(|&r| r != own).collect();
        let r = *others.choose(rng).expect("more than one tree remains");
        parent[r] = Some(v);
        roots.retain(|&x| x != r);
        for x in root.iter_mut().filter(|x| **x == r) {
            *x = own;
        }
    }
    GroundTruth::from_parents(parent, p_stay)
}

/// The set of true claims `K`: one claim per pair, dependent iff the pair
/// shares a tree.
pub fn true_knowledge(gt: &GroundTruth) -> Vec<Claim> {
    Pair::all(gt.m())
        .map(|p| {
            let pol = if gt.same_tree(p.u.0, p.v.0) {
                Polarity::Dependent
            } else {
                Polarity::Independent
            };
            Claim::new(p, pol)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    InK,
    InKc,
}

/// Ground-truth oracle. Only the metrics side of the simulator may consult it.
pub fn membership(c: Claim, gt: &GroundTruth) -> Membership {
    let dependent = gt.same_tree(c.pair.u.0, c.pair.v.0);
    match (c.polarity, dependent) {
        (Polarity::Dependent, true) | (Polarity::Independent, false) => Membership::InK,
        _ => Membership::InKc,
    }
}

/// Samples one agent's prior: each pair is covered with probability
/// `coverage`; a covered pair carries its true claim with probability
/// `accuracy` and the negation otherwise. Confidences are uniform on [0.5, 1].
pub fn sample_agent_prior<R: Rng + ?Sized>(
    gt: &GroundTruth,
    coverage: f64,
    accuracy: f64,
    rng: &mut R,
) -> Result<KnowledgeBase> {
    if !(0.0..=1.0).contains(&coverage) {
        return Err(Error::config(
            "coverage",
            format!("{coverage} not in [0, 1]"),
        ));
    }
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::config(
            "accuracy",
            format!("{accuracy} not in [0, 1]"),
        ));
    }
    let mut kb = KnowledgeBase::new();
    for truth in true_knowledge(gt) {
        if !rng.gen_bool(coverage) {
            continue;
        }
        let claim = if rng.gen_bool(accuracy) {
            truth
        } else {
            negate(truth)
        };
        let confidence = rng.gen_range(0.5..=1.0);
        kb.insert(WeightedClaim { claim, confidence });
    }
    Ok(kb)
}

/// Merges member priors by strict majority per pair.
///
/// The winning polarity keeps the mean confidence of the members that voted
/// for it; exact ties drop the pair.
pub fn rectify(member_priors: &[&KnowledgeBase]) -> Result<KnowledgeBase> {
    if member_priors.is_empty() {
        return Err(Error::Precondition(
            "rectify needs at least one member".into(),
        ));
    }
    let mut votes: BTreeMap<Pair, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for kb in member_priors {
        for wc in kb.iter() {
            let slot = votes.entry(wc.claim.pair).or_default();
            match wc.claim.polarity {
                Polarity::Dependent => slot.0.push(wc.confidence),
                Polarity::Independent => slot.1.push(wc.confidence),
            }
        }
    }
    let mut out = KnowledgeBase::new();
    for (pair, (mut dep, mut indep)) in votes {
        let (polarity, agreeing) = match dep.len().cmp(&indep.len()) {
            std::cmp::Ordering::Greater => (Polarity::Dependent, &mut dep),
            std::cmp::Ordering::Less => (Polarity::Independent, &mut indep),
            std::cmp::Ordering::Equal => continue,
        };
        // Sorted summation keeps the mean independent of member order.
        agreeing.sort_by(f64::total_cmp);
        let confidence = agreeing.iter().sum::<f64>() / agreeing.len() as f64;
        out.insert(WeightedClaim {
            claim: Claim::new(pair, polarity),
            confidence: confidence.clamp(f64::MIN_POSITIVE, 1.0),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Experimenting,
    Mining,
    Labeling,
}

/// Index of a team within its role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TeamId(pub usize);

impl fmt::Display for TeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The set of agents `A` with one prior per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPool {
    priors: Vec<KnowledgeBase>,
}

impl AgentPool {
    pub fn new(priors: Vec<KnowledgeBase>) -> Result<AgentPool> {
        if priors.is_empty() {
            return Err(Error::config("agents.count", "at least one agent required"));
        }
        Ok(AgentPool { priors })
    }

    pub fn sample<R: Rng + ?Sized>(
        gt: &GroundTruth,
        count: usize,
        coverage: f64,
        accuracy: f64,
        rng: &mut R,
    ) -> Result<AgentPool> {
        let priors = (0..count)
            .map(|_| sample_agent_prior(gt, coverage, accuracy, rng))
            .collect::<Result<Vec<_>>>()?;
        AgentPool::new(priors)
    }

    /// ρ, the number of agents.
    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    pub fn prior(&self, agent: usize) -> &KnowledgeBase {
        &self.priors[agent]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Team {
    pub id: TeamId,
    pub role: Role,
    pub members: Vec<usize>,
    pub knowledge: KnowledgeBase,
}

impl Team {
    /// Forms a team and rectifies its members' priors.
    pub fn form(id: TeamId, role: Role, mut members: Vec<usize>, pool: &AgentPool) -> Result<Team> {
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::Precondition(format!(
                "{role:?} team {id} has no members"
            )));
        }
        if let Some(&bad) = members.iter().find(|&&a| a >= pool.len()) {
            return Err(Error::Precondition(format!(
                "{role:?} team {id}: agent {bad} not in pool of {}",
                pool.len()
            )));
        }
        let priors: Vec<&KnowledgeBase> = members.iter().map(|&a| pool.prior(a)).collect();
        let knowledge = rectify(&priors)?;
        Ok(Team {
            id,
            role,
            members,
            knowledge,
        })
    }
}
