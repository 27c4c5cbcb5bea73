//! The experimenting stage: knowledge-informed dataset design, sampling from
//! the ground-truth model with optional selection and measurement noise, and
//! the datasheet that records what was actually executed.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::{Bernoulli, Distribution};
use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::knowledge::{GroundTruth, KnowledgeBase, Polarity, TeamId, VarId};
use crate::seed::rng_from_seed;

/// Rejection-sampling condition `variable == value` applied before noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub variable: VarId,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub measured: Vec<VarId>,
    pub selection: Option<Selection>,
    pub noise_rate: f64,
    pub n: usize,
}

impl ExperimentDesign {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.measured.len() < 2 {
            return Err(Error::config(
                "design.measured",
                "at least two variables required",
            ));
        }
        if self.measured.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "design.measured",
                "must be strictly increasing",
            ));
        }
        if let Some(bad) = self.measured.iter().find(|v| v.0 >= m) {
            return Err(Error::config(
                "design.measured",
                format!("variable {bad} out of range for m = {m}"),
            ));
        }
        if let Some(sel) = self.selection {
            if !self.measured.contains(&sel.variable) {
                return Err(Error::config(
                    "design.selection",
                    "selection variable must be measured",
                ));
            }
            if sel.value > 1 {
                return Err(Error::config("design.selection.value", "must be 0 or 1"));
            }
        }
        check_noise_rate(self.noise_rate)?;
        Ok(())
    }
}

pub(crate) fn check_noise_rate(delta: f64) -> Result<()> {
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::config(
            "noise_rate",
            format!("{delta} not in [0, 0.5)"),
        ));
    }
    Ok(())
}

/// Chooses which variables to measure from the team's dependence beliefs.
///
/// Endpoints of Dependent claims are taken in order of decreasing confidence
/// until `target_width` is reached; any remaining slots are filled with
/// uniformly random unmeasured variables.
pub fn design_experiment<R: Rng + ?Sized>(
    team_kb: &KnowledgeBase,
    m: usize,
    target_width: usize,
    selection_prob: f64,
    noise_rate: f64,
    n: usize,
    rng: &mut R,
) -> Result<ExperimentDesign> {
    if target_width < 2 || target_width > m {
        return Err(Error::config(
            "experiment.target_width",
            format!("{target_width} not in [2, {m}]"),
        ));
    }
    if !(0.0..=1.0).contains(&selection_prob) {
        return Err(Error::config(
            "experiment.selection_prob",
            format!("{selection_prob} not in [0, 1]"),
        ));
    }
    check_noise_rate(noise_rate)?;
    if let Some(v) = team_kb.max_var() {
        if v >= m {
            return Err(Error::Precondition(format!(
                "knowledge mentions variable {v} >= m"
            )));
        }
    }

    let mut deps: Vec<_> = team_kb
        .iter()
        .filter(|w| w.claim.polarity == Polarity::Dependent)
        .collect();
    // Stable: ties keep canonical pair order.
    deps.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut measured = BTreeSet::new();
    'fill: for w in &deps {
        for x in [w.claim.pair.u(), w.claim.pair.v()] {
            if measured.len() == target_width {
                break 'fill;
            }
            measured.insert(x);
        }
    }
    let missing = target_width - measured.len();
    let pad: Vec<VarId> = (0..m)
        .map(VarId)
        .filter(|v| !measured.contains(v))
        .choose_multiple(rng, missing);
    measured.extend(pad);
    let measured: Vec<VarId> = measured.into_iter().collect();

    let selection = if rng.gen_bool(selection_prob) {
        let variable = *measured.choose(rng).expect("width >= 2");
        Some(Selection { variable, value: 1 })
    } else {
        None
    };

    Ok(ExperimentDesign {
        measured,
        selection,
        noise_rate,
        n,
    })
}

/// Binary data table, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    columns: Vec<VarId>,
    bits: Vec<u8>,
}

impl Dataset {
    pub fn from_rows(columns: Vec<VarId>, rows: &[Vec<u8>]) -> Result<Dataset> {
        let w = columns.len();
        let mut bits = Vec::with_capacity(rows.len() * w);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != w {
                return Err(Error::Precondition(format!(
                    "row {i} has {} cells, expected {w}",
                    row.len()
                )));
            }
            if row.iter().any(|&b| b > 1) {
                return Err(Error::Precondition(format!(
                    "row {i} has a non-binary cell"
                )));
            }
            bits.extend_from_slice(row);
        }
        Ok(Dataset { columns, bits })
    }

    pub fn columns(&self) -> &[VarId] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.bits.len() / self.columns.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column_index(&self, v: VarId) -> Option<usize> {
        self.columns.iter().position(|&c| c == v)
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let w = self.width();
        &self.bits[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.bits.chunks_exact(self.width().max(1))
    }

    /// SHA-256 over the column ids and cell bits, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.columns.len() as u64).to_le_bytes());
        for c in &self.columns {
            h.update((c.0 as u64).to_le_bytes());
        }
        h.update(&self.bits);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.0.to_string()))?;
        for row in self.rows() {
            w.write_record(row.iter().map(|b| if *b == 1 { "1" } else { "0" }))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Machine-readable provenance for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datasheet {
    pub team_id: TeamId,
    pub measured: Vec<VarId>,
    pub selection: Option<Selection>,
    pub noise_rate: f64,
    pub n: usize,
    pub seed_fingerprint: String,
    pub knowledge_snapshot: Option<KnowledgeBase>,
}

/// Draws `design.n` rows from the ground-truth model.
///
/// Full rows are resampled until the selection condition holds, then each
/// measured bit is flipped with probability `noise_rate`.
pub fn sample_dataset(
    gt: &GroundTruth,
    design: &ExperimentDesign,
    team_id: TeamId,
    seed: u64,
) -> Result<(Dataset, Datasheet)> {
    design.validate(gt.m())?;
    let mut rng = rng_from_seed(seed);
    let coin = Bernoulli::new(0.5).expect("valid p");
    let stay = Bernoulli::new(gt.p_stay()).expect("valid p");
    let flip = Bernoulli::new(design.noise_rate).expect("valid p");

    let w = design.measured.len();
    let mut bits = Vec::with_capacity(design.n * w);
    let mut full = vec![0u8; gt.m()];
    for _ in 0..design.n {
        loop {
            for &v in gt.topological_order() {
                full[v] = match gt.parent(v) {
                    None => coin.sample(&mut rng) as u8,
                    Some(p) => full[p] ^ (!stay.sample(&mut rng)) as u8,
                };
            }
            match design.selection {
                Some(sel) if full[sel.variable.0] != sel.value => continue,
                _ => break,
            }
        }
        for v in &design.measured {
            bits.push(full[v.0] ^ flip.sample(&mut rng) as u8);
        }
    }

    let dataset = Dataset {
        columns: design.measured.clone(),
        bits,
    };
    let sheet = Datasheet {
        team_id,
        measured: design.measured.clone(),
        selection: design.selection,
        noise_rate: design.noise_rate,
        n: design.n,
        seed_fingerprint: format!("{seed:016x}"),
        knowledge_snapshot: None,
    };
    Ok((dataset, sheet))
}

/// Path of the JSON sidecar for a dataset file: `dir/name.datasheet.json`.
pub fn datasheet_path(dataset_path: &Path) -> PathBuf {
    let stem = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dataset_path.with_file_name(format!("{stem}.datasheet.json"))
}

/// Writes the dataset as CSV and its datasheet next to it.
pub fn export_dataset(dataset: &Dataset, sheet: &Datasheet, path: &Path) -> Result<PathBuf> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    dataset.write_csv(std::io::BufWriter::new(file))?;
    let sidecar = datasheet_path(path);
    let json = serde_json::to_string_pretty(sheet)?;
    std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
    Ok(sidecar)
}
