use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::statistics::Statistics;

use super::{data_stage, run_stage, ChannelPolicy, RunResult, ScenarioConfig};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// One CSV line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub combo_mask: u8,
    pub replicate: usize,
    pub seed: u64,
    pub union_size: usize,
    pub true_count: usize,
    pub false_count: usize,
    pub openness: i64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSummary {
    pub combo_mask: u8,
    pub label: String,
    pub runs: usize,
    pub mean_openness: f64,
    pub std_openness: f64,
    pub mean_normalized: f64,
    pub std_normalized: f64,
}

/// Exact two-sided sign test on paired differences; ties are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scenario: String,
    pub master_seed: u64,
    pub replicates: usize,
    pub combos: Vec<ComboSummary>,
    /// Channel 4 minus no channels, paired by replicate.
    pub sign_test_all_vs_none: SignTest,
    /// True when every replicate's datasets hash identically across all combos.
    pub datasets_paired: bool,
}

impl SweepSummary {
    pub fn combo(&self, policy: ChannelPolicy) -> &ComboSummary {
        &self.combos[policy.mask() as usize]
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
    /// Full results ordered by (combo, replicate).
    pub runs: Vec<RunResult>,
}

pub fn sign_test(diffs: &[f64]) -> SignTest {
    let positive = diffs.iter().filter(|&&d| d > 0.0).count();
    let negative = diffs.iter().filter(|&&d| d < 0.0).count();
    let ties = diffs.len() - positive - negative;
    let n = positive + negative;
    let p_value = if n == 0 {
        1.0
    } else {
        let dist = Binomial::new(0.5, n as u64).expect("valid binomial");
        (2.0 * dist.cdf(positive.min(negative) as u64)).min(1.0)
    };
    SignTest {
        positive,
        negative,
        ties,
        p_value,
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let mean = xs.mean();
    let std = if xs.len() < 2 { 0.0 } else { xs.std_dev() };
    (mean, std)
}

/// Runs all eight channel combinations for `replicates` paired replicates.
///
/// Replicate `r` draws its data stage from `derive_seed(master, [r])`, shared
/// by every combination; each run is labeled with `derive_seed(master,
/// [combo, r])`.
pub fn sweep(cfg: &ScenarioConfig, replicates: usize) -> Result<SweepOutcome> {
    if replicates == 0 {
        return Err(Error::config(
            "replicates",
            "at least one replicate required",
        ));
    }
    cfg.validate()?;
    let master = cfg.seed;
    let per_replicate: Vec<Vec<RunResult>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let data_seed = derive_seed(master, &[r as u64]);
            let stage = data_stage(cfg, data_seed)?;
            ChannelPolicy::combinations()
                .map(|policy| {
                    let seed = derive_seed(master, &[policy.mask() as u64, r as u64]);
                    run_stage(cfg, &stage, policy, seed, data_seed)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let datasets_paired = per_replicate.iter().all(|runs| {
        runs.windows(2).all(|w| {
            w[0].datasets
                .iter()
                .map(|d| &d.hash)
                .eq(w[1].datasets.iter().map(|d| &d.hash))
        })
    });

    let mut runs: Vec<(usize, RunResult)> = per_replicate
        .into_iter()
        .enumerate()
        .flat_map(|(r, v)| v.into_iter().map(move |x| (r, x)))
        .collect();
    runs.sort_by_key(|(r, x)| (x.combo_mask, *r));

    let rows: Vec<SweepRow> = runs
        .iter()
        .map(|(r, x)| SweepRow {
            scenario: cfg.scenario.clone(),
            combo_mask: x.combo_mask,
            replicate: *r,
            seed: x.seed,
            union_size: x.report.union_size,
            true_count: x.report.true_count,
            false_count: x.report.false_count,
            openness: x.report.openness,
            normalized: x.report.normalized,
        })
        .collect();

    let combos = ChannelPolicy::combinations()
        .map(|policy| {
            let sel: Vec<&SweepRow> = rows
                .iter()
                .filter(|row| row.combo_mask == policy.mask())
                .collect();
            let open: Vec<f64> = sel.iter().map(|row| row.openness as f64).collect();
            let norm: Vec<f64> = sel.iter().map(|row| row.normalized).collect();
            let (mean_openness, std_openness) = mean_std(&open);
            let (mean_normalized, std_normalized) = mean_std(&norm);
            ComboSummary {
                combo_mask: policy.mask(),
                label: policy.label(),
                runs: sel.len(),
                mean_openness,
                std_openness,
                mean_normalized,
                std_normalized,
            }
        })
        .collect();

    let openness_of = |mask: u8| -> Vec<f64> {
        rows.iter()
            .filter(|row| row.combo_mask == mask)
            .map(|row| row.openness as f64)
            .collect()
    };
    let diffs: Vec<f64> = openness_of(ChannelPolicy::ALL.mask())
        .iter()
        .zip(openness_of(ChannelPolicy::NONE.mask()))
        .map(|(a, b)| a - b)
        .collect();

    Ok(SweepOutcome {
        summary: SweepSummary {
            scenario: cfg.scenario.clone(),
            master_seed: master,
            replicates,
            combos,
            sign_test_all_vs_none: sign_test(&diffs),
            datasets_paired,
        },
        rows,
        runs: runs.into_iter().map(|(_, x)| x).collect(),
    })
}

impl SweepOutcome {
    /// CSV with header
    /// `scenario,combo_mask,replicate,seed,union_size,true_count,false_count,openness,normalized`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
