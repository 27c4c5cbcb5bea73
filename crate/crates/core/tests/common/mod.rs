#![allow(dead_code)]

use std::path::PathBuf;

/// Exact phi between the endpoints of a chain `0 - 1 - ... - d`, computed by
/// enumerating all 2^(d+1) assignments.
///
/// The root is a fair coin and each edge keeps its parent's value with
/// probability `p`. Both endpoints are observed through independent bit flips
/// with probability `delta`. With `select = Some(s)` the distribution is
/// conditioned on node `s` being 1.
pub fn chain_phi_exact(p: f64, d: usize, delta: f64, select: Option<usize>) -> f64 {
    let nodes = d + 1;
    let mut joint = [[0.0f64; 2]; 2];
    for assignment in 0u32..(1 << nodes) {
        let bit = |i: usize| (assignment >> i) & 1;
        if let Some(s) = select {
            if bit(s) != 1 {
                continue;
            }
        }
        let mut w = 0.5;
        for i in 1..nodes {
            w *= if bit(i) == bit(i - 1) { p } else { 1.0 - p };
        }
        joint[bit(0) as usize][bit(d) as usize] += w;
    }
    let mut seen = [[0.0f64; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for fa in 0..2 {
                for fb in 0..2 {
                    let pa = if fa == 1 { delta } else { 1.0 - delta };
                    let pb = if fb == 1 { delta } else { 1.0 - delta };
                    seen[a ^ fa][b ^ fb] += joint[a][b] * pa * pb;
                }
            }
        }
    }
    let total: f64 = seen.iter().flatten().sum();
    let q = |a: usize, b: usize| seen[a][b] / total;
    let r1 = q(1, 0) + q(1, 1);
    let c1 = q(0, 1) + q(1, 1);
    (q(1, 1) * q(0, 0) - q(1, 0) * q(0, 1)) / (r1 * (1.0 - r1) * c1 * (1.0 - c1)).sqrt()
}

pub fn default_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ktsim")
}
