//! Writes the synthetic survey extract used by the test suite.
//!
//!     cargo run -p rvr-core --example synthetic_wvs -- crates/core/tests/data/synthetic_wvs.csv
//!
//! Respondents carry a latent position on the traditional-secular axis made
//! of a nation offset, an age trend and noise; each item's answer is that
//! position mapped onto the item's scale. A few malformed rows exercise the
//! drop rules.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NATIONS: [(&str, f64); 8] = [
    ("DEU", 0.35),
    ("JPN", 0.55),
    ("CZE", 0.45),
    ("USA", -0.05),
    ("ROU", -0.25),
    ("VNM", 0.10),
    ("VEN", -0.40),
    ("NGA", -0.70),
];
const BRACKETS: [(u32, u32); 6] = [(16, 24), (25, 34), (35, 44), (45, 54), (55, 64), (65, 85)];
const PER_GROUP: usize = 6;

/// Option codes in secular order (first = most traditional).
fn scales() -> Vec<(&'static str, Vec<i64>)> {
    vec![
        ("Q164", (1..=10).rev().collect()),
        ("Y003", vec![-2, -1, 0, 1, 2]),
        ("Q184", (1..=10).collect()),
        ("Q254", (1..=4).collect()),
        ("Q45", (1..=3).collect()),
    ]
}

fn answer(rng: &mut ChaCha8Rng, latent: f64, codes: &[i64]) -> i64 {
    let f = ((latent + 1.0) / 2.0 + rng.random_range(-0.15..0.15)).clamp(0.0, 1.0);
    codes[(f * (codes.len() - 1) as f64).round() as usize]
}

fn main() -> std::io::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic_wvs.csv".into());
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    let scales = scales();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut id = 100_000;
    for (code, offset) in NATIONS {
        for (bi, (lo, hi)) in BRACKETS.iter().enumerate() {
            for sex in ["1", "2"] {
                for _ in 0..PER_GROUP {
                    id += 1;
                    let age = rng.random_range(*lo..=*hi);
                    let sex_shift = if sex == "2" { -0.05 } else { 0.05 };
                    let latent =
                        (offset - 0.08 * (bi as f64 - 2.5) + sex_shift + rng.random_range(-0.3..0.3)).clamp(-1.0, 1.0);
                    let mut row = vec![id.to_string(), code.to_string(), age.to_string(), sex.to_string()];
                    for (_, codes) in &scales {
                        row.push(answer(&mut rng, latent, codes).to_string());
                    }
                    rows.push(row);
                }
            }
        }
    }
    // Rows every ingest must drop, one per rule.
    let bad: [[&str; 9]; 6] = [
        ["900001", "FRA", "40", "1", "5", "0", "5", "2", "2"],
        ["900002", "DEU", "15", "1", "5", "0", "5", "2", "2"],
        ["900003", "JPN", "33", "2", "-1", "0", "5", "2", "2"],
        ["900004", "USA", "52", "1", "5", "-4", "5", "2", "2"],
        ["900005", "NGA", "47", "2", "11", "0", "5", "2", "2"],
        ["900006", "VEN", "", "1", "5", "0", "5", "2", "2"],
    ];
    rows.extend(bad.iter().map(|r| r.iter().map(|s| s.to_string()).collect()));

    let mut f = std::io::BufWriter::new(std::fs::File::create(&out)?);
    writeln!(f, "D_INTERVIEW,B_COUNTRY_ALPHA,Q262,Q260,Q164,Y003,Q184,Q254,Q45")?;
    for r in rows {
        writeln!(f, "{}", r.join(","))?;
    }
    f.flush()
}
