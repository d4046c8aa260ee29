//! Kendall's coefficient of concordance for a judge-by-item score table,
//! with and without the tie correction.
//!
//! cargo run --example kendall -- path/to/ratings.csv

use std::path::PathBuf;

use dot_core::evalkit::{kendalls_w, to_ranks, RatingTable, TieCorrection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/ratings/novelty.csv"));
    let table = RatingTable::from_csv(&std::fs::read_to_string(&path)?)?;
    let ranks = to_ranks(&table)?;
    println!("items: {}", table.items.join(", "));
    for (judge, row) in table.judges.iter().zip(&ranks.ranks) {
        println!("{judge}: {row:?}");
    }
    for correction in [TieCorrection::Off, TieCorrection::On] {
        let c = kendalls_w(&ranks, correction)?;
        println!("W ({correction:?}) = {:.4}{}", c.w, if c.degenerate { " degenerate" } else { "" });
    }
    Ok(())
}
