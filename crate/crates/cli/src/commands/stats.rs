use std::fmt::Write as _;

use anyhow::Result;
use clir_core::corpus::{Granularity, PartCounts};

use super::header;
use crate::cli::StatsArgs;
use crate::output::Outputs;
use crate::pipeline::read_collection;

pub fn run(args: &StatsArgs, seed: u64) -> Result<String> {
    let collection = read_collection(&args.docs)?;
    let mut table = header("stats", seed);
    writeln!(table, "# window={} stride={}", args.window, args.stride)?;
    writeln!(table, "{:<12}{:>12}{:>12}{:>10}", "granularity", "documents", "parts", "factor")?;
    for &g in &args.granularity {
        let g: Granularity = g.into();
        let c = PartCounts::count(collection.documents(), g, args.window, args.stride)?;
        writeln!(
            table,
            "{:<12}{:>12}{:>12}{:>10.2}",
            g.to_string(),
            c.documents,
            c.parts,
            c.slowdown_factor()
        )?;
    }
    if let Some(p) = &args.out {
        let mut out = Outputs::new();
        out.stage(p, table.as_bytes())?;
        out.commit()?;
    }
    Ok(table)
}
