use std::fmt::Write as _;

use anyhow::{bail, Result};
use clir_core::evaluation;
use clir_core::retrieval;

use super::header;
use crate::cli::{AnalyzeArgs, Analysis, GranularityArg};
use crate::config::{describe, validate_experiment};
use crate::output::Outputs;
use crate::pipeline::{encode, read_collection, read_queries, DocVectors};

pub fn run(args: &AnalyzeArgs, seed: u64) -> Result<String> {
    match args.what {
        Analysis::Positions => positions(args, seed),
    }
}

fn positions(args: &AnalyzeArgs, seed: u64) -> Result<String> {
    let exp = &args.exp;
    if exp.granularity == GranularityArg::Document {
        bail!("position analysis needs --granularity segment or sentence");
    }
    if args.top == 0 {
        bail!("top must be at least 1");
    }
    validate_experiment(exp)?;
    let queries = read_queries(&exp.queries)?;
    let collection = read_collection(&exp.docs)?;
    let stats = collection.stats()?;
    let encoded = encode(exp, &queries, &collection, &stats)?;
    let DocVectors::Parts(index) = &encoded.docs else {
        unreachable!("non-document granularity yields parts");
    };
    let positions: Vec<Vec<usize>> = encoded
        .queries
        .iter()
        .map(|q| {
            retrieval::top_parts(q, index, args.top)
                .into_iter()
                .map(|h| h.position)
                .collect()
        })
        .collect();
    let hist = evaluation::position_histogram(&positions)?;

    let mut text = header("analyze positions", seed);
    writeln!(text, "# {} top={}", describe(exp), args.top)?;
    writeln!(text, "position\tproportion")?;
    for (i, p) in hist.iter().enumerate() {
        let label = if i + 1 < hist.len() { (i + 1).to_string() } else { format!(">{i}") };
        writeln!(text, "{label}\t{p:.6}")?;
    }
    let mut out = Outputs::new();
    out.stage(&args.out, text.as_bytes())?;
    out.commit()?;
    Ok(text)
}
