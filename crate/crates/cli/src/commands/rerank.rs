use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clir_core::retrieval;

use super::header;
use crate::cli::RerankArgs;
use crate::output::Outputs;

/// Reads `<query_id>\t<doc_id>\t<score>` lines into per-query maps.
pub fn read_scores(path: &Path) -> Result<HashMap<String, HashMap<String, f64>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scores from {}", path.display()))?;
    let mut out: HashMap<String, HashMap<String, f64>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [q, d, s] = fields[..] else {
            bail!("{} line {}: expected 3 tab-separated fields", path.display(), i + 1);
        };
        let score: f64 = s
            .trim()
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .with_context(|| format!("{} line {}: bad score {s:?}", path.display(), i + 1))?;
        out.entry(q.to_owned()).or_default().insert(d.to_owned(), score);
    }
    Ok(out)
}

pub fn run(args: &RerankArgs, seed: u64) -> Result<String> {
    if args.top_n == 0 {
        bail!("top-n must be at least 1");
    }
    let base = retrieval::read_run(&args.run)
        .with_context(|| format!("cannot read run {}", args.run.display()))?;
    let scores = read_scores(&args.scores)?;
    let empty = HashMap::new();
    let mut untouched = 0;
    let merged: Vec<_> = base
        .iter()
        .map(|r| {
            let ext = scores.get(&r.query_id).unwrap_or_else(|| {
                untouched += 1;
                &empty
            });
            retrieval::rerank_merge(r, ext, args.top_n)
        })
        .collect();
    if untouched > 0 {
        log::warn!("{untouched} queries have no external scores and keep their base order");
    }
    let mut buf = Vec::new();
    retrieval::write_run(&mut buf, &merged, &args.tag)?;
    let mut out = Outputs::new();
    let path = out.stage(&args.out, &buf)?;
    out.commit()?;

    let mut report = header("rerank", seed);
    writeln!(report, "top_n\t{}", args.top_n)?;
    writeln!(report, "queries\t{}", merged.len())?;
    writeln!(report, "without_scores\t{untouched}")?;
    writeln!(report, "run\t{}", path.display())?;
    Ok(report)
}
