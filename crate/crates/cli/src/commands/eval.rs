use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clir_core::evaluation::{self, MapReport, Qrels, SignificanceReport};
use clir_core::retrieval;
use serde::Serialize;

use super::header;
use crate::cli::EvalArgs;
use crate::output::Outputs;

#[derive(Serialize)]
struct QueryRecord<'a> {
    run: &'a str,
    query_id: &'a str,
    ap: f64,
}

#[derive(Serialize)]
struct Footer<'a> {
    run: &'a str,
    map: f64,
    queries: usize,
    baseline: Option<&'a str>,
    t: Option<f64>,
    p: Option<f64>,
    significant: Option<bool>,
}

fn run_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn evaluated(r: &MapReport) -> BTreeSet<&str> {
    r.per_query.iter().map(|(q, _)| q.as_str()).collect()
}

pub fn run(args: &EvalArgs, seed: u64) -> Result<String> {
    let (qrels, warnings) = Qrels::read(&args.qrels)
        .with_context(|| format!("cannot read qrels {}", args.qrels.display()))?;
    for w in warnings {
        log::warn!("{}: {w}", args.qrels.display());
    }
    let mut names: Vec<String> = args.runs.iter().map(|p| run_name(p)).collect();
    if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
        names = args.runs.iter().map(|p| p.display().to_string()).collect();
    }
    let mut reports = Vec::with_capacity(args.runs.len());
    for path in &args.runs {
        let run = retrieval::read_run(path)
            .with_context(|| format!("cannot read run {}", path.display()))?;
        let report = evaluation::mean_average_precision(&run, &qrels)
            .with_context(|| format!("cannot evaluate {}", path.display()))?;
        reports.push(report);
    }

    let base_set = evaluated(&reports[0]);
    for (name, r) in names.iter().zip(&reports).skip(1) {
        let set = evaluated(r);
        if set != base_set {
            let only_base: Vec<&str> = base_set.difference(&set).copied().collect();
            let only_other: Vec<&str> = set.difference(&base_set).copied().collect();
            bail!(
                "evaluated query sets differ between {} and {name}: only in {}: [{}]; only in {name}: [{}]",
                names[0],
                names[0],
                only_base.join(", "),
                only_other.join(", ")
            );
        }
    }
    let queries: Vec<&str> = base_set.iter().copied().collect();
    let aps = |r: &MapReport| -> Vec<f64> {
        queries.iter().map(|q| r.ap_of(q).expect("same query set")).collect()
    };

    let m = args.bonferroni_m;
    if reports.len() - 1 > m {
        log::warn!("{} comparisons but Bonferroni m = {m}", reports.len() - 1);
    }
    let base_aps = aps(&reports[0]);
    let tests: Vec<SignificanceReport> = reports[1..]
        .iter()
        .map(|r| evaluation::paired_ttest(&aps(r), &base_aps, m, args.alpha))
        .collect::<clir_core::Result<_>>()?;

    let mut table = header("eval", seed);
    writeln!(table, "# qrels={} alpha={} m={m}", args.qrels.display(), args.alpha)?;
    let qwidth = queries.iter().map(|q| q.len()).max().unwrap_or(0).max(5);
    let cwidth = names.iter().map(String::len).max().unwrap_or(0).max(8);
    write!(table, "{:<qwidth$}", "query")?;
    for n in &names {
        write!(table, "  {n:>cwidth$}")?;
    }
    table.push('\n');
    for q in &queries {
        write!(table, "{q:<qwidth$}")?;
        for r in &reports {
            write!(table, "  {:>cwidth$.4}", r.ap_of(q).expect("same query set"))?;
        }
        table.push('\n');
    }
    write!(table, "{:<qwidth$}", "MAP")?;
    for r in &reports {
        write!(table, "  {:>cwidth$.4}", r.map)?;
    }
    table.push('\n');
    for (name, t) in names[1..].iter().zip(&tests) {
        writeln!(
            table,
            "{name} vs {}: t={:.4} p={:.4} significant={}{}",
            names[0],
            t.t_statistic,
            t.p_value,
            t.significant,
            if t.degenerate { " (constant differences)" } else { "" }
        )?;
    }

    let mut out = Outputs::new();
    if let Some(p) = &args.out {
        out.stage(p, table.as_bytes())?;
    }
    if let Some(p) = &args.jsonl {
        let mut lines = String::new();
        for (name, r) in names.iter().zip(&reports) {
            for (q, ap) in &r.per_query {
                lines.push_str(&serde_json::to_string(&QueryRecord { run: name, query_id: q, ap: *ap })?);
                lines.push('\n');
            }
        }
        let finite = |x: f64| x.is_finite().then_some(x);
        for (i, (name, r)) in names.iter().zip(&reports).enumerate() {
            let test = i.checked_sub(1).map(|j| &tests[j]);
            let footer = Footer {
                run: name,
                map: r.map,
                queries: r.per_query.len(),
                baseline: test.map(|_| names[0].as_str()),
                t: test.and_then(|t| finite(t.t_statistic)),
                p: test.map(|t| t.p_value),
                significant: test.map(|t| t.significant),
            };
            lines.push_str(&serde_json::to_string(&footer)?);
            lines.push('\n');
        }
        out.stage(p, lines.as_bytes())?;
    }
    out.commit()?;
    Ok(table)
}
