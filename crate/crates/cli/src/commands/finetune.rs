use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use clir_core::embeddings::EmbeddingStore;
use clir_core::finetune::{self, TrainConfig, TrainingPair};
use clir_core::retrieval::{self, DocumentIndex, Ranking};

use super::{binary_bytes, header};
use crate::cli::{FinetuneArgs, GranularityArg};
use crate::config::{describe, validate_experiment};
use crate::output::Outputs;
use crate::pipeline::{encode, read_collection, read_queries, DocVectors, Rep};

/// Reads `<query_id>\t<doc_id>` lines.
pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read training pairs from {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [q, d] = fields[..] else {
            bail!("{} line {}: expected <query_id>\\t<doc_id>", path.display(), i + 1);
        };
        out.push((q.to_owned(), d.to_owned()));
    }
    Ok(out)
}

pub fn run(args: &FinetuneArgs, seed: u64) -> Result<String> {
    let exp = &args.exp;
    validate_experiment(exp)?;
    if exp.granularity != GranularityArg::Document {
        bail!("finetune works on whole documents; use --granularity document");
    }
    if exp.adapter.is_some() {
        bail!("finetune trains its own adapters; drop --adapter");
    }
    if args.folds < 2 {
        bail!("need at least 2 folds, got {}", args.folds);
    }
    let queries = read_queries(&exp.queries)?;
    let collection = read_collection(&exp.docs)?;
    let stats = collection.stats()?;
    let encoded = encode(exp, &queries, &collection, &stats)?;
    let DocVectors::Whole(doc_reps) = &encoded.docs else {
        unreachable!("document granularity yields whole documents");
    };
    let query_by_id: HashMap<&str, &Rep> = encoded.queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let doc_by_id: HashMap<&str, &Rep> = doc_reps.iter().map(|d| (d.id.as_str(), d)).collect();

    let mut pairs = Vec::new();
    let mut dropped = 0usize;
    for (q, d) in read_pairs(&args.pairs)? {
        match (query_by_id.get(q.as_str()), doc_by_id.get(d.as_str())) {
            (Some(qr), Some(dr)) if !qr.is_zero() && !dr.is_zero() => pairs.push(TrainingPair {
                query_id: q,
                query: qr.vector.clone(),
                positive: dr.vector.clone(),
            }),
            _ => {
                log::debug!("dropping training pair {q}/{d}");
                dropped += 1;
            }
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} training pairs reference unknown or zero-vector queries or documents");
    }
    let mut query_ids: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for p in &pairs {
        if seen.insert(p.query_id.as_str()) {
            query_ids.push(p.query_id.as_str());
        }
    }
    if query_ids.len() < args.folds {
        bail!("{} queries with training pairs cannot fill {} folds", query_ids.len(), args.folds);
    }
    let folds = finetune::kfold_split(&query_ids, args.folds, seed)?;

    let mut out = Outputs::new();
    let mut report = header("finetune", seed);
    writeln!(
        report,
        "# {} folds={} batch={} epochs={} lr={} lambda={}",
        describe(exp),
        args.folds,
        args.batch,
        args.epochs,
        args.learning_rate,
        args.lambda
    )?;
    writeln!(report, "fold\ttrain_queries\ttest_queries\ttrain_pairs\tfirst_loss\tlast_loss\tadapter")?;
    let mut merged: HashMap<String, Ranking> = HashMap::new();
    for f in 0..args.folds {
        let test: HashSet<&str> = folds.test_queries(f).into_iter().collect();
        let train: HashSet<&str> = folds.train_queries(f).into_iter().collect();
        let train_pairs: Vec<TrainingPair<f64>> = pairs
            .iter()
            .filter(|p| train.contains(p.query_id.as_str()))
            .cloned()
            .collect();
        let leaked: Vec<&str> = train_pairs
            .iter()
            .map(|p| p.query_id.as_str())
            .filter(|q| test.contains(q))
            .collect();
        ensure!(leaked.is_empty(), "fold {f}: test queries used in training: {leaked:?}");

        let cfg = TrainConfig {
            epochs: args.epochs,
            batch_size: args.batch,
            lambda: args.lambda,
            learning_rate: args.learning_rate,
            seed: seed.wrapping_add(f as u64),
        };
        let trained = finetune::train_adapter(&train_pairs, &cfg)
            .with_context(|| format!("training fold {f}"))?;
        let a = trained.adapter.matrix();
        let docs: Vec<Rep> = doc_reps.iter().map(|d| d.adapted(a)).collect::<clir_core::Result<_>>()?;
        let index = DocumentIndex::new(docs)?;
        for q in &encoded.queries {
            if test.contains(q.id.as_str()) {
                let mut r = index.rank(&q.adapted(a)?)?;
                r.truncate(args.depth);
                ensure!(merged.insert(q.id.clone(), r).is_none(), "query {} ranked twice", q.id);
            }
        }

        let adapter_path = args.out_dir.join(format!("adapter_fold{f:02}.emb"));
        let staged = out.stage(&adapter_path, &binary_bytes(&EmbeddingStore::from_matrix(a))?)?;
        let losses = &trained.epoch_losses;
        writeln!(
            report,
            "{f}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
            train.len(),
            test.len(),
            train_pairs.len(),
            losses.first().copied().unwrap_or(f64::NAN),
            losses.last().copied().unwrap_or(f64::NAN),
            staged.display()
        )?;
    }

    // queries file order
    let rankings: Vec<Ranking> = queries.iter().filter_map(|q| merged.remove(&q.id)).collect();
    ensure!(rankings.len() == query_ids.len(), "merged run misses queries");
    let mut buf = Vec::new();
    retrieval::write_run(&mut buf, &rankings, &args.tag)?;
    let run_path = out.stage(&args.out_dir.join("finetuned.run"), &buf)?;
    writeln!(report, "run\t{}", run_path.display())?;
    out.stage(&args.out_dir.join("finetune_report.txt"), report.as_bytes())?;
    out.commit()?;
    Ok(report)
}
