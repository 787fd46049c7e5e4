use std::fmt::Write as _;

use anyhow::Result;
use clir_core::corpus::TermCounts;
use clir_core::retrieval::{self, Ranking};

use super::header;
use crate::cli::{RankArgs, RankMethod};
use crate::config::{describe, validate_experiment};
use crate::output::Outputs;
use crate::pipeline::{encode, read_collection, read_queries, Ranker};

pub fn run(args: &RankArgs, seed: u64) -> Result<String> {
    let exp = &args.exp;
    let queries = read_queries(&exp.queries)?;
    let collection = read_collection(&exp.docs)?;
    let rankings: Vec<Ranking> = match args.method {
        RankMethod::Qlm => {
            if args.mu.is_nan() || args.mu <= 0.0 {
                anyhow::bail!("mu must be positive, got {}", args.mu);
            }
            let counts = TermCounts::from_documents(collection.documents());
            queries
                .iter()
                .map(|q| {
                    let mut r =
                        retrieval::rank_qlm(&q.id, &q.tokens, collection.documents(), &counts, args.mu)?;
                    r.truncate(args.depth);
                    Ok(r)
                })
                .collect::<Result<_>>()?
        }
        RankMethod::Dense => {
            validate_experiment(exp)?;
            let stats = collection.stats()?;
            let encoded = encode(exp, &queries, &collection, &stats)?;
            let ranker = Ranker::new(&encoded.docs, exp.k)?;
            encoded
                .queries
                .iter()
                .map(|q| ranker.rank(q, args.depth))
                .collect::<Result<_>>()?
        }
    };

    let mut buf = Vec::new();
    retrieval::write_run(&mut buf, &rankings, &args.tag)?;
    let mut out = Outputs::new();
    let path = out.stage(&args.out, &buf)?;
    out.commit()?;

    let mut report = header("rank", seed);
    match args.method {
        RankMethod::Qlm => writeln!(report, "method\tqlm mu={}", args.mu)?,
        RankMethod::Dense => writeln!(report, "method\tdense {}", describe(exp))?,
    }
    writeln!(report, "queries\t{}", rankings.len())?;
    writeln!(report, "documents\t{}", collection.len())?;
    writeln!(report, "run\t{}", path.display())?;
    Ok(report)
}
