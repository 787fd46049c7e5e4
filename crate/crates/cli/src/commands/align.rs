use std::fmt::Write as _;

use anyhow::{Context, Result};
use clir_core::embeddings::EmbeddingStore;
use clir_core::projection::{self, BilingualDictionary};

use super::{binary_bytes, header};
use crate::cli::{AlignArgs, AlignMethod};
use crate::output::Outputs;
use crate::pipeline::load_store;

pub fn run(args: &AlignArgs, seed: u64) -> Result<String> {
    let dict = BilingualDictionary::read(&args.dict)
        .with_context(|| format!("cannot read dictionary {}", args.dict.display()))?;
    let src = load_store(&args.src, args.limit)?;
    let tgt = load_store(&args.tgt, args.limit)?;

    let (w, used, rounds) = match args.method {
        AlignMethod::Procrustes => {
            let (kept, missing) = dict.partition(&src, &tgt);
            if !missing.is_empty() {
                log::warn!("{} dictionary pairs are out of vocabulary", missing.len());
            }
            let (xs, xt) = kept.matrices(&src, &tgt)?;
            (projection::procrustes(&xs, &xt)?, kept, 0)
        }
        AlignMethod::ProcB => {
            let r = projection::proc_b(&src, &tgt, &dict, args.iterations)?;
            (r.projection, r.dictionary, r.rounds)
        }
    };
    let (xs, xt) = used.matrices(&src, &tgt)?;
    let residual = projection::residual(&xs, &xt, &w)?;

    let mut out = Outputs::new();
    let path = out.stage(&args.out, &binary_bytes(&EmbeddingStore::from_matrix(w.matrix()))?)?;
    let dict_path = match &args.dict_out {
        Some(p) => {
            let mut text = String::new();
            for (s, t) in &used.pairs {
                writeln!(text, "{s}\t{t}")?;
            }
            Some(out.stage(p, text.as_bytes())?)
        }
        None => None,
    };
    out.commit()?;

    let mut report = header("align", seed);
    writeln!(report, "method\t{:?}", args.method)?;
    writeln!(report, "dimension\t{}", w.dim())?;
    writeln!(report, "pairs\t{} of {}", used.len(), dict.len())?;
    if args.method == AlignMethod::ProcB {
        writeln!(report, "rounds\t{rounds}")?;
    }
    writeln!(report, "residual\t{residual:.6}")?;
    writeln!(report, "orthogonality_error\t{:.3e}", w.orthogonality_error())?;
    writeln!(report, "projection\t{}", path.display())?;
    if let Some(p) = dict_path {
        writeln!(report, "dictionary\t{}", p.display())?;
    }
    Ok(report)
}
