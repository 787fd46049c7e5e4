use std::fmt::Write as _;

use anyhow::Result;

use super::{binary_bytes, header};
use crate::cli::{Container, ConvertArgs};
use crate::output::Outputs;
use crate::pipeline::load_store;

pub fn run(args: &ConvertArgs, seed: u64) -> Result<String> {
    let store = load_store(&args.input, args.limit)?;
    let bytes = match args.to {
        Container::Binary => binary_bytes(&store)?,
        Container::Text => {
            let mut buf = Vec::new();
            store.write_text(&mut buf)?;
            buf
        }
    };
    let mut out = Outputs::new();
    let path = out.stage(&args.output, &bytes)?;
    out.commit()?;
    let mut report = header("convert", seed);
    writeln!(report, "entries\t{}", store.len())?;
    writeln!(report, "dimension\t{}", store.dim())?;
    writeln!(report, "output\t{}", path.display())?;
    Ok(report)
}
