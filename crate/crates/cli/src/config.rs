//! Config-file handling and experiment validation.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::CommandFactory;

use crate::cli::{Cli, Encoding, ExperimentArgs, GranularityArg};

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got {raw:?}", i + 1);
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((key, v.trim().to_owned()));
    }
    Ok(out)
}

fn long_names(cmd: &clap::Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_owned))
        .collect()
}

fn option_value(args: &[OsString], i: usize, name: &str) -> Option<(OsString, usize)> {
    let a = args[i].to_str()?;
    if a == name {
        return args.get(i + 1).map(|v| (v.clone(), 2));
    }
    a.strip_prefix(name)?
        .strip_prefix('=')
        .map(|v| (OsString::from(v), 1))
}

/// Splices config-file entries into `args` so that explicit flags, which
/// come later, win. Global keys go before the subcommand, the rest right
/// after it. Keys the chosen subcommand does not take are ignored.
pub fn inject_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    for i in 0..args.len() {
        if let Some((v, _)) = option_value(&args, i, "--config") {
            config = Some(PathBuf::from(v));
        }
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let entries = parse_config(&text)?;

    // Locate the subcommand: skip leading global options.
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if !a.starts_with('-') {
            break;
        }
        let takes_value = (a == "--config" || a == "--seed") && !a.contains('=');
        i += if takes_value { 2 } else { 1 };
    }
    let root = Cli::command();
    let globals = long_names(&root);
    let sub = args
        .get(i)
        .and_then(|s| root.find_subcommand(s.to_string_lossy().as_ref()).cloned());
    let Some(sub) = sub else {
        // Let clap report the missing or unknown subcommand.
        return Ok(args);
    };
    let local = long_names(&sub);
    let known: BTreeSet<String> = root
        .get_subcommands()
        .flat_map(long_names)
        .chain(globals.iter().cloned())
        .collect();

    let mut before = Vec::new();
    let mut after = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            bail!("config files cannot include other config files");
        }
        if !known.contains(&key) {
            bail!("unknown config key {key:?} in {}", path.display());
        }
        let flag = [OsString::from(format!("--{key}")), OsString::from(value)];
        if globals.contains(&key) {
            before.extend(flag);
        } else if local.contains(&key) {
            after.extend(flag);
        } else {
            log::debug!("config key {key} does not apply to {}", sub.get_name());
        }
    }
    let mut out = Vec::with_capacity(args.len() + before.len() + after.len());
    out.push(args[0].clone());
    out.extend(before);
    out.extend_from_slice(&args[1..=i]);
    out.extend(after);
    out.extend_from_slice(&args[i + 1..]);
    Ok(out)
}

pub const MAX_SEQ_LENS: [usize; 3] = [64, 128, 256];

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file not found: {}", path.display());
    }
    Ok(())
}

/// Launch-time checks on an experiment description.
pub fn validate_experiment(exp: &ExperimentArgs) -> Result<()> {
    require_file(&exp.queries, "query")?;
    require_file(&exp.docs, "document")?;
    let optional = [
        (&exp.src_emb, "source embedding"),
        (&exp.tgt_emb, "target embedding"),
        (&exp.src_fallback, "source fallback"),
        (&exp.tgt_fallback, "target fallback"),
        (&exp.query_parts, "query parts"),
        (&exp.doc_parts, "document parts"),
        (&exp.projection, "projection"),
        (&exp.adapter, "adapter"),
    ];
    for (p, what) in optional {
        if let Some(p) = p {
            require_file(p, what)?;
        }
    }
    if !MAX_SEQ_LENS.contains(&exp.max_seq_len) {
        bail!("max-seq-len must be one of {MAX_SEQ_LENS:?}, got {}", exp.max_seq_len);
    }
    if exp.k == 0 {
        bail!("k must be at least 1");
    }
    if exp.window == 0 || exp.stride == 0 || exp.stride > exp.window {
        bail!(
            "need 1 <= stride <= window, got window {} stride {}",
            exp.window,
            exp.stride
        );
    }
    if exp.tau == Some(0) {
        bail!("tau must be at least 1");
    }
    if exp.query_parts.is_none() && exp.src_emb.is_none() {
        bail!("queries need --src-emb or --query-parts");
    }
    if exp.doc_parts.is_none() && exp.tgt_emb.is_none() {
        bail!("documents need --tgt-emb or --doc-parts");
    }
    if exp.encoding == Encoding::Semb && (exp.doc_parts.is_none() || exp.query_parts.is_none()) {
        bail!("SEMB encoding reads its vectors from --query-parts and --doc-parts");
    }
    if exp.encoding == Encoding::Aoc && exp.src_fallback.is_none() && exp.tgt_fallback.is_none()
    {
        log::warn!("AOC without fallback vectors: terms lacking contexts are dropped");
    }
    if exp.granularity == GranularityArg::Document && exp.k > 1 {
        log::info!("k is ignored at document granularity");
    }
    Ok(())
}

/// One-line summary of the experiment settings for report headers.
pub fn describe(exp: &ExperimentArgs) -> String {
    let mut s = format!(
        "encoding={:?} granularity={:?} k={} window={} stride={} max_seq_len={}",
        exp.encoding, exp.granularity, exp.k, exp.window, exp.stride, exp.max_seq_len
    )
    .to_lowercase();
    if let Some(t) = exp.tau {
        s.push_str(&format!(" tau={t}"));
    }
    if let Some(l) = exp.layer {
        s.push_str(&format!(" layer={l}"));
    }
    s
}
