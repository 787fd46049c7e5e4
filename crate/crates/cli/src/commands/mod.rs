pub mod align;
pub mod analyze;
pub mod convert;
pub mod eval;
pub mod finetune;
pub mod rank;
pub mod rerank;
pub mod stats;

/// First line of every report.
pub fn header(command: &str, seed: u64) -> String {
    format!("# clir {command} seed={seed}\n")
}

pub fn binary_bytes(store: &clir_core::embeddings::EmbeddingStore<f64>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    store.write_binary(&mut buf)?;
    Ok(buf)
}
