//! Regenerates the sample corpus shipped with the command-line tool.
//!
//! cargo run -p copytag --example bundled_data -- crates/cli/data

use copytag::corpus::{write_conll, ConllLayout};
use copytag::synth::bundled_corpus;

fn main() -> copytag::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "crates/cli/data".to_string());
    let (train, dev) = bundled_corpus()?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(format!("{dir}/train.conll"), write_conll(&train, ConllLayout::default()))?;
    std::fs::write(format!("{dir}/dev.conll"), write_conll(&dev, ConllLayout::default()))?;
    println!("wrote {} + {} sentences to {dir}", train.len(), dev.len());
    Ok(())
}
