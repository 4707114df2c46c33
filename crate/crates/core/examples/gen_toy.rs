//! Regenerates the bundled toy corpus.
//!
//! cargo run -p traco --example gen_toy [-- <output path>]

use std::env;
use std::fs;

use traco::toy;

fn main() -> std::io::Result<()> {
    let path = env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/toy_corpus.jsonl").to_owned());
    let docs = toy::generate(toy::DEFAULT_SEED);
    fs::write(&path, toy::to_jsonl(&docs))?;
    eprintln!("wrote {} documents to {path}", docs.len());
    Ok(())
}
