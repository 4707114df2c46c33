//! Trains a 4/12 hierarchy on the bundled toy corpus and reports how well
//! the learned parent links match the planted themes.
//!
//! cargo run --release -p traco --example toy_recovery [-- <seed> [epochs] [disable_tpd|disable_cdd]]

use std::env;
use std::time::Instant;

use traco::corpus::{prepare, Stopwords, VocabOptions};
use traco::evalmetrics::{evaluate, DEFAULT_TOP_N};
use traco::tpd::parent_of;
use traco::toy;
use traco::trainer::{train_with, TrainConfig};

fn main() -> traco::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let seed = args.first().map_or(0, |s| s.parse().expect("seed"));
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.hierarchy.topics_per_level = vec![4, 12];
    if let Some(e) = args.get(1) {
        cfg.epochs = e.parse().expect("epochs");
    }
    match args.get(2).map(String::as_str) {
        Some("disable_tpd") => cfg.disable_tpd = true,
        Some("disable_cdd") => cfg.disable_cdd = true,
        _ => {}
    }

    let docs = toy::generate(toy::DEFAULT_SEED);
    let corpus = prepare(&docs, &Stopwords::english(), VocabOptions::default())?;
    let start = Instant::now();
    let cp = train_with(&corpus.bow, cfg, |e, loss| {
        if e % 20 == 0 {
            eprintln!("epoch {e:>3}  {loss:.3}");
        }
    })?
    .with_vocabulary(&corpus.vocab)?;
    let secs = start.elapsed().as_secs_f64();

    let model = cp.model()?;
    for l in 0..model.num_levels() {
        let beta = model.beta(l)?;
        for k in 0..beta.num_topics() {
            let words: Vec<&str> = traco::model::top_indices(&beta.topic(k), 6)
                .into_iter()
                .map(|w| corpus.vocab.words()[w].as_str())
                .collect();
            println!("L{l} T{k:<2} {}", words.join(" "));
        }
    }
    println!("parents {:?}", parent_of(&cp.plans[0]));
    let report = evaluate(&cp, &corpus.bow, DEFAULT_TOP_N)?;
    let pair = &report.level_pairs[0];
    println!(
        "seed {seed}  agreement {:.3}  pcd {:.3}  sd {:.3}  pncd {:.3}  td {:.3}  time {secs:.1}s",
        toy::hierarchy_agreement(&cp, &corpus.vocab, 10)?,
        pair.pcd,
        pair.sd,
        pair.pncd,
        report.aggregate.td
    );
    Ok(())
}
