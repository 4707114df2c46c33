use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use traco::corpus::{prepare, read_raw_corpus, PreparedCorpus, Stopwords};
use traco::evalmetrics::{evaluate, export_features, MetricsReport, TopicTopWords};
use traco::tpd::parent_of;
use traco::trainer::{infer_doc_topics, load_checkpoint, train_with, Checkpoint};

use crate::config::RunConfig;
use crate::error::CliError;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_prepared(dir: &Path) -> Result<PreparedCorpus, CliError> {
    if !dir.join("bow.txt").exists() {
        return Err(CliError::Input(format!(
            "no preprocessed corpus in {} (run `traco preprocess` first)",
            dir.display()
        )));
    }
    Ok(PreparedCorpus::load(dir)?)
}

fn load_model(path: &Path) -> Result<Checkpoint, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!("checkpoint {} not found", path.display())));
    }
    Ok(load_checkpoint(path)?)
}

pub fn preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let input = cfg
        .corpus
        .raw
        .as_ref()
        .ok_or_else(|| CliError::Input("no input corpus (pass --input or set corpus.raw)".into()))?;
    let docs = read_raw_corpus(input).map_err(|e| match e {
        traco::Error::Io(io) => CliError::Input(format!("cannot read {}: {io}", input.display())),
        other => other.into(),
    })?;
    let stopwords = match &cfg.corpus.stopwords {
        Some(p) => Stopwords::from_file(p)
            .map_err(|e| CliError::Input(format!("cannot read stopwords {}: {e}", p.display())))?,
        None => Stopwords::english(),
    };
    let prepared = prepare(&docs, &stopwords, cfg.vocab_options())?;
    let dir = cfg.prepared_dir();
    prepared.save(&dir)?;
    cfg.echo()?;
    println!("documents  {}", prepared.bow.num_docs());
    println!("vocabulary {}", prepared.vocab.len());
    println!("dropped    {}", prepared.dropped);
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus = load_prepared(&cfg.prepared_dir())?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::Input(e.to_string()))?;
    cfg.echo()?;
    let epochs = cfg.train.epochs;
    let cp = train_with(&corpus.bow, cfg.train.clone(), |e, loss| {
        if (e + 1) % 10 == 0 || e + 1 == epochs {
            log::info!("epoch {}/{epochs}  objective {loss:.4}", e + 1);
        }
    })?
    .with_vocabulary(&corpus.vocab)?;

    let mut csv = String::from("epoch,objective\n");
    for (e, loss) in cp.loss_history.iter().enumerate() {
        writeln!(csv, "{},{loss}", e + 1).unwrap();
    }
    write_file(&cfg.output_dir.join("loss.csv"), csv)?;
    let path = cfg.checkpoint_path();
    cp.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

fn summary_table(r: &MetricsReport) -> String {
    let mut out = String::new();
    writeln!(out, "{:<8}{:>8}{:>10}{:>10}{:>10}{:>10}", "level", "topics", "TD", "TC_npmi", "purity", "NMI").unwrap();
    for l in &r.levels {
        writeln!(
            out,
            "{:<8}{:>8}{:>10.4}{:>10.4}{:>10}{:>10}",
            l.level,
            l.num_topics,
            l.td,
            l.tc_npmi,
            fmt_opt(l.purity),
            fmt_opt(l.nmi)
        )
        .unwrap();
    }
    writeln!(out, "\n{:<8}{:>10}{:>10}{:>10}{:>10}", "levels", "PCC", "PCD", "SD", "PnCD").unwrap();
    for p in &r.level_pairs {
        writeln!(
            out,
            "{:<8}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
            format!("{}-{}", p.parent_level, p.child_level),
            p.pcc,
            p.pcd,
            p.sd,
            p.pncd
        )
        .unwrap();
    }
    let a = &r.aggregate;
    writeln!(
        out,
        "\nmean  TD {:.4}  TC_npmi {:.4}  PCC {:.4}  PCD {:.4}  SD {:.4}  PnCD {:.4}  purity {}  NMI {}",
        a.td,
        a.tc_npmi,
        a.pcc,
        a.pcd,
        a.sd,
        a.pncd,
        fmt_opt(a.purity),
        fmt_opt(a.nmi)
    )
    .unwrap();
    out
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path) -> Result<(), CliError> {
    let cp = load_model(checkpoint)?;
    let corpus = load_prepared(&cfg.prepared_dir())?;
    cp.check_vocabulary(&corpus.vocab)?;
    let report = evaluate(&cp, &corpus.bow, cfg.eval.top_n)?;
    let json = serde_json::to_string_pretty(&report).expect("metrics serialize");
    let path = cfg.output_dir.join("metrics.json");
    write_file(&path, json + "\n")?;
    print!("{}", summary_table(&report));
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
pub struct HierarchyJson {
    pub levels: Vec<LevelJson>,
}

#[derive(Serialize)]
pub struct LevelJson {
    pub level: usize,
    pub topics: Vec<TopicJson>,
}

#[derive(Serialize)]
pub struct TopicJson {
    pub id: usize,
    pub top_words: Vec<WordScore>,
    pub parent: Option<usize>,
    /// plan weight between this topic and its parent
    pub dependency_weight: Option<f64>,
}

#[derive(Serialize)]
pub struct WordScore {
    pub word: String,
    pub score: f64,
}

pub fn hierarchy_json(cp: &Checkpoint, n_top: usize) -> Result<HierarchyJson, CliError> {
    let model = cp.model()?;
    let top = TopicTopWords::from_betas(&model.betas()?, n_top)?;
    let word = |id: usize| cp.vocabulary.get(id).cloned().unwrap_or_else(|| format!("#{id}"));
    let levels = top
        .levels
        .iter()
        .enumerate()
        .map(|(l, topics)| {
            let parents = (l > 0).then(|| parent_of(&cp.plans[l - 1]));
            LevelJson {
                level: l,
                topics: topics
                    .iter()
                    .enumerate()
                    .map(|(k, words)| {
                        let parent = parents.as_ref().map(|p| p[k]);
                        TopicJson {
                            id: k,
                            top_words: words.iter().map(|&(w, score)| WordScore { word: word(w), score }).collect(),
                            parent,
                            dependency_weight: parent.map(|p| cp.plans[l - 1].matrix().get(k, p)),
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(HierarchyJson { levels })
}

pub fn export_hierarchy(cfg: &RunConfig, checkpoint: &Path, n_top: usize) -> Result<(), CliError> {
    let cp = load_model(checkpoint)?;
    let tree = hierarchy_json(&cp, n_top)?;
    let path = cfg.output_dir.join("hierarchy.json");
    write_file(&path, serde_json::to_string_pretty(&tree).expect("hierarchy serializes") + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn export_tsv(cfg: &RunConfig, checkpoint: &Path) -> Result<(), CliError> {
    let cp = load_model(checkpoint)?;
    let corpus = load_prepared(&cfg.prepared_dir())?;
    cp.check_vocabulary(&corpus.vocab)?;
    let thetas = infer_doc_topics(&cp, &corpus.bow)?;
    let labels = corpus.bow.has_labels().then(|| corpus.bow.labels());
    let dir: PathBuf = cfg.output_dir.join("features");
    for p in export_features(&thetas, labels, &dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn inspect(checkpoint: &Path) -> Result<(), CliError> {
    let cp = load_model(checkpoint)?;
    let model = cp.model()?;
    let h = &cp.config.hierarchy;
    println!("checkpoint      {}", checkpoint.display());
    println!("levels          {}", model.num_levels());
    println!("topics          {:?}", h.topics_per_level);
    println!("vocabulary      {} words", cp.vocab_size);
    println!("vocabulary hash {}", cp.vocabulary_hash().unwrap_or_else(|| "-".into()));
    println!("embedding dim   {}", h.embedding_dim);
    println!("epochs trained  {}", cp.loss_history.len());
    if let (Some(first), Some(last)) = (cp.loss_history.first(), cp.loss_history.last()) {
        println!("objective       {first:.4} -> {last:.4}");
    }
    let mut ablations = Vec::new();
    if cp.config.disable_tpd {
        ablations.push("disable_tpd");
    }
    if cp.config.disable_cdd {
        ablations.push("disable_cdd");
    }
    println!("ablation        {}", if ablations.is_empty() { "none".into() } else { ablations.join(", ") });
    for (l, plan) in cp.plans.iter().enumerate() {
        let (row, col) = plan.marginal_errors(&model.marginals(l)?);
        println!("plan {l}->{}       row error {row:.2e}  column error {col:.2e}", l + 1);
    }
    Ok(())
}
