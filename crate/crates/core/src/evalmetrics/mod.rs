//! Topic quality, hierarchy quality and clustering metrics.
//!
//! Coherence is mean pairwise NPMI over whole-document co-occurrence in the
//! evaluated corpus and is reported as `tc_npmi`.

mod clustering;
mod coherence;
mod hierarchy;

pub use clustering::{
    clustering_eval, export_features, hard_assignments, purity_nmi, read_features, ClusteringScores,
};
pub use coherence::{clnpmi, clnpmi_checked, list_coherence, npmi, topic_coherence_npmi};
pub use hierarchy::{
    hierarchy_diversities, topic_diversity, Diversities, HierarchyView, TopicTopWords, DEFAULT_TOP_N,
};

use serde::Serialize;

use crate::corpus::{cooccurrence_stats, BowCorpus};
use crate::error::Result;
use crate::trainer::{infer_doc_topics, Checkpoint, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelMetrics {
    pub level: usize,
    pub num_topics: usize,
    pub td: f64,
    pub tc_npmi: f64,
    pub purity: Option<f64>,
    pub nmi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelPairMetrics {
    pub parent_level: usize,
    pub child_level: usize,
    /// mean CLNPMI over parent–child pairs
    pub pcc: f64,
    /// parent–child pairs whose word lists overlap completely (scored 0)
    pub pcc_degenerate_pairs: usize,
    pub pcd: f64,
    pub sd: f64,
    pub pncd: f64,
    pub sd_undefined: bool,
    pub pncd_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub td: f64,
    pub tc_npmi: f64,
    pub pcc: f64,
    pub pcd: f64,
    pub sd: f64,
    pub pncd: f64,
    pub purity: Option<f64>,
    pub nmi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub top_n: usize,
    pub num_docs: usize,
    pub levels: Vec<LevelMetrics>,
    pub level_pairs: Vec<LevelPairMetrics>,
    /// level averages (level-pair averages for the hierarchy metrics)
    pub aggregate: AggregateMetrics,
    pub hierarchy: HierarchyView,
    pub config: TrainConfig,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Computes every metric for `cp` against `corpus`, which also serves as the
/// NPMI reference. Clustering scores appear only when all documents are labeled.
pub fn evaluate(cp: &Checkpoint, corpus: &BowCorpus, top_n: usize) -> Result<MetricsReport> {
    let model = cp.model()?;
    let top = TopicTopWords::from_betas(&model.betas()?, top_n)?;
    let stats = cooccurrence_stats(corpus);
    let view = HierarchyView::from_plans(&cp.plans)?;
    let thetas = if corpus.has_labels() {
        Some(infer_doc_topics(cp, corpus)?)
    } else {
        None
    };

    let mut levels = Vec::new();
    for l in 0..model.num_levels() {
        let ids = top.ids(l);
        let clusters = match &thetas {
            Some(t) => Some(clustering_eval(&t[l], corpus.labels())?),
            None => None,
        };
        levels.push(LevelMetrics {
            level: l,
            num_topics: ids.len(),
            td: topic_diversity(&ids),
            tc_npmi: topic_coherence_npmi(&ids, &stats)?,
            purity: clusters.map(|c| c.purity),
            nmi: clusters.map(|c| c.nmi),
        });
    }

    let mut level_pairs = Vec::new();
    for l in 0..model.num_levels() - 1 {
        let (parents, children) = (top.ids(l), top.ids(l + 1));
        let mut pcc = Vec::new();
        let mut degenerate = 0;
        for (c, &p) in view.parents[l].iter().enumerate() {
            match clnpmi_checked(&parents[p], &children[c], &stats)? {
                Some(v) => pcc.push(v),
                None => {
                    degenerate += 1;
                    pcc.push(0.0);
                }
            }
        }
        if degenerate > 0 {
            log::warn!("{degenerate} parent-child pairs under level {l} share all top words; CLNPMI scored 0");
        }
        let d = hierarchy_diversities(&view, &parents, &children, l);
        level_pairs.push(LevelPairMetrics {
            parent_level: l,
            child_level: l + 1,
            pcc: mean(pcc.into_iter()),
            pcc_degenerate_pairs: degenerate,
            pcd: d.pcd,
            sd: d.sd,
            pncd: d.pncd,
            sd_undefined: d.sd_undefined,
            pncd_undefined: d.pncd_undefined,
        });
    }

    let aggregate = AggregateMetrics {
        td: mean(levels.iter().map(|l| l.td)),
        tc_npmi: mean(levels.iter().map(|l| l.tc_npmi)),
        pcc: mean(level_pairs.iter().map(|p| p.pcc)),
        pcd: mean(level_pairs.iter().map(|p| p.pcd)),
        sd: mean(level_pairs.iter().map(|p| p.sd)),
        pncd: mean(level_pairs.iter().map(|p| p.pncd)),
        purity: thetas.as_ref().map(|_| mean(levels.iter().filter_map(|l| l.purity))),
        nmi: thetas.as_ref().map(|_| mean(levels.iter().filter_map(|l| l.nmi))),
    };
    Ok(MetricsReport {
        top_n,
        num_docs: corpus.num_docs(),
        levels,
        level_pairs,
        aggregate,
        hierarchy: view,
        config: cp.config.clone(),
    })
}
