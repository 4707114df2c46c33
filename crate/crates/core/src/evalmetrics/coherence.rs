use crate::corpus::CooccurrenceStats;
use crate::error::{Error, Result};

/// Normalized PMI from whole-document co-occurrence.
///
/// Limits are taken exactly rather than through additive smoothing: a pair
/// that never co-occurs scores −1, and a pair with `P(a,b) = 1` (including
/// `a = b` with `P(a) = 1`) scores 1. Everything else uses
/// `ln(P(a,b) / (P(a) P(b))) / −ln P(a,b)`.
pub fn npmi(a: usize, b: usize, stats: &CooccurrenceStats) -> Result<f64> {
    let (da, db) = (stats.df(a), stats.df(b));
    if da == 0 || db == 0 {
        return Err(Error::invalid(format!("word {} never occurs", if da == 0 { a } else { b })));
    }
    let n = stats.num_docs() as f64;
    let dab = if a == b { da } else { stats.pair_df(a, b) };
    if dab == 0 {
        return Ok(-1.0);
    }
    let pab = dab as f64 / n;
    if dab == stats.num_docs() {
        return Ok(1.0);
    }
    let pmi = (pab / ((da as f64 / n) * (db as f64 / n))).ln();
    Ok((pmi / -pab.ln()).clamp(-1.0, 1.0))
}

/// Mean NPMI over unordered pairs of one word list.
pub fn list_coherence(words: &[usize], stats: &CooccurrenceStats) -> Result<f64> {
    if words.len() < 2 {
        return Err(Error::invalid("coherence needs at least two words"));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            total += npmi(words[i], words[j], stats)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Per-topic mean pairwise NPMI, averaged over topics.
pub fn topic_coherence_npmi(topics: &[Vec<usize>], stats: &CooccurrenceStats) -> Result<f64> {
    if topics.is_empty() {
        return Err(Error::invalid("no topics"));
    }
    let mut total = 0.0;
    for t in topics {
        total += list_coherence(t, stats)?;
    }
    Ok(total / topics.len() as f64)
}

/// Cross-level NPMI between a parent and a child list: mean NPMI over pairs
/// drawn from `parent ∖ child` × `child ∖ parent`. Returns `None` when either
/// difference is empty.
pub fn clnpmi_checked(parent: &[usize], child: &[usize], stats: &CooccurrenceStats) -> Result<Option<f64>> {
    if parent.is_empty() || child.is_empty() {
        return Err(Error::invalid("clnpmi needs nonempty word lists"));
    }
    let p_only: Vec<usize> = parent.iter().copied().filter(|w| !child.contains(w)).collect();
    let c_only: Vec<usize> = child.iter().copied().filter(|w| !parent.contains(w)).collect();
    if p_only.is_empty() || c_only.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for &a in &p_only {
        for &b in &c_only {
            total += npmi(a, b, stats)?;
        }
    }
    Ok(Some(total / (p_only.len() * c_only.len()) as f64))
}

/// [`clnpmi_checked`] with the empty-difference case scored 0.
pub fn clnpmi(parent: &[usize], child: &[usize], stats: &CooccurrenceStats) -> Result<f64> {
    Ok(clnpmi_checked(parent, child, stats)?.unwrap_or_else(|| {
        log::warn!("clnpmi: parent and child lists overlap completely; scoring 0");
        0.0
    }))
}
