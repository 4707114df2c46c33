use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClusteringScores {
    pub purity: f64,
    pub nmi: f64,
}

/// Argmax topic per row; ties go to the lower topic id.
pub fn hard_assignments(theta: &Matrix) -> Vec<usize> {
    (0..theta.rows())
        .map(|d| {
            theta
                .row(d)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0
        })
        .collect()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Purity and NMI (mutual information over the arithmetic mean of the two
/// entropies) of `assignments` against `labels`. When both partitions are a
/// single block NMI is 1.
pub fn purity_nmi<L: Ord>(assignments: &[usize], labels: &[L]) -> Result<ClusteringScores> {
    if assignments.len() != labels.len() || labels.is_empty() {
        return Err(Error::invalid(format!(
            "{} assignments for {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    let mut joint: BTreeMap<(usize, &L), usize> = BTreeMap::new();
    let mut by_cluster: BTreeMap<usize, usize> = BTreeMap::new();
    let mut by_label: BTreeMap<&L, usize> = BTreeMap::new();
    for (&c, l) in assignments.iter().zip(labels) {
        *joint.entry((c, l)).or_default() += 1;
        *by_cluster.entry(c).or_default() += 1;
        *by_label.entry(l).or_default() += 1;
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(c, _), &count) in &joint {
        let b = best.entry(c).or_default();
        *b = (*b).max(count);
    }
    let purity = best.values().sum::<usize>() as f64 / n;

    let mi: f64 = joint
        .iter()
        .map(|(&(c, l), &count)| {
            let pij = count as f64 / n;
            let pi = by_cluster[&c] as f64 / n;
            let pj = by_label[l] as f64 / n;
            pij * (pij / (pi * pj)).ln()
        })
        .sum();
    let hc = entropy(by_cluster.values().copied(), n);
    let hl = entropy(by_label.values().copied(), n);
    let nmi = if hc == 0.0 && hl == 0.0 {
        1.0
    } else {
        (mi / ((hc + hl) / 2.0)).clamp(0.0, 1.0)
    };
    Ok(ClusteringScores { purity, nmi })
}

/// Clusters documents by their most probable topic in `theta` (N×K).
pub fn clustering_eval(theta: &Matrix, labels: &[Option<String>]) -> Result<ClusteringScores> {
    if labels.len() != theta.rows() {
        return Err(Error::invalid(format!("{} labels for {} documents", labels.len(), theta.rows())));
    }
    let labels: Vec<&str> = labels
        .iter()
        .enumerate()
        .map(|(d, l)| l.as_deref().ok_or_else(|| Error::invalid(format!("document {d} has no label"))))
        .collect::<Result<_>>()?;
    purity_nmi(&hard_assignments(theta), &labels)
}

/// Writes one TSV per level, `theta_level{ℓ}.tsv`: a header of topic columns
/// (plus `label` when given), then one row per document.
pub fn export_features(thetas: &[Matrix], labels: Option<&[Option<String>]>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(thetas.len());
    for (l, theta) in thetas.iter().enumerate() {
        if let Some(lab) = labels {
            if lab.len() != theta.rows() {
                return Err(Error::shape(format!("{} labels for {} documents", lab.len(), theta.rows())));
            }
        }
        let mut out = String::new();
        let header: Vec<String> = (0..theta.cols()).map(|k| format!("topic_{k}")).collect();
        out.push_str(&header.join("\t"));
        if labels.is_some() {
            out.push_str("\tlabel");
        }
        out.push('\n');
        for d in 0..theta.rows() {
            for (k, v) in theta.row(d).iter().enumerate() {
                if k > 0 {
                    out.push('\t');
                }
                write!(out, "{v}").unwrap();
            }
            if let Some(lab) = labels {
                out.push('\t');
                out.push_str(lab[d].as_deref().unwrap_or(""));
            }
            out.push('\n');
        }
        let path = dir.join(format!("theta_level{l}.tsv"));
        fs::write(&path, out)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Parses a file written by [`export_features`].
pub fn read_features(path: impl AsRef<Path>) -> Result<(Matrix, Option<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split('\t').collect();
    let has_label = header.last() == Some(&"label");
    let k = header.len() - usize::from(has_label);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(Error::Config(format!("feature row {rows} has {} fields", fields.len())));
        }
        for f in &fields[..k] {
            data.push(f.parse::<f64>().map_err(|e| Error::Config(format!("feature value {f:?}: {e}")))?);
        }
        if has_label {
            labels.push(fields[k].to_owned());
        }
        rows += 1;
    }
    Ok((Matrix::new(rows, k, data)?, has_label.then_some(labels)))
}
