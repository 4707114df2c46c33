use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{top_indices, TopicWordDist};
use crate::tpd::{parent_of, DependencyMatrix};

pub const DEFAULT_TOP_N: usize = 15;

/// Top-n word ids and their β weights for every topic of every level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicTopWords {
    pub n: usize,
    /// `levels[ℓ][k]` lists `(word id, score)` by descending score
    pub levels: Vec<Vec<Vec<(usize, f64)>>>,
}

impl TopicTopWords {
    pub fn from_betas(betas: &[TopicWordDist], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("top-word count must be positive"));
        }
        let levels = betas
            .iter()
            .map(|beta| {
                (0..beta.num_topics())
                    .map(|k| {
                        let col = beta.topic(k);
                        top_indices(&col, n).into_iter().map(|i| (i, col[i])).collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n, levels })
    }

    /// Word ids only, per topic of `level`.
    pub fn ids(&self, level: usize) -> Vec<Vec<usize>> {
        self.levels[level]
            .iter()
            .map(|t| t.iter().map(|&(w, _)| w).collect())
            .collect()
    }
}

/// Distinct words over the total number of slots across the given lists.
pub fn topic_diversity<L: AsRef<[usize]>>(lists: &[L]) -> f64 {
    let slots: usize = lists.iter().map(|l| l.as_ref().len()).sum();
    if slots == 0 {
        return 1.0;
    }
    let distinct: HashSet<usize> = lists.iter().flat_map(|l| l.as_ref().iter().copied()).collect();
    distinct.len() as f64 / slots as f64
}

/// Parent assignments between adjacent levels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierarchyView {
    pub topics_per_level: Vec<usize>,
    /// `parents[ℓ][c]` is the level-ℓ parent of topic c at level ℓ+1
    pub parents: Vec<Vec<usize>>,
}

impl HierarchyView {
    pub fn from_plans(plans: &[DependencyMatrix]) -> Result<Self> {
        let Some(first) = plans.first() else {
            return Err(Error::invalid("hierarchy needs at least one plan"));
        };
        let mut topics = vec![first.num_parents()];
        for (l, p) in plans.iter().enumerate() {
            if p.num_parents() != *topics.last().unwrap() {
                return Err(Error::shape(format!(
                    "plan {l} has {} parents, level {l} has {} topics",
                    p.num_parents(),
                    topics.last().unwrap()
                )));
            }
            topics.push(p.num_children());
        }
        Ok(Self {
            topics_per_level: topics,
            parents: plans.iter().map(parent_of).collect(),
        })
    }

    pub fn from_parents(topics_per_level: Vec<usize>, parents: Vec<Vec<usize>>) -> Result<Self> {
        if parents.len() + 1 != topics_per_level.len() {
            return Err(Error::shape("need one parent list per non-root level"));
        }
        for (l, ps) in parents.iter().enumerate() {
            if ps.len() != topics_per_level[l + 1] || ps.iter().any(|&p| p >= topics_per_level[l]) {
                return Err(Error::invalid(format!("bad parent list for level {}", l + 1)));
            }
        }
        Ok(Self { topics_per_level, parents })
    }

    pub fn num_levels(&self) -> usize {
        self.topics_per_level.len()
    }

    /// Children (at level ℓ+1) of topic `parent` at level ℓ.
    pub fn children(&self, level: usize, parent: usize) -> Vec<usize> {
        self.parents[level]
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p == parent)
            .map(|(c, _)| c)
            .collect()
    }

    /// Groups of level-ℓ+1 topics sharing a parent, in parent order; every
    /// child appears in exactly one group.
    pub fn sibling_groups(&self, level: usize) -> Vec<Vec<usize>> {
        (0..self.topics_per_level[level])
            .map(|p| self.children(level, p))
            .filter(|g| !g.is_empty())
            .collect()
    }
}

/// Parent–child, sibling and parent–non-child diversity for one level pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diversities {
    pub pcd: f64,
    pub sd: f64,
    pub pncd: f64,
    /// no two children share a parent; `sd` is reported as 1.0
    pub sd_undefined: bool,
    /// every child shares the single parent; `pncd` is reported as 1.0
    pub pncd_undefined: bool,
}

fn pair_td(a: &[usize], b: &[usize]) -> f64 {
    topic_diversity(&[a, b])
}

fn mean_or_flag(values: &[f64]) -> (f64, bool) {
    if values.is_empty() {
        (1.0, true)
    } else {
        (values.iter().sum::<f64>() / values.len() as f64, false)
    }
}

/// Per-pair TD averaged over each relation between levels `level` and `level + 1`.
pub fn hierarchy_diversities(view: &HierarchyView, top: &[Vec<usize>], child_top: &[Vec<usize>], level: usize) -> Diversities {
    let parents = &view.parents[level];
    let pcd: Vec<f64> = parents
        .iter()
        .enumerate()
        .map(|(c, &p)| pair_td(&top[p], &child_top[c]))
        .collect();
    let mut sd = Vec::new();
    for group in view.sibling_groups(level) {
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                sd.push(pair_td(&child_top[group[i]], &child_top[group[j]]));
            }
        }
    }
    let mut pncd = Vec::new();
    for (p, parent_words) in top.iter().enumerate() {
        for (c, &cp) in parents.iter().enumerate() {
            if cp != p {
                pncd.push(pair_td(parent_words, &child_top[c]));
            }
        }
    }
    let (pcd, _) = mean_or_flag(&pcd);
    let (sd, sd_undefined) = mean_or_flag(&sd);
    let (pncd, pncd_undefined) = mean_or_flag(&pncd);
    Diversities {
        pcd,
        sd,
        pncd,
        sd_undefined,
        pncd_undefined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use proptest::prelude::*;

    #[test]
    fn td_examples() {
        assert_eq!(topic_diversity(&[vec![0, 1, 2], vec![3, 4, 5]]), 1.0);
        assert_eq!(topic_diversity(&[vec![0, 1, 2], vec![0, 1, 2]]), 0.5);
        assert_eq!(topic_diversity(&[vec![7, 8, 9]]), 1.0);
    }

    #[test]
    fn top_words_sorted_with_tie_rule() {
        let beta = TopicWordDist::from_matrix(
            Matrix::from_rows(&[vec![0.2, 0.9], vec![0.5, 0.05], vec![0.2, 0.05], vec![0.1, 0.0]]).unwrap(),
        );
        let top = TopicTopWords::from_betas(&[beta], 3).unwrap();
        assert_eq!(top.ids(0), vec![vec![1, 0, 2], vec![0, 1, 2]]);
        assert_eq!(top.levels[0][0][0], (1, 0.5));
    }

    fn two_by_four() -> HierarchyView {
        HierarchyView::from_parents(vec![2, 4], vec![vec![0, 0, 1, 1]]).unwrap()
    }

    #[test]
    fn view_groups() {
        let v = two_by_four();
        assert_eq!(v.children(0, 1), vec![2, 3]);
        assert_eq!(v.sibling_groups(0), vec![vec![0, 1], vec![2, 3]]);
        let plans = vec![DependencyMatrix::from_matrix(
            Matrix::from_rows(&[vec![0.2, 0.05], vec![0.25, 0.0], vec![0.0, 0.25], vec![0.05, 0.2]]).unwrap(),
        )
        .unwrap()];
        assert_eq!(HierarchyView::from_plans(&plans).unwrap(), v);
    }

    #[test]
    fn children_duplicating_parents() {
        let parents = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let children = vec![vec![0, 1, 2], vec![0, 1, 2], vec![3, 4, 5], vec![3, 4, 5]];
        let d = hierarchy_diversities(&two_by_four(), &parents, &children, 0);
        assert_eq!(d.pcd, 0.5);
        // siblings are identical
        assert_eq!(d.sd, 0.5);
        // every non-child is disjoint from the parent
        assert_eq!(d.pncd, 1.0);
        assert!(!d.sd_undefined && !d.pncd_undefined);
    }

    #[test]
    fn disjoint_hierarchy_is_fully_diverse() {
        let parents = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let children: Vec<Vec<usize>> = (0..4).map(|c| vec![10 + 3 * c, 11 + 3 * c, 12 + 3 * c]).collect();
        let d = hierarchy_diversities(&two_by_four(), &parents, &children, 0);
        assert_eq!((d.pcd, d.sd, d.pncd), (1.0, 1.0, 1.0));
    }

    #[test]
    fn missing_siblings_flagged() {
        let v = HierarchyView::from_parents(vec![1, 1], vec![vec![0]]).unwrap();
        let d = hierarchy_diversities(&v, &[vec![0, 1]], &[vec![0, 2]], 0);
        assert_eq!(d.pcd, 0.75);
        assert!(d.sd_undefined && d.sd == 1.0);
        assert!(d.pncd_undefined && d.pncd == 1.0);
    }

    proptest! {
        #[test]
        fn diversities_in_unit_interval(
            parents in prop::collection::vec(0usize..3, 1..8),
            words in prop::collection::vec(prop::collection::vec(0usize..10, 3), 11)
        ) {
            let k_child = parents.len();
            let v = HierarchyView::from_parents(vec![3, k_child], vec![parents]).unwrap();
            let d = hierarchy_diversities(&v, &words[..3], &words[3..3 + k_child], 0);
            for x in [d.pcd, d.sd, d.pncd] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            prop_assert!((0.0..=1.0).contains(&topic_diversity(&words)));
        }
    }
}
