use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gmm::GmmModel;
use super::tfidf::tokenize;
use crate::error::{Error, Result};
use crate::framework::{normalize_label, LabelPath, Leaf, SemanticFramework};
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Disposition {
    Keep,
    Drop,
    MergeInto(usize),
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disposition::Keep => f.write_str("keep"),
            Disposition::Drop => f.write_str("drop"),
            Disposition::MergeInto(c) => write!(f, "merge_into:{c}"),
        }
    }
}

impl From<Disposition> for String {
    fn from(d: Disposition) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for Disposition {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.trim() {
            "keep" => Ok(Disposition::Keep),
            "drop" => Ok(Disposition::Drop),
            other => other
                .strip_prefix("merge_into:")
                .and_then(|id| id.trim().parse().ok())
                .map(Disposition::MergeInto)
                .ok_or_else(|| format!("disposition must be keep, drop or merge_into:<id>, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewCluster {
    pub cluster_id: usize,
    pub members: usize,
    #[serde(default)]
    pub top_terms: Vec<String>,
    #[serde(default)]
    pub representatives: Vec<String>,
    #[serde(default)]
    pub proposed_label: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub subcategory: String,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterReview {
    #[serde(rename = "cluster")]
    pub clusters: Vec<ReviewCluster>,
}

const REVIEW_HEADER: &str = "\
# Cluster review. For every cluster fill in proposed_label (the specific
# function), category and subcategory, and set disposition to one of
# \"keep\", \"drop\" or \"merge_into:<cluster_id>\".
";

/// One review block per component. Representatives are the distinct
/// statements nearest to the component mean.
pub fn export_cluster_review(
    points: &[[f64; 2]],
    model: &GmmModel,
    statements: &[String],
    sample_size: usize,
) -> Result<ClusterReview> {
    if points.len() != statements.len() {
        return Err(Error::Validation(format!(
            "{} points but {} statements",
            points.len(),
            statements.len()
        )));
    }
    let labels = model.predict(points);
    let clusters = (0..model.k)
        .map(|c| {
            let mut members: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == c).collect();
            let mean = model.means[c];
            let dist = |i: usize| (points[i][0] - mean[0]).powi(2) + (points[i][1] - mean[1]).powi(2);
            members.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
            let mut seen = BTreeSet::new();
            let representatives: Vec<String> = members
                .iter()
                .map(|&i| statements[i].clone())
                .filter(|s| seen.insert(s.clone()))
                .take(sample_size)
                .collect();
            ReviewCluster {
                cluster_id: c,
                members: members.len(),
                top_terms: top_terms(members.iter().map(|&i| statements[i].as_str()), 5),
                representatives,
                proposed_label: String::new(),
                category: String::new(),
                subcategory: String::new(),
                disposition: Disposition::Keep,
            }
        })
        .collect();
    Ok(ClusterReview { clusters })
}

fn top_terms<'a>(texts: impl Iterator<Item = &'a str>, n: usize) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in texts {
        for tok in tokenize(t) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(n).map(|(t, _)| t).collect()
}

impl ClusterReview {
    pub fn to_toml(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::parse("cluster review", e))?;
        Ok(format!("{REVIEW_HEADER}\n{body}"))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let r: ClusterReview = toml::from_str(text).map_err(|e| Error::parse("cluster review", e))?;
        r.validate()?;
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_toml()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Unique ids, existing merge targets and no merge cycles.
    pub fn validate(&self) -> Result<()> {
        let by_id = self.by_id()?;
        for c in &self.clusters {
            self.resolve(c.cluster_id, &by_id)?;
        }
        Ok(())
    }

    fn by_id(&self) -> Result<BTreeMap<usize, &ReviewCluster>> {
        let mut m = BTreeMap::new();
        for c in &self.clusters {
            if m.insert(c.cluster_id, c).is_some() {
                return Err(Error::Validation(format!("duplicate cluster id {}", c.cluster_id)));
            }
        }
        Ok(m)
    }

    /// Follows merges to the cluster that finally keeps or drops the group.
    fn resolve<'a>(&self, id: usize, by_id: &BTreeMap<usize, &'a ReviewCluster>) -> Result<&'a ReviewCluster> {
        let mut seen = vec![id];
        let mut cur = by_id[&id];
        while let Disposition::MergeInto(target) = cur.disposition {
            cur = by_id.get(&target).ok_or_else(|| {
                Error::Validation(format!("cluster {} merges into missing cluster {target}", cur.cluster_id))
            })?;
            if seen.contains(&target) {
                seen.push(target);
                let chain: Vec<String> = seen.iter().map(|s| s.to_string()).collect();
                return Err(Error::Validation(format!("merge cycle {}", chain.join(" -> "))));
            }
            seen.push(target);
        }
        Ok(cur)
    }

    /// Kept clusters become leaves, numbered from 1 in cluster-id order;
    /// clusters sharing a path collapse into one leaf.
    pub fn to_framework(&self) -> Result<SemanticFramework> {
        let by_id = self.by_id()?;
        let mut leaves: Vec<Leaf> = Vec::new();
        let mut paths = BTreeSet::new();
        for c in &self.clusters {
            let root = self.resolve(c.cluster_id, &by_id)?;
            if root.disposition == Disposition::Drop || root.cluster_id != c.cluster_id {
                continue;
            }
            for (field, v) in [("proposed_label", &c.proposed_label), ("category", &c.category), ("subcategory", &c.subcategory)] {
                if v.trim().is_empty() {
                    return Err(Error::Validation(format!("cluster {} is an orphan leaf: {field} is empty", c.cluster_id)));
                }
            }
            let path = LabelPath::new(c.category.trim(), c.subcategory.trim(), c.proposed_label.trim());
            if paths.insert((normalize_label(&path.l1), normalize_label(&path.l2), normalize_label(&path.l3))) {
                leaves.push(Leaf {
                    id: leaves.len() as u32 + 1,
                    path,
                });
            }
        }
        if leaves.is_empty() {
            return Err(Error::Validation("review keeps no cluster; the framework would be empty".into()));
        }
        SemanticFramework::from_leaves(&leaves)
    }
}

/// Loads a framework either from a framework JSON file or from an edited
/// review TOML file, chosen by extension.
pub fn import_framework(path: &Path) -> Result<SemanticFramework> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => ClusterReview::load(path)?.to_framework(),
        _ => SemanticFramework::load(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(id: usize, disposition: Disposition, label: &str) -> ReviewCluster {
        ReviewCluster {
            cluster_id: id,
            members: 1,
            top_terms: vec![],
            representatives: vec![],
            proposed_label: label.into(),
            category: "Data Preprocessing".into(),
            subcategory: "Data Preparation".into(),
            disposition,
        }
    }

    #[test]
    fn disposition_strings() {
        for d in [Disposition::Keep, Disposition::Drop, Disposition::MergeInto(4)] {
            assert_eq!(Disposition::try_from(d.to_string()).unwrap(), d);
        }
        assert!(Disposition::try_from("merge_into:x".to_string()).is_err());
    }

    #[test]
    fn merge_cycle_is_rejected() {
        let r = ClusterReview {
            clusters: vec![cluster(0, Disposition::MergeInto(1), "A"), cluster(1, Disposition::MergeInto(0), "B")],
        };
        let err = r.validate().unwrap_err().to_string();
        assert!(err.contains("cycle"), "{err}");
    }

    #[test]
    fn missing_merge_target() {
        let r = ClusterReview {
            clusters: vec![cluster(0, Disposition::MergeInto(9), "A")],
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn dropping_everything_is_empty() {
        let r = ClusterReview {
            clusters: vec![cluster(0, Disposition::Drop, "A"), cluster(1, Disposition::MergeInto(0), "B")],
        };
        assert!(r.to_framework().is_err());
    }

    #[test]
    fn orphan_leaf_names_cluster() {
        let mut c = cluster(3, Disposition::Keep, "A");
        c.subcategory.clear();
        let err = ClusterReview { clusters: vec![c] }.to_framework().unwrap_err().to_string();
        assert!(err.contains("cluster 3"), "{err}");
    }

    #[test]
    fn merges_fold_and_toml_round_trips() {
        let r = ClusterReview {
            clusters: vec![
                cluster(0, Disposition::Keep, "Data Import"),
                cluster(1, Disposition::MergeInto(0), "ignored"),
                cluster(2, Disposition::Keep, "Data Filtering"),
                cluster(3, Disposition::Drop, "x"),
            ],
        };
        let fw = r.to_framework().unwrap();
        assert_eq!(fw.leaves().len(), 2);
        assert_eq!(fw.leaf(2).unwrap().path.l3, "Data Filtering");
        let text = r.to_toml().unwrap();
        assert!(text.starts_with("# Cluster review"));
        assert_eq!(ClusterReview::from_toml(&text).unwrap(), r);
    }
}
