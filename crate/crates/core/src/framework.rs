//! Three-level functional semantic framework: category, subcategory and
//! specific function. A node is identified by its full path, since the same
//! subcategory label may appear under two categories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_json;

const DEFAULT_FRAMEWORK: &str = include_str!("../assets/framework.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticFramework {
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub label: String,
    pub subcategories: Vec<Subcategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subcategory {
    pub label: String,
    pub functions: Vec<Function>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub id: u32,
    pub label: String,
}

/// `l1 > l2 > l3` labels of a leaf.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelPath {
    pub l1: String,
    pub l2: String,
    pub l3: String,
}

impl LabelPath {
    pub fn new(l1: impl Into<String>, l2: impl Into<String>, l3: impl Into<String>) -> Self {
        LabelPath {
            l1: l1.into(),
            l2: l2.into(),
            l3: l3.into(),
        }
    }

    /// Parses `a > b > c`.
    pub fn parse(text: &str) -> Option<Self> {
        let parts: Vec<&str> = text.split('>').map(str::trim).collect();
        match parts.as_slice() {
            [a, b, c] if !a.is_empty() && !b.is_empty() && !c.is_empty() => Some(LabelPath::new(*a, *b, *c)),
            _ => None,
        }
    }

    fn key(&self) -> (String, String, String) {
        (normalize_label(&self.l1), normalize_label(&self.l2), normalize_label(&self.l3))
    }
}

impl fmt::Display for LabelPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} > {} > {}", self.l1, self.l2, self.l3)
    }
}

/// Lowercase with runs of whitespace collapsed.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leaf {
    pub id: u32,
    pub path: LabelPath,
}

/// Result of resolving a bare label against the framework.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeRef {
    Category(String),
    Subcategory { l1: String, l2: String },
    Leaf(Leaf),
}

impl Default for SemanticFramework {
    fn default() -> Self {
        Self::from_json(DEFAULT_FRAMEWORK).expect("bundled framework is valid")
    }
}

impl SemanticFramework {
    pub fn from_json(text: &str) -> Result<Self> {
        let fw: SemanticFramework = serde_json::from_str(text).map_err(|e| Error::parse("framework", e))?;
        fw.validate()?;
        Ok(fw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Validation("framework has no categories".into()));
        }
        let mut ids = BTreeSet::new();
        let mut paths = BTreeSet::new();
        for c in &self.categories {
            if c.label.trim().is_empty() {
                return Err(Error::Validation("category with an empty label".into()));
            }
            if c.subcategories.is_empty() {
                return Err(Error::Validation(format!("category {:?} has no subcategories", c.label)));
            }
            for s in &c.subcategories {
                if s.label.trim().is_empty() {
                    return Err(Error::Validation(format!("subcategory with an empty label under {:?}", c.label)));
                }
                if s.functions.is_empty() {
                    return Err(Error::Validation(format!("subcategory {} > {} has no functions", c.label, s.label)));
                }
                for f in &s.functions {
                    let path = LabelPath::new(&c.label, &s.label, &f.label);
                    if f.label.trim().is_empty() {
                        return Err(Error::Validation(format!("function with an empty label under {} > {}", c.label, s.label)));
                    }
                    if f.id == 0 || !ids.insert(f.id) {
                        return Err(Error::Validation(format!("function {path} has a zero or duplicate id {}", f.id)));
                    }
                    if !paths.insert(path.key()) {
                        return Err(Error::Validation(format!("duplicate path {path}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Leaves in file order.
    pub fn leaves(&self) -> Vec<Leaf> {
        let mut out = Vec::new();
        for c in &self.categories {
            for s in &c.subcategories {
                for f in &s.functions {
                    out.push(Leaf {
                        id: f.id,
                        path: LabelPath::new(&c.label, &s.label, &f.label),
                    });
                }
            }
        }
        out
    }

    /// Leaves ordered by id.
    pub fn leaves_by_id(&self) -> Vec<Leaf> {
        let mut v = self.leaves();
        v.sort_by_key(|l| l.id);
        v
    }

    pub fn leaf(&self, id: u32) -> Option<Leaf> {
        self.leaves().into_iter().find(|l| l.id == id)
    }

    /// Exact path match, case-insensitive and whitespace-normalized.
    pub fn leaf_by_path(&self, path: &LabelPath) -> Option<Leaf> {
        let key = path.key();
        self.leaves().into_iter().find(|l| l.path.key() == key)
    }

    /// Resolves a single label. A label naming several nodes is rejected and
    /// must be qualified with its parents.
    pub fn lookup_label(&self, label: &str) -> Result<NodeRef> {
        let want = normalize_label(label);
        let mut hits = Vec::new();
        for c in &self.categories {
            if normalize_label(&c.label) == want {
                hits.push(NodeRef::Category(c.label.clone()));
            }
            for s in &c.subcategories {
                if normalize_label(&s.label) == want {
                    hits.push(NodeRef::Subcategory {
                        l1: c.label.clone(),
                        l2: s.label.clone(),
                    });
                }
                for f in &s.functions {
                    if normalize_label(&f.label) == want {
                        hits.push(NodeRef::Leaf(Leaf {
                            id: f.id,
                            path: LabelPath::new(&c.label, &s.label, &f.label),
                        }));
                    }
                }
            }
        }
        match hits.len() {
            0 => Err(Error::Validation(format!("no framework node labelled {label:?}"))),
            1 => Ok(hits.pop().expect("one hit")),
            n => Err(Error::Validation(format!(
                "label {label:?} is ambiguous ({n} nodes); qualify it with its category"
            ))),
        }
    }

    /// Number of leaves under the subcategory `l1 > l2`.
    pub fn leaves_under(&self, l1: &str, l2: &str) -> usize {
        self.subcategory(l1, l2).map_or(0, |s| s.functions.len())
    }

    /// Number of subcategories under the category `l1`.
    pub fn subcategories_under(&self, l1: &str) -> usize {
        self.category(l1).map_or(0, |c| c.subcategories.len())
    }

    fn category(&self, l1: &str) -> Option<&Category> {
        let l1 = normalize_label(l1);
        self.categories.iter().find(|c| normalize_label(&c.label) == l1)
    }

    fn subcategory(&self, l1: &str, l2: &str) -> Option<&Subcategory> {
        let l2 = normalize_label(l2);
        self.category(l1)?.subcategories.iter().find(|s| normalize_label(&s.label) == l2)
    }

    /// `(categories, distinct (category, subcategory) pairs, leaves)`.
    pub fn level_counts(&self) -> (usize, usize, usize) {
        let subs = self.categories.iter().map(|c| c.subcategories.len()).sum();
        (self.categories.len(), subs, self.leaves().len())
    }

    /// Builds a framework from leaf paths, grouping by first appearance.
    pub fn from_leaves(leaves: &[Leaf]) -> Result<Self> {
        let mut categories: Vec<Category> = Vec::new();
        for leaf in leaves {
            let ci = match categories.iter().position(|c| normalize_label(&c.label) == normalize_label(&leaf.path.l1)) {
                Some(i) => i,
                None => {
                    categories.push(Category {
                        label: leaf.path.l1.clone(),
                        subcategories: Vec::new(),
                    });
                    categories.len() - 1
                }
            };
            let subs = &mut categories[ci].subcategories;
            let si = match subs.iter().position(|s| normalize_label(&s.label) == normalize_label(&leaf.path.l2)) {
                Some(i) => i,
                None => {
                    subs.push(Subcategory {
                        label: leaf.path.l2.clone(),
                        functions: Vec::new(),
                    });
                    subs.len() - 1
                }
            };
            subs[si].functions.push(Function {
                id: leaf.id,
                label: leaf.path.l3.clone(),
            });
        }
        let fw = SemanticFramework { categories };
        fw.validate()?;
        Ok(fw)
    }

    /// sha256 of the compact JSON form; artifacts built against one
    /// framework record it so they are not scored against another.
    pub fn fingerprint(&self) -> String {
        crate::corpus::sha256_hex(&serde_json::to_vec(self).expect("framework serializes"))
    }

    /// Leaf labels keyed by id, for compact display.
    pub fn labels(&self) -> BTreeMap<u32, String> {
        self.leaves().into_iter().map(|l| (l.id, l.path.l3)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEAVES: [&str; 21] = [
        "Data Import",
        "Data Filtering",
        "Image Mosaicking and Blend",
        "Clip Images",
        "Image Masking",
        "Image Correction",
        "Image Band Manipulation",
        "Normalization of Results",
        "Area Calculation",
        "Image Index Calculation",
        "Feature Calculation",
        "Threshold Application",
        "Buffer Analysis",
        "Analysis of Unicom Zone",
        "Cluster Analysis",
        "Classification and Machine Learning",
        "Smoothing Results",
        "Resampling Results",
        "Data Conversion",
        "Chart Visualization",
        "Export Data",
    ];

    #[test]
    fn default_asset_matches_table() {
        let fw = SemanticFramework::default();
        let leaves = fw.leaves_by_id();
        assert_eq!(leaves.iter().map(|l| l.id).collect::<Vec<_>>(), (1..=21).collect::<Vec<_>>());
        for (leaf, label) in leaves.iter().zip(LEAVES) {
            assert_eq!(leaf.path.l3, label);
        }
        assert_eq!(fw.leaf(1).unwrap().path.to_string(), "Data Preprocessing > Data Preparation > Data Import");
        assert_eq!(fw.leaf(10).unwrap().path.l2, "Numerical Calculation");
        assert_eq!(fw.leaf(21).unwrap().path.l1, "Data Post-Processing");
        assert_eq!(fw.level_counts(), (3, 7, 21));
    }

    #[test]
    fn homonymous_subcategory_requires_qualification() {
        let fw = SemanticFramework::default();
        assert!(fw.lookup_label("Image Processing").is_err());
        assert!(matches!(fw.lookup_label("clip  images").unwrap(), NodeRef::Leaf(l) if l.id == 4));
        assert!(matches!(fw.lookup_label("Data Export").unwrap(), NodeRef::Subcategory { .. }));
        assert_eq!(fw.leaves_under("Data Preprocessing", "Image Processing"), 6);
        assert_eq!(fw.leaves_under("Core Spatiotemporal Analysis", "Image Processing"), 3);
    }

    #[test]
    fn counts_for_structure_metric() {
        let fw = SemanticFramework::default();
        assert_eq!(fw.leaves_under("Data Preprocessing", "Data Preparation"), 2);
        assert_eq!(fw.subcategories_under("Core Spatiotemporal Analysis"), 3);
        assert_eq!(fw.subcategories_under("Nope"), 0);
    }

    #[test]
    fn path_lookup_is_normalized_and_exact() {
        let fw = SemanticFramework::default();
        let p = LabelPath::parse(" data preprocessing >  Data Preparation> DATA IMPORT ").unwrap();
        assert_eq!(fw.leaf_by_path(&p).unwrap().id, 1);
        let wrong = LabelPath::new("Data Preprocessing", "Image Processing", "Data Import");
        assert!(fw.leaf_by_path(&wrong).is_none());
        assert!(LabelPath::parse("a > b").is_none());
    }

    #[test]
    fn round_trip_and_validation() {
        let fw = SemanticFramework::default();
        let json = serde_json::to_string(&fw).unwrap();
        assert_eq!(SemanticFramework::from_json(&json).unwrap(), fw);
        assert_eq!(SemanticFramework::from_leaves(&fw.leaves()).unwrap(), fw);
        assert!(SemanticFramework::from_json(r#"{"categories":[]}"#).is_err());
        assert!(SemanticFramework::from_json(r#"{"categories":[{"label":"A","subcategories":[]}]}"#).is_err());
        let dup = r#"{"categories":[{"label":"A","subcategories":[{"label":"B","functions":[{"id":1,"label":"x"},{"id":1,"label":"y"}]}]}]}"#;
        assert!(SemanticFramework::from_json(dup).is_err());
    }
}
