use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases, splits on non-alphanumeric characters and keeps tokens of
/// at least two characters.
pub fn tokenize(statement: &str) -> Vec<String> {
    tokenize_with(statement, &HashSet::new())
}

pub fn tokenize_with(statement: &str, stopwords: &HashSet<String>) -> Vec<String> {
    statement
        .split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() >= 2 && !stopwords.contains(t))
        .collect()
}

/// Dense TF-IDF matrix with the counts it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    /// Sorted vocabulary; column `j` is `vocabulary[j]`.
    pub vocabulary: Vec<String>,
    /// Raw term counts `f(t,d)` per row.
    pub counts: Vec<Vec<u32>>,
    /// Token count `N_d` per row.
    pub doc_lengths: Vec<usize>,
    /// Document frequency `n(t)` per column.
    pub doc_freq: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_docs(&self) -> usize {
        self.values.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn idf(&self, col: usize) -> f64 {
        (self.n_docs() as f64 / (1.0 + self.doc_freq[col] as f64)).ln()
    }
}

/// `TF(t,d) = f(t,d) / N_d`, `IDF(t) = ln(N / (1 + n(t)))`, value `TF * IDF`,
/// then every nonzero row scaled to unit L2 norm.
pub fn build_feature_matrix(docs: &[Vec<String>]) -> Result<FeatureMatrix> {
    if docs.is_empty() {
        return Err(Error::Domain("TF-IDF needs at least one document".into()));
    }
    let vocabulary: Vec<String> = docs.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let v = vocabulary.len();
    let mut counts = vec![vec![0u32; v]; docs.len()];
    let mut doc_freq = vec![0usize; v];
    for (row, doc) in counts.iter_mut().zip(docs) {
        for t in doc {
            row[index[t.as_str()]] += 1;
        }
        for (j, c) in row.iter().enumerate() {
            if *c > 0 {
                doc_freq[j] += 1;
            }
        }
    }
    let n = docs.len() as f64;
    let idf: Vec<f64> = doc_freq.iter().map(|&df| (n / (1.0 + df as f64)).ln()).collect();
    let doc_lengths: Vec<usize> = docs.iter().map(Vec::len).collect();
    let values = counts
        .iter()
        .zip(&doc_lengths)
        .map(|(row, &len)| {
            let mut r: Vec<f64> = if len == 0 {
                vec![0.0; v]
            } else {
                row.iter().zip(&idf).map(|(&c, w)| c as f64 / len as f64 * w).collect()
            };
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter_mut().for_each(|x| *x /= norm);
            }
            r
        })
        .collect();
    Ok(FeatureMatrix {
        vocabulary,
        counts,
        doc_lengths,
        doc_freq,
        values,
    })
}

/// Column-wise standardization to mean 0 and population variance 1.
/// Constant columns become 0. With fewer than two rows the input is returned
/// unchanged.
pub fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if rows.len() < 2 {
        log::warn!("standardize: fewer than two rows, returning input unchanged");
        return rows.to_vec();
    }
    let n = rows.len() as f64;
    let cols = rows[0].len();
    let mut out = rows.to_vec();
    for j in 0..cols {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in out.iter_mut() {
            r[j] = if sd > 1e-12 { (r[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn docs(v: &[&str]) -> Vec<Vec<String>> {
        v.iter().map(|s| tokenize(s)).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Clip Images to region"), ["clip", "images", "to", "region"]);
        assert_eq!(tokenize("NDVI-calculation"), ["ndvi", "calculation"]);
        assert!(tokenize("a b").is_empty());
        let stop: HashSet<String> = ["to".to_string()].into();
        assert_eq!(tokenize_with("Clip to region", &stop), ["clip", "region"]);
    }

    #[test]
    fn term_in_one_of_two_docs_has_zero_idf() {
        let m = build_feature_matrix(&docs(&["aa bb", "bb"])).unwrap();
        let aa = m.vocabulary.iter().position(|t| t == "aa").unwrap();
        assert_eq!(m.idf(aa), 0.0);
        assert_eq!(m.values[0][aa], 0.0);
    }

    #[test]
    fn single_doc_hand_values() {
        let m = build_feature_matrix(&docs(&["aa bb aa"])).unwrap();
        // TF 2/3 and 1/3, both IDF ln(1/2); negative row then unit-normalized.
        let idf = (0.5f64).ln();
        let raw = [2.0 / 3.0 * idf, 1.0 / 3.0 * idf];
        let norm = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        assert_abs_diff_eq!(m.values[0][0], raw[0] / norm, epsilon = 1e-12);
        assert_abs_diff_eq!(m.values[0][1], raw[1] / norm, epsilon = 1e-12);
        assert!(m.values[0][0] < 0.0);
    }

    #[test]
    fn empty_corpus_is_a_domain_error() {
        assert!(matches!(build_feature_matrix(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_document_row_stays_zero() {
        let m = build_feature_matrix(&docs(&["aa", "x"])).unwrap();
        assert!(m.values[1].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standardize_examples() {
        assert_eq!(standardize(&[vec![1.0], vec![3.0]]), vec![vec![-1.0], vec![1.0]]);
        assert_eq!(standardize(&[vec![5.0], vec![5.0], vec![5.0]]), vec![vec![0.0]; 3]);
        assert_eq!(standardize(&[vec![2.0, 3.0]]), vec![vec![2.0, 3.0]]);
    }

    proptest! {
        #[test]
        fn nonzero_rows_have_unit_norm(words in prop::collection::vec(prop::collection::vec("[a-e]{2}", 0..6), 1..12)) {
            let docs: Vec<Vec<String>> = words;
            let m = build_feature_matrix(&docs).unwrap();
            for row in &m.values {
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
            }
            prop_assert!(m.doc_freq.iter().all(|&n| n >= 1));
        }

        #[test]
        fn standardized_columns(rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 4), 10)) {
            let s = standardize(&rows);
            for j in 0..4 {
                let mean = s.iter().map(|r| r[j]).sum::<f64>() / 10.0;
                let var = s.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 10.0;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var - 1.0).abs() < 1e-9 || var == 0.0);
            }
        }
    }
}
