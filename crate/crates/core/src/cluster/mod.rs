//! Statement clustering: TF-IDF features, column standardization, t-SNE to
//! two dimensions, and a BIC-selected Gaussian mixture whose components are
//! handed to an expert as a review file.

mod gmm;
mod review;
mod tfidf;
mod tsne;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use gmm::{bic, gmm_fit, param_count, select_k, BicPoint, Cov, GmmModel, Selection, MAX_ITER, REGULARIZATION, TOLERANCE};
pub use review::{export_cluster_review, import_framework, ClusterReview, Disposition, ReviewCluster};
pub use tfidf::{build_feature_matrix, standardize, tokenize, tokenize_with, FeatureMatrix};
pub use tsne::{joint_probabilities, kl_divergence, kl_gradient, low_dim_affinities, tsne_embed, Affinities, TsneConfig, TsneEmbedding};

use crate::error::{Error, Result};
use crate::statements::FunctionalStatementSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub seed: u64,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub sample_size: usize,
    pub stopwords: Vec<String>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            perplexity: 30.0,
            n_iter: 3000,
            seed: 10,
            k_min: 1,
            k_max: 500,
            restarts: 3,
            sample_size: 5,
            stopwords: Vec::new(),
        }
    }
}

/// One statement with its origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementRef {
    pub script_id: String,
    pub step: usize,
    pub text: String,
}

pub fn flatten_statements(sets: &[FunctionalStatementSet]) -> Vec<StatementRef> {
    sets.iter()
        .flat_map(|s| {
            s.steps.iter().enumerate().map(|(i, t)| StatementRef {
                script_id: s.script_id.clone(),
                step: i,
                text: t.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRun {
    pub statements: Vec<StatementRef>,
    pub embedding: TsneEmbedding,
    pub selection: Selection,
    pub assignments: Vec<usize>,
    pub review: ClusterReview,
}

/// The whole clustering stage. The upper end of the K range is capped at
/// the statement count.
pub fn cluster_statements(sets: &[FunctionalStatementSet], config: &ClusterConfig) -> Result<ClusterRun> {
    let statements = flatten_statements(sets);
    if statements.is_empty() {
        return Err(Error::Domain("no statements to cluster".into()));
    }
    let stop: HashSet<String> = config.stopwords.iter().map(|s| s.to_lowercase()).collect();
    let docs: Vec<Vec<String>> = statements.iter().map(|s| tokenize_with(&s.text, &stop)).collect();
    let features = build_feature_matrix(&docs)?;
    let x = standardize(&features.values);
    let embedding = tsne_embed(
        &x,
        &TsneConfig {
            perplexity: config.perplexity,
            n_iter: config.n_iter,
            random_state: config.seed,
            ..TsneConfig::default()
        },
    )?;
    let k_max = config.k_max.min(statements.len());
    if k_max < config.k_max {
        log::warn!("k range capped at {k_max} (statement count)");
    }
    let selection = select_k(&embedding.points, config.k_min..=k_max, config.restarts, config.seed)?;
    let assignments = selection.model.predict(&embedding.points);
    let texts: Vec<String> = statements.iter().map(|s| s.text.clone()).collect();
    let review = export_cluster_review(&embedding.points, &selection.model, &texts, config.sample_size)?;
    Ok(ClusterRun {
        statements,
        embedding,
        selection,
        assignments,
        review,
    })
}
