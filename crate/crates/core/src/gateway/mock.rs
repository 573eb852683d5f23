//! Deterministic in-process responder.
//!
//! A reply is a pure function of the profile name and the prompt. Canned
//! replies from the fixture file (keyed by the prompt's sha256) take
//! precedence; otherwise the responder recognises the two prompt shapes the
//! pipeline sends:
//!
//! * statement prompts carry a delimited script body and get a fenced JSON
//!   block with a purpose and one step per recognised operator group;
//! * mapping prompts carry an indexed framework listing and an operator list
//!   and get a leaf answer, as an id, a path, a prose sentence or a slightly
//!   misspelled label.
//!
//! `accuracy` is the probability of answering with the keyword-voted leaf
//! rather than a neighbouring one.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AttemptError, GatewayProfile};
use crate::ast::{call_names, parse_script};
use crate::corpus::{sha256_hex, strip_comments};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockOptions {
    /// JSON object mapping prompt sha256 to a canned response.
    pub fixtures: Option<PathBuf>,
    pub accuracy: f64,
    /// Probability of an unusable free-text answer to a mapping prompt.
    pub garbage_rate: f64,
    pub fail_always: bool,
    pub fail_when_prompt_contains: Vec<String>,
}

impl Default for MockOptions {
    fn default() -> Self {
        MockOptions {
            fixtures: None,
            accuracy: 0.85,
            garbage_rate: 0.02,
            fail_always: false,
            fail_when_prompt_contains: Vec::new(),
        }
    }
}

pub struct MockResponder {
    profile_name: String,
    options: MockOptions,
    fixtures: BTreeMap<String, String>,
}

impl MockResponder {
    pub fn new(profile: &GatewayProfile) -> Result<Self> {
        let fixtures = match &profile.mock.fixtures {
            Some(path) => crate::io::read_json(path)?,
            None => BTreeMap::new(),
        };
        Ok(MockResponder {
            profile_name: profile.profile_name.clone(),
            options: profile.mock.clone(),
            fixtures,
        })
    }

    pub(crate) fn respond(&self, prompt: &str) -> std::result::Result<String, AttemptError> {
        let injected = self.options.fail_always
            || self.options.fail_when_prompt_contains.iter().any(|m| prompt.contains(m.as_str()));
        if injected {
            return Err(AttemptError {
                message: "mock failure injected".into(),
                transient: true,
            });
        }
        if let Some(r) = self.fixtures.get(&sha256_hex(prompt.as_bytes())) {
            return Ok(r.clone());
        }
        if let Some(body) = crate::statements::extract_script_body(prompt) {
            return Ok(self.statement_reply(&body));
        }
        let leaves = index_lines(prompt);
        if !leaves.is_empty() {
            return Ok(self.mapping_reply(prompt, &leaves));
        }
        Ok("I can help with geospatial script analysis.".into())
    }

    fn unit(&self, parts: &[&str]) -> f64 {
        let mut h = Sha256::new();
        h.update(self.profile_name.as_bytes());
        for p in parts {
            h.update([0u8]);
            h.update(p.as_bytes());
        }
        let d = h.finalize();
        let n = u64::from_be_bytes(d[..8].try_into().expect("8 bytes"));
        (n >> 11) as f64 / (1u64 << 53) as f64
    }

    fn pick(&self, n: usize, parts: &[&str]) -> usize {
        ((self.unit(parts) * n as f64) as usize).min(n.saturating_sub(1))
    }

    fn statement_reply(&self, body: &str) -> String {
        let root = parse_script(&strip_comments(body)).root;
        let mut steps: Vec<String> = Vec::new();
        let mut leaves: Vec<usize> = Vec::new();
        let mut last: Option<usize> = None;
        for (i, op) in call_names(&root).iter().enumerate() {
            let Some(leaf) = leaf_for_operator(op) else { continue };
            if last == Some(leaf) {
                continue;
            }
            last = Some(leaf);
            leaves.push(leaf);
            let variants = PHRASES[leaf - 1].1;
            let v = variants[self.pick(variants.len(), &[body, &i.to_string()])];
            steps.push(v.to_string());
        }
        let purpose = match dominant(&leaves) {
            Some(leaf) => format!("The script performs {} on remote sensing imagery.", PHRASES[leaf - 1].0.to_lowercase()),
            None => "The script prints intermediate values.".to_string(),
        };
        let block = serde_json::json!({ "purpose": purpose, "operations": steps });
        format!(
            "Here is the analysis of the script.\n\n```json\n{}\n```\n",
            serde_json::to_string_pretty(&block).expect("json value")
        )
    }

    fn mapping_reply(&self, prompt: &str, leaves: &[IndexedLeaf]) -> String {
        let ops = operators_line(prompt);
        let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
        for op in &ops {
            if let Some(label) = leaf_for_operator(op).map(|l| PHRASES[l - 1].0) {
                if let Some(leaf) = leaves.iter().find(|l| l.l3.eq_ignore_ascii_case(label)) {
                    *tally.entry(leaf.id).or_insert(0) += 1;
                }
            }
        }
        let best = tally
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(id, _)| *id)
            .unwrap_or_else(|| leaves[self.pick(leaves.len(), &[prompt, "fallback"])].id);
        let chosen = if self.unit(&[prompt, "accuracy"]) < self.options.accuracy {
            best
        } else {
            let b = leaves.iter().find(|l| l.id == best).expect("best is listed");
            let siblings: Vec<&IndexedLeaf> = leaves.iter().filter(|l| l.id != best && l.l2 == b.l2 && l.l1 == b.l1).collect();
            if !siblings.is_empty() && self.unit(&[prompt, "sibling"]) < 0.6 {
                siblings[self.pick(siblings.len(), &[prompt, "which"])].id
            } else {
                leaves[self.pick(leaves.len(), &[prompt, "any"])].id
            }
        };
        if self.unit(&[prompt, "garbage"]) < self.options.garbage_rate {
            return "I am not certain which function applies here, possibly banana.".into();
        }
        let leaf = leaves.iter().find(|l| l.id == chosen).expect("chosen is listed");
        match self.pick(10, &[prompt, "format"]) {
            0..=4 => leaf.id.to_string(),
            5 | 6 => format!("{} > {} > {}", leaf.l1, leaf.l2, leaf.l3),
            7 => format!("The operator combination best matches leaf {}.", leaf.id),
            _ => misspell(&leaf.l3, self.pick(leaf.l3.len().max(1), &[prompt, "typo"])),
        }
    }
}

struct IndexedLeaf {
    id: usize,
    l1: String,
    l2: String,
    l3: String,
}

/// Lines of the form `id | l1 > l2 > l3`.
fn index_lines(prompt: &str) -> Vec<IndexedLeaf> {
    prompt
        .lines()
        .filter_map(|line| {
            let (id, path) = line.split_once('|')?;
            let id = id.trim().parse().ok()?;
            let parts: Vec<&str> = path.split('>').map(str::trim).collect();
            (parts.len() == 3).then(|| IndexedLeaf {
                id,
                l1: parts[0].to_string(),
                l2: parts[1].to_string(),
                l3: parts[2].to_string(),
            })
        })
        .collect()
}

fn operators_line(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .find_map(|l| l.trim().strip_prefix("Operators:"))
        .map(|rest| rest.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        .unwrap_or_default()
}

fn misspell(label: &str, at: usize) -> String {
    let chars: Vec<char> = label.chars().collect();
    let at = at.min(chars.len().saturating_sub(1));
    chars.iter().enumerate().filter(|(i, _)| *i != at).map(|(_, c)| c).collect()
}

fn dominant(leaves: &[usize]) -> Option<usize> {
    let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
    for l in leaves {
        *tally.entry(*l).or_insert(0) += 1;
    }
    tally.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(l, _)| l)
}

/// Leaf id (1..=21 of the default framework) most associated with an operator.
fn leaf_for_operator(op: &str) -> Option<usize> {
    let bare = op.rsplit('.').next().unwrap_or(op);
    KEYWORDS
        .iter()
        .find(|(_, names)| names.iter().any(|n| *n == op || *n == bare))
        .map(|(leaf, _)| *leaf)
}

const KEYWORDS: &[(usize, &[&str])] = &[
    (1, &["ee.ImageCollection", "ee.Image", "ee.FeatureCollection", "ee.Geometry", "Point", "Rectangle", "Polygon", "ee.List", "ee.Number", "ee.Date", "ee.Dictionary", "get", "load"]),
    (2, &["filterDate", "filterBounds", "filter", "filterMetadata", "eq", "lte", "limit", "sort", "first"]),
    (3, &["mosaic", "qualityMosaic", "blend", "composite", "median"]),
    (4, &["clip", "clipToCollection", "clipToBoundsAndScale"]),
    (5, &["updateMask", "mask", "unmask", "bitwiseAnd", "selfMask"]),
    (6, &["multiply", "add", "subtract", "divide", "cloudScore", "simpleCloudScore", "map"]),
    (7, &["select", "addBands", "rename", "bandNames"]),
    (8, &["unitScale", "normalize", "toFloat"]),
    (9, &["area", "pixelArea", "ee.Number.area"]),
    (10, &["normalizedDifference", "expression", "ndvi"]),
    (11, &["reduceRegion", "reduceRegions", "reduce", "mean", "sum", "stdDev", "minMax", "count", "histogram"]),
    (12, &["gt", "gte", "lt", "where", "and", "or", "not"]),
    (13, &["buffer", "distance", "fastDistanceTransform"]),
    (14, &["connectedComponents", "connectedPixelCount", "reduceConnectedComponents"]),
    (15, &["wekaKMeans", "cluster", "ee.Clusterer"]),
    (16, &["classify", "train", "smileRandomForest", "smileCart", "sampleRegions", "randomColumn", "errorMatrix"]),
    (17, &["focal_mean", "focal_median", "focalMean", "focalMedian", "convolve", "focal_max", "focal_min"]),
    (18, &["resample", "reproject", "reduceResolution"]),
    (19, &["toInt", "toByte", "toArray", "reduceToVectors", "int", "uint8", "format"]),
    (20, &["ui.Chart", "series", "setOptions", "addLayer", "centerObject", "setCenter"]),
    (21, &["toDrive", "toAsset", "toCloudStorage", "Export"]),
];

/// Leaf label and step phrasings, indexed by leaf id - 1.
const PHRASES: &[(&str, &[&str])] = &[
    ("Data Import", &["Load the image collection for the study area", "Import the satellite imagery dataset", "Read the input imagery and vector data"]),
    ("Data Filtering", &["Filter the collection by date and region", "Select images within the time window and bounds", "Restrict the dataset to the region of interest"]),
    ("Image Mosaicking and Blend", &["Mosaic the images into a single composite", "Create a median composite of the collection", "Blend overlapping scenes into one mosaic"]),
    ("Clip Images", &["Clip the image to the region boundary", "Cut the imagery to the study area extent", "Clip each image to the geometry"]),
    ("Image Masking", &["Mask clouds and invalid pixels", "Apply the quality mask to the image", "Remove masked pixels using the bit flags"]),
    ("Image Correction", &["Apply scale factors to correct reflectance", "Correct the pixel values with band arithmetic", "Perform radiometric correction of the bands"]),
    ("Image Band Manipulation", &["Select and rename the spectral bands", "Add the derived band to the image", "Combine bands into a multiband image"]),
    ("Normalization of Results", &["Normalize the values to a unit scale", "Rescale the result to the range zero to one", "Convert the band values to normalized floats"]),
    ("Area Calculation", &["Calculate the area of the pixels", "Compute the total area in square kilometers", "Multiply by pixel area to derive coverage"]),
    ("Image Index Calculation", &["Calculate the NDVI vegetation index", "Compute the normalized difference index", "Derive a spectral index from two bands"]),
    ("Feature Calculation", &["Compute regional statistics with a reducer", "Reduce the image over the region to get the mean", "Summarize pixel values for each feature"]),
    ("Threshold Application", &["Apply a threshold to classify pixels", "Keep pixels greater than the threshold value", "Create a binary mask from the threshold"]),
    ("Buffer Analysis", &["Create a buffer around the features", "Compute the distance buffer zone", "Expand the geometry by a buffer distance"]),
    ("Analysis of Unicom Zone", &["Identify connected pixel regions", "Label the connected components of the mask", "Count connected pixels in each patch"]),
    ("Cluster Analysis", &["Cluster the pixels with k-means", "Run unsupervised clustering on the samples", "Group pixels into spectral clusters"]),
    ("Classification and Machine Learning", &["Train a random forest classifier", "Classify the image with the trained model", "Sample training regions for supervised classification"]),
    ("Smoothing Results", &["Smooth the result with a focal filter", "Apply a moving window mean filter", "Reduce noise with a convolution kernel"]),
    ("Resampling Results", &["Resample the image to a coarser resolution", "Reproject the result to the target projection", "Aggregate pixels to a lower resolution"]),
    ("Data Conversion", &["Convert the image to integer type", "Convert raster regions to vectors", "Change the data type of the output"]),
    ("Chart Visualization", &["Display the result on the map", "Plot a time series chart of the values", "Visualize the layer with a color palette"]),
    ("Export Data", &["Export the result to Google Drive", "Export the image as an asset", "Save the output table to cloud storage"]),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::GatewayProfile;

    fn responder(name: &str) -> MockResponder {
        MockResponder::new(&GatewayProfile::mock(name)).unwrap()
    }

    #[test]
    fn tables_cover_every_leaf() {
        assert_eq!(PHRASES.len(), 21);
        let mut ids: Vec<usize> = KEYWORDS.iter().map(|(l, _)| *l).collect();
        ids.dedup();
        assert_eq!(ids, (1..=21).collect::<Vec<_>>());
    }

    #[test]
    fn keyword_lookup_uses_qualified_then_bare_name() {
        assert_eq!(leaf_for_operator("ee.ImageCollection"), Some(1));
        assert_eq!(leaf_for_operator("normalizedDifference"), Some(10));
        assert_eq!(leaf_for_operator("ee.Classifier.smileRandomForest"), Some(16));
        assert_eq!(leaf_for_operator("print"), None);
    }

    #[test]
    fn mapping_reply_names_a_listed_leaf() {
        let prompt = "1 | A > B > Data Import\n2 | A > B > Data Filtering\nOperators: filterDate, filterBounds\nRound 1 of 5.";
        let r = responder("m");
        let reply = r.respond(prompt).unwrap();
        assert_eq!(reply, r.respond(prompt).unwrap());
        assert!(!reply.is_empty());
    }

    #[test]
    fn different_profiles_can_differ() {
        let prompt = "1 | A > B > Data Import\n2 | A > B > Data Filtering\n3 | A > C > Clip Images\nOperators: clip";
        let replies: std::collections::BTreeSet<String> = (0..20)
            .map(|i| responder(&format!("p{i}")).respond(&format!("{prompt}\nRound {i}")).unwrap())
            .collect();
        assert!(replies.len() > 1);
    }

    #[test]
    fn misspell_drops_one_char() {
        assert_eq!(misspell("Clip Images", 3), "Cli Images");
        assert_eq!(misspell("", 0), "");
    }
}
