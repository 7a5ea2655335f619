//! Versioned JSON model files.
//!
//! Layout (version 1):
//!
//! ```text
//! {
//!   "format": "smoothrf-model",
//!   "version": 1,
//!   "metadata": { n_features, feature_names, target_name, n_training_rows,
//!                 tree_params, seed, calibration, family, noise, oob_rss },
//!   "noise_variance": <f64>,
//!   "trees": [ { "nodes": [ {"split": {feature, threshold, left, right}}
//!                           | {"leaf": <leaf index>} ],
//!                "leaves": [ {lower, upper, constant} ],   // null = ±infinity
//!                "in_bag": [..], "oob": [..],
//!                "smoothing": { kernel: {family, lambda}, beta0, beta1 } } ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! reloaded model predicts bit-identically.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelMetadata, SmoothedForestModel};
use crate::smooth::SmoothingParams;
use crate::tree::{FittedTree, LeafRegion, Node};
use crate::{Error, Result};

pub const FORMAT_NAME: &str = "smoothrf-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    format: String,
    version: u32,
    metadata: ModelMetadata,
    noise_variance: f64,
    trees: Vec<TreeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeRecord {
    nodes: Vec<NodeRecord>,
    leaves: Vec<LeafRecord>,
    in_bag: Vec<usize>,
    oob: Vec<usize>,
    smoothing: SmoothingParams,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NodeRecord {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafRecord {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    constant: f64,
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&Node> for NodeRecord {
    fn from(n: &Node) -> Self {
        match *n {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => NodeRecord::Split {
                feature,
                threshold,
                left,
                right,
            },
            Node::Leaf { leaf } => NodeRecord::Leaf(leaf),
        }
    }
}

impl From<NodeRecord> for Node {
    fn from(n: NodeRecord) -> Self {
        match n {
            NodeRecord::Split {
                feature,
                threshold,
                left,
                right,
            } => Node::Split {
                feature,
                threshold,
                left,
                right,
            },
            NodeRecord::Leaf(leaf) => Node::Leaf { leaf },
        }
    }
}

pub fn write_model<W: Write>(model: &SmoothedForestModel, writer: W) -> Result<()> {
    let record = ModelRecord {
        format: FORMAT_NAME.to_owned(),
        version: FORMAT_VERSION,
        metadata: model.metadata.clone(),
        noise_variance: model.noise_variance,
        trees: model
            .trees
            .iter()
            .zip(&model.smoothing)
            .map(|(t, s)| TreeRecord {
                nodes: t.nodes().iter().map(NodeRecord::from).collect(),
                leaves: t
                    .leaves()
                    .iter()
                    .map(|l| LeafRecord {
                        lower: l.lower.iter().copied().map(finite_or_null).collect(),
                        upper: l.upper.iter().copied().map(finite_or_null).collect(),
                        constant: l.constant,
                    })
                    .collect(),
                in_bag: t.in_bag().to_vec(),
                oob: t.oob().to_vec(),
                smoothing: *s,
            })
            .collect(),
    };
    serde_json::to_writer(writer, &record).map_err(|e| Error::Malformed(e.to_string()))
}

pub fn read_model<R: Read>(mut reader: R) -> Result<SmoothedForestModel> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Malformed(e.to_string()))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| Error::Malformed(e.to_string()))?;
    if header.format != FORMAT_NAME {
        return Err(Error::Malformed(format!(
            "not a {FORMAT_NAME} file (format '{}')",
            header.format
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: FORMAT_VERSION,
        });
    }
    let record: ModelRecord =
        serde_json::from_str(&text).map_err(|e| Error::Malformed(e.to_string()))?;

    let p = record.metadata.n_features;
    let mut trees = Vec::with_capacity(record.trees.len());
    let mut smoothing = Vec::with_capacity(record.trees.len());
    for (t, tr) in record.trees.into_iter().enumerate() {
        let leaves = tr
            .leaves
            .into_iter()
            .map(|l| LeafRegion {
                lower: l
                    .lower
                    .into_iter()
                    .map(|v| v.unwrap_or(f64::NEG_INFINITY))
                    .collect(),
                upper: l
                    .upper
                    .into_iter()
                    .map(|v| v.unwrap_or(f64::INFINITY))
                    .collect(),
                constant: l.constant,
            })
            .collect();
        let nodes = tr.nodes.into_iter().map(Node::from).collect();
        let tree = FittedTree::from_parts(p, nodes, leaves, tr.in_bag, tr.oob)
            .map_err(|e| Error::Malformed(format!("tree {t}: {e}")))?;
        trees.push(tree);
        smoothing.push(tr.smoothing);
    }
    SmoothedForestModel::new(trees, smoothing, record.noise_variance, record.metadata)
        .map_err(|e| Error::Malformed(e.to_string()))
}

pub fn save_model(model: &SmoothedForestModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_model(model, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SmoothedForestModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(file))
}

impl SmoothedForestModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_model(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::LambdaSearchSpec;
    use crate::data::make_hetero_data_with;
    use crate::data::HeteroSpec;
    use crate::ensemble::ForestConfig;
    use crate::seed;
    use rand::Rng as _;

    fn model() -> SmoothedForestModel {
        let d = make_hetero_data_with(
            150,
            HeteroSpec {
                dims: 2,
                noise_sd: 0.1,
            },
            8,
        )
        .unwrap()
        .dataset;
        let cfg = ForestConfig {
            n_trees: 12,
            search: Some(LambdaSearchSpec::new(1e-3, 1.0, 5).unwrap()),
            ..ForestConfig::default()
        };
        SmoothedForestModel::fit(&d, &cfg).unwrap()
    }

    fn to_string(m: &SmoothedForestModel) -> String {
        let mut buf = Vec::new();
        write_model(m, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let text = to_string(&m);
        let back = read_model(text.as_bytes()).unwrap();
        assert_eq!(back, m);
        let mut rng = seed::rng(3);
        for _ in 0..100 {
            let x = [rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
            let (a, b) = (m.uncertainty(&x), back.uncertainty(&x));
            assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            assert_eq!(a.variance.to_bits(), b.variance.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_malformed() {
        let text = to_string(&model());
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            read_model(cut.as_bytes()),
            Err(Error::Malformed(_))
        ));
        assert!(matches!(read_model(&b""[..]), Err(Error::Malformed(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let text = to_string(&model()).replacen("\"version\":1", "\"version\":7", 1);
        match read_model(text.as_bytes()) {
            Err(
                e @ Error::VersionMismatch {
                    found: 7,
                    expected: 1,
                },
            ) => {
                let msg = e.to_string();
                assert!(msg.contains('7') && msg.contains('1'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_tree_is_malformed() {
        let text = to_string(&model());
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut v2 = v.clone();
        v2["trees"][0]["leaves"][0]["constant"] = serde_json::Value::Null;
        assert!(read_model(v2.to_string().as_bytes()).is_err());
        let mut v3 = v;
        v3["format"] = "something-else".into();
        assert!(matches!(
            read_model(v3.to_string().as_bytes()),
            Err(Error::Malformed(_))
        ));
    }
}
