use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use super::{NodeSpec, ScenarioTree, TreeError};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    horizon: usize,
    series_names: Vec<String>,
    nodes: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: usize,
    #[serde(deserialize_with = "required_nullable")]
    parent: Option<usize>,
    stage: usize,
    #[serde(deserialize_with = "decimal")]
    prob_conditional: String,
    realization: BTreeMap<String, f64>,
}

// A plain `Option` field would silently accept a missing key.
fn required_nullable<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
    Option::<usize>::deserialize(d)
}

fn decimal<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    let s = String::deserialize(d)?;
    s.parse::<f64>()
        .map_err(|_| serde::de::Error::custom(format!("prob_conditional {s:?} is not a decimal number")))?;
    Ok(s)
}

impl ScenarioTree {
    pub fn to_json(&self) -> String {
        let file = TreeFile {
            horizon: self.horizon,
            series_names: self.series_names.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    parent: n.parent,
                    stage: n.stage,
                    prob_conditional: n.prob_conditional.to_string(),
                    realization: self.series_names.iter().cloned().zip(n.realization.iter().copied()).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("tree serializes");
        s.push('\n');
        s
    }

    /// Parses the JSON tree format. Schema problems are errors; probability and
    /// stage inconsistencies load fine and show up in [`ScenarioTree::validate`].
    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let file: TreeFile = serde_json::from_str(text).map_err(|e| TreeError::Schema {
            context: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let mut specs = Vec::with_capacity(file.nodes.len());
        for (pos, rec) in file.nodes.into_iter().enumerate() {
            let context = format!("nodes[{pos}]");
            if rec.id != pos {
                return Err(TreeError::Schema {
                    context,
                    message: format!("id {} out of order; ids must be 0..S-1 in sequence", rec.id),
                });
            }
            if let Some(extra) = rec.realization.keys().find(|k| !file.series_names.contains(k)) {
                return Err(TreeError::Schema {
                    context: format!("{context}.realization"),
                    message: format!("unknown series {extra:?}"),
                });
            }
            let mut realization = Vec::with_capacity(file.series_names.len());
            for name in &file.series_names {
                match rec.realization.get(name) {
                    Some(&v) => realization.push(v),
                    None => {
                        return Err(TreeError::Schema {
                            context: format!("{context}.realization"),
                            message: format!("missing series {name:?}"),
                        })
                    }
                }
            }
            specs.push(NodeSpec {
                parent: rec.parent,
                stage: rec.stage,
                prob_conditional: rec.prob_conditional.parse().expect("checked while parsing"),
                realization,
            });
        }
        Self::from_nodes(file.horizon, file.series_names, specs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TreeError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| TreeError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TreeError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TreeError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text).map_err(|e| match e {
            TreeError::Schema { context, message } => {
                TreeError::Schema { context: format!("{}: {context}", path.display()), message }
            }
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::small_tree;
    use super::super::{generate_synthetic, SyntheticParams};
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let t = small_tree();
        assert_eq!(ScenarioTree::from_json(&t.to_json()).unwrap(), t);

        let g = generate_synthetic(&[3, 3, 2], &SyntheticParams::default(), 9).unwrap();
        let back = ScenarioTree::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        for (a, b) in back.nodes().iter().zip(g.nodes()) {
            assert_eq!(a.prob_conditional.to_bits(), b.prob_conditional.to_bits());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.json");
        let t = small_tree();
        t.save(&path).unwrap();
        assert_eq!(ScenarioTree::load(&path).unwrap(), t);
    }

    const BAD_SIBLINGS: &str = r#"{
      "horizon": 1, "series_names": [],
      "nodes": [
        {"id": 0, "parent": null, "stage": 0, "prob_conditional": "1", "realization": {}},
        {"id": 1, "parent": 0, "stage": 1, "prob_conditional": "0.6", "realization": {}},
        {"id": 2, "parent": 0, "stage": 1, "prob_conditional": "0.6", "realization": {}}
      ]}"#;

    #[test]
    fn bad_sibling_mass_loads_but_fails_validation() {
        let t = ScenarioTree::from_json(BAD_SIBLINGS).unwrap();
        let v = t.validate();
        assert!(v.iter().any(|x| x.node == Some(0)));
    }

    #[test]
    fn missing_parent_is_a_schema_error() {
        let text = BAD_SIBLINGS.replace(r#""parent": 0, "#, "");
        match ScenarioTree::from_json(&text) {
            Err(TreeError::Schema { context, message }) => {
                assert!(message.contains("parent"), "{message}");
                assert!(context.starts_with("line"), "{context}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn numeric_probability_is_a_schema_error() {
        let text = BAD_SIBLINGS.replace(r#""0.6""#, "0.6");
        assert!(matches!(ScenarioTree::from_json(&text), Err(TreeError::Schema { .. })));
    }
}
