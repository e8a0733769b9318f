//! JSON model files.
//!
//! ```json
//! {
//!   "variables": [{"name": "A", "levels": ["x", "y"]}, ...],
//!   "staging": [[0], [1, 1], ...],
//!   "theta": {"0": {"x": 0.4, "y": 0.6}, "1": {...}}
//! }
//! ```
//!
//! `staging[d][i]` is the stage id of the `i`-th situation at depth `d` in
//! breadth-first order. Ids are arbitrary non-negative integers on input and
//! canonical on output. `theta` is optional; every stage must list every
//! label of its florets.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trees::{build_event_tree, StagedTreeModel, Staging, Theta, VariableSpec};

/// Tolerance for stage distributions read from a file.
pub const FILE_PROB_TOL: f64 = 1e-9;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableEntry {
    name: String,
    levels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    variables: Vec<VariableEntry>,
    staging: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<IndexMap<String, IndexMap<String, f64>>>,
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { field: field.into(), message: message.into() }
}

pub fn model_from_json(text: &str) -> Result<StagedTreeModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    let spec = VariableSpec::new(
        file.variables.iter().map(|v| v.name.clone()).collect(),
        file.variables.iter().map(|v| v.levels.clone()).collect(),
    )
    .map_err(|e| schema("variables", e.to_string()))?;
    let tree = build_event_tree(&spec)?;

    if file.staging.len() != tree.num_depths() {
        return Err(schema(
            "staging",
            format!("{} depths listed, tree has {}", file.staging.len(), tree.num_depths()),
        ));
    }
    let mut assignment = vec![None; tree.num_vertices()];
    for (d, ids) in file.staging.iter().enumerate() {
        let sits = tree.situations_at_depth(d);
        if ids.len() != sits.len() {
            return Err(schema(
                format!("staging[{d}]"),
                format!("{} stage ids for {} situations", ids.len(), sits.len()),
            ));
        }
        for (&v, &id) in sits.iter().zip(ids) {
            assignment[v] = Some(id);
        }
    }
    let staging = Staging::from_assignment(&tree, &assignment).map_err(|e| schema("staging", e.to_string()))?;

    let theta = match file.theta {
        None => None,
        Some(entries) => {
            // file id of each canonical stage
            let mut file_id = vec![0usize; staging.num_stages()];
            for (d, ids) in file.staging.iter().enumerate() {
                for (&v, &id) in tree.situations_at_depth(d).iter().zip(ids) {
                    file_id[staging.stage_of(v).unwrap()] = id;
                }
            }
            let known: std::collections::HashSet<String> = file_id.iter().map(|i| i.to_string()).collect();
            if let Some(extra) = entries.keys().find(|k| !known.contains(*k)) {
                return Err(schema(format!("theta.{extra}"), "not a stage id used in `staging`"));
            }
            let mut probs = Vec::with_capacity(staging.num_stages());
            for (s, &fid) in file_id.iter().enumerate() {
                let key = fid.to_string();
                let dist = entries
                    .get(&key)
                    .ok_or_else(|| schema(format!("theta.{key}"), "missing distribution for stage"))?;
                let labels = tree.labels_of(staging.representative(s));
                if let Some(extra) = dist.keys().find(|l| !labels.contains(l)) {
                    return Err(schema(format!("theta.{key}.{extra}"), "label not on this stage's florets"));
                }
                let mut row = Vec::with_capacity(labels.len());
                for l in labels {
                    let p = dist
                        .get(l)
                        .ok_or_else(|| schema(format!("theta.{key}.{l}"), "missing probability"))?;
                    row.push(*p);
                }
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > FILE_PROB_TOL {
                    return Err(schema(
                        format!("theta.{key}"),
                        format!("probabilities must lie in [0, 1] and sum to 1 (sum is {sum})"),
                    ));
                }
                probs.push(row);
            }
            Some(Theta::new(&tree, &staging, probs, FILE_PROB_TOL)?)
        }
    };
    StagedTreeModel::new(tree, staging, theta)
}

pub fn model_to_json(model: &StagedTreeModel) -> Result<String> {
    let tree = &model.tree;
    let spec = tree
        .variables()
        .ok_or_else(|| Error::InvalidTree("only X-compatible trees can be saved".into()))?;
    let variables = (0..spec.len())
        .map(|d| VariableEntry { name: spec.name(d).to_string(), levels: spec.levels(d).to_vec() })
        .collect();
    let staging = (0..tree.num_depths())
        .map(|d| {
            tree.situations_at_depth(d)
                .iter()
                .map(|&v| model.staging.stage_of(v).unwrap())
                .collect()
        })
        .collect();
    let theta = model.theta.as_ref().map(|th| {
        (0..th.num_stages())
            .map(|s| {
                let labels = tree.labels_of(model.staging.representative(s));
                let dist = labels.iter().cloned().zip(th.stage(s).iter().copied()).collect();
                (s.to_string(), dist)
            })
            .collect()
    });
    let mut out = serde_json::to_string_pretty(&ModelFile { variables, staging, theta })?;
    out.push('\n');
    Ok(out)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StagedTreeModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_model(model: &StagedTreeModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

/// Generator models shipped with the library.
pub const BUILTIN_MODELS: [(&str, &str); 5] = [
    ("titanic", include_str!("../models/titanic.json")),
    ("chds", include_str!("../models/chds.json")),
    ("bank", include_str!("../models/bank.json")),
    ("lifequality", include_str!("../models/lifequality.json")),
    ("coronary", include_str!("../models/coronary.json")),
];

pub fn builtin_model(name: &str) -> Result<StagedTreeModel> {
    let (_, text) = BUILTIN_MODELS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("no built-in model named `{name}`")))?;
    model_from_json(text)
}

/// Loads `builtin:<name>` or a file path.
pub fn load_model_ref(reference: &str) -> Result<StagedTreeModel> {
    match reference.strip_prefix("builtin:") {
        Some(name) => builtin_model(name),
        None => load_model(reference),
    }
}

/// Short display name of a model reference: the built-in name or the file stem.
pub fn model_ref_name(reference: &str) -> String {
    match reference.strip_prefix("builtin:") {
        Some(name) => name.to_string(),
        None => Path::new(reference)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| reference.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "variables": [{"name": "A", "levels": ["x", "y"]}, {"name": "B", "levels": ["u", "v"]}],
        "staging": [[7], [3, 3]],
        "theta": {"7": {"x": 0.25, "y": 0.75}, "3": {"v": 0.9, "u": 0.1}}
    }"#;

    #[test]
    fn load_remaps_ids_and_labels() {
        let m = model_from_json(SMALL).unwrap();
        assert_eq!(m.staging.num_stages(), 2);
        let th = m.theta().unwrap();
        assert_eq!(th.stage(0), &[0.25, 0.75]);
        assert_eq!(th.stage(1), &[0.1, 0.9]);
    }

    #[test]
    fn save_load_round_trip() {
        let m = model_from_json(SMALL).unwrap();
        let text = model_to_json(&m).unwrap();
        let back = model_from_json(&text).unwrap();
        assert_eq!(back.tree, m.tree);
        assert_eq!(back.staging, m.staging);
        assert_eq!(back.theta, m.theta);
        assert_eq!(model_to_json(&back).unwrap(), text);
    }

    #[test]
    fn bad_sum_names_the_stage() {
        let bad = SMALL.replace("0.9", "0.87");
        match model_from_json(&bad) {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "theta.3"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_fields() {
        let missing_label = SMALL.replace(r#""u": 0.1"#, r#""w": 0.1"#);
        assert!(matches!(model_from_json(&missing_label), Err(Error::Schema { field, .. }) if field == "theta.3.w"));
        let short = SMALL.replace("[3, 3]", "[3]");
        assert!(matches!(model_from_json(&short), Err(Error::Schema { field, .. }) if field == "staging[1]"));
        let bad_merge = SMALL.replace("[7], [3, 3]", "[3], [3, 3]");
        assert!(matches!(model_from_json(&bad_merge), Err(Error::Schema { .. })));
        let err = model_from_json(r#"{"variables": []}"#).unwrap_err().to_string();
        assert!(err.contains("staging"), "{err}");
    }

    #[test]
    fn theta_is_optional() {
        let m = model_from_json(
            r#"{"variables": [{"name": "A", "levels": ["x", "y"]}], "staging": [[0]]}"#,
        )
        .unwrap();
        assert!(matches!(m.theta(), Err(Error::MissingTheta)));
        assert!(!model_to_json(&m).unwrap().contains("theta"));
    }

    #[test]
    fn builtin_shapes() {
        let expected = [("titanic", 4, 32, 13), ("chds", 4, 24, 7), ("bank", 4, 16, 8), ("lifequality", 5, 72, 17), ("coronary", 6, 64, 14)];
        for (name, vars, paths, stages) in expected {
            let m = builtin_model(name).unwrap();
            assert_eq!(m.tree.variables().unwrap().len(), vars, "{name}");
            assert_eq!(m.tree.num_paths(), paths, "{name}");
            assert_eq!(m.staging.num_stages(), stages, "{name}");
            assert!(m.theta().unwrap().as_slices().iter().flatten().all(|&p| p >= 0.1 - 1e-9));
            assert_eq!(model_from_json(&model_to_json(&m).unwrap()).unwrap().theta, m.theta);
        }
    }

    #[test]
    fn references() {
        assert_eq!(model_ref_name("builtin:bank"), "bank");
        assert_eq!(model_ref_name("/tmp/gen/m0.json"), "m0");
        assert!(load_model_ref("builtin:nope").is_err());
    }
}
