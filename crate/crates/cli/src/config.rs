//! Experiment configuration: a JSON document merged over built-in defaults,
//! then patched by `--set key=value` overrides.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use spm_core::{Grid, NoiseModel, NoiseSpec, Scheme, SolverConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub epsilon: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub scheme: Scheme,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub save_every: usize,
    pub clip_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub parameters: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: Grid,
    pub noise: NoiseSpec,
    pub solver: SolverSection,
    pub experiment: ExperimentSection,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: Grid::new(63).expect("positive size"),
            noise: NoiseSpec {
                k: 4,
                decay: 1.0,
                c: vec![2.0],
                profiles: spm_core::noise::PROFILE_FAMILY.to_string(),
            },
            solver: SolverSection {
                epsilon: 0.05,
                dt: 1e-3,
                t_end: 1.0,
                scheme: Scheme::Implicit,
                newton_tol: 1e-10,
                newton_max_iter: 50,
                save_every: 10,
                clip_radius: 4.0,
            },
            experiment: ExperimentSection {
                name: "default".into(),
                parameters: Map::new(),
            },
            seed: 42,
            output_dir: PathBuf::from("spm-output"),
        }
    }
}

/// Everything a run needs after validation.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub grid: Grid,
    pub model: NoiseModel,
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    /// Defaults, merged with the file at `path` (if any), then `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut root = serde_json::to_value(ExperimentConfig::default())
            .map_err(|e| CliError::Internal(e.to_string()))?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if !file.is_object() {
                return Err(CliError::Config(
                    "configuration must be a JSON object".into(),
                ));
            }
            merge(&mut root, file);
        }
        for item in overrides {
            apply_override(&mut root, item)?;
        }
        serde_json::from_value(root).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            epsilon: s.epsilon,
            dt: s.dt,
            t_end: s.t_end,
            scheme: s.scheme,
            newton_tol: s.newton_tol,
            newton_max_iter: s.newton_max_iter,
            save_every: s.save_every,
            seed: self.seed,
            clip_radius: s.clip_radius,
        }
    }

    /// Builds the noise model and checks the solver settings on the grid.
    pub fn resolve(self) -> Result<Resolved, CliError> {
        let grid = self.grid;
        let model = self.noise.build(&grid)?;
        let solver = self.solver_config();
        solver.validate(&grid)?;
        Ok(Resolved {
            config: self,
            grid,
            model,
            solver,
        })
    }

    /// Experiment parameters decoded into a suite-specific type. Missing keys
    /// take the type's defaults; unknown keys are rejected.
    pub fn parameters<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        serde_json::from_value(Value::Object(self.experiment.parameters.clone()))
            .map_err(|e| CliError::Config(format!("experiment.parameters: {e}")))
    }

    /// The configuration as embedded in artifacts: everything that can
    /// influence results. The output location is recorded in the manifest only.
    pub fn embedded(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
        }
        v
    }

    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(&self.embedded()).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Recursive merge of JSON objects; non-object values replace.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`. The value is read as JSON when it parses, and as a
/// string otherwise.
pub fn apply_override(root: &mut Value, item: &str) -> Result<(), CliError> {
    let (path, raw) = item.split_once('=').ok_or_else(|| {
        CliError::Config(format!("override `{item}` is not of the form key=value"))
    })?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!(
            "override `{item}` has an empty key"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let map = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!(
                "override `{item}`: `{key}` is not inside an object"
            ))
        })?;
        node = map
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    let map = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("override `{item}`: parent is not an object")))?;
    map.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_use_dotted_paths() {
        let mut v = json!({"solver": {"epsilon": 0.05}, "seed": 1});
        apply_override(&mut v, "solver.epsilon=0.1").unwrap();
        apply_override(&mut v, "noise.c=[2, 0.5]").unwrap();
        apply_override(&mut v, "experiment.name=sweep").unwrap();
        assert_eq!(v["solver"]["epsilon"], json!(0.1));
        assert_eq!(v["noise"]["c"], json!([2, 0.5]));
        assert_eq!(v["experiment"]["name"], json!("sweep"));
        assert!(apply_override(&mut v, "seed").is_err());
        assert!(apply_override(&mut v, "seed.x=1").is_err());
    }

    #[test]
    fn merge_keeps_unpatched_keys() {
        let mut base = json!({"a": {"b": 1, "c": 2}});
        merge(&mut base, json!({"a": {"c": 3}}));
        assert_eq!(base, json!({"a": {"b": 1, "c": 3}}));
    }

    #[test]
    fn defaults_round_trip_and_resolve() {
        let cfg = ExperimentConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let r = cfg.resolve().unwrap();
        assert_eq!(r.grid.n_interior(), 63);
        assert_eq!(r.solver.seed, 42);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = ExperimentConfig::load(None, &["solver.epsilonn=0.1".into()]).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.sha256(), b.sha256());
        b.seed += 1;
        assert_ne!(a.sha256(), b.sha256());
    }
}
