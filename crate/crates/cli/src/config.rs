//! Experiment configuration: one JSON document, dotted-path overrides, a content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use tempoflow_core::evaluate::PlaneSpec;
use tempoflow_core::mrsim::AcquisitionConfig;
use tempoflow_core::patch::{ExtractionConfig, PatchGeometry};
use tempoflow_core::phantom::{PhantomSampler, PhantomSpec};
use tempoflow_core::recon::FistaConfig;
use tempoflow_core::srnet::TrainConfig;
use tempoflow_core::Grid4D;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("bad override `{0}`: expected dotted.path=value")]
    Override(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// mm
    pub dx: f64,
    pub nt_hr: usize,
    /// ms
    pub dt_hr: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nx: 48,
            ny: 48,
            nz: 24,
            dx: 1.5,
            nt_hr: 32,
            dt_hr: 20.0,
        }
    }
}

impl GridConfig {
    pub fn hr_grid(&self) -> tempoflow_core::Result<Grid4D> {
        Grid4D::new(self.nx, self.ny, self.nz, self.nt_hr, self.dx, self.dt_hr)
    }
}

/// Phantoms per split. A non-empty explicit list replaces sampling for that split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSetConfig {
    pub sampler: PhantomSampler,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub train: Vec<PhantomSpec>,
    pub val: Vec<PhantomSpec>,
    pub test: Vec<PhantomSpec>,
}

impl Default for PhantomSetConfig {
    fn default() -> Self {
        PhantomSetConfig {
            sampler: PhantomSampler::default(),
            n_train: 3,
            n_val: 1,
            n_test: 1,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub fista: FistaConfig,
    /// also reconstruct the full-rate k-space
    pub reconstruct_hr: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            fista: FistaConfig::default(),
            reconstruct_hr: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSetConfig {
    pub geometry: PatchGeometry,
    /// per training phantom
    pub train: ExtractionConfig,
    /// per validation or test phantom
    pub eval: ExtractionConfig,
}

impl Default for PatchSetConfig {
    fn default() -> Self {
        PatchSetConfig {
            geometry: PatchGeometry::default(),
            train: ExtractionConfig::default(),
            eval: ExtractionConfig {
                n_patches: 64,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// defaults to a slab across the middle of each test phantom's flow axis
    pub plane: Option<PlaneSpec>,
    /// voxels, for the automatic plane
    pub plane_thickness: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            plane: None,
            plane_thickness: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub phantoms: PhantomSetConfig,
    pub acquisition: AcquisitionConfig,
    pub recon: ReconConfig,
    pub patches: PatchSetConfig,
    pub training: TrainConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            grid: GridConfig::default(),
            phantoms: PhantomSetConfig::default(),
            acquisition: AcquisitionConfig::default(),
            recon: ReconConfig::default(),
            patches: PatchSetConfig::default(),
            training: TrainConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Read `path` (or start from defaults), apply `key=value` overrides, then an optional seed.
    pub fn load(
        path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
    ) -> Result<Self, ConfigError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                serde_json::from_str(&text)?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        if let Some(s) = seed {
            apply_override(&mut doc, &format!("seed={s}"))?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(doc.clone())?;
        if let Some(key) = unknown_keys(&doc, &serde_json::to_value(&cfg)?)
            .into_iter()
            .next()
        {
            return Err(ConfigError::UnknownKey(key));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: tempoflow_core::Error| ConfigError::Invalid(e.to_string());
        let grid = self.grid.hr_grid().map_err(inv)?;
        if grid.nt % 2 != 0 {
            return Err(ConfigError::Invalid(format!(
                "grid.nt_hr must be even, got {}",
                grid.nt
            )));
        }
        let p = &self.phantoms;
        let sampled = (p.train.is_empty() && p.n_train > 0)
            || (p.val.is_empty() && p.n_val > 0)
            || (p.test.is_empty() && p.n_test > 0);
        let cycle = grid.nt as f64 * grid.dt;
        if sampled && ((p.sampler.period - cycle) / cycle).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "phantoms.sampler.period {} ms differs from nt_hr*dt_hr = {cycle} ms",
                p.sampler.period
            )));
        }
        for spec in p.train.iter().chain(&p.val).chain(&p.test) {
            spec.validate().map_err(inv)?;
            if !spec.grid().same_spatial(&grid) {
                return Err(ConfigError::Invalid(
                    "explicit phantom grid differs from `grid`".into(),
                ));
            }
        }
        self.acquisition.validate().map_err(inv)?;
        self.recon.fista.validate().map_err(inv)?;
        self.patches.geometry.validate().map_err(inv)?;
        self.training.validate().map_err(inv)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding of the resolved config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Set the leaf at a dotted path. The value is parsed as JSON, falling back to a string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.into()))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for k in &keys[..keys.len() - 1] {
        if node.get(k).map_or(true, Value::is_null) {
            node.as_object_mut()
                .ok_or_else(|| ConfigError::Override(spec.into()))?
                .insert(k.to_string(), Value::Object(Default::default()));
        }
        node = node
            .get_mut(k)
            .filter(|n| n.is_object())
            .ok_or_else(|| ConfigError::Override(spec.into()))?;
    }
    node.as_object_mut()
        .ok_or_else(|| ConfigError::Override(spec.into()))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Dotted paths present in `given` but absent from the re-serialized config.
fn unknown_keys(given: &Value, resolved: &Value) -> Vec<String> {
    let mut out = Vec::new();
    walk(given, resolved, String::new(), &mut out);
    out
}

fn walk(given: &Value, resolved: &Value, prefix: String, out: &mut Vec<String>) {
    let (Some(g), Some(r)) = (given.as_object(), resolved.as_object()) else {
        return;
    };
    for (k, v) in g {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match r.get(k) {
            None => out.push(path),
            Some(rv) => walk(v, rv, path, out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_match_the_desk_experiment() {
        let c = ExperimentConfig::default();
        assert_eq!(
            (c.grid.nx, c.grid.ny, c.grid.nz, c.grid.nt_hr),
            (48, 48, 24, 32)
        );
        assert_eq!(c.grid.dt_hr, 20.0);
        assert_eq!(
            (c.phantoms.n_train, c.phantoms.n_val, c.phantoms.n_test),
            (3, 1, 1)
        );
        assert_eq!(c.acquisition.snr_db_range, Some((14.0, 17.0)));
        assert_eq!(c.acquisition.acceleration, 7.7);
        c.validate().unwrap();
    }

    #[test]
    fn overrides_set_nested_leaves() {
        let mut doc = json!({"acquisition": {"venc": 2.0}});
        apply_override(&mut doc, "acquisition.snr_db_range=[14,17]").unwrap();
        apply_override(&mut doc, "acquisition.coil_model=uniform").unwrap();
        apply_override(&mut doc, "training.network.filters=8").unwrap();
        assert_eq!(doc["acquisition"]["snr_db_range"], json!([14, 17]));
        assert_eq!(doc["acquisition"]["coil_model"], json!("uniform"));
        assert_eq!(doc["acquisition"]["venc"], json!(2.0));
        assert_eq!(doc["training"]["network"]["filters"], json!(8));
        let cfg: ExperimentConfig = serde_json::from_value(doc).unwrap();
        assert_eq!(cfg.training.network.filters, 8);
        assert!(apply_override(&mut json!({}), "novalue").is_err());
        assert!(apply_override(&mut json!({"a": 1}), "a.b=2").is_err());
        assert!(apply_override(&mut json!({}), "a..b=2").is_err());
    }

    #[test]
    fn unknown_nested_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"acquisition": {"vence": 1.0}}"#).unwrap();
        match ExperimentConfig::load(Some(&p), &[], None) {
            Err(ConfigError::UnknownKey(k)) => assert_eq!(k, "acquisition.vence"),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, r#"{"bogus": 1}"#).unwrap();
        assert!(ExperimentConfig::load(Some(&p), &[], None).is_err());
        std::fs::write(&p, "{not json").unwrap();
        assert!(matches!(
            ExperimentConfig::load(Some(&p), &[], None),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn hash_tracks_content_and_seed() {
        let a = ExperimentConfig::load(None, &[], Some(7)).unwrap();
        let b = ExperimentConfig::load(None, &["seed=7".into()], None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = ExperimentConfig::load(None, &[], Some(8)).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn mismatched_cycle_is_invalid() {
        let r = ExperimentConfig::load(None, &["grid.dt_hr=10".into()], None);
        assert!(matches!(r, Err(ConfigError::Invalid(_))));
        let r = ExperimentConfig::load(None, &["grid.nt_hr=31".into()], None);
        assert!(matches!(r, Err(ConfigError::Invalid(_))));
    }
}
