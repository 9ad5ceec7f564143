//! Gateway configuration. A canonical JSON document; `LER_CONFIG` names the
//! file when `--config` is not given.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ler_core::enclave::DerivationPolicy;
use ler_core::matching::Combiner;
use ler_core::protocol::ReleaseMode;
use ler_core::skills::{
    EmbeddingProvider, HashingEmbedder, RemoteEmbedder, SkillTaxonomy, WeightConfig,
    DEFAULT_DIMENSION,
};
use serde::{Deserialize, Serialize};

use crate::GatewayError;

pub const CONFIG_ENV: &str = "LER_CONFIG";
pub const DEFAULT_BIND: &str = "127.0.0.1:8700";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedding {
    pub endpoint: String,
    pub model: String,
    pub dimension: usize,
}

/// Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Keys, wallet, status lists and enclave state live here.
    pub data_dir: PathBuf,
    /// Shared DID document directory. Defaults to `<data_dir>/registry`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer_key: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_key: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_key: Option<PathBuf>,
    /// Tab-separated taxonomy. The bundled sample when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    /// Hex measurements, one per line. The local enclave when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowlist: Option<PathBuf>,
    /// Hex enclave attestation public keys, one per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust_anchor: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<RemoteEmbedding>,
    pub bind: String,
    pub freshness_window: u64,
    pub attestation_max_age: u64,
    pub nonce_ttl: u64,
    pub threshold: f64,
    pub top_k: usize,
    pub weights: WeightConfig,
    #[serde(default)]
    pub combiner: Combiner,
    #[serde(default)]
    pub release: ReleaseMode,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("ler-data"),
            registry_dir: None,
            issuer_key: None,
            holder_key: None,
            verifier_key: None,
            taxonomy: None,
            allowlist: None,
            trust_anchor: None,
            embedding: None,
            bind: DEFAULT_BIND.to_string(),
            freshness_window: ler_core::protocol::DEFAULT_FRESHNESS_WINDOW,
            attestation_max_age: ler_core::protocol::DEFAULT_ATTESTATION_MAX_AGE,
            nonce_ttl: ler_core::protocol::DEFAULT_NONCE_TTL,
            threshold: 0.5,
            top_k: 10,
            weights: WeightConfig::default(),
            combiner: Combiner::default(),
            release: ReleaseMode::default(),
        }
    }
}

impl Config {
    /// Loads `explicit`, else the file named by `LER_CONFIG`, else defaults
    /// rooted at `./ler-data`. Relative paths resolve against the file's
    /// directory.
    pub fn load(explicit: Option<&Path>) -> Result<Self, GatewayError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let Some(path) = explicit.map(Path::to_path_buf).or(from_env) else {
            let c = Config::default();
            c.validate()?;
            return Ok(c);
        };
        let text = fs::read(&path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let mut c: Config = serde_json::from_slice(&text)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            c.rebase(base);
        }
        c.validate()?;
        Ok(c)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        for p in [
            &mut self.registry_dir,
            &mut self.issuer_key,
            &mut self.holder_key,
            &mut self.verifier_key,
            &mut self.taxonomy,
            &mut self.allowlist,
            &mut self.trust_anchor,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::Config(m.to_string()));
        if self.freshness_window == 0 {
            return bad("freshness_window must be positive");
        }
        if self.nonce_ttl == 0 {
            return bad("nonce_ttl must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        self.weights
            .validate()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        for p in [
            &self.issuer_key,
            &self.holder_key,
            &self.verifier_key,
            &self.taxonomy,
            &self.allowlist,
            &self.trust_anchor,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(GatewayError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn registry_dir(&self) -> PathBuf {
        self.registry_dir
            .clone()
            .unwrap_or_else(|| self.data_dir.join("registry"))
    }

    pub fn provider(&self) -> Arc<dyn EmbeddingProvider> {
        match &self.embedding {
            Some(r) => Arc::new(RemoteEmbedder::new(&r.endpoint, &r.model, r.dimension)),
            None => Arc::new(HashingEmbedder::new(DEFAULT_DIMENSION)),
        }
    }

    pub fn taxonomy(&self) -> Result<SkillTaxonomy, GatewayError> {
        match &self.taxonomy {
            Some(p) => Ok(SkillTaxonomy::from_tsv(&fs::read_to_string(p)?)?),
            None => Ok(SkillTaxonomy::sample()),
        }
    }

    pub fn derivation_policy(&self, taxonomy: &SkillTaxonomy, provider: &dyn EmbeddingProvider) -> DerivationPolicy {
        DerivationPolicy {
            weights: self.weights.clone(),
            top_k: self.top_k,
            combiner: self.combiner,
            ..DerivationPolicy::new(taxonomy, provider)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn bounds_are_enforced() {
        let c = Config {
            threshold: 1.5,
            ..Config::default()
        };
        assert!(c.validate().is_err());
        let c = Config {
            top_k: 0,
            ..Config::default()
        };
        assert!(c.validate().is_err());
        let c = Config {
            freshness_window: 0,
            ..Config::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_referenced_path_fails() {
        let c = Config {
            allowlist: Some(PathBuf::from("/nonexistent/allowlist.txt")),
            ..Config::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_documents_fill_in_defaults() {
        let c: Config = serde_json::from_str(r#"{"top_k":5}"#).unwrap();
        assert_eq!(c.top_k, 5);
        assert_eq!(c.freshness_window, Config::default().freshness_window);
        assert!(serde_json::from_str::<Config>(r#"{"topk":5}"#).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ler.json");
        let c = Config {
            data_dir: PathBuf::from("state"),
            ..Config::default()
        };
        fs::write(&path, serde_json::to_vec(&c).unwrap()).unwrap();
        let loaded = Config::load(Some(&path)).unwrap();
        assert_eq!(loaded.data_dir, dir.path().join("state"));
    }
}
