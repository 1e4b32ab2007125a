//! Run configuration, read from a TOML file and overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use qfs_forge_core::annotate::{AnnotatorConfig, FailurePolicy};
use qfs_forge_core::backend::{
    CompletionBackend, CompletionParams, HttpBackend, MockBackend, API_KEY_ENV,
};
use qfs_forge_core::compose::CompositionConfig;
use qfs_forge_core::corpus::{Domain, QueryMode};
use qfs_forge_core::promptgen::{ExampleFixture, PromptSet, PromptSpec, SectionLabels};
use qfs_forge_core::unify::{QueryFormat, TemplateStyle};
use serde::Deserialize;

/// A problem with the configuration itself, reported before any work starts.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    #[default]
    Mock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    /// Mock script file.
    pub script: Option<PathBuf>,
    pub seed: Option<u64>,
    pub timeout_secs: u64,
    pub backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            script: None,
            seed: None,
            timeout_secs: 120,
            backoff_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub retries: u32,
    pub policy: FailurePolicy,
    /// Largest tolerated share of failed pairs, in [0, 1].
    pub failure_ceiling: f64,
    pub max_prompt_tokens: usize,
    pub params: CompletionParams,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        let a = AnnotatorConfig::default();
        Self {
            retries: a.retries,
            policy: a.policy,
            failure_ceiling: 0.0,
            max_prompt_tokens: a.max_prompt_tokens,
            params: a.params,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub instruction: Option<String>,
    pub labels: Option<SectionLabels>,
    pub news_example: Option<PathBuf>,
    pub dialogue_example: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnifyMethod {
    #[default]
    Generated,
    Template,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnifySection {
    pub format: QueryFormat,
    pub method: UnifyMethod,
    /// Template style; inferred from the format when unset.
    pub style: Option<TemplateStyle>,
    /// Which built-in example the generator prompt uses.
    pub domain: Option<Domain>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub failures: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub references: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<QueryMode>,
    pub parallelism: Option<usize>,
    pub backend: BackendConfig,
    pub annotate: AnnotateSection,
    pub prompt: PromptSection,
    pub compose: CompositionConfig,
    pub unify: UnifySection,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    /// Applies the global flags on top of the file.
    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        parallelism: Option<usize>,
    ) -> anyhow::Result<Self> {
        if seed.is_some() {
            self.backend.seed = seed;
        }
        if parallelism.is_some() {
            self.parallelism = parallelism;
        }
        if self.parallelism == Some(0) {
            return Err(config_err("parallelism must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.annotate.failure_ceiling) {
            return Err(config_err("annotate.failure_ceiling must be within [0, 1]"));
        }
        self.compose
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        Ok(self)
    }

    pub fn mode(&self) -> QueryMode {
        self.mode.unwrap_or(QueryMode::Wh)
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn annotator(&self) -> AnnotatorConfig {
        AnnotatorConfig {
            retries: self.annotate.retries,
            policy: self.annotate.policy,
            params: self.annotate.params.clone(),
            max_prompt_tokens: self.annotate.max_prompt_tokens,
        }
    }

    pub fn prompt_spec(&self, domain: Domain, mode: QueryMode) -> anyhow::Result<PromptSpec> {
        let example = match domain {
            Domain::News => &self.prompt.news_example,
            Domain::Dialogue => &self.prompt.dialogue_example,
        };
        let mut spec = match example {
            Some(path) => {
                let fixture = ExampleFixture::load(path).map_err(|e| config_err(e.to_string()))?;
                if fixture.domain != domain {
                    return Err(config_err(format!(
                        "{} holds a {} example but is configured for {domain}",
                        path.display(),
                        fixture.domain
                    )));
                }
                PromptSpec::new(
                    fixture
                        .for_mode(mode)
                        .map_err(|e| config_err(e.to_string()))?,
                )
            }
            None => PromptSpec::builtin(domain, mode),
        };
        if let Some(instruction) = &self.prompt.instruction {
            spec = spec.with_instruction(instruction.clone());
        }
        if let Some(labels) = &self.prompt.labels {
            spec = spec.with_labels(labels.clone());
        }
        Ok(spec)
    }

    pub fn prompt_set(&self) -> anyhow::Result<PromptSet> {
        let mode = self.mode();
        PromptSet::new(
            self.prompt_spec(Domain::News, mode)?,
            self.prompt_spec(Domain::Dialogue, mode)?,
        )
        .map_err(|e| config_err(e.to_string()))
    }

    /// Builds the configured backend. Every check happens here, before any
    /// request is sent.
    pub fn backend(&self) -> anyhow::Result<Box<dyn CompletionBackend>> {
        let b = &self.backend;
        match b.kind {
            BackendKind::Live => {
                let endpoint = b
                    .endpoint
                    .as_deref()
                    .filter(|e| !e.trim().is_empty())
                    .ok_or_else(|| config_err("live backend needs backend.endpoint"))?;
                let key = std::env::var(API_KEY_ENV)
                    .ok()
                    .filter(|k| !k.trim().is_empty())
                    .ok_or_else(|| {
                        config_err(format!(
                            "live backend needs {API_KEY_ENV} in the environment"
                        ))
                    })?;
                let backend = HttpBackend::builder(endpoint)
                    .api_key(key)
                    .timeout(Duration::from_secs(b.timeout_secs))
                    .backoff_base(Duration::from_millis(b.backoff_ms))
                    .build();
                log::info!("backend: {}", backend.identity());
                Ok(Box::new(backend))
            }
            BackendKind::Mock => {
                let backend = match (&b.script, b.seed) {
                    (Some(path), seed) => {
                        let m = MockBackend::load(path).map_err(|e| {
                            config_err(format!("mock script {}: {e}", path.display()))
                        })?;
                        match seed {
                            Some(s) => m.with_seed(s),
                            None => m,
                        }
                    }
                    (None, Some(seed)) => MockBackend::synthetic(seed),
                    (None, None) => {
                        return Err(config_err("mock backend needs backend.script or a seed"))
                    }
                };
                log::info!("backend: {}", backend.identity());
                Ok(Box::new(backend))
            }
        }
    }

    pub fn template_style(&self) -> TemplateStyle {
        self.unify.style.unwrap_or(match self.unify.format {
            QueryFormat::Sentence | QueryFormat::Instruction => TemplateStyle::Duc,
            _ => TemplateStyle::Newts,
        })
    }
}
