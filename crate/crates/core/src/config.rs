//! Run configuration files and the session they describe.
//!
//! A config file is one flat JSON object. Keys of [`RunConfig`] set the
//! optimizer parameters; the remaining keys name inputs and backends:
//!
//! | key | value |
//! |-----|-------|
//! | `image_archive` | `EMB1` archive of the optimization split (required) |
//! | `test_archive` | optional held-out split, evaluated at the end |
//! | `classes` | optional class list; defaults to the image archive's classes |
//! | `text_embedder` | `mock:<dim>`, `archive:<path>` or `command:<program> [args]` |
//! | `provider` | `replay:<path>` or `http` |
//! | `endpoint`, `model`, `api_key_env` | settings of the `http` provider |
//! | `prompt_dir` | optional directory of prompt template overrides |
//! | `out_dir` | output directory (default `out`) |
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::embed::{ArchiveEmbedder, EmbeddingArchive, ExternalEmbedder, MockEmbedder, TextEmbedder, TextEmbeddings};
use crate::error::{Error, Result};
use crate::evolution::{Optimizer, RunOutcome, RunOutputs, RunState};
use crate::llm::{LlmProvider, PromptBuilder, PromptTemplates, ProviderKind};
use crate::types::{ClassLabel, RunConfig};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderSpec {
    Mock(usize),
    Archive(PathBuf),
    Command(String),
}

impl EmbedderSpec {
    /// Parses `mock:<dim>`, `archive:<path>` or `command:<line>`; relative
    /// archive paths are joined to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let (kind, arg) = text
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("text embedder {text:?}: expected <mode>:<argument>")))?;
        match kind {
            "mock" => {
                let dim: usize = arg
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("mock dimension {arg:?} is not an integer")))?;
                if dim == 0 {
                    return Err(Error::Config("mock dimension must be positive".into()));
                }
                Ok(Self::Mock(dim))
            }
            "archive" => Ok(Self::Archive(base.join(arg))),
            "command" => Ok(Self::Command(arg.trim().to_string())),
            other => Err(Error::Config(format!("unknown text embedder mode {other:?}"))),
        }
    }

    /// The embedder plus an embedding cache pre-filled from a text archive.
    pub fn build(&self) -> Result<(Box<dyn TextEmbedder>, TextEmbeddings)> {
        Ok(match self {
            Self::Mock(dim) => (Box::new(MockEmbedder { dimension: *dim }), TextEmbeddings::new()),
            Self::Archive(path) => {
                let archive = EmbeddingArchive::read(path)?;
                (
                    Box::new(ArchiveEmbedder::new(&archive)),
                    TextEmbeddings::from_archive(&archive),
                )
            }
            Self::Command(line) => (
                Box::new(ExternalEmbedder::from_command_line(line)?),
                TextEmbeddings::new(),
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub run: RunConfig,
    pub image_archive: PathBuf,
    pub test_archive: Option<PathBuf>,
    pub classes: Option<Vec<ClassLabel>>,
    pub text_embedder: EmbedderSpec,
    pub provider: ProviderKind,
    pub prompt_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

const FILE_KEYS: &[&str] = &[
    "image_archive",
    "test_archive",
    "classes",
    "text_embedder",
    "provider",
    "endpoint",
    "model",
    "api_key_env",
    "prompt_dir",
    "out_dir",
];

fn take_string(map: &mut Map<String, Value>, key: &str) -> Result<Option<String>> {
    match map.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(Error::Config(format!("{key} must be a string, got {other}"))),
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        let Value::Object(mut map) = value else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let mut file_part = Map::new();
        for key in FILE_KEYS {
            if let Some(v) = map.remove(*key) {
                file_part.insert((*key).to_string(), v);
            }
        }
        let run: RunConfig =
            serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(format!("config: {e}")))?;

        let image_archive = take_string(&mut file_part, "image_archive")?
            .ok_or_else(|| Error::Config("image_archive is required".into()))?;
        let test_archive = take_string(&mut file_part, "test_archive")?;
        let classes = match file_part.remove("classes") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                serde_json::from_value::<Vec<ClassLabel>>(v)
                    .map_err(|e| Error::Config(format!("classes: {e}")))?,
            ),
        };
        let embedder = take_string(&mut file_part, "text_embedder")?
            .ok_or_else(|| Error::Config("text_embedder is required".into()))?;
        let provider = take_string(&mut file_part, "provider")?
            .ok_or_else(|| Error::Config("provider is required".into()))?;
        let endpoint = take_string(&mut file_part, "endpoint")?;
        let model = take_string(&mut file_part, "model")?;
        let api_key_env = take_string(&mut file_part, "api_key_env")?;
        let provider = match provider.split_once(':') {
            Some(("replay", path)) => ProviderKind::Replay(base.join(path)),
            None if provider == "http" => ProviderKind::Http {
                endpoint: endpoint.unwrap_or_else(|| DEFAULT_ENDPOINT.to_string()),
                model: model.unwrap_or_else(|| DEFAULT_MODEL.to_string()),
                credential_env: api_key_env.unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string()),
            },
            _ => return Err(Error::Config(format!("unknown provider {provider:?}"))),
        };
        let config = Self {
            run,
            image_archive: base.join(image_archive),
            test_archive: test_archive.map(|p| base.join(p)),
            classes,
            text_embedder: EmbedderSpec::parse(&embedder, base)?,
            provider,
            prompt_dir: take_string(&mut file_part, "prompt_dir")?.map(|p| base.join(p)),
            out_dir: base.join(take_string(&mut file_part, "out_dir")?.unwrap_or_else(|| "out".into())),
        };
        config.run.validate()?;
        Ok(config)
    }
}

/// Everything a run needs, loaded from a [`ConfigFile`].
pub struct Session {
    pub config: ConfigFile,
    pub images: Vec<crate::types::LabeledEmbedding>,
    pub classes: Vec<ClassLabel>,
    pub embedder: Box<dyn TextEmbedder>,
    pub cache: TextEmbeddings,
    pub llm: Box<dyn LlmProvider>,
    pub prompts: PromptBuilder,
}

impl Session {
    pub fn open(config: ConfigFile) -> Result<Self> {
        let archive = EmbeddingArchive::read(&config.image_archive)?;
        let classes = match &config.classes {
            Some(list) => list.clone(),
            None => archive.classes(),
        };
        let templates = match &config.prompt_dir {
            Some(dir) => PromptTemplates::from_dir(dir)?,
            None => PromptTemplates::default(),
        };
        let (embedder, cache) = config.text_embedder.build()?;
        let llm = config.provider.build()?;
        let prompts = PromptBuilder::new(templates, config.run.temperature, config.run.max_tokens);
        Ok(Self {
            images: archive.into_records(),
            classes,
            embedder,
            cache,
            llm,
            prompts,
            config,
        })
    }

    /// Runs from scratch, or from `resume` when given. Artifacts go to the
    /// configured output directory.
    pub fn run(&self, resume: Option<&Path>) -> Result<RunOutcome> {
        let mut opt = Optimizer::new(
            self.config.run.clone(),
            self.llm.as_ref(),
            self.embedder.as_ref(),
            self.prompts.clone(),
            &self.images,
        )?
        .with_embeddings(self.cache.clone())
        .with_outputs(RunOutputs::new(&self.config.out_dir));
        match resume {
            Some(path) => opt.resume(RunState::load(path)?),
            None => opt.run(&self.classes),
        }
    }
}
