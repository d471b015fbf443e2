use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembler::KindWeights;
use crate::encoder::ModelConfig;
use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_MAX_ANSWER_LEN;
use crate::kb::LanguageTag;
use crate::synthlang::SynthSpec;
use crate::training::TrainConfig;

/// Where the knowledge base comes from. Without a directory the pipeline
/// uses the synthetic KB it generates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblerSection {
    /// Empty means every language of the KB.
    #[serde(default)]
    pub langs: Vec<LanguageTag>,
    /// Triples to sample; all renderable ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_triples: Option<usize>,
    pub kind_weights: [f64; 3],
    pub seed: u64,
}

impl Default for AssemblerSection {
    fn default() -> Self {
        AssemblerSection {
            langs: Vec::new(),
            n_triples: None,
            kind_weights: KindWeights::default().0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Finetuning set; the synthetic pivot training split when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    /// Test sets; the synthetic per-pair test splits when empty.
    #[serde(default)]
    pub test: Vec<PathBuf>,
    pub max_answer_len: usize,
    /// Language assumed for questions and contexts without tags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_lang: Option<LanguageTag>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            train: None,
            test: Vec::new(),
            max_answer_len: DEFAULT_MAX_ANSWER_LEN,
            default_lang: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub kb: KbSection,
    pub assembler: AssemblerSection,
    pub model: ModelConfig,
    pub inject: TrainConfig,
    pub finetune: TrainConfig,
    pub eval: EvalSection,
    pub synth: SynthSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kb: KbSection::default(),
            assembler: AssemblerSection::default(),
            model: ModelConfig::default(),
            inject: TrainConfig::inject(),
            finetune: TrainConfig::finetune(),
            eval: EvalSection::default(),
            synth: SynthSpec::default(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
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

fn parse_override(item: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::Config(format!("override {item:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

fn apply_override(doc: &mut toml::Value, path: &[String], value: toml::Value) -> Result<()> {
    let mut node = doc;
    for (depth, key) in path.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {} goes through a non-table", path.join("."))))?;
        if depth + 1 == path.len() {
            table.insert(key.clone(), value);
            return Ok(());
        }
        node = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Ok(())
}

impl PipelineConfig {
    /// Parses a TOML document on top of the defaults, then applies
    /// `section.key=value` overrides. Unknown keys are rejected.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let user: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let mut doc = toml::Value::try_from(PipelineConfig::default()).expect("defaults serialize");
        merge(&mut doc, user);
        for item in overrides {
            let (path, value) = parse_override(item)?;
            apply_override(&mut doc, &path, value)?;
        }
        let config: PipelineConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = PipelineConfig::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(dir) = &mut self.kb.dir {
            fix(dir);
        }
        if let Some(train) = &mut self.eval.train {
            fix(train);
        }
        self.eval.test.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.inject.validate()?;
        self.finetune.validate()?;
        self.synth.validate()?;
        if self.eval.max_answer_len == 0 {
            return Err(Error::Config("eval.max_answer_len must be positive".into()));
        }
        let w = self.assembler.kind_weights;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidWeights);
        }
        Ok(())
    }

    /// The same experiment under another seed: every seeded stage changes.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.assembler.seed = seed;
        c.inject.seed = seed;
        c.finetune.seed = seed;
        c.synth.seed = seed;
        c
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}
