//! Run directories and the steps that fill them: synthetic data, corpus,
//! injection, finetuning, evaluation and coverage.

mod config;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::assembler::{build_corpus, load_corpus, save_corpus, KindWeights, MaskedSample};
use crate::encoder::{load_checkpoint, save_checkpoint, CheckpointMeta, EncoderParams};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate, load_dataset, token_coverage, triple_renderings, Aggregate, CoverageReport, EvalReport, Prediction,
    QAExample,
};
use crate::kb::{load_kb, write_lines, KbPaths, KnowledgeBase, LanguageTag};
use crate::synthlang::{write_synth, SynthFiles};
use crate::textmodel::{build_vocab, Vocab};
use crate::training::{run_finetune, run_injection, StepRecord};

pub use config::{AssemblerSection, EvalSection, KbSection, PipelineConfig};

/// Injection with the configured sample kinds, or the monolingual-only
/// baseline (K1 samples only, same number of samples and steps).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Injected,
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Injected, Variant::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Injected => "injected",
            Variant::Baseline => "baseline",
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Variant::Injected => "",
            Variant::Baseline => "-baseline",
        }
    }

    pub fn kind_weights(self, config: &PipelineConfig) -> KindWeights {
        match self {
            Variant::Injected => KindWeights(config.assembler.kind_weights),
            Variant::Baseline => KindWeights([1.0, 0.0, 0.0]),
        }
    }
}

/// Paths inside one run directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    /// `<runs_dir>/<timestamp>-<short config hash>`.
    pub fn timestamped(runs_dir: &Path, timestamp: &str, config: &PipelineConfig) -> Self {
        RunLayout::new(runs_dir.join(format!("{timestamp}-{}", config.short_hash())))
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.root.join("synth")
    }

    pub fn corpus(&self, variant: Variant) -> PathBuf {
        self.root
            .join("corpus")
            .join(format!("corpus{}.jsonl", variant.suffix()))
    }

    pub fn vocab(&self) -> PathBuf {
        self.root.join("corpus").join("vocab.txt")
    }

    pub fn ckpt_inject(&self, variant: Variant) -> PathBuf {
        self.root
            .join("ckpt-inject")
            .join(format!("model{}.ckpt", variant.suffix()))
    }

    pub fn ckpt_final(&self, variant: Variant) -> PathBuf {
        self.root
            .join("ckpt-final")
            .join(format!("model{}.ckpt", variant.suffix()))
    }

    pub fn log(&self, phase: &str, variant: Variant) -> PathBuf {
        self.root
            .join("logs")
            .join(format!("{phase}{}.jsonl", variant.suffix()))
    }

    pub fn report_text(&self, variant: Variant) -> PathBuf {
        self.root.join("reports").join(format!("report_{}.txt", variant.name()))
    }

    pub fn report_json(&self, variant: Variant) -> PathBuf {
        self.root
            .join("reports")
            .join(format!("report_{}.json", variant.name()))
    }

    pub fn predictions(&self, variant: Variant) -> PathBuf {
        self.root
            .join("reports")
            .join(format!("predictions_{}.jsonl", variant.name()))
    }

    pub fn coverage(&self) -> PathBuf {
        self.root.join("reports").join("coverage.json")
    }

    pub fn manifest(&self, command: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{command}.json"))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("record serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Seeds {
    synth: u64,
    assembler: u64,
    inject: u64,
    finetune: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    seeds: Seeds,
    artifacts: Vec<String>,
}

/// Records which config produced which artifacts of a step.
pub fn write_manifest(config: &PipelineConfig, layout: &RunLayout, command: &str, artifacts: &[PathBuf]) -> Result<()> {
    let manifest = Manifest {
        command,
        config_hash: config.hash(),
        seeds: Seeds {
            synth: config.synth.seed,
            assembler: config.assembler.seed,
            inject: config.inject.seed,
            finetune: config.finetune.seed,
        },
        artifacts: artifacts
            .iter()
            .map(|p| p.strip_prefix(&layout.root).unwrap_or(p).display().to_string())
            .collect(),
    };
    write_json(&layout.manifest(command), &manifest)
}

pub fn synth_gen(config: &PipelineConfig, layout: &RunLayout) -> Result<SynthFiles> {
    let files = write_synth(&layout.synth_dir(), &config.synth)?;
    let mut artifacts = vec![files.kb_dir.clone(), files.train.clone(), files.manifest.clone()];
    artifacts.extend(files.test.values().cloned());
    write_manifest(config, layout, "synth-gen", &artifacts)?;
    Ok(files)
}

fn synth_files(config: &PipelineConfig, layout: &RunLayout) -> SynthFiles {
    SynthFiles::in_dir(&layout.synth_dir(), &config.synth)
}

pub fn kb_dir(config: &PipelineConfig, layout: &RunLayout) -> PathBuf {
    config
        .kb
        .dir
        .clone()
        .unwrap_or_else(|| synth_files(config, layout).kb_dir)
}

pub fn load_pipeline_kb(config: &PipelineConfig, layout: &RunLayout) -> Result<KnowledgeBase> {
    load_kb(&KbPaths::in_dir(kb_dir(config, layout)))
}

pub fn train_set(config: &PipelineConfig, layout: &RunLayout) -> Result<Vec<QAExample>> {
    let path = config
        .eval
        .train
        .clone()
        .unwrap_or_else(|| synth_files(config, layout).train);
    load_dataset(&path, config.eval.default_lang.as_ref())
}

pub fn test_set(config: &PipelineConfig, layout: &RunLayout) -> Result<Vec<QAExample>> {
    let paths: Vec<PathBuf> = if config.eval.test.is_empty() {
        synth_files(config, layout).test.into_values().collect()
    } else {
        config.eval.test.clone()
    };
    let mut all = Vec::new();
    for path in paths {
        all.extend(load_dataset(&path, config.eval.default_lang.as_ref())?);
    }
    Ok(all)
}

fn corpus_langs(config: &PipelineConfig, kb: &KnowledgeBase) -> BTreeSet<LanguageTag> {
    if config.assembler.langs.is_empty() {
        kb.languages().clone()
    } else {
        config.assembler.langs.iter().cloned().collect()
    }
}

/// Vocabulary over KB surface forms in the corpus languages and the
/// finetuning texts.
pub fn pipeline_vocab(config: &PipelineConfig, kb: &KnowledgeBase, train: &[QAExample]) -> Result<Vocab> {
    let langs = corpus_langs(config, kb);
    let forms = kb
        .entities()
        .chain(kb.relations())
        .flat_map(|e| e.forms.iter())
        .filter(|(lang, _)| langs.contains(*lang))
        .map(|(_, text)| text.as_str());
    let qa = train.iter().flat_map(|ex| [ex.question.as_str(), ex.context.as_str()]);
    build_vocab(forms.chain(qa), config.model.vocab_size)
}

pub fn assemble_corpus(config: &PipelineConfig, kb: &KnowledgeBase, variant: Variant) -> Result<Vec<MaskedSample>> {
    let langs = corpus_langs(config, kb);
    let n_triples = match config.assembler.n_triples {
        Some(n) => n,
        None => kb.triples_renderable(&langs).len(),
    };
    build_corpus(
        kb,
        &langs,
        n_triples,
        variant.kind_weights(config),
        config.assembler.seed,
    )
}

/// Writes both corpora and the vocabulary.
pub fn assemble(config: &PipelineConfig, layout: &RunLayout) -> Result<Vocab> {
    let kb = load_pipeline_kb(config, layout)?;
    let train = train_set(config, layout)?;
    let vocab = pipeline_vocab(config, &kb, &train)?;
    let mut artifacts = Vec::new();
    for variant in Variant::ALL {
        let corpus = assemble_corpus(config, &kb, variant)?;
        let path = layout.corpus(variant);
        save_corpus(&path, &corpus)?;
        artifacts.push(path);
    }
    vocab.save(&layout.vocab())?;
    artifacts.push(layout.vocab());
    write_manifest(config, layout, "assemble", &artifacts)?;
    Ok(vocab)
}

fn checkpoint_meta(config: &PipelineConfig, vocab: &Vocab) -> CheckpointMeta {
    CheckpointMeta {
        config_hash: config.hash(),
        vocab_hash: vocab.fingerprint(),
    }
}

/// Loads a checkpoint and refuses it unless it was trained with `vocab`.
pub fn load_checked(path: &Path, vocab: &Vocab) -> Result<EncoderParams> {
    let (params, meta) = load_checkpoint(path)?;
    let found = vocab.fingerprint();
    if meta.vocab_hash != found {
        return Err(Error::HashMismatch {
            what: "vocab",
            expected: meta.vocab_hash,
            found,
        });
    }
    Ok(params)
}

fn write_log(path: &Path, log: &[StepRecord]) -> Result<()> {
    write_lines(path, log.iter())
}

pub fn inject(config: &PipelineConfig, layout: &RunLayout, variant: Variant) -> Result<EncoderParams> {
    let corpus = load_corpus(&layout.corpus(variant))?;
    let vocab = Vocab::load(&layout.vocab())?;
    let mut model = config.model.clone();
    model.vocab_size = vocab.len();
    let outcome = run_injection(&corpus, &vocab, &config.inject, &model, None)?;
    let ckpt = layout.ckpt_inject(variant);
    ensure_parent(&ckpt)?;
    save_checkpoint(&ckpt, &outcome.params, &checkpoint_meta(config, &vocab))?;
    let log = layout.log("inject", variant);
    write_log(&log, &outcome.log)?;
    write_manifest(config, layout, &format!("inject{}", variant.suffix()), &[ckpt, log])?;
    Ok(outcome.params)
}

pub fn finetune(config: &PipelineConfig, layout: &RunLayout, variant: Variant) -> Result<EncoderParams> {
    let vocab = Vocab::load(&layout.vocab())?;
    let params = load_checked(&layout.ckpt_inject(variant), &vocab)?;
    let train = train_set(config, layout)?;
    let outcome = run_finetune(params, &train, &vocab, &config.finetune)?;
    let ckpt = layout.ckpt_final(variant);
    ensure_parent(&ckpt)?;
    save_checkpoint(&ckpt, &outcome.params, &checkpoint_meta(config, &vocab))?;
    let log = layout.log("finetune", variant);
    write_log(&log, &outcome.log)?;
    write_manifest(config, layout, &format!("finetune{}", variant.suffix()), &[ckpt, log])?;
    Ok(outcome.params)
}

#[derive(Serialize)]
struct ReportRecord<'a> {
    variant: &'a str,
    config_hash: String,
    vocab_hash: String,
    cross_pair: Aggregate,
    same_pair: Aggregate,
    report: &'a EvalReport,
}

pub fn evaluate_variant(config: &PipelineConfig, layout: &RunLayout, variant: Variant) -> Result<EvalReport> {
    let vocab = Vocab::load(&layout.vocab())?;
    let params = load_checked(&layout.ckpt_final(variant), &vocab)?;
    let test = test_set(config, layout)?;
    let (report, predictions) = evaluate(&params, &vocab, &test, config.eval.max_answer_len)?;
    let text = layout.report_text(variant);
    ensure_parent(&text)?;
    fs::write(&text, report.to_table()).map_err(|e| Error::io(&text, e))?;
    let json = layout.report_json(variant);
    write_json(
        &json,
        &ReportRecord {
            variant: variant.name(),
            config_hash: config.hash(),
            vocab_hash: vocab.fingerprint(),
            cross_pair: report.cross_pair(),
            same_pair: report.aggregate(|c| c.context_lang == c.question_lang),
            report: &report,
        },
    )?;
    let preds = layout.predictions(variant);
    write_lines(&preds, predictions.iter())?;
    write_manifest(
        config,
        layout,
        &format!("evaluate{}", variant.suffix()),
        &[text, json, preds],
    )?;
    Ok(report)
}

/// Coverage of test-question tokens by the injected corpus' triples.
pub fn coverage(config: &PipelineConfig, layout: &RunLayout) -> Result<CoverageReport> {
    let kb = load_pipeline_kb(config, layout)?;
    let corpus = load_corpus(&layout.corpus(Variant::Injected))?;
    let mut seen = BTreeSet::new();
    let triples: Vec<_> = corpus
        .iter()
        .map(|s| &s.source_triple)
        .filter(|t| seen.insert(*t))
        .collect();
    let rendered = triple_renderings(&kb, triples);
    let test = test_set(config, layout)?;
    let mut questions: Vec<(&str, &LanguageTag)> = Vec::new();
    let mut seen_questions = BTreeSet::new();
    for ex in &test {
        if seen_questions.insert((&ex.question, &ex.question_lang)) {
            questions.push((&ex.question, &ex.question_lang));
        }
    }
    let report = token_coverage(questions, &rendered);
    let path = layout.coverage();
    write_json(&path, &report)?;
    write_manifest(config, layout, "coverage", &[path])?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct PipelineSummary {
    pub injected: EvalReport,
    pub baseline: EvalReport,
    pub coverage: CoverageReport,
}

/// Every step in order, for the injected model and the baseline. Synthetic
/// data is generated unless both the KB and the QA sets are configured.
pub fn run_pipeline(config: &PipelineConfig, layout: &RunLayout) -> Result<PipelineSummary> {
    config.validate()?;
    fs::create_dir_all(&layout.root).map_err(|e| Error::io(&layout.root, e))?;
    let config_file = layout.root.join("config.toml");
    fs::write(&config_file, config.to_toml_string()).map_err(|e| Error::io(&config_file, e))?;
    let needs_synth = config.kb.dir.is_none() || config.eval.train.is_none() || config.eval.test.is_empty();
    if needs_synth {
        synth_gen(config, layout)?;
    }
    assemble(config, layout)?;
    let mut reports = Vec::new();
    for variant in Variant::ALL {
        inject(config, layout, variant)?;
        finetune(config, layout, variant)?;
        reports.push(evaluate_variant(config, layout, variant)?);
    }
    let coverage = coverage(config, layout)?;
    let baseline = reports.pop().expect("two variants");
    let injected = reports.pop().expect("two variants");
    write_manifest(config, layout, "pipeline", &[config_file])?;
    Ok(PipelineSummary {
        injected,
        baseline,
        coverage,
    })
}

/// Predictions of a finished run, for inspection.
pub fn load_predictions(layout: &RunLayout, variant: Variant) -> Result<Vec<Prediction>> {
    Ok(crate::kb::read_jsonl(&layout.predictions(variant))?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}
