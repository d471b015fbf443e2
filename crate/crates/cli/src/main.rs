//! `gxlt`: run the knowledge-injection QA pipeline step by step or end to
//! end from one config file.
//!
//! Errors go to stderr as a single JSON line `{"error": code, "message": ...}`
//! and the process exits with status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gxlt::error::Result;
use gxlt::evaluation::EvalReport;
use gxlt::kb::{load_kb, KbPaths};
use gxlt::pipeline::{self, PipelineConfig, RunLayout, Variant};

#[derive(Parser)]
#[command(name = "gxlt", version, about = "Knowledge-injected cross-lingual extractive QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline config file (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Run directory. Without it a new `<runs-dir>/<timestamp>-<hash>` is used.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Parent of timestamped run directories.
    #[arg(long, global = true, default_value = "runs")]
    runs_dir: PathBuf,

    /// Config overrides, `section.key=value`.
    #[arg(global = true)]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Injected,
    Baseline,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Injected => Variant::Injected,
            VariantArg::Baseline => Variant::Baseline,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic KB and QA splits.
    SynthGen,
    /// Load and validate a knowledge base.
    KbValidate {
        /// KB directory; defaults to the configured or synthetic one.
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Build the injection and baseline corpora and the vocabulary.
    Assemble,
    /// Train the encoder on a corpus.
    Inject {
        #[arg(long, value_enum, default_value = "injected")]
        variant: VariantArg,
    },
    /// Finetune an injected checkpoint for span extraction.
    Finetune {
        #[arg(long, value_enum, default_value = "injected")]
        variant: VariantArg,
    },
    /// Score a finetuned checkpoint on the test sets.
    Evaluate {
        #[arg(long, value_enum, default_value = "injected")]
        variant: VariantArg,
    },
    /// Token coverage of test questions by corpus triples.
    Coverage,
    /// Every step, for the injected model and the baseline.
    Pipeline,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SynthGen => "synth-gen",
            Command::KbValidate { .. } => "kb-validate",
            Command::Assemble => "assemble",
            Command::Inject { .. } => "inject",
            Command::Finetune { .. } => "finetune",
            Command::Evaluate { .. } => "evaluate",
            Command::Coverage => "coverage",
            Command::Pipeline => "pipeline",
        }
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p, overrides),
        None => {
            let mut c = PipelineConfig::from_toml_str("", overrides)?;
            c.resolve_paths(Path::new("."));
            Ok(c)
        }
    }
}

fn print_report(variant: Variant, report: &EvalReport) {
    println!("report {}", variant.name());
    print!("{}", report.to_table());
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref(), &cli.overrides)?;
    let layout = match &cli.out {
        Some(dir) => RunLayout::new(dir),
        None => {
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
            RunLayout::timestamped(&cli.runs_dir, &stamp, &config)
        }
    };
    println!("run_dir {}", layout.root.display());
    println!("config_hash {}", config.hash());
    match &cli.command {
        Command::SynthGen => {
            let files = pipeline::synth_gen(&config, &layout)?;
            println!("kb {}", files.kb_dir.display());
            println!("train {}", files.train.display());
            for (pair, path) in &files.test {
                println!("test {pair} {}", path.display());
            }
        }
        Command::KbValidate { kb } => {
            let dir = kb.clone().unwrap_or_else(|| pipeline::kb_dir(&config, &layout));
            let kb = load_kb(&KbPaths::in_dir(&dir))?;
            let langs: Vec<&str> = kb.languages().iter().map(|l| l.as_str()).collect();
            println!(
                "kb ok entities={} relations={} triples={} languages={}",
                kb.num_entities(),
                kb.num_relations(),
                kb.triples().len(),
                langs.join(",")
            );
        }
        Command::Assemble => {
            let vocab = pipeline::assemble(&config, &layout)?;
            for variant in Variant::ALL {
                println!("corpus {} {}", variant.name(), layout.corpus(variant).display());
            }
            println!("vocab {} size={}", layout.vocab().display(), vocab.len());
        }
        Command::Inject { variant } => {
            let variant = Variant::from(*variant);
            pipeline::inject(&config, &layout, variant)?;
            println!("checkpoint {}", layout.ckpt_inject(variant).display());
        }
        Command::Finetune { variant } => {
            let variant = Variant::from(*variant);
            pipeline::finetune(&config, &layout, variant)?;
            println!("checkpoint {}", layout.ckpt_final(variant).display());
        }
        Command::Evaluate { variant } => {
            let variant = Variant::from(*variant);
            let report = pipeline::evaluate_variant(&config, &layout, variant)?;
            print_report(variant, &report);
        }
        Command::Coverage => {
            let report = pipeline::coverage(&config, &layout)?;
            for (lang, fraction) in &report.per_lang {
                println!("coverage {lang} {fraction:.4}");
            }
        }
        Command::Pipeline => {
            let summary = pipeline::run_pipeline(&config, &layout)?;
            print_report(Variant::Injected, &summary.injected);
            print_report(Variant::Baseline, &summary.baseline);
            println!(
                "cross_pair_f1 injected={:.2} baseline={:.2}",
                summary.injected.cross_pair().f1,
                summary.baseline.cross_pair().f1
            );
            for (lang, fraction) in &summary.coverage.per_lang {
                println!("coverage {lang} {fraction:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": e.code(),
                "command": cli.command.name(),
                "message": e.to_string(),
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
