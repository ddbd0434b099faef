//! `selftrain` command-line tool.
//!
//! Every subcommand that trains reads an experiment TOML file (`--config`),
//! and `--seed` replaces every seed in it. Without `--config` the built-in
//! desk-scale defaults apply.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use selftrain::harness::{emit_curves, gen_toy_corpus, load_data, run_experiment, ExperimentConfig};
use selftrain::metrics::{bleu_corpus, Smoothing};
use selftrain::model::{average_checkpoints, load_checkpoint, save_checkpoint, AveragingWindow};
use selftrain::pipeline::{run_full_pipeline, StageModel};
use selftrain::text::{
    decode_bpe, learn_bpe, load_corpus, load_monolingual, save_corpus, save_monolingual, BpeModel,
    Direction, Origin, ParallelCorpus, Sentence,
};
use selftrain::training::{fit, prepare_strategy, read_report, translate_sentences, write_report, ExperimentReport, Strategy};

#[derive(Parser)]
#[command(name = "selftrain", version, about = "Self-training enhanced back-translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let config = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        Ok(match self.seed {
            Some(seed) => config.with_seed(seed),
            None => config,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothArg {
    None,
    Add1,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the toy corpora of the configuration's `[toy]` table.
    ToyGen {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for train/dev/test .src/.tgt and mono.tgt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn BPE merges from one or more text files.
    BpeLearn {
        #[arg(long, default_value_t = 10_000)]
        merges: usize,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Segment a text file with a BPE model, or undo the segmentation.
    BpeApply {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Join subwords back into words instead of segmenting.
        #[arg(long)]
        decode: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
        input: PathBuf,
    },
    /// Train one translator on parallel files, plus optional synthetic pairs.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output model directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, num_args = 2, value_names = ["SRC", "TGT"])]
        synthetic: Option<Vec<PathBuf>>,
        /// Data strategy; defaults to the configuration's forward strategy.
        #[arg(long)]
        strategy: Option<Strategy>,
        train_src: PathBuf,
        train_tgt: PathBuf,
        dev_src: PathBuf,
        dev_tgt: PathBuf,
    },
    /// Translate a text file with a trained model directory.
    Translate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        input: PathBuf,
    },
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, value_enum, default_value_t = SmoothArg::None)]
        smooth: SmoothArg,
    },
    /// Element-wise average of checkpoint files.
    AvgCkpt {
        #[arg(long, short)]
        output: PathBuf,
        /// Number of snapshots to average.
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Average the window ending at this step instead of the last k.
        #[arg(long)]
        end_step: Option<u64>,
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Run the five-stage pipeline into the configured output directory.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the configured strategy-comparison arms.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Summarize report files and write their curves.
    Report {
        /// Directory for the curve files.
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse().command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    Ok(load_monolingual(path)?.sentences().to_vec())
}

fn write_lines(output: Option<&Path>, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = String::new();
    for line in lines {
        text.push_str(&line);
        text.push('\n');
    }
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::ToyGen { cfg, out } => {
            let config = cfg.load()?;
            let Some(spec) = &config.toy else { bail!("the configuration has no [toy] table") };
            let c = gen_toy_corpus(spec)?;
            fs::create_dir_all(&out)?;
            save_corpus(&c.train, out.join("train.src"), out.join("train.tgt"))?;
            save_corpus(&c.dev, out.join("dev.src"), out.join("dev.tgt"))?;
            save_corpus(&c.test, out.join("test.src"), out.join("test.tgt"))?;
            save_monolingual(&c.monolingual, out.join("mono.tgt"))?;
            println!(
                "{} train, {} dev, {} test pairs and {} monolingual sentences in {}",
                c.train.len(),
                c.dev.len(),
                c.test.len(),
                c.monolingual.len(),
                out.display()
            );
        }
        Command::BpeLearn { merges, output, inputs } => {
            let mut sentences = Vec::new();
            for path in &inputs {
                sentences.extend(read_sentences(path)?);
            }
            let model = learn_bpe(&sentences, merges)?;
            model.save(&output)?;
            println!("{} merges written to {}", model.num_merges(), output.display());
        }
        Command::BpeApply { model, decode, output, input } => {
            let sentences = read_sentences(&input)?;
            let lines: Vec<String> = if decode {
                sentences.iter().map(|s| decode_bpe(s.tokens()).0.to_string()).collect()
            } else {
                let Some(model) = model else { bail!("--model is required unless --decode is given") };
                let model = BpeModel::load(model)?;
                sentences.iter().map(|s| model.apply(s).to_string()).collect()
            };
            write_lines(output.as_deref(), lines)?;
        }
        Command::Train { cfg, out, synthetic, strategy, train_src, train_tgt, dev_src, dev_tgt } => {
            let config = cfg.load()?;
            let p = &config.pipeline;
            p.validate()?;
            let authentic = load_corpus(&train_src, &train_tgt, Origin::Authentic)?;
            let dev = load_corpus(&dev_src, &dev_tgt, Origin::Authentic)?;
            let synthetic = match synthetic.as_deref() {
                Some([src, tgt]) => load_corpus(src, tgt, Origin::Synthetic)?,
                _ => ParallelCorpus::new(Vec::new())?,
            };
            let strategy = strategy.unwrap_or(p.strategy_forward);
            let schedule = &p.forward_schedule;
            let phases = prepare_strategy(&authentic, &synthetic, strategy, Direction::Forward, schedule.seed)?;
            let trained = fit("model", &phases, &dev, &p.model, schedule, &p.text, p.window())?;
            let snapshots = out.join("snapshots");
            fs::create_dir_all(&snapshots)?;
            for snap in &trained.snapshots {
                save_checkpoint(snap, snapshots.join(format!("step-{:08}.ckpt", snap.step)))?;
            }
            save_checkpoint(&trained.last, out.join("last.ckpt"))?;
            let model = StageModel::from(trained);
            model.save(&out)?;
            print!("{}", model.report.to_tsv());
        }
        Command::Translate { model, output, input } => {
            let model = StageModel::load(&model)?;
            let sentences = read_sentences(&input)?;
            let mut failed = 0;
            let lines: Vec<String> = translate_sentences(&model.checkpoint, &model.src_bpe, &sentences)
                .into_iter()
                .enumerate()
                .map(|(i, r)| match r {
                    Ok(s) => s.to_string(),
                    Err(e) => {
                        log::warn!("line {}: {e}", i + 1);
                        failed += 1;
                        String::new()
                    }
                })
                .collect();
            write_lines(output.as_deref(), lines)?;
            if failed > 0 {
                log::warn!("{failed} of {} lines could not be translated", sentences.len());
            }
        }
        Command::Bleu { hyp, reference, smooth } => {
            let hyps = read_lines_allow_empty(&hyp)?;
            let refs = read_sentences(&reference)?;
            let smoothing = match smooth {
                SmoothArg::None => Smoothing::None,
                SmoothArg::Add1 => Smoothing::Add1,
            };
            println!("{}", bleu_corpus(&hyps, &refs, smoothing)?);
        }
        Command::AvgCkpt { output, k, end_step, checkpoints } => {
            let loaded = checkpoints
                .iter()
                .map(|p| load_checkpoint(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let window = match end_step {
                Some(step) => AveragingWindow::EndingAt { step, k },
                None => AveragingWindow::LastK(k),
            };
            let avg = average_checkpoints(&loaded, window)?;
            save_checkpoint(&avg, &output)?;
            println!("averaged checkpoint at step {} written to {}", avg.step, output.display());
        }
        Command::Pipeline { cfg } => {
            let config = cfg.load()?;
            config.validate()?;
            let data = load_data(&config)?;
            let run = run_full_pipeline(&data, &config.pipeline, &config.output_dir)?;
            let reports = run.reports();
            emit_curves(&reports, config.output_dir.join("curves"))?;
            print!("{}", summary(&reports));
        }
        Command::Experiment { cfg } => {
            let outcome = run_experiment(&cfg.load()?)?;
            print!("{}", outcome.table());
        }
        Command::Report { curves, reports } => {
            let loaded = reports
                .iter()
                .map(|p| read_report(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&ExperimentReport> = loaded.iter().collect();
            if let Some(dir) = curves {
                emit_curves(&refs, &dir)?;
                // report files are rewritten next to the curves for a self-contained directory
                for r in &loaded {
                    write_report(r, dir.join(format!("{}.report.tsv", r.label)))?;
                }
            }
            print!("{}", summary(&refs));
        }
    }
    Ok(())
}

/// Hypothesis lines may be empty when a sentence failed to translate.
fn read_lines_allow_empty(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(Sentence::from_text).collect())
}

fn summary(reports: &[&ExperimentReport]) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.2}"));
    let mut out = String::from("label\tbest_dev\tbest_step\taveraged_dev\ttest\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.label,
            fmt(r.best.map(|b| b.1)),
            r.best.map_or("-".to_owned(), |b| b.0.to_string()),
            fmt(r.averaged_bleu),
            fmt(r.test_bleu)
        ));
    }
    out
}
