use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use memnn::harness::config::{ExperimentConfig, Hashing, InputMode};
use memnn::harness::experiment::{self, curve_csv, learning_curve, load_checkpoint, run_eval, run_stream_eval, run_train, save_checkpoint};
use memnn::harness::format::{read_stories, write_stories, write_streams};
use memnn::harness::hashbench::{hash_bench, rows_table, synth_store, synth_train_config, train_synth, SynthConfig};
use memnn::harness::repl;
use memnn::parallel::Execution;
use memnn::simulator::Story;

#[derive(Parser)]
#[command(name = "memnn", about = "Memory network QA over a simulated world")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set hops=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for both data generation and training.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("expected KEY=VALUE, got {kv:?}");
            };
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
            cfg.data_seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train and test story files.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Read train.txt from here instead of generating.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "checkpoint")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on test stories.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Read test.txt from here instead of regenerating from the checkpoint config.
        #[arg(long)]
        data: Option<PathBuf>,
        /// none, word or cluster:K; defaults to the checkpoint's setting.
        #[arg(long)]
        hashing: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sequential: bool,
    },
    /// Test accuracy against the number of training questions.
    Curve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "100,500,1000,3000")]
        sizes: Vec<usize>,
        /// Write the table as CSV here as well.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Candidate counts and accuracy under each hashing mode on a synthetic store.
    HashBench {
        #[arg(long, default_value_t = 10000)]
        store_size: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,5,20,50")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
    },
    /// Interactive session: statements are stored, lines ending in `?` are answered.
    Repl {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn load_split(dir: &Path, name: &str) -> anyhow::Result<Vec<Story>> {
    let p = dir.join(name);
    read_stories(&p).with_context(|| format!("reading {}", p.display()))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen { cfg, out } => {
            let cfg = cfg.resolve()?;
            let (train, test) = experiment::generate(&cfg)?;
            fs::create_dir_all(&out)?;
            write_stories(out.join("train.txt"), &train)?;
            write_stories(out.join("test.txt"), &test)?;
            if cfg.input == InputMode::Stream {
                write_streams(out.join("train"), &experiment::streams(&train, cfg.data_seed))?;
                write_streams(out.join("test"), &experiment::streams(&test, cfg.data_seed ^ 1))?;
            }
            fs::write(out.join("config.txt"), cfg.to_text())?;
            println!("{} train stories, {} test stories -> {}", train.len(), test.len(), out.display());
        }
        Cmd::Train { cfg, data, out } => {
            let cfg = cfg.resolve()?;
            let train = match &data {
                Some(d) => load_split(d, "train.txt")?,
                None => experiment::generate(&cfg)?.0,
            };
            let (model, report) = run_train(&cfg, &train)?;
            for (i, l) in report.losses.iter().enumerate() {
                let acc = report
                    .accuracy
                    .get(i)
                    .map_or(String::new(), |a| format!("  train acc {:.2}%", 100.0 * a));
                println!("epoch {:>3}  loss {:.5}{acc}", i + 1, l);
            }
            save_checkpoint(&out, &model, &cfg, Some(&report))?;
            println!("checkpoint -> {}", out.display());
        }
        Cmd::Eval {
            checkpoint,
            data,
            hashing,
            seed,
            sequential,
        } => {
            let (model, mut cfg) = load_checkpoint(&checkpoint)?;
            if let Some(h) = hashing {
                cfg.hashing = Hashing::parse(&h).with_context(|| format!("unknown hashing {h:?}"))?;
            }
            let seed = seed.unwrap_or(cfg.train.seed);
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let test = match &data {
                Some(d) => load_split(d, "test.txt")?,
                None => experiment::generate(&cfg)?.1,
            };
            match cfg.input {
                InputMode::Sentence => print!("{}", run_eval(&model, &test, cfg.hashing, seed, exec)?.summary()),
                InputMode::Stream => {
                    let r = run_stream_eval(&model, &test, cfg.data_seed ^ 1, exec)?;
                    print!("{}", r.qa.summary());
                    let b = &r.statement_boundaries;
                    println!(
                        "boundaries: precision {:.2}% recall {:.2}% F1 {:.2}%",
                        b.precision(),
                        b.recall(),
                        b.f1()
                    );
                }
            }
        }
        Cmd::Curve { cfg, sizes, csv } => {
            let cfg = cfg.resolve()?;
            let (train, test) = simulator_split(&cfg)?;
            let rows = learning_curve(&cfg, &sizes, &train, &test)?;
            let text = curve_csv(&rows);
            print!("{text}");
            if let Some(p) = csv {
                fs::write(p, text)?;
            }
        }
        Cmd::HashBench {
            store_size,
            k,
            seed,
            epochs,
        } => {
            let base = SynthConfig::default();
            let per = base.per_subject;
            let sc = SynthConfig {
                subjects: store_size.div_ceil(per),
                seed,
                ..base
            };
            let store = synth_store(&sc);
            let tc = synth_train_config(epochs, seed);
            let model = train_synth(&store, &tc)?;
            let mut modes = vec![Hashing::None, Hashing::Word];
            modes.extend(k.into_iter().map(Hashing::Cluster));
            let rows = hash_bench(&model, &store, &modes, seed, Execution::Parallel)?;
            println!("{} slots, {} test queries", store.memory.len(), store.test.len());
            print!("{}", rows_table(&rows));
        }
        Cmd::Repl { checkpoint } => {
            let (model, _) = load_checkpoint(&checkpoint)?;
            eprintln!("statements are stored; end a line with ? to ask; :reset clears memory");
            repl::run(&model, io::stdin().lock(), io::stdout().lock())?;
        }
    }
    Ok(())
}

/// Full training set, so curve sizes subsample the same stories.
fn simulator_split(cfg: &ExperimentConfig) -> anyhow::Result<(Vec<Story>, Vec<Story>)> {
    let mut full = *cfg;
    full.train_questions = None;
    Ok(experiment::generate(&full)?)
}
