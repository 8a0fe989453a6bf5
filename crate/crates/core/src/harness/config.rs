//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MemnnError, Result};
use crate::model::ModelFlags;
use crate::simulator::{DatasetConfig, TaskMode};
use crate::training::{TimeTerms, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hashing {
    None,
    Word,
    Cluster(usize),
}

impl Hashing {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Hashing::None),
            "word" => Some(Hashing::Word),
            _ => s.strip_prefix("cluster:")?.parse().ok().filter(|&k| k > 0).map(Hashing::Cluster),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Hashing::None => "none".into(),
            Hashing::Word => "word".into(),
            Hashing::Cluster(k) => format!("cluster:{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    Sentence,
    Stream,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub difficulty: usize,
    pub mode: TaskMode,
    pub statements: usize,
    pub questions: usize,
    pub story_len: usize,
    /// Keep only this many training questions.
    pub train_questions: Option<usize>,
    pub flags: ModelFlags,
    pub hashing: Hashing,
    pub train: TrainConfig,
    pub input: InputMode,
    /// Seed of the generated data; the model seed lives in `train.seed`.
    pub data_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            difficulty: 5,
            mode: TaskMode::ActorObject,
            statements: 7000,
            questions: 3000,
            story_len: 20,
            train_questions: None,
            flags: ModelFlags::default(),
            hashing: Hashing::None,
            train: TrainConfig::default(),
            input: InputMode::Sentence,
            data_seed: 0,
        }
    }
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| MemnnError::Parse {
            line: n + 1,
            msg: "expected key = value".into(),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| MemnnError::Config(format!("{k}: cannot parse {v:?}")))
}

fn flag(k: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(MemnnError::Config(format!("{k}: expected a boolean, got {v:?}"))),
    }
}

impl ExperimentConfig {
    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            n_statements: self.statements,
            n_questions: self.questions,
            story_len: self.story_len,
            difficulty: self.difficulty,
            mode: self.mode,
            seed: self.data_seed,
            ..Default::default()
        }
    }

    pub fn set(&mut self, k: &str, v: &str) -> Result<()> {
        match k {
            "difficulty" => self.difficulty = num(k, v)?,
            "mode" => self.mode = TaskMode::parse(v).ok_or_else(|| MemnnError::Config(format!("unknown mode {v:?}")))?,
            "statements" => self.statements = num(k, v)?,
            "questions" => self.questions = num(k, v)?,
            "story_len" => self.story_len = num(k, v)?,
            "train_questions" => self.train_questions = if v == "all" { None } else { Some(num(k, v)?) },
            "hops" => self.flags.hops = num(k, v)?,
            "time" => self.flags.time = flag(k, v)?,
            "matching" => self.flags.matching = flag(k, v)?,
            "unseen" => self.flags.unseen = flag(k, v)?,
            "lambda" => self.flags.lambda = num(k, v)?,
            "exclude_first" => self.flags.exclude_first = flag(k, v)?,
            "hashing" => self.hashing = Hashing::parse(v).ok_or_else(|| MemnnError::Config(format!("unknown hashing {v:?}")))?,
            "dim" => self.train.dim = num(k, v)?,
            "learning_rate" => self.train.learning_rate = num(k, v)?,
            "margin" => self.train.margin = num(k, v)?,
            "epochs" => self.train.epochs = num(k, v)?,
            "negatives" => self.train.negatives = num(k, v)?,
            "dropout" => self.train.dropout = num(k, v)?,
            "init_std" => self.train.init_std = num(k, v)?,
            "time_terms" => {
                self.train.time_terms = TimeTerms::parse(v).ok_or_else(|| MemnnError::Config(format!("unknown time_terms {v:?}")))?
            }
            "seed" => self.train.seed = num(k, v)?,
            "data_seed" => self.data_seed = num(k, v)?,
            "input" => {
                self.input = match v {
                    "sentence" => InputMode::Sentence,
                    "stream" => InputMode::Stream,
                    _ => return Err(MemnnError::Config(format!("unknown input mode {v:?}"))),
                }
            }
            _ => return Err(MemnnError::Config(format!("unknown key {k:?}"))),
        }
        Ok(())
    }

    pub fn from_kv(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in map {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&parse_kv(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.flags.validate()?;
        self.train.validate()?;
        if self.difficulty == 0 || self.story_len == 0 || self.statements == 0 {
            return Err(MemnnError::Config("difficulty, story_len and statements must be positive".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let f = &self.flags;
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("difficulty", self.difficulty.to_string());
        kv("mode", self.mode.name().into());
        kv("statements", self.statements.to_string());
        kv("questions", self.questions.to_string());
        kv("story_len", self.story_len.to_string());
        kv("train_questions", self.train_questions.map_or("all".into(), |n| n.to_string()));
        kv("hops", f.hops.to_string());
        kv("time", f.time.to_string());
        kv("matching", f.matching.to_string());
        kv("unseen", f.unseen.to_string());
        kv("lambda", f.lambda.to_string());
        kv("exclude_first", f.exclude_first.to_string());
        kv("hashing", self.hashing.name());
        kv("dim", t.dim.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("margin", t.margin.to_string());
        kv("epochs", t.epochs.to_string());
        kv("negatives", t.negatives.to_string());
        kv("dropout", t.dropout.to_string());
        kv("init_std", t.init_std.to_string());
        kv("time_terms", t.time_terms.name().into());
        kv("seed", t.seed.to_string());
        kv("data_seed", self.data_seed.to_string());
        kv(
            "input",
            match self.input {
                InputMode::Sentence => "sentence".into(),
                InputMode::Stream => "stream".into(),
            },
        );
        s
    }
}
