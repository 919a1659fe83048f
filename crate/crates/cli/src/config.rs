use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mpcite_core::encoder::EncoderConfig;
use mpcite_core::eval::EvalConfig;
use mpcite_core::pipeline::Experiment;
use mpcite_core::rng::mix_seed;
use mpcite_core::sampling::SamplingConfig;
use mpcite_core::synthgen::SynthConfig;
use mpcite_core::trainer::TrainConfig;

pub const SEED_ENV: &str = "MPCITE_SEED";

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_min_freq")]
    pub vocab_min_freq: usize,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_min_freq() -> usize {
    1
}

fn default_workers() -> usize {
    1
}

/// One run-config file. Relative paths resolve against the file's directory.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).context("invalid run config")?;
        for p in [&mut cfg.output_dir, &mut cfg.corpus.path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?;
        }
        if cfg.workers == 0 {
            bail!("workers must be >= 1");
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    /// The experiment this config describes. Every seed derives from the run
    /// seed.
    pub fn experiment(&self) -> Experiment {
        let mut train = self.train.clone();
        train.seed = self.seed;
        let eval = EvalConfig {
            index_seed: mix_seed(self.seed, &[1]),
            query_seed: mix_seed(self.seed, &[2]),
            workers: self.workers,
            ..self.eval.clone()
        };
        Experiment {
            sampling: self.sampling.clone(),
            encoder: self.encoder.clone(),
            train,
            eval,
            test_fraction: self.corpus.test_fraction,
            vocab_min_freq: self.corpus.vocab_min_freq,
            no_dynamic: false,
        }
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.output_dir.join("checkpoint")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.output_dir.join("index")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output_dir.join("reports")
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.output_dir.join("logs")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint_dir().join("model.ckpt")
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.checkpoint_dir().join("vocab.txt")
    }

    pub fn index_path(&self) -> PathBuf {
        self.index_dir().join("candidates.idx")
    }

    pub fn create_layout(&self) -> Result<()> {
        for dir in [
            self.checkpoint_dir(),
            self.index_dir(),
            self.reports_dir(),
            self.logs_dir(),
        ] {
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
        }
        Ok(())
    }
}
