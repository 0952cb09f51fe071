use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mgtnet::layers::GraphConvKind;
use mgtnet::training::LossReduction;
use mgtnet::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

pub const PRESETS: [&str; 3] = ["paper-default", "gt-ablation", "toy"];

/// Flat run configuration file. Every key is optional and falls back to the
/// selected preset; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub frames: Option<usize>,
    pub hidden: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub hops: Option<usize>,
    pub dropout: Option<f64>,
    pub dilation: Option<usize>,
    pub kernel_half_width: Option<usize>,
    pub use_dcl: Option<bool>,
    pub graph_conv: Option<GraphConvKind>,
    pub alpha: Option<f64>,
    pub lr0: Option<f64>,
    pub decay: Option<f64>,
    pub decay_every: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub reduction: Option<LossReduction>,
    pub standardize: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub standardize: bool,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn preset_configs(name: &str) -> Result<(ModelConfig, TrainConfig)> {
    Ok(match name {
        "paper-default" => (ModelConfig::paper_default(), TrainConfig::paper_default()),
        "gt-ablation" => (ModelConfig::gt_ablation(), TrainConfig::paper_default()),
        "toy" => (ModelConfig::toy(), TrainConfig::toy()),
        other => bail!("unknown preset `{other}` (expected one of {})", PRESETS.join(", ")),
    })
}

impl RunConfig {
    /// Preset named on the command line, else in the file, else `toy`.
    pub fn resolve(file: ConfigFile, preset_flag: Option<&str>, seed_flag: Option<u64>) -> Result<Self> {
        let preset = preset_flag
            .map(str::to_string)
            .or(file.preset.clone())
            .unwrap_or_else(|| "toy".to_string());
        let (mut model, mut train) = preset_configs(&preset)?;
        macro_rules! take {
            ($dst:expr, $field:ident) => {
                if let Some(v) = file.$field {
                    $dst.$field = v;
                }
            };
        }
        take!(model, frames);
        take!(model, hidden);
        take!(model, layers);
        take!(model, heads);
        take!(model, hops);
        take!(model, dropout);
        take!(model, dilation);
        take!(model, kernel_half_width);
        take!(model, use_dcl);
        take!(model, graph_conv);
        take!(train, alpha);
        take!(train, lr0);
        take!(train, decay);
        take!(train, decay_every);
        take!(train, epochs);
        take!(train, batch_size);
        take!(train, seed);
        take!(train, reduction);
        if let Some(seed) = seed_flag {
            train.seed = seed;
        }
        let cfg = Self {
            preset,
            model,
            train,
            standardize: file.standardize.unwrap_or(true),
            data: None,
            out: None,
        };
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn from_args(config: Option<&Path>, preset: Option<&str>, seed: Option<u64>) -> Result<Self> {
        let file = match config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Self::resolve(file, preset, seed)
    }

    /// The resolved settings as a flat document in the config-file format.
    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct Flat<'a> {
            preset: &'a str,
            frames: usize,
            hidden: usize,
            layers: usize,
            heads: usize,
            hops: usize,
            dropout: f64,
            dilation: usize,
            kernel_half_width: usize,
            use_dcl: bool,
            graph_conv: GraphConvKind,
            alpha: f64,
            lr0: f64,
            decay: f64,
            decay_every: usize,
            epochs: usize,
            batch_size: usize,
            seed: u64,
            reduction: LossReduction,
            standardize: bool,
        }
        let (m, t) = (&self.model, &self.train);
        let mut text = String::new();
        if let Some(d) = &self.data {
            text.push_str(&format!("# data: {}\n", d.display()));
        }
        text.push_str(&format!("# joints: {}\n", m.joints));
        text + &toml::to_string(&Flat {
            preset: &self.preset,
            frames: m.frames,
            hidden: m.hidden,
            layers: m.layers,
            heads: m.heads,
            hops: m.hops,
            dropout: m.dropout,
            dilation: m.dilation,
            kernel_half_width: m.kernel_half_width,
            use_dcl: m.use_dcl,
            graph_conv: m.graph_conv,
            alpha: t.alpha,
            lr0: t.lr0,
            decay: t.decay,
            decay_every: t.decay_every,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: t.seed,
            reduction: t.reduction,
            standardize: self.standardize,
        })
        .expect("flat config serializes")
    }
}
