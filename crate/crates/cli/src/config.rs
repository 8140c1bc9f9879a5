use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vbow::eval::{EvalConfig, SynthConfig};
use vbow::graph::{GraphConfig, GraphVariant};
use vbow::reduce::{ReduceConfig, ReductionVariant};
use vbow::refine::{RefineConfig, RefineMode};

use crate::error::{CliError, CliResult};

pub const VISUAL_FILE: &str = "visual.csv";
pub const TEXTUAL_FILE: &str = "textual.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const REFINED_FILE: &str = "refined.csv";
pub const GRAPH_FILE: &str = "graph.mtx";
pub const MEMBERSHIP_FILE: &str = "membership.csv";
pub const REDUCED_FILE: &str = "reduced.csv";
pub const EIGENVALUES_FILE: &str = "eigenvalues.csv";

/// Input files. Unset entries default to the conventional file name inside
/// the output directory, which is where the upstream stage writes it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub visual: Option<PathBuf>,
    pub textual: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub refined: Option<PathBuf>,
    pub reduced: Option<PathBuf>,
}

/// Generator settings; the seed comes from [`PipelineConfig::seed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_images: usize,
    pub n_classes: usize,
    pub visual_vocab: usize,
    pub textual_vocab: usize,
    pub tag_noise_rate: f64,
    pub visual_noise_rate: f64,
    pub visual_words_per_image: usize,
    pub tags_per_image: usize,
    pub multi_label_rate: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthParams {
            n_images: d.n_images,
            n_classes: d.n_classes,
            visual_vocab: d.visual_vocab,
            textual_vocab: d.textual_vocab,
            tag_noise_rate: d.tag_noise_rate,
            visual_noise_rate: d.visual_noise_rate,
            visual_words_per_image: d.visual_words_per_image,
            tags_per_image: d.tags_per_image,
            multi_label_rate: d.multi_label_rate,
        }
    }
}

impl SynthParams {
    pub fn with_seed(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_images: self.n_images,
            n_classes: self.n_classes,
            visual_vocab: self.visual_vocab,
            textual_vocab: self.textual_vocab,
            tag_noise_rate: self.tag_noise_rate,
            visual_noise_rate: self.visual_noise_rate,
            visual_words_per_image: self.visual_words_per_image,
            tags_per_image: self.tags_per_image,
            multi_label_rate: self.multi_label_rate,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceParams {
    pub variant: ReductionVariant,
    #[serde(rename = "K")]
    pub k: usize,
}

impl Default for ReduceParams {
    fn default() -> Self {
        let d = ReduceConfig::default();
        ReduceParams { variant: d.variant, k: d.k }
    }
}

/// Everything a run depends on. `seed` drives every random choice: the
/// generator, the train/test split and k-means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    pub synth: SynthParams,
    /// L2-normalize tag rows before the linear kernel.
    pub normalize_tags: bool,
    pub graph: GraphConfig,
    pub refine: RefineConfig,
    pub reduce: ReduceParams,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            inputs: Inputs::default(),
            synth: SynthParams::default(),
            normalize_tags: true,
            graph: GraphConfig::default(),
            refine: RefineConfig::default(),
            reduce: ReduceParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of the JSON config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub visual: Option<PathBuf>,
    pub textual: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub refined: Option<PathBuf>,
    pub reduced: Option<PathBuf>,
    pub graph: Option<GraphVariant>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub mode: Option<RefineMode>,
    pub variant: Option<ReductionVariant>,
    pub big_k: Option<usize>,
    pub n_images: Option<usize>,
    pub tag_noise: Option<f64>,
    pub visual_noise: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        for (slot, v) in [
            (&mut self.inputs.visual, &o.visual),
            (&mut self.inputs.textual, &o.textual),
            (&mut self.inputs.labels, &o.labels),
            (&mut self.inputs.refined, &o.refined),
            (&mut self.inputs.reduced, &o.reduced),
        ] {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        if let Some(v) = o.graph {
            self.graph.variant = v;
        }
        if let Some(v) = o.k {
            self.graph.k = v;
        }
        if let Some(a) = o.alpha {
            let r = self.refine;
            self.refine = RefineConfig::from_alpha(a)
                .map_err(|e| CliError::Config(e.to_string()))?
                .with_mode(r.mode)
                .with_tol(r.tol)
                .with_max_iterations(r.max_iterations);
        }
        if let Some(v) = o.tol {
            self.refine = self.refine.with_tol(v);
        }
        if let Some(v) = o.max_iters {
            self.refine = self.refine.with_max_iterations(v);
        }
        if let Some(v) = o.mode {
            self.refine = self.refine.with_mode(v);
        }
        if let Some(v) = o.variant {
            self.reduce.variant = v;
        }
        if let Some(v) = o.big_k {
            self.reduce.k = v;
        }
        if let Some(v) = o.n_images {
            self.synth.n_images = v;
        }
        if let Some(v) = o.tag_noise {
            self.synth.tag_noise_rate = v;
        }
        if let Some(v) = o.visual_noise {
            self.synth.visual_noise_rate = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg = |e: vbow::Error| CliError::Config(e.to_string());
        self.synth.with_seed(self.seed).validate().map_err(cfg)?;
        self.refine.validate().map_err(cfg)?;
        self.graph.solver.validate().map_err(cfg)?;
        if self.refine.alpha() <= 0.0 {
            return Err(CliError::Config("alpha must lie in the open interval (0, 1)".into()));
        }
        if self.graph.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if self.reduce.k == 0 {
            return Err(CliError::Config("K must be at least 1".into()));
        }
        if !(self.eval.ridge > 0.0) {
            return Err(CliError::Config("eval.ridge must be positive".into()));
        }
        if !(self.eval.test_fraction > 0.0 && self.eval.test_fraction < 1.0) {
            return Err(CliError::Config("eval.test_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn input(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out(default))
    }

    pub fn visual_path(&self) -> PathBuf {
        self.input(&self.inputs.visual, VISUAL_FILE)
    }

    pub fn textual_path(&self) -> PathBuf {
        self.input(&self.inputs.textual, TEXTUAL_FILE)
    }

    pub fn labels_path(&self) -> PathBuf {
        self.input(&self.inputs.labels, LABELS_FILE)
    }

    pub fn refined_path(&self) -> PathBuf {
        self.input(&self.inputs.refined, REFINED_FILE)
    }

    pub fn reduced_path(&self) -> PathBuf {
        self.input(&self.inputs.reduced, REDUCED_FILE)
    }

    /// The parameters that determine results: the config without paths.
    pub fn parameters(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
            map.remove("inputs");
        }
        v
    }
}
