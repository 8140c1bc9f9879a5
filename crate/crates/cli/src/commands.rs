use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde_json::json;
use vbow::eval::{evaluate_split, synth_dataset, train_test_split, EvalReport};
use vbow::graph::build_graph;
use vbow::io;
use vbow::kernel::linear_kernel;
use vbow::matrix::{AffinityMatrix, BowMatrix};
use vbow::reduce::{semantic_spectral_clustering, ReduceConfig, ReductionVariant};
use vbow::refine::refine;

use crate::config::*;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, write_timing, Manifest};

/// Validates the config, checks that every input exists and creates the
/// output directory, all before any computation.
fn prepare(cfg: &PipelineConfig, inputs: &[&Path]) -> CliResult<()> {
    cfg.validate()?;
    for p in inputs {
        if !p.is_file() {
            return Err(CliError::Config(format!("input file {} does not exist", p.display())));
        }
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(CliError::io(&cfg.output_dir))
}

fn read_bow(path: &Path, stage: &'static str) -> CliResult<BowMatrix> {
    io::read_bow(path).map_err(CliError::stage(stage))
}

fn tag_affinity(cfg: &PipelineConfig, stage: &'static str) -> CliResult<AffinityMatrix> {
    let t = read_bow(&cfg.textual_path(), stage)?;
    Ok(linear_kernel(&t, cfg.normalize_tags))
}

/// Writes the synthetic visual, textual and label matrices.
pub fn cmd_synth(cfg: &PipelineConfig) -> CliResult<()> {
    prepare(cfg, &[])?;
    let synth = cfg.synth.with_seed(cfg.seed);
    let start = Instant::now();
    let d = synth_dataset(&synth).map_err(CliError::stage("synth"))?;
    let gen_secs = start.elapsed().as_secs_f64();

    let (v, t, l) = (cfg.out(VISUAL_FILE), cfg.out(TEXTUAL_FILE), cfg.out(LABELS_FILE));
    io::write_bow(&v, &d.visual).map_err(CliError::stage("synth"))?;
    io::write_bow(&t, &d.textual).map_err(CliError::stage("synth"))?;
    io::write_labels(&l, &d.labels).map_err(CliError::stage("synth"))?;
    let details = json!({
        "seed": cfg.seed,
        "shapes": {
            "visual": [d.visual.rows(), d.visual.cols()],
            "textual": [d.textual.rows(), d.textual.cols()],
            "labels": [d.labels.rows(), d.labels.num_classes()],
        }
    });
    Manifest::new("synth", cfg, details).outputs(&[&v, &t, &l])?.write(cfg)?;
    write_timing(cfg, "synth", &[("generate", gen_secs)])?;
    info!("synth: {} images written to {}", d.visual.rows(), cfg.output_dir.display());
    Ok(())
}

/// Builds the tag graph and diffuses the visual model over it.
pub fn cmd_refine(cfg: &PipelineConfig) -> CliResult<()> {
    let (vp, tp) = (cfg.visual_path(), cfg.textual_path());
    prepare(cfg, &[&vp, &tp])?;
    let y = read_bow(&vp, "refine")?;
    let start = Instant::now();
    let a = tag_affinity(cfg, "refine")?;
    if a.size() != y.rows() {
        return Err(CliError::Stage {
            stage: "refine",
            source: vbow::Error::DimensionMismatch(format!("{} visual rows but {} tag rows", y.rows(), a.size())),
        });
    }
    let graph = build_graph(&a, &y, &cfg.graph).map_err(CliError::stage("graph"))?;
    let graph_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let out = refine(&y, &graph.weights, &cfg.refine).map_err(CliError::stage("refine"))?;
    let refine_secs = start.elapsed().as_secs_f64();

    let (fp, gp) = (cfg.out(REFINED_FILE), cfg.out(GRAPH_FILE));
    io::write_bow(&fp, &out.refined).map_err(CliError::stage("refine"))?;
    io::write_sparse_affinity(&gp, &graph.weights).map_err(CliError::stage("refine"))?;
    let report = json!({
        "images": y.rows(),
        "visual_words": y.cols(),
        "graph": cfg.graph.variant.to_string(),
        "k": cfg.graph.k,
        "graph_nonzeros": graph.weights.nnz(),
        "unconverged_images": graph.unconverged,
        "alpha": cfg.refine.alpha(),
        "lambda": cfg.refine.lambda(),
        "mode": cfg.refine.mode.to_string(),
        "iterations": out.iterations,
        "converged": out.converged,
    });
    write_json(&cfg.out("refine_report.json"), &report)?;
    Manifest::new("refine", cfg, report).inputs(&[&vp, &tp])?.outputs(&[&fp, &gp])?.write(cfg)?;
    write_timing(cfg, "refine", &[("graph", graph_secs), ("diffusion", refine_secs)])?;
    info!("refine: {} iterations, converged {}", out.iterations, out.converged);
    Ok(())
}

/// Clusters the refined visual words and writes the reduced model.
pub fn cmd_reduce(cfg: &PipelineConfig) -> CliResult<()> {
    let fp = cfg.refined_path();
    let tp = cfg.textual_path();
    let ssc2 = cfg.reduce.variant == ReductionVariant::Ssc2;
    if ssc2 && !tp.is_file() {
        return Err(CliError::Config(format!(
            "ssc2 needs the textual model to build the affinity, but {} does not exist",
            tp.display()
        )));
    }
    let mut inputs: Vec<&Path> = vec![&fp];
    if ssc2 {
        inputs.push(&tp);
    }
    prepare(cfg, &inputs)?;
    let f = read_bow(&fp, "reduce")?;
    let start = Instant::now();
    let a = if ssc2 { Some(tag_affinity(cfg, "reduce")?) } else { None };
    let rc = ReduceConfig { variant: cfg.reduce.variant, k: cfg.reduce.k, seed: cfg.seed };
    let out = semantic_spectral_clustering(&f, a.as_ref(), &rc).map_err(CliError::stage("reduce"))?;
    let secs = start.elapsed().as_secs_f64();

    let (up, rp, ep) = (cfg.out(MEMBERSHIP_FILE), cfg.out(REDUCED_FILE), cfg.out(EIGENVALUES_FILE));
    io::write_membership(&up, &out.membership, &f.feature_labels()).map_err(CliError::stage("reduce"))?;
    io::write_bow(&rp, &out.reduced).map_err(CliError::stage("reduce"))?;
    let eigenvalues = out.embedding.as_ref().map(|e| e.eigenvalues.clone()).unwrap_or_default();
    let mut text = String::from("index,eigenvalue\n");
    for (i, v) in eigenvalues.iter().enumerate() {
        text.push_str(&format!("{i},{v:?}\n"));
    }
    std::fs::write(&ep, text).map_err(CliError::io(&ep))?;
    let report = json!({
        "variant": cfg.reduce.variant.to_string(),
        "K": cfg.reduce.k,
        "visual_words": f.cols(),
        "cluster_sizes": out.membership.cluster_sizes(),
    });
    write_json(&cfg.out("reduce_report.json"), &report)?;
    let mut manifest = Manifest::new("reduce", cfg, report).inputs(&inputs)?;
    manifest = manifest.outputs(&[&up, &rp, &ep])?;
    manifest.write(cfg)?;
    write_timing(cfg, "reduce", &[("cluster", secs)])?;
    Ok(())
}

/// Scores every available model (visual, refined, reduced) on one split.
pub fn cmd_eval(cfg: &PipelineConfig) -> CliResult<()> {
    let lp = cfg.labels_path();
    let candidates = [("visual", cfg.visual_path()), ("refined", cfg.refined_path()), ("reduced", cfg.reduced_path())];
    let models: Vec<(&str, PathBuf)> = candidates.into_iter().filter(|(_, p)| p.is_file()).collect();
    if models.is_empty() {
        return Err(CliError::Config("no model files to evaluate".into()));
    }
    let mut inputs: Vec<&Path> = vec![&lp];
    inputs.extend(models.iter().map(|(_, p)| p.as_path()));
    prepare(cfg, &inputs)?;

    let labels = io::read_labels(&lp).map_err(CliError::stage("eval"))?;
    let (train, test) =
        train_test_split(labels.rows(), cfg.eval.test_fraction, cfg.seed).map_err(CliError::stage("eval"))?;
    let mut results: Vec<(&str, usize, EvalReport)> = Vec::new();
    for (name, path) in &models {
        let x = read_bow(path, "eval")?;
        let report = evaluate_split(&x, &labels, &train, &test, &cfg.eval).map_err(CliError::stage("eval"))?;
        info!("eval: {name} MAP {:.4}", report.map);
        results.push((name, x.cols(), report));
    }

    let json_models: Vec<_> = results
        .iter()
        .map(|(name, dims, r)| {
            json!({
                "model": name,
                "features": dims,
                "map": r.map,
                "per_class_ap": r.class_names.iter().zip(&r.per_class_ap)
                    .map(|(c, ap)| json!({ "class": c, "ap": ap })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let report = json!({ "train_images": train.len(), "test_images": test.len(), "models": json_models });
    let (jp, cp, sp) = (cfg.out("eval_report.json"), cfg.out("eval_report.csv"), cfg.out("split.csv"));
    write_json(&jp, &report)?;

    let mut csv = String::from("model,class,ap\n");
    for (name, _, r) in &results {
        for (c, ap) in r.class_names.iter().zip(&r.per_class_ap) {
            let ap = ap.map(|v| format!("{v:?}")).unwrap_or_default();
            csv.push_str(&format!("{name},{c},{ap}\n"));
        }
        csv.push_str(&format!("{name},MAP,{:?}\n", r.map));
    }
    std::fs::write(&cp, csv).map_err(CliError::io(&cp))?;

    let mut split = String::from("image,split\n");
    let mut is_test = vec![false; labels.rows()];
    test.iter().for_each(|&i| is_test[i] = true);
    for (i, t) in is_test.iter().enumerate() {
        split.push_str(&format!("{i},{}\n", if *t { "test" } else { "train" }));
    }
    std::fs::write(&sp, split).map_err(CliError::io(&sp))?;

    // long-format curve with seconds; a timing output like the *_timing files
    let mut curve = String::from("stage,K,map,seconds\n");
    for (name, dims, r) in &results {
        curve.push_str(&format!("{name},{dims},{:?},{:?}\n", r.map, r.total_seconds()));
    }
    let curve_path = cfg.out("eval_curve.csv");
    std::fs::write(&curve_path, curve).map_err(CliError::io(&curve_path))?;

    Manifest::new("eval", cfg, report).inputs(&inputs)?.outputs(&[&jp, &cp, &sp])?.write(cfg)?;
    let timing: Vec<(&str, f64)> = results.iter().map(|(n, _, r)| (*n, r.total_seconds())).collect();
    write_timing(cfg, "eval", &timing)?;
    Ok(())
}

/// synth (unless visual and textual inputs are given), refine, reduce and
/// eval, each reading the files the previous one wrote.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> CliResult<()> {
    cfg.validate()?;
    if cfg.inputs.visual.is_none() || cfg.inputs.textual.is_none() {
        cmd_synth(cfg)?;
    }
    cmd_refine(cfg)?;
    cmd_reduce(cfg)?;
    cmd_eval(cfg)
}
