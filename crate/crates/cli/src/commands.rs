//! Subcommand bodies. Each writes its report to `out` so tests can capture
//! it; progress goes to stderr.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use srnet_core::autograd::GradCheckOptions;
use srnet_core::cost::{cost_report, count_params};
use srnet_core::eval::{evaluate, BETA_SQUARED, DEFAULT_THRESHOLDS};
use srnet_core::gradsuite::{network_check, operator_checks, TOLERANCE};
use srnet_core::srnet::{build_network, AblationVariant, BackboneKind, Component, Model, NetConfig, ReasoningConfig};
use srnet_core::training::{checkpoint, train, Sample};
use srnet_core::Tensor;

use crate::config::RunConfig;
use crate::{data, pnm, synthetic, CliError};

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .context("writing report")?;
    Ok(())
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

/// Training samples: the dataset directory when configured, otherwise the
/// first `samples` synthetic images of the run seed.
pub fn training_data(cfg: &RunConfig) -> Result<Vec<Sample>, CliError> {
    match &cfg.dataset {
        Some(dir) => data::load_dir(dir),
        None => {
            synthetic::check_request(cfg.samples, cfg.net.input_size)?;
            Ok(synthetic::dataset(cfg.samples, cfg.net.input_size, cfg.seed))
        }
    }
}

/// Synthetic samples that follow the training range of the same seed.
pub fn holdout_data(cfg: &RunConfig) -> Result<Vec<Sample>, CliError> {
    synthetic::check_request(cfg.holdout, cfg.net.input_size)?;
    Ok(synthetic::range(cfg.samples, cfg.holdout, cfg.net.input_size, cfg.seed))
}

fn load_model(cfg: &RunConfig) -> Result<Model, CliError> {
    let mut model = Model::new(build_network(&cfg.net)?, cfg.seed);
    let path = cfg.checkpoint_path();
    checkpoint::load(&path, &mut model.params).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(model)
}

fn predict_all(model: &Model, images: &[Tensor]) -> Result<Vec<Tensor>, CliError> {
    Ok(images.iter().map(|x| model.predict(x)).collect::<srnet_core::Result<_>>()?)
}

pub fn gen(cfg: &RunConfig) -> Result<(), CliError> {
    synthetic::generate(&cfg.out, cfg.samples, cfg.net.input_size, cfg.seed)?;
    eprintln!("wrote {} samples to {}", cfg.samples, cfg.out.display());
    Ok(())
}

/// Train and save; the per-epoch log is CSV on `out`.
pub fn train_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<Model, CliError> {
    cfg.validate()?;
    let data = training_data(cfg)?;
    let mut model = Model::new(build_network(&cfg.net)?, cfg.seed);
    let path = cfg.checkpoint_path();
    create_parent(&path)?;
    let mut tc = cfg.train_config();
    tc.checkpoint = Some(path.clone());
    emit(out, "epoch,mean_loss,wall_seconds\n")?;
    let mut failed = None;
    train(&mut model, &data, &tc, |log| {
        if failed.is_none() {
            failed = emit(out, &format!("{}\n", log.csv())).err();
        }
    })?;
    if let Some(e) = failed {
        return Err(e);
    }
    if cfg.epochs == 0 {
        checkpoint::save(&path, &model.params)?;
    }
    eprintln!("checkpoint {}", path.display());
    Ok(model)
}

/// Saliency maps for `inputs` (or the dataset images) as `<out>/<stem>.pgm`.
pub fn infer(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<(), CliError> {
    cfg.validate()?;
    let model = load_model(cfg)?;
    let files = if inputs.is_empty() {
        let dir = cfg
            .dataset
            .as_ref()
            .ok_or_else(|| CliError::Usage("infer needs input files or a dataset directory".into()))?;
        data::list(&dir.join("images"), "ppm")?
    } else {
        inputs.to_vec()
    };
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    for f in &files {
        let map = model.predict(&pnm::load(f)?)?;
        pnm::save(&cfg.out.join(format!("{}.pgm", data::stem(f))), &map)?;
    }
    eprintln!("wrote {} maps to {}", files.len(), cfg.out.display());
    Ok(())
}

/// Score prediction maps against ground-truth maps matched by file stem.
pub fn eval_dirs(pred_dir: &Path, gt_dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let preds = data::load_maps(pred_dir)?;
    let gts = data::load_maps(gt_dir)?;
    let mut p = Vec::with_capacity(gts.len());
    let mut g = Vec::with_capacity(gts.len());
    for (name, gt) in gts {
        let pred = preds
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| CliError::Validation(format!("no prediction for `{name}` in {}", pred_dir.display())))?;
        p.push(pred.1.clone());
        g.push(gt);
    }
    if g.is_empty() {
        return Err(CliError::Validation(format!("no ground-truth maps in {}", gt_dir.display())));
    }
    let report = evaluate(&p, &g, DEFAULT_THRESHOLDS, BETA_SQUARED)?;
    emit(out, &report.to_csv())
}

/// Score the checkpoint on the dataset directory, or on the synthetic
/// held-out range when no dataset is configured.
pub fn eval_model(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    cfg.validate()?;
    let model = load_model(cfg)?;
    let samples = match &cfg.dataset {
        Some(dir) => data::load_dir(dir)?,
        None => holdout_data(cfg)?,
    };
    let images: Vec<Tensor> = samples.iter().map(|s| s.image.clone()).collect();
    let gts: Vec<Tensor> = samples.into_iter().map(|s| s.mask).collect();
    let report = evaluate(&predict_all(&model, &images)?, &gts, DEFAULT_THRESHOLDS, BETA_SQUARED)?;
    emit(out, &report.to_csv())
}

pub fn cost(cfg: &RunConfig, csv: bool, out: &mut dyn Write) -> Result<(), CliError> {
    cfg.validate()?;
    let graph = build_network(&cfg.net)?;
    let report = cost_report(&graph, graph.input_shape())?;
    emit(out, &if csv { report.to_csv() } else { report.to_table() })
}

/// Per-operator table, then optional full-network rows. Fails when any row
/// exceeds the tolerance.
pub fn gradcheck(seed: u64, network: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for c in operator_checks(seed, 1e-5)? {
        rows.push((c.name.to_string(), c.report));
    }
    if network {
        let opts = GradCheckOptions {
            epsilon: 1e-4,
            max_coords_per_param: Some(2),
            seed,
        };
        let r = network_check(BackboneKind::ResnetLike, AblationVariant::SrNet, 64, seed, &opts)?;
        rows.push(("network:resnet-srnet-64".into(), r));
    }
    let mut text = format!("{:<28} {:>8} {:>8} {:>14}  status\n", "op", "checked", "skipped", "max_rel_error");
    let mut worst: f64 = 0.0;
    for (name, r) in &rows {
        let ok = r.max_rel_error <= TOLERANCE && r.checked > 0;
        worst = worst.max(r.max_rel_error);
        let _ = writeln!(
            text,
            "{name:<28} {:>8} {:>8} {:>14.3e}  {}",
            r.checked,
            r.skipped,
            r.max_rel_error,
            if ok { "ok" } else { "FAIL" }
        );
    }
    emit(out, &text)?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|(_, r)| r.max_rel_error > TOLERANCE || r.checked == 0)
        .map(|(n, _)| n.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow::anyhow!(
            "gradient check failed for {} (worst {worst:.3e} > {TOLERANCE:e})",
            failed.join(", ")
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub depth: usize,
    pub fbeta_max: f64,
    pub mae: f64,
    pub params: u64,
    pub flops: u64,
}

impl SweepRow {
    pub const HEADER: &'static str = "depth,fbeta_max,mae,params,flops";

    pub fn csv(&self) -> String {
        format!("{},{},{},{},{}", self.depth, self.fbeta_max, self.mae, self.params, self.flops)
    }
}

/// For each requested depth-wise layer count: build the network, audit it,
/// train it for the configured epochs and score it on held-out data.
pub fn sweep_depth(cfg: &RunConfig, depths: &[usize], out: &mut dyn Write) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    if !matches!(cfg.net.ablation, AblationVariant::SrNet | AblationVariant::Bfr) {
        return Err(CliError::Validation(format!(
            "sweep-depth needs a variant with a reasoning module, not {}",
            cfg.net.ablation
        )));
    }
    if depths.is_empty() {
        return Err(CliError::Usage("no depths requested".into()));
    }
    let train_set = if cfg.epochs > 0 { training_data(cfg)? } else { Vec::new() };
    let held = holdout_data(cfg)?;
    let images: Vec<Tensor> = held.iter().map(|s| s.image.clone()).collect();
    let gts: Vec<Tensor> = held.iter().map(|s| s.mask.clone()).collect();
    emit(out, &format!("{}\n", SweepRow::HEADER))?;
    let mut rows = Vec::with_capacity(depths.len());
    for &d in depths {
        let mut net: NetConfig = cfg.net.clone();
        net.reasoning = ReasoningConfig::for_depthwise_layers(d, &cfg.net.reasoning)?;
        if net.ablation == AblationVariant::Bfr {
            net.reasoning = net.reasoning.with_dilations_forced_to_one();
        }
        let graph = build_network(&net)?;
        let depth = graph
            .convs()
            .filter(|(l, s)| l.component == Component::Reasoning && s.is_depthwise())
            .count();
        let report = cost_report(&graph, graph.input_shape())?;
        let mut model = Model::new(graph, cfg.seed);
        if cfg.epochs > 0 {
            train(&mut model, &train_set, &cfg.train_config(), |log| {
                eprintln!("depth {d} epoch {} loss {:.5}", log.epoch, log.mean_loss);
            })?;
        }
        let scores = evaluate(&predict_all(&model, &images)?, &gts, DEFAULT_THRESHOLDS, BETA_SQUARED)?;
        let row = SweepRow {
            depth,
            fbeta_max: scores.f_beta_max,
            mae: scores.mae,
            params: count_params(&model.graph),
            flops: report.total().mult_adds,
        };
        emit(out, &format!("{}\n", row.csv()))?;
        rows.push(row);
    }
    Ok(rows)
}
