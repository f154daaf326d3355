use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use qsurrogate_core::baselines::{mean_l, BaselineError, TwoMomentSpec};
use qsurrogate_core::datagen::{
    build_testset2, generate_dataset, label_specs, read_dataset, write_dataset, Dataset,
    DatagenError, DatasetHeader, GenerateOptions, LabelConfig, SCHEMA_VERSION,
};
use qsurrogate_core::designopt::{
    brute_force, CostSpec, DesignError, Evaluator, ExactMmcEvaluator, NnEvaluator, SimEvaluator,
};
use qsurrogate_core::dists::{Dist, DistError, ParametricDist};
use qsurrogate_core::metrics::{
    lattice_mean, rem_from_means, report, EvalPair, MetricsError, RemDenominator,
};
use qsurrogate_core::neuralnet::{train_with_progress, ModelFile, NnError, TrainConfig, MODEL_VERSION};
use qsurrogate_core::seed::derive_seed;
use qsurrogate_core::simqueue::{
    mmc_exact, replication_ci, simulate, simulate_hetero, QueueSpec, SimConfig, SimError,
    SimResult,
};
use qsurrogate_core::SystemKind;
use rayon::prelude::*;
use serde_json::json;

use crate::files::{self, FORMAT_VERSION};
use crate::manifest::{self, digest, unix_now, RunManifest, Schemas, MANIFEST_VERSION};
use crate::{
    BaselineArgs, CiArgs, Cli, Command, EvaluateArgs, ExactMmcArgs, GenDataArgs, InferArgs,
    OptimizeArgs, ReplayArgs, SimFlags, SimulateArgs, Testset2Args, TrainArgs,
};

/// Outputs of a replay differ from the recorded digests.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ReplayMismatch(String);

/// Short machine-readable class for the error record.
pub fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<ReplayMismatch>() {
            return "replay_mismatch";
        }
        if cause.is::<MetricsError>() {
            return "metrics";
        }
        if cause.is::<DatagenError>() {
            return "dataset";
        }
        if cause.is::<NnError>() {
            return "model";
        }
        if cause.is::<SimError>() {
            return "simulation";
        }
        if cause.is::<DistError>() {
            return "distribution";
        }
        if cause.is::<BaselineError>() {
            return "baseline";
        }
        if cause.is::<DesignError>() {
            return "design";
        }
        if cause.is::<serde_json::Error>() {
            return "parse";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "validation"
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    execute(cli, argv).map(|_| ())
}

/// Runs one command and writes its manifest; returns the manifest when the
/// command produced output files.
fn execute(cli: Cli, argv: Vec<String>) -> Result<Option<RunManifest>> {
    if let Command::Replay(args) = &cli.command {
        replay(args)?;
        return Ok(None);
    }
    let started = unix_now();
    let inputs = input_files(&cli.command)
        .into_iter()
        .map(|(role, p)| digest(role, &p))
        .collect::<Result<Vec<_>>>()?;
    match &cli.command {
        Command::GenData(a) => gen_data(a, cli.jobs)?,
        Command::Testset2(a) => testset2(a)?,
        Command::Simulate(a) => simulate_cmd(a)?,
        Command::ExactMmc(a) => exact_mmc(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Infer(a) => infer(a)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Baseline(a) => baseline(a)?,
        Command::Optimize(a) => optimize(a)?,
        Command::Ci(a) => ci(a)?,
        Command::Replay(_) => unreachable!("handled above"),
    }
    let outputs = output_files(&cli.command);
    let Some((_, primary)) = outputs.first().cloned() else {
        return Ok(None);
    };
    let outputs = outputs
        .into_iter()
        .map(|(role, p)| digest(role, &p))
        .collect::<Result<Vec<_>>>()?;
    let mut flags = command_flags(&cli.command)?;
    flags["jobs"] = json!(cli.jobs);
    let m = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command.name().to_string(),
        argv,
        flags,
        seed: command_seed(&cli.command),
        schemas: Schemas {
            manifest: MANIFEST_VERSION,
            dataset: SCHEMA_VERSION,
            model: MODEL_VERSION,
        },
        started_unix: started,
        finished_unix: unix_now(),
        inputs,
        outputs,
    };
    m.write(&primary)?;
    Ok(Some(m))
}

fn command_flags(c: &Command) -> Result<serde_json::Value> {
    Ok(match c {
        Command::GenData(a) => serde_json::to_value(a)?,
        Command::Testset2(a) => serde_json::to_value(a)?,
        Command::Simulate(a) => serde_json::to_value(a)?,
        Command::ExactMmc(a) => serde_json::to_value(a)?,
        Command::Train(a) => serde_json::to_value(a)?,
        Command::Infer(a) => serde_json::to_value(a)?,
        Command::Evaluate(a) => serde_json::to_value(a)?,
        Command::Baseline(a) => serde_json::to_value(a)?,
        Command::Optimize(a) => serde_json::to_value(a)?,
        Command::Ci(a) => serde_json::to_value(a)?,
        Command::Replay(a) => serde_json::to_value(a)?,
    })
}

fn command_seed(c: &Command) -> Option<u64> {
    match c {
        Command::GenData(a) => Some(a.seed),
        Command::Testset2(a) => a.label.then_some(a.seed),
        Command::Simulate(a) => Some(a.seed),
        Command::Train(a) => Some(a.seed),
        Command::Optimize(a) => Some(a.seed),
        Command::Ci(a) => Some(a.seed),
        _ => None,
    }
}

fn input_files(c: &Command) -> Vec<(&'static str, PathBuf)> {
    let mut v = Vec::new();
    match c {
        Command::Simulate(a) => v.push(("--spec", a.spec.clone())),
        Command::Ci(a) => v.push(("--spec", a.spec.clone())),
        Command::Train(a) => v.push(("--data", a.data.clone())),
        Command::Infer(a) => {
            v.push(("--model", a.model.clone()));
            v.push(("--in", a.input.clone()));
        }
        Command::Evaluate(a) => {
            v.push(("--truth", a.truth.clone()));
            v.push(("--pred", a.pred.clone()));
            if let Some(m) = &a.meta {
                v.push(("--meta", m.clone()));
            }
        }
        Command::Baseline(a) => v.extend(a.data.clone().map(|p| ("--data", p))),
        Command::Optimize(a) => {
            v.extend(a.model.clone().map(|p| ("--model", p)));
            v.extend(a.arrival.clone().map(|p| ("--arrival", p)));
            v.extend(a.service_shape.clone().map(|p| ("--service-shape", p)));
        }
        _ => {}
    }
    v
}

/// Output files in manifest order; the first one carries the manifest.
fn output_files(c: &Command) -> Vec<(&'static str, PathBuf)> {
    match c {
        Command::GenData(a) => vec![("--out", a.out.clone())],
        Command::Testset2(a) => vec![("--out", a.out.clone())],
        Command::Simulate(a) => a.out.clone().map(|p| ("--out", p)).into_iter().collect(),
        Command::ExactMmc(a) => a.out.clone().map(|p| ("--out", p)).into_iter().collect(),
        Command::Train(a) => vec![("--out", a.out.clone()), ("history", history_path(&a.out))],
        Command::Infer(a) => vec![("--out", a.out.clone())],
        Command::Evaluate(a) => vec![("--out", a.out.clone())],
        Command::Baseline(a) => a.out.clone().map(|p| ("--out", p)).into_iter().collect(),
        Command::Optimize(a) => vec![("--out", a.out.clone())],
        Command::Ci(a) => a.out.clone().map(|p| ("--out", p)).into_iter().collect(),
        Command::Replay(_) => Vec::new(),
    }
}

fn history_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".history.json");
    PathBuf::from(s)
}

fn sim_config(f: &SimFlags, seed: u64) -> SimConfig {
    SimConfig {
        num_arrivals: f.arrivals,
        warmup_fraction: f.warmup,
        seed,
        truncation: f.l,
    }
}

fn label_config(f: &SimFlags, delta: f64) -> LabelConfig {
    LabelConfig {
        sim: sim_config(f, 0),
        delta,
        idle_rule: f.idle_rule,
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn gen_data(a: &GenDataArgs, jobs: usize) -> Result<()> {
    let mut opts = GenerateOptions::new(a.system, a.count, a.seed);
    opts.gen.family = a.family;
    opts.gen.ph.max_order = a.max_order;
    opts.label = label_config(&a.sim, a.delta);
    opts.n_moments = a.n_moments;
    opts.augment_swap = a.augment_swap;
    opts.exact_labels = a.exact_labels;
    opts.jobs = jobs;
    let s = generate_dataset(&a.out, &opts)?;
    print_json(&json!({
        "rows": s.resumed + s.generated,
        "resumed": s.resumed,
        "generated": s.generated,
        "rejected": s.rejected,
    }));
    Ok(())
}

fn testset2(a: &Testset2Args) -> Result<()> {
    let specs = build_testset2(a.system)?;
    if a.label {
        let rows = label_specs(&specs, &label_config(&a.sim, a.delta), a.seed, a.n_moments)?;
        let flagged = rows.iter().filter(|r| r.meta.flagged).count();
        let data = Dataset {
            header: DatasetHeader::new(a.system, a.n_moments, a.sim.l),
            rows,
        };
        write_dataset(&a.out, &data)?;
        print_json(&json!({"rows": data.len(), "flagged": flagged}));
    } else {
        let header = json!({
            "v": FORMAT_VERSION,
            "kind": "testset2",
            "system": a.system,
            "count": specs.len(),
        });
        files::write_json_lines(&a.out, &header, &specs)?;
        print_json(&json!({"rows": specs.len()}));
    }
    Ok(())
}

fn run_sim(spec: &QueueSpec, cfg: &SimConfig, f: &SimFlags) -> Result<SimResult, SimError> {
    if spec.is_heterogeneous() {
        simulate_hetero(spec, cfg, f.idle_rule)
    } else {
        simulate(spec, cfg)
    }
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let specs = files::read_specs(&a.spec)?;
    let results: Vec<SimResult> = if specs.len() == 1 {
        vec![run_sim(&specs[0], &sim_config(&a.sim, a.seed), &a.sim)?]
    } else {
        specs
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let cfg = sim_config(&a.sim, derive_seed(a.seed, &[i as u64]));
                run_sim(s, &cfg, &a.sim).with_context(|| format!("spec {i}"))
            })
            .collect::<Result<_>>()?
    };
    match &a.out {
        Some(out) => {
            let header = json!({"v": FORMAT_VERSION, "kind": "sim-results", "l": a.sim.l});
            files::write_json_lines(out, &header, &results)?;
        }
        None if results.len() == 1 => print_json(&serde_json::to_value(&results[0])?),
        None => {
            for r in &results {
                println!("{}", serde_json::to_string(r)?);
            }
        }
    }
    Ok(())
}

fn exact_mmc(a: &ExactMmcArgs) -> Result<()> {
    let s = mmc_exact(a.lambda, a.mu, a.c, a.l)?;
    let v = json!({
        "v": FORMAT_VERSION,
        "lambda": a.lambda,
        "mu": a.mu,
        "c": a.c,
        "l": a.l,
        "probs": s.probs.as_slice(),
        "tail_mass": s.tail_mass,
        "wait_probability": s.wait_probability,
        "mean_L": s.mean_l,
    });
    if let Some(out) = &a.out {
        files::write_json(out, &v)?;
    }
    print_json(&v);
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let cfg = TrainConfig {
        batch: a.batch,
        lr: a.lr,
        epochs: a.epochs,
        n_moments: a.n_moments.unwrap_or(data.header.n),
        val_fraction: a.val_fraction,
        seed: a.seed,
        patience: a.patience,
        hidden: a.hidden.clone(),
        init_output_bias: !a.no_bias_init,
        weight_decay: a.weight_decay,
    };
    let trained = train_with_progress(&data, &cfg, &mut |s| {
        eprintln!(
            "{}",
            json!({"epoch": s.epoch, "train_loss": s.train_loss, "val_loss": s.val_loss, "val_sae": s.val_sae})
        );
    })?;
    trained.model.save(&a.out)?;
    let best = trained.best().clone();
    files::write_json(
        &history_path(&a.out),
        &json!({
            "v": FORMAT_VERSION,
            "config": cfg,
            "best_epoch": trained.best_epoch,
            "history": trained.history,
        }),
    )?;
    print_json(&json!({
        "rows": data.len(),
        "params": trained.model.mlp.num_params(),
        "best_epoch": best.epoch,
        "val_sae": best.val_sae,
        "val_loss": best.val_loss,
    }));
    Ok(())
}

fn infer(a: &InferArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let features = files::read_features(&a.input)?;
    let pred = model.predict(&features)?;
    let header = json!({
        "v": FORMAT_VERSION,
        "kind": "predictions",
        "system": model.system,
        "l": model.mlp.output_dim(),
    });
    files::write_json_lines(&a.out, &header, &pred)?;
    print_json(&json!({"rows": pred.len()}));
    Ok(())
}

fn parse_denominator(s: &str) -> Result<RemDenominator> {
    match s {
        "predicted" => Ok(RemDenominator::Predicted),
        "truth" => Ok(RemDenominator::Truth),
        other => bail!("unknown REM denominator '{other}' (expected predicted or truth)"),
    }
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let denominator = parse_denominator(&a.rem_denominator)?;
    let truth_data = files::try_dataset(&a.truth)?;
    let truth = match &truth_data {
        Some(d) => d.labels(),
        None => files::read_prob_rows(&a.truth)?,
    };
    let pred = files::read_prob_rows(&a.pred)?;
    let pair = EvalPair::new(truth, pred)?;
    let metas = match (&a.meta, &truth_data) {
        (Some(p), _) => files::read_metas(p)?,
        (None, Some(d)) => d.metas().iter().map(|m| m.segment_meta()).collect(),
        (None, None) => bail!("--meta is required when --truth is not a dataset file"),
    };
    let kind = match &truth_data {
        Some(d) => d.header.system,
        None if metas.first().is_some_and(|m| m.scv_services.len() == 2) => SystemKind::Gg2,
        None => SystemKind::Ggc,
    };
    let r = report(&pair, &metas, kind, &a.percentiles, denominator)?;
    files::write_text(&a.out, &r.to_csv())?;
    let rem = pair.rem(denominator);
    print_json(&json!({
        "rows": pair.len(),
        "sae": pair.sae(),
        "rem": rem.value,
        "rem_excluded": rem.excluded,
    }));
    Ok(())
}

fn baseline(a: &BaselineArgs) -> Result<()> {
    let Some(path) = &a.data else {
        let spec = TwoMomentSpec {
            lambda: a.lambda.ok_or_else(|| anyhow!("--lambda is required"))?,
            mu: a.mu.ok_or_else(|| anyhow!("--mu is required"))?,
            c: a.c.ok_or_else(|| anyhow!("--c is required"))?,
            ca2: a.ca2.ok_or_else(|| anyhow!("--ca2 is required"))?,
            cs2: a.cs2.ok_or_else(|| anyhow!("--cs2 is required"))?,
        };
        let v = json!({
            "v": FORMAT_VERSION,
            "variant": a.variant,
            "rho": spec.rho(),
            "mean_L": mean_l(&spec, a.variant)?,
        });
        if let Some(out) = &a.out {
            files::write_json(out, &v)?;
        }
        print_json(&v);
        return Ok(());
    };
    let data = read_dataset(path)?;
    if data.header.system != SystemKind::Ggc {
        bail!("two-moment baselines apply to GI/GI/c datasets only");
    }
    let mut rows = Vec::with_capacity(data.len());
    let mut means = Vec::new();
    for (i, r) in data.rows.iter().enumerate() {
        let spec = r.meta.two_moment_spec().expect("GI/GI/c row");
        match mean_l(&spec, a.variant) {
            Ok(m) => {
                means.push((lattice_mean(&r.label), m));
                rows.push(json!({"row": i, "mean_L": m}));
            }
            Err(e) => rows.push(json!({"row": i, "error": e.to_string()})),
        }
    }
    if let Some(out) = &a.out {
        let header = json!({"v": FORMAT_VERSION, "kind": "baseline", "variant": a.variant});
        files::write_json_lines(out, &header, &rows)?;
    }
    let rem = rem_from_means(&means, RemDenominator::Predicted);
    print_json(&json!({
        "variant": a.variant,
        "rows": data.len(),
        "evaluated": means.len(),
        "rem": rem.value,
        "rem_excluded": rem.excluded,
    }));
    Ok(())
}

fn is_exponential(d: &Dist) -> bool {
    matches!(d, Dist::Parametric(ParametricDist::Exponential { .. }))
}

fn optimize(a: &OptimizeArgs) -> Result<()> {
    let backend = match &a.evaluator {
        Some(e) => e.clone(),
        None if a.model.is_some() => "nn".to_string(),
        None => "exact".to_string(),
    };
    let arrival = match &a.arrival {
        Some(p) => files::read_dist(p)?,
        None => Dist::exponential(1.0)?,
    };
    let shape = match &a.service_shape {
        Some(p) => files::read_dist(p)?,
        None if backend == "exact" => Dist::exponential(1.0)?,
        None => Dist::Parametric(ParametricDist::gamma_with_mean_scv(1.0, 4.0)?),
    };
    let spec = CostSpec {
        c1_base: a.c1_base,
        c1_exponent: a.c1_exponent,
        c2: a.c2,
        rate_min: a.rate_min,
        rate_max: a.rate_max,
        rate_step: a.rate_step,
        c_max: a.c_max,
        queue_only: a.queue_only,
    };
    let lambda = 1.0 / arrival.mean();
    let model;
    let evaluator: Box<dyn Evaluator + '_> = match backend.as_str() {
        "exact" => {
            if !is_exponential(&arrival) || !is_exponential(&shape) {
                bail!("the exact evaluator needs exponential arrival and service laws");
            }
            Box::new(ExactMmcEvaluator { lambda })
        }
        "nn" => {
            let path = a
                .model
                .as_ref()
                .ok_or_else(|| anyhow!("--model is required for the nn evaluator"))?;
            model = ModelFile::load(path)?;
            if model.system != SystemKind::Ggc {
                bail!("optimize needs a GI/GI/c model, got {}", model.system);
            }
            Box::new(NnEvaluator {
                model: &model,
                arrival,
                service_shape: shape,
                rho_max: a.rho_max,
            })
        }
        "sim" => Box::new(SimEvaluator {
            arrival,
            service_shape: shape,
            sim: SimConfig {
                num_arrivals: a.arrivals,
                seed: a.seed,
                ..SimConfig::default()
            },
        }),
        other => bail!("unknown evaluator '{other}' (expected nn, exact or sim)"),
    };
    let surface = brute_force(evaluator.as_ref(), lambda, &spec)?;
    files::write_text(&a.out, &surface.to_csv())?;
    print_json(&json!({
        "evaluator": backend,
        "cells": surface.cells.len(),
        "feasible": surface.feasible(),
        "optimum": surface.optimum,
    }));
    Ok(())
}

fn ci(a: &CiArgs) -> Result<()> {
    let specs = files::read_specs(&a.spec)?;
    if specs.len() != 1 {
        bail!("ci takes exactly one spec, found {}", specs.len());
    }
    let r = replication_ci(&specs[0], &sim_config(&a.sim, a.seed), a.reps, a.sim.idle_rule)?;
    let v = serde_json::to_value(&r)?;
    if let Some(out) = &a.out {
        files::write_json(out, &v)?;
    }
    print_json(&v);
    Ok(())
}

/// Points every output flag of `argv` into `dir`.
fn redirect_outputs(argv: &[String], roles: &[String], dir: &Path) -> Result<Vec<String>> {
    let relocate = |p: &str| -> Result<String> {
        let name = Path::new(p)
            .file_name()
            .ok_or_else(|| anyhow!("output path '{p}' has no file name"))?;
        Ok(dir.join(name).to_string_lossy().into_owned())
    };
    let mut out = Vec::with_capacity(argv.len());
    let mut i = 0;
    while i < argv.len() {
        let a = &argv[i];
        if roles.iter().any(|r| r == a) && i + 1 < argv.len() {
            out.push(a.clone());
            out.push(relocate(&argv[i + 1])?);
            i += 2;
            continue;
        }
        match a.split_once('=') {
            Some((flag, value)) if roles.iter().any(|r| r == flag) => {
                out.push(format!("{flag}={}", relocate(value)?));
            }
            _ => out.push(a.clone()),
        }
        i += 1;
    }
    Ok(out)
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let recorded = RunManifest::read(&a.manifest)?;
    for input in &recorded.inputs {
        let now = digest(&input.role, &input.path)?;
        if now.sha256 != input.sha256 {
            return Err(ReplayMismatch(format!(
                "input {} ({}) changed since the recorded run",
                input.role,
                input.path.display()
            ))
            .into());
        }
    }
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let roles: Vec<String> = recorded
        .outputs
        .iter()
        .filter(|o| o.role.starts_with("--"))
        .map(|o| o.role.clone())
        .collect();
    let argv = redirect_outputs(&recorded.argv, &roles, &a.out_dir)?;
    for o in &recorded.outputs {
        let target = a.out_dir.join(o.path.file_name().unwrap_or_default());
        if let (Ok(x), Ok(y)) = (target.canonicalize(), o.path.canonicalize()) {
            if x == y {
                bail!("--out-dir must differ from the directory of {}", o.path.display());
            }
        }
    }
    let full: Vec<String> = std::iter::once("qsurrogate".to_string())
        .chain(argv.iter().cloned())
        .collect();
    let cli = Cli::try_parse_from(&full).context("recorded arguments no longer parse")?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!("a replay manifest cannot be replayed");
    }
    let fresh = execute(cli, argv)?
        .ok_or_else(|| anyhow!("replayed command produced no output files"))?;
    let mut rows = Vec::new();
    let mut mismatched = Vec::new();
    for (old, new) in recorded.outputs.iter().zip(&fresh.outputs) {
        let same = old.sha256 == new.sha256 && old.role == new.role;
        if !same {
            mismatched.push(old.role.clone());
        }
        rows.push(json!({
            "role": old.role,
            "recorded": old.sha256,
            "replayed": new.sha256,
            "path": new.path,
            "identical": same,
        }));
    }
    if recorded.outputs.len() != fresh.outputs.len() {
        mismatched.push("output count".into());
    }
    print_json(&json!({
        "command": recorded.command,
        "manifest": manifest::manifest_path(&fresh.outputs[0].path),
        "outputs": rows,
        "identical": mismatched.is_empty(),
    }));
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(ReplayMismatch(format!("replayed outputs differ: {}", mismatched.join(", "))).into())
    }
}
