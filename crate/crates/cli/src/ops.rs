//! Command implementations. Every command resolves the config (file +
//! overrides), works inside the run directory, and registers the artifacts it
//! writes in the manifest.

use std::path::{Path, PathBuf};

use spikectl_core::checkpoint::{self, Checkpoint};
use spikectl_core::config::PipelineConfig;

use spikectl_core::error::{Error, Result};
use spikectl_core::eval::{correlation_vs_shift, open_loop_mse, sparsity, EvalController, EvalReport};
use spikectl_core::manifest::{layout, ArtifactKind, RunManifest};
use spikectl_core::pipeline::{self, GenController, RoundSpec};
use spikectl_core::sim::{self, Episode, Script};
use spikectl_core::training::TrainRun;
use spikectl_core::SpikingNetwork;

pub struct Context {
    pub cfg: PipelineConfig,
    pub root: PathBuf,
    pub manifest: RunManifest,
}

impl Context {
    pub fn new(
        config: Option<&Path>,
        run_dir: Option<&Path>,
        seed: Option<u64>,
        threads: Option<usize>,
        deterministic: bool,
        overrides: &[String],
    ) -> Result<Self> {
        let text = match config {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => PipelineConfig::default().to_toml()?,
        };
        let mut tree: toml::Value = text
            .parse()
            .map_err(|e| Error::Config(format!("config parse: {e}")))?;
        for kv in overrides {
            apply_override(&mut tree, kv)?;
        }
        if let Some(s) = seed {
            apply_override(&mut tree, &format!("run.seed={s}"))?;
        }
        if let Some(t) = threads {
            apply_override(&mut tree, &format!("run.threads={t}"))?;
        }
        if deterministic {
            apply_override(&mut tree, "run.deterministic=true")?;
        }
        let cfg = PipelineConfig::from_toml(&toml::to_string(&tree).unwrap_or_default())?;

        let workers = if cfg.run.deterministic {
            1
        } else {
            cfg.run.threads
        };
        if workers > 0 {
            // Ignore the error if a pool already exists (tests).
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global();
        }

        let root = run_dir
            .map(|p| p.to_path_buf())
            .or_else(|| std::env::var_os("SPIKECTL_RUN_ROOT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("run"));
        std::fs::create_dir_all(&root)?;
        let manifest = RunManifest::load_or_default(&root)?;
        Ok(Context {
            cfg,
            root,
            manifest,
        })
    }

    fn record(&mut self, rel: impl AsRef<Path>, kind: ArtifactKind, reproducible: bool) -> Result<()> {
        self.manifest.record(&self.root, rel, kind, reproducible)?;
        self.manifest.save(&self.root)
    }

    /// Resolved-config echo, registered once per invocation.
    fn echo_config(&mut self) -> Result<()> {
        let path = self.root.join("config.echo.toml");
        std::fs::write(&path, self.cfg.to_toml()?)?;
        self.record("config.echo.toml", ArtifactKind::Config, true)
    }

    fn episodes_dir(&self, round: &str) -> PathBuf {
        self.root.join(layout::EPISODES).join(round)
    }

    fn load_rounds(&self, rounds: &str) -> Result<Vec<Vec<Episode>>> {
        let mut out = Vec::new();
        for round in rounds.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let dir = self.episodes_dir(round);
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|_| {
                    Error::Config(format!(
                        "no episodes for round `{round}` under {} (run gen-data first)",
                        dir.display()
                    ))
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            let mut eps = Vec::with_capacity(files.len());
            for f in &files {
                eps.push(sim::load_files(f)?);
            }
            if eps.is_empty() {
                return Err(Error::Config(format!("round `{round}` has no episode files")));
            }
            out.push(eps);
        }
        Ok(out)
    }

    fn load_net(&self, path: &Path) -> Result<(SpikingNetwork<f32>, String)> {
        checkpoint::load_network(path)
    }
}

fn apply_override(tree: &mut toml::Value, kv: &str) -> Result<()> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{kv}`")))?;
    let parsed: toml::Value = value
        .parse()
        .unwrap_or_else(|_| toml::Value::String(value.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("config key `{key}`: `{part}` is not a table")))?;
        if i == parts.len() - 1 {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    Ok(())
}

fn save_checkpoint_cmd(
    ctx: &mut Context,
    run: &TrainRun,
    name: &str,
) -> Result<(PathBuf, String)> {
    let rel = PathBuf::from(layout::CHECKPOINTS).join(format!("{name}.ckpt.json"));
    let path = ctx.root.join(&rel);
    let hash = checkpoint::save(&Checkpoint::new(run.net.clone(), run.held_out.clone()), &path)?;
    ctx.record(&rel, ArtifactKind::Checkpoint, true)?;

    // Per-epoch metrics next to the reports (wall time makes this file
    // diagnostic, not reproducible).
    let metrics_rel = PathBuf::from(layout::REPORTS).join(format!("train-{name}.metrics.csv"));
    let mpath = ctx.root.join(&metrics_rel);
    std::fs::create_dir_all(mpath.parent().unwrap())?;
    let mut csv = String::from("epoch,total,mse,pearson_term,grad_norm,wall_time_s\n");
    for m in &run.metrics {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.epoch, m.total, m.mse, m.pearson_term, m.grad_norm, m.wall_time_s
        ));
    }
    std::fs::write(&mpath, csv)?;
    ctx.record(&metrics_rel, ArtifactKind::Metrics, false)?;
    Ok((path, hash))
}

fn save_stats(ctx: &mut Context, corpus: &spikectl_core::dataset::Corpus, tag: &str) -> Result<()> {
    let rel = PathBuf::from(layout::STATS).join(format!("stats-{tag}.json"));
    let path = ctx.root.join(&rel);
    std::fs::create_dir_all(path.parent().unwrap())?;
    std::fs::write(&path, serde_json::to_vec_pretty(&corpus.stats)?)?;
    ctx.record(&rel, ArtifactKind::Stats, true)?;

    // Corpus manifest: episode files, hashes, round tags.
    #[derive(serde::Serialize)]
    struct CorpusEntry {
        id: String,
        round: String,
        csv: String,
        sha256: String,
    }
    let mut entries = Vec::new();
    for ep in &corpus.episodes {
        let rel_csv = format!("{}/{}/{}.csv", layout::EPISODES, ep.sidecar.round, ep.id());
        let hash = spikectl_core::hashing::sha256_file(&ctx.root.join(&rel_csv))
            .unwrap_or_else(|_| "unavailable".into());
        entries.push(CorpusEntry {
            id: ep.id().to_string(),
            round: ep.sidecar.round.clone(),
            csv: rel_csv,
            sha256: hash,
        });
    }
    let rel = PathBuf::from(layout::STATS).join(format!("corpus-{tag}.json"));
    std::fs::write(
        ctx.root.join(&rel),
        serde_json::to_vec_pretty(&serde_json::json!({
            "episodes": entries,
            "stats": format!("{}/stats-{tag}.json", layout::STATS),
        }))?,
    )?;
    ctx.record(&rel, ArtifactKind::Corpus, true)
}

pub fn gen_data(
    ctx: &mut Context,
    round: &str,
    minutes: Option<f64>,
    est: Option<&Path>,
    ctl: Option<&Path>,
) -> Result<()> {
    ctx.echo_config()?;
    let (round_index, default_minutes) = match round {
        "expert" => (0, ctx.cfg.dataset.round0_minutes),
        "snn" => (1, ctx.cfg.dataset.round1_minutes),
        "disturbed" => (2, ctx.cfg.dataset.round2_minutes),
        other => {
            return Err(Error::Config(format!(
                "unknown round `{other}` (expected expert | snn | disturbed)"
            )))
        }
    };
    let minutes = minutes.unwrap_or(default_minutes);

    let loaded;
    let controller = match round {
        "snn" => {
            let est = est.ok_or_else(|| Error::Config("snn round needs --est".into()))?;
            let ctl = ctl.ok_or_else(|| Error::Config("snn round needs --ctl".into()))?;
            loaded = (ctx.load_net(est)?, ctx.load_net(ctl)?);
            GenController::SnnPipeline {
                estimator: &loaded.0 .0,
                controller: &loaded.1 .0,
            }
        }
        _ => GenController::Expert,
    };

    let episodes = pipeline::generate_round(
        &ctx.cfg,
        &RoundSpec {
            name: round,
            minutes,
            controller,
            disturbed: round == "disturbed",
            round_index,
        },
    )?;
    let dir = ctx.episodes_dir(round);
    let mut unusable = 0;
    for ep in &episodes {
        sim::write_files(ep, &dir)?;
        let base = format!("{}/{}/{}", layout::EPISODES, round, ep.id());
        ctx.manifest
            .record(&ctx.root, format!("{base}.csv"), ArtifactKind::Episode, true)?;
        ctx.manifest
            .record(&ctx.root, format!("{base}.json"), ArtifactKind::Sidecar, true)?;
        if !ep.sidecar.usable {
            unusable += 1;
        }
    }
    ctx.manifest.save(&ctx.root)?;
    println!(
        "gen-data: wrote {} episodes ({:.1} min, round `{round}`), {unusable} unusable",
        episodes.len(),
        minutes
    );
    Ok(())
}

pub fn train_est(ctx: &mut Context, rounds: &str) -> Result<()> {
    ctx.echo_config()?;
    let corpus = pipeline::corpus_from_rounds(ctx.load_rounds(rounds)?)?;
    save_stats(ctx, &corpus, "estimator")?;
    let (run, data) = pipeline::train_estimator_stage(&corpus, &ctx.cfg)?;
    let (_, hash) = save_checkpoint_cmd(ctx, &run, "estimator")?;
    println!(
        "train-est: {} train / {} held-out sequences, final loss {:.5}, held-out {:.5}, checkpoint {hash}",
        data.train.len(),
        data.val.len(),
        run.metrics.last().map(|m| m.total).unwrap_or(f64::NAN),
        run.held_out.as_ref().map(|h| h.total).unwrap_or(f64::NAN),
    );
    Ok(())
}

pub fn train_integrator(ctx: &mut Context, rounds: &str) -> Result<()> {
    ctx.echo_config()?;
    let corpus = pipeline::corpus_from_rounds(ctx.load_rounds(rounds)?)?;
    save_stats(ctx, &corpus, "integrator")?;
    let (run, data) = pipeline::train_integrator_stage(&corpus, &ctx.cfg)?;
    let (_, hash) = save_checkpoint_cmd(ctx, &run, "integrator")?;
    println!(
        "train-integrator: {} sequences, final loss {:.5}, checkpoint {hash}",
        data.train.len(),
        run.metrics.last().map(|m| m.total).unwrap_or(f64::NAN),
    );
    Ok(())
}

pub fn train_ctl(
    ctx: &mut Context,
    rounds: &str,
    integrator: Option<&Path>,
    shift: Option<usize>,
    name: &str,
) -> Result<()> {
    ctx.echo_config()?;
    let corpus = pipeline::corpus_from_rounds(ctx.load_rounds(rounds)?)?;
    save_stats(ctx, &corpus, name)?;
    let mut tc = ctx.cfg.training.controller.clone();
    if let Some(d) = shift {
        tc.target_shift = d;
    }
    let block = match integrator {
        Some(p) => Some(ctx.load_net(p)?.0),
        None => None,
    };
    let (run, data) = pipeline::train_controller_stage(&corpus, &ctx.cfg, &tc, block.as_ref())?;
    let (_, hash) = save_checkpoint_cmd(ctx, &run, name)?;
    println!(
        "train-ctl[{name}]: d={} {} sequences, final loss {:.5}, held-out {:.5}, checkpoint {hash}",
        tc.target_shift,
        data.train.len(),
        run.metrics.last().map(|m| m.total).unwrap_or(f64::NAN),
        run.held_out.as_ref().map(|h| h.total).unwrap_or(f64::NAN),
    );
    Ok(())
}

pub fn merge(ctx: &mut Context, est: &Path, ctl: &Path, name: &str) -> Result<()> {
    ctx.echo_config()?;
    let (est_net, est_hash) = ctx.load_net(est)?;
    let (ctl_net, ctl_hash) = ctx.load_net(ctl)?;
    let plan = spikectl_core::compose::MergePlan::standard(
        est_net.n_outputs(),
        ctl_net.n_inputs(),
        &est_hash,
        &ctl_hash,
    );
    let merged = spikectl_core::compose::merge(&est_net, &ctl_net, &plan)?;
    let rel = PathBuf::from(layout::CHECKPOINTS).join(format!("{name}.ckpt.json"));
    let hash = checkpoint::save(&Checkpoint::new(merged, None), &ctx.root.join(&rel))?;
    ctx.record(&rel, ArtifactKind::Checkpoint, true)?;
    println!("merge: {name} <- {est_hash} + {ctl_hash}; checkpoint {hash}");
    Ok(())
}

pub fn prune(
    ctx: &mut Context,
    net_path: &Path,
    rounds: &str,
    widths: Option<&str>,
    name: &str,
) -> Result<()> {
    ctx.echo_config()?;
    let (net, _) = ctx.load_net(net_path)?;
    let target: Vec<usize> = match widths {
        Some(w) => w
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("--widths: {e}")))?,
        None => ctx.cfg.compose.target_widths.clone(),
    };
    let episodes = ctx.load_rounds(rounds)?.into_iter().flatten().collect::<Vec<_>>();
    let shift = ctx.cfg.training.controller.target_shift;
    let batch = pipeline::eval_batch(&net, &episodes, shift, ctx.cfg.training.controller.seq_len)?;
    let (pruned, report) = spikectl_core::compose::score_and_prune(&net, &batch.samples(), &target)?;

    let rel = PathBuf::from(layout::CHECKPOINTS).join(format!("{name}.ckpt.json"));
    let hash = checkpoint::save(&Checkpoint::new(pruned, None), &ctx.root.join(&rel))?;
    ctx.record(&rel, ArtifactKind::Checkpoint, true)?;
    let report_rel = PathBuf::from(layout::REPORTS).join(format!("{name}.prune.json"));
    std::fs::create_dir_all(ctx.root.join(layout::REPORTS))?;
    std::fs::write(ctx.root.join(&report_rel), serde_json::to_vec_pretty(&report)?)?;
    ctx.record(&report_rel, ArtifactKind::Report, true)?;
    let txt_rel = PathBuf::from(layout::REPORTS).join(format!("{name}.prune.txt"));
    std::fs::write(ctx.root.join(&txt_rel), report.text_table())?;
    ctx.record(&txt_rel, ArtifactKind::Report, true)?;
    println!(
        "prune: {:?} -> {:?}, MSE ratio {:.4}, ops/step {:.0} -> {:.0}; checkpoint {hash}",
        report.widths_before,
        report.widths_after,
        report.mse_ratio,
        report.ops_per_step_before,
        report.ops_per_step_after
    );
    Ok(())
}

pub fn eval(ctx: &mut Context, net_path: &Path, rounds: &str, shift: usize) -> Result<()> {
    ctx.echo_config()?;
    let (net, net_hash) = ctx.load_net(net_path)?;
    let episodes = ctx.load_rounds(rounds)?.into_iter().flatten().collect::<Vec<_>>();
    let seq_len = ctx.cfg.training.controller.seq_len;
    let aligned = pipeline::eval_batch(&net, &episodes, 0, seq_len)?;
    let corr = correlation_vs_shift(
        &net,
        &aligned.samples(),
        ctx.cfg.eval.max_shift,
        &net.output_labels,
    )?;
    let sp = sparsity(&net, &aligned.samples())?;
    let shifted = pipeline::eval_batch(&net, &episodes, shift, seq_len)?;
    let mse = open_loop_mse(&net, &shifted.samples())?;

    let report = EvalReport {
        checkpoint_hash: net_hash.clone(),
        open_loop_mse: Some(mse),
        correlation: Some(corr),
        sparsity: Some(sp),
        closed_loop: Vec::new(),
        seeds: vec![ctx.cfg.run.seed],
    };
    let stem = net_path.file_stem().unwrap_or_default().to_string_lossy().to_string();
    std::fs::create_dir_all(ctx.root.join(layout::REPORTS))?;
    let rel = PathBuf::from(layout::REPORTS).join(format!("eval-{stem}.json"));
    std::fs::write(ctx.root.join(&rel), serde_json::to_vec_pretty(&report)?)?;
    ctx.record(&rel, ArtifactKind::Report, true)?;
    let csv_rel = PathBuf::from(layout::REPORTS).join(format!("eval-{stem}.corr_vs_shift.csv"));
    std::fs::write(
        ctx.root.join(&csv_rel),
        report.correlation.as_ref().unwrap().to_csv(),
    )?;
    ctx.record(&csv_rel, ArtifactKind::Report, true)?;
    println!(
        "eval: peak shift {} steps, sparsity {:.3}, open-loop mse {:?}",
        report.correlation.as_ref().unwrap().peak_shift,
        report.sparsity.as_ref().unwrap().mean,
        report.open_loop_mse.as_ref().unwrap()
    );
    Ok(())
}

pub fn closed_loop(
    ctx: &mut Context,
    controller: &str,
    est: Option<&Path>,
    ctl: Option<&Path>,
    script_name: &str,
    n_runs: Option<usize>,
) -> Result<()> {
    ctx.echo_config()?;
    let script = match script_name {
        "roll-step" => Script::roll_step(),
        "hover" => Script::hover(8.0),
        other => return Err(Error::Config(format!("unknown script `{other}`"))),
    };
    let n_runs = n_runs.unwrap_or(ctx.cfg.eval.n_runs);

    let nets; // keep loaded networks alive for the borrow in EvalController
    let (label, spec) = match (controller, est, ctl) {
        ("expert", None, None) => ("expert".to_string(), EvalController::Expert),
        (path, None, None) => {
            let (net, _) = ctx.load_net(Path::new(path))?;
            nets = vec![net];
            (
                Path::new(path).file_stem().unwrap_or_default().to_string_lossy().to_string(),
                EvalController::Merged(&nets[0]),
            )
        }
        (_, Some(e), Some(c)) => {
            let (en, _) = ctx.load_net(e)?;
            let (cn, _) = ctx.load_net(c)?;
            nets = vec![en, cn];
            (
                "pipeline".to_string(),
                EvalController::Pipeline {
                    estimator: &nets[0],
                    controller: &nets[1],
                },
            )
        }
        _ => {
            return Err(Error::Config(
                "--est and --ctl must be given together".into(),
            ))
        }
    };

    let report = spikectl_core::eval::step_response_suite(
        &ctx.cfg.sim.model,
        &ctx.cfg.sim.imu,
        &ctx.cfg.sim.expert,
        &script,
        spec,
        n_runs,
        ctx.cfg.run.seed ^ 0xC105ED,
        &ctx.cfg.sim.variation,
        None,
    )?;
    std::fs::create_dir_all(ctx.root.join(layout::REPORTS))?;
    let rel = PathBuf::from(layout::REPORTS).join(format!("closed-loop-{label}-{script_name}.json"));
    std::fs::write(ctx.root.join(&rel), serde_json::to_vec_pretty(&report)?)?;
    ctx.record(&rel, ArtifactKind::Report, true)?;
    let csv_rel =
        PathBuf::from(layout::REPORTS).join(format!("closed-loop-{label}-{script_name}.step_response.csv"));
    std::fs::write(ctx.root.join(&csv_rel), report.to_csv())?;
    ctx.record(&csv_rel, ArtifactKind::Report, true)?;
    if !report.valid {
        println!(
            "closed-loop[{label}]: VOID — diverged runs {:?}",
            report.diverged_runs
        );
    } else {
        println!(
            "closed-loop[{label}]: RMSE {:.3}° (est-ref {:.3}°), SD {:.3}°, rise {:.0} ms over {} runs",
            report.rmse_true_deg.unwrap(),
            report.rmse_est_deg.unwrap(),
            report.avg_sd_deg.unwrap(),
            report.rise_time_ms.unwrap_or(f64::NAN),
            n_runs
        );
    }
    Ok(())
}

pub fn export(ctx: &mut Context, net_path: &Path, out: Option<&Path>) -> Result<()> {
    ctx.echo_config()?;
    let (net, hash) = ctx.load_net(net_path)?;
    let default_rel = PathBuf::from(layout::EXPORT).join(format!(
        "{}.snnx",
        net_path.file_stem().unwrap_or_default().to_string_lossy()
    ));
    let (path, rel): (PathBuf, Option<PathBuf>) = match out {
        Some(p) => (p.to_path_buf(), None),
        None => (ctx.root.join(&default_rel), Some(default_rel)),
    };
    spikectl_core::export::write_export(&net, &hash, &path)?;
    if let Some(rel) = rel {
        ctx.record(&rel, ArtifactKind::Export, true)?;
    }
    println!("export: {} (source checkpoint {hash})", path.display());
    Ok(())
}

pub fn bench(ctx: &mut Context, export_path: &Path, steps: Option<usize>) -> Result<()> {
    let (net, _) = spikectl_core::export::read_export(export_path)?;
    let steps = steps.unwrap_or(ctx.cfg.eval.bench_steps);
    let report = spikectl_core::bench::bench_inference(&net, steps, ctx.cfg.run.seed ^ 0xB3)?;
    std::fs::create_dir_all(ctx.root.join(layout::REPORTS))?;
    let rel = PathBuf::from(layout::REPORTS).join("bench.json");
    std::fs::write(ctx.root.join(&rel), serde_json::to_vec_pretty(&report)?)?;
    ctx.record(&rel, ArtifactKind::Metrics, false)?;
    println!(
        "bench: p50 {:.1} µs, p99 {:.1} µs over {} steps; sparsity {:.3}; ~{:.0} additions/step",
        report.p50_us, report.p99_us, report.steps, report.sparsity, report.ops_per_step
    );
    Ok(())
}

pub fn verify(ctx: &Context) -> Result<()> {
    ctx.manifest.verify(&ctx.root)?;
    println!("verify: {} artifacts intact", ctx.manifest.entries.len());
    Ok(())
}
