use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use rayon::prelude::*;

use flowres::dataset::{load_manifest, make_synthetic_corpus, DatasetError, Manifest, Split, MANIFEST_FILE};
use flowres::evaluation::{evaluate_features, Branches, EvalReport};
use flowres::flow::{FlowError, FlowEstimator, PrecomputedFlows, VariationalEstimator};
use flowres::model::{init_model, Aggregation};
use flowres::pipeline::{CacheStatus, EncodingConfig, FlowCache, Pipeline};
use flowres::training::{load_checkpoint, save_checkpoint, Checkpoint, Trainer};

use crate::config::RunConfig;
use crate::{Branch, Cli, Command, Failure};

const CONFIG_FILE: &str = "run_config.toml";

pub fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(dir) = cli.cache_dir {
        cfg.cache_dir = dir;
    }
    match cli.command {
        Command::Synth {
            out,
            real,
            fake,
            size,
            frames,
            jitter,
        } => {
            set(&mut cfg.synth.real, real);
            set(&mut cfg.synth.fake, fake);
            set(&mut cfg.synth.size, size);
            set(&mut cfg.synth.frames, frames);
            set(&mut cfg.synth.jitter_std, jitter);
            cfg.manifest = out.join(MANIFEST_FILE);
            synth(cfg.resolve()?, &out)
        }
        Command::Preprocess { manifest, flow_dir } => {
            set(&mut cfg.manifest, manifest);
            cfg.flow_dir = flow_dir.or(cfg.flow_dir);
            preprocess(cfg.resolve()?)
        }
        Command::Train {
            branch,
            manifest,
            flow_dir,
            out_dir,
            checkpoint,
            force,
            epochs,
            batch_size,
            lr,
        } => {
            set(&mut cfg.manifest, manifest);
            set(&mut cfg.out_dir, out_dir);
            cfg.flow_dir = flow_dir.or(cfg.flow_dir);
            set(&mut cfg.train.max_epochs, epochs);
            set(&mut cfg.train.batch_size, batch_size);
            set(&mut cfg.train.lr_init, lr);
            let cfg = cfg.resolve()?;
            let checkpoint =
                checkpoint.unwrap_or_else(|| cfg.out_dir.join(format!("{}.ckpt.json", branch.name())));
            train(cfg, branch, &checkpoint, force)
        }
        Command::Eval {
            ori,
            res,
            flow,
            manifest,
            flow_dir,
            out_dir,
            alpha,
            beta,
            threshold,
        } => {
            set(&mut cfg.out_dir, out_dir);
            cfg.flow_dir = flow_dir.or(cfg.flow_dir);
            set(&mut cfg.fusion.alpha, alpha);
            set(&mut cfg.fusion.beta, beta);
            set(&mut cfg.fusion.threshold, threshold);
            let manifests = if manifest.is_empty() {
                vec![cfg.manifest.clone()]
            } else {
                cfg.manifest = manifest[0].clone();
                manifest
            };
            eval(cfg.resolve()?, &ori, &res, flow.as_deref(), &manifests)
        }
        Command::Report { reports } => {
            cfg.resolve()?.echo(None)?;
            report(&reports)
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn estimator(cfg: &RunConfig) -> Arc<dyn FlowEstimator> {
    match &cfg.flow_dir {
        Some(dir) => Arc::new(PrecomputedFlows::new(dir)),
        None => Arc::new(VariationalEstimator::new(cfg.flow.clone())),
    }
}

fn pipeline(cfg: &RunConfig, encoding: EncodingConfig) -> Pipeline {
    Pipeline::new(estimator(cfg), encoding).with_cache(FlowCache::new(&cfg.cache_dir))
}

fn load(path: &Path) -> anyhow::Result<Manifest> {
    load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn synth(cfg: RunConfig, out: &Path) -> Result<(), Failure> {
    cfg.echo(Some(&out.join(CONFIG_FILE)))?;
    let manifest = make_synthetic_corpus(&cfg.synth, out).map_err(|e| match e {
        DatasetError::InvalidConfig(m) => Failure::Usage(m),
        other => Failure::Runtime(other.into()),
    })?;
    println!(
        "wrote {} videos ({} real, {} fake)",
        manifest.len(),
        manifest.count_label(flowres::dataset::Label::Real),
        manifest.count_label(flowres::dataset::Label::Fake)
    );
    println!("{}", out.join(MANIFEST_FILE).display());
    Ok(())
}

fn preprocess(cfg: RunConfig) -> Result<(), Failure> {
    cfg.echo(Some(&cfg.cache_dir.join(CONFIG_FILE)))?;
    let manifest = load(&cfg.manifest)?;
    let pipe = pipeline(&cfg, cfg.encoding.clone());
    let cache = FlowCache::new(&cfg.cache_dir);
    let outcomes: Vec<(String, anyhow::Result<Option<CacheStatus>>)> = manifest
        .entries()
        .par_iter()
        .map(|entry| {
            let outcome = (|| {
                let seq = pipe.load(entry)?;
                match cache.ensure(&seq, pipe.estimator()) {
                    Ok((_, status)) => Ok(Some(status)),
                    Err(flowres::pipeline::PipelineError::Flow(FlowError::SequenceTooShort(_))) => Ok(None),
                    Err(e) => Err(e.into()),
                }
            })();
            (entry.id.clone(), outcome)
        })
        .collect();
    let (mut computed, mut reused, mut short) = (0, 0, 0);
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(Some(CacheStatus::Computed)) => computed += 1,
            Ok(Some(CacheStatus::Hit)) => reused += 1,
            Ok(None) => {
                log::warn!("`{id}` has fewer than two frames; nothing to cache");
                short += 1;
            }
            Err(e) => failures.push((id, e)),
        }
    }
    println!("computed {computed}, reused {reused}, too short {short}, failed {}", failures.len());
    if failures.is_empty() {
        return Ok(());
    }
    for (id, e) in &failures {
        eprintln!("  {id}: {e:#}");
    }
    Err(Failure::Runtime(anyhow::anyhow!(
        "{} of {} videos failed",
        failures.len(),
        manifest.len()
    )))
}

fn train(cfg: RunConfig, branch: Branch, checkpoint: &Path, force: bool) -> Result<(), Failure> {
    if checkpoint.exists() && !force {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "{} exists; pass --force to overwrite",
            checkpoint.display()
        )));
    }
    cfg.echo(Some(&checkpoint.with_extension("config.toml")))?;
    let manifest = load(&cfg.manifest)?;
    let pipe = pipeline(&cfg, cfg.encoding.clone());
    let kind = branch.kind();
    let (train_videos, _) = pipe.prepare_all(&manifest.select(Split::Train), kind)?;
    let (val_videos, _) = pipe.prepare_all(&manifest.select(Split::Val), kind)?;
    log::info!(
        "training {} branch on {} videos, validating on {}",
        branch.name(),
        train_videos.len(),
        val_videos.len()
    );
    let model = init_model(&cfg.backbone, kind)?;
    let mut trainer = Trainer::new(model, cfg.train.clone(), &train_videos, &val_videos)?;
    trainer.run_to_end()?;
    let (model, log, state) = trainer.finish();
    if let Some(dir) = checkpoint.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_checkpoint(&model, &cfg.encoding.normalization, Some(&state), checkpoint)?;
    let log_path = checkpoint.with_extension("log.tsv");
    std::fs::write(&log_path, log.to_text()).with_context(|| format!("writing {}", log_path.display()))?;
    match (state.best_epoch, state.best_val_acc()) {
        (Some(epoch), Some(acc)) => println!("best val_acc {acc:.4} at epoch {epoch}"),
        _ => println!("no epoch completed"),
    }
    println!("checkpoint {}", checkpoint.display());
    println!("log {}", log_path.display());
    Ok(())
}

fn read_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Tag for a manifest: the name of the directory holding it.
fn dataset_tag(manifest: &Path) -> String {
    manifest
        .canonicalize()
        .ok()
        .and_then(|p| p.parent().and_then(|d| d.file_name()).map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".to_string())
}

fn eval(
    cfg: RunConfig,
    ori: &Path,
    res: &Path,
    flow: Option<&Path>,
    manifests: &[PathBuf],
) -> Result<(), Failure> {
    cfg.echo(Some(&cfg.out_dir.join(CONFIG_FILE)))?;
    let ori = read_checkpoint(ori)?;
    let res = read_checkpoint(res)?;
    let flow = flow.map(read_checkpoint).transpose()?;

    // all branches must see the same encoded inputs
    let encoding = EncodingConfig {
        input_size: res.model.config().input_size,
        max_frames: cfg.encoding.max_frames,
        normalization: res.normalization,
    };
    for c in std::iter::once(&ori).chain(flow.as_ref()) {
        if c.model.config().input_size != encoding.input_size || c.normalization != encoding.normalization {
            return Err(Failure::Runtime(anyhow::anyhow!(
                "checkpoints disagree on input size or normalisation"
            )));
        }
    }
    let branches = Branches {
        ori: &ori.model,
        res: &res.model,
        flow: flow.as_ref().map(|c| &c.model),
    };
    let pipe = pipeline(&cfg, encoding);
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;

    let mut seen = Vec::new();
    for path in manifests {
        let test = load(path)?.select(Split::Test);
        if test.is_empty() {
            return Err(anyhow::anyhow!("{} has no test entries", path.display()).into());
        }
        let mut tag = dataset_tag(path);
        if seen.contains(&tag) {
            tag = format!("{tag}_{}", seen.len());
        }
        seen.push(tag.clone());
        let features = pipe.features_for(&test)?;
        let report = evaluate_features(branches, &features, &cfg.fusion, Aggregation::default(), &tag)?;
        let json = cfg.out_dir.join(format!("{tag}.report.json"));
        let tsv = cfg.out_dir.join(format!("{tag}.scores.tsv"));
        report.write(&json, &tsv).with_context(|| format!("writing {}", json.display()))?;
        let auc = report.auc.map_or("-".to_string(), |a| format!("{a:.4}"));
        println!(
            "{tag}: fused acc {:.4} auc {auc} f1 {:.4} ({} real, {} fake, {} skipped)",
            report.acc, report.f1, report.n_real, report.n_fake, report.n_skipped
        );
        println!("report {}", json.display());
    }
    Ok(())
}

fn report(paths: &[PathBuf]) -> Result<(), Failure> {
    let reports = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            EvalReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    println!("dataset\tACC\tAUC\tF1");
    for r in &reports {
        println!("{}", r.comparison_row());
    }
    let ablation: Vec<String> = reports.iter().filter_map(EvalReport::ablation_row).collect();
    if !ablation.is_empty() {
        println!("\ndataset\tflow ACC\tflow AUC\tresidual ACC\tresidual AUC");
        for row in ablation {
            println!("{row}");
        }
    }
    Ok(())
}
