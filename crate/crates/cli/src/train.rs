use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use retinex_core::config::RunConfig;
use retinex_core::data::load_pair_dataset;
use retinex_core::model::{init_weights, load_weights, save_weights, ParamGroup, WeightStore};
use retinex_core::training::{load_state, run_phase, LogRecord, Phase, RunOptions, TrainState, LOG_HEADER};
use retinex_core::Error;

use crate::common::{manifest, usage, with_suffix, write_text};
use crate::{PhaseArg, TrainArgs};

fn phases(arg: PhaseArg) -> Vec<Phase> {
    match arg {
        PhaseArg::Decom => vec![Phase::Decom],
        PhaseArg::Enhance => vec![Phase::Enhance],
        PhaseArg::Finetune => vec![Phase::Finetune],
        PhaseArg::All => Phase::ALL.to_vec(),
    }
}

pub fn checkpoint_path(out: &Path, phase: Phase) -> PathBuf {
    with_suffix(out, &format!(".{phase}.ckpt"))
}

pub fn log_path(out: &Path, phase: Phase) -> PathBuf {
    with_suffix(out, &format!(".{phase}.log.csv"))
}

fn has_group(store: &WeightStore, group: ParamGroup) -> bool {
    store.names().any(|n| group.contains(n))
}

/// Adds freshly initialized networks the first phase is allowed to start
/// without; anything else missing is a prerequisite error.
fn complete_store(store: &mut WeightStore, first: Phase, cfg: &RunConfig) -> Result<()> {
    let fresh = init_weights(&cfg.decom, &cfg.enhance, cfg.seed)?;
    for (group, may_init) in [
        (ParamGroup::Decom, first == Phase::Decom),
        (ParamGroup::Enhance, first != Phase::Finetune),
    ] {
        if has_group(store, group) {
            continue;
        }
        if !may_init {
            let net = match group {
                ParamGroup::Decom => "Decom-Net",
                _ => "Enhance-Net",
            };
            return Err(usage(format!(
                "the {first} phase needs pretrained {net} weights; pass them with --init"
            )));
        }
        for (name, p) in fresh.iter().filter(|(n, _)| group.contains(n)) {
            store.insert(name, p.value.clone())?;
        }
    }
    Ok(())
}

/// Rows of an existing log strictly before `iteration`.
fn log_prefix(path: &Path, iteration: usize) -> Result<Vec<String>> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(Vec::new());
    };
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|i| i.parse::<usize>().ok())
                .is_some_and(|i| i < iteration)
        })
        .map(str::to_owned)
        .collect())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let requested = phases(args.phase);

    let (mut store, mut resume): (WeightStore, Option<TrainState>) = match &args.resume {
        Some(ckpt) => {
            let state = load_state(ckpt)?;
            if !requested.contains(&state.phase) {
                return Err(usage(format!(
                    "checkpoint {} belongs to the {} phase, which was not requested",
                    ckpt.display(),
                    state.phase
                )));
            }
            (load_weights(ckpt)?, Some(state))
        }
        None => (
            match &args.init {
                Some(path) => load_weights(path)?,
                None => WeightStore::new(),
            },
            None,
        ),
    };

    let todo: Vec<Phase> = match &resume {
        Some(state) => {
            let from = if state.is_finished() {
                state.phase as usize + 1
            } else {
                state.phase as usize
            };
            requested.into_iter().filter(|p| *p as usize >= from).collect()
        }
        None => requested,
    };
    if resume.as_ref().is_some_and(TrainState::is_finished) {
        resume = None;
    }
    let Some(&first) = todo.first() else {
        println!("checkpoint is already complete; nothing to do");
        return Ok(());
    };
    if resume.is_none() {
        complete_store(&mut store, first, &cfg)?;
    }

    let data = load_pair_dataset(&args.data_dir, cfg.seed)?;
    for w in &data.warnings {
        eprintln!("warning: {w}");
    }
    for issue in &data.issues {
        eprintln!("warning: skipped {}: {}", issue.path.display(), issue.message);
    }
    if data.train.is_empty() {
        return Err(Error::Data(format!("no training pairs in {}", args.data_dir.display())).into());
    }
    println!(
        "{} training pairs, {} held out",
        data.train.len(),
        data.eval.len()
    );

    let mut completed = Vec::new();
    for phase in todo {
        let tc = cfg.train_config(phase);
        let state = resume.take().filter(|s| s.phase == phase);
        let start = state.as_ref().map_or(0, |s| s.iteration);
        let log_file = log_path(&args.out, phase);
        let mut rows = if start > 0 { log_prefix(&log_file, start)? } else { Vec::new() };

        let every = args.report_every;
        let mut progress = |r: &LogRecord| {
            if every > 0 && ((r.iteration + 1) % every == 0 || r.iteration + 1 == tc.iterations) {
                eprintln!(
                    "{phase} {}/{} loss {:.5} lr {:.3e}",
                    r.iteration + 1,
                    tc.iterations,
                    r.total,
                    r.lr
                );
            }
        };
        let log = run_phase(
            &tc,
            &data.train,
            &mut store,
            RunOptions {
                checkpoint: Some(checkpoint_path(&args.out, phase)),
                resume: state,
                progress: Some(&mut progress),
                stop_at: None,
            },
        )
        .with_context(|| format!("{phase} phase"))?;

        rows.extend(log.records.iter().map(LogRecord::csv_row));
        let mut csv = String::from(LOG_HEADER);
        csv.push('\n');
        for r in &rows {
            csv.push_str(r);
            csv.push('\n');
        }
        write_text(&log_file, &csv)?;
        save_weights(&store, &args.out)?;
        completed.push(phase.name());

        let mut entries = vec![
            ("weights", args.out.display().to_string()),
            ("data_dir", args.data_dir.display().to_string()),
            ("phases", completed.join(",")),
            ("train_pairs", data.train.len().to_string()),
            ("eval_pairs", data.eval.len().to_string()),
        ];
        let serialized = cfg.serialize();
        for line in serialized.lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                entries.push((k, v.to_owned()));
            }
        }
        write_text(&with_suffix(&args.out, ".manifest"), &manifest(&entries))?;
        if let (Some(first), Some(last)) = (log.head_mean(100), log.tail_mean(100)) {
            println!("{phase}: mean loss {first:.5} (first 100) -> {last:.5} (last 100)");
        }
    }
    println!("weights written to {}", args.out.display());
    Ok(())
}
