//! Three-phase training: Decom-Net, then Enhance-Net on a frozen Decom-Net,
//! then both end to end.

mod checkpoint;
mod optim;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_state, save_checkpoint, state_path, SamplerState, TrainState, STATE_MAGIC, STATE_VERSION};
pub use optim::{sgd_step, Sgd};

use crate::data::{sample_patch_batch, PairDataset};
use crate::error::{Error, Result};
use crate::losses::{decom_total_loss, enhance_loss, LossWeights};
use crate::model::{decom_graph, enhance_graph, DecomNetConfig, EnhanceNetConfig, ParamGroup, WeightStore};
use crate::numerics::{Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Decom,
    Enhance,
    Finetune,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Decom, Phase::Enhance, Phase::Finetune];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Decom => "decom",
            Phase::Enhance => "enhance",
            Phase::Finetune => "finetune",
        }
    }

    /// Parameters updated during this phase.
    pub fn group(self) -> ParamGroup {
        match self {
            Phase::Decom => ParamGroup::Decom,
            Phase::Enhance => ParamGroup::Enhance,
            Phase::Finetune => ParamGroup::All,
        }
    }

    pub(crate) fn index(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown phase {s:?}, expected decom, enhance or finetune")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub phase: Phase,
    pub iterations: usize,
    pub batch: usize,
    /// Square patch extent.
    pub patch: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate factor applied once per epoch, where an
    /// epoch is `max(1, dataset size / batch)` iterations.
    pub lr_decay: f64,
    /// Heavy-ball momentum; 0 is plain SGD.
    pub momentum: f64,
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 writes only the
    /// final one.
    pub checkpoint_every: usize,
    pub loss_weights: LossWeights,
}

impl TrainConfig {
    pub fn new(phase: Phase) -> Self {
        Self {
            phase,
            iterations: match phase {
                Phase::Decom | Phase::Enhance => 2000,
                Phase::Finetune => 1000,
            },
            batch: 16,
            patch: 96,
            learning_rate: match phase {
                Phase::Finetune => 0.0001,
                _ => 0.001,
            },
            lr_decay: 0.95,
            momentum: 0.0,
            seed: 0,
            checkpoint_every: 500,
            loss_weights: LossWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch == 0 || self.patch == 0 {
            return Err(Error::Config("iterations, batch and patch must be positive".into()));
        }
        if self.patch < 2 {
            return Err(Error::Config("patch must be at least 2 for spatial gradients".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be nonnegative", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay {} must lie in (0, 1]", self.lr_decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        self.loss_weights.validate()
    }

    /// Iterations per epoch on a dataset of `len` pairs.
    pub fn epoch_len(&self, len: usize) -> usize {
        (len / self.batch).max(1)
    }

    pub fn lr_at(&self, iteration: usize, dataset_len: usize) -> f64 {
        let epochs = iteration / self.epoch_len(dataset_len);
        self.learning_rate * self.lr_decay.powi(epochs.min(i32::MAX as usize) as i32)
    }
}

/// Losses at one iteration, evaluated before that iteration's update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub iteration: usize,
    pub lr: f64,
    pub total: f64,
    pub recon: f64,
    /// Reflectance-consistency term; 0 in the enhance phase.
    pub ir: f64,
    /// Smoothness terms before their weight.
    pub is: f64,
}

pub const LOG_HEADER: &str = "iteration,lr,total_loss,recon,ir,is";

impl LogRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration, self.lr, self.total, self.recon, self.ir, self.is
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub phase: Phase,
    pub loss_weights: LossWeights,
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    /// Mean total loss over the first `n` records.
    pub fn head_mean(&self, n: usize) -> Option<f64> {
        mean_total(self.records.iter().take(n))
    }

    /// Mean total loss over the last `n` records.
    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        let skip = self.records.len().saturating_sub(n);
        mean_total(self.records.iter().skip(skip))
    }
}

fn mean_total<'a>(records: impl Iterator<Item = &'a LogRecord>) -> Option<f64> {
    let (sum, n) = records.fold((0.0, 0usize), |(s, n), r| (s + r.total, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Optional side effects of a training run.
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Weights path for checkpoints; the state sidecar goes next to it.
    pub checkpoint: Option<PathBuf>,
    /// Continue from a saved state instead of starting fresh.
    pub resume: Option<TrainState>,
    pub progress: Option<&'a mut dyn FnMut(&LogRecord)>,
    /// Return early once this many iterations are done, checkpointing
    /// there as if the process had been interrupted.
    pub stop_at: Option<usize>,
}

pub fn train_decom(cfg: &TrainConfig, ds: &PairDataset, store: &mut WeightStore) -> Result<TrainLog> {
    expect_phase(cfg, Phase::Decom)?;
    run_phase(cfg, ds, store, RunOptions::default())
}

pub fn train_enhance(cfg: &TrainConfig, ds: &PairDataset, store: &mut WeightStore) -> Result<TrainLog> {
    expect_phase(cfg, Phase::Enhance)?;
    run_phase(cfg, ds, store, RunOptions::default())
}

pub fn finetune_end_to_end(cfg: &TrainConfig, ds: &PairDataset, store: &mut WeightStore) -> Result<TrainLog> {
    expect_phase(cfg, Phase::Finetune)?;
    run_phase(cfg, ds, store, RunOptions::default())
}

fn expect_phase(cfg: &TrainConfig, phase: Phase) -> Result<()> {
    if cfg.phase != phase {
        return Err(Error::Config(format!("expected a {phase} config, got {}", cfg.phase)));
    }
    Ok(())
}

/// Scalar handles of one iteration's objective.
struct StepLoss {
    total: Var,
    recon: Vec<Var>,
    ir: Option<Var>,
    is: Vec<Var>,
}

/// Networks the phase needs, read from the store up front so a missing
/// prerequisite fails before any work.
struct Nets {
    decom: DecomNetConfig,
    enhance: Option<EnhanceNetConfig>,
}

fn phase_nets(cfg: &TrainConfig, store: &WeightStore) -> Result<Nets> {
    let decom = DecomNetConfig::from_store(store)
        .map_err(|e| Error::Config(format!("{} phase needs Decom-Net weights: {e}", cfg.phase)))?;
    let enhance = match cfg.phase {
        Phase::Decom => None,
        Phase::Enhance | Phase::Finetune => {
            let net = EnhanceNetConfig::from_store(store)
                .map_err(|e| Error::Config(format!("{} phase needs Enhance-Net weights: {e}", cfg.phase)))?;
            if cfg.patch % net.divisor() != 0 {
                return Err(Error::Config(format!(
                    "patch {} must be divisible by {} for the enhance network",
                    cfg.patch,
                    net.divisor()
                )));
            }
            Some(net)
        }
    };
    Ok(Nets { decom, enhance })
}

fn build_loss(
    g: &mut Graph<f32>,
    cfg: &TrainConfig,
    nets: &Nets,
    store: &WeightStore,
    low: Var,
    normal: Var,
) -> Result<(crate::model::Bound, StepLoss)> {
    let params = store.bind(g, Some(cfg.phase.group()));
    let lw = &cfg.loss_weights;
    let d_low = decom_graph(g, &params, &nets.decom, low)?;
    let loss = match (cfg.phase, &nets.enhance) {
        (Phase::Decom, _) => {
            let d_normal = decom_graph(g, &params, &nets.decom, normal)?;
            let l = decom_total_loss(g, d_low, d_normal, low, normal, lw)?;
            StepLoss {
                total: l.total,
                recon: vec![l.recon],
                ir: Some(l.ir),
                is: vec![l.is],
            }
        }
        (Phase::Enhance, Some(net)) => {
            let e = enhance_graph(g, &params, net, d_low.reflectance, d_low.illumination)?;
            let l = enhance_loss(g, d_low.reflectance, e.output, normal, lw)?;
            StepLoss {
                total: l.total,
                recon: vec![l.recon],
                ir: None,
                is: vec![l.is],
            }
        }
        (Phase::Finetune, Some(net)) => {
            let d_normal = decom_graph(g, &params, &nets.decom, normal)?;
            let dl = decom_total_loss(g, d_low, d_normal, low, normal, lw)?;
            let e = enhance_graph(g, &params, net, d_low.reflectance, d_low.illumination)?;
            let el = enhance_loss(g, d_low.reflectance, e.output, normal, lw)?;
            StepLoss {
                total: g.add(dl.total, el.total)?,
                recon: vec![dl.recon, el.recon],
                ir: Some(dl.ir),
                is: vec![dl.is, el.is],
            }
        }
        _ => unreachable!("phase_nets provides the enhance network"),
    };
    Ok((params, loss))
}

fn scalar(g: &Graph<f32>, v: Var) -> f64 {
    g.value(v).item().expect("losses are scalars") as f64
}

/// Runs one phase on `store`. Each iteration samples a batch, records the
/// losses, backpropagates and updates the phase's parameters. A non-finite
/// loss or update stops the run before the update and before any further
/// checkpoint, so both `store` and the last checkpoint keep finite weights.
pub fn run_phase(
    cfg: &TrainConfig,
    ds: &PairDataset,
    store: &mut WeightStore,
    mut opts: RunOptions<'_>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("training dataset is empty".into()));
    }
    let nets = phase_nets(cfg, store)?;
    let (start, mut rng, mut opt) = match opts.resume.take() {
        Some(state) => {
            if state.phase != cfg.phase {
                return Err(Error::Config(format!(
                    "checkpoint is from the {} phase, not {}",
                    state.phase, cfg.phase
                )));
            }
            if state.total_iterations != cfg.iterations {
                return Err(Error::Config(format!(
                    "checkpoint expects {} iterations, config has {}",
                    state.total_iterations, cfg.iterations
                )));
            }
            (state.iteration, state.sampler.restore(), Sgd::with_velocity(cfg.momentum, state.velocity))
        }
        None => (0, ChaCha8Rng::seed_from_u64(cfg.seed), Sgd::new(cfg.momentum)),
    };

    let mut log = TrainLog {
        phase: cfg.phase,
        loss_weights: cfg.loss_weights,
        records: Vec::with_capacity(cfg.iterations.saturating_sub(start)),
    };
    store.clear_grads();
    let end = opts.stop_at.map_or(cfg.iterations, |s| s.clamp(start, cfg.iterations));
    for it in start..end {
        let lr = cfg.lr_at(it, ds.len());
        let batch = sample_patch_batch(ds, cfg.batch, cfg.patch, &mut rng)?;
        let mut g = Graph::<f32>::new();
        let low = g.constant(batch.low);
        let normal = g.constant(batch.normal);
        let (params, loss) = build_loss(&mut g, cfg, &nets, store, low, normal)?;
        let record = LogRecord {
            iteration: it,
            lr,
            total: scalar(&g, loss.total),
            recon: loss.recon.iter().map(|&v| scalar(&g, v)).sum(),
            ir: loss.ir.map_or(0.0, |v| scalar(&g, v)),
            is: loss.is.iter().map(|&v| scalar(&g, v)).sum(),
        };
        if !record.total.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        g.backward(loss.total)?;
        store.collect_grads(&mut g, &params);
        opt.step(store, lr, cfg.phase.group()).map_err(|e| match e {
            Error::NonFiniteUpdate { .. } => Error::NonFinite { iteration: it },
            e => e,
        })?;
        log.records.push(record);
        if let Some(cb) = opts.progress.as_mut() {
            cb(&record);
        }

        let done = it + 1;
        if let Some(path) = &opts.checkpoint {
            let periodic = cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0;
            if periodic || done == end {
                let state = TrainState {
                    phase: cfg.phase,
                    iteration: done,
                    total_iterations: cfg.iterations,
                    lr: cfg.lr_at(done, ds.len()),
                    sampler: SamplerState::capture(&rng),
                    velocity: opt.velocity().clone(),
                };
                save_checkpoint(path, store, &state)?;
            }
        }
    }
    Ok(log)
}
