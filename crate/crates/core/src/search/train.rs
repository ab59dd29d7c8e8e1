use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{mix_darts, sample_architecture, temperature, ArchParams};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::supernet::{Bound, Choice, DerivedArchitecture, NetSpec, Selection, SelectionMode, Supernet};
use crate::tensor::{Adam, AdamConfig, Tape, Var};

/// A task as seen by the optimiser.
pub trait Objective {
    /// Number of training examples to batch over.
    fn train_len(&self) -> usize;

    /// Mean loss over the training examples `idx`.
    fn batch_loss(
        &self,
        net: &Supernet,
        tape: &mut Tape,
        bound: &Bound,
        choices: &[Choice],
        idx: &[usize],
        dropout: &mut ChaCha8Rng,
    ) -> Result<Var>;

    /// Validation score, higher is better.
    fn validate(&self, net: &Supernet, selection: &Selection) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate for `α`; `None` shares `lr`.
    pub arch_lr: Option<f64>,
    pub tau0: f64,
    pub tau_final: f64,
    /// Deterministic `softmax(log α)` instead of sampling.
    pub darts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub epoch: usize,
    pub tau: f64,
    /// Weights used on the last batch of the epoch.
    pub theta: Vec<Vec<f64>>,
    pub train_loss: f64,
    pub val_metric: f64,
    pub alpha: Vec<Vec<f64>>,
}

/// One record per completed search epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchLog {
    pub records: Vec<SearchRecord>,
}

impl SearchLog {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub log: SearchLog,
    pub supernet: Supernet,
    /// Architecture weights at the best validation epoch.
    pub best_alpha: ArchParams,
    pub architecture: DerivedArchitecture,
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    /// Weights from the best validation epoch.
    pub net: Supernet,
    pub val_curve: Vec<f64>,
    pub train_losses: Vec<f64>,
    pub best_epoch: usize,
}

fn check_loss(tape: &Tape, loss: Var, epoch: usize) -> Result<f64> {
    let v = tape.value(loss).item()?;
    if !v.is_finite() {
        log::error!("loss became {v} in epoch {epoch}");
        return Err(Error::Diverged(format!("loss {v} in epoch {epoch}")));
    }
    Ok(v)
}

fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size.max(1)).map(|c| c.to_vec()).collect()
}

pub fn derived_selection(net: &Supernet, indices: &[usize]) -> Result<Selection> {
    Selection::one_hot(net.slots(), indices, SelectionMode::Derived)
}

/// Joint single-level optimisation of weights and architecture, followed by
/// argmax derivation on the best-validation `α`.
pub fn search(objective: &dyn Objective, mut net: Supernet, cfg: &SearchConfig, seed: u64) -> Result<SearchOutcome> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("search needs epochs > 0 and batch_size > 0".into()));
    }
    if !(cfg.tau0 > cfg.tau_final && cfg.tau_final > 0.0) {
        return Err(Error::Validation(format!(
            "temperatures must satisfy tau0 > tau_final > 0, got {} and {}",
            cfg.tau0, cfg.tau_final
        )));
    }
    if objective.train_len() == 0 {
        return Err(Error::Contract("no training examples".into()));
    }
    let mut sampling = stream(seed, Stream::Sampling);
    let mut dropout = stream(seed, Stream::Dropout);
    let mut shuffle = stream(seed, Stream::Shuffle);

    let mut arch = ArchParams::uniform(net.slots());
    let mut w_opt = Adam::new(AdamConfig::with_lr(cfg.lr), net.params().values());
    let mut a_opt = Adam::new(AdamConfig::with_lr(cfg.arch_lr.unwrap_or(cfg.lr)), &arch.logits);
    let mut log = SearchLog::default();
    let mut best: Option<(f64, ArchParams)> = None;

    for epoch in 0..cfg.epochs {
        let tau = temperature(epoch, cfg.epochs, cfg.tau0, cfg.tau_final);
        let mut total = 0.0;
        let mut count = 0usize;
        let mut last_theta = Vec::new();
        for idx in batches(objective.train_len(), cfg.batch_size, &mut shuffle) {
            let mut tape = Tape::new();
            let bound = net.params().bind(&mut tape);
            let logits = arch.bind(&mut tape);
            let (choices, theta) = if cfg.darts {
                mix_darts(&mut tape, &logits)?
            } else {
                sample_architecture(&mut tape, &logits, tau, &mut sampling)?
            };
            let loss = objective.batch_loss(&net, &mut tape, &bound, &choices, &idx, &mut dropout)?;
            total += check_loss(&tape, loss, epoch)? * idx.len() as f64;
            count += idx.len();
            let mut grads = tape.backward(loss)?;
            let w_grads = bound.gradients(&mut grads);
            let a_grads: Vec<_> = logits.iter().map(|&v| grads.take(v)).collect();
            w_opt.step(net.params_mut().values_mut(), &w_grads)?;
            a_opt.step(&mut arch.logits, &a_grads)?;
            last_theta = theta;
        }
        let selection = derived_selection(&net, &arch.derive())?;
        let val = objective.validate(&net, &selection)?;
        let train_loss = total / count as f64;
        log::info!("search epoch {epoch}: tau {tau:.4} loss {train_loss:.5} val {val:.5}");
        log.records.push(SearchRecord {
            epoch,
            tau,
            theta: last_theta,
            train_loss,
            val_metric: val,
            alpha: arch.alpha(),
        });
        if best.as_ref().is_none_or(|(b, _)| val > *b) {
            best = Some((val, arch.clone()));
        }
    }
    let (_, best_alpha) = best.expect("at least one epoch");
    let spec = net.spec().clone();
    let architecture = DerivedArchitecture::from_indices(
        spec.task,
        spec.layers,
        spec.dim,
        &spec.ablations,
        net.slots(),
        &best_alpha.derive(),
    )?;
    Ok(SearchOutcome {
        log,
        supernet: net,
        best_alpha,
        architecture,
    })
}

/// Trains a freshly initialised child network with early stopping on the
/// validation score; returns the best-validation weights.
pub fn retrain(
    objective: &dyn Objective,
    spec: &NetSpec,
    arch: &DerivedArchitecture,
    cfg: &RetrainConfig,
    seed: u64,
) -> Result<RetrainOutcome> {
    let net = Supernet::child(spec.clone(), arch, &mut stream(seed, Stream::RetrainInit))?;
    train_fixed(objective, net, cfg, seed)
}

/// Trains every slot at its first candidate (for single-candidate networks,
/// the network itself).
pub fn train_fixed(objective: &dyn Objective, mut net: Supernet, cfg: &RetrainConfig, seed: u64) -> Result<RetrainOutcome> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("training needs epochs > 0 and batch_size > 0".into()));
    }
    if objective.train_len() == 0 {
        return Err(Error::Contract("no training examples".into()));
    }
    let mut dropout = stream(seed, Stream::RetrainDropout);
    let mut shuffle = stream(seed, Stream::RetrainShuffle);
    let fixed = vec![0; net.slots().len()];
    let selection = derived_selection(&net, &fixed)?;
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), net.params().values());
    let mut val_curve = Vec::new();
    let mut train_losses = Vec::new();
    let mut best: Option<(f64, usize, Supernet)> = None;

    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for idx in batches(objective.train_len(), cfg.batch_size, &mut shuffle) {
            let mut tape = Tape::new();
            let bound = net.params().bind(&mut tape);
            let choices: Vec<Choice> = fixed.iter().map(|&i| Choice::Fixed(i)).collect();
            let loss = objective.batch_loss(&net, &mut tape, &bound, &choices, &idx, &mut dropout)?;
            total += check_loss(&tape, loss, epoch)? * idx.len() as f64;
            count += idx.len();
            let mut grads = tape.backward(loss)?;
            let g = bound.gradients(&mut grads);
            opt.step(net.params_mut().values_mut(), &g)?;
        }
        let val = objective.validate(&net, &selection)?;
        let loss = total / count as f64;
        log::info!("train epoch {epoch}: loss {loss:.5} val {val:.5}");
        train_losses.push(loss);
        val_curve.push(val);
        match &best {
            Some((b, _, _)) if val <= *b => {}
            _ => best = Some((val, epoch, net.clone())),
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.1);
        if epoch - best_epoch >= cfg.patience {
            log::info!("early stop at epoch {epoch}, best {best_epoch}");
            break;
        }
    }
    let (_, best_epoch, net) = best.expect("at least one epoch");
    Ok(RetrainOutcome {
        net,
        val_curve,
        train_losses,
        best_epoch,
    })
}
