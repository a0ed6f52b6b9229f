//! Optimization loops: single-network pretraining and sibling transfer.

mod log;
mod optim;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use log::{TrainLog, TrainLogRow, LOG_HEADER};
pub use optim::{cosine_lr, Sgd};

use crate::autodiff::{ParamStore, Tape, Tensor};
use crate::blocknet::{qualify, BlockNet};
use crate::checkpoint::save_checkpoint;
use crate::dataforge::{AugmentConfig, Batch, Dataset};
use crate::error::{Error, Result};
use crate::losses::{main_loss, target_loss, AlphaRule, LossBundle, LossConfig};
use crate::metrics::{evaluate_scores, EvalReport};
use crate::rng::derive_seed;
use crate::xroutes::{RouteHead, SiblingPair, AUX, MASTER};

/// How `alpha` is set during transfer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaMode {
    /// Zero on the first batch of the run, then from each batch's own losses.
    #[default]
    Dynamic,
    /// Always zero: route losses never contribute.
    Zero,
}

impl FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(AlphaMode::Dynamic),
            "zero" => Ok(AlphaMode::Zero),
            _ => Err(Error::InvalidArgument(format!("unknown alpha mode `{s}`"))),
        }
    }
}

impl fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaMode::Dynamic => "dynamic",
            AlphaMode::Zero => "zero",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr_init: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub early_stop_patience: Option<usize>,
    pub early_stop_min_delta: f64,
    pub beta: f64,
    pub s: f64,
    pub gamma: f64,
    pub p: f64,
    pub update_aux: bool,
    pub batch_size: usize,
    pub seed: u64,
    pub alpha_mode: AlphaMode,
    /// Leading segments (of both siblings) excluded from updates.
    pub frozen_segments: usize,
    pub route_head: RouteHead,
    /// Emit a `batch` row per optimizer step.
    pub log_batches: bool,
    pub aug: AugmentConfig,
}

impl OptimConfig {
    /// Transfer-stage defaults: lr 0.002, momentum 0.001, 30 epochs.
    pub fn transfer() -> Self {
        let loss = LossConfig::default();
        Self {
            lr_init: 0.002,
            lr_min: 0.0,
            momentum: 0.001,
            epochs: 30,
            early_stop_patience: None,
            early_stop_min_delta: 0.001,
            beta: loss.beta,
            s: loss.s,
            gamma: loss.gamma,
            p: loss.p,
            update_aux: false,
            batch_size: 32,
            seed: 0,
            alpha_mode: AlphaMode::Dynamic,
            frozen_segments: 0,
            route_head: RouteHead::LastSegmentOwner,
            log_batches: false,
            aug: AugmentConfig::default(),
        }
    }

    /// Pretraining defaults: 20 epochs, momentum 0.9, patience 10.
    pub fn pretrain() -> Self {
        Self {
            lr_init: 0.05,
            momentum: 0.9,
            epochs: 20,
            early_stop_patience: Some(10),
            ..Self::transfer()
        }
    }

    /// Plain fine-tuning baseline: only the last segment and head of the
    /// master move, route losses off.
    pub fn general_transfer(num_segments: usize) -> Self {
        Self {
            lr_init: 0.04,
            momentum: 0.1,
            alpha_mode: AlphaMode::Zero,
            frozen_segments: num_segments.saturating_sub(1),
            ..Self::transfer()
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            beta: self.beta,
            s: self.s,
            gamma: self.gamma,
            p: self.p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return Err(Error::Config(format!("lr_init must be positive, got {}", self.lr_init)));
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_init) {
            return Err(Error::Config(format!("lr_min must lie in [0, lr_init], got {}", self.lr_min)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if self.early_stop_patience == Some(0) {
            return Err(Error::Config("early_stop_patience must be positive".into()));
        }
        self.loss_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.aug.validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn epoch_seed(&self, epoch: usize) -> u64 {
        derive_seed(self.seed, &[epoch as u64])
    }
}

/// Scores over a dataset, evaluated batch by batch without gradients.
pub fn score_dataset(net: &BlockNet, data: &Dataset, batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len());
    for b in data.eval_batches(batch_size)? {
        out.extend(net.scores(&b.images)?);
    }
    Ok(out)
}

pub fn evaluate(net: &BlockNet, data: &Dataset, batch_size: usize) -> Result<EvalReport> {
    evaluate_scores(&score_dataset(net, data, batch_size)?, &data.labels)
}

fn optional_metrics(scores: &[f64], labels: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    match evaluate_scores(scores, labels) {
        Ok(r) => (Some(r.auc), Some(r.ap), Some(r.acc_at_half)),
        Err(_) => (None, None, None),
    }
}

fn check_two_classes(data: &Dataset, what: &str) -> Result<()> {
    if data.count_pos() == 0 || data.count_neg() == 0 {
        return Err(Error::DegenerateBatch(format!(
            "{what} has {} real and {} generated samples; both classes are required",
            data.count_neg(),
            data.count_pos()
        )));
    }
    Ok(())
}

/// Running means of per-batch losses plus route-3 scores of hard-labelled
/// samples, for the epoch's `train` row.
#[derive(Default)]
struct EpochStats {
    n: usize,
    l1: f64,
    l2: f64,
    l3: f64,
    l_auc: f64,
    total: f64,
    scores: Vec<f64>,
    labels: Vec<f64>,
}

impl EpochStats {
    fn add(&mut self, b: &LossBundle, scores: &[f64], batch: &Batch) {
        self.n += 1;
        self.l1 += b.l1;
        self.l2 += b.l2;
        self.l3 += b.l3;
        self.l_auc += b.l_auc;
        self.total += b.total;
        for (&s, &y) in scores.iter().zip(&batch.labels) {
            if y == 0.0 || y == 1.0 {
                self.scores.push(s);
                self.labels.push(y);
            }
        }
    }

    /// Epoch means; `alpha` is recomputed from the mean route losses when
    /// `with_alpha`, so the row obeys the same identity as a batch.
    fn row(&self, epoch: usize, lr: f64, with_alpha: bool) -> TrainLogRow {
        let n = self.n.max(1) as f64;
        let (l1, l2, l3) = (self.l1 / n, self.l2 / n, self.l3 / n);
        let (auc, ap, acc) = optional_metrics(&self.scores, &self.labels);
        TrainLogRow {
            epoch,
            split: "train".into(),
            l1,
            l2,
            l3,
            l_auc: self.l_auc / n,
            alpha: if with_alpha {
                crate::losses::alpha_coefficient(l1, l2, l3)
            } else {
                0.0
            },
            total: self.total / n,
            auc,
            ap,
            acc,
            lr,
        }
    }
}

fn batch_row(epoch: usize, b: &LossBundle, lr: f64) -> TrainLogRow {
    TrainLogRow {
        epoch,
        split: "batch".into(),
        l1: b.l1,
        l2: b.l2,
        l3: b.l3,
        l_auc: b.l_auc,
        alpha: b.alpha,
        total: b.total,
        auc: None,
        ap: None,
        acc: None,
        lr,
    }
}

fn eval_row(epoch: usize, split: &str, b: &LossBundle, report: Option<&EvalReport>, lr: f64) -> TrainLogRow {
    TrainLogRow {
        epoch,
        split: split.into(),
        l1: b.l1,
        l2: b.l2,
        l3: b.l3,
        l_auc: b.l_auc,
        alpha: b.alpha,
        total: b.total,
        auc: report.map(|r| r.auc),
        ap: report.map(|r| r.ap),
        acc: report.map(|r| r.acc_at_half),
        lr,
    }
}

/// Single-network evaluation row: loss terms over the whole split plus metrics.
fn single_eval(net: &BlockNet, data: &Dataset, cfg: &OptimConfig, epoch: usize, split: &str, lr: f64) -> Result<(TrainLogRow, EvalReport)> {
    let scores = score_dataset(net, data, cfg.batch_size)?;
    let report = evaluate_scores(&scores, &data.labels)?;
    let mut tape = Tape::no_grad();
    let out = tape.constant(Tensor::new(vec![scores.len()], scores)?);
    let bundle = main_loss(&mut tape, out, &data.labels, net, "", &cfg.loss_config())?;
    Ok((eval_row(epoch, split, &bundle, Some(&report), lr), report))
}

/// Higher metric wins; equal metrics fall back to the lower loss.
fn is_better(metric: f64, loss: f64, best_metric: Option<f64>, best_loss: f64) -> bool {
    match best_metric {
        None => true,
        Some(b) => metric > b || (metric == b && loss < best_loss),
    }
}

fn row_total(log: &TrainLog) -> f64 {
    log.rows.last().map_or(f64::INFINITY, |r| r.total)
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    /// Network at the best validation AUC (as stored on disk).
    pub best: BlockNet,
    /// Network after the last completed epoch (as stored on disk).
    pub last: BlockNet,
    pub best_epoch: usize,
    pub best_auc: Option<f64>,
    pub log: TrainLog,
}

/// Supervised training of one network with
/// `beta * bce + (1 - beta) * l_auc + s * omega_fc`. Validation uses the
/// `f32`-rounded parameters a checkpoint would hold. When `best_ckpt` is set,
/// the best network so far is written there whenever it improves.
pub fn pretrain(net: BlockNet, train: &Dataset, val: &Dataset, cfg: &OptimConfig, best_ckpt: Option<&Path>) -> Result<PretrainOutcome> {
    cfg.validate()?;
    check_two_classes(train, "training data")?;
    check_two_classes(val, "validation data")?;
    let mut net = net;
    let mut log = TrainLog::default();
    let mut sgd = Sgd::new();
    let mask: BTreeSet<String> = net.params().names().map(str::to_string).collect();
    let loss_cfg = cfg.loss_config();
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * steps_per_epoch).max(1);

    let mut best = net.quantized();
    let mut best_epoch = 0;
    let mut best_auc: Option<f64> = None;
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0;
    let mut step = 0;
    let mut lr = cfg.lr_init;

    for epoch in 1..=cfg.epochs {
        let mut stats = EpochStats::default();
        for batch in train.make_batches(cfg.batch_size, &cfg.aug, cfg.epoch_seed(epoch))? {
            lr = cosine_lr(step, total_steps, cfg.lr_init, cfg.lr_min)?;
            let mut tape = Tape::new();
            let x = tape.constant(batch.images.clone());
            let out = net.forward(&mut tape, "", x)?;
            let bundle = main_loss(&mut tape, out, &batch.labels, &net, "", &loss_cfg)?;
            let scores = tape.value(out)?.data().to_vec();
            let grads = tape.backward(bundle.total_var)?;
            net.accumulate(&grads)?;
            sgd.step(&mut net, lr, cfg.momentum, &mask)?;
            step += 1;
            if cfg.log_batches {
                log.push(batch_row(epoch, &bundle, lr))?;
            }
            stats.add(&bundle, &scores, &batch);
        }
        log.push(stats.row(epoch, lr, false))?;

        let snapshot = net.quantized();
        let (row, report) = single_eval(&snapshot, val, cfg, epoch, "val", lr)?;
        log.push(row)?;
        let improved = match best_auc {
            None => true,
            Some(b) => report.auc >= b + cfg.early_stop_min_delta,
        };
        let val_loss = row_total(&log);
        if is_better(report.auc, val_loss, best_auc, best_loss) {
            best_loss = val_loss;
            best = snapshot;
            best_epoch = epoch;
            best_auc = Some(report.auc);
            if let Some(path) = best_ckpt {
                save_checkpoint(&best, path)?;
            }
        }
        if improved {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.early_stop_patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    if cfg.epochs == 0 {
        if let Some(path) = best_ckpt {
            save_checkpoint(&best, path)?;
        }
    }
    Ok(PretrainOutcome {
        best,
        last: net.quantized(),
        best_epoch,
        best_auc,
        log,
    })
}

/// Optimizer state of a transfer run.
pub struct TransferState {
    pub pair: SiblingPair,
    pub sgd: Sgd,
    pub mask: BTreeSet<String>,
    pub step: usize,
    pub total_steps: usize,
    pub batches_seen: usize,
}

fn segment_of(name: &str) -> Option<usize> {
    let rest = name.split('.').nth(1)?;
    rest.strip_prefix("seg")?.parse().ok()
}

impl TransferState {
    /// Both siblings start from `pretrained`. Parameters outside the update
    /// mask are marked as not requiring gradients.
    pub fn new(pretrained: &BlockNet, cfg: &OptimConfig, total_steps: usize) -> Result<Self> {
        let mut pair = SiblingPair::from_pretrained(pretrained, cfg.route_head)?;
        let k = pair.master.num_segments();
        if cfg.frozen_segments >= k + 1 {
            return Err(Error::Config(format!(
                "cannot freeze {} segments of a {k}-segment network",
                cfg.frozen_segments
            )));
        }
        let mask: BTreeSet<String> = pair
            .route_gradient_mask(cfg.update_aux)
            .into_iter()
            .filter(|n| segment_of(n).is_none_or(|s| s > cfg.frozen_segments))
            .collect();
        for name in pair.param_names() {
            if let Some(p) = pair.param_mut(&name) {
                p.requires_grad = mask.contains(&name);
            }
        }
        Ok(Self {
            pair,
            sgd: Sgd::new(),
            mask,
            step: 0,
            total_steps: total_steps.max(1),
            batches_seen: 0,
        })
    }
}

/// One pass over the target data: three routes per batch, the combined loss,
/// one masked optimizer step. Returns the optional batch rows followed by the
/// epoch's `train` row.
pub fn xtransfer_epoch(state: &mut TransferState, data: &Dataset, cfg: &OptimConfig, epoch: usize) -> Result<Vec<TrainLogRow>> {
    let loss_cfg = cfg.loss_config();
    let mut rows = Vec::new();
    let mut stats = EpochStats::default();
    let mut lr = cosine_lr(state.step.min(state.total_steps), state.total_steps, cfg.lr_init, cfg.lr_min)?;
    for batch in data.make_batches(cfg.batch_size, &cfg.aug, cfg.epoch_seed(epoch))? {
        lr = cosine_lr(state.step.min(state.total_steps), state.total_steps, cfg.lr_init, cfg.lr_min)?;
        let rule = if state.batches_seen == 0 || cfg.alpha_mode == AlphaMode::Zero {
            AlphaRule::Zero
        } else {
            AlphaRule::Dynamic
        };
        let mut tape = Tape::new();
        let x = tape.constant(batch.images.clone());
        let r = state.pair.forward_all(&mut tape, x)?;
        let bundle = target_loss(&mut tape, r.out1, r.out2, r.out3, &batch.labels, &state.pair.master, MASTER, &loss_cfg, rule)?;
        let scores = tape.value(r.out3)?.data().to_vec();
        let grads = tape.backward(bundle.total_var)?;
        state.pair.accumulate(&grads)?;
        state.sgd.step(&mut state.pair, lr, cfg.momentum, &state.mask)?;
        state.step += 1;
        state.batches_seen += 1;
        if cfg.log_batches {
            rows.push(batch_row(epoch, &bundle, lr));
        }
        stats.add(&bundle, &scores, &batch);
    }
    rows.push(stats.row(epoch, lr, cfg.alpha_mode == AlphaMode::Dynamic));
    Ok(rows)
}

/// All three routes over a labelled split, as one evaluation row.
pub fn pair_eval(pair: &SiblingPair, data: &Dataset, cfg: &OptimConfig, epoch: usize, split: &str, lr: f64) -> Result<(TrainLogRow, EvalReport)> {
    let mut outs: [Vec<f64>; 3] = Default::default();
    for b in data.eval_batches(cfg.batch_size)? {
        let mut tape = Tape::no_grad();
        let x = tape.constant(b.images);
        let r = pair.forward_all(&mut tape, x)?;
        for (acc, v) in outs.iter_mut().zip([r.out1, r.out2, r.out3]) {
            acc.extend_from_slice(tape.value(v)?.data());
        }
    }
    let report = evaluate_scores(&outs[2], &data.labels)?;
    let mut tape = Tape::no_grad();
    let [o1, o2, o3] = outs.map(|v| {
        let n = v.len();
        tape.constant(Tensor::new(vec![n], v).expect("non-empty split"))
    });
    let rule = match cfg.alpha_mode {
        AlphaMode::Dynamic => AlphaRule::Dynamic,
        AlphaMode::Zero => AlphaRule::Zero,
    };
    let bundle = target_loss(&mut tape, o1, o2, o3, &data.labels, &pair.master, MASTER, &cfg.loss_config(), rule)?;
    Ok((eval_row(epoch, split, &bundle, Some(&report), lr), report))
}

#[derive(Clone, Debug)]
pub struct TransferOutcome {
    /// Master at the best mean of source and target AUC (as stored on disk).
    pub master: BlockNet,
    /// Auxiliary network after the last epoch (as stored on disk).
    pub aux: BlockNet,
    pub best_epoch: usize,
    pub source: Option<EvalReport>,
    pub target: Option<EvalReport>,
    pub log: TrainLog,
}

fn quantized_pair(pair: &SiblingPair) -> Result<SiblingPair> {
    SiblingPair::new(pair.aux.quantized(), pair.master.quantized(), pair.route_head)
}

/// Full transfer: epoch 0 rows record the starting point, then one
/// `xtransfer_epoch` per epoch under a cosine schedule over all steps. The
/// master with the best `(source_auc + target_auc) / 2` over epochs >= 1 is
/// returned.
pub fn run_transfer(
    pretrained: &BlockNet,
    target_train: &Dataset,
    source_eval: &Dataset,
    target_eval: &Dataset,
    cfg: &OptimConfig,
) -> Result<TransferOutcome> {
    cfg.validate()?;
    check_two_classes(target_train, "target training data")?;
    check_two_classes(source_eval, "source evaluation data")?;
    check_two_classes(target_eval, "target evaluation data")?;
    let steps_per_epoch = target_train.len().div_ceil(cfg.batch_size);
    let mut state = TransferState::new(pretrained, cfg, cfg.epochs * steps_per_epoch)?;
    let mut log = TrainLog::default();

    let start = quantized_pair(&state.pair)?;
    log.push(pair_eval(&start, source_eval, cfg, 0, "source", cfg.lr_init)?.0)?;
    log.push(pair_eval(&start, target_eval, cfg, 0, "target", cfg.lr_init)?.0)?;

    let mut best: Option<(f64, usize, BlockNet, EvalReport, EvalReport)> = None;
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let rows = xtransfer_epoch(&mut state, target_train, cfg, epoch)?;
        let lr = rows.last().map_or(cfg.lr_init, |r| r.lr);
        for r in rows {
            log.push(r)?;
        }
        let snapshot = quantized_pair(&state.pair)?;
        let (src_row, src) = pair_eval(&snapshot, source_eval, cfg, epoch, "source", lr)?;
        let (tgt_row, tgt) = pair_eval(&snapshot, target_eval, cfg, epoch, "target", lr)?;
        let (src_total, tgt_total) = (src_row.total, tgt_row.total);
        log.push(src_row)?;
        log.push(tgt_row)?;
        let score = 0.5 * (src.auc + tgt.auc);
        let prev = best.as_ref().map(|b| b.0);
        let loss = 0.5 * (src_total + tgt_total);
        if is_better(score, loss, prev, best_loss) {
            best_loss = loss;
            best = Some((score, epoch, snapshot.master, src, tgt));
        }
        if prev.is_none_or(|b| score >= b + cfg.early_stop_min_delta) {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.early_stop_patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    let aux = state.pair.aux.quantized();
    Ok(match best {
        Some((_, epoch, master, src, tgt)) => TransferOutcome {
            master,
            aux,
            best_epoch: epoch,
            source: Some(src),
            target: Some(tgt),
            log,
        },
        None => TransferOutcome {
            master: start.master,
            aux,
            best_epoch: 0,
            source: None,
            target: None,
            log,
        },
    })
}

/// Qualified names of the auxiliary network, for checks on masking.
pub fn aux_names(pair: &SiblingPair) -> Vec<String> {
    pair.aux.params().names().map(|n| qualify(AUX, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocknet::NetSpec;
    use crate::checkpoint::encode;
    use crate::dataforge::{generate_samples, DomainRecipe};

    fn data(recipe: &DomainRecipe, n: usize, seed: u64) -> Dataset {
        let (imgs, labels) = generate_samples(recipe, n, n, seed).unwrap();
        Dataset::from_labeled(imgs, &labels).unwrap()
    }

    fn tiny_cfg() -> OptimConfig {
        OptimConfig {
            epochs: 2,
            batch_size: 8,
            aug: AugmentConfig::none(),
            log_batches: true,
            ..OptimConfig::transfer()
        }
    }

    fn spec() -> NetSpec {
        NetSpec::uniform(1, &[2, 4], 3)
    }

    #[test]
    fn first_batch_alpha_zero_then_identity() {
        let ds = data(&DomainRecipe::domain_b(8), 12, 1);
        let net = BlockNet::build(&spec(), 3).unwrap();
        let cfg = tiny_cfg();
        let mut state = TransferState::new(&net, &cfg, 6).unwrap();
        let rows = xtransfer_epoch(&mut state, &ds, &cfg, 1).unwrap();
        let batches: Vec<_> = rows.iter().filter(|r| r.split == "batch").collect();
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[0].alpha, 0.0);
        assert_eq!(batches[0].l1, batches[0].l3);
        assert_eq!(batches[0].l2, batches[0].l3);
        for r in &batches[1..] {
            assert!((r.alpha * (r.l1 + r.l2) - 2.0 * r.l3).abs() < 1e-9);
            assert!(r.alpha > 0.0);
        }
    }

    #[test]
    fn zero_lr_changes_nothing_and_aux_stays_fixed() {
        let ds = data(&DomainRecipe::domain_b(8), 6, 2);
        let net = BlockNet::build(&spec(), 4).unwrap();
        let mut cfg = tiny_cfg();
        cfg.lr_init = 0.0;
        let mut state = TransferState::new(&net, &cfg, 2).unwrap();
        xtransfer_epoch(&mut state, &ds, &cfg, 1).unwrap();
        assert_eq!(encode(&state.pair.master), encode(&net));

        let cfg = tiny_cfg();
        let mut state = TransferState::new(&net, &cfg, 2).unwrap();
        xtransfer_epoch(&mut state, &ds, &cfg, 1).unwrap();
        assert_eq!(encode(&state.pair.aux), encode(&net));
        assert_ne!(encode(&state.pair.master), encode(&net));
        assert!(aux_names(&state.pair).iter().all(|n| !state.mask.contains(n)));
    }

    #[test]
    fn frozen_segments_leave_early_weights() {
        let ds = data(&DomainRecipe::domain_b(8), 6, 2);
        let net = BlockNet::build(&spec(), 4).unwrap();
        let cfg = OptimConfig {
            epochs: 1,
            batch_size: 4,
            aug: AugmentConfig::none(),
            ..OptimConfig::general_transfer(2)
        };
        let mut state = TransferState::new(&net, &cfg, 3).unwrap();
        xtransfer_epoch(&mut state, &ds, &cfg, 1).unwrap();
        for name in net.segment_param_names(1) {
            assert_eq!(state.pair.master.params().value(&name).unwrap(), net.params().value(&name).unwrap());
        }
        for name in net.segment_param_names(2) {
            assert_ne!(state.pair.master.params().value(&name).unwrap(), net.params().value(&name).unwrap());
        }
        assert!(state.mask.iter().all(|n| n.starts_with("master.")));
    }

    #[test]
    fn pretrain_zero_epochs_returns_input() {
        let ds = data(&DomainRecipe::domain_a(8), 4, 1);
        let net = BlockNet::build(&spec(), 5).unwrap();
        let cfg = OptimConfig {
            epochs: 0,
            ..tiny_cfg()
        };
        let out = pretrain(net.clone(), &ds, &ds, &cfg, None).unwrap();
        assert_eq!(encode(&out.best), encode(&net));
        assert!(out.log.rows.is_empty());
    }

    #[test]
    fn pretrain_rows_and_determinism() {
        let ds = data(&DomainRecipe::domain_a(8), 8, 1);
        let val = data(&DomainRecipe::domain_a(8), 4, 2);
        let net = BlockNet::build(&spec(), 5).unwrap();
        let cfg = OptimConfig {
            epochs: 3,
            log_batches: false,
            aug: AugmentConfig::default(),
            ..OptimConfig::pretrain()
        };
        let a = pretrain(net.clone(), &ds, &val, &cfg, None).unwrap();
        let b = pretrain(net, &ds, &val, &cfg, None).unwrap();
        assert_eq!(a.log.to_csv(), b.log.to_csv());
        let epochs: Vec<usize> = a.log.split("val").map(|r| r.epoch).collect();
        assert_eq!(epochs, [1, 2, 3]);
        let lrs: Vec<f64> = a.log.split("train").map(|r| r.lr).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn degenerate_training_data() {
        let (imgs, _) = generate_samples(&DomainRecipe::domain_a(8), 4, 0, 1).unwrap();
        let ds = Dataset::from_labeled(imgs, &[0, 0, 0, 0]).unwrap();
        let net = BlockNet::build(&spec(), 5).unwrap();
        assert!(matches!(
            pretrain(net, &ds, &ds, &tiny_cfg(), None),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn segment_names() {
        assert_eq!(segment_of("master.seg2.conv1.weight"), Some(2));
        assert_eq!(segment_of("aux.head.bias"), None);
    }
}
