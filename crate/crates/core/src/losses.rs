//! Route cross-entropies, the WMW AUC surrogate, the balancing coefficient
//! `alpha`, the head L2 penalty and their combination into the target loss:
//!
//! ```text
//! total = alpha * (l1 + l2) + beta * l3 + (1 - beta) * l_auc + s * omega_fc
//! alpha = 2 * l3 / (l1 + l2)      (treated as a constant)
//! ```

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::blocknet::{qualify, BlockNet, HEAD_BIAS, HEAD_WEIGHT};
use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.16;
pub const DEFAULT_POWER: f64 = 2.0;
pub const DEFAULT_BETA: f64 = 0.6;
pub const DEFAULT_S: f64 = 1e-4;

/// Denominator below which `alpha` is taken as 0.
pub const ALPHA_EPS: f64 = 1e-12;

/// Pairwise WMW penalty: `0` once `si - sj >= gamma`, else `(gamma - (si - sj))^p`.
pub fn wmw_pair(si: f64, sj: f64, gamma: f64, p: f64) -> f64 {
    let d = si - sj;
    if d >= gamma {
        0.0
    } else {
        (gamma - d).powf(p)
    }
}

/// `-dR/dsi` (equivalently `dR/dsj`); zero on the margin boundary.
pub(crate) fn wmw_pair_slope(si: f64, sj: f64, gamma: f64, p: f64) -> f64 {
    let d = si - sj;
    if d >= gamma {
        0.0
    } else {
        p * (gamma - d).powf(p - 1.0)
    }
}

/// Mean binary cross-entropy of `scores` against `labels` (hard or soft, in `[0, 1]`).
pub fn bce(tape: &mut Tape, scores: Var, labels: &[f64]) -> Result<Var> {
    tape.bce(scores, labels)
}

/// Indices of exactly-0 and exactly-1 labels; soft labels belong to neither.
pub fn split_hard_labels(labels: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if y == 1.0 {
            pos.push(i);
        } else if y == 0.0 {
            neg.push(i);
        }
    }
    (pos, neg)
}

/// WMW AUC surrogate averaged over every (positive, negative) pair.
/// Fails with [`Error::DegenerateBatch`] unless both classes are present.
pub fn auc_loss(tape: &mut Tape, scores: Var, labels: &[f64], gamma: f64, p: f64) -> Result<Var> {
    check_wmw_params(gamma, p)?;
    let n = tape.value(scores)?.len();
    if n != labels.len() {
        return Err(Error::shape("auc_loss", format!("{n} scores vs {} labels", labels.len())));
    }
    let (pos, neg) = split_hard_labels(labels);
    tape.pairwise_margin(scores, &pos, &neg, gamma, p)
}

/// Hard form of the pairwise penalty: the share of (positive, negative)
/// pairs with `s_pos <= s_neg`. With no tied scores this is `1 - auc`.
pub fn wmw_indicator(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("wmw_indicator", format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    let (pos, neg) = split_hard_labels(labels);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegenerateBatch("wmw_indicator needs both classes".into()));
    }
    let violations = pos
        .iter()
        .flat_map(|&i| neg.iter().map(move |&j| (i, j)))
        .filter(|&(i, j)| scores[i] <= scores[j])
        .count();
    Ok(violations as f64 / (pos.len() * neg.len()) as f64)
}

fn check_wmw_params(gamma: f64, p: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} outside (0, 1]")));
    }
    if p.is_nan() || p <= 1.0 {
        return Err(Error::InvalidArgument(format!("p {p} must exceed 1")));
    }
    Ok(())
}

/// `2 * l3 / (l1 + l2)`, or 0 when the denominator is (numerically) zero.
pub fn alpha_coefficient(l1: f64, l2: f64, l3: f64) -> f64 {
    let denom = l1 + l2;
    if denom < ALPHA_EPS {
        0.0
    } else {
        2.0 * l3 / denom
    }
}

/// Sum of squares of the head's affine weight and bias, registered under `scope`.
pub fn l2_fc(tape: &mut Tape, net: &BlockNet, scope: &str) -> Result<Var> {
    let mut terms = Vec::with_capacity(2);
    for name in [HEAD_WEIGHT, HEAD_BIAS] {
        let p = net
            .params()
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        let leaf = tape.param(qualify(scope, name), p.value.clone(), p.requires_grad);
        terms.push((tape.sum_squares(leaf)?, 1.0));
    }
    tape.weighted_sum(&terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub beta: f64,
    pub s: f64,
    pub gamma: f64,
    pub p: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            s: DEFAULT_S,
            gamma: DEFAULT_GAMMA,
            p: DEFAULT_POWER,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("beta {} outside [0, 1]", self.beta)));
        }
        if self.s.is_nan() || self.s < 0.0 {
            return Err(Error::InvalidArgument(format!("s {} must be non-negative", self.s)));
        }
        check_wmw_params(self.gamma, self.p)
    }
}

/// How `alpha` is chosen for a batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaRule {
    /// From this batch's detached route losses.
    Dynamic,
    /// Forced to zero (first batch of a run, or the plain fine-tuning baseline).
    Zero,
    /// A given constant, e.g. held still while probing finite differences.
    Fixed(f64),
}

/// Per-batch loss values plus the differentiable total.
#[derive(Clone, Debug)]
pub struct LossBundle {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l_auc: f64,
    pub alpha: f64,
    pub beta: f64,
    pub s: f64,
    pub omega_fc: f64,
    pub total: f64,
    /// True when the batch lacked one class and the AUC term was dropped.
    pub auc_skipped: bool,
    pub total_var: Var,
}

impl LossBundle {
    /// Recomputes the total from the stored components.
    pub fn recombine(&self) -> f64 {
        self.alpha * (self.l1 + self.l2)
            + self.beta * self.l3
            + (1.0 - self.beta) * self.l_auc
            + self.s * self.omega_fc
    }
}

struct MainTerms {
    l3: Var,
    l3_value: f64,
    auc: Option<(Var, f64)>,
    omega: Var,
    omega_value: f64,
}

fn main_terms(tape: &mut Tape, out3: Var, labels: &[f64], master: &BlockNet, scope: &str, cfg: &LossConfig) -> Result<MainTerms> {
    cfg.validate()?;
    let l3 = bce(tape, out3, labels)?;
    let l3_value = tape.value(l3)?.item();
    let auc = match auc_loss(tape, out3, labels, cfg.gamma, cfg.p) {
        Ok(v) => {
            let value = tape.value(v)?.item();
            Some((v, value))
        }
        Err(Error::DegenerateBatch(_)) => None,
        Err(e) => return Err(e),
    };
    let omega = l2_fc(tape, master, scope)?;
    let omega_value = tape.value(omega)?.item();
    Ok(MainTerms {
        l3,
        l3_value,
        auc,
        omega,
        omega_value,
    })
}

/// Full sibling objective from the three route outputs. The AUC term uses
/// route-3 scores only; `alpha` never carries gradient.
#[allow(clippy::too_many_arguments)]
pub fn target_loss(
    tape: &mut Tape,
    out1: Var,
    out2: Var,
    out3: Var,
    labels: &[f64],
    master: &BlockNet,
    master_scope: &str,
    cfg: &LossConfig,
    alpha_rule: AlphaRule,
) -> Result<LossBundle> {
    let l1 = bce(tape, out1, labels)?;
    let l2 = bce(tape, out2, labels)?;
    let (l1v, l2v) = (tape.value(l1)?.item(), tape.value(l2)?.item());
    let m = main_terms(tape, out3, labels, master, master_scope, cfg)?;
    let alpha = match alpha_rule {
        AlphaRule::Dynamic => alpha_coefficient(l1v, l2v, m.l3_value),
        AlphaRule::Zero => 0.0,
        AlphaRule::Fixed(a) => a,
    };
    let mut terms = vec![(l1, alpha), (l2, alpha), (m.l3, cfg.beta), (m.omega, cfg.s)];
    let mut l_auc = 0.0;
    if let Some((v, value)) = m.auc {
        terms.push((v, 1.0 - cfg.beta));
        l_auc = value;
    }
    let total_var = tape.weighted_sum(&terms)?;
    Ok(LossBundle {
        l1: l1v,
        l2: l2v,
        l3: m.l3_value,
        l_auc,
        alpha,
        beta: cfg.beta,
        s: cfg.s,
        omega_fc: m.omega_value,
        total: tape.value(total_var)?.item(),
        auc_skipped: m.auc.is_none(),
        total_var,
    })
}

/// Single-network form used before any sibling exists:
/// `beta * bce + (1 - beta) * l_auc + s * omega_fc`.
pub fn main_loss(
    tape: &mut Tape,
    out: Var,
    labels: &[f64],
    net: &BlockNet,
    scope: &str,
    cfg: &LossConfig,
) -> Result<LossBundle> {
    let m = main_terms(tape, out, labels, net, scope, cfg)?;
    let mut terms = vec![(m.l3, cfg.beta), (m.omega, cfg.s)];
    let mut l_auc = 0.0;
    if let Some((v, value)) = m.auc {
        terms.push((v, 1.0 - cfg.beta));
        l_auc = value;
    }
    let total_var = tape.weighted_sum(&terms)?;
    Ok(LossBundle {
        l1: 0.0,
        l2: 0.0,
        l3: m.l3_value,
        l_auc,
        alpha: 0.0,
        beta: cfg.beta,
        s: cfg.s,
        omega_fc: m.omega_value,
        total: tape.value(total_var)?.item(),
        auc_skipped: m.auc.is_none(),
        total_var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::blocknet::NetSpec;

    fn scores(tape: &mut Tape, v: &[f64]) -> Var {
        tape.constant(Tensor::new(vec![v.len()], v.to_vec()).unwrap())
    }

    #[test]
    fn bce_examples() {
        let mut tape = Tape::new();
        let s = scores(&mut tape, &[0.5]);
        let l = bce(&mut tape, s, &[1.0]).unwrap();
        assert!((tape.value(l).unwrap().item() - std::f64::consts::LN_2).abs() < 1e-12);
        let s = scores(&mut tape, &[0.9]);
        let l = bce(&mut tape, s, &[1.0]).unwrap();
        assert!((tape.value(l).unwrap().item() - 0.105_360_515_657_826_3).abs() < 1e-12);
        // saturated prediction: finite and tiny, equal to -ln(1 - 1e-12)
        let s = scores(&mut tape, &[1.0, 0.0]);
        let l = bce(&mut tape, s, &[1.0, 0.0]).unwrap();
        let v = tape.value(l).unwrap().item();
        assert!(v.is_finite());
        assert!((v - (-(1.0f64 - 1e-12).ln())).abs() < 1e-24);
    }

    #[test]
    fn bce_errors() {
        let mut tape = Tape::new();
        let s = scores(&mut tape, &[0.5, 0.5]);
        assert!(matches!(bce(&mut tape, s, &[1.0, 2.0]), Err(Error::InvalidLabel(_))));
        assert!(matches!(bce(&mut tape, s, &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn wmw_pair_examples() {
        assert_eq!(wmw_pair(0.9, 0.1, 0.16, 2.0), 0.0);
        assert!((wmw_pair(0.5, 0.5, 0.16, 2.0) - 0.0256).abs() < 1e-15);
        assert!((wmw_pair(0.7, 0.6, 0.16, 2.0) - 0.0036).abs() < 1e-15);
    }

    #[test]
    fn auc_loss_examples() {
        let mut tape = Tape::new();
        let s = scores(&mut tape, &[0.9, 0.8, 0.3, 0.1]);
        let l = auc_loss(&mut tape, s, &[1.0, 1.0, 0.0, 0.0], 0.16, 2.0).unwrap();
        assert_eq!(tape.value(l).unwrap().item(), 0.0);

        let s = scores(&mut tape, &[0.5, 0.5]);
        let l = auc_loss(&mut tape, s, &[1.0, 0.0], 0.16, 2.0).unwrap();
        assert!((tape.value(l).unwrap().item() - 0.0256).abs() < 1e-15);

        let s = scores(&mut tape, &[0.9, 0.5, 0.5]);
        let l = auc_loss(&mut tape, s, &[1.0, 1.0, 0.0], 0.16, 2.0).unwrap();
        assert!((tape.value(l).unwrap().item() - 0.0128).abs() < 1e-15);
    }

    #[test]
    fn auc_loss_degenerate_and_soft_labels() {
        let mut tape = Tape::new();
        let s = scores(&mut tape, &[0.2, 0.4]);
        assert!(matches!(
            auc_loss(&mut tape, s, &[1.0, 1.0], 0.16, 2.0),
            Err(Error::DegenerateBatch(_))
        ));
        // soft label dropped from pairs: only (0.9 vs 0.9) counts
        let s = scores(&mut tape, &[0.9, 0.1, 0.9]);
        let l = auc_loss(&mut tape, s, &[1.0, 0.4, 0.0], 0.16, 2.0).unwrap();
        assert!((tape.value(l).unwrap().item() - 0.0256).abs() < 1e-15);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_coefficient(1.0, 1.0, 1.0), 1.0);
        assert!((alpha_coefficient(0.8, 1.2, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(alpha_coefficient(0.0, 0.0, 0.7), 0.0);
    }

    fn net_with_head(weight: &[f64], bias: f64) -> BlockNet {
        let spec = NetSpec::uniform(1, &[3, weight.len()], 3);
        let mut net = BlockNet::build(&spec, 1).unwrap();
        net.params_mut().get_mut(HEAD_WEIGHT).unwrap().value.data_mut().copy_from_slice(weight);
        net.params_mut().get_mut(HEAD_BIAS).unwrap().value.data_mut()[0] = bias;
        net
    }

    #[test]
    fn l2_fc_examples() {
        let mut tape = Tape::new();
        let v = l2_fc(&mut tape, &net_with_head(&[0.0, 0.0], 0.0), "m").unwrap();
        assert_eq!(tape.value(v).unwrap().item(), 0.0);
        let v = l2_fc(&mut tape, &net_with_head(&[1.0, 2.0], 2.0), "m").unwrap();
        assert_eq!(tape.value(v).unwrap().item(), 9.0);
        let net = BlockNet::build(&NetSpec::desk(), 4).unwrap();
        let v = l2_fc(&mut tape, &net, "").unwrap();
        assert!(tape.value(v).unwrap().item() >= 0.0);
    }

    #[test]
    fn target_loss_collapses() {
        let net = net_with_head(&[0.0, 0.0], 0.0);
        let labels = [1.0, 0.0, 1.0];
        let beta_one = LossConfig {
            beta: 1.0,
            s: 0.0,
            ..LossConfig::default()
        };
        let mut tape = Tape::new();
        let o = scores(&mut tape, &[0.7, 0.4, 0.55]);
        let b = target_loss(&mut tape, o, o, o, &labels, &net, "m", &beta_one, AlphaRule::Dynamic).unwrap();
        assert_eq!(b.alpha, 1.0);
        assert!((b.total - 3.0 * b.l3).abs() < 1e-12);

        let b = target_loss(&mut tape, o, o, o, &labels, &net, "m", &beta_one, AlphaRule::Zero).unwrap();
        assert_eq!(b.total, b.l3);

        let with_s = LossConfig { s: 1.0, ..beta_one };
        let c = target_loss(&mut tape, o, o, o, &labels, &net, "m", &with_s, AlphaRule::Zero).unwrap();
        assert_eq!(c.total, b.total);
    }

    #[test]
    fn bundle_identities() {
        let net = BlockNet::build(&NetSpec::uniform(1, &[2, 4], 3), 3).unwrap();
        let mut tape = Tape::new();
        let o1 = scores(&mut tape, &[0.2, 0.9, 0.6, 0.4]);
        let o2 = scores(&mut tape, &[0.3, 0.7, 0.5, 0.5]);
        let o3 = scores(&mut tape, &[0.35, 0.8, 0.65, 0.45]);
        let cfg = LossConfig::default();
        let b = target_loss(&mut tape, o1, o2, o3, &[0.0, 1.0, 1.0, 0.0], &net, "master", &cfg, AlphaRule::Dynamic).unwrap();
        assert!((b.alpha * (b.l1 + b.l2) - 2.0 * b.l3).abs() < 1e-12);
        assert!((b.recombine() - b.total).abs() < 1e-12);
        assert!(!b.auc_skipped);
    }

    #[test]
    fn single_class_batch_skips_auc() {
        let net = BlockNet::build(&NetSpec::uniform(1, &[2, 4], 3), 3).unwrap();
        let mut tape = Tape::new();
        let o = scores(&mut tape, &[0.2, 0.9]);
        let b = main_loss(&mut tape, o, &[1.0, 1.0], &net, "", &LossConfig::default()).unwrap();
        assert!(b.auc_skipped);
        assert_eq!(b.l_auc, 0.0);
        assert!((b.recombine() - b.total).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(LossConfig { beta: 1.5, ..Default::default() }.validate().is_err());
        assert!(LossConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { p: 1.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { s: -1.0, ..Default::default() }.validate().is_err());
    }
}
