//! Before/after summaries of training logs.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{RunConfig, EFFECTIVE_CONFIG_FILE};
use crate::error::{Error, Result};
use crate::trainer::{TrainLog, TrainLogRow};

pub const SUMMARY_HEADER: &str =
    "log,beta,best_epoch,source_auc,target_auc,source_auc_before,target_auc_before,alpha_trace";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub log: String,
    pub beta: Option<f64>,
    pub best_epoch: usize,
    pub source_auc: Option<f64>,
    pub target_auc: Option<f64>,
    pub source_auc_before: Option<f64>,
    pub target_auc_before: Option<f64>,
    /// `alpha` of each epoch's `train` row.
    pub alpha_trace: Vec<f64>,
}

fn at<'a>(log: &'a TrainLog, split: &'a str, epoch: usize) -> Option<&'a TrainLogRow> {
    log.split(split).find(|r| r.epoch == epoch)
}

/// Picks the best epoch the same way training does: transfer logs by the
/// mean of source and target AUC (epochs >= 1), pretraining logs by
/// validation AUC; ties go to the lower loss, then the earlier epoch.
pub fn summarize(log: &TrainLog, name: &str, beta: Option<f64>) -> Result<RunSummary> {
    let transfer = log.split("target").next().is_some();
    let mut best: Option<(usize, f64, f64)> = None;
    let mut epochs: Vec<usize> = log.rows.iter().map(|r| r.epoch).filter(|&e| e > 0).collect();
    epochs.dedup();
    for epoch in epochs {
        let (metric, loss) = if transfer {
            match (at(log, "source", epoch), at(log, "target", epoch)) {
                (Some(s), Some(t)) => match (s.auc, t.auc) {
                    (Some(a), Some(b)) => (0.5 * (a + b), 0.5 * (s.total + t.total)),
                    _ => continue,
                },
                _ => continue,
            }
        } else {
            match at(log, "val", epoch) {
                Some(v) => match v.auc {
                    Some(a) => (a, v.total),
                    None => continue,
                },
                None => continue,
            }
        };
        let better = match best {
            None => true,
            Some((_, m, l)) => metric > m || (metric == m && loss < l),
        };
        if better {
            best = Some((epoch, metric, loss));
        }
    }
    let best_epoch = best.map(|b| b.0).ok_or_else(|| Error::Format(format!("{name}: no evaluated epoch in log")))?;
    let (src_split, tgt_split) = if transfer { ("source", Some("target")) } else { ("val", None) };
    let auc = |split: &str, epoch: usize| at(log, split, epoch).and_then(|r| r.auc);
    Ok(RunSummary {
        log: name.to_string(),
        beta,
        best_epoch,
        source_auc: auc(src_split, best_epoch),
        target_auc: tgt_split.and_then(|s| auc(s, best_epoch)),
        source_auc_before: if transfer { auc("source", 0) } else { None },
        target_auc_before: if transfer { auc("target", 0) } else { None },
        alpha_trace: log.split("train").map(|r| r.alpha).collect(),
    })
}

/// `beta` from the effective config written beside a log, if present.
pub fn beta_beside(log_path: &Path) -> Option<f64> {
    let dir = log_path.parent()?;
    let path = dir.join(EFFECTIVE_CONFIG_FILE);
    RunConfig::load(&path).ok().map(|c| c.beta)
}

/// Log files under `path`: the file itself, or every `*.csv` beneath a
/// directory whose header matches the log format.
pub fn find_logs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(Error::io(path, std::io::ErrorKind::NotFound.into()));
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let p = entry.map_err(|e| Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                let head = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                if head.lines().next() == Some(crate::trainer::LOG_HEADER) {
                    out.push(p);
                }
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Format(format!("no training logs under {}", path.display())));
    }
    Ok(out)
}

/// Summaries of every log under `path`, sorted by beta (unknown last), then name.
pub fn summarize_path(path: &Path) -> Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    for p in find_logs(path)? {
        let log = TrainLog::load(&p)?;
        out.push(summarize(&log, &p.display().to_string(), beta_beside(&p))?);
    }
    out.sort_by(|a, b| {
        let key = |s: &RunSummary| s.beta.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then_with(|| a.log.cmp(&b.log))
    });
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| serde_json::to_string(&x).expect("finite")).unwrap_or_default()
}

/// Numbers are printed with the same shortest round-trip formatting as the
/// JSON output, so both carry identical values.
pub fn to_csv(summaries: &[RunSummary]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER.split(','))?;
    for s in summaries {
        let trace: Vec<String> = s.alpha_trace.iter().map(|&a| cell(Some(a))).collect();
        w.write_record([
            s.log.clone(),
            cell(s.beta),
            s.best_epoch.to_string(),
            cell(s.source_auc),
            cell(s.target_auc),
            cell(s.source_auc_before),
            cell(s.target_auc_before),
            trace.join(";"),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<report>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn to_json(summaries: &[RunSummary]) -> String {
    serde_json::to_string_pretty(summaries).expect("summaries serialize") + "\n"
}
