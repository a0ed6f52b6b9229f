use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "epoch,split,l1,l2,l3,l_auc,alpha,total,auc,ap,acc,lr";

/// One evaluation point. Metrics are empty when undefined (single-class data).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub split: String,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l_auc: f64,
    pub alpha: f64,
    pub total: f64,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub acc: Option<f64>,
    pub lr: f64,
}

impl TrainLogRow {
    fn check(&self) -> Result<()> {
        let fields = [
            self.l1,
            self.l2,
            self.l3,
            self.l_auc,
            self.alpha,
            self.total,
            self.lr,
        ];
        let metrics = [self.auc, self.ap, self.acc];
        if fields.iter().chain(metrics.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("log row epoch {} split {}", self.epoch, self.split)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainLog {
    pub fn push(&mut self, row: TrainLogRow) -> Result<()> {
        row.check()?;
        self.rows.push(row);
        Ok(())
    }

    pub fn split<'a>(&'a self, split: &'a str) -> impl Iterator<Item = &'a TrainLogRow> + 'a {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        if self.rows.is_empty() {
            w.write_record(LOG_HEADER.split(','))?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<log>", e))?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(r);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != LOG_HEADER {
            return Err(Error::Format(format!("log header must be `{LOG_HEADER}`")));
        }
        let mut log = TrainLog::default();
        for rec in r.deserialize() {
            let row: TrainLogRow = rec.map_err(|e| Error::Format(e.to_string()))?;
            row.check().map_err(|e| Error::Format(e.to_string()))?;
            log.rows.push(row);
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }
}
