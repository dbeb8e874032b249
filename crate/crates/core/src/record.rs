//! Measurement records and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Homodyne current increments on a fixed grid.
///
/// Element `i` covers `[t0 + i dt, t0 + (i+1) dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub t0: f64,
    pub dt: f64,
    pub di: Vec<f64>,
    /// Wiener increments that generated `di`, for synthetic runs only.
    pub dw_true: Option<Vec<f64>>,
}

impl MeasurementRecord {
    pub fn new(t0: f64, dt: f64, di: Vec<f64>, dw_true: Option<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::validation(format!("dt = {dt} must be positive")));
        }
        if let Some(dw) = &dw_true {
            if dw.len() != di.len() {
                return Err(Error::validation(format!(
                    "dW_true has {} entries, dI has {}",
                    dw.len(),
                    di.len()
                )));
            }
        }
        Ok(Self {
            t0,
            dt,
            di,
            dw_true,
        })
    }

    pub fn len(&self) -> usize {
        self.di.len()
    }

    pub fn is_empty(&self) -> bool {
        self.di.is_empty()
    }

    pub fn t1(&self) -> f64 {
        self.time(self.di.len())
    }

    /// Start time of step `i` (or the grid point `i`).
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Grid points `t0, …, t1`, one more than the number of increments.
    pub fn grid(&self) -> Vec<f64> {
        (0..=self.di.len()).map(|i| self.time(i)).collect()
    }

    /// Writes `t,dI[,dW_true]` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e| Error::Csv {
            path: "<record>".into(),
            source: e,
        };
        match &self.dw_true {
            Some(_) => w.write_record(["t", "dI", "dW_true"]).map_err(csv_err)?,
            None => w.write_record(["t", "dI"]).map_err(csv_err)?,
        }
        for (i, di) in self.di.iter().enumerate() {
            let t = format_time(self.time(i));
            let di = di.to_string();
            match &self.dw_true {
                Some(dw) => w
                    .write_record([t, di, dw[i].to_string()])
                    .map_err(csv_err)?,
                None => w.write_record([t, di]).map_err(csv_err)?,
            }
        }
        w.flush().map_err(|e| Error::io("<record>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t: f64,
            #[serde(rename = "dI")]
            di: f64,
            #[serde(rename = "dW_true")]
            dw_true: Option<f64>,
        }
        let mut rdr = csv::Reader::from_reader(input);
        let has_dw = rdr
            .headers()
            .map_err(|e| Error::Csv {
                path: "<record>".into(),
                source: e,
            })?
            .iter()
            .any(|h| h == "dW_true");
        let mut times = Vec::new();
        let mut di = Vec::new();
        let mut dw = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| Error::Csv {
                path: "<record>".into(),
                source: e,
            })?;
            times.push(row.t);
            di.push(row.di);
            if has_dw {
                dw.push(
                    row.dw_true
                        .ok_or_else(|| Error::validation("missing dW_true"))?,
                );
            }
        }
        if times.len() < 2 {
            return Err(Error::validation(
                "record needs at least two rows to infer dt",
            ));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        Self::new(times[0], dt, di, has_dw.then_some(dw))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Times are written with 9 significant digits.
pub fn format_time(t: f64) -> String {
    format!("{t:.8e}")
}
