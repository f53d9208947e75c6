//! CSV and JSON artifact writers. Floats are written in shortest round-trip form, so a value
//! written and re-read is bit-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::align::AlignfResult;
use crate::error::{Error, Result};
use crate::gram::{ProjectionProfile, Spectrum};
use crate::train::Record;

/// A CSV file built in memory and written in one go.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.text).map_err(|e| Error::io(path, e))
    }
}

/// Shortest round-trip form, switching to exponent notation for very small or large values.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Quotes a text field when it contains a delimiter.
pub fn text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        let mut out = String::from("\"");
        for c in s.chars() {
            if c == '"' {
                out.push('"');
            }
            out.push(c);
        }
        out.push('"');
        out
    } else {
        s.to_owned()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

/// `index,eigenvalue`
pub fn spectrum_csv(spec: &Spectrum) -> Csv {
    let mut csv = Csv::new(&["index", "eigenvalue"]);
    for (i, l) in spec.values.iter().enumerate() {
        csv.row(&[i.to_string(), num(*l)]);
    }
    csv
}

/// `index,eigenvalue,projection,cumulative`
pub fn projections_csv(spec: &Spectrum, profile: &ProjectionProfile) -> Csv {
    let mut csv = Csv::new(&["index", "eigenvalue", "projection", "cumulative"]);
    for i in 0..spec.n() {
        csv.row(&[
            i.to_string(),
            num(spec.values[i]),
            num(profile.projections[i]),
            num(profile.cumulative[i]),
        ]);
    }
    csv
}

/// `step,train_loss,test_loss,test_accuracy`
pub fn trajectory_csv(records: &[Record]) -> Csv {
    let mut csv = Csv::new(&["step", "train_loss", "test_loss", "test_accuracy"]);
    for r in records {
        csv.row(&[
            r.step.to_string(),
            num(r.train_loss),
            opt(r.test_loss),
            opt(r.test_accuracy),
        ]);
    }
    csv
}

/// `base_index,gamma,alignment,weight`; excluded bases have an empty alignment.
pub fn alignf_csv(gammas: &[f64], result: &AlignfResult) -> Csv {
    let mut csv = Csv::new(&["base_index", "gamma", "alignment", "weight"]);
    for (i, g) in gammas.iter().enumerate() {
        csv.row(&[
            i.to_string(),
            num(*g),
            opt(result.base_alignments[i]),
            num(result.weights[i]),
        ]);
    }
    csv
}
