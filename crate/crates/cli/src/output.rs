//! Output files and JSON with 9 significant digits.

use cic_core::fmt::g9;
use serde::Serialize;
use serde_json::Value;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn round(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            let x = n.as_f64().expect("float");
            let r: f64 = g9(x).parse().expect("g9 output parses");
            serde_json::Number::from_f64(r).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round(v))).collect()),
        other => other,
    }
}

pub fn to_json<T: Serialize>(x: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(x).map_err(|e| CliError::Runtime(e.to_string()))?;
    serde_json::to_string_pretty(&round(v)).map_err(|e| CliError::Runtime(e.to_string()))
}

pub struct OutDir {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, x: &T) -> Result<(), CliError> {
        let text = to_json(x)?;
        self.write(name, |w| writeln!(w, "{text}").map_err(|e| CliError::Runtime(e.to_string())))
    }

    /// Writes `stem.csv` through `csv` or `stem.json` from `rows`.
    pub fn table<T: Serialize, F>(&mut self, stem: &str, format: Format, rows: &[T], csv: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> cic_core::Result<()>,
    {
        let name = format!("{stem}.{}", format.ext());
        match format {
            Format::Csv => self.write(&name, |w| csv(w).map_err(CliError::from)),
            Format::Json => self.json(&name, &rows),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_numbers_have_nine_digits() {
        #[derive(Serialize)]
        struct R {
            x: f64,
            n: usize,
            nan: f64,
        }
        let s = to_json(&R { x: 1.0 / 3.0, n: 7, nan: f64::NAN }).unwrap();
        assert!(s.contains("0.333333333") && !s.contains("0.3333333333"));
        assert!(s.contains("\"n\": 7"));
        assert!(s.contains("\"nan\": null"));
    }
}
