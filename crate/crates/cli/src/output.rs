//! Output plumbing: CSV at 17 significant digits with the config hash
//! embedded, JSON with the hash as a field.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;

pub struct CsvWriter {
    out: Box<dyn Write>,
}

impl CsvWriter {
    pub fn create(path: Option<&PathBuf>, config_hash: &str, header: &[&str]) -> anyhow::Result<Self> {
        let mut out: Box<dyn Write> = match path {
            Some(p) => Box::new(std::io::BufWriter::new(
                std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(std::io::stdout().lock()),
        };
        writeln!(out, "# config_sha256={config_hash}")?;
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out })
    }

    pub fn row(&mut self, fields: &[CsvField]) -> anyhow::Result<()> {
        let mut first = true;
        for f in fields {
            if !first {
                write!(self.out, ",")?;
            }
            first = false;
            match f {
                CsvField::Num(v) => write!(self.out, "{}", fmt17(*v))?,
                CsvField::Int(v) => write!(self.out, "{v}")?,
                CsvField::Str(s) => write!(self.out, "{s}")?,
            }
        }
        writeln!(self.out)?;
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub enum CsvField {
    Num(f64),
    Int(i64),
    Str(String),
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_json(path: Option<&PathBuf>, value: &serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}
