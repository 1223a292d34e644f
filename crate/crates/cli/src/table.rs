//! Named-column CSV input for the statistics subcommands.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use umi_core::Error;

pub struct Table {
    path: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn input_error(msg: String) -> anyhow::Error {
    Error::Input(msg).into()
}

impl Table {
    pub fn load(path: &Path) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(umi_core::Error::from)
            .with_context(|| format!("reading {}", path.display()))?;
        let headers = rdr
            .headers()
            .map_err(umi_core::Error::from)?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(umi_core::Error::from)?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table {
            path: path.display().to_string(),
            headers,
            rows,
        })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == &name.to_ascii_lowercase())
            .ok_or_else(|| input_error(format!("{}: no column `{name}` (have {})", self.path, self.headers.join(", "))))
    }

    pub fn strings(&self, name: &str) -> Result<Vec<String>> {
        let k = self.index(name)?;
        Ok(self.rows.iter().map(|r| r.get(k).cloned().unwrap_or_default()).collect())
    }

    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let s = r.get(k).map(String::as_str).unwrap_or("");
                s.parse::<f64>()
                    .map_err(|_| input_error(format!("{} line {}: `{name}` is not a number: `{s}`", self.path, i + 2)))
            })
            .collect()
    }

    pub fn flags(&self, name: &str) -> Result<Vec<bool>> {
        let k = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r.get(k).map(|s| s.to_ascii_lowercase()).as_deref() {
                Some("1" | "true" | "yes" | "positive" | "pos") => Ok(true),
                Some("0" | "false" | "no" | "negative" | "neg") => Ok(false),
                other => Err(input_error(format!(
                    "{} line {}: `{name}` must be 0/1 or true/false, got `{}`",
                    self.path,
                    i + 2,
                    other.unwrap_or("")
                ))),
            })
            .collect()
    }
}

/// Parses `a,b,c,d` into a 2x2 table `[[a, b], [c, d]]`.
pub fn parse_2x2(text: &str) -> Result<[[f64; 2]; 2]> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!(Error::Input(format!("table must be four comma-separated counts, got `{text}`"))))?;
    if v.len() != 4 {
        bail!(Error::Input(format!("table must be four comma-separated counts, got {}", v.len())));
    }
    Ok([[v[0], v[1]], [v[2], v[3]]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_named_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "Score,label\n1.5,1\n0.5,false\n").unwrap();
        let t = Table::load(&p).unwrap();
        assert_eq!(t.numbers("score").unwrap(), vec![1.5, 0.5]);
        assert_eq!(t.flags("label").unwrap(), vec![true, false]);
        assert!(t.numbers("missing").is_err());
        assert!(t.flags("score").is_err());
    }

    #[test]
    fn two_by_two() {
        assert_eq!(parse_2x2("1, 2,3,4").unwrap(), [[1.0, 2.0], [3.0, 4.0]]);
        assert!(parse_2x2("1,2,3").is_err());
    }
}
