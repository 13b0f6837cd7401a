//! CSV and manifest helpers shared by the drivers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Writes a CSV file with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Run manifest: the resolved configuration as `key = value` lines, followed
/// by results and written files as `#` comments, so a manifest is itself a
/// valid configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
    pub results: Vec<(String, String)>,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn result(&mut self, key: impl Into<String>, value: impl ToString) {
        self.results.push((key.into(), value.to_string()));
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        for (k, v) in &self.results {
            s.push_str(&format!("# {k} = {v}\n"));
        }
        for p in &self.outputs {
            s.push_str(&format!("# output = {}\n", p.display()));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.render().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(-2.5), "-2.5000000000000000e0");
        let x = 1.0 / 3.0;
        assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        assert_eq!(fmt17(f64::INFINITY), "inf");
    }

    #[test]
    fn manifest_overwrites_keys() {
        let mut m = Manifest::default();
        m.set("a", 1);
        m.set("b", "x");
        m.set("a", 2);
        assert_eq!(m.get("a"), Some("2"));
        m.result("pass", true);
        m.output("t.csv");
        assert_eq!(m.render(), "a = 2\nb = x\n# pass = true\n# output = t.csv\n");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("t.csv");
        write_csv(&path, &["a", "b"], &[vec!["1".into(), fmt17(0.5)]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,5.0000000000000000e-1\n");
    }
}
