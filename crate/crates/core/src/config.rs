//! Flat `section.key = value` configuration files.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::report::fmt17;

/// Parsed key/value pairs with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (String, usize)>,
}

impl FromStr for Config {
    type Err = Error;

    /// Blank lines and `#` comments are skipped; duplicate keys are errors.
    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value", i + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: bad key {k:?}", i + 1)));
            }
            if !k.contains('.') {
                return Err(Error::Config(format!("line {}: key {k:?} lacks a section prefix", i + 1)));
            }
            if entries.insert(k.to_string(), (v.to_string(), i + 1)).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(Self { entries })
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Typed access that records every resolved value, defaults included, and
/// rejects keys nobody asked for.
pub struct Resolver<'a> {
    cfg: &'a Config,
    used: RefCell<BTreeSet<String>>,
    resolved: RefCell<Vec<(String, String)>>,
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => v
            .parse::<f64>()
            .ok()
            .filter(|x| !x.is_nan())
            .ok_or_else(|| Error::Config(format!("{key}: expected a number, got {v:?}"))),
    }
}

impl<'a> Resolver<'a> {
    pub fn new(cfg: &'a Config) -> Self {
        Self {
            cfg,
            used: RefCell::new(BTreeSet::new()),
            resolved: RefCell::new(Vec::new()),
        }
    }

    fn take(&self, key: &str) -> Option<String> {
        self.used.borrow_mut().insert(key.to_string());
        self.cfg.raw(key).map(str::to_string)
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().push((key.to_string(), value));
    }

    pub fn string(&self, key: &str, default: Option<&str>) -> Result<String> {
        let v = match (self.take(key), default) {
            (Some(v), _) => v,
            (None, Some(d)) => d.to_string(),
            (None, None) => return Err(Error::Config(format!("missing key {key}"))),
        };
        self.record(key, v.clone());
        Ok(v)
    }

    pub fn f64(&self, key: &str, default: Option<f64>) -> Result<f64> {
        let v = match (self.take(key), default) {
            (Some(v), _) => parse_f64(key, &v)?,
            (None, Some(d)) => d,
            (None, None) => return Err(Error::Config(format!("missing key {key}"))),
        };
        self.record(key, fmt17(v));
        Ok(v)
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            Some(v) => {
                let x = parse_f64(key, &v)?;
                self.record(key, fmt17(x));
                Ok(Some(x))
            }
            None => Ok(None),
        }
    }

    pub fn usize(&self, key: &str, default: Option<usize>) -> Result<usize> {
        let v = match (self.take(key), default) {
            (Some(v), _) => v
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {v:?}")))?,
            (None, Some(d)) => d,
            (None, None) => return Err(Error::Config(format!("missing key {key}"))),
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        if self.cfg.raw(key).is_none() {
            self.used.borrow_mut().insert(key.to_string());
            return Ok(None);
        }
        self.usize(key, None).map(Some)
    }

    pub fn bool(&self, key: &str, default: Option<bool>) -> Result<bool> {
        let v = match (self.take(key), default) {
            (Some(v), _) => match v.as_str() {
                "true" | "yes" | "1" => true,
                "false" | "no" | "0" => false,
                _ => return Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
            },
            (None, Some(d)) => d,
            (None, None) => return Err(Error::Config(format!("missing key {key}"))),
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Comma-separated numbers.
    pub fn f64_list(&self, key: &str, default: Option<&[f64]>) -> Result<Vec<f64>> {
        let v: Vec<f64> = match (self.take(key), default) {
            (Some(v), _) => v
                .split(',')
                .map(|x| parse_f64(key, x.trim()))
                .collect::<Result<_>>()?,
            (None, Some(d)) => d.to_vec(),
            (None, None) => return Err(Error::Config(format!("missing key {key}"))),
        };
        if v.is_empty() {
            return Err(Error::Config(format!("{key}: empty list")));
        }
        self.record(key, v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(","));
        Ok(v)
    }

    /// Comma-separated words.
    pub fn str_list(&self, key: &str, default: &str) -> Result<Vec<String>> {
        let v = self.string(key, Some(default))?;
        let items: Vec<String> = v.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
        if items.is_empty() {
            return Err(Error::Config(format!("{key}: empty list")));
        }
        Ok(items)
    }

    /// Resolved pairs in request order; fails on unrequested keys.
    pub fn finish(self) -> Result<Vec<(String, String)>> {
        let used = self.used.into_inner();
        if let Some(k) = self.cfg.keys().find(|k| !used.contains(*k)) {
            return Err(Error::Config(format!("unknown key {k}")));
        }
        Ok(self.resolved.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg: Config = "# comment\n\ngrid.dim = 2\n grid.half_width=64 \n".parse().unwrap();
        assert_eq!(cfg.raw("grid.dim"), Some("2"));
        assert_eq!(cfg.raw("grid.half_width"), Some("64"));
    }

    #[test]
    fn rejects_malformed() {
        assert!("grid.dim 2".parse::<Config>().is_err());
        assert!("dim = 2".parse::<Config>().is_err());
        assert!("a.b = 1\na.b = 2".parse::<Config>().is_err());
    }

    #[test]
    fn resolver_records_defaults_and_rejects_unknown() {
        let cfg: Config = "a.x = 3\na.list = 1, 2,inf".parse().unwrap();
        let r = Resolver::new(&cfg);
        assert_eq!(r.usize("a.x", None).unwrap(), 3);
        assert_eq!(r.f64("a.y", Some(0.5)).unwrap(), 0.5);
        assert_eq!(r.f64_list("a.list", None).unwrap(), vec![1.0, 2.0, f64::INFINITY]);
        let res = r.finish().unwrap();
        assert_eq!(res[1], ("a.y".to_string(), "5.0000000000000000e-1".to_string()));

        let cfg: Config = "a.x = 3\na.typo = 1".parse().unwrap();
        let r = Resolver::new(&cfg);
        r.usize("a.x", None).unwrap();
        assert!(matches!(r.finish(), Err(Error::Config(_))));
    }

    #[test]
    fn bad_values() {
        let cfg: Config = "a.x = three\na.b = maybe".parse().unwrap();
        let r = Resolver::new(&cfg);
        assert!(r.f64("a.x", None).is_err());
        assert!(r.bool("a.b", None).is_err());
        assert!(r.f64("a.missing", None).is_err());
    }
}
