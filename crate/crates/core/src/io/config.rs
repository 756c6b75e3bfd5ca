//! Sectioned `key = value` configuration text.
//!
//! ```text
//! # comment
//! [heat]
//! conductivity = 0.51e-3 W/(mm*K)
//! robin.right = 2e-5 W/(mm^2*K)
//!
//! [output]
//! probe.centre = 0 mm, 0.5 mm
//! ```
//!
//! Every value is kept as text together with its line number. Typed access
//! goes through [`Section`] readers, which record the keys they consume so
//! that anything left over can be reported as unknown.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::units::{parse_as, Dim};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but untyped configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    path: PathBuf,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    used: RefCell<BTreeSet<(String, String)>>,
}

impl RawConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        let syntax = |line: usize, message: String| Error::Syntax {
            path: path.to_path_buf(),
            line,
            message,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(line, format!("unterminated section header '{content}'")))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(syntax(line, format!("invalid section name '{name}'")));
                }
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| syntax(line, format!("expected 'key = value', found '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(syntax(line, format!("invalid key '{key}'")));
            }
            if value.is_empty() {
                return Err(syntax(line, format!("missing value for '{key}'")));
            }
            let section = current
                .as_ref()
                .ok_or_else(|| syntax(line, format!("key '{key}' appears before any [section]")))?;
            let map = sections.get_mut(section).expect("section inserted at header");
            if let Some(prev) = map.get(key) {
                return Err(syntax(line, format!("duplicate key '{key}' (first set on line {})", prev.line)));
            }
            map.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(RawConfig {
            path: path.to_path_buf(),
            sections,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Directory against which relative file references resolve.
    pub fn base_dir(&self) -> PathBuf {
        self.path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn section(&self, name: &str) -> Section<'_> {
        Section { raw: self, name: name.to_string() }
    }

    /// Override (or add) `section.key`; used by sweeps.
    pub fn set(&mut self, path: &str, value: &str) -> Result<()> {
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| Error::config(format!("parameter path '{path}' must look like section.key")))?;
        let map = self
            .sections
            .get_mut(section)
            .ok_or_else(|| Error::config(format!("unknown parameter path '{path}': no [{section}] section")))?;
        let line = map.get(key).map_or(0, |e| e.line);
        map.insert(key.to_string(), Entry { value: value.trim().to_string(), line });
        Ok(())
    }

    pub fn get_raw(&self, path: &str) -> Option<&str> {
        let (section, key) = path.split_once('.')?;
        self.sections.get(section)?.get(key).map(|e| e.value.as_str())
    }

    /// Fail on any key or section that no reader consumed.
    pub fn reject_unused(&self, known_sections: &[&str]) -> Result<()> {
        for name in self.sections.keys() {
            if !known_sections.contains(&name.as_str()) {
                return Err(Error::config(format!("{}: unknown section [{name}]", self.path.display())));
            }
        }
        for section in self.sections.keys() {
            self.reject_unused_in(section)?;
        }
        Ok(())
    }

    /// Fail on any key of one section that no reader consumed.
    pub fn reject_unused_in(&self, section: &str) -> Result<()> {
        let used = self.used.borrow();
        if let Some(map) = self.sections.get(section) {
            for (key, entry) in map {
                if !used.contains(&(section.to_string(), key.clone())) {
                    return Err(Error::Syntax {
                        path: self.path.clone(),
                        line: entry.line,
                        message: format!("unknown key '{key}' in [{section}]"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Render back to text with keys in sorted order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (section, map) in &self.sections {
            out.push_str(&format!("[{section}]\n"));
            for (k, e) in map {
                out.push_str(&format!("{k} = {}\n", e.value));
            }
            out.push('\n');
        }
        out
    }
}

/// Typed reader for one section.
pub struct Section<'a> {
    raw: &'a RawConfig,
    name: String,
}

impl Section<'_> {
    fn entry(&self, key: &str) -> Option<&Entry> {
        let e = self.raw.sections.get(&self.name)?.get(key)?;
        self.raw.used.borrow_mut().insert((self.name.clone(), key.to_string()));
        Some(e)
    }

    fn error(&self, key: &str, e: &Entry, msg: impl std::fmt::Display) -> Error {
        Error::Syntax {
            path: self.raw.path.clone(),
            line: e.line,
            message: format!("[{}] {key}: {msg}", self.name),
        }
    }

    fn missing(&self, key: &str) -> Error {
        Error::config(format!("{}: missing required key '{key}' in [{}]", self.raw.path.display(), self.name))
    }

    /// Keys in this section starting with `prefix.`, with the prefix removed.
    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        let p = format!("{prefix}.");
        self.raw
            .sections
            .get(&self.name)
            .map(|m| m.keys().filter_map(|k| k.strip_prefix(&p).map(str::to_string)).collect())
            .unwrap_or_default()
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.entry(key).map(|e| e.value.clone())
    }

    pub fn string_or(&self, key: &str, default: &str) -> String {
        self.string(key).unwrap_or_else(|| default.to_string())
    }

    /// Quantity in SI; bare numbers are taken as SI already.
    pub fn quantity(&self, key: &str, dim: Dim) -> Result<Option<f64>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        quantity_text(&e.value, dim).map(Some).map_err(|m| self.error(key, e, m))
    }

    pub fn quantity_or(&self, key: &str, dim: Dim, default: f64) -> Result<f64> {
        Ok(self.quantity(key, dim)?.unwrap_or(default))
    }

    pub fn require_quantity(&self, key: &str, dim: Dim) -> Result<f64> {
        self.quantity(key, dim)?.ok_or_else(|| self.missing(key))
    }

    /// Comma-separated list of quantities.
    pub fn quantities(&self, key: &str, dim: Dim) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|p| quantity_text(p, dim).map_err(|m| self.error(key, e, m)))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn pair(&self, key: &str, dim: Dim) -> Result<Option<[f64; 2]>> {
        match self.quantities(key, dim)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some([v[0], v[1]])),
            Some(_) => {
                let e = self.entry(key).expect("entry read above");
                Err(self.error(key, e, "expected two comma-separated values"))
            }
        }
    }

    pub fn integer(&self, key: &str) -> Result<Option<u64>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        e.value
            .parse::<u64>()
            .map(Some)
            .map_err(|_| self.error(key, e, format!("expected a non-negative integer, found '{}'", e.value)))
    }

    pub fn integer_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.integer(key)?.unwrap_or(default))
    }

    pub fn boolean_or(&self, key: &str, default: bool) -> Result<bool> {
        let Some(e) = self.entry(key) else { return Ok(default) };
        match e.value.as_str() {
            "true" | "yes" | "on" => Ok(true),
            "false" | "no" | "off" => Ok(false),
            other => Err(self.error(key, e, format!("expected true or false, found '{other}'"))),
        }
    }

    /// One of `choices`, or `default` when absent.
    pub fn choice(&self, key: &str, choices: &[&str], default: &str) -> Result<String> {
        let Some(e) = self.entry(key) else { return Ok(default.to_string()) };
        if choices.contains(&e.value.as_str()) {
            Ok(e.value.clone())
        } else {
            Err(self.error(key, e, format!("'{}' is not one of {}", e.value, choices.join(", "))))
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.string(key).map(|s| {
            let p = PathBuf::from(s);
            if p.is_absolute() {
                p
            } else {
                self.raw.base_dir().join(p)
            }
        })
    }
}

fn quantity_text(text: &str, dim: Dim) -> std::result::Result<f64, String> {
    let t = text.trim();
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    parse_as(t, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RawConfig> {
        RawConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn reads_typed_values() {
        let c = parse(
            "# header\n[protocol]\nsar = 2.0 MW/kg\nheating = 20 min, 60 min  # trailing\n[mesh]\nnx = 12\n",
        )
        .unwrap();
        let p = c.section("protocol");
        assert_eq!(p.require_quantity("sar", Dim::SPECIFIC_POWER).unwrap(), 2.0e6);
        assert_eq!(p.pair("heating", Dim::TIME).unwrap(), Some([1200.0, 3600.0]));
        assert_eq!(c.section("mesh").integer("nx").unwrap(), Some(12));
        c.reject_unused(&["protocol", "mesh"]).unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let c = parse("[heat]\nperfussion = 0.018 1/s\n").unwrap();
        let _ = c.section("heat").quantity("perfusion", Dim::RATE).unwrap();
        let err = c.reject_unused(&["heat"]).unwrap_err().to_string();
        assert!(err.contains("perfussion"), "{err}");
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse("[a]\nx = 1\ny\n").unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        assert!(parse("x = 1\n").is_err());
        assert!(parse("[a]\nx = 1\nx = 2\n").is_err());
        assert!(parse("[a\n").is_err());
    }

    #[test]
    fn unit_mismatch_rejected() {
        let c = parse("[heat]\nperfusion = 3 mm\n").unwrap();
        let err = c.section("heat").quantity("perfusion", Dim::RATE).unwrap_err().to_string();
        assert!(err.contains("unit mismatch"), "{err}");
    }

    #[test]
    fn overrides_and_unknown_sections() {
        let mut c = parse("[heat]\nperfusion = 0 1/s\n").unwrap();
        c.set("heat.perfusion", "0.036 1/s").unwrap();
        assert_eq!(c.section("heat").quantity("perfusion", Dim::RATE).unwrap(), Some(0.036));
        assert!(c.set("nosuch.key", "1").is_err());
        assert!(c.reject_unused(&[]).is_err());
    }
}
