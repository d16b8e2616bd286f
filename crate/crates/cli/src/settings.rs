//! Flag / config-file resolution.
//!
//! A config file is TOML with one table per subcommand (`[learn]`,
//! `[recommend]`, ...). Keys are the long flag names; `max_size` and
//! `max-size` are the same key. A flag given on the command line wins over
//! the file, the file wins over the built-in default. Every resolved value
//! is recorded so it can be echoed into the outputs.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

pub struct Settings {
    table: toml::Table,
    used: BTreeSet<String>,
    echo: Vec<(String, String)>,
}

fn normalise(key: &str) -> String {
    key.replace('_', "-")
}

fn scalar(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        toml::Value::Array(a) => a
            .iter()
            .map(scalar)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.join(",")),
        _ => None,
    }
}

impl Settings {
    pub fn empty() -> Self {
        Settings {
            table: toml::Table::new(),
            used: BTreeSet::new(),
            echo: Vec::new(),
        }
    }

    /// Loads the `[section]` table of a config file, if one was given.
    pub fn load(path: Option<&Path>, section: &str) -> CliResult<Self> {
        let mut s = Settings::empty();
        let Some(path) = path else { return Ok(s) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        if let Some(t) = doc.remove(section) {
            let toml::Value::Table(t) = t else {
                return Err(CliError::Usage(format!(
                    "config {}: [{section}] is not a table",
                    path.display()
                )));
            };
            s.table = t.into_iter().map(|(k, v)| (normalise(&k), v)).collect();
        }
        s.echo.push(("config".into(), path.display().to_string()));
        Ok(s)
    }

    fn file_value(&mut self, key: &str) -> CliResult<Option<String>> {
        let Some(v) = self.table.get(key) else {
            return Ok(None);
        };
        self.used.insert(key.to_string());
        scalar(v)
            .map(Some)
            .ok_or_else(|| CliError::Usage(format!("config key {key}: unsupported value {v}")))
    }

    fn parse<T: FromStr>(key: &str, raw: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        raw.parse()
            .map_err(|e| CliError::Usage(format!("config key {key}: cannot parse {raw:?}: {e}")))
    }

    fn record(&mut self, key: &str, value: String) {
        self.echo.push((key.replace('-', "_"), value));
    }

    /// Flag, then config file, then `default`.
    pub fn get<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> CliResult<T>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => {
                self.used.insert(key.to_string());
                v
            }
            None => match self.file_value(key)? {
                Some(raw) => Self::parse(key, &raw)?,
                None => default,
            },
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Like [`Settings::get`] with no default.
    pub fn require<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required (flag or config file)")))
    }

    pub fn optional<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => {
                self.used.insert(key.to_string());
                Some(v)
            }
            None => match self.file_value(key)? {
                Some(raw) => Some(Self::parse(key, &raw)?),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.record(key, v.to_string());
        }
        Ok(v)
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        self.path_opt(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required (flag or config file)")))
    }

    pub fn path_opt(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
        let v = match flag {
            Some(p) => {
                self.used.insert(key.to_string());
                Some(p)
            }
            None => self.file_value(key)?.map(PathBuf::from),
        };
        if let Some(p) = &v {
            self.record(key, p.display().to_string());
        }
        Ok(v)
    }

    /// Boolean switch: set by the flag or by `key = true` in the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> CliResult<bool> {
        let v = if flag {
            true
        } else {
            match self.file_value(key)? {
                Some(raw) => Self::parse(key, &raw)?,
                None => false,
            }
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Comma-separated list.
    pub fn list<T: FromStr + Display + Clone>(
        &mut self,
        key: &str,
        flag: Option<String>,
        default: &[T],
    ) -> CliResult<Vec<T>>
    where
        T::Err: Display,
    {
        let raw = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        let v = match raw {
            Some(raw) if raw.trim().is_empty() => Vec::new(),
            Some(raw) => raw
                .split(',')
                .map(|x| Self::parse(key, x.trim()))
                .collect::<CliResult<Vec<T>>>()?,
            None => default.to_vec(),
        };
        let shown = v
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.record(key, shown);
        Ok(v)
    }

    /// Fails on config keys no flag asked for (typos would otherwise be ignored).
    pub fn finish(&self) -> CliResult<()> {
        let unknown: Vec<&String> = self
            .table
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("unknown config keys: {unknown:?}")))
        }
    }

    pub fn echo(&self) -> &[(String, String)] {
        &self.echo
    }

    /// `# key = value` lines.
    pub fn header(&self, command: &str) -> String {
        let mut out = format!("# hltf {command}\n");
        for (k, v) in &self.echo {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out
    }
}
