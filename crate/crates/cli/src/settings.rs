//! Run configuration: `key = value` files merged with command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// A problem with the arguments or the configuration file (exit code 2).
#[derive(Debug)]
pub struct ArgError(pub String);

impl fmt::Display for ArgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ArgError {}

pub fn arg_error(msg: impl Into<String>) -> anyhow::Error {
    ArgError(msg.into()).into()
}

/// Every key a configuration file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "gamma",
    "gammas",
    "sigma",
    "beta",
    "seed",
    "steps",
    "v0",
    "grid_n",
    "v_max",
    "rule",
    "eigenvalues",
    "samples",
    "samples_per_node",
    "checkpoints",
    "init_lo",
    "init_hi",
    "z",
    "m1",
    "m2",
    "k",
    "l",
    "cell",
    "cell_file",
    "segments",
    "bins",
    "theta",
    "potential",
    "sampler",
    "dim",
];

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped,
/// unknown or repeated keys are errors.
pub fn parse_config(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| arg_error(format!("config line {}: expected `key = value`, got `{raw}`", number + 1)))?;
        let key = normalize(key);
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(arg_error(format!("config line {}: unknown key `{key}`", number + 1)));
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(arg_error(format!("config line {}: key `{key}` has no value", number + 1)));
        }
        if map.insert(key.clone(), value.to_string()).is_some() {
            return Err(arg_error(format!("config line {}: key `{key}` set twice", number + 1)));
        }
    }
    Ok(map)
}

pub fn load_config(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| arg_error(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Values resolved from flags, then the config file, then built-in defaults.
/// Every lookup is recorded so the output header can state the full setup.
pub struct Settings {
    file: BTreeMap<String, String>,
    flags: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn new(file: BTreeMap<String, String>, flags: BTreeMap<String, String>) -> Self {
        Self {
            file,
            flags,
            resolved: BTreeMap::new(),
        }
    }

    fn raw(&self, key: &str) -> Option<&String> {
        self.flags.get(key).or_else(|| self.file.get(key))
    }

    fn parse<T: FromStr>(key: &str, text: &str) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        text.parse::<T>()
            .map_err(|e| arg_error(format!("invalid value `{text}` for `{key}`: {e}")))
    }

    /// Looks up `key`, falling back to `default`.
    pub fn get<T: FromStr>(&mut self, key: &str, default: &str) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        let text = self.raw(key).cloned().unwrap_or_else(|| default.to_string());
        let value = Self::parse(key, &text)?;
        self.resolved.insert(key.to_string(), text);
        Ok(value)
    }

    /// Looks up a key that has no default.
    pub fn get_opt<T: FromStr>(&mut self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key).cloned() {
            Some(text) => {
                let value = Self::parse(key, &text)?;
                self.resolved.insert(key.to_string(), text);
                Ok(Some(value))
            }
            None => Ok(None),
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&mut self, key: &str, default: &str) -> anyhow::Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let text = self.raw(key).cloned().unwrap_or_else(|| default.to_string());
        let values = text
            .split(',')
            .map(|item| Self::parse(key, item.trim()))
            .collect::<anyhow::Result<Vec<T>>>()?;
        if values.is_empty() {
            return Err(arg_error(format!("`{key}` needs at least one value")));
        }
        self.resolved.insert(key.to_string(), text);
        Ok(values)
    }

    /// `key=value` pairs of everything looked up so far, sorted by key.
    pub fn describe(&self) -> String {
        self.resolved
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_hyphens() {
        let map = parse_config("# header\ngamma = 0.2  # ratio\n\ngrid-n=50\n").unwrap();
        assert_eq!(map["gamma"], "0.2");
        assert_eq!(map["grid_n"], "50");
    }

    #[test]
    fn unknown_and_repeated_keys_are_rejected() {
        assert!(parse_config("colour = red").is_err());
        assert!(parse_config("gamma = 0.1\ngamma = 0.2").is_err());
        assert!(parse_config("gamma 0.1").is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let file = parse_config("gamma = 0.2\nsigma = 2").unwrap();
        let flags = BTreeMap::from([("gamma".to_string(), "0.3".to_string())]);
        let mut s = Settings::new(file, flags);
        assert_eq!(s.get::<f64>("gamma", "0.1").unwrap(), 0.3);
        assert_eq!(s.get::<f64>("sigma", "1").unwrap(), 2.0);
        assert_eq!(s.get::<usize>("steps", "10").unwrap(), 10);
        assert_eq!(s.describe(), "gamma=0.3 sigma=2 steps=10");
        assert!(s.get::<f64>("v0", "fast").is_err());
    }
}
