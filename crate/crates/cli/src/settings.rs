//! Resolution of `key=value` settings.
//!
//! A value comes from the first of: command-line flag, `KDQE_<KEY>`
//! environment variable, `--config` file, built-in default. Config files
//! may only contain known keys.

use std::path::Path;
use std::str::FromStr;

use kdqe::manifest::Manifest;
use kdqe::{Error, Result};

/// Known keys and their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("threads", "1"),
    ("has_header", "false"),
    ("batch_size", "32"),
    ("max_epochs", "50"),
    ("patience", "5"),
    ("learning_rate", "0.001"),
    ("validation_metric", "pearson"),
    ("embedding_dim", "300"),
    ("hidden_dim", "50"),
    ("attention_dim", "100"),
    ("max_len", "70"),
    ("vocab_size", "30000"),
    ("filter", "one-sided"),
    ("overwrite_labels", "false"),
    ("repeats", "3"),
    ("bins", "10"),
    ("min_chars", "50"),
    ("max_chars", "150"),
    ("top_docs", "100"),
    ("samples_per_param", "24"),
];

pub const ENV_PREFIX: &str = "KDQE_";

pub struct Settings {
    file: Manifest,
    resolved: Manifest,
}

fn default_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

impl Settings {
    pub fn load(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(path) => Manifest::parse(&std::fs::read_to_string(path)?)?,
            None => Manifest::new(),
        };
        for (k, _) in file.entries() {
            if default_of(k).is_none() {
                return Err(Error::Config(format!("unknown key {k:?} in config file")));
            }
        }
        Ok(Settings {
            file,
            resolved: Manifest::new(),
        })
    }

    /// Raw value of `key`, recorded in the resolved configuration.
    pub fn raw(&mut self, key: &str, flag: Option<&str>) -> String {
        let default = default_of(key).unwrap_or_else(|| panic!("setting {key} is not declared"));
        let env = std::env::var(format!("{ENV_PREFIX}{}", key.to_uppercase())).ok();
        let value = flag
            .map(str::to_string)
            .or(env)
            .or_else(|| self.file.get(key).map(str::to_string))
            .unwrap_or_else(|| default.to_string());
        self.resolved.set(key, &value);
        value
    }

    pub fn get<T: FromStr>(&mut self, key: &str, flag: Option<&str>) -> Result<T> {
        let raw = self.raw(key, flag);
        raw.trim()
            .parse()
            .map_err(|_| Error::Config(format!("invalid value {raw:?} for {key}")))
    }

    /// Resolved settings so far, in the order they were read.
    pub fn resolved(&self) -> &Manifest {
        &self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_env_file_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# c\npatience = 9\nbins=4\nrepeats=2\n").unwrap();
        // no other test in this binary reads these variables
        std::env::set_var("KDQE_BINS", "6");
        std::env::set_var("KDQE_REPEATS", "5");
        let mut s = Settings::load(Some(&path)).unwrap();
        assert_eq!(s.get::<usize>("patience", None).unwrap(), 9);
        assert_eq!(s.get::<usize>("bins", None).unwrap(), 6);
        assert_eq!(s.get::<usize>("repeats", Some("7")).unwrap(), 7);
        assert_eq!(s.get::<usize>("batch_size", None).unwrap(), 32);
        assert_eq!(s.resolved().to_string(), "patience=9\nbins=6\nrepeats=7\nbatch_size=32\n");
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "pateince=9\n").unwrap();
        assert_eq!(Settings::load(Some(&path)).err().unwrap().category(), "config");
        let mut s = Settings::load(None).unwrap();
        assert_eq!(s.get::<usize>("max_len", Some("x")).unwrap_err().category(), "config");
    }
}
