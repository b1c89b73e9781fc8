//! Config file plus flag overrides. Flags of command `c` are the keys `c.<flag>`,
//! so a written snapshot can be fed back through `--config` to replay a run.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use sentiaug::config::KeyValues;

pub struct Settings {
    pub kv: KeyValues,
    pub seed: u64,
    pub out: PathBuf,
    command: String,
    tag: Option<String>,
}

impl Settings {
    pub fn load(config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let mut kv = match config {
            Some(p) => KeyValues::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => KeyValues::default(),
        };
        if let Some(s) = seed {
            kv.set("seed", s);
        }
        let seed = kv.parse_or("seed", 1u64)?;
        kv.set("seed", seed);
        let out = match out {
            Some(o) => o,
            None => PathBuf::from(kv.get("out").unwrap_or("out")),
        };
        kv.set("out", out.display());
        Ok(Settings {
            kv,
            seed,
            out,
            command: String::new(),
            tag: None,
        })
    }

    pub fn command(&mut self, name: &str) {
        self.command = name.to_string();
    }

    /// Distinguishes snapshots of repeated runs of one command.
    pub fn tag(&mut self, tag: &str) {
        self.tag = Some(tag.to_string());
    }

    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.command)
    }

    /// Records a flag value, overriding the config file.
    pub fn flag<T: Display>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            let k = self.key(key);
            self.kv.set(&k, v);
        }
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.kv.get(&self.key(key)).map(str::to_string)
    }

    pub fn require(&self, key: &str) -> Result<String> {
        self.get(key).ok_or_else(|| {
            anyhow!(
                "missing --{} (or `{}` in the config file)",
                key.replace('_', "-"),
                self.key(key)
            )
        })
    }

    pub fn parse_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.kv.parse_or(&self.key(key), default)?)
    }

    /// Resolves `default` for `key` and records the value used.
    pub fn resolve<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.parse_or(key, default)?;
        let k = self.key(key);
        self.kv.set(&k, &v);
        Ok(v)
    }

    pub fn labels(&mut self) -> Result<Vec<String>> {
        let raw = self.resolve("labels", "pos,neg".to_string())?;
        Ok(raw.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    /// Section `name` with `seed` defaulting to the global seed.
    pub fn seeded(&self, name: &str) -> KeyValues {
        let mut s = KeyValues::default();
        s.set("seed", self.seed);
        s.merge(&self.kv.section(name));
        s
    }

    /// Stores the resolved component config under `name.`.
    pub fn record(&mut self, name: &str, resolved: &KeyValues) {
        self.kv.merge(&resolved.prefixed(name));
    }

    pub fn out_path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Writes `<out>/<command>[.<tag>].config.resolved`.
    pub fn snapshot(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let name = match &self.tag {
            Some(t) => format!("{}.{t}", self.command),
            None => self.command.clone(),
        };
        let path = self.out.join(format!("{name}.config.resolved"));
        std::fs::write(&path, self.kv.render()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
