//! Parameter resolution, artifact staging and the run manifest.

use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use eigensafe::config::KeyValues;
use eigensafe::envs::{DoubleIntegrator, DoubleIntegratorParams, Dubins, DubinsParams};
use eigensafe::{Environment, Error};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    /// A check the command itself performs came out numerically bad.
    Numerical(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Lib(Error::Validation(msg.into()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(Error::NonConvergence { .. } | Error::NonFinite { .. }) | CliError::Numerical(_) => 4,
            CliError::Lib(_) => 3,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{}", e.to_string().replace('\n', " ")),
            CliError::Numerical(m) => write!(f, "numerical check failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Everything a command needs: the unconsumed config keys, the resolved
/// parameter record and the staged artifacts.
pub struct RunContext {
    kv: KeyValues,
    resolved: BTreeMap<String, String>,
    pub seed: u64,
    out: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    start: Instant,
}

impl RunContext {
    pub fn new(config: Option<&Path>, seed: Option<u64>, out: &Path) -> CliResult<Self> {
        let mut kv = match config {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", p.display())))?;
                KeyValues::parse(&text)?
            }
            None => KeyValues::default(),
        };
        let from_file: Option<u64> = kv.take("seed")?;
        let seed = seed.or(from_file).unwrap_or(0);
        if out.exists() && !out.is_dir() {
            return Err(CliError::validation(format!("output path {} is not a directory", out.display())));
        }
        Ok(Self {
            kv,
            resolved: BTreeMap::new(),
            seed,
            out: out.to_path_buf(),
            files: Vec::new(),
            start: Instant::now(),
        })
    }

    /// Command-line value, else config value, else `default`.
    pub fn get<T: FromStr + Display>(&mut self, key: &str, cli: Option<T>, default: T) -> CliResult<T> {
        let from_file: Option<T> = self.kv.take(key)?;
        let v = cli.or(from_file).unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn require<T: FromStr + Display>(&mut self, key: &str, cli: Option<T>) -> CliResult<T> {
        let from_file: Option<T> = self.kv.take(key)?;
        let v = cli
            .or(from_file)
            .ok_or_else(|| CliError::validation(format!("missing `{key}` (flag --{} or config key)", key.replace('_', "-"))))?;
        self.record(key, &v);
        Ok(v)
    }

    /// A required input path that must already exist.
    pub fn input_path(&mut self, key: &str, cli: Option<PathBuf>) -> CliResult<PathBuf> {
        let from_file: Option<String> = self.kv.take(key)?;
        let p = cli
            .or(from_file.map(PathBuf::from))
            .ok_or_else(|| CliError::validation(format!("missing `{key}` (flag --{} or config key)", key.replace('_', "-"))))?;
        if !p.exists() {
            return Err(CliError::validation(format!("{key} path {} does not exist", p.display())));
        }
        self.record(key, p.display());
        Ok(p)
    }

    pub fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    /// Remaining config keys after the command took its own.
    pub fn config_mut(&mut self) -> &mut KeyValues {
        &mut self.kv
    }

    /// Builds an environment, reading its parameter overrides.
    pub fn env(&mut self, cli: Option<String>) -> CliResult<Box<dyn Environment>> {
        let id: String = self.require("env", cli)?;
        match id.as_str() {
            "dint" => {
                let d = DoubleIntegratorParams::default();
                let p = DoubleIntegratorParams {
                    sigma: self.get("sigma", None, d.sigma)?,
                    dt: self.get("dt", None, d.dt)?,
                    ..d
                };
                Ok(Box::new(DoubleIntegrator::new(p)?))
            }
            "dubins" => {
                let d = DubinsParams::default();
                let p = DubinsParams {
                    noise_std: self.get("noise_std", None, d.noise_std)?,
                    dt: self.get("dt", None, d.dt)?,
                    ..d
                };
                Ok(Box::new(Dubins::new(p)?))
            }
            other => Err(CliError::validation(format!("unknown environment `{other}` (expected dint or dubins)"))),
        }
    }

    /// Rejects leftover config keys and prepares the output directory.
    /// Commands call this once all parameters are resolved and before any
    /// expensive work.
    pub fn seal(&mut self) -> CliResult<()> {
        std::mem::take(&mut self.kv).finish()?;
        self.record("seed", self.seed);
        fs::create_dir_all(&self.out)?;
        Ok(())
    }

    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    /// Writes every artifact into a staging directory inside the output
    /// directory, moves them into place and writes the manifest last.
    pub fn commit(&mut self, command: &str) -> CliResult<()> {
        let stage = tempfile::Builder::new().prefix(".stage-").tempdir_in(&self.out)?;
        let mut files = std::mem::take(&mut self.files);
        files.sort_by(|a, b| a.0.cmp(&b.0));
        let mut manifest = format!("command = {command}\nseed = {}\n", self.seed);
        for (k, v) in &self.resolved {
            manifest.push_str(&format!("config.{k} = {v}\n"));
        }
        for (name, bytes) in &files {
            manifest.push_str(&format!("sha256.{name} = {}\n", hex::encode(Sha256::digest(bytes))));
            fs::write(stage.path().join(name), bytes)?;
        }
        manifest.push_str(&format!("duration_secs = {:.3}\n", self.start.elapsed().as_secs_f64()));
        fs::write(stage.path().join(MANIFEST), manifest)?;
        for (name, _) in &files {
            fs::rename(stage.path().join(name), self.out.join(name))?;
        }
        fs::rename(stage.path().join(MANIFEST), self.out.join(MANIFEST))?;
        Ok(())
    }
}
