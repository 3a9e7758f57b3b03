//! Configuration sampling, noisy labeling, and the dataset text format.
//!
//! A dataset file is a comment header followed by a CSV table:
//!
//! ```text
//! # dtc-dataset v1
//! # dof=2
//! # n=3
//! # eta=0.05
//! # seed=7
//! # noise_free=false
//! # env_hash=<64 hex digits>
//! theta1,theta2,label
//! 0.125,-1.5,0.731
//! ...
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is lossless.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{noisy_distance, Environment};
use crate::kinematics::RobotModel;

pub const FORMAT_TAG: &str = "dtc-dataset v1";
pub const DEFAULT_TRAIN_SIZE: usize = 500;
pub const DEFAULT_TEST_SIZE: usize = 2000;
pub const DEFAULT_ETA: f64 = 0.05;

/// Stream index reserved for configuration sampling; row `i` labels use stream `i`.
const SAMPLING_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub env_hash: String,
    pub eta: f64,
    pub seed: u64,
    pub noise_free: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub meta: DatasetMeta,
}

/// Independent uniform samples of every joint over its limits.
pub fn sample_configs<R: Rng + ?Sized>(robot: &RobotModel, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    Ok((0..n).map(|_| robot.joint_limits().iter().map(|[lo, hi]| rng.random_range(*lo..=*hi)).collect()).collect())
}

/// Label stream for row `row`: independent of how rows are split across workers.
pub fn row_stream(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn sampling_stream(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLING_STREAM);
    rng
}

/// Labels every row with `noisy_distance` drawn from its own row stream.
pub fn label_dataset(x: &[Vec<f64>], env: &Environment, eta: f64, seed: u64) -> Result<Dataset> {
    label_dataset_with_jobs(x, env, eta, seed, 1)
}

/// As [`label_dataset`], splitting rows over `jobs` threads; output does not depend on `jobs`.
pub fn label_dataset_with_jobs(x: &[Vec<f64>], env: &Environment, eta: f64, seed: u64, jobs: usize) -> Result<Dataset> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta} must be nonnegative")));
    }
    let label = |offset: usize, rows: &[Vec<f64>]| -> Result<Vec<f64>> {
        rows.iter()
            .enumerate()
            .map(|(i, xi)| noisy_distance(env, xi, eta, &mut row_stream(seed, offset + i)))
            .collect()
    };
    let jobs = jobs.max(1).min(x.len().max(1));
    let y = if jobs == 1 {
        label(0, x)?
    } else {
        let chunk = x.len().div_ceil(jobs);
        let parts: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
            let handles: Vec<_> = x
                .chunks(chunk)
                .enumerate()
                .map(|(k, rows)| s.spawn(move || label(k * chunk, rows)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("labeling worker panicked")).collect()
        });
        let mut y = Vec::with_capacity(x.len());
        for p in parts {
            y.extend(p?);
        }
        y
    };
    Ok(Dataset {
        x: x.to_vec(),
        y,
        meta: DatasetMeta { env_hash: env.content_hash(), eta, seed, noise_free: eta == 0.0 },
    })
}

/// Samples `n` configurations and labels them; a pure function of its arguments.
pub fn generate_dataset(env: &Environment, n: usize, eta: f64, seed: u64) -> Result<Dataset> {
    generate_dataset_with_jobs(env, n, eta, seed, 1)
}

pub fn generate_dataset_with_jobs(env: &Environment, n: usize, eta: f64, seed: u64, jobs: usize) -> Result<Dataset> {
    let x = sample_configs(&env.robot, n, &mut sampling_stream(seed))?;
    label_dataset_with_jobs(&x, env, eta, seed, jobs)
}

/// Noise-free evaluation set, as used for all accuracy metrics.
pub fn generate_test_set(env: &Environment, n: usize, seed: u64) -> Result<Dataset> {
    generate_dataset(env, n, 0.0, seed)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// A warning message when the dataset was labeled against a different environment.
    pub fn check_environment(&self, env: &Environment) -> Option<String> {
        let hash = env.content_hash();
        (hash != self.meta.env_hash).then(|| {
            format!("dataset was labeled against environment {} but {} was supplied", self.meta.env_hash, hash)
        })
    }

    pub fn to_text(&self) -> String {
        let dof = self.dof();
        let mut s = String::new();
        let m = &self.meta;
        let _ = writeln!(s, "# {FORMAT_TAG}");
        let _ = writeln!(s, "# dof={dof}");
        let _ = writeln!(s, "# n={}", self.len());
        let _ = writeln!(s, "# eta={}", m.eta);
        let _ = writeln!(s, "# seed={}", m.seed);
        let _ = writeln!(s, "# noise_free={}", m.noise_free);
        let _ = writeln!(s, "# env_hash={}", m.env_hash);
        let header: Vec<String> = (1..=dof).map(|i| format!("theta{i}")).chain(["label".to_string()]).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for (x, y) in self.x.iter().zip(&self.y) {
            for v in x {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{y}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::from_text(&std::fs::read_to_string(path)?)
    }

    /// Loads and logs a warning if `env` differs from the labeling environment.
    pub fn load_for(path: impl AsRef<Path>, env: &Environment) -> Result<Self> {
        let ds = Dataset::load(path)?;
        if let Some(w) = ds.check_environment(env) {
            log::warn!("{w}");
        }
        Ok(ds)
    }
}

struct Parser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last_line: usize,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { lines: text.lines().enumerate().peekable(), last_line: 0 }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((i, l)) => {
                self.last_line = i + 1;
                Ok((i + 1, l.trim_end_matches('\r')))
            }
            None => Err(parse_err(self.last_line + 1, format!("unexpected end of file, expected {what}"))),
        }
    }

    fn header_value(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (no, line) = self.next_line(&format!("`# {key}=`"))?;
        let value = line
            .strip_prefix("# ")
            .and_then(|r| r.strip_prefix(key))
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| parse_err(no, format!("expected `# {key}=...`, found `{line}`")))?;
        Ok((no, value))
    }

    fn header_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (no, v) = self.header_value(key)?;
        v.parse().map_err(|_| parse_err(no, format!("invalid {key} `{v}`")))
    }

    fn parse(mut self) -> Result<Dataset> {
        let (no, tag) = self.next_line("format tag")?;
        if tag != format!("# {FORMAT_TAG}") {
            return Err(parse_err(no, format!("expected `# {FORMAT_TAG}`")));
        }
        let dof: usize = self.header_parsed("dof")?;
        let n: usize = self.header_parsed("n")?;
        let eta: f64 = self.header_parsed("eta")?;
        let seed: u64 = self.header_parsed("seed")?;
        let noise_free: bool = self.header_parsed("noise_free")?;
        let (_, env_hash) = self.header_value("env_hash")?;
        let env_hash = env_hash.to_string();

        let (no, header) = self.next_line("column header")?;
        let expected: Vec<String> = (1..=dof).map(|i| format!("theta{i}")).chain(["label".to_string()]).collect();
        if header.split(',').map(str::trim).ne(expected.iter().map(String::as_str)) {
            return Err(parse_err(no, format!("column header must be `{}`", expected.join(","))));
        }

        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let (no, line) = self.next_line(&format!("{n} data rows"))?;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dof + 1 {
                return Err(parse_err(no, format!("expected {} fields, found {}", dof + 1, fields.len())));
            }
            let mut row = Vec::with_capacity(dof + 1);
            for f in fields {
                let v: f64 = f.parse().map_err(|_| parse_err(no, format!("invalid number `{f}`")))?;
                if !v.is_finite() {
                    return Err(parse_err(no, format!("non-finite value `{f}`")));
                }
                row.push(v);
            }
            y.push(row.pop().expect("row has a label"));
            x.push(row);
        }
        while let Some((i, line)) = self.lines.next() {
            if !line.trim().is_empty() {
                return Err(parse_err(i + 1, format!("header declares n={n} but more rows follow")));
            }
        }
        Ok(Dataset { x, y, meta: DatasetMeta { env_hash, eta, seed, noise_free } })
    }
}
