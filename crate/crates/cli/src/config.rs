//! Flat `key = value` experiment configuration.
//!
//! Schema (lists are comma separated, `#` starts a comment):
//!
//! | key        | type        | meaning                                        |
//! |------------|-------------|------------------------------------------------|
//! | `n`        | list usize  | cells per direction, one entry per refinement  |
//! | `r`        | list usize  | polynomial degrees                             |
//! | `eps`      | list f64    | diffusion coefficient(s)                       |
//! | `m`        | list f64    | hypocoercive weight(s) in `M`                  |
//! | `c_sigma`  | f64         | jump penalty constant                          |
//! | `alpha`    | list f64    | control cost weight(s)                         |
//! | `omega`    | f64         | Richardson damping                             |
//! | `kappa`    | f64         | upper control bound of the bounded variant     |
//! | `tol`      | f64         | Richardson stopping tolerance                  |
//! | `max_iter` | usize       | Richardson iteration cap                       |
//! | `t_end`    | f64         | final time `T`                                 |
//! | `steps`    | usize       | time steps `K`                                 |
//! | `targets`  | list        | `D1`, `D2`                                     |
//! | `x_max`    | f64         | half width of the position interval            |
//! | `diagonal` | `main`/`anti` | quad split: bottom-left to top-right or top-left to bottom-right |
//! | `seed`     | u64         | seed of the random witnesses                   |
//! | `out`      | path        | output directory                               |

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use hypokfem_core::Diagonal;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum ConfigError {
    UnknownExperiment(String),
    UnknownKey(String),
    Parse { key: String, value: String },
    Syntax(String),
    Invalid(String),
}

impl std::error::Error for ConfigError {}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownExperiment(s) => write!(f, "unknown experiment `{s}`"),
            Self::UnknownKey(s) => write!(f, "unknown config key `{s}`"),
            Self::Parse { key, value } => write!(f, "cannot parse `{value}` for key `{key}`"),
            Self::Syntax(l) => write!(f, "expected `key = value`, got `{l}`"),
            Self::Invalid(s) => write!(f, "invalid parameter: {s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    PrimalConvergence,
    OcConvergence,
    AlphaSweep,
    MSweep,
    BoxControl,
    Timedep,
    Decay,
    CheckAll,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Self::PrimalConvergence,
        Self::OcConvergence,
        Self::AlphaSweep,
        Self::MSweep,
        Self::BoxControl,
        Self::Timedep,
        Self::Decay,
        Self::CheckAll,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::PrimalConvergence => "primal-convergence",
            Self::OcConvergence => "oc-convergence",
            Self::AlphaSweep => "alpha-sweep",
            Self::MSweep => "m-sweep",
            Self::BoxControl => "box-control",
            Self::Timedep => "timedep",
            Self::Decay => "decay",
            Self::CheckAll => "check-all",
        }
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| ConfigError::UnknownExperiment(s.into()))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    D1,
    D2,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Self::D1 => "D1",
            Self::D2 => "D2",
        }
    }

    pub fn eval(&self) -> fn(f64, f64) -> (f64, [f64; 2]) {
        match self {
            Self::D1 => hypokfem_core::manufactured::target_d1,
            Self::D2 => hypokfem_core::manufactured::target_d2,
        }
    }
}

impl FromStr for Target {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "D1" | "d1" => Ok(Self::D1),
            "D2" | "d2" => Ok(Self::D2),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: Vec<usize>,
    pub r: Vec<usize>,
    pub eps: Vec<f64>,
    pub m: Vec<f64>,
    pub c_sigma: f64,
    pub alpha: Vec<f64>,
    pub omega: f64,
    pub kappa: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub t_end: f64,
    pub steps: usize,
    pub targets: Vec<Target>,
    pub x_max: f64,
    pub diagonal: Diagonal,
    pub seed: u64,
    pub out: PathBuf,
    pub expensive: bool,
}

impl ExperimentConfig {
    /// Defaults of one experiment; `expensive` adds the large meshes.
    pub fn defaults(experiment: Experiment, expensive: bool) -> Self {
        let mut c = Self {
            experiment,
            n: vec![16],
            r: vec![2],
            eps: vec![0.1],
            m: vec![0.35],
            c_sigma: 10.0,
            alpha: vec![1.0],
            omega: 1e-3,
            kappa: 1.0,
            tol: 1e-10,
            max_iter: 1_000_000,
            t_end: 1.0,
            steps: 32,
            targets: vec![Target::D2],
            x_max: 1.0,
            diagonal: Diagonal::Main,
            seed: 1,
            out: PathBuf::from("out").join(experiment.name()),
            expensive,
        };
        let big = if expensive { 90 } else { 32 };
        match experiment {
            Experiment::PrimalConvergence | Experiment::OcConvergence => {
                c.n = vec![4, 8, 16, 32];
                if expensive {
                    c.n.push(64);
                }
                c.r = vec![2, 3, 4];
            }
            Experiment::AlphaSweep => {
                c.n = vec![big];
                c.alpha = vec![1e-1, 1e-2, 1e-3, 1e-4];
                c.eps = vec![1e-1, 1e-4];
                c.targets = vec![Target::D1, Target::D2];
            }
            Experiment::MSweep => {
                c.n = vec![big];
                c.alpha = vec![1e-3];
                c.m = vec![0.1, 10f64.powf(-0.5), 1.0, 10f64.powf(0.5)];
            }
            Experiment::BoxControl => {
                c.n = vec![if expensive { 90 } else { 24 }];
                c.alpha = vec![1e-3];
            }
            Experiment::Timedep => {
                c.n = vec![8];
                c.alpha = vec![1e-2];
            }
            Experiment::Decay => {
                c.t_end = 2.0;
                c.steps = 200;
            }
            Experiment::CheckAll => {}
        }
        c
    }

    /// Apply `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax(line.into()))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::Parse { key: key.into(), value: value.into() };
        fn one<T: FromStr>(v: &str) -> Option<T> {
            v.parse().ok()
        }
        fn list<T: FromStr>(v: &str) -> Option<Vec<T>> {
            v.split(',').map(|s| s.trim().parse().ok()).collect()
        }
        match key {
            "n" => self.n = list(value).ok_or_else(bad)?,
            "r" => self.r = list(value).ok_or_else(bad)?,
            "eps" => self.eps = list(value).ok_or_else(bad)?,
            "m" => self.m = list(value).ok_or_else(bad)?,
            "c_sigma" => self.c_sigma = one(value).ok_or_else(bad)?,
            "alpha" => self.alpha = list(value).ok_or_else(bad)?,
            "omega" => self.omega = one(value).ok_or_else(bad)?,
            "kappa" => self.kappa = one(value).ok_or_else(bad)?,
            "tol" => self.tol = one(value).ok_or_else(bad)?,
            "max_iter" => self.max_iter = one(value).ok_or_else(bad)?,
            "t_end" => self.t_end = one(value).ok_or_else(bad)?,
            "steps" => self.steps = one(value).ok_or_else(bad)?,
            "targets" => self.targets = list(value).ok_or_else(bad)?,
            "x_max" => self.x_max = one(value).ok_or_else(bad)?,
            "diagonal" => self.diagonal = one(value).ok_or_else(bad)?,
            "seed" => self.seed = one(value).ok_or_else(bad)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |s: &str| Err(ConfigError::Invalid(s.into()));
        let pos = |v: &[f64]| !v.is_empty() && v.iter().all(|&x| x > 0.0 && x.is_finite());
        if self.n.is_empty() || self.n.iter().any(|&n| n == 0) {
            return err("n must be a nonempty list of positive integers");
        }
        if self.r.is_empty() || self.r.iter().any(|&r| !(1..=6).contains(&r)) {
            return err("r must lie in 1..=6");
        }
        if !pos(&self.eps) {
            return err("eps must be positive");
        }
        if self.m.is_empty() || self.m.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return err("m must be nonnegative");
        }
        if !(self.c_sigma >= 0.0 && self.c_sigma.is_finite()) {
            return err("c_sigma must be nonnegative");
        }
        if !pos(&self.alpha) {
            return err("alpha must be positive");
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return err("omega must lie in (0, 1]");
        }
        if !(self.kappa >= 0.0) {
            return err("kappa must be nonnegative");
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return err("tol and max_iter must be positive");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) || self.steps < 2 {
            return err("need t_end > 0 and steps >= 2");
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return err("x_max must be positive");
        }
        if self.targets.is_empty() {
            return err("targets must be nonempty");
        }
        Ok(())
    }

    /// Canonical text; parsing it back reproduces the configuration.
    pub fn to_text(&self) -> String {
        fn join<T: fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let _ = writeln!(s, "# experiment = {}", self.experiment);
        let _ = writeln!(s, "# expensive = {}", self.expensive);
        let _ = writeln!(s, "n = {}", join(&self.n));
        let _ = writeln!(s, "r = {}", join(&self.r));
        let _ = writeln!(s, "eps = {}", join(&self.eps));
        let _ = writeln!(s, "m = {}", join(&self.m));
        let _ = writeln!(s, "c_sigma = {}", self.c_sigma);
        let _ = writeln!(s, "alpha = {}", join(&self.alpha));
        let _ = writeln!(s, "omega = {}", self.omega);
        let _ = writeln!(s, "kappa = {}", self.kappa);
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "targets = {}", self.targets.iter().map(|t| t.name()).collect::<Vec<_>>().join(","));
        let _ = writeln!(s, "x_max = {}", self.x_max);
        let _ = writeln!(s, "diagonal = {}", self.diagonal.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }

    /// SHA-256 of the canonical text without the output directory.
    pub fn hash(&self) -> String {
        let text: String = self.to_text().lines().filter(|l| !l.starts_with("out =")).map(|l| format!("{l}\n")).collect();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Single value of a list parameter.
    pub fn scalar(&self, key: &str, v: &[f64]) -> Result<f64, ConfigError> {
        match v {
            [x] => Ok(*x),
            _ => Err(ConfigError::Invalid(format!("{key} must be a single value for {}", self.experiment))),
        }
    }
}
