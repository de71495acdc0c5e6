//! Run configuration: built-in defaults, a flat `key = value` file, then
//! command-line flags of the same name.
//!
//! Keys may be written with `-` or `_`. Lines starting with `#` are
//! comments. Lists are comma separated; a numeric list may also be given as
//! an inclusive range `start:stop:step`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_complex::Complex64 as C64;
use roughbermudan::kernel::{build_multiexp, optimize_ratio};
use roughbermudan::{FractionalKernel, GeometricPartition, HestonParams, MultiExpKernel};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    N,
    Alpha,
    V0,
    Maturity,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::N => "n",
            Sweep::Alpha => "alpha",
            Sweep::V0 => "v0",
            Sweep::Maturity => "maturity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub v0: f64,
    pub nu_bar: f64,
    pub lambda: f64,
    pub eta: f64,
    pub rho: f64,
    pub r: f64,
    pub s0: f64,
    pub alpha: f64,
    pub n: usize,
    /// `None` optimizes the geometric ratio.
    pub ratio: Option<f64>,
    pub maturity: f64,
    pub strike: f64,
    /// Empty means `[s0]`.
    pub spots: Vec<f64>,
    pub exercise_dates: usize,
    pub time_steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub strikes: Vec<f64>,
    pub sweep: Sweep,
    pub sweep_values: Vec<f64>,
    pub critical_lo: f64,
    pub critical_hi: f64,
    pub critical_tol: f64,
    pub w: Vec<C64>,
    pub riccati_dt: f64,
    pub fourier_dt: f64,
    pub dump_paths: usize,
}

pub const DEFAULT_SEED: u64 = 20_190_101;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            v0: 0.02,
            nu_bar: 0.02,
            lambda: 0.3,
            eta: 0.3,
            rho: -0.7,
            r: 0.06,
            s0: 100.0,
            alpha: 0.6,
            n: 20,
            ratio: None,
            maturity: 0.5,
            strike: 100.0,
            spots: Vec::new(),
            exercise_dates: 50,
            time_steps: 500,
            paths: 100_000,
            seed: DEFAULT_SEED,
            strikes: vec![90.0, 100.0, 110.0],
            sweep: Sweep::N,
            sweep_values: vec![1.0, 4.0, 10.0, 20.0, 40.0],
            critical_lo: 80.0,
            critical_hi: 99.0,
            critical_tol: 1e-2,
            w: vec![C64::new(0.0, 1.0)],
            riccati_dt: 1.25e-4,
            fourier_dt: 2.5e-4,
            dump_paths: 10,
        }
    }
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> CliError {
    CliError::Config(format!("{key} = {value:?}: {why}"))
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let value = value.trim();
    let parts: Vec<&str> = value.split(':').collect();
    if parts.len() == 3 {
        let (a, b, h): (f64, f64, f64) = (number(key, parts[0])?, number(key, parts[1])?, number(key, parts[2])?);
        if !(h > 0.0) || b < a {
            return Err(bad(key, value, "range needs start <= stop and a positive step"));
        }
        let count = ((b - a) / h + 1e-9).floor() as usize;
        return Ok((0..=count).map(|k| a + k as f64 * h).collect());
    }
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| number(key, s))
        .collect()
}

/// Parses `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(text: &str) -> Option<C64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(body) = s.strip_suffix('i') else {
        return s.parse().ok().map(|re| C64::new(re, 0.0));
    };
    let split = body
        .char_indices()
        .skip(1)
        .filter(|&(j, c)| (c == '+' || c == '-') && !body[..j].ends_with(['e', 'E']))
        .map(|(j, _)| j)
        .last();
    let coeff = |t: &str| match t {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        t => t.parse().ok(),
    };
    match split {
        Some(j) => Some(C64::new(body[..j].parse().ok()?, coeff(&body[j..])?)),
        None => Some(C64::new(0.0, coeff(body)?)),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "v0" => self.v0 = number(&key, v)?,
            "nu-bar" => self.nu_bar = number(&key, v)?,
            "lambda" => self.lambda = number(&key, v)?,
            "eta" => self.eta = number(&key, v)?,
            "rho" => self.rho = number(&key, v)?,
            "r" => self.r = number(&key, v)?,
            "s0" => self.s0 = number(&key, v)?,
            "alpha" => self.alpha = number(&key, v)?,
            "n" => self.n = number(&key, v)?,
            "ratio" => self.ratio = if v == "auto" { None } else { Some(number(&key, v)?) },
            "maturity" => self.maturity = number(&key, v)?,
            "strike" => self.strike = number(&key, v)?,
            "spots" => self.spots = list(&key, v)?,
            "exercise-dates" => self.exercise_dates = number(&key, v)?,
            "time-steps" => self.time_steps = number(&key, v)?,
            "paths" => self.paths = number(&key, v)?,
            "seed" => self.seed = number(&key, v)?,
            "strikes" => self.strikes = list(&key, v)?,
            "sweep" => {
                self.sweep = match v {
                    "n" => Sweep::N,
                    "alpha" => Sweep::Alpha,
                    "v0" => Sweep::V0,
                    "maturity" | "t" => Sweep::Maturity,
                    _ => return Err(bad(&key, v, "expected n, alpha, v0 or maturity")),
                }
            }
            "sweep-values" => self.sweep_values = list(&key, v)?,
            "critical-lo" => self.critical_lo = number(&key, v)?,
            "critical-hi" => self.critical_hi = number(&key, v)?,
            "critical-tol" => self.critical_tol = number(&key, v)?,
            "w" => {
                self.w = v
                    .split(',')
                    .map(|t| parse_complex(t).ok_or_else(|| bad(&key, v, "not a complex number")))
                    .collect::<Result<_, _>>()?
            }
            "riccati-dt" => self.riccati_dt = number(&key, v)?,
            "fourier-dt" => self.fourier_dt = number(&key, v)?,
            "dump-paths" => self.dump_paths = number(&key, v)?,
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key = value", lineno + 1)))?;
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        let positive = [
            ("s0", self.s0),
            ("maturity", self.maturity),
            ("strike", self.strike),
            ("riccati-dt", self.riccati_dt),
            ("fourier-dt", self.fourier_dt),
            ("critical-tol", self.critical_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (1/2, 1], got {}", self.alpha)));
        }
        if self.n == 0 || self.paths == 0 || self.time_steps == 0 || self.exercise_dates == 0 {
            return Err(CliError::Config("n, paths, time-steps and exercise-dates must be positive".into()));
        }
        if self.spots.iter().chain(&self.strikes).any(|&s| !(s > 0.0)) {
            return Err(CliError::Config("spots and strikes must be positive".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<HestonParams, CliError> {
        if !(self.s0 > 0.0) {
            return Err(CliError::Config(format!("s0 must be positive, got {}", self.s0)));
        }
        HestonParams::new(self.v0, self.nu_bar, self.lambda, self.eta, self.rho, self.r, self.s0.ln())
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn spot_grid(&self) -> Vec<f64> {
        if self.spots.is_empty() {
            vec![self.s0]
        } else {
            self.spots.clone()
        }
    }

    /// Lifted kernel for `(alpha, n, ratio)`; `alpha = 1` is the classical
    /// one-factor kernel.
    pub fn kernel(&self) -> Result<MultiExpKernel, CliError> {
        if self.alpha == 1.0 {
            return Ok(MultiExpKernel::classical_heston());
        }
        let frac = FractionalKernel::new(self.alpha).map_err(|e| CliError::Config(e.to_string()))?;
        let ratio = match self.ratio {
            Some(r) => r,
            None => optimize_ratio(&frac, self.n, self.maturity)?.ratio,
        };
        let part = GeometricPartition::new(self.n, ratio).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(build_multiexp(&frac, &part)?)
    }

    /// Canonical `key=value` listing of everything that affects results.
    pub fn canonical(&self) -> String {
        let fmt_list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut m = BTreeMap::new();
        m.insert("v0", self.v0.to_string());
        m.insert("nu-bar", self.nu_bar.to_string());
        m.insert("lambda", self.lambda.to_string());
        m.insert("eta", self.eta.to_string());
        m.insert("rho", self.rho.to_string());
        m.insert("r", self.r.to_string());
        m.insert("s0", self.s0.to_string());
        m.insert("alpha", self.alpha.to_string());
        m.insert("n", self.n.to_string());
        m.insert("ratio", self.ratio.map_or("auto".into(), |r| r.to_string()));
        m.insert("maturity", self.maturity.to_string());
        m.insert("strike", self.strike.to_string());
        m.insert("spots", fmt_list(&self.spot_grid()));
        m.insert("exercise-dates", self.exercise_dates.to_string());
        m.insert("time-steps", self.time_steps.to_string());
        m.insert("paths", self.paths.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("strikes", fmt_list(&self.strikes));
        m.insert("sweep", self.sweep.name().into());
        m.insert("sweep-values", fmt_list(&self.sweep_values));
        m.insert("critical-lo", self.critical_lo.to_string());
        m.insert("critical-hi", self.critical_hi.to_string());
        m.insert("critical-tol", self.critical_tol.to_string());
        m.insert(
            "w",
            self.w.iter().map(|z| format!("{}{:+}i", z.re, z.im)).collect::<Vec<_>>().join(","),
        );
        m.insert("riccati-dt", self.riccati_dt.to_string());
        m.insert("fourier-dt", self.fourier_dt.to_string());
        m.insert("dump-paths", self.dump_paths.to_string());
        m.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        assert_eq!(parse_complex("1"), Some(C64::new(1.0, 0.0)));
        assert_eq!(parse_complex("i"), Some(C64::new(0.0, 1.0)));
        assert_eq!(parse_complex("-2.5i"), Some(C64::new(0.0, -2.5)));
        assert_eq!(parse_complex("0.5+2i"), Some(C64::new(0.5, 2.0)));
        assert_eq!(parse_complex("1e-3-i"), Some(C64::new(1e-3, -1.0)));
        assert_eq!(parse_complex("x"), None);
    }

    #[test]
    fn ranges_and_lists() {
        assert_eq!(list("k", "93:96:0.25").unwrap().len(), 13);
        assert_eq!(list("k", "1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(list("k", "3:1:1").is_err());
    }

    #[test]
    fn file_then_keys() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nnu_bar = 0.04\nsweep=alpha\n\nratio = auto\n", "t").unwrap();
        assert_eq!(c.nu_bar, 0.04);
        assert_eq!(c.sweep, Sweep::Alpha);
        assert!(c.apply_text("bogus = 1", "t").is_err());
        assert!(c.apply_text("no equals sign", "t").is_err());
    }

    #[test]
    fn hash_tracks_results_relevant_keys() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "7").unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
