//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Keys:
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `model` | `ising`, `xyz` or `staggered_heisenberg` | required |
//! | `J`, `g`, `h` | Ising couplings | `1`, `-1.05`, `0.5` |
//! | `Jx`, `Jy`, `Jz`, `h` | XYZ couplings | `1.1`, `-1`, `0.9`, `1.2` |
//! | `N` | comma-separated chain lengths | required |
//! | `schedule` | `c*sqrt(N)`, `c*N`, `c*N*log(N)`, `c*N^2` or `list:M1,M2,..` | required |
//! | `rounding` | `nearest` or `ceil` for formula schedules | `nearest` |
//! | `log_base` | `e` or `2` for `N*log(N)` | `e` |
//! | `d_max` | bond cap | `256` |
//! | `E0` | target energy | `0` |
//! | `initial_state` | `Y+`, `Z_st2`, `step`, `step(e)`, `energy_target` (targets `E0`) | `Y+` |
//! | `backend` | `mps` or `exact` | `mps` |
//! | `output` | run directory, relative to the output root | `run` |
//! | `seed` | integer seed | `1` |
//! | `alpha` | fixed rescaling instead of the DMRG-edge rule | unset |
//! | `d_dmrg` | bond cap of the edge-finding DMRG | `32` |
//! | `record_every` | trace interval | `ceil(M/50)` |
//! | `block_max` | largest central block whose entropy is recorded | `4` |
//! | `fixed_bond_sweeps` | fitting sweeps once bonds saturate (0: SVD only) | `0` |
//! | `abort_discarded` | stop an order beyond this discarded weight | unset |
//! | `workers` | runs executed concurrently | `1` |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
}

type Result<T> = std::result::Result<T, ConfigError>;

fn bad<T>(key: &str, msg: impl Into<String>) -> Result<T> {
    Err(ConfigError::Value {
        key: key.to_string(),
        msg: msg.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelName {
    Ising,
    Xyz,
    StaggeredHeisenberg,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ising => "ising",
            Self::Xyz => "xyz",
            Self::StaggeredHeisenberg => "staggered_heisenberg",
        }
    }

    /// Coupling names and defaults.
    pub fn params(self) -> &'static [(&'static str, f64)] {
        match self {
            Self::Ising => &[("J", 1.0), ("g", -1.05), ("h", 0.5)],
            Self::Xyz => &[("Jx", 1.1), ("Jy", -1.0), ("Jz", 0.9), ("h", 1.2)],
            Self::StaggeredHeisenberg => &[],
        }
    }
}

impl FromStr for ModelName {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ising" => Ok(Self::Ising),
            "xyz" => Ok(Self::Xyz),
            "staggered_heisenberg" => Ok(Self::StaggeredHeisenberg),
            _ => bad("model", format!("unknown model `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rounding {
    Nearest,
    Ceil,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogBase {
    E,
    Two,
}

/// `M = f(N)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    Sqrt(f64),
    Linear(f64),
    NLogN(f64),
    Quadratic(f64),
    List(Vec<usize>),
}

impl Schedule {
    /// Orders for chain length `n`.
    pub fn resolve(&self, n: usize, rounding: Rounding, base: LogBase) -> Result<Vec<usize>> {
        let nf = n as f64;
        let raw = match self {
            Self::List(v) => return Ok(v.clone()),
            Self::Sqrt(c) => c * nf.sqrt(),
            Self::Linear(c) => c * nf,
            Self::NLogN(c) => {
                c * nf
                    * match base {
                        LogBase::E => nf.ln(),
                        LogBase::Two => nf.log2(),
                    }
            }
            Self::Quadratic(c) => c * nf * nf,
        };
        // guard against representation noise such as 0.1 * 40^2 = 160.00000000000003
        let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw };
        let m = match rounding {
            Rounding::Nearest => snapped.round(),
            Rounding::Ceil => snapped.ceil(),
        };
        if !(m >= 1.0) || !m.is_finite() {
            return bad("schedule", format!("resolves to M = {raw} at N = {n}"));
        }
        Ok(vec![m as usize])
    }
}

impl FromStr for Schedule {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if let Some(rest) = t.strip_prefix("list:") {
            let v: std::result::Result<Vec<usize>, _> = rest.split(',').map(str::parse).collect();
            return match v {
                Ok(v) if !v.is_empty() && v.iter().all(|&m| m >= 1) => Ok(Self::List(v)),
                _ => bad("schedule", format!("bad order list `{rest}`")),
            };
        }
        let (coef, form) = match t.split_once('*') {
            Some((c, f)) if c.parse::<f64>().is_ok() => (c.parse::<f64>().expect("checked"), f.to_string()),
            _ => (1.0, t.clone()),
        };
        if !(coef > 0.0) {
            return bad("schedule", "coefficient must be positive");
        }
        match form.as_str() {
            "sqrt(N)" => Ok(Self::Sqrt(coef)),
            "N" => Ok(Self::Linear(coef)),
            "N*log(N)" => Ok(Self::NLogN(coef)),
            "N^2" => Ok(Self::Quadratic(coef)),
            _ => bad("schedule", format!("unrecognized form `{s}`")),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sqrt(c) => write!(f, "{c}*sqrt(N)"),
            Self::Linear(c) => write!(f, "{c}*N"),
            Self::NLogN(c) => write!(f, "{c}*N*log(N)"),
            Self::Quadratic(c) => write!(f, "{c}*N^2"),
            Self::List(v) => {
                let s: Vec<String> = v.iter().map(|m| m.to_string()).collect();
                write!(f, "list:{}", s.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec {
    YPlus,
    ZSt2,
    /// Step height; `None` is half the largest local-term norm.
    Step(Option<f64>),
    EnergyTarget,
}

impl FromStr for InitialSpec {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t {
            "Y+" => return Ok(Self::YPlus),
            "Z_st2" => return Ok(Self::ZSt2),
            "step" => return Ok(Self::Step(None)),
            "energy_target" | "energy_target(E0)" => return Ok(Self::EnergyTarget),
            _ => {}
        }
        if let Some(inner) = t.strip_prefix("step(").and_then(|r| r.strip_suffix(')')) {
            return match inner.trim().parse::<f64>() {
                Ok(e) if e > 0.0 => Ok(Self::Step(Some(e))),
                _ => bad("initial_state", format!("bad step height `{inner}`")),
            };
        }
        bad("initial_state", format!("unknown initial state `{t}`"))
    }
}

impl fmt::Display for InitialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::YPlus => write!(f, "Y+"),
            Self::ZSt2 => write!(f, "Z_st2"),
            Self::Step(None) => write!(f, "step"),
            Self::Step(Some(e)) => write!(f, "step({e})"),
            Self::EnergyTarget => write!(f, "energy_target"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Mps,
    Exact,
}

impl FromStr for Backend {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mps" => Ok(Self::Mps),
            "exact" => Ok(Self::Exact),
            _ => bad("backend", format!("unknown backend `{s}`")),
        }
    }
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mps => "mps",
            Self::Exact => "exact",
        }
    }
}

/// Largest chain the exact backend accepts.
pub const EXACT_MAX_N: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelName,
    pub params: Vec<(String, f64)>,
    pub n_list: Vec<usize>,
    pub schedule: Schedule,
    pub rounding: Rounding,
    pub log_base: LogBase,
    pub d_max: usize,
    pub e0: f64,
    pub initial: InitialSpec,
    pub backend: Backend,
    pub output: String,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub d_dmrg: usize,
    pub record_every: Option<usize>,
    pub block_max: usize,
    pub fixed_bond_sweeps: usize,
    pub abort_discarded: Option<f64>,
    pub workers: usize,
}

const KEYS: &[&str] = &[
    "model",
    "J",
    "g",
    "h",
    "Jx",
    "Jy",
    "Jz",
    "N",
    "schedule",
    "rounding",
    "log_base",
    "d_max",
    "E0",
    "initial_state",
    "backend",
    "output",
    "seed",
    "alpha",
    "d_dmrg",
    "record_every",
    "block_max",
    "fixed_bond_sweeps",
    "abort_discarded",
    "workers",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse::<T>().or_else(|_| bad(key, format!("cannot parse `{v}`")))
}

impl ExperimentConfig {
    /// Parses the text form.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if map.insert(k.clone(), v).is_some() {
                return Err(ConfigError::Duplicate(k));
            }
        }
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        for k in map.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let model: ModelName = get("model").ok_or(ConfigError::Missing("model"))?.parse()?;
        let mut params = Vec::new();
        for (name, default) in model.params() {
            let v = match get(name) {
                Some(v) => parse_num::<f64>(name, v)?,
                None => *default,
            };
            if !v.is_finite() {
                return bad(name, "must be finite");
            }
            params.push((name.to_string(), v));
        }
        for k in ["J", "g", "h", "Jx", "Jy", "Jz"] {
            if get(k).is_some() && !model.params().iter().any(|(n, _)| *n == k) {
                return bad(k, format!("not a parameter of model `{}`", model.as_str()));
            }
        }
        let n_list: Vec<usize> = get("N")
            .ok_or(ConfigError::Missing("N"))?
            .split(',')
            .map(|s| parse_num::<usize>("N", s))
            .collect::<Result<_>>()?;
        if n_list.is_empty() || n_list.iter().any(|&n| n < 2) {
            return bad("N", "chain lengths must be at least 2");
        }
        let schedule: Schedule = get("schedule").ok_or(ConfigError::Missing("schedule"))?.parse()?;
        let rounding = match get("rounding").unwrap_or("nearest") {
            "nearest" => Rounding::Nearest,
            "ceil" => Rounding::Ceil,
            v => return bad("rounding", format!("`{v}` is not `nearest` or `ceil`")),
        };
        let log_base = match get("log_base").unwrap_or("e") {
            "e" => LogBase::E,
            "2" => LogBase::Two,
            v => return bad("log_base", format!("`{v}` is not `e` or `2`")),
        };
        let d_max = get("d_max").map(|v| parse_num("d_max", v)).transpose()?.unwrap_or(256);
        if d_max == 0 {
            return bad("d_max", "must be positive");
        }
        let e0 = get("E0").map(|v| parse_num::<f64>("E0", v)).transpose()?.unwrap_or(0.0);
        if !e0.is_finite() {
            return bad("E0", "must be finite");
        }
        let initial: InitialSpec = get("initial_state").unwrap_or("Y+").parse()?;
        let backend: Backend = get("backend").unwrap_or("mps").parse()?;
        if backend == Backend::Exact {
            if let Some(&n) = n_list.iter().find(|&&n| n > EXACT_MAX_N) {
                return bad("N", format!("exact backend supports N <= {EXACT_MAX_N}, got {n}"));
            }
        }
        let output = get("output").unwrap_or("run").to_string();
        if output.is_empty() || output.contains("..") {
            return bad("output", "must be a plain relative directory");
        }
        let seed = get("seed").map(|v| parse_num("seed", v)).transpose()?.unwrap_or(1);
        let alpha = get("alpha").map(|v| parse_num::<f64>("alpha", v)).transpose()?;
        if let Some(a) = alpha {
            if !(a > 0.0 && a <= 1.0) {
                return bad("alpha", "must lie in (0, 1]");
            }
        }
        let d_dmrg = get("d_dmrg").map(|v| parse_num("d_dmrg", v)).transpose()?.unwrap_or(32);
        let record_every = get("record_every").map(|v| parse_num::<usize>("record_every", v)).transpose()?;
        if record_every == Some(0) {
            return bad("record_every", "must be positive");
        }
        let block_max = get("block_max").map(|v| parse_num("block_max", v)).transpose()?.unwrap_or(4);
        if block_max > chebmps::filter::BLOCK_COLUMNS {
            return bad("block_max", format!("at most {}", chebmps::filter::BLOCK_COLUMNS));
        }
        let fixed_bond_sweeps = get("fixed_bond_sweeps")
            .map(|v| parse_num("fixed_bond_sweeps", v))
            .transpose()?
            .unwrap_or(0);
        let abort_discarded = get("abort_discarded")
            .map(|v| parse_num::<f64>("abort_discarded", v))
            .transpose()?;
        let workers = get("workers").map(|v| parse_num("workers", v)).transpose()?.unwrap_or(1);
        if workers == 0 {
            return bad("workers", "must be positive");
        }
        Ok(Self {
            model,
            params,
            n_list,
            schedule,
            rounding,
            log_base,
            d_max,
            e0,
            initial,
            backend,
            output,
            seed,
            alpha,
            d_dmrg,
            record_every,
            block_max,
            fixed_bond_sweeps,
            abort_discarded,
            workers,
        })
    }

    /// Every key with its value, including defaults.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("model", self.model.as_str().into());
        for (k, v) in &self.params {
            put(k, format!("{v:?}"));
        }
        let ns: Vec<String> = self.n_list.iter().map(|n| n.to_string()).collect();
        put("N", ns.join(","));
        put("schedule", self.schedule.to_string());
        put(
            "rounding",
            match self.rounding {
                Rounding::Nearest => "nearest",
                Rounding::Ceil => "ceil",
            }
            .into(),
        );
        put(
            "log_base",
            match self.log_base {
                LogBase::E => "e",
                LogBase::Two => "2",
            }
            .into(),
        );
        put("d_max", self.d_max.to_string());
        put("E0", format!("{:?}", self.e0));
        put("initial_state", self.initial.to_string());
        put("backend", self.backend.as_str().into());
        put("output", self.output.clone());
        put("seed", self.seed.to_string());
        if let Some(a) = self.alpha {
            put("alpha", format!("{a:?}"));
        }
        put("d_dmrg", self.d_dmrg.to_string());
        if let Some(r) = self.record_every {
            put("record_every", r.to_string());
        }
        put("block_max", self.block_max.to_string());
        put("fixed_bond_sweeps", self.fixed_bond_sweeps.to_string());
        if let Some(a) = self.abort_discarded {
            put("abort_discarded", format!("{a:?}"));
        }
        put("workers", self.workers.to_string());
        m
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        self.to_map().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn orders(&self, n: usize) -> Result<Vec<usize>> {
        self.schedule.resolve(n, self.rounding, self.log_base)
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params
            .iter()
            .find(|(k, _)| k == name)
            .map(|p| p.1)
            .unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let s: Schedule = "0.1*N^2".parse().unwrap();
        assert_eq!(s.resolve(40, Rounding::Nearest, LogBase::E).unwrap(), vec![160]);
        let s: Schedule = "5*sqrt(N)".parse().unwrap();
        assert_eq!(s.resolve(100, Rounding::Nearest, LogBase::E).unwrap(), vec![50]);
        assert_eq!(s.resolve(20, Rounding::Ceil, LogBase::E).unwrap(), vec![23]);
        assert_eq!(s.resolve(20, Rounding::Nearest, LogBase::E).unwrap(), vec![22]);
        let s: Schedule = "list:40,80".parse().unwrap();
        assert_eq!(s.resolve(7, Rounding::Nearest, LogBase::E).unwrap(), vec![40, 80]);
        let s: Schedule = "N*log(N)".parse().unwrap();
        assert_eq!(s.resolve(8, Rounding::Nearest, LogBase::Two).unwrap(), vec![24]);
        assert_eq!(s.resolve(8, Rounding::Nearest, LogBase::E).unwrap(), vec![17]);
        let s: Schedule = "2*N".parse().unwrap();
        assert_eq!(s.resolve(24, Rounding::Nearest, LogBase::E).unwrap(), vec![48]);
        let s: Schedule = "0.001*N".parse().unwrap();
        assert!(s.resolve(10, Rounding::Nearest, LogBase::E).is_err());
        assert!("3*N^3".parse::<Schedule>().is_err());
        assert!("list:0".parse::<Schedule>().is_err());
    }

    #[test]
    fn parse_and_round_trip() {
        let text = "model = ising\nN = 16, 20\nschedule = 2*N  # linear\ng = -1.05\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.n_list, vec![16, 20]);
        assert_eq!(c.param("J"), 1.0);
        let again = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), c.to_text());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            ExperimentConfig::parse("model = ising\nN = 8\nschedule = 2*N\nfoo = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(ExperimentConfig::parse("model = ising\nN = 8").is_err());
        assert!(ExperimentConfig::parse("model = ising\nN = 30\nschedule = N\nbackend = exact").is_err());
        assert!(ExperimentConfig::parse("model = ising\nN = 8\nschedule = N\nJz = 1").is_err());
        assert!(ExperimentConfig::parse("model = ising\nN = 8\nN = 9\nschedule = N").is_err());
        assert!(ExperimentConfig::parse("model ising").is_err());
    }

    #[test]
    fn initial_specs() {
        assert_eq!("step(0.7)".parse::<InitialSpec>().unwrap(), InitialSpec::Step(Some(0.7)));
        assert_eq!("Z_st2".parse::<InitialSpec>().unwrap(), InitialSpec::ZSt2);
        assert!("step(-1)".parse::<InitialSpec>().is_err());
    }
}
