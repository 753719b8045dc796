//! Run configurations: one JSON document per command, overridable by flags.

use std::fs;
use std::path::{Path, PathBuf};

use koopman_core::dictionary::{Dictionary, FixedDictionary, FixedKind, NeuralDictionary};
use koopman_core::dynamics::SnapshotPairs;
use koopman_core::reskoopnet::TrainConfig;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn require<T: Clone>(value: &Option<T>, what: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| CliError::Config(format!("missing required setting `{what}`")))
}

fn positive(value: usize, what: &str) -> Result<(), CliError> {
    if value == 0 {
        return Err(CliError::Config(format!("`{what}` must be positive")));
    }
    Ok(())
}

fn positive_real(value: f64, what: &str) -> Result<(), CliError> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(CliError::Config(format!("`{what}` must be a positive finite number")));
    }
    Ok(())
}

// ---- simulate ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum System {
    #[default]
    Pendulum,
    Linear,
    Multiregime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub system: System,
    pub n_init: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    /// Row-major system matrix for `linear`.
    pub matrix: Option<Vec<Vec<f64>>>,
    pub regimes: usize,
    pub dim: usize,
    pub trials: usize,
    pub noise: f64,
    pub format: SnapshotFormat,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            system: System::Pendulum,
            n_init: 90,
            n_steps: 1000,
            dt: 0.5,
            seed: 0,
            matrix: None,
            regimes: 6,
            dim: 20,
            trials: 8,
            noise: 0.05,
            format: SnapshotFormat::Csv,
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        positive(self.n_steps, "n_steps")?;
        match self.system {
            System::Pendulum => {
                positive(self.n_init, "n_init")?;
                positive_real(self.dt, "dt")?;
            }
            System::Linear => {
                positive(self.n_init, "n_init")?;
                let m = require(&self.matrix, "matrix")?;
                if m.is_empty() || m.iter().any(|r| r.len() != m.len()) {
                    return Err(CliError::Config("`matrix` must be square and nonempty".into()));
                }
            }
            System::Multiregime => {
                positive(self.regimes, "regimes")?;
                positive(self.dim, "dim")?;
                positive(self.trials, "trials")?;
                if !(self.noise >= 0.0 && self.noise.is_finite()) {
                    return Err(CliError::Config("`noise` must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }
}

/// Parses `a,b;c,d` into rows.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad matrix entry {v:?}")))
                .collect()
        })
        .collect()
}

// ---- dictionaries ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionarySpec {
    Monomial {
        max_degree: usize,
    },
    /// Explicit centers, or `n_centers` drawn from the data states.
    Rbf {
        #[serde(default)]
        centers: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        n_centers: Option<usize>,
        bandwidth: f64,
        #[serde(default)]
        seed: u64,
    },
    FourierHermite {
        hermite_order: usize,
        fourier_order: usize,
        #[serde(default)]
        velocity_scale: Option<f64>,
    },
    Neural {
        path: PathBuf,
    },
}

impl Default for DictionarySpec {
    fn default() -> Self {
        DictionarySpec::Monomial { max_degree: 1 }
    }
}

impl std::str::FromStr for DictionarySpec {
    type Err = String;

    /// `monomial:2`, `rbf:100,0.5`, `fourier-hermite:10,2`, `neural:dict.json`
    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = |n: usize| -> Result<Vec<&str>, String> {
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            if parts.len() != n || parts.iter().any(|p| p.is_empty()) {
                return Err(format!("dictionary {kind:?} expects {n} comma-separated values"));
            }
            Ok(parts)
        };
        let int = |v: &str| v.parse::<usize>().map_err(|_| format!("not an integer: {v:?}"));
        match kind {
            "monomial" => Ok(DictionarySpec::Monomial {
                max_degree: int(nums(1)?[0])?,
            }),
            "rbf" => {
                let p = nums(2)?;
                Ok(DictionarySpec::Rbf {
                    centers: None,
                    n_centers: Some(int(p[0])?),
                    bandwidth: p[1].parse().map_err(|_| format!("not a number: {:?}", p[1]))?,
                    seed: 0,
                })
            }
            "fourier-hermite" | "fourier_hermite" => {
                let p = nums(2)?;
                Ok(DictionarySpec::FourierHermite {
                    hermite_order: int(p[0])?,
                    fourier_order: int(p[1])?,
                    velocity_scale: None,
                })
            }
            "neural" if !args.is_empty() => Ok(DictionarySpec::Neural { path: args.into() }),
            _ => Err(format!(
                "unknown dictionary {s:?}; use monomial:DEG, rbf:N,BW, fourier-hermite:H,F or neural:PATH"
            )),
        }
    }
}

impl DictionarySpec {
    pub fn build(&self, data: &SnapshotPairs) -> Result<Box<dyn Dictionary>, CliError> {
        let d = data.d();
        Ok(match self {
            DictionarySpec::Monomial { max_degree } => Box::new(FixedDictionary::monomial(d, *max_degree)?),
            DictionarySpec::Rbf {
                centers,
                n_centers,
                bandwidth,
                seed,
            } => {
                let centers = match (centers, n_centers) {
                    (Some(c), None) => c.clone(),
                    (None, Some(n)) => {
                        if *n == 0 || *n > data.m() {
                            return Err(CliError::Config(format!("n_centers must be in 1..={}", data.m())));
                        }
                        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                        let mut idx = sample(&mut rng, data.m(), *n).into_vec();
                        idx.sort_unstable();
                        idx.iter().map(|&i| (0..d).map(|j| data.x()[(i, j)]).collect()).collect()
                    }
                    _ => return Err(CliError::Config("rbf needs exactly one of `centers` and `n_centers`".into())),
                };
                Box::new(FixedDictionary::new(
                    FixedKind::Rbf {
                        centers,
                        bandwidth: *bandwidth,
                    },
                    d,
                )?)
            }
            DictionarySpec::FourierHermite {
                hermite_order,
                fourier_order,
                velocity_scale,
            } => match velocity_scale {
                None => Box::new(FixedDictionary::fourier_hermite(*hermite_order, *fourier_order)?),
                Some(s) => Box::new(FixedDictionary::new(
                    FixedKind::FourierHermite {
                        hermite_order: *hermite_order,
                        fourier_order: *fourier_order,
                        velocity_scale: *s,
                    },
                    d,
                )?),
            },
            DictionarySpec::Neural { path } => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                Box::new(NeuralDictionary::from_json(&text)?)
            }
        })
    }

    pub fn input_paths(&self) -> Vec<PathBuf> {
        match self {
            DictionarySpec::Neural { path } => vec![path.clone()],
            _ => Vec::new(),
        }
    }
}

// ---- train ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub n_train: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            n_train: 47,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRunConfig {
    pub data: Option<PathBuf>,
    pub network: NetworkConfig,
    pub training: TrainConfig,
    /// Write dictionary + loss checkpoints every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        require(&self.data, "data")?;
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(CliError::Config("`network.hidden` needs positive widths".into()));
        }
        positive(self.network.n_train, "network.n_train")?;
        self.training.validate()?;
        Ok(())
    }
}

// ---- spectrum / modes / pseudospec ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub data: Option<PathBuf>,
    pub dictionary: DictionarySpec,
    /// Regularization; `None` picks a scale-aware default.
    pub sigma: Option<f64>,
    /// Residual threshold; `None` keeps every pair.
    pub epsilon: Option<f64>,
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        require(&self.data, "data")?;
        validate_sigma_epsilon(self.sigma, self.epsilon)
    }
}

fn validate_sigma_epsilon(sigma: Option<f64>, epsilon: Option<f64>) -> Result<(), CliError> {
    if let Some(s) = sigma {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(CliError::Config("`sigma` must be nonnegative".into()));
        }
    }
    if let Some(e) = epsilon {
        if !(e >= 0.0) {
            return Err(CliError::Config("`epsilon` must be nonnegative".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ModesConfig {
    pub data: Option<PathBuf>,
    pub dictionary: DictionarySpec,
    pub sigma: Option<f64>,
    pub epsilon: Option<f64>,
    /// Reduce states to this many SVD components first and lift the modes back.
    pub svd_rank: Option<usize>,
}

impl ModesConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        require(&self.data, "data")?;
        if self.svd_rank == Some(0) {
            return Err(CliError::Config("`svd_rank` must be positive".into()));
        }
        validate_sigma_epsilon(self.sigma, self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            re: [-1.5, 1.5],
            im: [-1.5, 1.5],
            n_re: 61,
            n_im: 61,
        }
    }
}

/// Parses `re_min,re_max,im_min,im_max`.
pub fn parse_box(text: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = text
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad number {x:?}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected re_min,re_max,im_min,im_max".to_string())
}

/// Parses `n_re,n_im`.
pub fn parse_resolution(text: &str) -> Result<[usize; 2], String> {
    let v: Vec<usize> = text
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| format!("bad integer {x:?}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected n_re,n_im".to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PseudospecConfig {
    pub data: Option<PathBuf>,
    pub dictionary: DictionarySpec,
    pub sigma: Option<f64>,
    pub epsilon: f64,
    pub grid: GridSpec,
}

impl Default for PseudospecConfig {
    fn default() -> Self {
        Self {
            data: None,
            dictionary: DictionarySpec::default(),
            sigma: None,
            epsilon: 0.1,
            grid: GridSpec::default(),
        }
    }
}

impl PseudospecConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        require(&self.data, "data")?;
        positive_real(self.epsilon, "epsilon")?;
        positive(self.grid.n_re, "grid.n_re")?;
        positive(self.grid.n_im, "grid.n_im")?;
        if !(self.grid.re[0] <= self.grid.re[1] && self.grid.im[0] <= self.grid.im[1]) {
            return Err(CliError::Config("grid bounds must be ordered min, max".into()));
        }
        validate_sigma_epsilon(self.sigma, None)
    }
}

// ---- hankel ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankSpec {
    #[default]
    Full,
    Fixed(usize),
}

impl std::str::FromStr for RankSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(RankSpec::Full),
            n => match n.parse::<usize>() {
                Ok(r) if r > 0 => Ok(RankSpec::Fixed(r)),
                _ => Err(format!("rank must be \"full\" or a positive integer, got {s:?}")),
            },
        }
    }
}

impl Serialize for RankSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            RankSpec::Full => s.serialize_str("full"),
            RankSpec::Fixed(r) => s.serialize_u64(*r as u64),
        }
    }
}

impl<'de> Deserialize<'de> for RankSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(0) => Err(serde::de::Error::custom("rank must be positive")),
            Raw::Int(r) => Ok(RankSpec::Fixed(r)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HankelConfig {
    /// Numeric table, one row per time step.
    pub series: Option<PathBuf>,
    pub delay: usize,
    pub rank: RankSpec,
    /// Keep only rows whose `trial` column equals this value.
    pub trial: Option<i64>,
}

impl Default for HankelConfig {
    fn default() -> Self {
        Self {
            series: None,
            delay: 50,
            rank: RankSpec::Full,
            trial: None,
        }
    }
}

impl HankelConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        require(&self.series, "series")?;
        positive(self.delay, "delay")
    }
}

// ---- dbi ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbiConfig {
    pub features: Option<PathBuf>,
    pub label_column: String,
    /// Columns ignored besides the label.
    pub exclude: Vec<String>,
}

impl Default for DbiConfig {
    fn default() -> Self {
        Self {
            features: None,
            label_column: "label".into(),
            exclude: Vec::new(),
        }
    }
}

impl DbiConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        require(&self.features, "features").map(|_| ())
    }
}

// ---- plot ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    pub spectrum: Option<PathBuf>,
    pub pseudospectrum: Option<PathBuf>,
    pub size: u32,
    pub title: Option<String>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            spectrum: None,
            pseudospectrum: None,
            size: 640,
            title: None,
        }
    }
}

impl PlotConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.size < 100 {
            return Err(CliError::Config("`size` must be at least 100".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<SimulateConfig>(r#"{"n_init": 3, "nsteps": 4}"#).is_err());
        assert!(serde_json::from_str::<TrainRunConfig>(r#"{"training": {"lr": 0.1}}"#).is_err());
        assert!(serde_json::from_str::<SpectrumConfig>(r#"{"dictionary": {"kind": "monomial", "max_degree": 2, "x": 1}}"#).is_err());
        let cfg: SimulateConfig = serde_json::from_str(r#"{"system": "linear", "matrix": [[0.9]]}"#).unwrap();
        assert_eq!(cfg.system, System::Linear);
        assert_eq!(cfg.n_init, 90);
    }

    #[test]
    fn dictionary_flags() {
        assert_eq!("monomial:3".parse::<DictionarySpec>().unwrap(), DictionarySpec::Monomial { max_degree: 3 });
        assert!(matches!(
            "fourier-hermite:10,2".parse::<DictionarySpec>().unwrap(),
            DictionarySpec::FourierHermite { hermite_order: 10, fourier_order: 2, .. }
        ));
        assert!("rbf:3".parse::<DictionarySpec>().is_err());
        assert!("cubic:3".parse::<DictionarySpec>().is_err());
    }

    #[test]
    fn matrix_and_grid_flags() {
        assert_eq!(parse_matrix("0.9,0;0,0.5").unwrap(), vec![vec![0.9, 0.0], vec![0.0, 0.5]]);
        assert!(parse_matrix("0.9,x").is_err());
        assert_eq!(parse_box("-1,1,-2,2").unwrap(), [-1.0, 1.0, -2.0, 2.0]);
        assert!(parse_resolution("3").is_err());
    }

    #[test]
    fn rank_spec_forms() {
        assert_eq!("full".parse::<RankSpec>().unwrap(), RankSpec::Full);
        assert_eq!(serde_json::from_str::<RankSpec>("4").unwrap(), RankSpec::Fixed(4));
        assert!(serde_json::from_str::<RankSpec>("0").is_err());
        assert_eq!(serde_json::to_string(&RankSpec::Full).unwrap(), "\"full\"");
    }

    #[test]
    fn validation_catches_missing_inputs() {
        assert!(SpectrumConfig::default().validate().is_err());
        let cfg = SimulateConfig {
            system: System::Linear,
            ..SimulateConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(SimulateConfig::default().validate().is_ok());
    }
}
