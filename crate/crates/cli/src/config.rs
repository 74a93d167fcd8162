//! Experiment configuration: TOML file format and built-in presets.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub p1: usize,
    pub p2: usize,
    pub n: usize,
    pub instances: usize,
    pub master_seed: u64,
    /// Lower clip for the PSD block spectra (constrained presets use a
    /// positive floor so every component is individually co-coercive).
    #[serde(default)]
    pub psd_floor: f64,
    /// Scale of the off-diagonal coupling blocks.
    #[serde(default = "one")]
    pub coupling_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Epoch budget per run (one epoch = n component evaluations).
    pub epochs: f64,
    #[serde(default = "one_usize")]
    pub seeds_per_method: usize,
    #[serde(default)]
    pub constrained: bool,
    /// Residual samples per epoch written to the per-run traces.
    #[serde(default = "four")]
    pub samples_per_epoch: f64,
}

fn one_usize() -> usize {
    1
}

fn four() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Vfkm,
    DetFkm,
    Og,
    PlainVr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    Full,
    Svrg,
    Saga,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleChoice {
    Sublinear,
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodConfig {
    pub name: String,
    pub algorithm: Algorithm,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorChoice,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleChoice,
    /// Momentum horizon of the sublinear schedule.
    #[serde(default = "default_r")]
    pub r: f64,
    /// `beta = beta_over_l / L`; 0 selects the closed-form plan.
    #[serde(default)]
    pub beta_over_l: f64,
    /// Mini-batch size; 0 selects `floor(0.5 n^{2/3})`.
    #[serde(default)]
    pub batch: usize,
    /// Snapshot switch probability; 0 selects `n^{-1/3}`.
    #[serde(default)]
    pub switch_prob: f64,
    /// Step size of the non-KM baselines: `eta = eta_over_l / L`.
    #[serde(default)]
    pub eta_over_l: f64,
}

fn default_estimator() -> EstimatorChoice {
    EstimatorChoice::Full
}

fn default_schedule() -> ScheduleChoice {
    ScheduleChoice::Sublinear
}

fn default_r() -> f64 {
    20.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub out_dir: Option<String>,
    pub problem: ProblemConfig,
    pub run: RunConfig,
    #[serde(rename = "method")]
    pub methods: Vec<MethodConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Default mini-batch `floor(0.5 n^{2/3})` and switch probability
    /// `n^{-1/3}`.
    pub fn default_batch(n: usize) -> usize {
        ((0.5 * (n as f64).powf(2.0 / 3.0)).floor() as usize).max(1)
    }

    pub fn default_switch_prob(n: usize) -> f64 {
        (n as f64).powf(-1.0 / 3.0)
    }
}

/// Built-in presets. `desk` is the small-scale shape used by the
/// verification suite; `exp1` and `exp2` reproduce the large experiment
/// shapes.
pub fn preset(name: &str, master_seed: u64) -> Option<ExperimentConfig> {
    let (p1, p2, n, constrained) = match name {
        "desk" => (13usize, 7usize, 500usize, false),
        "desk-constrained" => (13, 7, 500, true),
        "exp1" => (67, 33, 5000, false),
        "exp1-constrained" => (67, 33, 5000, true),
        "exp2" => (133, 67, 10000, false),
        "exp2-constrained" => (133, 67, 10000, true),
        _ => return None,
    };
    let mut methods = vec![
        MethodConfig {
            name: "vfkm-svrg".into(),
            algorithm: Algorithm::Vfkm,
            estimator: EstimatorChoice::Svrg,
            schedule: ScheduleChoice::Sublinear,
            r: 20.0,
            beta_over_l: 0.15,
            batch: 0,
            switch_prob: 0.0,
            eta_over_l: 0.0,
        },
        MethodConfig {
            name: "vfkm-saga".into(),
            algorithm: Algorithm::Vfkm,
            estimator: EstimatorChoice::Saga,
            schedule: ScheduleChoice::Sublinear,
            r: 20.0,
            beta_over_l: 0.25,
            batch: 0,
            switch_prob: 0.0,
            eta_over_l: 0.0,
        },
        MethodConfig {
            name: "det-fkm".into(),
            algorithm: Algorithm::DetFkm,
            estimator: EstimatorChoice::Full,
            schedule: ScheduleChoice::Sublinear,
            r: 20.0,
            beta_over_l: 0.5,
            batch: 0,
            switch_prob: 0.0,
            eta_over_l: 0.0,
        },
        MethodConfig {
            name: "og".into(),
            algorithm: Algorithm::Og,
            estimator: EstimatorChoice::Full,
            schedule: ScheduleChoice::Sublinear,
            r: 20.0,
            beta_over_l: 0.0,
            batch: 0,
            switch_prob: 0.0,
            eta_over_l: 0.5,
        },
        MethodConfig {
            name: "rf-saga".into(),
            algorithm: Algorithm::PlainVr,
            estimator: EstimatorChoice::Saga,
            schedule: ScheduleChoice::Sublinear,
            r: 20.0,
            beta_over_l: 0.0,
            batch: 0,
            switch_prob: 0.0,
            eta_over_l: 0.25,
        },
    ];
    if constrained {
        // the non-KM baselines run on the plain equation only
        methods.retain(|m| matches!(m.algorithm, Algorithm::Vfkm | Algorithm::DetFkm));
    }
    Some(ExperimentConfig {
        out_dir: None,
        problem: ProblemConfig {
            p1,
            p2,
            n,
            instances: 10,
            master_seed,
            psd_floor: 0.0,
            coupling_scale: 1.0,
        },
        run: RunConfig {
            epochs: 100.0,
            seeds_per_method: 1,
            constrained,
            samples_per_epoch: 4.0,
        },
        methods,
    })
}
