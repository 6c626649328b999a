//! JSON run configurations. Every field has a default so a config file only
//! needs the values it changes.

use std::f64::consts::{FRAC_PI_4, PI};

use csmqc::channels::IdleNoiseParams;
use csmqc::crosstalk::{AmplifyMode, HsaParameterSet};
use csmqc::simulator::EngineKind;
use serde::{Deserialize, Serialize};

use crate::{config_err, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Exact outcome probabilities.
    #[default]
    Exact,
    /// Finite shots drawn from the exact distributions.
    Sampled,
}

/// Dephasing and damping times. Absent means neither channel is present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coherence {
    pub t1: f64,
    pub t2: f64,
    #[serde(default)]
    pub t_dephase: Option<f64>,
}

impl Default for Coherence {
    fn default() -> Self {
        Coherence { t1: 150.0, t2: 100.0, t_dephase: None }
    }
}

/// Idle parameters for one timestep `tau` with ZZ angle `alpha`.
pub fn idle_params(coh: Option<Coherence>, tau: f64, alpha: f64) -> Result<IdleNoiseParams> {
    let mut p = IdleNoiseParams::noiseless(tau);
    if let Some(c) = coh {
        p.t1 = c.t1;
        p.t2 = c.t2;
        p.t_dephase = c.t_dephase;
    }
    p.alpha = alpha;
    p.validate()?;
    Ok(p)
}

fn default_seed() -> u64 {
    1
}
fn default_samples() -> usize {
    50
}
fn default_shots() -> usize {
    2000
}
fn default_tau() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_target() -> f64 {
    FRAC_PI_4
}
fn default_lambda() -> f64 {
    0.5
}
fn default_trials() -> usize {
    12
}
fn default_placements() -> usize {
    8
}
fn default_window7() -> usize {
    7
}
fn default_m_max() -> usize {
    7
}

/// Fields shared by all experiment configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCommon {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_shots")]
    pub shots: usize,
}

impl Default for RunCommon {
    fn default() -> Self {
        RunCommon { seed: default_seed(), mode: Mode::Exact, shots: default_shots() }
    }
}

impl RunCommon {
    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Sampled && self.shots == 0 {
            return config_err("sampled mode needs shots ≥ 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalsePositiveConfig {
    #[serde(flatten)]
    pub run: RunCommon,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Absolute ZZ angles per timestep.
    pub alphas: Vec<f64>,
    pub spectator_counts: Vec<usize>,
    #[serde(default = "default_coherence")]
    pub coherence: Option<Coherence>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// ZZ angle at which the rate-vs-count line is fitted; defaults to the
    /// smallest entry of `alphas`.
    #[serde(default)]
    pub fit_alpha: Option<f64>,
}

fn default_coherence() -> Option<Coherence> {
    Some(Coherence::default())
}

impl Default for FalsePositiveConfig {
    fn default() -> Self {
        FalsePositiveConfig {
            run: RunCommon::default(),
            samples: default_samples(),
            alphas: log_grid(1e-4, 1.0, 9),
            spectator_counts: vec![1, 2, 3, 4],
            coherence: default_coherence(),
            tau: default_tau(),
            fit_alpha: None,
        }
    }
}

impl FalsePositiveConfig {
    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if self.alphas.is_empty() || self.spectator_counts.is_empty() {
            return config_err("alphas and spectator_counts must be nonempty");
        }
        if self.samples == 0 {
            return config_err("samples must be at least 1");
        }
        if self.spectator_counts.contains(&0) {
            return config_err("spectator counts must be positive");
        }
        if self.alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return config_err("alphas must be finite and nonnegative");
        }
        Ok(())
    }
}

/// False-negative sweeps over `alpha/theta` × `phi/theta` × `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub run: RunCommon,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Bloch rotation angle per spectator per crosstalk event.
    #[serde(default = "default_target")]
    pub theta: f64,
    /// ZZ angle over the crosstalk generator coefficient θ/2.
    #[serde(default)]
    pub alpha_ratios: Vec<f64>,
    /// Pair coefficient over the crosstalk generator coefficient θ/2.
    #[serde(default)]
    pub phi_ratios: Vec<f64>,
    pub m_values: Vec<usize>,
    #[serde(default)]
    pub coherence: Option<Coherence>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Detection layers; defaults to max(8, 2·spectators, max m).
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default = "default_true")]
    pub dd: bool,
    #[serde(default)]
    pub engine: Option<EngineKind>,
    /// Identical candidate spectators available to the planner; defaults to
    /// ⌈π/θ⌉.
    #[serde(default)]
    pub candidates: Option<usize>,
    /// Grid resolution when an axis list is left empty in `grid-fn`.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_grid_points() -> usize {
    11
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            run: RunCommon::default(),
            samples: default_samples(),
            theta: FRAC_PI_4,
            alpha_ratios: log_grid(1e-4, 10.0, 11),
            phi_ratios: vec![0.0],
            m_values: vec![1, 2, 3, 4, 5, 6, 7],
            coherence: None,
            tau: default_tau(),
            window: None,
            dd: true,
            engine: None,
            candidates: None,
            grid_points: default_grid_points(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if self.samples == 0 {
            return config_err("samples must be at least 1");
        }
        if !(self.theta > 0.0 && self.theta <= PI) {
            return config_err(format!("theta {} outside (0, π]", self.theta));
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return config_err("m_values must be nonempty and positive");
        }
        for r in self.alpha_ratios.iter().chain(&self.phi_ratios) {
            if !r.is_finite() || *r < 0.0 {
                return config_err("ratios must be finite and nonnegative");
            }
        }
        Ok(())
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.unwrap_or_else(|| (PI / self.theta - 1e-9).ceil().max(1.0) as usize)
    }
}

/// `k` points log-uniform over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..k).map(|i| 10f64.powf(a + (b - a) * i as f64 / (k - 1) as f64)).collect()
}

/// Random HSA parameters for a register: per-qubit single-qubit H terms
/// along random axes, H terms on neighbouring pairs, small S terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticHsa {
    /// Mean single-qubit H norm per qubit before amplification.
    #[serde(default = "default_single_norm")]
    pub single_norm: f64,
    /// Relative spread of the per-qubit norms (uniform in 1 ± spread).
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Pair H norm over mean single-qubit H norm.
    #[serde(default = "default_pair_ratio")]
    pub pair_ratio: f64,
    /// S coefficient over single-qubit H norm.
    #[serde(default = "default_stochastic")]
    pub stochastic_ratio: f64,
}

fn default_single_norm() -> f64 {
    0.17
}
fn default_spread() -> f64 {
    0.1
}
fn default_pair_ratio() -> f64 {
    0.15
}
fn default_stochastic() -> f64 {
    1e-3
}

impl Default for SyntheticHsa {
    fn default() -> Self {
        SyntheticHsa {
            single_norm: default_single_norm(),
            spread: default_spread(),
            pair_ratio: default_pair_ratio(),
            stochastic_ratio: default_stochastic(),
        }
    }
}

impl SyntheticHsa {
    /// Only single-qubit H terms, all of equal norm.
    pub fn single_h_only() -> Self {
        SyntheticHsa { spread: 0.0, pair_ratio: 0.0, stochastic_ratio: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.single_norm > 0.0) || !(0.0..1.0).contains(&self.spread) {
            return config_err("synthetic single_norm must be positive and spread in [0, 1)");
        }
        if !(self.pair_ratio >= 0.0 && self.stochastic_ratio >= 0.0) {
            return config_err("synthetic ratios must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    #[serde(flatten)]
    pub run: RunCommon,
    /// Measured crosstalk parameters over the register; synthetic ones are
    /// drawn per trial when absent.
    #[serde(default)]
    pub params: Option<HsaParameterSet>,
    #[serde(default)]
    pub synthetic: SyntheticHsa,
    /// Register size; defaults to the largest qubit referenced plus one.
    #[serde(default)]
    pub n_qubits: Option<usize>,
    /// Candidate spectators; defaults to every register qubit.
    #[serde(default)]
    pub spectators: Vec<usize>,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_target")]
    pub target_delta: f64,
    #[serde(default = "default_amplify")]
    pub amplify: AmplifyMode,
    /// Detection layers; defaults to `m_max`.
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Random event placements per (trial, m).
    #[serde(default = "default_placements")]
    pub placements: usize,
    /// Crosstalk of the protocol's own CNOTs, applied after every
    /// preparation and inversion CNOT layer.
    #[serde(default)]
    pub protocol_crosstalk: Option<HsaParameterSet>,
    #[serde(default)]
    pub coherence: Option<Coherence>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub dd: bool,
    /// Synthetic register size when `params` is absent.
    #[serde(default = "default_synthetic_qubits")]
    pub synthetic_qubits: usize,
}

fn default_amplify() -> AmplifyMode {
    AmplifyMode::All
}
fn default_synthetic_qubits() -> usize {
    4
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            run: RunCommon::default(),
            params: None,
            synthetic: SyntheticHsa::default(),
            n_qubits: None,
            spectators: Vec::new(),
            m_max: default_m_max(),
            target_delta: FRAC_PI_4,
            amplify: AmplifyMode::All,
            window: None,
            trials: default_trials(),
            placements: default_placements(),
            protocol_crosstalk: None,
            coherence: None,
            tau: default_tau(),
            dd: false,
            synthetic_qubits: default_synthetic_qubits(),
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        self.synthetic.validate()?;
        if self.m_max == 0 || self.trials == 0 || self.placements == 0 {
            return config_err("m_max, trials and placements must be positive");
        }
        if !(self.target_delta > 0.0 && self.target_delta < PI / 2.0) {
            return config_err("target_delta must lie in (0, π/2)");
        }
        if self.window.is_some_and(|w| w < self.m_max) {
            return config_err("window shorter than m_max");
        }
        Ok(())
    }
}

/// Constant-period baseline. `period: None` selects the period that best
/// detects a fully perturbed block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default)]
    pub period: Option<usize>,
}

/// Shared by the Bell-state idle tomography and random-circuit experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilteringConfig {
    #[serde(flatten)]
    pub run: RunCommon,
    #[serde(default = "default_two")]
    pub data_qubits: usize,
    #[serde(default = "default_four")]
    pub spectators: usize,
    /// Crosstalk parameters over the register (data qubits first, then
    /// spectators); synthetic ones are drawn per trial when absent.
    #[serde(default)]
    pub params: Option<HsaParameterSet>,
    #[serde(default)]
    pub synthetic: SyntheticHsa,
    #[serde(default = "default_target")]
    pub target_delta: f64,
    #[serde(default = "default_amplify")]
    pub amplify: AmplifyMode,
    #[serde(default = "default_window7")]
    pub window: usize,
    /// Event counts; defaults to 1..=window.
    #[serde(default)]
    pub m_values: Vec<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_placements")]
    pub placements: usize,
    #[serde(default)]
    pub baseline: BaselineConfig,
    /// Crosstalk fired after every spectator preparation and inversion CNOT
    /// layer. Data-qubit CNOTs never trigger it.
    #[serde(default)]
    pub protocol_crosstalk: Option<HsaParameterSet>,
    #[serde(default)]
    pub coherence: Option<Coherence>,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_two() -> usize {
    2
}
fn default_four() -> usize {
    4
}

impl Default for FilteringConfig {
    fn default() -> Self {
        FilteringConfig {
            run: RunCommon::default(),
            data_qubits: 2,
            spectators: 4,
            params: None,
            synthetic: SyntheticHsa::default(),
            target_delta: FRAC_PI_4,
            amplify: AmplifyMode::All,
            window: 7,
            m_values: Vec::new(),
            lambda: 0.5,
            trials: default_trials(),
            placements: default_placements(),
            baseline: BaselineConfig::default(),
            protocol_crosstalk: None,
            coherence: None,
            tau: default_tau(),
        }
    }
}

impl FilteringConfig {
    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        self.synthetic.validate()?;
        if self.data_qubits == 0 || self.spectators == 0 {
            return config_err("need at least one data qubit and one spectator");
        }
        if self.data_qubits + self.spectators > 10 {
            return config_err("register above 10 qubits is too large for the density engine");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return config_err("lambda must lie in [0, 1]");
        }
        if self.trials == 0 || self.placements == 0 || self.window == 0 {
            return config_err("trials, placements and window must be positive");
        }
        if self.m_values.iter().any(|&m| m == 0 || m > self.window) {
            return config_err("m values must lie in 1..=window");
        }
        if self.baseline.period.is_some_and(|p| p == 0 || p > self.window) {
            return config_err("baseline period must lie in 1..=window");
        }
        Ok(())
    }

    pub fn m_list(&self) -> Vec<usize> {
        if self.m_values.is_empty() {
            (1..=self.window).collect()
        } else {
            self.m_values.clone()
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.data_qubits + self.spectators
    }
}
