//! False-positive and false-negative sweeps on the synthetic noise model.

use std::f64::consts::PI;

use csmqc::channels::{chain_pairs, Channel, IdleStep};
use csmqc::crosstalk::{sample_random_axes, synthetic_crosstalk_unitary, CrosstalkSpec};
use csmqc::protocol::{multi_set_layout_from_deltas, DetectorLayout, SpectatorPlan};
use csmqc::simulator::{place_perturbations, EngineKind};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::config::{idle_params, log_grid, FalsePositiveConfig, Mode, RunCommon, SweepConfig};
use crate::detector::{csmqc_layout, IdleScope, LayoutOptions};
use crate::result::ExperimentResult;
use crate::stats::{linear_fit, mean_two_se};
use crate::{config_err, substream, Result};

const TAG_FP: u64 = 1;
const TAG_FN: u64 = 2;
const TAG_SHOTS: u64 = 3;

/// Finite-shot estimate of a probability in sampled mode.
pub(crate) fn observe<R: Rng>(p: f64, run: &RunCommon, rng: &mut R) -> f64 {
    match run.mode {
        Mode::Exact => p,
        Mode::Sampled => {
            let b = Binomial::new(run.shots as u64, p.clamp(0.0, 1.0)).expect("valid binomial");
            b.sample(rng) as f64 / run.shots as f64
        }
    }
}

fn engine_for(idle: &IdleStep, forced: Option<EngineKind>) -> EngineKind {
    forced.unwrap_or(if idle.is_unitary() { EngineKind::Pure } else { EngineKind::Density })
}

/// Flag rate after one idle timestep between an ideal preparation and an
/// ideal inversion, per (α, spectator count). Axes are shared across α so
/// the α dependence is not masked by axis resampling.
pub fn false_positive_sweep(cfg: &FalsePositiveConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let points: Vec<(usize, f64)> = cfg
        .spectator_counts
        .iter()
        .flat_map(|&n| cfg.alphas.iter().map(move |&a| (n, a)))
        .collect();
    let values: Vec<Vec<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(idx, &(n, alpha))| -> Result<Vec<f64>> {
            let idle = IdleStep::new(&idle_params(cfg.coherence, cfg.tau, alpha)?, n, &chain_pairs(n))?;
            let mut shots = substream(cfg.run.seed, &[TAG_SHOTS, TAG_FP, idx as u64]);
            (0..cfg.samples)
                .map(|s| {
                    let mut rng = substream(cfg.run.seed, &[TAG_FP, n as u64, s as u64]);
                    let (axes, _) = sample_random_axes(n, 0, rng.random());
                    let plan = SpectatorPlan::new((0..n).collect(), axes, vec![PI / n as f64; n], PI)?;
                    let opts = LayoutOptions {
                        window: 1,
                        dd: false,
                        idle: Some(idle.clone()),
                        idle_scope: IdleScope::WindowOnly,
                        measure_flag: false,
                        engine: engine_for(&idle, None),
                    };
                    let p = csmqc_layout(n, &plan, &opts)?.flag_probability()?;
                    Ok(observe(p, &cfg.run, &mut shots))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut out = ExperimentResult::new("false_positive", &["alpha", "n_spectators"]);
    for (&(n, alpha), v) in points.iter().zip(&values) {
        let (m, se) = mean_two_se(v);
        out.push("false_positive", &[Some(alpha), Some(n as f64)], m, se, v.len());
    }
    let fit_alpha = cfg
        .fit_alpha
        .unwrap_or_else(|| cfg.alphas.iter().copied().fold(f64::INFINITY, f64::min));
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .zip(&values)
        .filter(|((_, a), _)| (*a - fit_alpha).abs() <= 1e-12 * fit_alpha.abs().max(1.0))
        .map(|(&(n, _), v)| (n as f64, mean_two_se(v).0))
        .unzip();
    if let Some(fit) = linear_fit(&xs, &ys) {
        let c = [Some(fit_alpha), None];
        out.push("fit_slope", &c, fit.slope, 0.0, xs.len());
        out.push("fit_intercept", &c, fit.intercept, 0.0, xs.len());
        out.push("fit_r_squared", &c, fit.r_squared, 0.0, xs.len());
        out.summary.insert("fit_alpha".into(), fit_alpha);
        out.summary.insert("fit_slope".into(), fit.slope);
        out.summary.insert("fit_r_squared".into(), fit.r_squared);
    }
    Ok(out)
}

/// The planned set responsible for `m` events, with its level.
pub fn responsible_set(layout: &DetectorLayout, m: usize) -> Option<(usize, &SpectatorPlan)> {
    if m == 0 {
        return layout.sets.first().map(|s| (0, s));
    }
    layout
        .count_classes
        .iter()
        .position(|c| c.contains(&m))
        .map(|l| (l, &layout.sets[l]))
}

/// Synthetic-model detector for identical candidates with Bloch angle θ.
pub fn synthetic_layout(cfg: &SweepConfig) -> Result<DetectorLayout> {
    let m_max = *cfg.m_values.iter().max().expect("validated nonempty");
    Ok(multi_set_layout_from_deltas(m_max, &vec![cfg.theta; cfg.candidate_count()])?)
}

struct Point {
    m: usize,
    n: usize,
    alpha_ratio: f64,
    phi_ratio: f64,
}

/// P(flag = 0) after `m` synthetic crosstalk events per (α/θ, φ/θ, m).
/// Ratios are taken against the generator coefficient θ/2. Each sample
/// draws fresh axes and event layers, shared across the ratio grid.
pub fn false_negative_sweep(cfg: &SweepConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let alphas = if cfg.alpha_ratios.is_empty() { log_grid(1e-4, 10.0, cfg.grid_points) } else { cfg.alpha_ratios.clone() };
    let phis = if cfg.phi_ratios.is_empty() { vec![0.0] } else { cfg.phi_ratios.clone() };
    run_false_negative(cfg, &alphas, &phis, "false_negative")
}

/// Same measurement over the full (α/θ, φ/θ) grid; empty axes default to
/// `grid_points` log-uniform values over [1e-4, 10].
pub fn grid_false_negative(cfg: &SweepConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let grid = |v: &Vec<f64>| if v.is_empty() { log_grid(1e-4, 10.0, cfg.grid_points) } else { v.clone() };
    run_false_negative(cfg, &grid(&cfg.alpha_ratios), &grid(&cfg.phi_ratios), "grid_false_negative")
}

fn run_false_negative(cfg: &SweepConfig, alphas: &[f64], phis: &[f64], name: &str) -> Result<ExperimentResult> {
    let layout = synthetic_layout(cfg)?;
    let mut points = Vec::new();
    for &m in &cfg.m_values {
        let Some((_, set)) = responsible_set(&layout, m) else {
            return config_err(format!("no spectator set detects m = {m} at θ = {}", cfg.theta));
        };
        for &a in alphas {
            for &p in phis {
                points.push(Point { m, n: set.len(), alpha_ratio: a, phi_ratio: p });
            }
        }
    }
    let n_max = points.iter().map(|p| p.n).max().unwrap_or(1);
    let m_max = *cfg.m_values.iter().max().expect("validated nonempty");
    let window = cfg.window.unwrap_or_else(|| 8.max(m_max).max(if cfg.dd { 2 * n_max } else { 0 }));
    if window < m_max {
        return config_err(format!("window {window} cannot hold {m_max} events"));
    }
    let gen = cfg.theta / 2.0;

    let values: Vec<Vec<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(idx, pt)| -> Result<Vec<f64>> {
            let n = pt.n;
            let pairs = chain_pairs(n);
            let idle = IdleStep::new(&idle_params(cfg.coherence, cfg.tau, pt.alpha_ratio * gen)?, n, &pairs)?;
            let engine = engine_for(&idle, cfg.engine);
            let mut shots = substream(cfg.run.seed, &[TAG_SHOTS, TAG_FN, idx as u64]);
            (0..cfg.samples)
                .map(|s| {
                    let mut rng = substream(cfg.run.seed, &[TAG_FN, pt.m as u64, s as u64]);
                    let (axes, pair_axes) = sample_random_axes(n, pairs.len(), rng.random());
                    let spec = CrosstalkSpec {
                        single_axes: axes.clone(),
                        pair_axes,
                        pairs: pairs.clone(),
                        theta: gen,
                        phi: pt.phi_ratio * gen,
                    };
                    let u = synthetic_crosstalk_unitary(&spec, n)?;
                    let plan = SpectatorPlan::new((0..n).collect(), axes, vec![cfg.theta; n], PI / (1 << pt.m.trailing_zeros()) as f64)?;
                    let opts = LayoutOptions {
                        window,
                        dd: cfg.dd,
                        idle: Some(idle.clone()),
                        idle_scope: IdleScope::All,
                        measure_flag: false,
                        engine,
                    };
                    let mut b = csmqc_layout(n, &plan, &opts)?;
                    let ch = b.add_channel(Channel::Unitary(u));
                    let pattern = place_perturbations(window, pt.m, &mut rng)?;
                    b.place_events(ch, &pattern.layers);
                    let p1 = b.flag_probability()?;
                    Ok(observe(1.0 - p1, &cfg.run, &mut shots))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut out = ExperimentResult::new(name, &["alpha_ratio", "phi_ratio", "m", "n_spectators"]);
    for (pt, v) in points.iter().zip(&values) {
        let (mean, se) = mean_two_se(v);
        out.push(
            "false_negative",
            &[Some(pt.alpha_ratio), Some(pt.phi_ratio), Some(pt.m as f64), Some(pt.n as f64)],
            mean,
            se,
            v.len(),
        );
    }
    out.summary.insert("window".into(), window as f64);
    out.summary.insert("theta".into(), cfg.theta);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Coherence;

    fn fp(alphas: Vec<f64>, counts: Vec<usize>, coh: Option<Coherence>) -> FalsePositiveConfig {
        FalsePositiveConfig { alphas, spectator_counts: counts, coherence: coh, samples: 4, ..Default::default() }
    }

    #[test]
    fn noiseless_idle_never_flags() {
        let r = false_positive_sweep(&fp(vec![0.0], vec![1, 2, 3], None)).unwrap();
        for row in r.rows_for("false_positive") {
            assert!(row.value.abs() < 1e-12);
        }
    }

    #[test]
    fn single_spectator_dephasing_closed_form() {
        // One spectator with Bloch vector s ⟂ k: the flag fires with
        // probability p_D·(s_x² + s_y²) after one dephasing step.
        let coh = Coherence { t1: f64::INFINITY, t2: 100.0, t_dephase: None };
        let cfg = FalsePositiveConfig { samples: 1, ..fp(vec![0.0], vec![1], Some(coh)) };
        let r = false_positive_sweep(&cfg).unwrap();
        let p_d = -(-0.5f64 / 100.0).exp_m1() / 2.0;
        let mut rng = substream(cfg.run.seed, &[TAG_FP, 1, 0]);
        let (axes, _) = sample_random_axes(1, 0, rng.random());
        let plan = SpectatorPlan::new(vec![0], axes, vec![PI], PI).unwrap();
        let psi = csmqc::protocol::mghz_state(&plan).unwrap();
        let rho = psi.density();
        let s = csmqc::characterize::bloch_coordinates(&rho, 0).unwrap();
        let want = p_d * (s[0] * s[0] + s[1] * s[1]);
        let got = r.rows_for("false_positive").next().unwrap().value;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn rate_grows_with_alpha() {
        let alphas = log_grid(1e-4, 0.3, 6);
        let r = false_positive_sweep(&fp(alphas, vec![3], Some(Coherence::default()))).unwrap();
        let v: Vec<f64> = r.rows_for("false_positive").map(|r| r.value).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{v:?}");
    }

    #[test]
    fn exact_angle_odd_m_never_misses() {
        let cfg = SweepConfig {
            alpha_ratios: vec![0.0],
            m_values: vec![1, 3, 5],
            samples: 3,
            ..SweepConfig::default()
        };
        let r = false_negative_sweep(&cfg).unwrap();
        for row in r.rows_for("false_negative") {
            assert!(row.value.abs() < 1e-9);
            assert_eq!(row.coords[3], Some(4.0));
        }
    }

    #[test]
    fn sets_follow_count_classes() {
        let cfg = SweepConfig { alpha_ratios: vec![0.0], m_values: vec![2, 4, 6], samples: 2, ..SweepConfig::default() };
        let r = false_negative_sweep(&cfg).unwrap();
        let ns: Vec<f64> = r.rows_for("false_negative").map(|r| r.coords[3].unwrap()).collect();
        assert_eq!(ns, vec![2.0, 1.0, 2.0]);
        for row in r.rows_for("false_negative") {
            assert!(row.value.abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let cfg = SweepConfig {
            alpha_ratios: vec![0.05],
            phi_ratios: vec![0.1],
            m_values: vec![3],
            samples: 3,
            ..SweepConfig::default()
        };
        let a = false_negative_sweep(&cfg).unwrap().to_csv();
        let b = false_negative_sweep(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_mode_stays_close_to_exact() {
        let mut cfg = SweepConfig {
            alpha_ratios: vec![0.0],
            m_values: vec![3],
            samples: 2,
            theta: 2.0 * PI / 9.0,
            ..SweepConfig::default()
        };
        cfg.run.mode = Mode::Sampled;
        cfg.run.shots = 20000;
        let r = false_negative_sweep(&cfg).unwrap();
        let v = r.rows[0].value;
        assert!((v - 0.25).abs() < 0.02, "{v}");
    }

    #[test]
    fn uncovered_count_is_a_config_error() {
        let cfg = SweepConfig { m_values: vec![8], ..SweepConfig::default() };
        assert!(matches!(false_negative_sweep(&cfg), Err(crate::ExpError::Config(_))));
    }
}
