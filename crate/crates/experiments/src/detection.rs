//! Detection-rate study under HSA-model crosstalk.


use csmqc::channels::{chain_pairs, Channel, GeneratorKind, IdleStep};
use csmqc::characterize::characterize_qubit;
use csmqc::crosstalk::{
    amplify_parameters, calibrate_amplification_with, hsa_crosstalk, AmplifyMode, HsaEntry,
    HsaMetadata, HsaParameterSet,
};
use csmqc::protocol::{multi_set_layout, DetectorLayout, SpectatorCandidate};
use csmqc::simulator::{place_perturbations, EngineKind};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::{idle_params, Coherence, DetectionConfig, SyntheticHsa};
use crate::detector::{csmqc_layout, IdleScope, LayoutOptions};
use crate::result::ExperimentResult;
use crate::stats::mean_two_se;
use crate::sweeps::{observe, responsible_set};
use crate::{config_err, substream, ExpError, Result};

const TAG_PARAMS: u64 = 10;
const TAG_PLACE: u64 = 11;
const TAG_SHOTS: u64 = 12;

const PAIR_LABELS: [&str; 9] = ["XX", "XY", "XZ", "YX", "YY", "YZ", "ZX", "ZY", "ZZ"];

fn unit<const N: usize>(rng: &mut ChaCha8Rng) -> [f64; N] {
    loop {
        let v: [f64; N] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.map(|x| x / n);
        }
    }
}

/// Random HSA parameters on `n` qubits with neighbouring pairs `pairs`.
pub fn synthetic_hsa(n: usize, pairs: &[(usize, usize)], s: &SyntheticHsa, rng: &mut ChaCha8Rng) -> HsaParameterSet {
    let mut entries = Vec::new();
    let mut norms = Vec::with_capacity(n);
    for q in 0..n {
        let norm = s.single_norm * (1.0 + s.spread * rng.random_range(-1.0..=1.0));
        norms.push(norm);
        for (c, a) in ["X", "Y", "Z"].iter().zip(unit::<3>(rng)) {
            entries.push(HsaEntry::new(&[q], GeneratorKind::H, c, None, norm * a));
        }
    }
    if s.pair_ratio > 0.0 {
        for &(a, b) in pairs {
            let axis = unit::<9>(rng);
            for (label, w) in PAIR_LABELS.iter().zip(axis) {
                entries.push(HsaEntry::new(&[a, b], GeneratorKind::H, label, None, s.pair_ratio * s.single_norm * w));
            }
        }
    }
    if s.stochastic_ratio > 0.0 {
        for (q, norm) in norms.iter().enumerate() {
            for c in ["X", "Y", "Z"] {
                let rate = s.stochastic_ratio * norm * rng.random::<f64>();
                entries.push(HsaEntry::new(&[q], GeneratorKind::S, c, None, rate));
            }
        }
    }
    HsaParameterSet { entries, metadata: HsaMetadata { device: Some("synthetic".into()), ..Default::default() } }
}

/// Amplified parameters, their channel and the characterized spectators.
pub struct Calibrated {
    pub factor: f64,
    pub params: HsaParameterSet,
    pub channel: Channel,
    pub candidates: Vec<SpectatorCandidate>,
}

/// Scales `params` until the mean spectator angle is `target`, then fits
/// each spectator's axis and angle. Spectators without a usable trajectory
/// are dropped.
pub fn calibrate(
    params: &HsaParameterSet,
    n: usize,
    spectators: &[usize],
    target: f64,
    mode: AmplifyMode,
) -> Result<Calibrated> {
    let factor = calibrate_amplification_with(params, target, n, spectators, mode)?;
    let params = amplify_parameters(params, factor, mode)?;
    let channel = hsa_crosstalk(&params, n)?;
    let mut candidates = Vec::new();
    for &q in spectators {
        if let Ok(fit) = characterize_qubit(&channel, n, q) {
            candidates.push(SpectatorCandidate { qubit: q, axis: fit.axis, delta: fit.delta });
        }
    }
    if candidates.is_empty() {
        return Err(ExpError::Numerical(csmqc::Error::Degenerate("no spectator could be characterized".into())));
    }
    Ok(Calibrated { factor, params, channel, candidates })
}

pub(crate) fn idle_step(coh: Option<Coherence>, tau: f64, n: usize) -> Result<Option<IdleStep>> {
    Ok(match coh {
        Some(_) => Some(IdleStep::new(&idle_params(coh, tau, 0.0)?, n, &chain_pairs(n))?),
        None => None,
    })
}

fn engine_for(ch: &Channel, idle: &Option<IdleStep>, extra: Option<&Channel>) -> EngineKind {
    let unitary = ch.is_unitary() && idle.as_ref().is_none_or(|s| s.is_unitary()) && extra.is_none_or(|c| c.is_unitary());
    if unitary {
        EngineKind::Pure
    } else {
        EngineKind::Density
    }
}

struct Trial {
    factor: f64,
    /// `rates[m][level]`: mean flag rate of set `level` after `m` events.
    rates: Vec<Vec<f64>>,
    set_sizes: Vec<usize>,
    responsible: Vec<Option<usize>>,
}

fn run_trial(cfg: &DetectionConfig, t: usize) -> Result<Trial> {
    let (params, n) = match &cfg.params {
        Some(p) => {
            let n = cfg.n_qubits.unwrap_or_else(|| p.max_qubit().map_or(1, |m| m + 1));
            p.validate(n)?;
            (p.clone(), n)
        }
        None => {
            let n = cfg.n_qubits.unwrap_or(cfg.synthetic_qubits);
            let mut rng = substream(cfg.run.seed, &[TAG_PARAMS, t as u64]);
            (synthetic_hsa(n, &chain_pairs(n), &cfg.synthetic, &mut rng), n)
        }
    };
    let spectators: Vec<usize> = if cfg.spectators.is_empty() { (0..n).collect() } else { cfg.spectators.clone() };
    if spectators.iter().any(|&q| q >= n) {
        return config_err(format!("spectator outside the {n}-qubit register"));
    }
    let cal = calibrate(&params, n, &spectators, cfg.target_delta, cfg.amplify)?;
    let layout: DetectorLayout = multi_set_layout(cfg.m_max, &cal.candidates)?;
    let window = cfg.window.unwrap_or(cfg.m_max);
    let idle = idle_step(cfg.coherence, cfg.tau, n)?;
    let protocol = match &cfg.protocol_crosstalk {
        Some(p) => Some(hsa_crosstalk(p, n)?),
        None => None,
    };
    let engine = engine_for(&cal.channel, &idle, protocol.as_ref());
    let opts = LayoutOptions { window, dd: cfg.dd, idle, idle_scope: IdleScope::All, measure_flag: false, engine };
    let mut shots = substream(cfg.run.seed, &[TAG_SHOTS, t as u64]);

    let mut rates = Vec::new();
    for m in 0..=cfg.m_max {
        let mut per_set = Vec::new();
        for set in &layout.sets {
            let mut acc = 0.0;
            for k in 0..cfg.placements {
                let mut rng = substream(cfg.run.seed, &[TAG_PLACE, t as u64, m as u64, k as u64]);
                let mut b = csmqc_layout(n, set, &opts)?;
                if let Some(p) = &protocol {
                    b.add_protocol_crosstalk(p.clone());
                }
                let ch = b.add_channel(cal.channel.clone());
                b.place_events(ch, &place_perturbations(window, m, &mut rng)?.layers);
                acc += observe(b.flag_probability()?, &cfg.run, &mut shots);
            }
            per_set.push(acc / cfg.placements as f64);
        }
        rates.push(per_set);
    }
    let responsible = (0..=cfg.m_max).map(|m| responsible_set(&layout, m).map(|(l, _)| l)).collect();
    Ok(Trial { factor: cal.factor, rates, set_sizes: layout.sets.iter().map(|s| s.len()).collect(), responsible })
}

/// Flag rate per event count `m ∈ 0..=m_max`, for the set responsible for
/// `m` (`detection_rate`) and for every planned set (`set_flag_rate`).
/// Uncertainties are over trials.
pub fn detection_rate_experiment(cfg: &DetectionConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let trials = if cfg.params.is_some() { 1 } else { cfg.trials };
    let results: Vec<Trial> = (0..trials).into_par_iter().map(|t| run_trial(cfg, t)).collect::<Result<_>>()?;

    let mut out = ExperimentResult::new("detection_rate", &["m", "level", "n_spectators"]);
    let levels = results.iter().map(|r| r.set_sizes.len()).min().unwrap_or(0);
    let same_size = |l: usize| {
        let s = results[0].set_sizes[l];
        results.iter().all(|r| r.set_sizes[l] == s).then_some(s as f64)
    };
    for m in 0..=cfg.m_max {
        let resp: Vec<f64> = results
            .iter()
            .filter_map(|r| r.responsible[m].filter(|&l| l < r.rates[m].len()).map(|l| r.rates[m][l]))
            .collect();
        if !resp.is_empty() {
            let level = results[0].responsible[m];
            let (v, se) = mean_two_se(&resp);
            let n_spec = level.and_then(|l| if l < levels { same_size(l) } else { None });
            out.push("detection_rate", &[Some(m as f64), level.map(|l| l as f64), n_spec], v, se, resp.len());
        }
        for l in 0..levels {
            let xs: Vec<f64> = results.iter().map(|r| r.rates[m][l]).collect();
            let (v, se) = mean_two_se(&xs);
            out.push("set_flag_rate", &[Some(m as f64), Some(l as f64), same_size(l)], v, se, xs.len());
        }
    }
    let factors: Vec<f64> = results.iter().map(|r| r.factor).collect();
    out.summary.insert("amplification_mean".into(), mean_two_se(&factors).0);
    out.summary.insert("target_delta".into(), cfg.target_delta);
    out.summary.insert("levels".into(), levels as f64);
    Ok(out)
}
