//! Post-selection on spectator flags: Bell-state idle tomography,
//! random-circuit fidelity and the constant-period baseline.
//!
//! The register holds the data qubits first, then the spectators. A fraction
//! `lambda` of shots is perturbed; the rest run the clean circuit.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use csmqc::channels::{chain_pairs, Channel};
use csmqc::operator::{pauli_string_matrix, StateVector, C64};
use csmqc::protocol::{detection_probability, plan_from_candidates, GateKind, GateList, SpectatorPlan};
use csmqc::simulator::{partial_trace_matrix, place_perturbations, EngineKind};
use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{FilteringConfig, Mode};
use crate::detection::{calibrate, idle_step, synthetic_hsa};
use crate::detector::{baseline_layout, csmqc_layout, Built, IdleScope, LayoutOptions};
use crate::result::ExperimentResult;
use crate::stats::mean_two_se;
use crate::{config_err, substream, ExpError, Result};

const TAG_PARAMS: u64 = 20;
const TAG_PLACE: u64 = 21;
const TAG_SHOTS: u64 = 22;
const TAG_CIRCUIT: u64 = 23;

const NORM_TOL: f64 = 1e-9;

fn check_normalized(p: &BTreeMap<String, f64>) -> Result<()> {
    let total: f64 = p.values().sum();
    if (total - 1.0).abs() > NORM_TOL || p.values().any(|&v| v < -NORM_TOL) {
        return config_err(format!("distribution is not normalized (sum {total})"));
    }
    Ok(())
}

/// Total variation distance `sup_E |P(E) − Q(E)|`, i.e. half the L¹
/// distance. Both inputs must be normalized.
pub fn tvd(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> Result<f64> {
    check_normalized(p)?;
    check_normalized(q)?;
    let mut d = 0.0;
    for (k, v) in p {
        d += (v - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, v) in q {
        if !p.contains_key(k) {
            d += v.abs();
        }
    }
    Ok(0.5 * d)
}

/// TVD of empirical counts against a normalized distribution.
pub fn tvd_counts(counts: &BTreeMap<String, usize>, ideal: &BTreeMap<String, f64>) -> Result<f64> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return config_err("no counts");
    }
    let p = counts.iter().map(|(k, &c)| (k.clone(), c as f64 / total as f64)).collect();
    tvd(&p, ideal)
}

fn trace(m: &Array2<C64>) -> f64 {
    m.diag().iter().map(|c| c.re).sum()
}

/// `tr(ρ σ)`. Both operators must have unit trace.
pub fn fidelity(rho: &Array2<C64>, sigma: &Array2<C64>) -> Result<f64> {
    if rho.dim() != sigma.dim() || rho.nrows() != rho.ncols() {
        return config_err("fidelity needs square operators of equal dimension");
    }
    for m in [rho, sigma] {
        if (trace(m) - 1.0).abs() > NORM_TOL {
            return config_err(format!("operator trace {} is not 1", trace(m)));
        }
    }
    Ok(trace_product(rho, sigma).re)
}

fn trace_product(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for ((i, j), v) in a.indexed_iter() {
        s += v * b[[j, i]];
    }
    s
}

/// All Pauli labels on `n` qubits, `I…I` first.
pub fn pauli_labels(n: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..n {
        out = out.iter().flat_map(|p| "IXYZ".chars().map(move |c| format!("{p}{c}"))).collect();
    }
    out
}

/// `tr(P m)` for every label on the operator's qubits.
pub fn pauli_expectations(m: &Array2<C64>) -> Result<BTreeMap<String, f64>> {
    let n = m.nrows().trailing_zeros() as usize;
    let mut out = BTreeMap::new();
    for label in pauli_labels(n) {
        let p = pauli_string_matrix(&label)?;
        out.insert(label, trace_product(p.matrix(), m).re);
    }
    Ok(out)
}

/// `Σ_P ⟨P⟩ P / 2^n` from a full set of Pauli expectations.
pub fn qst_reconstruct(expectations: &BTreeMap<String, f64>, n: usize) -> Result<Array2<C64>> {
    let dim = 1usize << n;
    let mut rho = Array2::<C64>::zeros((dim, dim));
    for label in pauli_labels(n) {
        let Some(&e) = expectations.get(&label) else {
            return config_err(format!("missing expectation for {label}"));
        };
        rho.scaled_add(C64::new(e / dim as f64, 0.0), pauli_string_matrix(&label)?.matrix());
    }
    Ok(rho)
}

/// One gate per layer on a random qubit, drawn from {H, S, T, CNOT}; CNOT
/// takes a random partner and orientation.
pub fn random_circuit(n: usize, depth: usize, rng: &mut ChaCha8Rng) -> GateList {
    let mut g = GateList::default();
    let kinds = if n > 1 { 4 } else { 3 };
    for layer in 0..depth {
        let q = rng.random_range(0..n);
        match rng.random_range(0..kinds) {
            0 => g.push(layer, GateKind::H, vec![q]),
            1 => g.push(layer, GateKind::S, vec![q]),
            2 => g.push(layer, GateKind::T, vec![q]),
            _ => {
                let mut t = rng.random_range(0..n - 1);
                if t >= q {
                    t += 1;
                }
                g.push(layer, GateKind::Cnot, vec![q, t]);
            }
        }
    }
    g
}

/// H on the first data qubit and a CNOT chain; a Bell pair for two qubits.
pub fn ghz_prep(n: usize) -> GateList {
    let mut g = GateList::default();
    g.push(0, GateKind::H, vec![0]);
    for q in 1..n {
        g.push(q, GateKind::Cnot, vec![q - 1, q]);
    }
    g
}

/// Period in `1..=window` maximizing the flag probability when one block is
/// fully perturbed by a rotation of `delta`; ties go to the shorter period.
pub fn optimal_baseline_period(delta: f64, window: usize) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for p in 1..=window {
        let v = detection_probability(p, delta);
        if v > best.1 + 1e-12 {
            best = (p, v);
        }
    }
    best.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Detector {
    Csmqc,
    Baseline,
}

enum Task {
    Bell,
    Random(GateList),
    Empty,
}

struct Setup {
    n: usize,
    data: Vec<usize>,
    channel: Channel,
    protocol: Option<Channel>,
    csmqc: SpectatorPlan,
    baseline: SpectatorPlan,
    period: usize,
    opts: LayoutOptions,
    factor: f64,
}

impl Setup {
    fn new(cfg: &FilteringConfig, t: usize) -> Result<Setup> {
        let n = cfg.n_qubits();
        let params = match &cfg.params {
            Some(p) => {
                p.validate(n)?;
                p.clone()
            }
            None => synthetic_hsa(n, &chain_pairs(n), &cfg.synthetic, &mut substream(cfg.run.seed, &[TAG_PARAMS, t as u64])),
        };
        let spectators: Vec<usize> = (cfg.data_qubits..n).collect();
        let cal = calibrate(&params, n, &spectators, cfg.target_delta, cfg.amplify)?;
        let csmqc = plan_from_candidates(&cal.candidates, PI)?;
        let closest = cal
            .candidates
            .iter()
            .min_by(|a, b| (a.delta - cfg.target_delta).abs().total_cmp(&(b.delta - cfg.target_delta).abs()))
            .copied()
            .expect("calibration keeps at least one spectator");
        let baseline = plan_from_candidates(&[closest], closest.delta)?;
        let protocol = match &cfg.protocol_crosstalk {
            Some(p) => Some(csmqc::crosstalk::hsa_crosstalk(p, n)?),
            None => None,
        };
        let opts = LayoutOptions {
            window: cfg.window,
            dd: false,
            idle: idle_step(cfg.coherence, cfg.tau, n)?,
            idle_scope: IdleScope::All,
            measure_flag: true,
            engine: EngineKind::Density,
        };
        let mut s = Setup {
            n,
            data: (0..cfg.data_qubits).collect(),
            channel: cal.channel,
            protocol,
            csmqc,
            baseline,
            period: 1,
            opts,
            factor: cal.factor,
        };
        s.period = match cfg.baseline.period {
            Some(p) => p,
            None => s.best_period()?,
        };
        Ok(s)
    }

    /// Period whose first block, fully perturbed, flags most often under the
    /// configured crosstalk and idle noise.
    fn best_period(&self) -> Result<usize> {
        let mut best = (1, f64::NEG_INFINITY);
        for p in 1..=self.opts.window {
            let (mut b, ch) = self.build_with(Detector::Baseline, &Task::Empty, p)?;
            b.place_events(ch, &(0..p).collect::<Vec<_>>());
            let v = 1.0 - b.run_density()?.p_all_zero();
            if v > best.1 + 1e-12 {
                best = (p, v);
            }
        }
        Ok(best.0)
    }

    fn build_with(&self, which: Detector, task: &Task, period: usize) -> Result<(Built, usize)> {
        let mut b = match which {
            Detector::Csmqc => csmqc_layout(self.n, &self.csmqc, &self.opts)?,
            Detector::Baseline => baseline_layout(self.n, &self.baseline, period, &self.opts)?,
        };
        // before any data gate, so data CNOTs stay crosstalk-free
        if let Some(p) = &self.protocol {
            b.add_protocol_crosstalk(p.clone());
        }
        match task {
            Task::Bell => {
                let prep = ghz_prep(self.data.len());
                b.add_head_gates(&prep)?;
                b.add_tail_gates(&prep.inverse()?)?;
            }
            Task::Random(g) => b.add_window_circuit(g)?,
            Task::Empty => {}
        }
        let ch = b.add_channel(self.channel.clone());
        Ok((b, ch))
    }

    fn build(&self, which: Detector, task: &Task) -> Result<(Built, usize)> {
        self.build_with(which, task, self.period)
    }
}

/// Data-qubit operators after one circuit: the full state and the
/// unnormalized branch in which no flag fired.
#[derive(Clone, Debug)]
struct Branches {
    full: Array2<C64>,
    kept: Array2<C64>,
}

impl Branches {
    fn kept_fraction(&self) -> f64 {
        trace(&self.kept)
    }

    fn mix(clean: &Branches, perturbed: &[Branches], lambda: f64) -> Branches {
        let w = lambda / perturbed.len() as f64;
        let mut out = Branches { full: clean.full.mapv(|v| v * (1.0 - lambda)), kept: clean.kept.mapv(|v| v * (1.0 - lambda)) };
        for b in perturbed {
            out.full.scaled_add(C64::new(w, 0.0), &b.full);
            out.kept.scaled_add(C64::new(w, 0.0), &b.kept);
        }
        out
    }
}

fn simulate(setup: &Setup, template: &(Built, usize), events: &[usize]) -> Result<Branches> {
    let (mut b, ch) = (template.0.clone(), template.1);
    b.place_events(ch, events);
    let run = b.run_density()?;
    let full = partial_trace_matrix(run.state.matrix(), setup.n, &setup.data)?;
    let kept = match &run.zero_branch {
        Some(z) => partial_trace_matrix(z, setup.n, &setup.data)?,
        None => full.clone(),
    };
    Ok(Branches { full, kept })
}

fn normalized(m: &Array2<C64>) -> Option<Array2<C64>> {
    let t = trace(m);
    (t > 1e-14).then(|| m.mapv(|v| v / t))
}

fn bitstring(i: usize, n: usize) -> String {
    (0..n).map(|q| if (i >> (n - 1 - q)) & 1 == 1 { '1' } else { '0' }).collect()
}

fn diagonal_distribution(m: &Array2<C64>) -> BTreeMap<String, f64> {
    let n = m.nrows().trailing_zeros() as usize;
    m.diag().iter().enumerate().map(|(i, v)| (bitstring(i, n), v.re.max(0.0))).collect()
}

/// Per-trial scalars keyed by metric; `None` when every shot was discarded.
type Metrics = Vec<(&'static str, Option<f64>)>;

/// Draws the population behind each shot: clean with probability
/// `1 − lambda`, otherwise a uniformly chosen placement.
fn shot_sources(shots: usize, lambda: f64, placements: usize, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
    (0..shots)
        .map(|_| if rng.random_bool(lambda) { Some(rng.random_range(0..placements)) } else { None })
        .collect()
}

/// Joint (flag, outcome) weights: index `2x` is outcome `x` with no flag,
/// `2x + 1` with a flag.
fn joint_outcomes(b: &Branches) -> Result<WeightedIndex<f64>> {
    let w: Vec<f64> = b
        .kept
        .diag()
        .iter()
        .zip(b.full.diag())
        .flat_map(|(k, f)| [k.re.max(0.0), (f.re - k.re).max(0.0)])
        .collect();
    WeightedIndex::new(&w).map_err(|e| ExpError::Numerical(csmqc::Error::Engine(e.to_string())))
}

fn bell_metrics(
    cfg: &FilteringConfig,
    c: (&Branches, &[Branches]),
    b: (&Branches, &[Branches]),
    ideal: &BTreeMap<String, f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Metrics> {
    let d = cfg.data_qubits;
    match cfg.run.mode {
        Mode::Exact => {
            let cm = Branches::mix(c.0, c.1, cfg.lambda);
            let bm = Branches::mix(b.0, b.1, cfg.lambda);
            let filt = |m: &Branches| -> Result<Option<f64>> {
                normalized(&m.kept).map(|k| tvd(&diagonal_distribution(&k), ideal)).transpose()
            };
            Ok(vec![
                ("tvd_unfiltered", Some(tvd(&diagonal_distribution(&normalized(&cm.full).unwrap()), ideal)?)),
                ("tvd_csmqc", filt(&cm)?),
                ("tvd_baseline", filt(&bm)?),
                ("discard_csmqc", Some(1.0 - cm.kept_fraction())),
                ("discard_baseline", Some(1.0 - bm.kept_fraction())),
            ])
        }
        Mode::Sampled => {
            let sources = shot_sources(cfg.run.shots, cfg.lambda, cfg.placements, rng);
            let mut sample = |(clean, pert): (&Branches, &[Branches])| -> Result<(BTreeMap<String, usize>, BTreeMap<String, usize>)> {
                let clean_d = joint_outcomes(clean)?;
                let pert_d: Vec<_> = pert.iter().map(joint_outcomes).collect::<Result<_>>()?;
                let (mut all, mut kept) = (BTreeMap::new(), BTreeMap::new());
                for s in &sources {
                    let idx = match s {
                        None => clean_d.sample(rng),
                        Some(k) => pert_d[*k].sample(rng),
                    };
                    let key = bitstring(idx / 2, d);
                    if idx % 2 == 0 {
                        *kept.entry(key.clone()).or_insert(0) += 1;
                    }
                    *all.entry(key).or_insert(0) += 1;
                }
                Ok((all, kept))
            };
            let (all_c, kept_c) = sample(c)?;
            let (_, kept_b) = sample(b)?;
            let shots = cfg.run.shots as f64;
            let filt = |k: &BTreeMap<String, usize>| -> Result<Option<f64>> {
                if k.is_empty() {
                    Ok(None)
                } else {
                    tvd_counts(k, ideal).map(Some)
                }
            };
            let kept_frac = |k: &BTreeMap<String, usize>| k.values().sum::<usize>() as f64 / shots;
            Ok(vec![
                ("tvd_unfiltered", Some(tvd_counts(&all_c, ideal)?)),
                ("tvd_csmqc", filt(&kept_c)?),
                ("tvd_baseline", filt(&kept_b)?),
                ("discard_csmqc", Some(1.0 - kept_frac(&kept_c))),
                ("discard_baseline", Some(1.0 - kept_frac(&kept_b))),
            ])
        }
    }
}

/// Pauli expectations estimated from `shots` single-shot ±1 outcomes per
/// label: over all shots and over unflagged shots only.
fn sampled_expectations(
    cfg: &FilteringConfig,
    (clean, pert): (&Branches, &[Branches]),
    rng: &mut ChaCha8Rng,
) -> Result<(BTreeMap<String, f64>, Option<BTreeMap<String, f64>>)> {
    let labels = pauli_labels(cfg.data_qubits);
    let (mut all, mut kept) = (BTreeMap::new(), BTreeMap::new());
    let mut any_kept = true;
    for label in &labels {
        let p = pauli_string_matrix(label)?;
        // weights for (kept,+1), (kept,−1), (flagged,+1), (flagged,−1)
        let joint = |b: &Branches| -> Result<WeightedIndex<f64>> {
            let (tk, pk) = (trace(&b.kept), trace_product(p.matrix(), &b.kept).re);
            let (tf, pf) = (trace(&b.full), trace_product(p.matrix(), &b.full).re);
            let w = [(tk + pk) / 2.0, (tk - pk) / 2.0, (tf - tk + pf - pk) / 2.0, (tf - tk - pf + pk) / 2.0];
            WeightedIndex::new(w.map(|x| x.max(0.0))).map_err(|e| ExpError::Numerical(csmqc::Error::Engine(e.to_string())))
        };
        let clean_d = joint(clean)?;
        let pert_d: Vec<_> = pert.iter().map(joint).collect::<Result<_>>()?;
        let (mut sum_all, mut sum_kept, mut n_kept) = (0i64, 0i64, 0usize);
        for s in shot_sources(cfg.run.shots, cfg.lambda, cfg.placements, rng) {
            let idx = match s {
                None => clean_d.sample(rng),
                Some(k) => pert_d[k].sample(rng),
            };
            let sign = if idx % 2 == 0 { 1 } else { -1 };
            sum_all += sign;
            if idx < 2 {
                sum_kept += sign;
                n_kept += 1;
            }
        }
        all.insert(label.clone(), sum_all as f64 / cfg.run.shots as f64);
        if n_kept == 0 {
            any_kept = false;
        } else {
            kept.insert(label.clone(), sum_kept as f64 / n_kept as f64);
        }
    }
    Ok((all, any_kept.then_some(kept)))
}

fn random_metrics(
    cfg: &FilteringConfig,
    c: (&Branches, &[Branches]),
    b: (&Branches, &[Branches]),
    ideal: &Array2<C64>,
    rng: &mut ChaCha8Rng,
) -> Result<Metrics> {
    let d = cfg.data_qubits;
    // QST states are used as-is; sampled reconstructions carry shot noise
    let fid = |e: &BTreeMap<String, f64>| -> Result<f64> { fidelity(&qst_reconstruct(e, d)?, ideal) };
    match cfg.run.mode {
        Mode::Exact => {
            let cm = Branches::mix(c.0, c.1, cfg.lambda);
            let bm = Branches::mix(b.0, b.1, cfg.lambda);
            let filt = |m: &Branches| -> Result<Option<f64>> {
                normalized(&m.kept).map(|k| fid(&pauli_expectations(&k)?)).transpose()
            };
            Ok(vec![
                ("fidelity_unfiltered", Some(fid(&pauli_expectations(&normalized(&cm.full).unwrap())?)?)),
                ("fidelity_csmqc", filt(&cm)?),
                ("fidelity_baseline", filt(&bm)?),
                ("discard_csmqc", Some(1.0 - cm.kept_fraction())),
                ("discard_baseline", Some(1.0 - bm.kept_fraction())),
            ])
        }
        Mode::Sampled => {
            let (all_c, kept_c) = sampled_expectations(cfg, c, rng)?;
            let (_, kept_b) = sampled_expectations(cfg, b, rng)?;
            let cm = Branches::mix(c.0, c.1, cfg.lambda);
            let bm = Branches::mix(b.0, b.1, cfg.lambda);
            Ok(vec![
                ("fidelity_unfiltered", Some(fid(&all_c)?)),
                ("fidelity_csmqc", kept_c.as_ref().map(fid).transpose()?),
                ("fidelity_baseline", kept_b.as_ref().map(fid).transpose()?),
                ("discard_csmqc", Some(1.0 - cm.kept_fraction())),
                ("discard_baseline", Some(1.0 - bm.kept_fraction())),
            ])
        }
    }
}

struct TrialOut {
    factor: f64,
    period: usize,
    per_m: Vec<Metrics>,
}

fn run_trial(cfg: &FilteringConfig, t: usize, random: bool) -> Result<TrialOut> {
    let setup = Setup::new(cfg, t)?;
    let d = cfg.data_qubits;
    let (task, ideal_rho) = if random {
        let g = random_circuit(d, cfg.window, &mut substream(cfg.run.seed, &[TAG_CIRCUIT, t as u64]));
        let psi = g.unitary(d)?.apply(&StateVector::zero(d))?;
        (Task::Random(g), Some(psi.density().into_matrix()))
    } else {
        (Task::Bell, None)
    };
    let ideal_bits: BTreeMap<String, f64> = [("0".repeat(d), 1.0)].into_iter().collect();
    let tc = setup.build(Detector::Csmqc, &task)?;
    let tb = setup.build(Detector::Baseline, &task)?;
    let clean_c = simulate(&setup, &tc, &[])?;
    let clean_b = simulate(&setup, &tb, &[])?;
    let mut per_m = Vec::new();
    for m in cfg.m_list() {
        let (mut pc, mut pb) = (Vec::new(), Vec::new());
        for k in 0..cfg.placements {
            let mut rng = substream(cfg.run.seed, &[TAG_PLACE, t as u64, m as u64, k as u64]);
            let layers = place_perturbations(cfg.window, m, &mut rng)?.layers;
            pc.push(simulate(&setup, &tc, &layers)?);
            pb.push(simulate(&setup, &tb, &layers)?);
        }
        let mut rng = substream(cfg.run.seed, &[TAG_SHOTS, t as u64, m as u64]);
        let c = (&clean_c, pc.as_slice());
        let b = (&clean_b, pb.as_slice());
        per_m.push(match &ideal_rho {
            Some(rho) => random_metrics(cfg, c, b, rho, &mut rng)?,
            None => bell_metrics(cfg, c, b, &ideal_bits, &mut rng)?,
        });
    }
    Ok(TrialOut { factor: setup.factor, period: setup.period, per_m })
}

fn aggregate(cfg: &FilteringConfig, name: &str, trials: &[TrialOut]) -> ExperimentResult {
    let mut out = ExperimentResult::new(name, &["m"]);
    for (i, m) in cfg.m_list().into_iter().enumerate() {
        for (j, (metric, _)) in trials[0].per_m[i].iter().enumerate() {
            let xs: Vec<f64> = trials.iter().filter_map(|t| t.per_m[i][j].1).collect();
            if xs.is_empty() {
                continue;
            }
            let (v, se) = mean_two_se(&xs);
            out.push(metric, &[Some(m as f64)], v, se, xs.len());
        }
    }
    let periods: Vec<f64> = trials.iter().map(|t| t.period as f64).collect();
    let factors: Vec<f64> = trials.iter().map(|t| t.factor).collect();
    out.summary.insert("baseline_period_mean".into(), mean_two_se(&periods).0);
    out.summary.insert("baseline_period_min".into(), periods.iter().copied().fold(f64::INFINITY, f64::min));
    out.summary.insert("baseline_period_max".into(), periods.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    out.summary.insert("amplification_mean".into(), mean_two_se(&factors).0);
    out.summary.insert("lambda".into(), cfg.lambda);
    out.summary.insert("window".into(), cfg.window as f64);
    out
}

fn run(cfg: &FilteringConfig, name: &str, random: bool) -> Result<ExperimentResult> {
    cfg.validate()?;
    let trials: Vec<TrialOut> = (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t, random)).collect::<Result<_>>()?;
    Ok(aggregate(cfg, name, &trials))
}

/// Bell pair on the data qubits, idle through the window, unprepared and
/// compared with `|0…0⟩` by TVD.
pub fn bell_idt_experiment(cfg: &FilteringConfig) -> Result<ExperimentResult> {
    run(cfg, "bell_idt", false)
}

/// Random circuit on the data qubits inside the window; fidelity of the
/// tomographic reconstruction against the ideal output. One circuit per trial.
pub fn random_circuit_experiment(cfg: &FilteringConfig) -> Result<ExperimentResult> {
    if cfg.data_qubits > 3 {
        return config_err("random-circuit tomography supports at most 3 data qubits");
    }
    run(cfg, "random_circuit", true)
}

/// Flag rate of the constant-period baseline alone, per event count, with
/// the period chosen per trial unless fixed in the configuration.
pub fn constant_period_baseline(cfg: &FilteringConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let per_trial: Vec<(usize, Vec<f64>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<(usize, Vec<f64>)> {
            let setup = Setup::new(cfg, t)?;
            let tb = setup.build(Detector::Baseline, &Task::Empty)?;
            let mut rates = Vec::new();
            for m in std::iter::once(0).chain(cfg.m_list()) {
                let mut acc = 0.0;
                for k in 0..cfg.placements {
                    let mut rng = substream(cfg.run.seed, &[TAG_PLACE, t as u64, m as u64, k as u64]);
                    let layers = place_perturbations(cfg.window, m, &mut rng)?.layers;
                    acc += 1.0 - simulate(&setup, &tb, &layers)?.kept_fraction();
                }
                rates.push(acc / cfg.placements as f64);
            }
            Ok((setup.period, rates))
        })
        .collect::<Result<_>>()?;
    let mut out = ExperimentResult::new("constant_period_baseline", &["m", "period"]);
    let ms: Vec<usize> = std::iter::once(0).chain(cfg.m_list()).collect();
    let same_period = per_trial.iter().all(|(p, _)| *p == per_trial[0].0).then_some(per_trial[0].0 as f64);
    for (i, m) in ms.iter().enumerate() {
        let xs: Vec<f64> = per_trial.iter().map(|(_, r)| r[i]).collect();
        let (v, se) = mean_two_se(&xs);
        out.push("flag_rate", &[Some(*m as f64), same_period], v, se, xs.len());
    }
    let periods: Vec<f64> = per_trial.iter().map(|(p, _)| *p as f64).collect();
    out.summary.insert("period_mean".into(), mean_two_se(&periods).0);
    Ok(out)
}
