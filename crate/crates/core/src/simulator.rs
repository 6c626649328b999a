//! Layered schedule execution on pure-state and density-matrix engines.

use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::Array2;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_channel, Channel, IdleStep, PauliAction};
use crate::error::{invalid, Error, Result};
use crate::operator::{
    apply_local_strided, check_dim, check_targets, conjugate_local, DensityOperator, StateVector,
    C64, ZERO,
};
use crate::protocol::{Gate, GateKind, GateList};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Pure,
    Density,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layer {
    pub gates: Vec<Gate>,
    pub idle: bool,
    /// Indices into the schedule's crosstalk channels, applied in order.
    pub events: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CircuitSchedule {
    pub n_qubits: usize,
    pub layers: Vec<Layer>,
    pub crosstalk: Vec<Channel>,
    pub idle: Option<IdleStep>,
    pub engine: EngineKind,
    /// Layer ranges in which foreign crosstalk may not occur.
    pub protected: Vec<Range<usize>>,
    /// Channels allowed inside protected ranges (e.g. crosstalk from the
    /// protocol's own CNOTs).
    pub exempt: Vec<usize>,
}

impl CircuitSchedule {
    pub fn new(n_qubits: usize, engine: EngineKind) -> Self {
        CircuitSchedule {
            n_qubits,
            layers: Vec::new(),
            crosstalk: Vec::new(),
            idle: None,
            engine,
            protected: Vec::new(),
            exempt: Vec::new(),
        }
    }

    pub fn ensure_layers(&mut self, count: usize) {
        if self.layers.len() < count {
            self.layers.resize_with(count, Layer::default);
        }
    }

    /// Places every gate at `offset + gate.layer`.
    pub fn add_gates(&mut self, gates: &GateList, offset: usize) {
        for g in &gates.gates {
            let l = offset + g.layer;
            self.ensure_layers(l + 1);
            self.layers[l].gates.push(g.clone());
        }
    }

    pub fn add_event(&mut self, layer: usize, channel: usize) {
        self.ensure_layers(layer + 1);
        self.layers[layer].events.push(channel);
    }

    pub fn set_idle_all(&mut self, on: bool) {
        for l in &mut self.layers {
            l.idle = on;
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            for g in &layer.gates {
                if g.qubits.len() != g.kind.arity() {
                    return invalid(format!("layer {i}: wrong operand count for {:?}", g.kind));
                }
                check_targets(&g.qubits, self.n_qubits)?;
            }
            for &e in &layer.events {
                let ch = self
                    .crosstalk
                    .get(e)
                    .ok_or_else(|| Error::InvalidParameter(format!("layer {i}: unknown channel {e}")))?;
                check_dim(1 << self.n_qubits, ch.dim())?;
                if !self.exempt.contains(&e) && self.protected.iter().any(|r| r.contains(&i)) {
                    return invalid(format!("crosstalk event in protected layer {i}"));
                }
            }
        }
        if let Some(idle) = &self.idle {
            check_dim(self.n_qubits, idle.n_qubits())?;
        }
        if self.engine == EngineKind::Pure {
            if self.crosstalk.iter().any(|c| !c.is_unitary()) {
                return Err(Error::Engine("pure engine needs unitary crosstalk channels".into()));
            }
            if self.idle.as_ref().is_some_and(|s| !s.is_unitary()) {
                return Err(Error::Engine("pure engine needs a unitary idle step".into()));
            }
        }
        Ok(())
    }
}

/// Density-engine result: the full state plus the sub-normalized branch in
/// which every mid-circuit measurement returned 0.
#[derive(Clone, Debug)]
pub struct DensityRun {
    pub state: DensityOperator,
    pub zero_branch: Option<Array2<C64>>,
}

impl DensityRun {
    /// Probability that all mid-circuit measurements returned 0.
    pub fn p_all_zero(&self) -> f64 {
        self.zero_branch
            .as_ref()
            .map_or(1.0, |z| z.diag().iter().map(|c| c.re).sum())
    }
}

fn gate_matrix(g: &Gate) -> Result<Array2<C64>> {
    g.kind
        .matrix()
        .ok_or_else(|| Error::Engine("measurement is not a unitary gate".into()))
}

fn apply_gate_density(m: &mut Array2<C64>, n: usize, g: &Gate) -> Result<()> {
    conjugate_local(m, n, &g.qubits, &gate_matrix(g)?);
    Ok(())
}

/// `ρ ↦ Σ_b |0⟩⟨b| ρ |b⟩⟨0|` on qubit `q`.
fn measure_reset_density(m: &Array2<C64>, n: usize, q: usize) -> Array2<C64> {
    let bit = 1usize << (n - 1 - q);
    let mut out = Array2::<C64>::zeros(m.dim());
    for ((a, b), v) in m.indexed_iter() {
        if (a & bit) == (b & bit) {
            out[[a & !bit, b & !bit]] += *v;
        }
    }
    out
}

fn project_zero(m: &mut Array2<C64>, n: usize, q: usize) {
    let bit = 1usize << (n - 1 - q);
    for ((a, b), v) in m.indexed_iter_mut() {
        if a & bit != 0 || b & bit != 0 {
            *v = ZERO;
        }
    }
}

fn apply_channel_matrix(ch: &Channel, m: &mut Array2<C64>) -> Result<()> {
    let rho = DensityOperator::from_raw(std::mem::take(m));
    *m = apply_channel(ch, &rho)?.into_matrix();
    Ok(())
}

/// Runs the schedule on a density operator.
pub fn evolve_density(s: &CircuitSchedule, init: &DensityOperator) -> Result<DensityRun> {
    s.validate()?;
    check_dim(1 << s.n_qubits, init.dim())?;
    let n = s.n_qubits;
    let mut rho = init.matrix().clone();
    let mut zero: Option<Array2<C64>> = None;
    for layer in &s.layers {
        for g in &layer.gates {
            if g.kind == GateKind::MeasureReset {
                let q = g.qubits[0];
                let z = zero.get_or_insert_with(|| rho.clone());
                project_zero(z, n, q);
                rho = measure_reset_density(&rho, n, q);
            } else {
                apply_gate_density(&mut rho, n, g)?;
                if let Some(z) = zero.as_mut() {
                    apply_gate_density(z, n, g)?;
                }
            }
        }
        if layer.idle {
            if let Some(idle) = &s.idle {
                idle.apply_matrix(&mut rho);
                if let Some(z) = zero.as_mut() {
                    idle.apply_matrix(z);
                }
            }
        }
        for &e in &layer.events {
            apply_channel_matrix(&s.crosstalk[e], &mut rho)?;
            if let Some(z) = zero.as_mut() {
                apply_channel_matrix(&s.crosstalk[e], z)?;
            }
        }
    }
    Ok(DensityRun { state: DensityOperator::from_raw(rho), zero_branch: zero })
}

fn apply_unitary_pure(psi: &mut StateVector, targets: &[usize], m: &Array2<C64>) {
    let n = psi.n_qubits();
    let data = psi.amplitudes_mut().as_slice_mut().expect("contiguous state");
    apply_local_strided(data, n, targets, m, 0, 1);
}

/// Runs a measurement-free schedule on a state vector.
pub fn evolve_pure(s: &CircuitSchedule, init: &StateVector) -> Result<StateVector> {
    if s.layers.iter().any(|l| l.gates.iter().any(|g| g.kind == GateKind::MeasureReset)) {
        return Err(Error::Engine("mid-circuit measurement needs the sampled pure path".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::from_seed_zero();
    evolve_pure_sampled(s, init, &mut rng).map(|(psi, _)| psi)
}

trait FromSeedZero {
    fn from_seed_zero() -> Self;
}

impl FromSeedZero for rand_chacha::ChaCha8Rng {
    fn from_seed_zero() -> Self {
        rand::SeedableRng::from_seed([0; 32])
    }
}

/// Pure-state run; mid-circuit measurements collapse the state and their
/// outcomes are returned in order.
pub fn evolve_pure_sampled<R: Rng>(
    s: &CircuitSchedule,
    init: &StateVector,
    rng: &mut R,
) -> Result<(StateVector, Vec<u8>)> {
    s.validate()?;
    if s.engine != EngineKind::Pure {
        return Err(Error::Engine("schedule is not marked for the pure engine".into()));
    }
    check_dim(1 << s.n_qubits, init.dim())?;
    let n = s.n_qubits;
    let mut psi = init.clone();
    let mut outcomes = Vec::new();
    for layer in &s.layers {
        for g in &layer.gates {
            if g.kind == GateKind::MeasureReset {
                outcomes.push(measure_reset_pure(&mut psi, n, g.qubits[0], rng));
            } else {
                apply_unitary_pure(&mut psi, &g.qubits, &gate_matrix(g)?);
            }
        }
        if layer.idle {
            if let Some(idle) = &s.idle {
                idle.apply_pure(&mut psi)?;
            }
        }
        for &e in &layer.events {
            match &s.crosstalk[e] {
                Channel::Unitary(u) => {
                    let v = u.matrix().dot(psi.amplitudes());
                    *psi.amplitudes_mut() = v;
                }
                _ => return Err(Error::Engine("non-unitary channel on pure engine".into())),
            }
        }
    }
    Ok((psi, outcomes))
}

fn measure_reset_pure<R: Rng>(psi: &mut StateVector, n: usize, q: usize, rng: &mut R) -> u8 {
    let bit = 1usize << (n - 1 - q);
    let amps = psi.amplitudes_mut();
    let p1: f64 = amps.iter().enumerate().filter(|(i, _)| i & bit != 0).map(|(_, a)| a.norm_sqr()).sum();
    let outcome = u8::from(rng.random::<f64>() < p1);
    let keep = if outcome == 1 { p1 } else { 1.0 - p1 };
    let scale = 1.0 / keep.max(1e-300).sqrt();
    let mut next = ndarray::Array1::<C64>::zeros(amps.len());
    for (i, a) in amps.iter().enumerate() {
        if (i & bit != 0) == (outcome == 1) {
            next[i & !bit] = *a * scale;
        }
    }
    *amps = next;
    outcome
}

/// Either engine's state.
#[derive(Clone, Debug)]
pub enum State {
    Pure(StateVector),
    Mixed(DensityOperator),
}

impl State {
    pub fn n_qubits(&self) -> usize {
        match self {
            State::Pure(p) => p.n_qubits(),
            State::Mixed(r) => r.n_qubits(),
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            State::Pure(p) => p.probabilities(),
            State::Mixed(r) => r.probabilities(),
        }
    }

    pub fn to_density(&self) -> DensityOperator {
        match self {
            State::Pure(p) => p.density(),
            State::Mixed(r) => r.clone(),
        }
    }
}

/// Dispatches on the schedule's engine; measurement branches are dropped.
pub fn evolve(s: &CircuitSchedule, init: &State) -> Result<State> {
    match (s.engine, init) {
        (EngineKind::Pure, State::Pure(p)) => Ok(State::Pure(evolve_pure(s, p)?)),
        (EngineKind::Pure, State::Mixed(_)) => Err(Error::Engine("pure engine needs a state vector".into())),
        (EngineKind::Density, st) => Ok(State::Mixed(evolve_density(s, &st.to_density())?.state)),
    }
}

fn bitstring(idx: usize, n: usize, qubits: &[usize]) -> String {
    qubits
        .iter()
        .map(|&q| if (idx >> (n - 1 - q)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Exact marginal distribution over `qubits`, keyed by bitstring in the
/// given qubit order.
pub fn exact_probabilities(state: &State, qubits: &[usize]) -> Result<BTreeMap<String, f64>> {
    let n = state.n_qubits();
    check_targets(qubits, n)?;
    let mut out = BTreeMap::new();
    for (i, p) in state.probabilities().into_iter().enumerate() {
        *out.entry(bitstring(i, n, qubits)).or_insert(0.0) += p;
    }
    Ok(out)
}

/// Multinomial samples from the Born distribution.
pub fn sample_measurement<R: Rng>(
    state: &State,
    qubits: &[usize],
    shots: usize,
    rng: &mut R,
) -> Result<BTreeMap<String, usize>> {
    if shots == 0 {
        return invalid("shots must be at least 1");
    }
    let probs = exact_probabilities(state, qubits)?;
    let keys: Vec<&String> = probs.keys().collect();
    let weights: Vec<f64> = probs.values().map(|p| p.max(0.0)).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Engine(e.to_string()))?;
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        *counts.entry(keys[dist.sample(rng)].clone()).or_insert(0) += 1;
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationPattern {
    pub window: usize,
    pub layers: Vec<usize>,
}

impl PerturbationPattern {
    pub fn m(&self) -> usize {
        self.layers.len()
    }
}

/// `m` distinct layers drawn uniformly from `0..window`, sorted.
pub fn place_perturbations<R: Rng>(window: usize, m: usize, rng: &mut R) -> Result<PerturbationPattern> {
    if m > window {
        return invalid(format!("cannot place {m} events in {window} layers"));
    }
    let mut layers = rand::seq::index::sample(rng, window, m).into_vec();
    layers.sort_unstable();
    Ok(PerturbationPattern { window, layers })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub bits: String,
    pub flag: u8,
    pub perturbed: bool,
}

/// Keeps shots whose flag reads 0; returns them with the discarded fraction.
pub fn postselect(records: &[ShotRecord]) -> (Vec<ShotRecord>, f64) {
    let kept: Vec<ShotRecord> = records.iter().filter(|r| r.flag == 0).cloned().collect();
    let discard = if records.is_empty() {
        0.0
    } else {
        1.0 - kept.len() as f64 / records.len() as f64
    };
    (kept, discard)
}

/// Reduced state on `keep`, with qubits in the given order.
pub fn partial_trace(rho: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    Ok(DensityOperator::from_raw(partial_trace_matrix(rho.matrix(), rho.n_qubits(), keep)?))
}

pub fn partial_trace_matrix(m: &Array2<C64>, n: usize, keep: &[usize]) -> Result<Array2<C64>> {
    check_targets(keep, n)?;
    let k = keep.len();
    let kd = 1usize << k;
    let kmask: usize = keep.iter().map(|&q| 1usize << (n - 1 - q)).sum();
    let local = |idx: usize| -> usize {
        keep.iter()
            .enumerate()
            .map(|(pos, &q)| ((idx >> (n - 1 - q)) & 1) << (k - 1 - pos))
            .sum()
    };
    let mut out = Array2::<C64>::zeros((kd, kd));
    for ((a, b), v) in m.indexed_iter() {
        if a & !kmask == b & !kmask {
            out[[local(a), local(b)]] += *v;
        }
    }
    Ok(out)
}

/// `tr(P ρ)` for a full-register Pauli label.
pub fn pauli_expectation(rho: &DensityOperator, label: &str) -> Result<f64> {
    Ok(pauli_trace(rho.matrix(), label)?.re)
}

pub(crate) fn pauli_trace(m: &Array2<C64>, label: &str) -> Result<C64> {
    if label.is_empty() || !label.chars().all(|c| "IXYZ".contains(c)) {
        return Err(Error::InvalidPauli(label.to_string()));
    }
    check_dim(m.nrows(), 1usize << label.len())?;
    let p = PauliAction::parse(label);
    let x = p.flip();
    Ok((0..m.nrows()).map(|b| p.coef(b ^ x) * m[[b ^ x, b]]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{adjoint, pauli_string_matrix, Operator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_density(rng: &mut impl Rng, d: usize) -> DensityOperator {
        let a = Array2::from_shape_fn((d, d), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = a.dot(&adjoint(&a));
        let tr = m.diag().sum();
        DensityOperator::new(m.mapv(|z| z / tr)).unwrap()
    }

    fn random_pure(rng: &mut impl Rng, n: usize) -> StateVector {
        let amps: Vec<C64> = (0..1 << n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        StateVector::normalized(ndarray::Array1::from(amps)).unwrap()
    }

    #[test]
    fn empty_and_single_gate() {
        let s = CircuitSchedule::new(2, EngineKind::Pure);
        let psi = StateVector::zero(2);
        assert_eq!(evolve_pure(&s, &psi).unwrap(), psi);
        let mut s = CircuitSchedule::new(1, EngineKind::Pure);
        let mut g = GateList::default();
        g.push(0, GateKind::X, vec![0]);
        s.add_gates(&g, 0);
        let out = evolve_pure(&s, &StateVector::zero(1)).unwrap();
        assert!((out.amplitudes()[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn engines_agree_on_unitary_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 3;
        let mut g = GateList::default();
        g.push(0, GateKind::H, vec![0]);
        g.push(1, GateKind::Cnot, vec![0, 2]);
        g.push(2, GateKind::T, vec![1]);
        g.push(2, GateKind::Rot { axis: [0.6, 0.0, 0.8], angle: 0.7 }, vec![2]);
        let mut s = CircuitSchedule::new(n, EngineKind::Pure);
        s.add_gates(&g, 0);
        let u = crate::crosstalk::synthetic_crosstalk_unitary(
            &crate::crosstalk::CrosstalkSpec {
                single_axes: crate::crosstalk::sample_random_axes(n, 0, 3).0,
                pair_axes: vec![],
                pairs: vec![],
                theta: 0.2,
                phi: 0.0,
            },
            n,
        )
        .unwrap();
        s.crosstalk.push(Channel::Unitary(u));
        s.add_event(1, 0);
        let psi = random_pure(&mut rng, n);
        let pure = evolve_pure(&s, &psi).unwrap();
        let mut sd = s.clone();
        sd.engine = EngineKind::Density;
        let mixed = evolve_density(&sd, &psi.density()).unwrap().state;
        let fid = (0..8)
            .flat_map(|a| (0..8).map(move |b| (a, b)))
            .map(|(a, b)| pure.amplitudes()[a].conj() * mixed.matrix()[[a, b]] * pure.amplitudes()[b])
            .sum::<C64>();
        assert!((fid.re - 1.0).abs() < 1e-10);
        assert!((pure.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pure_engine_rejects_dissipation() {
        let mut s = CircuitSchedule::new(1, EngineKind::Pure);
        s.crosstalk.push(Channel::Kraus(crate::channels::dephasing_channel(0.1, 1).unwrap()));
        s.add_event(0, 0);
        assert!(matches!(evolve_pure(&s, &StateVector::zero(1)), Err(Error::Engine(_))));
    }

    #[test]
    fn protected_windows_are_enforced() {
        let mut s = CircuitSchedule::new(1, EngineKind::Density);
        s.crosstalk.push(Channel::Unitary(Operator::identity(2)));
        s.add_event(1, 0);
        s.protected.push(0..2);
        assert!(s.validate().is_err());
        s.exempt.push(0);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn density_evolution_preserves_trace_and_hermiticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = crate::channels::IdleNoiseParams::new(20.0, 15.0, 1.0, 0.3).unwrap();
        let mut s = CircuitSchedule::new(3, EngineKind::Density);
        s.idle = Some(IdleStep::new(&p, 3, &crate::channels::chain_pairs(3)).unwrap());
        let mut g = GateList::default();
        for l in 0..4 {
            g.push(l, GateKind::H, vec![l % 3]);
            g.push(l, GateKind::Cnot, vec![(l + 1) % 3, (l + 2) % 3]);
        }
        s.add_gates(&g, 0);
        s.set_idle_all(true);
        let rho = random_density(&mut rng, 8);
        let out = evolve_density(&s, &rho).unwrap().state;
        assert!((out.trace() - 1.0).abs() < 1e-9);
        assert!(crate::operator::max_abs_diff(out.matrix(), &adjoint(out.matrix())) < 1e-9);
    }

    #[test]
    fn measure_reset_branches() {
        // |+⟩ then measure-reset: full state |0⟩, zero branch weight 1/2.
        let mut s = CircuitSchedule::new(1, EngineKind::Density);
        let mut g = GateList::default();
        g.push(0, GateKind::H, vec![0]);
        g.push(1, GateKind::MeasureReset, vec![0]);
        s.add_gates(&g, 0);
        let run = evolve_density(&s, &DensityOperator::zero(1)).unwrap();
        assert!(run.state.max_abs_diff(&DensityOperator::zero(1)) < 1e-15);
        assert!((run.p_all_zero() - 0.5).abs() < 1e-15);
        let mut sp = s.clone();
        sp.engine = EngineKind::Pure;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ones = 0;
        for _ in 0..2000 {
            let (psi, out) = evolve_pure_sampled(&sp, &StateVector::zero(1), &mut rng).unwrap();
            ones += out[0] as usize;
            assert!((psi.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        }
        assert!((ones as f64 / 2000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let zero = State::Pure(StateVector::zero(1));
        let c = sample_measurement(&zero, &[0], 100, &mut rng).unwrap();
        assert_eq!(c.get("0"), Some(&100));
        let plus = StateVector::normalized(ndarray::Array1::from(vec![C64::new(1.0, 0.0); 2])).unwrap();
        let c = sample_measurement(&State::Pure(plus), &[0], 100_000, &mut rng).unwrap();
        let f = c["0"] as f64 / 1e5;
        assert!((f - 0.5).abs() < 0.005);
        assert!(sample_measurement(&zero, &[0], 0, &mut rng).is_err());
    }

    #[test]
    fn sampling_matches_born_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random_pure(&mut rng, 2);
        let st = State::Pure(psi.clone());
        let shots = 50_000;
        let c = sample_measurement(&st, &[0, 1], shots, &mut rng).unwrap();
        let mut chi2 = 0.0;
        for (i, key) in ["00", "01", "10", "11"].iter().enumerate() {
            let e = psi.amplitudes()[i].norm_sqr() * shots as f64;
            let o = *c.get(*key).unwrap_or(&0) as f64;
            chi2 += (o - e).powi(2) / e;
        }
        // 3 degrees of freedom, p = 0.001 critical value.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let psi = State::Pure(StateVector::normalized(ndarray::Array1::from(vec![C64::new(1.0, 0.0); 4])).unwrap());
        let a = sample_measurement(&psi, &[0, 1], 1000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_measurement(&psi, &[0, 1], 1000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perturbation_placement() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(place_perturbations(5, 0, &mut rng).unwrap().layers.is_empty());
        assert_eq!(place_perturbations(5, 5, &mut rng).unwrap().layers, vec![0, 1, 2, 3, 4]);
        assert!(place_perturbations(3, 4, &mut rng).is_err());
        let (window, m, draws) = (8usize, 3usize, 10_000usize);
        let mut occ = vec![0usize; window];
        for _ in 0..draws {
            for l in place_perturbations(window, m, &mut rng).unwrap().layers {
                occ[l] += 1;
            }
        }
        let p = m as f64 / window as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for o in occ {
            assert!((o as f64 - mean).abs() < 3.0 * sd + 1.0, "{o} vs {mean}");
        }
    }

    #[test]
    fn postselection() {
        let r = |f: u8| ShotRecord { bits: "00".into(), flag: f, perturbed: f == 1 };
        let all = vec![r(0), r(0)];
        assert_eq!(postselect(&all).1, 0.0);
        let alt = vec![r(0), r(1), r(0), r(1)];
        let (kept, d) = postselect(&alt);
        assert_eq!(kept.len(), 2);
        assert_eq!(d, 0.5);
    }

    #[test]
    fn partial_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 4);
        let ab = a.tensor(&b);
        assert!(partial_trace(&ab, &[0]).unwrap().max_abs_diff(&a) < 1e-14);
        assert!(partial_trace(&ab, &[1, 2]).unwrap().max_abs_diff(&b) < 1e-14);
        let bell = StateVector::normalized(ndarray::Array1::from(vec![
            C64::new(1.0, 0.0), ZERO, ZERO, C64::new(1.0, 0.0),
        ]))
        .unwrap()
        .density();
        assert!(partial_trace(&bell, &[1]).unwrap().max_abs_diff(&DensityOperator::maximally_mixed(1)) < 1e-15);
    }

    #[test]
    fn pauli_expectations_match_matrix_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random_density(&mut rng, 8);
        for label in ["XYZ", "IIX", "YYI", "ZIZ", "III"] {
            let p = pauli_string_matrix(label).unwrap();
            let direct = p.matrix().dot(rho.matrix()).diag().sum();
            let fast = pauli_trace(rho.matrix(), label).unwrap();
            assert!((direct - fast).norm() < 1e-14);
            assert!(fast.im.abs() < 1e-10);
        }
        for i in 0..3 {
            let label: String = (0..3).map(|q| if q == i { 'X' } else { 'I' }).collect();
            let full = pauli_expectation(&rho, &label).unwrap();
            let red = pauli_expectation(&partial_trace(&rho, &[i]).unwrap(), "X").unwrap();
            assert!((full - red).abs() < 1e-12);
        }
    }
}
