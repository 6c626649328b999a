//! Synthetic crosstalk unitaries, HSA parameter sets and device geometry.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channels::{
    build_lindbladian, exponentiate_generator, Channel, GeneratorKind, GeneratorTerm,
    LindbladGenerator,
};
use crate::error::{invalid, Error, Result};
use crate::operator::{
    check_unit_axis, kron, pauli, Operator, SuperOperator, C64, I,
};

const PAIR_PAULIS: [(char, char); 9] = [
    ('X', 'X'), ('X', 'Y'), ('X', 'Z'),
    ('Y', 'X'), ('Y', 'Y'), ('Y', 'Z'),
    ('Z', 'X'), ('Z', 'Y'), ('Z', 'Z'),
];

/// Coherent crosstalk: per-qubit axes, per-pair 9-component axes, and the
/// generator coefficients θ and φ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkSpec {
    pub single_axes: Vec<[f64; 3]>,
    pub pair_axes: Vec<[f64; 9]>,
    pub pairs: Vec<(usize, usize)>,
    pub theta: f64,
    pub phi: f64,
}

impl CrosstalkSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.single_axes.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.single_axes.len() });
        }
        if self.pair_axes.len() != self.pairs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.pairs.len(),
                found: self.pair_axes.len(),
            });
        }
        if !(self.theta >= 0.0 && self.phi >= 0.0) {
            return invalid("theta and phi must be nonnegative");
        }
        for a in &self.single_axes {
            check_unit_axis(a)?;
        }
        for a in &self.pair_axes {
            check_unit_axis(a)?;
        }
        for &(i, j) in &self.pairs {
            if i >= n || j >= n || i == j {
                return invalid(format!("bad crosstalk pair ({i}, {j})"));
            }
        }
        Ok(())
    }

    /// Hermitian generator `θ Σ n̂ᵢ·σᵢ + φ Σ m̂ᵢⱼ·σᵢⱼ`.
    pub fn hamiltonian(&self, n: usize) -> Result<Operator> {
        self.validate(n)?;
        let d = 1usize << n;
        let mut h = ndarray::Array2::<C64>::zeros((d, d));
        if self.theta != 0.0 {
            for (q, a) in self.single_axes.iter().enumerate() {
                let local = crate::operator::pauli_vector_dot(*a);
                let full = local.embed(&[q], n)?;
                h.scaled_add(C64::new(self.theta, 0.0), full.matrix());
            }
        }
        if self.phi != 0.0 {
            for (&(i, j), m) in self.pairs.iter().zip(&self.pair_axes) {
                let mut local = ndarray::Array2::<C64>::zeros((4, 4));
                for (w, &(a, b)) in m.iter().zip(PAIR_PAULIS.iter()) {
                    local.scaled_add(C64::new(*w, 0.0), &kron(&pauli(a)?, &pauli(b)?));
                }
                let full = Operator::new(local)?.embed(&[i, j], n)?;
                h.scaled_add(C64::new(self.phi, 0.0), full.matrix());
            }
        }
        Operator::new(h)
    }
}

fn random_unit<const N: usize>(rng: &mut ChaCha8Rng) -> [f64; N] {
    loop {
        let mut v = [0.0; N];
        for x in v.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.map(|x| x / norm);
        }
    }
}

/// Uniformly distributed unit axes, one 3-vector per qubit and one 9-vector
/// per pair.
pub fn sample_random_axes(n_qubits: usize, n_pairs: usize, seed: u64) -> (Vec<[f64; 3]>, Vec<[f64; 9]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let singles = (0..n_qubits).map(|_| random_unit::<3>(&mut rng)).collect();
    let pairs = (0..n_pairs).map(|_| random_unit::<9>(&mut rng)).collect();
    (singles, pairs)
}

/// `exp(−iθ Σ n̂ᵢ·σᵢ − iφ Σ m̂ᵢⱼ·σᵢⱼ)`.
pub fn synthetic_crosstalk_unitary(spec: &CrosstalkSpec, n: usize) -> Result<Operator> {
    let h = spec.hamiltonian(n)?;
    h.scale(-I).exp()
}

/// One HSA coefficient on a target set. `pauli` is local to `targets`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsaEntry {
    pub targets: Vec<usize>,
    pub kind: GeneratorKind,
    pub pauli: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pauli2: Option<String>,
    pub coeff: f64,
}

impl HsaEntry {
    pub fn new(targets: &[usize], kind: GeneratorKind, pauli: &str, pauli2: Option<&str>, coeff: f64) -> Self {
        HsaEntry {
            targets: targets.to_vec(),
            kind,
            pauli: pauli.to_string(),
            pauli2: pauli2.map(str::to_string),
            coeff,
        }
    }

    pub fn is_single(&self) -> bool {
        self.targets.len() == 1
    }

    fn full_label(&self, label: &str, n: usize) -> String {
        let mut out = vec!['I'; n];
        for (&t, c) in self.targets.iter().zip(label.chars()) {
            out[t] = c;
        }
        out.into_iter().collect()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.targets.is_empty() || self.targets.len() > 2 {
            return invalid("targets must list one or two qubits");
        }
        crate::operator::check_targets(&self.targets, n)?;
        if self.pauli.chars().count() != self.targets.len() {
            return invalid(format!(
                "label {:?} does not match {} target(s)",
                self.pauli,
                self.targets.len()
            ));
        }
        if let Some(q) = &self.pauli2 {
            if q.chars().count() != self.targets.len() {
                return invalid(format!("label {q:?} does not match targets"));
            }
        }
        self.to_term(n).map(|_| ())
    }

    pub fn to_term(&self, n: usize) -> Result<GeneratorTerm> {
        let p = self.full_label(&self.pauli, n);
        let q = self.pauli2.as_ref().map(|q| self.full_label(q, n));
        GeneratorTerm::new(self.kind, &p, q.as_deref(), self.coeff)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HsaMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_pair: Option<[usize; 2]>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Crosstalk parameters of one gate in the HSA model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HsaParameterSet {
    pub entries: Vec<HsaEntry>,
    #[serde(default)]
    pub metadata: HsaMetadata,
}

impl HsaParameterSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: HsaParameterSet = serde_json::from_str(text)?;
        let n = p.max_qubit().map_or(1, |m| m + 1);
        p.validate(n)?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.entries.iter().flat_map(|e| e.targets.iter().copied()).max()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.entries.iter().try_for_each(|e| e.validate(n))
    }

    pub fn to_generator(&self, n: usize) -> Result<LindbladGenerator> {
        let mut g = LindbladGenerator::new();
        for e in &self.entries {
            e.validate(n)?;
            g.push(e.to_term(n)?);
        }
        Ok(g)
    }
}

/// One crosstalk event `e^ℒ` as a dense superoperator.
pub fn hsa_crosstalk_channel(params: &HsaParameterSet, dim: usize) -> Result<SuperOperator> {
    let n = crate::operator::qubits_for_dim(dim)?;
    build_lindbladian(&params.to_generator(n)?, dim)?.exp()
}

/// Same event, kept unitary when only H terms are present.
pub fn hsa_crosstalk(params: &HsaParameterSet, n: usize) -> Result<Channel> {
    exponentiate_generator(&params.to_generator(n)?, 1 << n, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplifyMode {
    All,
    SingleHOnly,
}

pub fn amplify_parameters(params: &HsaParameterSet, factor: f64, mode: AmplifyMode) -> Result<HsaParameterSet> {
    if !(factor > 0.0 && factor.is_finite()) {
        return invalid(format!("amplification factor must be positive, got {factor}"));
    }
    let mut out = params.clone();
    for e in &mut out.entries {
        let scale = match mode {
            AmplifyMode::All => true,
            AmplifyMode::SingleHOnly => e.kind == GeneratorKind::H && e.is_single(),
        };
        if scale {
            e.coeff *= factor;
        }
    }
    Ok(out)
}

/// Mean per-spectator Bloch angle per event, estimated from simulated
/// trajectories.
pub fn mean_spectator_delta(params: &HsaParameterSet, n: usize, spectators: &[usize]) -> Result<f64> {
    let ch = hsa_crosstalk(params, n)?;
    let mut sum = 0.0;
    for &s in spectators {
        sum += crate::characterize::characterize_qubit(&ch, n, s)?.delta;
    }
    Ok(sum / spectators.len() as f64)
}

/// Factor (applied in `All` mode) that brings the mean spectator angle per
/// event to `target_delta`.
pub fn calibrate_amplification(
    params: &HsaParameterSet,
    target_delta: f64,
    n: usize,
    spectators: &[usize],
) -> Result<f64> {
    calibrate_amplification_with(params, target_delta, n, spectators, AmplifyMode::All)
}

/// As [`calibrate_amplification`], scaling only what `mode` selects.
pub fn calibrate_amplification_with(
    params: &HsaParameterSet,
    target_delta: f64,
    n: usize,
    spectators: &[usize],
    mode: AmplifyMode,
) -> Result<f64> {
    if spectators.is_empty() {
        return invalid("no spectators to calibrate on");
    }
    if !(target_delta > 0.0 && target_delta < std::f64::consts::FRAC_PI_2) {
        return invalid(format!("target angle {target_delta} outside (0, π/2)"));
    }
    let at = |f: f64| -> Result<f64> {
        mean_spectator_delta(&amplify_parameters(params, f, mode)?, n, spectators)
    };
    let base = match at(1.0) {
        Ok(d) if d > 1e-12 => d,
        Ok(_) | Err(Error::Degenerate(_)) => {
            return Err(Error::Degenerate("parameters induce no spectator rotation".into()))
        }
        Err(e) => return Err(e),
    };
    // Secant from the small-angle estimate; the angle is nearly linear in
    // the factor, so this usually settles in a few evaluations.
    let guess = target_delta / base;
    let (mut f0, mut d0) = (1.0, base);
    let mut f1 = guess;
    for _ in 0..12 {
        let d1 = match at(f1) {
            Ok(d) => d,
            Err(Error::Degenerate(_)) => break,
            Err(e) => return Err(e),
        };
        if (d1 - target_delta).abs() < 1e-6 {
            return Ok(f1);
        }
        let slope = (d1 - d0) / (f1 - f0);
        if !(slope.is_finite() && slope > 0.0) {
            break;
        }
        let next = f1 + (target_delta - d1) / slope;
        if !(next.is_finite() && next > 0.0) {
            break;
        }
        (f0, d0, f1) = (f1, d1, next);
    }
    // Fall back to bracketing and bisection.

    let (mut lo, mut hi) = (guess * 0.5, guess * 1.5);
    let mut tries = 0;
    while at(lo)? > target_delta {
        lo *= 0.5;
        tries += 1;
        if tries > 40 {
            return Err(Error::Engine("calibration failed to bracket".into()));
        }
    }
    while at(hi)? < target_delta {
        hi *= 1.5;
        tries += 1;
        if tries > 40 {
            return Err(Error::Engine("calibration failed to bracket".into()));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let d = at(mid)?;
        if (d - target_delta).abs() < 1e-6 {
            return Ok(mid);
        }
        if d < target_delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn l2_norm(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Coupling graph and the action qubit pair of the crosstalking gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceGeometry {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub action: [usize; 2],
}

impl DeviceGeometry {
    pub fn chain(n: usize, action: [usize; 2]) -> Self {
        DeviceGeometry { n, edges: (1..n).map(|j| [j - 1, j]).collect(), action }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: DeviceGeometry = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for &[a, b] in &self.edges {
            if a >= self.n || b >= self.n || a == b {
                return invalid(format!("bad edge ({a}, {b})"));
            }
        }
        let [a1, a2] = self.action;
        if a1 >= self.n || a2 >= self.n || a1 == a2 {
            return invalid("action pair must be two distinct qubits");
        }
        Ok(())
    }

    /// BFS distances from `src`; `None` for unreachable vertices.
    pub fn distances_from(&self, src: usize) -> Vec<Option<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &[a, b] in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut dist = vec![None; self.n];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn path_length(&self, a: usize, b: usize) -> Result<usize> {
        if a >= self.n || b >= self.n {
            return invalid(format!("qubit out of range for {}-qubit device", self.n));
        }
        self.distances_from(a)[b]
            .ok_or_else(|| Error::Degenerate(format!("qubits {a} and {b} are disconnected")))
    }
}

/// Shortest distance from `v` to the action pair.
pub fn distance_single(g: &DeviceGeometry, v: usize) -> Result<usize> {
    let [a1, a2] = g.action;
    let d1 = g.path_length(a1, v);
    let d2 = g.path_length(a2, v);
    match (d1, d2) {
        (Ok(x), Ok(y)) => Ok(x.min(y)),
        (Ok(x), Err(_)) | (Err(_), Ok(x)) => Ok(x),
        (Err(e), Err(_)) => Err(e),
    }
}

/// Minimum action-to-target distance times the path length between targets.
pub fn distance_double(g: &DeviceGeometry, t1: usize, t2: usize) -> Result<usize> {
    let near = distance_single(g, t1)?.min(distance_single(g, t2)?);
    Ok(near * g.path_length(t1, t2)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MagnitudeRow {
    pub kind: GeneratorKind,
    /// 1 for single-qubit target sets, 2 for pairs.
    pub weight: usize,
    pub distance: usize,
    pub mean_norm: f64,
    pub count: usize,
}

/// Mean ‖ε‖₂ per channel kind, target weight and distance, where each norm
/// collects the coefficients of one kind on one target set.
pub fn magnitude_vs_distance(params: &HsaParameterSet, g: &DeviceGeometry) -> Result<Vec<MagnitudeRow>> {
    let mut per_set: BTreeMap<(GeneratorKind, Vec<usize>), Vec<f64>> = BTreeMap::new();
    for e in &params.entries {
        let mut t = e.targets.clone();
        t.sort_unstable();
        per_set.entry((e.kind, t)).or_default().push(e.coeff);
    }
    let mut grouped: BTreeMap<(GeneratorKind, usize, usize), (f64, usize)> = BTreeMap::new();
    for ((kind, targets), coeffs) in per_set {
        let d = match targets.as_slice() {
            [v] => distance_single(g, *v)?,
            [a, b] => distance_double(g, *a, *b)?,
            _ => return invalid("target sets must have one or two qubits"),
        };
        let slot = grouped.entry((kind, targets.len(), d)).or_insert((0.0, 0));
        slot.0 += l2_norm(&coeffs);
        slot.1 += 1;
    }
    Ok(grouped
        .into_iter()
        .map(|((kind, weight, distance), (sum, count))| MagnitudeRow {
            kind,
            weight,
            distance,
            mean_norm: sum / count as f64,
            count,
        })
        .collect())
}
