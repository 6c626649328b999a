//! Spectator planning, modified-GHZ circuits, decoupling pulses and the
//! closed-form detection arithmetic.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::{
    check_unit_axis, pauli_string_matrix, rotation_operator, rotation_unchecked, tensor_all,
    Operator, StateVector, C64, I, ONE, ZERO,
};

const TIE_TOL: f64 = 1e-12;
const EXHAUSTIVE_LIMIT: usize = 20;

/// Candidate spectator: device qubit, its crosstalk axis and angle per event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectatorCandidate {
    pub qubit: usize,
    pub axis: [f64; 3],
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectatorPlan {
    pub qubits: Vec<usize>,
    pub axes: Vec<[f64; 3]>,
    pub deltas: Vec<f64>,
    pub target_angle: f64,
    pub residual: f64,
}

impl SpectatorPlan {
    pub fn new(qubits: Vec<usize>, axes: Vec<[f64; 3]>, deltas: Vec<f64>, target_angle: f64) -> Result<Self> {
        if qubits.is_empty() {
            return invalid("a plan needs at least one spectator");
        }
        if axes.len() != qubits.len() || deltas.len() != qubits.len() {
            return Err(Error::DimensionMismatch { expected: qubits.len(), found: axes.len().min(deltas.len()) });
        }
        for a in &axes {
            check_unit_axis(a)?;
        }
        if deltas.iter().any(|d| !(*d > 0.0)) {
            return invalid("spectator angles must be positive");
        }
        for (i, q) in qubits.iter().enumerate() {
            if qubits[..i].contains(q) {
                return invalid(format!("qubit {q} listed twice"));
            }
        }
        let residual = (deltas.iter().sum::<f64>() - target_angle).abs();
        Ok(SpectatorPlan { qubits, axes, deltas, target_angle, residual })
    }

    pub fn from_candidates(cands: &[SpectatorCandidate], target_angle: f64) -> Result<Self> {
        Self::new(
            cands.iter().map(|c| c.qubit).collect(),
            cands.iter().map(|c| c.axis).collect(),
            cands.iter().map(|c| c.delta).collect(),
            target_angle,
        )
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub fn total_angle(&self) -> f64 {
        self.deltas.iter().sum()
    }

    /// The spectator that carries the detection flag after inversion.
    pub fn flag_qubit(&self) -> usize {
        self.qubits[0]
    }

    /// Same plan with spectators renumbered `0..n` in plan order.
    pub fn localized(&self) -> SpectatorPlan {
        SpectatorPlan { qubits: (0..self.len()).collect(), ..self.clone() }
    }
}

fn better(res: f64, set: &[usize], best_res: f64, best: &[usize]) -> bool {
    if res < best_res - TIE_TOL {
        return true;
    }
    if res > best_res + TIE_TOL {
        return false;
    }
    (set.len(), set) < (best.len(), best)
}

/// Indices of the subset of `deltas` whose sum best matches `target`.
/// Ties go to fewer spectators, then to the lexicographically smallest set.
pub fn select_subset(deltas: &[f64], target: f64) -> Result<(Vec<usize>, f64)> {
    if deltas.is_empty() {
        return invalid("no spectator candidates");
    }
    if deltas.len() <= EXHAUSTIVE_LIMIT {
        Ok(exhaustive_subset(deltas, target))
    } else {
        Ok(greedy_subset(deltas, target))
    }
}

fn mask_to_set(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize).filter(|i| mask >> i & 1 == 1).collect()
}

fn exhaustive_subset(deltas: &[f64], target: f64) -> (Vec<usize>, f64) {
    let m = deltas.len();
    let mut sums = vec![0.0f64; 1 << m];
    let mut best: Vec<usize> = Vec::new();
    let mut best_res = f64::INFINITY;
    for mask in 1usize..(1 << m) {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + deltas[low];
        let res = (sums[mask] - target).abs();
        if res <= best_res + TIE_TOL {
            let set = mask_to_set(mask);
            if better(res, &set, best_res, &best) {
                best_res = res;
                best = set;
            }
        }
    }
    (best, best_res)
}

fn greedy_subset(deltas: &[f64], target: f64) -> (Vec<usize>, f64) {
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&a, &b| deltas[b].total_cmp(&deltas[a]).then(a.cmp(&b)));
    let mut chosen = vec![false; deltas.len()];
    let mut sum = 0.0;
    for &i in &order {
        if (sum + deltas[i] - target).abs() < (sum - target).abs() - TIE_TOL {
            chosen[i] = true;
            sum += deltas[i];
        }
    }
    if !chosen.iter().any(|&c| c) {
        chosen[order[0]] = true;
        sum = deltas[order[0]];
    }
    // Local search over single additions, removals and swaps.
    loop {
        let current: Vec<usize> = (0..deltas.len()).filter(|&i| chosen[i]).collect();
        let mut best_move: Option<(Vec<usize>, f64)> = None;
        let mut best_res = (sum - target).abs();
        let mut best_set = current.clone();
        let mut consider = |set: Vec<usize>, s: f64| {
            let res = (s - target).abs();
            if !set.is_empty() && better(res, &set, best_res, &best_set) {
                best_res = res;
                best_set = set.clone();
                best_move = Some((set, s));
            }
        };
        for i in 0..deltas.len() {
            let mut set = current.clone();
            if chosen[i] {
                set.retain(|&x| x != i);
                consider(set, sum - deltas[i]);
            } else {
                set.push(i);
                set.sort_unstable();
                consider(set, sum + deltas[i]);
            }
        }
        for &out in &current {
            for inn in (0..deltas.len()).filter(|&i| !chosen[i]) {
                let mut set: Vec<usize> = current.iter().copied().filter(|&x| x != out).collect();
                set.push(inn);
                set.sort_unstable();
                consider(set, sum - deltas[out] + deltas[inn]);
            }
        }
        match best_move {
            Some((set, s)) => {
                chosen.iter_mut().for_each(|c| *c = false);
                for i in &set {
                    chosen[*i] = true;
                }
                sum = s;
            }
            None => return (current, (sum - target).abs()),
        }
    }
}

/// Plan on bare angles; qubits are candidate indices and axes default to ẑ.
pub fn plan_spectators(candidate_deltas: &[f64], target: f64) -> Result<SpectatorPlan> {
    let cands: Vec<SpectatorCandidate> = candidate_deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| SpectatorCandidate { qubit: i, axis: [0.0, 0.0, 1.0], delta: d })
        .collect();
    plan_from_candidates(&cands, target)
}

pub fn plan_from_candidates(cands: &[SpectatorCandidate], target: f64) -> Result<SpectatorPlan> {
    let deltas: Vec<f64> = cands.iter().map(|c| c.delta).collect();
    let (idx, _) = select_subset(&deltas, target)?;
    let chosen: Vec<SpectatorCandidate> = idx.iter().map(|&i| cands[i]).collect();
    SpectatorPlan::from_candidates(&chosen, target)
}

/// Geodesic rotation taking ẑ to `k`: `U(k)|0⟩ = |k⁺⟩`.
pub fn axis_alignment_unitary(k: [f64; 3]) -> Result<Operator> {
    check_unit_axis(&k)?;
    let (axis, angle) = alignment_rotation(k);
    rotation_operator(axis, angle)
}

/// Axis and angle of the geodesic rotation taking ẑ to `k`.
pub fn alignment_rotation(k: [f64; 3]) -> ([f64; 3], f64) {
    let c = [-k[1], k[0], 0.0];
    let s = (c[0] * c[0] + c[1] * c[1]).sqrt();
    if s < 1e-12 {
        if k[2] > 0.0 {
            return ([0.0, 0.0, 1.0], 0.0);
        }
        return ([1.0, 0.0, 0.0], PI);
    }
    ([c[0] / s, c[1] / s, 0.0], k[2].clamp(-1.0, 1.0).acos())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum GateKind {
    H,
    X,
    S,
    Sdg,
    T,
    Tdg,
    Cnot,
    /// `exp(−i(angle/2) axis·σ)`.
    Rot { axis: [f64; 3], angle: f64 },
    /// Projective Z measurement followed by reset to |0⟩.
    MeasureReset,
}

impl GateKind {
    pub fn arity(&self) -> usize {
        if matches!(self, GateKind::Cnot) {
            2
        } else {
            1
        }
    }

    pub fn is_unitary(&self) -> bool {
        !matches!(self, GateKind::MeasureReset)
    }

    pub fn matrix(&self) -> Option<Array2<C64>> {
        let r = FRAC_1_SQRT_2;
        let t = C64::from_polar(1.0, PI / 4.0);
        let m2 = |a: [C64; 4]| Array2::from_shape_vec((2, 2), a.to_vec()).unwrap();
        Some(match self {
            GateKind::H => m2([C64::new(r, 0.0), C64::new(r, 0.0), C64::new(r, 0.0), C64::new(-r, 0.0)]),
            GateKind::X => m2([ZERO, ONE, ONE, ZERO]),
            GateKind::S => m2([ONE, ZERO, ZERO, I]),
            GateKind::Sdg => m2([ONE, ZERO, ZERO, -I]),
            GateKind::T => m2([ONE, ZERO, ZERO, t]),
            GateKind::Tdg => m2([ONE, ZERO, ZERO, t.conj()]),
            GateKind::Cnot => {
                let mut m = Array2::<C64>::zeros((4, 4));
                m[[0, 0]] = ONE;
                m[[1, 1]] = ONE;
                m[[2, 3]] = ONE;
                m[[3, 2]] = ONE;
                m
            }
            GateKind::Rot { axis, angle } => rotation_unchecked(*axis, *angle).into_matrix(),
            GateKind::MeasureReset => return None,
        })
    }

    pub fn inverse(&self) -> Result<GateKind> {
        Ok(match self {
            GateKind::H | GateKind::X | GateKind::Cnot => self.clone(),
            GateKind::S => GateKind::Sdg,
            GateKind::Sdg => GateKind::S,
            GateKind::T => GateKind::Tdg,
            GateKind::Tdg => GateKind::T,
            GateKind::Rot { axis, angle } => GateKind::Rot { axis: *axis, angle: -angle },
            GateKind::MeasureReset => return invalid("measurement has no inverse"),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub layer: usize,
    #[serde(flatten)]
    pub kind: GateKind,
    pub qubits: Vec<usize>,
}

/// Layer-ordered gate list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GateList {
    pub gates: Vec<Gate>,
}

impl GateList {
    pub fn push(&mut self, layer: usize, kind: GateKind, qubits: Vec<usize>) {
        self.gates.push(Gate { layer, kind, qubits });
    }

    /// Number of layers spanned, i.e. last layer + 1.
    pub fn depth(&self) -> usize {
        self.gates.iter().map(|g| g.layer + 1).max().unwrap_or(0)
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let mut last = 0;
        for g in &self.gates {
            if g.layer < last {
                return invalid("gate layers must be nondecreasing");
            }
            last = g.layer;
            if g.qubits.len() != g.kind.arity() {
                return invalid(format!("{:?} expects {} operand(s)", g.kind, g.kind.arity()));
            }
            crate::operator::check_targets(&g.qubits, n_qubits)?;
            if let GateKind::Rot { axis, .. } = &g.kind {
                check_unit_axis(axis)?;
            }
        }
        Ok(())
    }

    pub fn shifted(&self, offset: usize) -> GateList {
        GateList {
            gates: self.gates.iter().map(|g| Gate { layer: g.layer + offset, ..g.clone() }).collect(),
        }
    }

    /// Gates renumbered through `map[local] = global`.
    pub fn remapped(&self, map: &[usize]) -> GateList {
        GateList {
            gates: self
                .gates
                .iter()
                .map(|g| Gate { qubits: g.qubits.iter().map(|&q| map[q]).collect(), ..g.clone() })
                .collect(),
        }
    }

    pub fn gates_in_layer(&self, layer: usize) -> impl Iterator<Item = &Gate> {
        self.gates.iter().filter(move |g| g.layer == layer)
    }

    /// Product of all gates on an `n`-qubit register, later gates on the left.
    pub fn unitary(&self, n_qubits: usize) -> Result<Operator> {
        self.validate(n_qubits)?;
        let mut u = Operator::identity(1 << n_qubits);
        for g in &self.gates {
            let m = g.kind.matrix().ok_or_else(|| Error::InvalidParameter("gate list is not unitary".into()))?;
            u = Operator::new(m)?.embed(&g.qubits, n_qubits)?.dot(&u);
        }
        Ok(u)
    }

    /// Adjoint circuit: reversed gate order, each gate inverted.
    pub fn inverse(&self) -> Result<GateList> {
        let depth = self.depth();
        let mut out = GateList::default();
        for g in self.gates.iter().rev() {
            out.push(depth - 1 - g.layer, g.kind.inverse()?, g.qubits.clone());
        }
        Ok(out)
    }
}

/// H on the first spectator, CNOT chain, X layer, then the U(kᵢ) layer.
pub fn mghz_prep_circuit(plan: &SpectatorPlan) -> GateList {
    let q = &plan.qubits;
    let mut g = GateList::default();
    g.push(0, GateKind::H, vec![q[0]]);
    for j in 1..q.len() {
        g.push(j, GateKind::Cnot, vec![q[j - 1], q[j]]);
    }
    let x_layer = q.len();
    for &qi in q {
        g.push(x_layer, GateKind::X, vec![qi]);
    }
    for (&qi, &k) in q.iter().zip(&plan.axes) {
        let (axis, angle) = alignment_rotation(k);
        if angle != 0.0 {
            g.push(x_layer + 1, GateKind::Rot { axis, angle }, vec![qi]);
        }
    }
    // Keep the depth fixed even when every axis is ẑ.
    if g.depth() == x_layer + 1 {
        g.push(x_layer + 1, GateKind::Rot { axis: [0.0, 0.0, 1.0], angle: 0.0 }, vec![q[0]]);
    }
    g
}

pub fn inversion_circuit(plan: &SpectatorPlan) -> GateList {
    mghz_prep_circuit(plan).inverse().expect("prep circuit is unitary")
}

/// `(⊗ U(kᵢ)) |GHZ_n⟩` on a register of the plan's size.
pub fn mghz_state(plan: &SpectatorPlan) -> Result<StateVector> {
    let n = plan.len();
    let d = 1usize << n;
    let mut ghz = ndarray::Array1::<C64>::zeros(d);
    ghz[0] = C64::new(FRAC_1_SQRT_2, 0.0);
    ghz[d - 1] = C64::new(FRAC_1_SQRT_2, 0.0);
    alignment_layer(plan)?.apply(&StateVector::new(ghz)?)
}

/// `𝒰 = ⊗ U(kᵢ)` on a register of the plan's size.
pub fn alignment_layer(plan: &SpectatorPlan) -> Result<Operator> {
    let us = plan.axes.iter().map(|&k| axis_alignment_unitary(k)).collect::<Result<Vec<_>>>()?;
    Ok(tensor_all(us.iter()).expect("nonempty plan"))
}

/// `S̃ = 𝒰 X^{⊗n} 𝒰†`.
pub fn dd_stabilizer(plan: &SpectatorPlan) -> Result<Operator> {
    let u = alignment_layer(plan)?;
    let x = pauli_string_matrix(&"X".repeat(plan.len()))?;
    Ok(u.dot(&x).dot(&u.adjoint()))
}

/// `𝒰 P 𝒰†` for a Pauli label over the plan's register.
pub fn transformed_pauli(plan: &SpectatorPlan, label: &str) -> Result<Operator> {
    let u = alignment_layer(plan)?;
    let p = pauli_string_matrix(label)?;
    if p.dim() != u.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), found: p.dim() });
    }
    Ok(u.dot(&p).dot(&u.adjoint()))
}

/// `‖AB + BA‖_max`.
pub fn anticommutator_norm(a: &Operator, b: &Operator) -> f64 {
    let ab = a.dot(b);
    let ba = b.dot(a);
    ab.add(&ba).map(|s| s.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max)).unwrap_or(f64::INFINITY)
}

/// Two π pulses about kᵢ per spectator inside the detection window, with
/// neighbouring spectators (adjacent in plan order) on opposite layer parity.
pub fn dd_pulse_schedule(plan: &SpectatorPlan, detection_layers: usize) -> Result<GateList> {
    let n = plan.len();
    if detection_layers < 2 * n || detection_layers < 2 {
        return invalid(format!(
            "{detection_layers} detection layers cannot hold two offset pulses per spectator ({n} spectators)"
        ));
    }
    let mut pulses: Vec<(usize, usize)> = Vec::new();
    for (p, &q) in plan.qubits.iter().enumerate() {
        let allowed: Vec<usize> = if n == 1 {
            (0..detection_layers).collect()
        } else {
            (0..detection_layers).filter(|l| l % 2 == p % 2).collect()
        };
        for j in 0..2 {
            let idx = ((j as f64 + 0.5) * allowed.len() as f64 / 2.0).floor() as usize;
            pulses.push((allowed[idx], q));
        }
    }
    pulses.sort_unstable();
    let mut g = GateList::default();
    for (layer, q) in pulses {
        let p = plan.qubits.iter().position(|&x| x == q).unwrap();
        g.push(layer, GateKind::Rot { axis: plan.axes[p], angle: PI }, vec![q]);
    }
    Ok(g)
}

/// `(1 − cos(m·θ))/2`.
pub fn detection_probability(m: usize, total_angle: f64) -> f64 {
    (1.0 - (m as f64 * total_angle).cos()) / 2.0
}

/// `2π/(2kn + 1)`.
pub fn worst_case_theta(k: usize, n: usize) -> Result<f64> {
    if k == 0 || n == 0 {
        return invalid("k and n must be at least 1");
    }
    Ok(2.0 * PI / (2 * k * n + 1) as f64)
}

/// `πk′/(k(2kn + 1))`.
pub fn mismatch_delta_theta(k: usize, n: usize, k_prime: usize) -> Result<f64> {
    if k == 0 || n == 0 {
        return invalid("k and n must be at least 1");
    }
    Ok(PI * k_prime as f64 / (k * (2 * k * n + 1)) as f64)
}

/// `(1 − cos Δθ)/2`.
pub fn expected_false_negative(dtheta: f64) -> f64 {
    (1.0 - dtheta.cos()) / 2.0
}

/// Prep, detection and inversion windows of one cycle, in absolute layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub prep: (usize, usize),
    pub detect: (usize, usize),
    pub inversion: (usize, usize),
    pub reset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorLayout {
    pub sets: Vec<SpectatorPlan>,
    pub count_classes: Vec<Vec<usize>>,
    pub frames: Vec<Frame>,
}

impl DetectorLayout {
    /// Back-to-back cycles sized for the deepest set.
    pub fn with_frames(mut self, detection_layers: usize, cycles: usize) -> Self {
        let prep = self.sets.iter().map(|s| mghz_prep_circuit(s).depth()).max().unwrap_or(0);
        let mut start = 0;
        self.frames = (0..cycles)
            .map(|_| {
                let f = Frame {
                    prep: (start, start + prep),
                    detect: (start + prep, start + prep + detection_layers),
                    inversion: (start + prep + detection_layers, start + 2 * prep + detection_layers),
                    reset: start + 2 * prep + detection_layers,
                };
                start = f.reset + 1;
                f
            })
            .collect();
        self
    }
}

/// Counts `2^ℓ(2j+1) ≤ max_count`.
pub fn count_class(level: u32, max_count: usize) -> Vec<usize> {
    let base = 1usize << level;
    (0..).map(|j| base * (2 * j + 1)).take_while(|&c| c <= max_count).collect()
}

/// One spectator set per level ℓ with target π/2^ℓ, covering counts
/// `2^ℓ(2j+1)`. Sets pick independently from all candidates.
pub fn multi_set_layout(max_count: usize, candidates: &[SpectatorCandidate]) -> Result<DetectorLayout> {
    if max_count == 0 {
        return invalid("max_count must be at least 1");
    }
    if candidates.is_empty() {
        return invalid("no spectator candidates");
    }
    let min_delta = candidates.iter().map(|c| c.delta).fold(f64::INFINITY, f64::min);
    let mut sets = Vec::new();
    let mut classes = Vec::new();
    for level in 0u32.. {
        let class = count_class(level, max_count);
        let target = PI / f64::from(1u32 << level.min(31));
        if class.is_empty() || (level > 0 && target < min_delta) {
            break;
        }
        sets.push(plan_from_candidates(candidates, target)?);
        classes.push(class);
    }
    Ok(DetectorLayout { sets, count_classes: classes, frames: Vec::new() })
}

pub fn multi_set_layout_from_deltas(max_count: usize, deltas: &[f64]) -> Result<DetectorLayout> {
    let cands: Vec<SpectatorCandidate> = deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| SpectatorCandidate { qubit: i, axis: [0.0, 0.0, 1.0], delta: d })
        .collect();
    multi_set_layout(max_count, &cands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::pauli_vector_dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_axis(rng: &mut impl Rng) -> [f64; 3] {
        loop {
            let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let n: f64 = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            if n > 0.1 && n < 1.0 {
                return v.map(|x| x / n);
            }
        }
    }

    fn random_plan(rng: &mut impl Rng, n: usize) -> SpectatorPlan {
        let axes = (0..n).map(|_| random_axis(rng)).collect();
        SpectatorPlan::new((0..n).collect(), axes, vec![0.3; n], PI).unwrap()
    }

    #[test]
    fn planning_examples() {
        let q = PI / 4.0;
        let p = plan_spectators(&[q, q, q, q, PI / 3.0], PI).unwrap();
        assert_eq!(p.qubits, vec![0, 1, 2, 3]);
        assert!(p.residual < 1e-12);
        let p = plan_spectators(&[PI / 3.0], PI).unwrap();
        assert_eq!(p.qubits, vec![0]);
        assert!((p.residual - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!(plan_spectators(&[], PI).is_err());
    }

    #[test]
    fn ties_prefer_fewer_spectators() {
        let t = 2.0 * PI / 9.0;
        assert_eq!(plan_spectators(&[t; 6], PI).unwrap().len(), 4);
        let t = 2.0 * PI / 17.0;
        assert_eq!(plan_spectators(&[t; 10], PI).unwrap().len(), 8);
    }

    #[test]
    fn planning_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let d: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..1.0)).collect();
            let target = rng.random_range(0.5..4.0);
            let p = plan_spectators(&d, target).unwrap();
            // Oracle: recursive enumeration of all subsets.
            fn rec(d: &[f64], i: usize, s: f64, t: f64, best: &mut f64, any: bool) {
                if i == d.len() {
                    if any {
                        *best = best.min((s - t).abs());
                    }
                    return;
                }
                rec(d, i + 1, s + d[i], t, best, true);
                rec(d, i + 1, s, t, best, any);
            }
            let mut best = f64::INFINITY;
            rec(&d, 0, 0.0, target, &mut best, false);
            assert!((p.residual - best).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_path_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d: Vec<f64> = (0..30).map(|_| rng.random_range(0.1..0.3)).collect();
        let (_, res) = select_subset(&d, PI).unwrap();
        assert!(res <= 0.3 / 2.0);
        let uniform = vec![0.2; 25];
        let (set, res) = select_subset(&uniform, PI).unwrap();
        assert!(res <= 0.1 + 1e-12);
        assert_eq!(set.len(), 16);
    }

    #[test]
    fn alignment_unitary() {
        let z = axis_alignment_unitary([0.0, 0.0, 1.0]).unwrap();
        assert!(z.diff_up_to_phase(&Operator::identity(2)) < 1e-12);
        let x = axis_alignment_unitary([1.0, 0.0, 0.0]).unwrap();
        let plus = x.apply(&StateVector::zero(1)).unwrap();
        let xp = pauli_string_matrix("X").unwrap().apply(&plus).unwrap();
        assert!((xp.inner(&plus) - ONE).norm() < 1e-12);
        let m = axis_alignment_unitary([0.0, 0.0, -1.0]).unwrap();
        let one = m.apply(&StateVector::zero(1)).unwrap();
        assert!((one.amplitudes()[1].norm() - 1.0).abs() < 1e-12);
        assert!(axis_alignment_unitary([0.5, 0.0, 0.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let k = random_axis(&mut rng);
            let u = axis_alignment_unitary(k).unwrap();
            let kp = u.apply(&StateVector::zero(1)).unwrap();
            let km = u.apply(&StateVector::basis(1, 1)).unwrap();
            let ks = pauli_vector_dot(k);
            let a = ks.apply(&kp).unwrap();
            let b = ks.apply(&km).unwrap();
            for i in 0..2 {
                assert!((a.amplitudes()[i] - kp.amplitudes()[i]).norm() < 1e-9);
                assert!((b.amplitudes()[i] + km.amplitudes()[i]).norm() < 1e-9);
            }
        }
    }

    fn run(g: &GateList, n: usize, psi: &StateVector) -> StateVector {
        g.unitary(n).unwrap().apply(psi).unwrap()
    }

    #[test]
    fn prep_examples() {
        let z = [0.0, 0.0, 1.0];
        let p1 = SpectatorPlan::new(vec![0], vec![z], vec![PI], PI).unwrap();
        let psi = run(&mghz_prep_circuit(&p1), 1, &StateVector::zero(1));
        let s = FRAC_1_SQRT_2;
        assert!((psi.amplitudes()[0] - C64::new(s, 0.0)).norm() < 1e-12);
        assert!((psi.amplitudes()[1] - C64::new(s, 0.0)).norm() < 1e-12);
        let p2 = SpectatorPlan::new(vec![0, 1], vec![z, z], vec![1.0, 1.0], PI).unwrap();
        let psi = run(&mghz_prep_circuit(&p2), 2, &StateVector::zero(2));
        assert!((psi.amplitudes()[0].norm() - s).abs() < 1e-12);
        assert!((psi.amplitudes()[3].norm() - s).abs() < 1e-12);
    }

    #[test]
    fn prep_matches_direct_mghz_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=4 {
            let plan = random_plan(&mut rng, n);
            let prep = mghz_prep_circuit(&plan);
            let psi = run(&prep, n, &StateVector::zero(n));
            let want = mghz_state(&plan).unwrap();
            assert!((psi.inner(&want).norm() - 1.0).abs() < 1e-9);
            let inv = inversion_circuit(&plan);
            let back = run(&inv, n, &psi);
            assert!((back.amplitudes()[0].norm() - 1.0).abs() < 1e-9);
            let up = prep.unitary(n).unwrap();
            let ui = inv.unitary(n).unwrap();
            assert!(ui.max_abs_diff(&up.adjoint()) < 1e-9);
            let amps: Vec<C64> = (0..1 << n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let r = StateVector::normalized(ndarray::Array1::from(amps)).unwrap();
            let rr = run(&inv, n, &run(&prep, n, &r));
            assert!((rr.inner(&r).norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stabilizer_examples() {
        let z = [0.0, 0.0, 1.0];
        let p = SpectatorPlan::new(vec![0, 1, 2], vec![z; 3], vec![1.0; 3], PI).unwrap();
        let s = dd_stabilizer(&p).unwrap();
        assert!(s.max_abs_diff(&pauli_string_matrix("XXX").unwrap()) < 1e-12);
        let p = SpectatorPlan::new(vec![0], vec![[1.0, 0.0, 0.0]], vec![1.0], PI).unwrap();
        let s = dd_stabilizer(&p).unwrap();
        let h = Operator::new(GateKind::H.matrix().unwrap()).unwrap();
        let hxh = h.dot(&pauli_string_matrix("X").unwrap()).dot(&h);
        assert!(s.diff_up_to_phase(&hxh) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=4 {
            let plan = random_plan(&mut rng, n);
            let s = dd_stabilizer(&plan).unwrap();
            let m = mghz_state(&plan).unwrap();
            let sm = s.apply(&m).unwrap();
            let diff: f64 = sm.amplitudes().iter().zip(m.amplitudes()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(diff < 1e-9);
        }
    }

    #[test]
    fn stabilizer_anticommutes_with_each_transformed_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 1..=4 {
            let plan = random_plan(&mut rng, n);
            let s = dd_stabilizer(&plan).unwrap();
            for i in 0..n {
                let label: String = (0..n).map(|q| if q == i { 'Z' } else { 'I' }).collect();
                let zi = transformed_pauli(&plan, &label).unwrap();
                assert!(anticommutator_norm(&s, &zi) < 1e-10);
            }
        }
    }

    #[test]
    fn dd_schedule() {
        let z = [0.0, 0.0, 1.0];
        let p = SpectatorPlan::new(vec![5, 7], vec![z, [1.0, 0.0, 0.0]], vec![1.0, 1.0], PI).unwrap();
        let g = dd_pulse_schedule(&p, 4).unwrap();
        let layers = |q: usize| g.gates.iter().filter(|x| x.qubits[0] == q).map(|x| x.layer).collect::<Vec<_>>();
        assert_eq!(layers(5), vec![0, 2]);
        assert_eq!(layers(7), vec![1, 3]);
        assert!(dd_pulse_schedule(&p, 3).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let n = rng.random_range(1..6);
            let plan = random_plan(&mut rng, n);
            let l = rng.random_range(2 * n..4 * n + 6);
            let g = dd_pulse_schedule(&plan, l).unwrap();
            for (pos, &q) in plan.qubits.iter().enumerate() {
                let mine: Vec<usize> = g.gates.iter().filter(|x| x.qubits[0] == q).map(|x| x.layer).collect();
                assert_eq!(mine.len() % 2, 0);
                assert!(mine.iter().all(|&x| x < l));
                if pos + 1 < n {
                    let next = plan.qubits[pos + 1];
                    assert!(g.gates.iter().filter(|x| x.qubits[0] == next).all(|x| !mine.contains(&x.layer)));
                }
            }
        }
    }

    #[test]
    fn closed_forms() {
        assert!((detection_probability(1, PI) - 1.0).abs() < 1e-15);
        assert!(detection_probability(2, PI).abs() < 1e-15);
        assert!((detection_probability(3, 8.0 * PI / 9.0) - 0.75).abs() < 1e-12);
        assert!((worst_case_theta(1, 4).unwrap() - 2.0 * PI / 9.0).abs() < 1e-15);
        assert!((worst_case_theta(1, 8).unwrap() - 2.0 * PI / 17.0).abs() < 1e-15);
        assert!((worst_case_theta(2, 2).unwrap() - 2.0 * PI / 9.0).abs() < 1e-15);
        let d = mismatch_delta_theta(1, 4, 3).unwrap();
        assert!((d - PI / 3.0).abs() < 1e-15);
        assert!((expected_false_negative(d) - 0.25).abs() < 1e-12);
        let d = mismatch_delta_theta(1, 8, 3).unwrap();
        assert!((d - 3.0 * PI / 17.0).abs() < 1e-15);
        assert!((expected_false_negative(d) - 0.0749).abs() < 1e-4);
        assert_eq!(expected_false_negative(mismatch_delta_theta(1, 5, 0).unwrap()), 0.0);
    }

    #[test]
    fn layouts() {
        let q = PI / 4.0;
        let l = multi_set_layout_from_deltas(3, &[q; 4]).unwrap();
        assert_eq!(l.sets.len(), 2);
        assert_eq!(l.sets[0].target_angle, PI);
        assert_eq!(l.sets[1].target_angle, PI / 2.0);
        assert_eq!(l.count_classes, vec![vec![1, 3], vec![2]]);
        let l = multi_set_layout_from_deltas(7, &[q; 4]).unwrap();
        assert_eq!(l.count_classes, vec![vec![1, 3, 5, 7], vec![2, 6], vec![4]]);
        let l = multi_set_layout_from_deltas(1, &[q; 4]).unwrap();
        assert_eq!(l.sets.len(), 1);
        // Stops once π/2^ℓ drops below the smallest angle.
        let l = multi_set_layout_from_deltas(8, &[PI / 3.0; 4]).unwrap();
        assert_eq!(l.sets.len(), 2);
        let l = l.with_frames(10, 2);
        assert_eq!(l.frames.len(), 2);
        assert!(l.frames[0].reset < l.frames[1].prep.0);
    }

    #[test]
    fn gate_list_json() {
        let plan = SpectatorPlan::new(vec![0, 1], vec![[0.6, 0.0, 0.8], [0.0, 0.0, 1.0]], vec![1.0, 1.0], PI).unwrap();
        let g = mghz_prep_circuit(&plan);
        let text = serde_json::to_string(&g).unwrap();
        let back: GateList = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
    }
}
