//! Idle-noise channels, HSA Lindbladian generators and CPTP checks.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::{
    adjoint, check_dim, check_targets, conjugate_local, expm_action, hermitian_eigenvalues, kron,
    max_abs_diff, pauli_string_matrix, qubits_for_dim, DensityOperator, Operator, StateVector,
    SuperOperator, C64, I, ONE, ZERO,
};

const COMPLETENESS_TOL: f64 = 1e-8;
const CHOI_TOL: f64 = 1e-8;

/// Kraus representation of a channel.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    ops: Vec<Operator>,
}

impl KrausChannel {
    pub fn new(ops: Vec<Operator>) -> Result<Self> {
        let residual = completeness_residual(&ops)?;
        if residual > COMPLETENESS_TOL {
            return invalid(format!("Kraus set not complete (residual {residual:.3e})"));
        }
        Ok(KrausChannel { ops })
    }

    pub fn identity(dim: usize) -> Self {
        KrausChannel { ops: vec![Operator::identity(dim)] }
    }

    pub fn ops(&self) -> &[Operator] {
        &self.ops
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        check_dim(self.dim(), rho.dim())?;
        let mut out = Array2::<C64>::zeros((rho.dim(), rho.dim()));
        for k in &self.ops {
            out += &k.matrix().dot(rho.matrix()).dot(&adjoint(k.matrix()));
        }
        Ok(DensityOperator::from_raw(out))
    }

    pub fn to_superop(&self) -> SuperOperator {
        kraus_superop(&self.ops)
    }
}

fn completeness_residual(ops: &[Operator]) -> Result<f64> {
    let first = ops.first().ok_or_else(|| Error::InvalidParameter("empty Kraus set".into()))?;
    let d = first.dim();
    let mut sum = Array2::<C64>::zeros((d, d));
    for k in ops {
        check_dim(d, k.dim())?;
        sum += &adjoint(k.matrix()).dot(k.matrix());
    }
    Ok(max_abs_diff(&sum, &Array2::eye(d)))
}

fn kraus_superop(ops: &[Operator]) -> SuperOperator {
    let d = ops[0].dim();
    let mut m = Array2::<C64>::zeros((d * d, d * d));
    for k in ops {
        m += &kron(&k.matrix().mapv(|z| z.conj()), k.matrix());
    }
    SuperOperator::new(m).expect("Kraus superoperator has square power-of-four shape")
}

/// A channel in whichever representation it was built.
#[derive(Clone, Debug, PartialEq)]
pub enum Channel {
    Unitary(Operator),
    Kraus(KrausChannel),
    Superop(SuperOperator),
    /// `exp(ℒ)` applied through its action, never formed densely.
    Lindblad(LindbladAction),
}

impl Channel {
    pub fn dim(&self) -> usize {
        match self {
            Channel::Unitary(u) => u.dim(),
            Channel::Kraus(k) => k.dim(),
            Channel::Superop(s) => s.state_dim(),
            Channel::Lindblad(l) => 1 << l.n_qubits(),
        }
    }

    pub fn is_unitary(&self) -> bool {
        matches!(self, Channel::Unitary(_))
    }

    pub fn to_superop(&self) -> SuperOperator {
        match self {
            Channel::Unitary(u) => kraus_superop(std::slice::from_ref(u)),
            Channel::Kraus(k) => k.to_superop(),
            Channel::Superop(s) => s.clone(),
            Channel::Lindblad(l) => l.to_superop(),
        }
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        apply_channel(self, rho)
    }

    pub fn cptp_check(&self) -> CptpReport {
        match self {
            Channel::Unitary(u) => cptp_check_kraus(std::slice::from_ref(u)),
            Channel::Kraus(k) => cptp_check_kraus(k.ops()),
            Channel::Superop(s) => cptp_check_superop(s),
            Channel::Lindblad(l) => cptp_check_superop(&l.to_superop()),
        }
    }
}

pub fn apply_channel(ch: &Channel, rho: &DensityOperator) -> Result<DensityOperator> {
    match ch {
        Channel::Unitary(u) => rho.conjugate(u),
        Channel::Kraus(k) => k.apply(rho),
        Channel::Superop(s) => s.apply(rho),
        Channel::Lindblad(l) => {
            check_dim(1 << l.n_qubits(), rho.dim())?;
            let mut m = rho.matrix().clone();
            l.apply_exp(&mut m);
            Ok(DensityOperator::from_raw(m))
        }
    }
}

/// Outcome of a CPTP validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CptpReport {
    /// `‖Σ K†K − I‖_max` for Kraus input, or the trace-preservation residual
    /// `max |tr Φ(E_ij) − δ_ij|` for superoperators.
    pub completeness_residual: f64,
    pub min_choi_eigenvalue: f64,
    pub passed: bool,
}

pub fn cptp_check_kraus(ops: &[Operator]) -> CptpReport {
    let residual = match completeness_residual(ops) {
        Ok(r) => r,
        Err(_) => {
            return CptpReport {
                completeness_residual: f64::INFINITY,
                min_choi_eigenvalue: f64::NEG_INFINITY,
                passed: false,
            }
        }
    };
    let min_eig = min_choi_eigenvalue(&kraus_superop(ops));
    CptpReport {
        completeness_residual: residual,
        min_choi_eigenvalue: min_eig,
        passed: residual <= COMPLETENESS_TOL && min_eig >= -CHOI_TOL,
    }
}

pub fn cptp_check_superop(s: &SuperOperator) -> CptpReport {
    let d = s.state_dim();
    let m = s.matrix();
    let mut residual: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let tr: C64 = (0..d).map(|k| m[[k + k * d, i + j * d]]).sum();
            let want = if i == j { ONE } else { ZERO };
            residual = residual.max((tr - want).norm());
        }
    }
    let min_eig = min_choi_eigenvalue(s);
    CptpReport {
        completeness_residual: residual,
        min_choi_eigenvalue: min_eig,
        passed: residual <= COMPLETENESS_TOL && min_eig >= -CHOI_TOL,
    }
}

/// Choi matrix `Σ_ij E_ij ⊗ Φ(E_ij)`.
pub fn choi_matrix(s: &SuperOperator) -> Array2<C64> {
    let d = s.state_dim();
    let m = s.matrix();
    Array2::from_shape_fn((d * d, d * d), |(r, c)| {
        let (i, k) = (r / d, r % d);
        let (j, l) = (c / d, c % d);
        m[[k + l * d, i + j * d]]
    })
}

fn min_choi_eigenvalue(s: &SuperOperator) -> f64 {
    hermitian_eigenvalues(&choi_matrix(s)).into_iter().fold(f64::INFINITY, f64::min)
}

/// Physical idle-noise parameters. Times share one unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdleNoiseParams {
    pub t1: f64,
    pub t2: f64,
    pub tau: f64,
    /// ZZ rotation angle per timestep.
    #[serde(default)]
    pub alpha: f64,
    /// Time constant used for p_D; `None` means T2.
    #[serde(default)]
    pub t_dephase: Option<f64>,
}

impl IdleNoiseParams {
    pub fn new(t1: f64, t2: f64, tau: f64, alpha: f64) -> Result<Self> {
        let p = IdleNoiseParams { t1, t2, tau, alpha, t_dephase: None };
        p.validate()?;
        Ok(p)
    }

    /// Infinite coherence times and no ZZ.
    pub fn noiseless(tau: f64) -> Self {
        IdleNoiseParams { t1: f64::INFINITY, t2: f64::INFINITY, tau, alpha: 0.0, t_dephase: None }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("T1", self.t1), ("T2", self.t2), ("tau", self.tau)] {
            if v.is_nan() || v <= 0.0 {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(td) = self.t_dephase {
            if td.is_nan() || td <= 0.0 {
                return invalid(format!("dephasing time must be positive, got {td}"));
            }
        }
        if self.t2 > 2.0 * self.t1 {
            return invalid(format!("T2 = {} exceeds 2·T1 = {}", self.t2, 2.0 * self.t1));
        }
        if !self.alpha.is_finite() {
            return invalid("alpha must be finite");
        }
        Ok(())
    }

    pub fn dephasing_time(&self) -> f64 {
        self.t_dephase.unwrap_or(self.t2)
    }

    /// γ_A with p_A = 1 − e^{−2γ_A t}.
    pub fn gamma_a(&self) -> f64 {
        0.5 / self.t1
    }

    /// γ_D with p_D = (1 − e^{−2γ_D t})/2.
    pub fn gamma_d(&self) -> f64 {
        0.5 / self.dephasing_time()
    }
}

/// `(p_A, p_D)` for one timestep `tau`.
pub fn transition_probs(p: &IdleNoiseParams) -> (f64, f64) {
    transition_probs_for(p, p.tau)
}

/// `(p_A, p_D)` after an idle duration `t`.
pub fn transition_probs_for(p: &IdleNoiseParams, t: f64) -> (f64, f64) {
    let p_a = -(-t / p.t1).exp_m1();
    let p_d = -(-t / p.dephasing_time()).exp_m1() / 2.0;
    (p_a, p_d)
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("probability {p} outside [0, 1]"));
    }
    Ok(())
}

/// Tensor power of a single-qubit Kraus set: one operator per index in {0,1}^n.
fn tensor_power_kraus(single: &[Array2<C64>], n: usize) -> Vec<Operator> {
    let mut ops = vec![Array2::<C64>::eye(1)];
    for _ in 0..n {
        ops = ops.iter().flat_map(|a| single.iter().map(move |k| kron(a, k))).collect();
    }
    ops.into_iter().map(|m| Operator::new(m).expect("qubit dimension")).collect()
}

pub fn dephasing_kraus_1q(p_d: f64) -> [Array2<C64>; 2] {
    let a = C64::new((1.0 - p_d).sqrt(), 0.0);
    let b = C64::new(p_d.sqrt(), 0.0);
    [
        Array2::from_shape_vec((2, 2), vec![a, ZERO, ZERO, a]).unwrap(),
        Array2::from_shape_vec((2, 2), vec![b, ZERO, ZERO, -b]).unwrap(),
    ]
}

pub fn damping_kraus_1q(p_a: f64) -> [Array2<C64>; 2] {
    let s = C64::new((1.0 - p_a).sqrt(), 0.0);
    let r = C64::new(p_a.sqrt(), 0.0);
    [
        Array2::from_shape_vec((2, 2), vec![ONE, ZERO, ZERO, s]).unwrap(),
        Array2::from_shape_vec((2, 2), vec![ZERO, r, ZERO, ZERO]).unwrap(),
    ]
}

pub fn dephasing_channel(p_d: f64, n: usize) -> Result<KrausChannel> {
    check_prob(p_d)?;
    if n == 0 {
        return invalid("qubit count must be at least 1");
    }
    KrausChannel::new(tensor_power_kraus(&dephasing_kraus_1q(p_d), n))
}

pub fn amplitude_damping_channel(p_a: f64, n: usize) -> Result<KrausChannel> {
    check_prob(p_a)?;
    if n == 0 {
        return invalid("qubit count must be at least 1");
    }
    KrausChannel::new(tensor_power_kraus(&damping_kraus_1q(p_a), n))
}

/// Nearest-neighbour pairs `(j, j+1)` on an `n`-qubit chain.
pub fn chain_pairs(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|j| (j - 1, j)).collect()
}

/// Σ_{(i,j)} z_i z_j for basis index `idx`, with z = ±1.
fn zz_energy(idx: usize, n: usize, pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&(i, j)| {
            let bi = (idx >> (n - 1 - i)) & 1;
            let bj = (idx >> (n - 1 - j)) & 1;
            if bi == bj {
                1.0
            } else {
                -1.0
            }
        })
        .sum()
}

/// `exp(−iα Σ_j Z_j Z_{j+1})` on an open chain.
pub fn zz_coupling_unitary(alpha: f64, n: usize) -> Result<Operator> {
    zz_coupling_unitary_on(alpha, n, &chain_pairs(n))
}

pub fn zz_coupling_unitary_on(alpha: f64, n: usize, pairs: &[(usize, usize)]) -> Result<Operator> {
    if n == 0 {
        return invalid("qubit count must be at least 1");
    }
    for &(i, j) in pairs {
        check_targets(&[i, j], n)?;
    }
    let d = 1usize << n;
    let diag: Vec<C64> = (0..d)
        .map(|a| (-I * alpha * zz_energy(a, n, pairs)).exp())
        .collect();
    Operator::new(Array2::from_diag(&ndarray::Array1::from(diag)))
}

/// Generator kind in the reduced Hamiltonian/stochastic/affine model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GeneratorKind {
    H,
    S,
    A,
}

impl std::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GeneratorKind::H => "H",
            GeneratorKind::S => "S",
            GeneratorKind::A => "A",
        };
        f.write_str(s)
    }
}

/// One term of a Lindbladian; labels span the whole register.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorTerm {
    pub kind: GeneratorKind,
    pub pauli: String,
    pub pauli2: Option<String>,
    pub coeff: f64,
}

impl GeneratorTerm {
    pub fn new(kind: GeneratorKind, pauli: &str, pauli2: Option<&str>, coeff: f64) -> Result<Self> {
        if !coeff.is_finite() {
            return invalid("generator coefficient must be finite");
        }
        if kind == GeneratorKind::S && coeff < 0.0 {
            return invalid(format!("stochastic coefficient {coeff} is negative"));
        }
        match (kind, pauli2) {
            (GeneratorKind::A, None) => return invalid("affine term needs a Pauli pair"),
            (GeneratorKind::A, Some(q)) if q.len() != pauli.len() => {
                return Err(Error::DimensionMismatch { expected: pauli.len(), found: q.len() })
            }
            (GeneratorKind::H | GeneratorKind::S, Some(_)) => {
                return invalid(format!("{kind} term takes a single Pauli label"))
            }
            _ => {}
        }
        pauli_string_matrix(pauli)?;
        if let Some(q) = pauli2 {
            pauli_string_matrix(q)?;
        }
        Ok(GeneratorTerm {
            kind,
            pauli: pauli.to_string(),
            pauli2: pauli2.map(str::to_string),
            coeff,
        })
    }
}

/// Weighted sum of HSA generators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LindbladGenerator {
    pub terms: Vec<GeneratorTerm>,
}

impl LindbladGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, term: GeneratorTerm) {
        self.terms.push(term);
    }

    pub fn scaled(&self, factor: f64) -> Self {
        LindbladGenerator {
            terms: self
                .terms
                .iter()
                .map(|t| GeneratorTerm { coeff: t.coeff * factor, ..t.clone() })
                .collect(),
        }
    }

    pub fn extend(&mut self, other: &LindbladGenerator) {
        self.terms.extend(other.terms.iter().cloned());
    }

    pub fn is_hamiltonian(&self) -> bool {
        self.terms.iter().all(|t| t.kind == GeneratorKind::H)
    }

    /// Σ ε_P P over the H terms.
    pub fn hamiltonian(&self, dim: usize) -> Result<Operator> {
        let mut h = Array2::<C64>::zeros((dim, dim));
        for t in self.terms.iter().filter(|t| t.kind == GeneratorKind::H) {
            let p = pauli_string_matrix(&t.pauli)?;
            check_dim(dim, p.dim())?;
            h.scaled_add(C64::new(t.coeff, 0.0), p.matrix());
        }
        Operator::new(h)
    }
}

/// Superoperator for a single unit-coefficient generator.
pub fn hsa_generator_superop(
    kind: GeneratorKind,
    pauli: &str,
    pauli2: Option<&str>,
    dim: usize,
) -> Result<SuperOperator> {
    qubits_for_dim(dim)?;
    let p = pauli_string_matrix(pauli)?;
    check_dim(dim, p.dim())?;
    let id = Array2::<C64>::eye(dim);
    let pm = p.matrix();
    let pt = pm.t().to_owned();
    let m = match kind {
        GeneratorKind::H => {
            if pauli2.is_some() {
                return invalid("H term takes a single Pauli label");
            }
            (kron(&id, pm) - kron(&pt, &id)).mapv(|z| -I * z)
        }
        GeneratorKind::S => {
            if pauli2.is_some() {
                return invalid("S term takes a single Pauli label");
            }
            kron(&pm.mapv(|z| z.conj()), pm) - Array2::<C64>::eye(dim * dim)
        }
        GeneratorKind::A => {
            let q = pauli2.ok_or_else(|| Error::InvalidParameter("affine term needs a Pauli pair".into()))?;
            let q = pauli_string_matrix(q)?;
            check_dim(dim, q.dim())?;
            let qm = q.matrix();
            let c = pm.dot(qm) - qm.dot(pm);
            let anti = (kron(&id, &c) + kron(&c.t().to_owned(), &id)).mapv(|z| z * I * 0.5);
            let cross = (kron(&qm.t().to_owned(), pm) - kron(&pt, qm)).mapv(|z| z * I);
            anti + cross
        }
    };
    SuperOperator::new(m)
}

pub fn build_lindbladian(g: &LindbladGenerator, dim: usize) -> Result<SuperOperator> {
    let mut acc = SuperOperator::zeros(dim);
    for t in &g.terms {
        let s = hsa_generator_superop(t.kind, &t.pauli, t.pauli2.as_deref(), dim)?;
        acc = acc.add(&s.scale(t.coeff))?;
    }
    Ok(acc)
}

/// `exp(t·ℒ)` as a channel; H-only generators give the unitary `exp(−itH)`,
/// anything else is kept in matrix-free form.
pub fn exponentiate_generator(g: &LindbladGenerator, dim: usize, t: f64) -> Result<Channel> {
    if g.is_hamiltonian() {
        let h = g.hamiltonian(dim)?;
        return Ok(Channel::Unitary(h.scale(-I * t).exp()?));
    }
    Ok(Channel::Lindblad(LindbladAction::new(&g.scaled(t), qubits_for_dim(dim)?)?))
}

/// Pauli string as `P|b⟩ = c(b)|b ⊕ x⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct PauliAction {
    x: usize,
    zy: usize,
    phase: C64,
}

impl PauliAction {
    pub(crate) fn parse(label: &str) -> Self {
        let n = label.len();
        let (mut x, mut zy, mut ny) = (0usize, 0usize, 0u32);
        for (q, c) in label.chars().enumerate() {
            let bit = 1usize << (n - 1 - q);
            match c {
                'X' => x |= bit,
                'Y' => {
                    x |= bit;
                    zy |= bit;
                    ny += 1;
                }
                'Z' => zy |= bit,
                _ => {}
            }
        }
        PauliAction { x, zy, phase: I.powu(ny) }
    }

    pub(crate) fn coef(&self, b: usize) -> C64 {
        if (b & self.zy).count_ones() % 2 == 0 {
            self.phase
        } else {
            -self.phase
        }
    }

    pub(crate) fn flip(&self) -> usize {
        self.x
    }

    /// `P·M`.
    fn left(&self, m: &Array2<C64>) -> Array2<C64> {
        Array2::from_shape_fn(m.dim(), |(a, b)| {
            let c = a ^ self.x;
            self.coef(c) * m[[c, b]]
        })
    }

    /// `M·P`.
    fn right(&self, m: &Array2<C64>) -> Array2<C64> {
        Array2::from_shape_fn(m.dim(), |(a, b)| m[[a, b ^ self.x]] * self.coef(b))
    }
}

/// A Lindbladian applied entrywise through Pauli actions.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladAction {
    n: usize,
    /// Affine terms.
    terms: Vec<(GeneratorKind, PauliAction, Option<PauliAction>, f64)>,
    /// S terms grouped by flip pattern: `Σ c·PMP` is `w ∘ M[a⊕x, b⊕x]`.
    stochastic: Vec<(usize, Array2<C64>)>,
    /// Sum of S coefficients, the `−cM` part.
    stochastic_total: f64,
    /// All H terms summed densely, with its spectral spread.
    hamiltonian: Option<(Array2<C64>, f64)>,
    generator: LindbladGenerator,
}

impl LindbladAction {
    pub fn new(g: &LindbladGenerator, n: usize) -> Result<Self> {
        let d = 1usize << n;
        let mut terms = Vec::new();
        let mut stochastic: Vec<(usize, Array2<C64>)> = Vec::new();
        let mut stochastic_total = 0.0;
        for t in &g.terms {
            if t.pauli.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: t.pauli.len() });
            }
            match t.kind {
                GeneratorKind::H => {}
                GeneratorKind::S => {
                    let p = PauliAction::parse(&t.pauli);
                    let i = match stochastic.iter().position(|(x, _)| *x == p.x) {
                        Some(i) => i,
                        None => {
                            stochastic.push((p.x, Array2::zeros((d, d))));
                            stochastic.len() - 1
                        }
                    };
                    // (PMP)[a,b] = c(a⊕x) c(b) M[a⊕x, b⊕x]
                    stochastic[i].1.indexed_iter_mut().for_each(|((a, b), w)| *w += p.coef(a ^ p.x) * p.coef(b) * t.coeff);
                    stochastic_total += t.coeff;
                }
                GeneratorKind::A => {
                    let q = t.pauli2.as_deref().map(PauliAction::parse);
                    terms.push((t.kind, PauliAction::parse(&t.pauli), q, t.coeff));
                }
            }
        }
        let hamiltonian = if g.terms.iter().any(|t| t.kind == GeneratorKind::H) {
            let h = g.hamiltonian(1 << n)?.into_matrix();
            let ev = hermitian_eigenvalues(&h);
            let spread = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ev.iter().copied().fold(f64::INFINITY, f64::min);
            Some((h, spread))
        } else {
            None
        };
        Ok(LindbladAction { n, terms, stochastic, stochastic_total, hamiltonian, generator: g.clone() })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn generator(&self) -> &LindbladGenerator {
        &self.generator
    }

    /// `ℒ[M]`.
    pub fn apply(&self, m: &Array2<C64>) -> Array2<C64> {
        self.apply_view(m.view())
    }

    fn apply_view(&self, m: ArrayView2<C64>) -> Array2<C64> {
        let d = m.nrows();
        let mut out = Array2::<C64>::zeros((d, d));
        if let Some((h, _)) = &self.hamiltonian {
            general_mat_mul(-I, h, &m, ZERO, &mut out);
            general_mat_mul(I, &m, h, ONE, &mut out);
        }
        if !self.stochastic.is_empty() {
            out.scaled_add(C64::new(-self.stochastic_total, 0.0), &m);
            let ms = m.as_standard_layout();
            let ms = ms.as_slice().expect("standard layout");
            let os = out.as_slice_mut().expect("fresh array");
            for (x, w) in &self.stochastic {
                let ws = w.as_slice().expect("fresh array");
                for a in 0..d {
                    let src = &ms[(a ^ x) * d..((a ^ x) + 1) * d];
                    let (row, wrow) = (&mut os[a * d..(a + 1) * d], &ws[a * d..(a + 1) * d]);
                    for b in 0..d {
                        row[b] += wrow[b] * src[b ^ x];
                    }
                }
            }
        }
        let m = if self.terms.is_empty() { Array2::zeros((0, 0)) } else { m.to_owned() };
        for (kind, p, q, c) in &self.terms {
            let m = &m;
            let c = *c;
            debug_assert_eq!(*kind, GeneratorKind::A);
            let q = q.as_ref().expect("affine term carries a pair");
            let cm = p.left(&q.left(m)) - q.left(&p.left(m));
            let mc = q.right(&p.right(m)) - p.right(&q.right(m));
            let cross = q.right(&p.left(m)) - p.right(&q.left(m));
            out.scaled_add(I * 0.5 * c, &(cm + mc));
            out.scaled_add(I * c, &cross);
        }
        out
    }

    fn norm_bound(&self) -> f64 {
        let h = self.hamiltonian.as_ref().map_or(0.0, |(_, spread)| *spread);
        let s: f64 = self.generator.terms.iter().filter(|t| t.kind == GeneratorKind::S).map(|t| 2.0 * t.coeff.abs()).sum();
        h + s + self.terms.iter().map(|(_, _, _, c)| 4.0 * c.abs()).sum::<f64>()
    }

    /// In-place `M ← exp(ℒ)[M]`.
    pub fn apply_exp(&self, m: &mut Array2<C64>) {
        let d = m.nrows();
        let apply = |x: &[C64], out: &mut [C64]| {
            let r = self.apply_view(ArrayView2::from_shape((d, d), x).expect("square"));
            out.copy_from_slice(r.as_slice().expect("standard layout"));
        };
        let v = m.as_standard_layout().iter().copied().collect::<Vec<_>>();
        let out = expm_action(apply, self.norm_bound(), &v);
        *m = Array2::from_shape_vec((d, d), out).expect("square");
    }

    pub fn to_superop(&self) -> SuperOperator {
        build_lindbladian(&self.generator, 1 << self.n)
            .and_then(|s| s.exp())
            .expect("generator validated at construction")
    }
}

/// `D[L]ρ = LρL† − ½{L†L, ρ}` as a superoperator.
pub fn dissipator_superop(l: &Operator) -> SuperOperator {
    let d = l.dim();
    let lm = l.matrix();
    let ldl = adjoint(lm).dot(lm);
    let id = Array2::<C64>::eye(d);
    let m = kron(&lm.mapv(|z| z.conj()), lm)
        - kron(&id, &ldl).mapv(|z| z * 0.5)
        - kron(&ldl.t().to_owned(), &id).mapv(|z| z * 0.5);
    SuperOperator::new(m).expect("qubit dimension")
}

fn single_label(n: usize, q: usize, c: char) -> String {
    (0..n).map(|k| if k == q { c } else { 'I' }).collect()
}

fn pair_label(n: usize, a: usize, b: usize, ca: char, cb: char) -> String {
    (0..n)
        .map(|k| if k == a { ca } else if k == b { cb } else { 'I' })
        .collect()
}

/// Idle Lindbladian per unit time: dephasing (S_Z at γ_D), damping
/// (`D[σ⁻]` at 1/T1, written as ¼S_X + ¼S_Y − ¼A_{X,Y}) and ZZ drift
/// (H_{ZZ} at α/τ).
pub fn idle_generator(p: &IdleNoiseParams, n: usize, pairs: &[(usize, usize)]) -> Result<LindbladGenerator> {
    p.validate()?;
    let mut g = LindbladGenerator::new();
    let gd = p.gamma_d();
    let rate_a = 2.0 * p.gamma_a();
    for q in 0..n {
        if gd > 0.0 {
            g.push(GeneratorTerm::new(GeneratorKind::S, &single_label(n, q, 'Z'), None, gd)?);
        }
        if rate_a > 0.0 {
            let x = single_label(n, q, 'X');
            let y = single_label(n, q, 'Y');
            g.push(GeneratorTerm::new(GeneratorKind::S, &x, None, rate_a / 4.0)?);
            g.push(GeneratorTerm::new(GeneratorKind::S, &y, None, rate_a / 4.0)?);
            g.push(GeneratorTerm::new(GeneratorKind::A, &x, Some(&y), -rate_a / 4.0)?);
        }
    }
    if p.alpha != 0.0 {
        for &(a, b) in pairs {
            check_targets(&[a, b], n)?;
            g.push(GeneratorTerm::new(
                GeneratorKind::H,
                &pair_label(n, a, b, 'Z', 'Z'),
                None,
                p.alpha / p.tau,
            )?);
        }
    }
    Ok(g)
}

/// One idle timestep applied without forming 4ⁿ-sized superoperators.
///
/// Dephasing commutes with both damping and ZZ drift and is applied as an
/// exact coherence factor. ZZ drift alone is an elementwise phase, damping
/// alone is a local Kraus map; together they go through a Taylor action of
/// the joint generator.
#[derive(Clone, Debug)]
pub struct IdleStep {
    n: usize,
    pairs: Vec<(usize, usize)>,
    alpha: f64,
    p_a: f64,
    p_d: f64,
}

impl IdleStep {
    pub fn new(p: &IdleNoiseParams, n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        p.validate()?;
        for &(a, b) in pairs {
            check_targets(&[a, b], n)?;
        }
        let (p_a, p_d) = transition_probs(p);
        Ok(IdleStep { n, pairs: pairs.to_vec(), alpha: p.alpha, p_a, p_d })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    /// True when the step is a unitary (ZZ drift only).
    pub fn is_unitary(&self) -> bool {
        self.p_a == 0.0 && self.p_d == 0.0
    }

    pub fn is_identity(&self) -> bool {
        self.is_unitary() && (self.alpha == 0.0 || self.pairs.is_empty())
    }

    pub fn probabilities(&self) -> (f64, f64) {
        (self.p_a, self.p_d)
    }

    fn zz_phase(&self, idx: usize) -> f64 {
        self.alpha * zz_energy(idx, self.n, &self.pairs)
    }

    /// Pure-engine step: only the unitary ZZ part is representable.
    pub fn apply_pure(&self, psi: &mut StateVector) -> Result<()> {
        if !self.is_unitary() {
            return Err(Error::Engine("idle step has dissipative parts; use the density engine".into()));
        }
        check_dim(1 << self.n, psi.dim())?;
        if self.is_identity() {
            return Ok(());
        }
        for (a, amp) in psi.amplitudes_mut().iter_mut().enumerate() {
            *amp *= (-I * self.zz_phase(a)).exp();
        }
        Ok(())
    }

    pub fn apply_density(&self, rho: &mut DensityOperator) -> Result<()> {
        check_dim(1 << self.n, rho.dim())?;
        self.apply_matrix(rho.matrix_mut());
        Ok(())
    }

    pub(crate) fn apply_matrix(&self, m: &mut Array2<C64>) {
        let n = self.n;
        let d = 1usize << n;
        if self.p_d > 0.0 {
            let f = 1.0 - 2.0 * self.p_d;
            let powers: Vec<f64> = (0..=n as i32).map(|k| f.powi(k)).collect();
            for ((a, b), v) in m.indexed_iter_mut() {
                *v *= powers[(a ^ b).count_ones() as usize];
            }
        }
        let zz = self.alpha != 0.0 && !self.pairs.is_empty();
        match (zz, self.p_a > 0.0) {
            (false, false) => {}
            (true, false) => {
                let phases: Vec<C64> = (0..d).map(|a| (-I * self.zz_phase(a)).exp()).collect();
                for ((a, b), v) in m.indexed_iter_mut() {
                    *v *= phases[a] * phases[b].conj();
                }
            }
            (false, true) => {
                let ks = damping_kraus_1q(self.p_a);
                for q in 0..n {
                    let mut acc = Array2::<C64>::zeros((d, d));
                    for k in &ks {
                        let mut t = m.clone();
                        conjugate_local(&mut t, n, &[q], k);
                        acc += &t;
                    }
                    *m = acc;
                }
            }
            (true, true) => self.apply_joint(m),
        }
    }

    /// exp(ℒ_ZZ + ℒ_damp) for one step, via its action on vec(ρ).
    fn apply_joint(&self, m: &mut Array2<C64>) {
        let n = self.n;
        let d = 1usize << n;
        let energy: Vec<f64> = (0..d).map(|a| self.zz_phase(a)).collect();
        // Damping rate per step such that the |1⟩ population decays by 1 − p_A.
        let gamma = -(1.0 - self.p_a).ln();
        let excited: Vec<f64> = (0..d).map(|a| a.count_ones() as f64).collect();
        let apply = |x: &[C64], out: &mut [C64]| {
            for a in 0..d {
                for b in 0..d {
                    let v = x[a * d + b];
                    let mut acc = -I * (energy[a] - energy[b]) * v;
                    acc -= 0.5 * gamma * (excited[a] + excited[b]) * v;
                    for q in 0..n {
                        let bit = 1usize << (n - 1 - q);
                        if a & bit == 0 && b & bit == 0 {
                            acc += gamma * x[(a | bit) * d + (b | bit)];
                        }
                    }
                    out[a * d + b] = acc;
                }
            }
        };
        let max_e = energy.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
        let bound = 2.0 * max_e + 2.0 * gamma * n as f64;
        let v = m.as_slice().expect("standard layout").to_vec();
        let out = expm_action(apply, bound, &v);
        m.as_slice_mut().expect("standard layout").copy_from_slice(&out);
    }
}
