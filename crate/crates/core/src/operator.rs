//! Dense complex-matrix algebra on qubit registers.
//!
//! Conventions used throughout the crate:
//!
//! * qubit 0 is the leftmost tensor factor, i.e. the most significant bit of
//!   a computational-basis index;
//! * density operators are vectorized by column stacking, so that
//!   `vec(A ρ B†) = (conj(B) ⊗ A) vec(ρ)`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

const UNIT_AXIS_TOL: f64 = 1e-9;

/// Returns `log2(dim)` if `dim` is a power of two greater than one.
pub fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Square operator on a register of qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: Array2<C64>,
}

impl Operator {
    pub fn new(mat: Array2<C64>) -> Result<Self> {
        let (rows, cols) = mat.dim();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        qubits_for_dim(rows)?;
        Ok(Operator { mat })
    }

    pub fn identity(dim: usize) -> Self {
        Operator { mat: Array2::eye(dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Operator { mat: Array2::zeros((dim, dim)) }
    }

    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let n = rows.len();
        let mut mat = Array2::zeros((n, n));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare { rows: n, cols: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                mat[[i, j]] = v;
            }
        }
        Operator::new(mat)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.mat
    }

    pub fn adjoint(&self) -> Operator {
        Operator { mat: adjoint(&self.mat) }
    }

    pub fn dot(&self, other: &Operator) -> Operator {
        Operator { mat: self.mat.dot(&other.mat) }
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator { mat: self.mat.mapv(|z| z * c) }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        check_dim(self.dim(), other.dim())?;
        Ok(Operator { mat: &self.mat + &other.mat })
    }

    pub fn trace(&self) -> C64 {
        self.mat.diag().sum()
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        max_abs_diff(&self.mat, &other.mat)
    }

    /// `‖A − B‖_max` minimised over a global phase on `B`.
    pub fn diff_up_to_phase(&self, other: &Operator) -> f64 {
        let overlap: C64 = self
            .mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| b.conj() * a)
            .sum();
        let phase = if overlap.norm() > 1e-300 { overlap / overlap.norm() } else { ONE };
        max_abs_diff(&self.mat, &other.mat.mapv(|z| z * phase))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        max_abs_diff(&self.mat, &adjoint(&self.mat)) < tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = adjoint(&self.mat).dot(&self.mat);
        max_abs_diff(&prod, &Array2::eye(self.dim())) < tol
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), psi.dim())?;
        Ok(StateVector { amps: self.mat.dot(&psi.amps) })
    }

    /// Embeds a `k`-qubit operator acting on `targets` into an `n`-qubit register.
    pub fn embed(&self, targets: &[usize], n_qubits: usize) -> Result<Operator> {
        check_targets(targets, n_qubits)?;
        check_dim(1 << targets.len(), self.dim())?;
        let dim = 1usize << n_qubits;
        let k = targets.len();
        let tmask: usize = targets.iter().map(|&t| 1usize << (n_qubits - 1 - t)).sum();
        let local = |idx: usize| -> usize {
            targets
                .iter()
                .enumerate()
                .map(|(pos, &t)| ((idx >> (n_qubits - 1 - t)) & 1) << (k - 1 - pos))
                .sum()
        };
        let mut mat = Array2::zeros((dim, dim));
        for i in 0..dim {
            let li = local(i);
            for j in 0..dim {
                if i & !tmask != j & !tmask {
                    continue;
                }
                mat[[i, j]] = self.mat[[li, local(j)]];
            }
        }
        Ok(Operator { mat })
    }

    pub fn exp(&self) -> Result<Operator> {
        Ok(Operator { mat: expm(&self.mat)? })
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn check_targets(targets: &[usize], n_qubits: usize) -> Result<()> {
    for (i, &t) in targets.iter().enumerate() {
        if t >= n_qubits {
            return Err(Error::InvalidParameter(format!(
                "qubit {t} out of range for {n_qubits}-qubit register"
            )));
        }
        if targets[..i].contains(&t) {
            return Err(Error::InvalidParameter(format!("repeated target qubit {t}")));
        }
    }
    Ok(())
}

/// Single-qubit Pauli matrix for one of `I`, `X`, `Y`, `Z`.
pub fn pauli(c: char) -> Result<Array2<C64>> {
    let m = match c {
        'I' => [[ONE, ZERO], [ZERO, ONE]],
        'X' => [[ZERO, ONE], [ONE, ZERO]],
        'Y' => [[ZERO, -I], [I, ZERO]],
        'Z' => [[ONE, ZERO], [ZERO, -ONE]],
        _ => return Err(Error::InvalidPauli(c.to_string())),
    };
    Ok(Array2::from_shape_fn((2, 2), |(i, j)| m[i][j]))
}

/// Tensor product of single-qubit Paulis, leftmost character on qubit 0.
pub fn pauli_string_matrix(label: &str) -> Result<Operator> {
    if label.is_empty() || !label.chars().all(|c| "IXYZ".contains(c)) {
        return Err(Error::InvalidPauli(label.to_string()));
    }
    let mut mat = Array2::eye(1);
    for c in label.chars() {
        mat = kron(&mat, &pauli(c)?);
    }
    Ok(Operator { mat })
}

pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator { mat: kron(&a.mat, &b.mat) }
}

pub fn tensor_all<'a>(ops: impl IntoIterator<Item = &'a Operator>) -> Option<Operator> {
    ops.into_iter()
        .fold(None, |acc: Option<Operator>, op| match acc {
            None => Some(op.clone()),
            Some(a) => Some(tensor(&a, op)),
        })
}

pub fn matrix_exp(a: &Operator) -> Result<Operator> {
    a.exp()
}

/// Matrix exponential of a square matrix.
///
/// Hermitian and anti-Hermitian inputs go through an eigendecomposition;
/// everything else uses Padé scaling-and-squaring.
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-14 * scale;
    let ah = adjoint(a);
    if max_abs_diff(a, &ah) <= tol {
        return Ok(expm_hermitian(a, ONE));
    }
    if a.iter().zip(ah.iter()).all(|(x, y)| (x + y).norm() <= tol) {
        // A = iH with H = -iA Hermitian.
        let h = a.mapv(|z| -I * z);
        return Ok(expm_hermitian(&h, I));
    }
    expm_pade(a)
}

/// `exp(c·H)` for Hermitian `H` via `V diag(exp(c·λ)) V†`.
pub fn expm_hermitian(h: &Array2<C64>, c: C64) -> Array2<C64> {
    let (vals, vecs) = hermitian_eigh(h);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let f = (c * vals[j]).exp();
        for i in 0..n {
            scaled[[i, j]] *= f;
        }
    }
    scaled.dot(&adjoint(&vecs))
}

/// Eigenvalues (ascending order not guaranteed) and column eigenvectors of a
/// Hermitian matrix.
pub fn hermitian_eigh(h: &Array2<C64>) -> (Vec<f64>, Array2<C64>) {
    let n = h.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[[i, j]] + h[[j, i]].conj()));
    let eig = SymmetricEigen::new(m);
    let vals = eig.eigenvalues.iter().copied().collect();
    let vecs = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, j)]);
    (vals, vecs)
}

pub fn hermitian_eigenvalues(h: &Array2<C64>) -> Vec<f64> {
    let n = h.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[[i, j]] + h[[j, i]].conj()));
    m.symmetric_eigenvalues().iter().copied().collect()
}

const PADE_THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
    }
}

fn norm1(a: &Array2<C64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scaled_identity(n: usize, c: f64) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(c, 0.0))
}

/// Scaling-and-squaring with diagonal Padé approximants (Higham 2005).
pub fn expm_pade(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let norm = norm1(a);
    if norm == 0.0 {
        return Ok(Array2::eye(n));
    }
    for &(m, theta) in &PADE_THETA[..4] {
        if norm <= theta {
            let (u, v) = pade_low(a, m);
            return solve_pade(&u, &v);
        }
    }
    let theta13 = PADE_THETA[4].1;
    let s = ((norm / theta13).log2().ceil()).max(0.0) as i32;
    let a = a.mapv(|z| z / 2f64.powi(s));
    let (u, v) = pade13(&a);
    let mut r = solve_pade(&u, &v)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

fn pade_low(a: &Array2<C64>, m: usize) -> (Array2<C64>, Array2<C64>) {
    let n = a.nrows();
    let b = pade_coefficients(m);
    let a2 = a.dot(a);
    let mut powers = vec![Array2::<C64>::eye(n), a2.clone()];
    for k in 2..=m / 2 {
        let next = powers[k - 1].dot(&a2);
        powers.push(next);
    }
    let mut u_inner = Array2::<C64>::zeros((n, n));
    let mut v = Array2::<C64>::zeros((n, n));
    for k in 0..=m / 2 {
        u_inner.scaled_add(C64::new(b[2 * k + 1], 0.0), &powers[k]);
        v.scaled_add(C64::new(b[2 * k], 0.0), &powers[k]);
    }
    (a.dot(&u_inner), v)
}

fn pade13(a: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
    let n = a.nrows();
    let b = pade_coefficients(13);
    let c = |x: f64| C64::new(x, 0.0);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let mut inner = a6.mapv(|z| z * b[13]);
    inner.scaled_add(c(b[11]), &a4);
    inner.scaled_add(c(b[9]), &a2);
    let mut u = a6.dot(&inner);
    u.scaled_add(c(b[7]), &a6);
    u.scaled_add(c(b[5]), &a4);
    u.scaled_add(c(b[3]), &a2);
    u = u + scaled_identity(n, b[1]);
    let u = a.dot(&u);
    let mut inner = a6.mapv(|z| z * b[12]);
    inner.scaled_add(c(b[10]), &a4);
    inner.scaled_add(c(b[8]), &a2);
    let mut v = a6.dot(&inner);
    v.scaled_add(c(b[6]), &a6);
    v.scaled_add(c(b[4]), &a4);
    v.scaled_add(c(b[2]), &a2);
    v = v + scaled_identity(n, b[0]);
    (u, v)
}

fn solve_pade(u: &Array2<C64>, v: &Array2<C64>) -> Result<Array2<C64>> {
    let n = u.nrows();
    let p = DMatrix::from_fn(n, n, |i, j| v[[i, j]] + u[[i, j]]);
    let q = DMatrix::from_fn(n, n, |i, j| v[[i, j]] - u[[i, j]]);
    let x = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Engine("singular Padé denominator".into()))?;
    Ok(Array2::from_shape_fn((n, n), |(i, j)| x[(i, j)]))
}

/// `exp(A)·v` for a linear map given only through its action, by truncated
/// Taylor series over substeps of norm at most 4.
///
/// `norm_bound` must bound an induced norm of `A`.
pub fn expm_action<F>(apply: F, norm_bound: f64, v: &[C64]) -> Vec<C64>
where
    F: Fn(&[C64], &mut [C64]),
{
    // Substeps of norm ≤ 4 keep the largest Taylor term below ~11, so
    // cancellation costs at most one digit.
    let steps = (norm_bound / 4.0).ceil().max(1.0) as usize;
    let mut acc = v.to_vec();
    let mut term = vec![ZERO; v.len()];
    let mut next = vec![ZERO; v.len()];
    for _ in 0..steps {
        term.copy_from_slice(&acc);
        for k in 1..=120 {
            apply(&term, &mut next);
            let f = 1.0 / (steps as f64 * k as f64);
            let mut term_norm: f64 = 0.0;
            for (t, x) in term.iter_mut().zip(next.iter()) {
                *t = x * f;
                term_norm = term_norm.max(t.norm());
            }
            let mut acc_norm: f64 = 0.0;
            for (a, t) in acc.iter_mut().zip(term.iter()) {
                *a += t;
                acc_norm = acc_norm.max(a.norm());
            }
            if term_norm <= 1e-17 * acc_norm.max(1e-300) {
                break;
            }
        }
    }
    acc
}

/// Unit-norm check shared by everything that accepts an axis.
pub fn check_unit_axis(axis: &[f64]) -> Result<()> {
    let norm = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_AXIS_TOL || !norm.is_finite() {
        return Err(Error::NonUnitAxis(norm));
    }
    Ok(())
}

/// `exp(-i (angle/2) axis·σ)`.
pub fn rotation_operator(axis: [f64; 3], angle: f64) -> Result<Operator> {
    check_unit_axis(&axis)?;
    Ok(rotation_unchecked(axis, angle))
}

pub(crate) fn rotation_unchecked(axis: [f64; 3], angle: f64) -> Operator {
    let (s, c) = (angle / 2.0).sin_cos();
    let [x, y, z] = axis;
    let m = [
        [C64::new(c, -s * z), C64::new(-s * y, -s * x)],
        [C64::new(s * y, -s * x), C64::new(c, s * z)],
    ];
    Operator { mat: Array2::from_shape_fn((2, 2), |(i, j)| m[i][j]) }
}

/// `axis·σ` for a real 3-vector.
pub fn pauli_vector_dot(axis: [f64; 3]) -> Operator {
    let [x, y, z] = axis;
    let m = [
        [C64::new(z, 0.0), C64::new(x, -y)],
        [C64::new(x, y), C64::new(-z, 0.0)],
    ];
    Operator { mat: Array2::from_shape_fn((2, 2), |(i, j)| m[i][j]) }
}

/// Normalized pure state on a register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Array1<C64>,
}

impl StateVector {
    pub fn new(amps: Array1<C64>) -> Result<Self> {
        qubits_for_dim(amps.len())?;
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("state norm {norm} is not 1")));
        }
        Ok(StateVector { amps })
    }

    /// Normalizes `amps`; fails only on a zero or non-power-of-two vector.
    pub fn normalized(amps: Array1<C64>) -> Result<Self> {
        qubits_for_dim(amps.len())?;
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize zero vector".into()));
        }
        Ok(StateVector { amps: amps.mapv(|z| z / norm) })
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = Array1::zeros(1 << n_qubits);
        amps[index] = ONE;
        StateVector { amps }
    }

    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut Array1<C64> {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(other.amps.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let mut amps = Array1::zeros(self.dim() * other.dim());
        for (i, a) in self.amps.iter().enumerate() {
            for (j, b) in other.amps.iter().enumerate() {
                amps[i * other.dim() + j] = a * b;
            }
        }
        StateVector { amps }
    }

    pub fn density(&self) -> DensityOperator {
        let d = self.dim();
        let mat = Array2::from_shape_fn((d, d), |(i, j)| self.amps[i] * self.amps[j].conj());
        DensityOperator { mat }
    }

    /// Applies a local operator on `targets` in place.
    pub fn apply_local(&mut self, targets: &[usize], op: &Array2<C64>) -> Result<()> {
        let n = self.n_qubits();
        check_targets(targets, n)?;
        check_dim(1 << targets.len(), op.nrows())?;
        let data = self.amps.as_slice_mut().expect("contiguous state");
        apply_local_strided(data, n, targets, op, 0, 1);
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    mat: Array2<C64>,
}

impl DensityOperator {
    pub fn new(mat: Array2<C64>) -> Result<Self> {
        let rho = DensityOperator { mat };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(mat: Array2<C64>) -> Self {
        DensityOperator { mat }
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.mat.dim();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        qubits_for_dim(rows)?;
        if max_abs_diff(&self.mat, &adjoint(&self.mat)) > 1e-10 {
            return Err(Error::InvalidState("density operator not Hermitian".into()));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = hermitian_eigenvalues(&self.mat).into_iter().fold(f64::INFINITY, f64::min);
        if min < -1e-9 {
            return Err(Error::InvalidState(format!("negative eigenvalue {min}")));
        }
        Ok(())
    }

    pub fn zero(n_qubits: usize) -> Self {
        StateVector::zero(n_qubits).density()
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        DensityOperator { mat: Array2::from_diag_elem(d, C64::new(1.0 / d as f64, 0.0)) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.mat
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Array2<C64> {
        &mut self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diag().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs_diff(&self, other: &DensityOperator) -> f64 {
        max_abs_diff(&self.mat, &other.mat)
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator { mat: kron(&self.mat, &other.mat) }
    }

    /// `U ρ U†` for a full-register operator.
    pub fn conjugate(&self, u: &Operator) -> Result<DensityOperator> {
        check_dim(u.dim(), self.dim())?;
        Ok(DensityOperator { mat: u.matrix().dot(&self.mat).dot(&adjoint(u.matrix())) })
    }

    /// `U ρ U†` for `U` acting on `targets` only, in place.
    pub fn apply_local(&mut self, targets: &[usize], op: &Array2<C64>) -> Result<()> {
        let n = self.n_qubits();
        check_targets(targets, n)?;
        check_dim(1 << targets.len(), op.nrows())?;
        conjugate_local(&mut self.mat, n, targets, op);
        Ok(())
    }

    /// Diagonal of ρ in the computational basis.
    pub fn probabilities(&self) -> Vec<f64> {
        self.mat.diag().iter().map(|z| z.re.max(0.0)).collect()
    }
}

/// In-place `M ← U M U†` with `U` local to `targets`.
pub(crate) fn conjugate_local(mat: &mut Array2<C64>, n: usize, targets: &[usize], op: &Array2<C64>) {
    let d = 1usize << n;
    let conj_op = op.mapv(|z| z.conj());
    let data = mat.as_slice_mut().expect("standard layout");
    // Row-major storage: column j is strided by d, row i is contiguous.
    for j in 0..d {
        apply_local_strided(data, n, targets, op, j, d);
    }
    for i in 0..d {
        apply_local_strided(data, n, targets, &conj_op, i * d, 1);
    }
}

/// Applies a `2^k × 2^k` operator on `targets` to the vector
/// `data[offset + stride·idx]` for `idx` over the `2^n` basis.
pub(crate) fn apply_local_strided(
    data: &mut [C64],
    n: usize,
    targets: &[usize],
    op: &Array2<C64>,
    offset: usize,
    stride: usize,
) {
    let k = targets.len();
    let local_dim = 1usize << k;
    let offsets: Vec<usize> = (0..local_dim)
        .map(|l| {
            targets
                .iter()
                .enumerate()
                .map(|(pos, &t)| ((l >> (k - 1 - pos)) & 1) << (n - 1 - t))
                .sum()
        })
        .collect();
    let tmask: usize = offsets[local_dim - 1];
    let mut buf = vec![ZERO; local_dim];
    let mut out = vec![ZERO; local_dim];
    for base in 0..(1usize << n) {
        if base & tmask != 0 {
            continue;
        }
        for (l, &o) in offsets.iter().enumerate() {
            buf[l] = data[offset + stride * (base + o)];
        }
        for (r, slot) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (c, b) in buf.iter().enumerate() {
                acc += op[[r, c]] * b;
            }
            *slot = acc;
        }
        for (l, &o) in offsets.iter().enumerate() {
            data[offset + stride * (base + o)] = out[l];
        }
    }
}

/// Linear map on vectorized density operators.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperator {
    mat: Array2<C64>,
}

impl SuperOperator {
    pub fn new(mat: Array2<C64>) -> Result<Self> {
        let (rows, cols) = mat.dim();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        let q = qubits_for_dim(rows)?;
        if q % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "superoperator dimension {rows} is not a power of four"
            )));
        }
        Ok(SuperOperator { mat })
    }

    pub fn identity(state_dim: usize) -> Self {
        SuperOperator { mat: Array2::eye(state_dim * state_dim) }
    }

    pub fn zeros(state_dim: usize) -> Self {
        let d2 = state_dim * state_dim;
        SuperOperator { mat: Array2::zeros((d2, d2)) }
    }

    /// Dimension of the density operators this map acts on.
    pub fn state_dim(&self) -> usize {
        1usize << (self.mat.nrows().trailing_zeros() / 2)
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.mat
    }

    pub fn add(&self, other: &SuperOperator) -> Result<SuperOperator> {
        check_dim(self.mat.nrows(), other.mat.nrows())?;
        Ok(SuperOperator { mat: &self.mat + &other.mat })
    }

    pub fn scale(&self, c: f64) -> SuperOperator {
        SuperOperator { mat: self.mat.mapv(|z| z * c) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SuperOperator) -> Result<SuperOperator> {
        check_dim(self.mat.nrows(), other.mat.nrows())?;
        Ok(SuperOperator { mat: self.mat.dot(&other.mat) })
    }

    pub fn exp(&self) -> Result<SuperOperator> {
        Ok(SuperOperator { mat: expm(&self.mat)? })
    }

    pub fn apply_matrix(&self, rho: &Array2<C64>) -> Result<Array2<C64>> {
        check_dim(self.state_dim(), rho.nrows())?;
        let v = vectorize_matrix(rho);
        Ok(devectorize_matrix(&self.mat.dot(&v)))
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        Ok(DensityOperator::from_raw(self.apply_matrix(rho.matrix())?))
    }

    pub fn max_abs_diff(&self, other: &SuperOperator) -> f64 {
        max_abs_diff(&self.mat, &other.mat)
    }
}

/// Column-stacking vectorization: `v[i + j·d] = ρ[i, j]`.
pub fn vectorize(rho: &DensityOperator) -> Array1<C64> {
    vectorize_matrix(rho.matrix())
}

pub fn vectorize_matrix(m: &Array2<C64>) -> Array1<C64> {
    let d = m.nrows();
    Array1::from_shape_fn(d * d, |k| m[[k % d, k / d]])
}

pub fn devectorize(v: &Array1<C64>) -> Result<DensityOperator> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(Error::DimensionMismatch { expected: d * d, found: v.len() });
    }
    qubits_for_dim(d)?;
    DensityOperator::new(devectorize_matrix(v))
}

pub fn devectorize_matrix(v: &Array1<C64>) -> Array2<C64> {
    let d = (v.len() as f64).sqrt().round() as usize;
    Array2::from_shape_fn((d, d), |(i, j)| v[i + j * d])
}

/// Superoperator for `ρ ↦ A ρ B†`, i.e. `conj(B) ⊗ A`.
pub fn sandwich_superop(a: &Operator, b: &Operator) -> Result<SuperOperator> {
    check_dim(a.dim(), b.dim())?;
    Ok(SuperOperator { mat: kron(&b.matrix().mapv(|z| z.conj()), a.matrix()) })
}
