//! Rotation axis and per-gate angle from three points of a single-qubit
//! Bloch trajectory.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channels::{apply_channel, Channel};
use crate::error::{Error, Result};
use crate::operator::{check_targets, DensityOperator, StateVector, C64};
use crate::simulator::{partial_trace, pauli_expectation};

const MIN_AREA: f64 = 1e-9;
const MIN_RADIUS: f64 = 1e-6;
/// Allowed mismatch between the end-to-end angle and the sum of the two
/// step angles before a trajectory is treated as aliased.
const ALIAS_TOL: f64 = 0.05;

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Angle between two vectors in `[0, π]`.
pub fn vector_angle(a: Vec3, b: Vec3) -> f64 {
    let c = dot(a, b) / (norm(a) * norm(b));
    c.clamp(-1.0, 1.0).acos()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochPoint {
    pub xyz: Vec3,
    pub step: usize,
    /// Crosstalk gates per timestep.
    pub g: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisFit {
    pub axis: Vec3,
    pub center: Vec3,
    pub delta: f64,
    pub min_separation: f64,
    pub circumradius: f64,
}

/// `(⟨X⟩, ⟨Y⟩, ⟨Z⟩)` of qubit `i`, computed on the reduced state.
pub fn bloch_coordinates(rho: &DensityOperator, qubit: usize) -> Result<Vec3> {
    check_targets(&[qubit], rho.n_qubits())?;
    let r = partial_trace(rho, &[qubit])?;
    Ok([
        pauli_expectation(&r, "X")?,
        pauli_expectation(&r, "Y")?,
        pauli_expectation(&r, "Z")?,
    ])
}

/// Circumcenter from barycentric weights `h_μ²(Σ_{ν≠μ} h_ν² − h_μ²)`,
/// normalized by their sum.
pub fn circumcenter(p1: Vec3, p2: Vec3, p3: Vec3) -> Result<Vec3> {
    let area = norm(cross(sub(p2, p1), sub(p3, p1))) / 2.0;
    if !(area >= MIN_AREA) {
        return Err(Error::Degenerate(format!("triangle area {area:.3e} below {MIN_AREA:.0e}")));
    }
    // h_μ is the side opposite vertex μ.
    let h2 = [
        dot(sub(p2, p3), sub(p2, p3)),
        dot(sub(p1, p3), sub(p1, p3)),
        dot(sub(p1, p2), sub(p1, p2)),
    ];
    let total: f64 = h2.iter().sum();
    let b: Vec<f64> = h2.iter().map(|&h| h * (total - h - h)).collect();
    let bsum: f64 = b.iter().sum();
    let pts = [p1, p2, p3];
    let mut o = [0.0; 3];
    for (w, p) in b.iter().zip(pts) {
        for c in 0..3 {
            o[c] += w * p[c] / bsum;
        }
    }
    let radius = h2.iter().map(|h| h.sqrt()).product::<f64>() / (4.0 * area);
    if radius < MIN_RADIUS {
        return Err(Error::Degenerate(format!("circumradius {radius:.3e} below {MIN_RADIUS:.0e}")));
    }
    Ok(o)
}

/// `arccos[(xᵢ−O)·(xⱼ−O) / (‖xᵢ−O‖‖xⱼ−O‖)] / (g(j−i))`.
pub fn angle_per_gate(xi: Vec3, xj: Vec3, g: usize, i: usize, j: usize, center: Vec3) -> Result<f64> {
    if j <= i || g == 0 {
        return Err(Error::InvalidParameter("need i < j and g ≥ 1".into()));
    }
    let (a, b) = (sub(xi, center), sub(xj, center));
    if norm(a) < MIN_RADIUS || norm(b) < MIN_RADIUS {
        return Err(Error::Degenerate("point coincides with the center".into()));
    }
    Ok(vector_angle(a, b) / (g * (j - i)) as f64)
}

/// Axis, center and per-gate angle from three trajectory points in order.
pub fn fit_rotation_axis(points: &[BlochPoint; 3]) -> Result<AxisFit> {
    let [a, b, c] = points;
    if !(a.step < b.step && b.step < c.step) {
        return Err(Error::InvalidParameter("points must be in increasing step order".into()));
    }
    if a.g != b.g || b.g != c.g {
        return Err(Error::InvalidParameter("points must share g".into()));
    }
    let o = circumcenter(a.xyz, b.xyz, c.xyz)?;
    let (ra, rb, rc) = (sub(a.xyz, o), sub(b.xyz, o), sub(c.xyz, o));
    // Both consecutive cross products point along the axis for arcs below π.
    let k1 = cross(ra, rb);
    let k2 = cross(rb, rc);
    let k = [k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2]];
    let kn = norm(k);
    if kn < MIN_AREA {
        return Err(Error::Degenerate("cross product vanishes".into()));
    }
    let axis = k.map(|x| x / kn);
    let step_ab = vector_angle(ra, rb);
    let step_bc = vector_angle(rb, rc);
    let span = vector_angle(ra, rc);
    if (step_ab + step_bc - span).abs() > ALIAS_TOL {
        return Err(Error::Degenerate(format!(
            "trajectory aliased: step angles {step_ab:.4} + {step_bc:.4} exceed span {span:.4}"
        )));
    }
    let delta = angle_per_gate(a.xyz, c.xyz, a.g, a.step, c.step, o)?;
    if a.g as f64 * (c.step - a.step) as f64 * delta >= PI {
        return Err(Error::Degenerate("total rotation reaches π".into()));
    }
    let min_separation = [norm(sub(a.xyz, b.xyz)), norm(sub(b.xyz, c.xyz)), norm(sub(a.xyz, c.xyz))]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(AxisFit { axis, center: o, delta, min_separation, circumradius: norm(ra) })
}

/// Pure single-qubit state with Bloch vector `v` (unit).
pub fn bloch_state(v: Vec3) -> StateVector {
    let theta = v[2].clamp(-1.0, 1.0).acos();
    let phi = v[1].atan2(v[0]);
    let amps = ndarray::Array1::from(vec![
        C64::new((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    ]);
    StateVector::normalized(amps).expect("nonzero amplitudes")
}

fn perpendicular(k: Vec3) -> Vec3 {
    let e = if k[0].abs() <= k[1].abs() && k[0].abs() <= k[2].abs() {
        [1.0, 0.0, 0.0]
    } else if k[1].abs() <= k[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let p = cross(k, e);
    let n = norm(p);
    p.map(|x| x / n)
}

fn trajectory(ch: &Channel, n: usize, qubit: usize, start: Vec3) -> Result<[BlochPoint; 3]> {
    let local = bloch_state(start);
    let mut psi = StateVector::basis(0, 0);
    for q in 0..n {
        let f = if q == qubit { local.clone() } else { StateVector::zero(1) };
        psi = if q == 0 { f } else { psi.tensor(&f) };
    }
    let mut rho = psi.density();
    let mut pts = [BlochPoint { xyz: [0.0; 3], step: 0, g: 1 }; 3];
    for (step, p) in pts.iter_mut().enumerate() {
        if step > 0 {
            rho = apply_channel(ch, &rho)?;
        }
        *p = BlochPoint { xyz: bloch_coordinates(&rho, qubit)?, step, g: 1 };
    }
    Ok(pts)
}

/// Fits the rotation one crosstalk event induces on `qubit`, other qubits
/// held in |0⟩. A first fit from whichever basis start gives the widest
/// circle fixes the axis; the reported fit starts perpendicular to it.
pub fn characterize_qubit(ch: &Channel, n: usize, qubit: usize) -> Result<AxisFit> {
    check_targets(&[qubit], n)?;
    let mut first: Option<AxisFit> = None;
    for start in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
        if let Ok(fit) = fit_rotation_axis(&trajectory(ch, n, qubit, start)?) {
            if first.is_none_or(|f| fit.circumradius > f.circumradius) {
                first = Some(fit);
            }
        }
    }
    let first = first.ok_or_else(|| Error::Degenerate(format!("no usable trajectory on qubit {qubit}")))?;
    fit_rotation_axis(&trajectory(ch, n, qubit, perpendicular(first.axis))?)
}
