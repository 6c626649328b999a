use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csmqc::channels::{
    amplitude_damping_channel, dephasing_channel, exponentiate_generator, idle_generator,
    transition_probs, Channel, IdleNoiseParams, IdleStep,
};
use csmqc::characterize::{circumcenter, fit_rotation_axis, vector_angle, BlochPoint};
use csmqc::operator::{
    pauli_string_matrix, rotation_operator, sandwich_superop, vectorize, DensityOperator, Operator,
    StateVector, C64,
};
use csmqc::protocol::{dd_stabilizer, mghz_state, transformed_pauli, anticommutator_norm, SpectatorPlan};
use csmqc::simulator::{partial_trace, postselect, ShotRecord};

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> Array2<C64> {
    Array2::from_shape_fn((d, d), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> DensityOperator {
    let g = random_matrix(rng, 1 << n);
    let m = g.dot(&g.t().mapv(|z| z.conj()));
    let tr: f64 = m.diag().iter().map(|z| z.re).sum();
    DensityOperator::new(m.mapv(|z| z / tr)).unwrap()
}

fn random_axis(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn pauli_label() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['I', 'X', 'Y', 'Z']), 1..4)
        .prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paulis_square_to_identity_and_commute_or_anticommute(a in pauli_label(), seed in any::<u64>()) {
        let p = pauli_string_matrix(&a).unwrap();
        let d = p.dim();
        prop_assert!(p.dot(&p).max_abs_diff(&Operator::identity(d)) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: String = (0..a.len()).map(|_| ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)]).collect();
        let q = pauli_string_matrix(&b).unwrap();
        let pq = p.dot(&q);
        let qp = q.dot(&p);
        let comm = pq.max_abs_diff(&qp);
        let anti = pq.add(&qp).unwrap().max_abs_diff(&Operator::zeros(d));
        prop_assert!(comm < 1e-15 || anti < 1e-15);
    }

    #[test]
    fn exp_of_negated_generator_is_inverse(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Operator::new(random_matrix(&mut rng, 1 << n)).unwrap();
        let e = a.exp().unwrap();
        let f = a.scale(C64::new(-1.0, 0.0)).exp().unwrap();
        prop_assert!(e.dot(&f).max_abs_diff(&Operator::identity(1 << n)) < 1e-9);
    }

    #[test]
    fn rotations_about_one_axis_compose(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_axis(&mut rng);
        let ra = rotation_operator(k, a).unwrap();
        let rb = rotation_operator(k, b).unwrap();
        prop_assert!(ra.dot(&rb).max_abs_diff(&rotation_operator(k, a + b).unwrap()) < 1e-12);
    }

    #[test]
    fn sandwich_matches_vectorized_product(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Operator::new(random_matrix(&mut rng, 4)).unwrap();
        let b = Operator::new(random_matrix(&mut rng, 4)).unwrap();
        let rho = random_density(&mut rng, 2);
        let direct = a.matrix().dot(rho.matrix()).dot(&b.adjoint().into_matrix());
        let via = sandwich_superop(&a, &b).unwrap().matrix().dot(&vectorize(&rho));
        let want = csmqc::operator::vectorize_matrix(&direct);
        let err = via.iter().zip(want.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn circumcenter_is_equidistant_and_order_free(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<[f64; 3]> = (0..3).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let Ok(o) = circumcenter(p[0], p[1], p[2]) else { return Ok(()) };
        let r: Vec<f64> = p.iter().map(|x| (0..3).map(|c| (x[c] - o[c]).powi(2)).sum::<f64>().sqrt()).collect();
        let scale = r[0].max(1.0);
        prop_assert!((r[0] - r[1]).abs() < 1e-8 * scale && (r[0] - r[2]).abs() < 1e-8 * scale);
        let q = circumcenter(p[2], p[0], p[1]).unwrap();
        prop_assert!((0..3).all(|c| (q[c] - o[c]).abs() < 1e-9 * scale));
    }

    #[test]
    fn axis_fit_recovers_rotation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_axis(&mut rng);
        let start = random_axis(&mut rng);
        let s = (0..3).map(|c| k[(c + 1) % 3] * start[(c + 2) % 3] - k[(c + 2) % 3] * start[(c + 1) % 3]);
        prop_assume!(s.map(|x| x * x).sum::<f64>().sqrt() > 0.2);
        let delta = rng.random_range(1e-2..std::f64::consts::FRAC_PI_4);
        let psi = csmqc::characterize::bloch_state(start);
        let pts: [BlochPoint; 3] = std::array::from_fn(|step| {
            let u = rotation_operator(k, delta * step as f64).unwrap();
            let rho = psi.density().conjugate(&u).unwrap();
            BlochPoint { xyz: csmqc::characterize::bloch_coordinates(&rho, 0).unwrap(), step, g: 1 }
        });
        let fit = fit_rotation_axis(&pts).unwrap();
        prop_assert!(vector_angle(fit.axis, k) < 1e-6);
        prop_assert!((fit.delta - delta).abs() < 1e-6);
    }

    #[test]
    fn local_expectation_only_needs_the_reduced_state(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(&mut rng, 3);
        let i = rng.random_range(0..3);
        let u = rotation_operator(random_axis(&mut rng), rng.random_range(-3.0..3.0)).unwrap();
        let full = u.embed(&[i], 3).unwrap().matrix().dot(rho.matrix()).diag().sum();
        let red = partial_trace(&rho, &[i]).unwrap();
        let local = u.matrix().dot(red.matrix()).diag().sum();
        prop_assert!((full - local).norm() < 1e-12);
    }

    #[test]
    fn kraus_and_lindblad_idle_agree(seed in any::<u64>(), t1 in 20.0f64..300.0, ratio in 0.1f64..2.0, tau in 0.01f64..5.0) {
        let p = IdleNoiseParams::new(t1, ratio * t1, tau, 0.0).unwrap();
        let (pa, pd) = transition_probs(&p);
        let deph = dephasing_channel(pd, 2).unwrap();
        let damp = amplitude_damping_channel(pa, 2).unwrap();
        let gen = idle_generator(&p, 2, &[]).unwrap();
        let lind = exponentiate_generator(&gen, 4, tau).unwrap();
        let step = IdleStep::new(&p, 2, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let rho = random_density(&mut rng, 2);
            let k = damp.apply(&deph.apply(&rho).unwrap()).unwrap();
            let l = lind.apply(&rho).unwrap();
            let mut s = rho.clone();
            step.apply_density(&mut s).unwrap();
            prop_assert!(k.max_abs_diff(&l) < 1e-8);
            prop_assert!(k.max_abs_diff(&s) < 1e-8);
        }
    }

    #[test]
    fn noisy_idle_preserves_trace_and_hermiticity(seed in any::<u64>(), alpha in 0.0f64..0.5) {
        let p = IdleNoiseParams::new(150.0, 100.0, 0.5, alpha).unwrap();
        let step = IdleStep::new(&p, 3, &csmqc::channels::chain_pairs(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rho = random_density(&mut rng, 3);
        for _ in 0..5 {
            step.apply_density(&mut rho).unwrap();
        }
        prop_assert!((rho.trace() - 1.0).abs() < 1e-9);
        prop_assert!(rho.validate().is_ok());
    }

    #[test]
    fn mghz_is_fixed_by_the_stabilizer(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axes: Vec<[f64; 3]> = (0..n).map(|_| random_axis(&mut rng)).collect();
        let plan = SpectatorPlan::new((0..n).collect(), axes, vec![0.3; n], 0.3 * n as f64).unwrap();
        let psi = mghz_state(&plan).unwrap();
        let s = dd_stabilizer(&plan).unwrap();
        let out = s.apply(&psi).unwrap();
        let err = out.amplitudes().iter().zip(psi.amplitudes().iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9);
        for i in 0..n {
            let label: String = (0..n).map(|j| if j == i { 'Z' } else { 'I' }).collect();
            let z = transformed_pauli(&plan, &label).unwrap();
            prop_assert!(anticommutator_norm(&s, &z) < 1e-10);
        }
    }

    #[test]
    fn postselection_keeps_exactly_the_unflagged(flags in prop::collection::vec(0u8..2, 0..50)) {
        let recs: Vec<ShotRecord> = flags
            .iter()
            .map(|&f| ShotRecord { bits: "00".into(), flag: f, perturbed: f == 1 })
            .collect();
        let (kept, discard) = postselect(&recs);
        prop_assert!(kept.iter().all(|r| r.flag == 0));
        prop_assert_eq!(kept.len(), flags.iter().filter(|&&f| f == 0).count());
        if !flags.is_empty() {
            prop_assert!((discard - (1.0 - kept.len() as f64 / flags.len() as f64)).abs() < 1e-15);
        }
    }
}

#[test]
fn unitary_crosstalk_keeps_pure_states_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = rotation_operator(random_axis(&mut rng), 0.7).unwrap().embed(&[1], 3).unwrap();
    let ch = Channel::Unitary(u.clone());
    let mut psi = StateVector::zero(3);
    for _ in 0..10 {
        psi = u.apply(&psi).unwrap();
    }
    assert!((psi.norm() - 1.0).abs() < 1e-12);
    assert!(ch.cptp_check().passed);
}
