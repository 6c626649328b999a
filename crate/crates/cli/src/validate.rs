//! Self-checks run by `csmqc validate`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use csmqc::channels::{
    amplitude_damping_channel, dephasing_channel, exponentiate_generator, idle_generator, transition_probs, Channel,
    IdleNoiseParams,
};
use csmqc::crosstalk::{hsa_crosstalk_channel, HsaParameterSet};
use csmqc::operator::{rotation_operator, DensityOperator, Operator, C64};
use csmqc::protocol::{
    anticommutator_norm, dd_stabilizer, detection_probability, mghz_state, multi_set_layout_from_deltas,
    transformed_pauli, SpectatorPlan,
};
use csmqc::simulator::{partial_trace, EngineKind};
use csmqc_experiments::detector::{csmqc_layout, IdleScope, LayoutOptions};
use csmqc_experiments::{substream, ExpError};

type Check = Result<String, String>;

fn random_axis(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> DensityOperator {
    let d = 1 << n;
    let g = Array2::from_shape_fn((d, d), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let m = g.dot(&g.t().mapv(|z| z.conj()));
    let tr: f64 = m.diag().iter().map(|z| z.re).sum();
    DensityOperator::new(m.mapv(|z| z / tr)).expect("Gram matrix is a state")
}

fn below(v: f64, tol: f64, what: &str) -> Check {
    let s = format!("{what} {v:.2e}");
    if v < tol {
        Ok(s)
    } else {
        Err(s)
    }
}

fn idle_cptp() -> Check {
    let p = IdleNoiseParams::new(150.0, 100.0, 0.5, 0.01).map_err(|e| e.to_string())?;
    let (pa, pd) = transition_probs(&p);
    let mut worst = 0.0f64;
    for k in [dephasing_channel(pd, 1), amplitude_damping_channel(pa, 1)] {
        let r = Channel::Kraus(k.map_err(|e| e.to_string())?).cptp_check();
        if !r.passed {
            return Err(format!("residual {:.2e}", r.completeness_residual));
        }
        worst = worst.max(r.completeness_residual);
    }
    Ok(format!("completeness residual {worst:.2e}"))
}

fn kraus_lindblad(rng: &mut ChaCha8Rng) -> Check {
    let p = IdleNoiseParams::new(120.0, 80.0, 1.0, 0.0).map_err(|e| e.to_string())?;
    let (pa, pd) = transition_probs(&p);
    let deph = dephasing_channel(pd, 2).map_err(|e| e.to_string())?;
    let damp = amplitude_damping_channel(pa, 2).map_err(|e| e.to_string())?;
    let gen = idle_generator(&p, 2, &[]).map_err(|e| e.to_string())?;
    let lind = exponentiate_generator(&gen, 4, p.tau).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let rho = random_density(rng, 2);
        let k = damp.apply(&deph.apply(&rho).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let l = lind.apply(&rho).map_err(|e| e.to_string())?;
        worst = worst.max(k.max_abs_diff(&l));
    }
    below(worst, 1e-8, "max gap")
}

fn hsa_cptp(params: &HsaParameterSet) -> Check {
    let n = params.max_qubit().map_or(1, |q| q + 1);
    if n > 5 {
        return Ok(format!("skipped dense check on {n} qubits"));
    }
    params.validate(n).map_err(|e| e.to_string())?;
    let s = hsa_crosstalk_channel(params, 1 << n).map_err(|e| e.to_string())?;
    let r = Channel::Superop(s).cptp_check();
    let msg = format!("residual {:.2e}, min Choi eigenvalue {:.2e}", r.completeness_residual, r.min_choi_eigenvalue);
    if r.passed {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn stabilizer(rng: &mut ChaCha8Rng) -> Check {
    let (mut fix, mut anti) = (0.0f64, 0.0f64);
    for n in 1..=4 {
        let axes: Vec<[f64; 3]> = (0..n).map(|_| random_axis(rng)).collect();
        let plan = SpectatorPlan::new((0..n).collect(), axes, vec![PI / n as f64; n], PI).map_err(|e| e.to_string())?;
        let psi = mghz_state(&plan).map_err(|e| e.to_string())?;
        let s = dd_stabilizer(&plan).map_err(|e| e.to_string())?;
        let out = s.apply(&psi).map_err(|e| e.to_string())?;
        fix = fix.max(out.amplitudes().iter().zip(psi.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        for i in 0..n {
            let label: String = (0..n).map(|j| if j == i { 'Z' } else { 'I' }).collect();
            let z = transformed_pauli(&plan, &label).map_err(|e| e.to_string())?;
            anti = anti.max(anticommutator_norm(&s, &z));
        }
    }
    if fix < 1e-9 && anti < 1e-10 {
        Ok(format!("fixed point {fix:.2e}, single-qubit anticommutators {anti:.2e}"))
    } else {
        Err(format!("fixed point {fix:.2e}, single-qubit anticommutators {anti:.2e}"))
    }
}

fn cosine_law(rng: &mut ChaCha8Rng) -> Check {
    let n = 2;
    let axes: Vec<[f64; 3]> = (0..n).map(|_| random_axis(rng)).collect();
    let deltas = vec![0.6, 0.9];
    let total: f64 = deltas.iter().sum();
    let plan = SpectatorPlan::new(vec![0, 1], axes.clone(), deltas.clone(), total).map_err(|e| e.to_string())?;
    let mut u = Operator::identity(4);
    for q in 0..n {
        let r = rotation_operator(axes[q], deltas[q]).and_then(|r| r.embed(&[q], n)).map_err(|e| e.to_string())?;
        u = u.dot(&r);
    }
    let opts = LayoutOptions { window: 4, dd: false, idle: None, idle_scope: IdleScope::All, measure_flag: false, engine: EngineKind::Pure };
    let mut worst = 0.0f64;
    for m in 0..=4 {
        let mut b = csmqc_layout(n, &plan, &opts).map_err(|e| e.to_string())?;
        let ch = b.add_channel(Channel::Unitary(u.clone()));
        b.place_events(ch, &(0..m).collect::<Vec<_>>());
        let p = b.flag_probability().map_err(|e| e.to_string())?;
        worst = worst.max((p - detection_probability(m, total)).abs());
    }
    below(worst, 1e-9, "max deviation")
}

fn local_expectation(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let rho = random_density(rng, 3);
        let i = rng.random_range(0..3);
        let u = rotation_operator(random_axis(rng), rng.random_range(-PI..PI)).map_err(|e| e.to_string())?;
        let full = u.embed(&[i], 3).map_err(|e| e.to_string())?.matrix().dot(rho.matrix()).diag().sum();
        let red = partial_trace(&rho, &[i]).map_err(|e| e.to_string())?;
        worst = worst.max((full - u.matrix().dot(red.matrix()).diag().sum()).norm());
    }
    below(worst, 1e-12, "max gap")
}

fn layout() -> Check {
    let l = multi_set_layout_from_deltas(3, &[PI / 4.0; 4]).map_err(|e| e.to_string())?;
    let targets: Vec<f64> = l.sets.iter().map(|s| s.target_angle).collect();
    if targets.len() == 2 && (targets[0] - PI).abs() < 1e-12 && (targets[1] - PI / 2.0).abs() < 1e-12 {
        Ok("targets π, π/2".into())
    } else {
        Err(format!("targets {targets:?}"))
    }
}

pub fn run(config: &Option<PathBuf>, _out: &Path) -> Result<(), ExpError> {
    let params = match config {
        Some(p) => Some(HsaParameterSet::from_json(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let mut rng = substream(0, &[0xC0DE]);
    let mut checks: Vec<(&str, Check)> = vec![
        ("idle channels are CPTP", idle_cptp()),
        ("Kraus and Lindblad idle agree", kraus_lindblad(&mut rng)),
        ("MGHZ stabilizer", stabilizer(&mut rng)),
        ("cosine law", cosine_law(&mut rng)),
        ("local expectation from reduced state", local_expectation(&mut rng)),
        ("multi-set layout", layout()),
    ];
    if let Some(p) = &params {
        checks.push(("configured HSA channel is CPTP", hsa_cptp(p)));
    }
    let mut failed = 0;
    for (name, r) in &checks {
        match r {
            Ok(d) => println!("ok    {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    if failed > 0 {
        return Err(ExpError::Numerical(csmqc::Error::Engine(format!("{failed} check(s) failed"))));
    }
    Ok(())
}
