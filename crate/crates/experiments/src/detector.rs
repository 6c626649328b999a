//! Layer layouts for the CSMQC detector and the constant-period baseline.

use std::ops::Range;

use csmqc::channels::{Channel, IdleStep};
use csmqc::protocol::{
    dd_pulse_schedule, inversion_circuit, mghz_prep_circuit, GateKind, GateList, SpectatorPlan,
};
use csmqc::simulator::{
    evolve_density, evolve_pure, exact_probabilities, CircuitSchedule, DensityRun, EngineKind, State,
};
use csmqc::operator::{DensityOperator, StateVector};

use crate::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdleScope {
    /// Every layer, including preparation and inversion.
    All,
    /// Only the crosstalk window.
    WindowOnly,
}

#[derive(Clone, Debug)]
pub struct LayoutOptions {
    pub window: usize,
    pub dd: bool,
    pub idle: Option<IdleStep>,
    pub idle_scope: IdleScope,
    /// Append a measure-and-reset of the flag so the density engine tracks
    /// the flag-0 branch.
    pub measure_flag: bool,
    pub engine: EngineKind,
}

/// A schedule plus the map from crosstalk-window layers to schedule layers.
#[derive(Clone, Debug)]
pub struct Built {
    pub schedule: CircuitSchedule,
    pub window: Vec<usize>,
    /// Layers available for data preparation before the window.
    pub head: Range<usize>,
    /// Layers available for data un-preparation after the window.
    pub tail: Range<usize>,
    pub flag: usize,
}

impl Built {
    /// Adds a channel that may fire inside the window; returns its index.
    pub fn add_channel(&mut self, ch: Channel) -> usize {
        self.schedule.crosstalk.push(ch);
        self.schedule.crosstalk.len() - 1
    }

    /// Fires channel `ch` at the given window layers.
    pub fn place_events(&mut self, ch: usize, window_layers: &[usize]) {
        for &l in window_layers {
            self.schedule.add_event(self.window[l], ch);
        }
    }

    /// Channel applied after every protocol CNOT layer outside the window.
    pub fn add_protocol_crosstalk(&mut self, ch: Channel) {
        let idx = self.add_channel(ch);
        self.schedule.exempt.push(idx);
        let cnot_layers: Vec<usize> = self
            .schedule
            .layers
            .iter()
            .enumerate()
            .filter(|(i, l)| {
                !self.window.contains(i) && l.gates.iter().any(|g| g.kind == GateKind::Cnot)
            })
            .map(|(i, _)| i)
            .collect();
        for l in cnot_layers {
            self.schedule.add_event(l, idx);
        }
    }

    /// Data preparation at the start of the head.
    pub fn add_head_gates(&mut self, gates: &GateList) -> Result<()> {
        if gates.depth() > self.head.len() {
            return config_err(format!("data preparation needs {} layers, {} available", gates.depth(), self.head.len()));
        }
        self.schedule.add_gates(gates, self.head.start);
        Ok(())
    }

    /// Data un-preparation ending with the tail.
    pub fn add_tail_gates(&mut self, gates: &GateList) -> Result<()> {
        if gates.depth() > self.tail.len() {
            return config_err(format!("data un-preparation needs {} layers, {} available", gates.depth(), self.tail.len()));
        }
        self.schedule.add_gates(gates, self.tail.end - gates.depth());
        Ok(())
    }

    /// Circuit layer `l` runs right after window layer `l`, so crosstalk in
    /// a layer precedes the data gate it coincides with.
    pub fn add_window_circuit(&mut self, gates: &GateList) -> Result<()> {
        if gates.depth() > self.window.len() {
            return config_err(format!("circuit depth {} exceeds window {}", gates.depth(), self.window.len()));
        }
        for g in &gates.gates {
            let l = self.window[g.layer] + 1;
            self.schedule.ensure_layers(l + 1);
            self.schedule.layers[l].gates.push(g.clone());
        }
        Ok(())
    }

    fn finish_idle(&mut self, opts: &LayoutOptions) {
        if let Some(step) = &opts.idle {
            if !step.is_identity() {
                self.schedule.idle = Some(step.clone());
                for (i, l) in self.schedule.layers.iter_mut().enumerate() {
                    l.idle = match opts.idle_scope {
                        IdleScope::All => true,
                        IdleScope::WindowOnly => self.window.contains(&i),
                    };
                }
            }
        }
    }

    pub fn run_pure(&self) -> Result<StateVector> {
        Ok(evolve_pure(&self.schedule, &StateVector::zero(self.schedule.n_qubits))?)
    }

    pub fn run_density(&self) -> Result<DensityRun> {
        Ok(evolve_density(&self.schedule, &DensityOperator::zero(self.schedule.n_qubits))?)
    }

    /// Exact probability that the flag reads 1 at the end, on the schedule's
    /// engine. Requires a schedule without the final measurement.
    pub fn flag_probability(&self) -> Result<f64> {
        let state = match self.schedule.engine {
            EngineKind::Pure => State::Pure(self.run_pure()?),
            EngineKind::Density => State::Mixed(self.run_density()?.state),
        };
        Ok(exact_probabilities(&state, &[self.flag])?.get("1").copied().unwrap_or(0.0))
    }
}

/// Prep, `window` detection layers (with optional decoupling pulses) and
/// inversion for one spectator set on an `n_qubits` register.
pub fn csmqc_layout(n_qubits: usize, plan: &SpectatorPlan, opts: &LayoutOptions) -> Result<Built> {
    let prep = mghz_prep_circuit(plan);
    let inv = inversion_circuit(plan);
    let p = prep.depth();
    let w = opts.window;
    let mut s = CircuitSchedule::new(n_qubits, opts.engine);
    s.add_gates(&prep, 0);
    if opts.dd {
        let dd = dd_pulse_schedule(plan, w)?;
        s.add_gates(&dd, p);
    }
    s.add_gates(&inv, p + w);
    let end = 2 * p + w;
    s.ensure_layers(end);
    if opts.measure_flag {
        s.add_gates(&measure(plan.flag_qubit()), end);
    }
    s.protected = vec![0..p, p + w..end + usize::from(opts.measure_flag)];
    let mut b = Built {
        schedule: s,
        window: (p..p + w).collect(),
        head: 0..p,
        tail: p + w..end,
        flag: plan.flag_qubit(),
    };
    b.finish_idle(opts);
    Ok(b)
}

fn measure(q: usize) -> GateList {
    let mut g = GateList::default();
    g.push(0, GateKind::MeasureReset, vec![q]);
    g
}

/// One spectator prepared perpendicular to its axis, inverted and
/// measured-and-reset after every `period` window layers. A final partial
/// block is measured too.
pub fn baseline_layout(n_qubits: usize, spectator: &SpectatorPlan, period: usize, opts: &LayoutOptions) -> Result<Built> {
    if spectator.len() != 1 {
        return config_err("the baseline uses exactly one spectator");
    }
    if period == 0 || period > opts.window {
        return config_err(format!("period {period} outside 1..={}", opts.window));
    }
    let prep = mghz_prep_circuit(spectator);
    let inv = inversion_circuit(spectator);
    let q = spectator.qubits[0];
    let p = prep.depth();
    let mut s = CircuitSchedule::new(n_qubits, opts.engine);
    let mut window = Vec::new();
    let mut at = 0;
    let mut tail = 0..0;
    let mut head = 0..0;
    for start in (0..opts.window).step_by(period) {
        let len = period.min(opts.window - start);
        s.add_gates(&prep, at);
        if start == 0 {
            head = 0..p;
        }
        s.protected.push(at..at + p);
        window.extend(at + p..at + p + len);
        let inv_at = at + p + len;
        s.add_gates(&inv, inv_at);
        s.add_gates(&measure(q), inv_at + p);
        s.protected.push(inv_at..inv_at + p + 1);
        tail = inv_at..inv_at + p;
        at = inv_at + p + 1;
    }
    s.ensure_layers(at);
    let mut b = Built { schedule: s, window, head, tail, flag: q };
    b.finish_idle(opts);
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use csmqc::operator::rotation_operator;
    use csmqc::protocol::detection_probability;
    use std::f64::consts::PI;

    fn opts(window: usize, engine: EngineKind) -> LayoutOptions {
        LayoutOptions { window, dd: false, idle: None, idle_scope: IdleScope::All, measure_flag: false, engine }
    }

    fn z_plan(n: usize, delta: f64) -> SpectatorPlan {
        SpectatorPlan::new((0..n).collect(), vec![[0.0, 0.0, 1.0]; n], vec![delta; n], PI).unwrap()
    }

    fn z_rotations(n: usize, delta: f64) -> Channel {
        let mut u = csmqc::operator::Operator::identity(1 << n);
        for q in 0..n {
            u = u.dot(&rotation_operator([0.0, 0.0, 1.0], delta).unwrap().embed(&[q], n).unwrap());
        }
        Channel::Unitary(u)
    }

    #[test]
    fn csmqc_layers_and_cosine_law() {
        let plan = z_plan(3, PI / 3.0);
        let mut b = csmqc_layout(3, &plan, &opts(6, EngineKind::Pure)).unwrap();
        assert_eq!(b.window, (5..11).collect::<Vec<_>>());
        assert_eq!(b.schedule.layers.len(), 16);
        let ch = b.add_channel(z_rotations(3, PI / 3.0));
        b.place_events(ch, &[0, 2]);
        let p = b.flag_probability().unwrap();
        assert!((p - detection_probability(2, PI)).abs() < 1e-12);
    }

    #[test]
    fn events_outside_the_window_are_rejected() {
        let plan = z_plan(2, PI / 2.0);
        let mut b = csmqc_layout(2, &plan, &opts(4, EngineKind::Density)).unwrap();
        let ch = b.add_channel(z_rotations(2, 0.1));
        b.schedule.add_event(0, ch);
        assert!(b.flag_probability().is_err());
    }

    #[test]
    fn baseline_blocks() {
        let plan = z_plan(1, PI / 4.0);
        let b = baseline_layout(1, &plan, 4, &opts(7, EngineKind::Density)).unwrap();
        assert_eq!(b.window.len(), 7);
        let measures = b
            .schedule
            .layers
            .iter()
            .flat_map(|l| &l.gates)
            .filter(|g| g.kind == GateKind::MeasureReset)
            .count();
        assert_eq!(measures, 2);
        assert!(baseline_layout(1, &plan, 8, &opts(7, EngineKind::Density)).is_err());
    }

    #[test]
    fn baseline_detects_a_full_block() {
        let plan = z_plan(1, PI / 4.0);
        let mut b = baseline_layout(1, &plan, 4, &opts(7, EngineKind::Density)).unwrap();
        let ch = b.add_channel(z_rotations(1, PI / 4.0));
        b.place_events(ch, &[0, 1, 2, 3]);
        let run = b.run_density().unwrap();
        assert!(run.p_all_zero() < 1e-12);
        let mut b = baseline_layout(1, &plan, 4, &opts(7, EngineKind::Density)).unwrap();
        let ch = b.add_channel(z_rotations(1, PI / 4.0));
        b.place_events(ch, &[3, 4]);
        let run = b.run_density().unwrap();
        let one = detection_probability(1, PI / 4.0);
        assert!((run.p_all_zero() - (1.0 - one).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn protocol_crosstalk_fires_on_cnot_layers_only() {
        let plan = z_plan(3, PI / 3.0);
        let mut b = csmqc_layout(3, &plan, &opts(6, EngineKind::Density)).unwrap();
        b.add_protocol_crosstalk(z_rotations(3, 0.0));
        let fired: Vec<usize> = b
            .schedule
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.events.is_empty())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(fired, vec![1, 2, 13, 14]);
        assert!(b.schedule.validate().is_ok());
    }
}
