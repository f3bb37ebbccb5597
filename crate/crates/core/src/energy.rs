//! Per-node battery accounting using the Tyndall 10 mm node's currents.

use crate::sim::SimTime;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioMode {
    Tx,
    Rx,
    Idle,
}

/// Supply voltage and per-mode current draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub voltage_v: f64,
    pub i_tx_a: f64,
    pub i_rx_a: f64,
    /// Microcontroller current, drawn whenever the radio is neither sending nor receiving.
    pub i_idle_a: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            voltage_v: 3.0,
            i_tx_a: 10.35e-3,
            i_rx_a: 13.32e-3,
            i_idle_a: 688e-6,
        }
    }
}

impl EnergyModel {
    pub fn current(&self, mode: RadioMode) -> f64 {
        match mode {
            RadioMode::Tx => self.i_tx_a,
            RadioMode::Rx => self.i_rx_a,
            RadioMode::Idle => self.i_idle_a,
        }
    }

    /// Joules drawn in `mode` over `duration`.
    pub fn cost(&self, mode: RadioMode, duration: SimTime) -> f64 {
        self.voltage_v * self.current(mode) * duration.secs()
    }
}

#[derive(Debug, Clone)]
pub struct EnergyLedger {
    model: EnergyModel,
    e_initial: f64,
    start: Vec<f64>,
    remainder: Vec<f64>,
}

impl EnergyLedger {
    /// Every node starts with a full battery of `e_initial` joules.
    pub fn new(model: EnergyModel, e_initial: f64, nodes: usize) -> Self {
        Self::with_levels(model, e_initial, vec![e_initial; nodes])
    }

    /// Nodes start at the given charge, each within `(0, e_initial]`.
    pub fn with_levels(model: EnergyModel, e_initial: f64, levels: Vec<f64>) -> Self {
        assert!(e_initial > 0.0, "initial energy must be positive");
        assert!(
            levels.iter().all(|&e| e > 0.0 && e <= e_initial),
            "starting charge outside (0, e_initial]"
        );
        Self {
            model,
            e_initial,
            start: levels.clone(),
            remainder: levels,
        }
    }

    pub fn model(&self) -> &EnergyModel {
        &self.model
    }

    pub fn e_initial(&self) -> f64 {
        self.e_initial
    }

    pub fn remainder(&self, node: NodeId) -> f64 {
        self.remainder[node.index()]
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.remainder[node.index()] > 0.0
    }

    /// Draws energy for `duration` in `mode`, clamping at zero. Returns the
    /// joules actually removed.
    pub fn charge(&mut self, node: NodeId, mode: RadioMode, duration: SimTime) -> f64 {
        let slot = &mut self.remainder[node.index()];
        let wanted = self.model.cost(mode, duration);
        let taken = wanted.min(*slot);
        *slot -= taken;
        if *slot <= 0.0 {
            *slot = 0.0;
        }
        taken
    }

    /// `E_initial / E_remainder`; at least 1. The node must be alive.
    pub fn k_factor(&self, node: NodeId) -> f64 {
        let rem = self.remainder[node.index()];
        assert!(rem > 0.0, "k_factor queried for dead node {node}");
        self.e_initial / rem
    }

    pub fn consumed(&self, node: NodeId) -> f64 {
        self.start[node.index()] - self.remainder[node.index()]
    }

    /// Mean joules spent per node since the ledger was created.
    pub fn average_consumed(&self) -> f64 {
        if self.remainder.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .start
            .iter()
            .zip(&self.remainder)
            .map(|(s, r)| s - r)
            .sum();
        total / self.remainder.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: f64) -> SimTime {
        SimTime::from_ms(v)
    }

    #[test]
    fn tx_charge_matches_hand_arithmetic() {
        let mut l = EnergyLedger::new(EnergyModel::default(), 100.0, 1);
        let taken = l.charge(NodeId(0), RadioMode::Tx, ms(6.4));
        // 3.0 V * 10.35 mA * 6.4 ms
        let expected = 3.0 * 0.01035 * 0.0064;
        assert!((taken - expected).abs() < 1e-15);
        assert!((expected - 1.987e-4).abs() < 1e-7);
        assert!((l.remainder(NodeId(0)) - (100.0 - expected)).abs() < 1e-12);
    }

    #[test]
    fn zero_duration_is_free() {
        let mut l = EnergyLedger::new(EnergyModel::default(), 100.0, 1);
        l.charge(NodeId(0), RadioMode::Idle, ms(0.0));
        assert_eq!(l.remainder(NodeId(0)), 100.0);
    }

    #[test]
    fn overdraw_clamps_and_kills() {
        let mut l = EnergyLedger::new(EnergyModel::default(), 1e-3, 1);
        for _ in 0..10 {
            l.charge(NodeId(0), RadioMode::Rx, ms(10.0));
        }
        assert_eq!(l.remainder(NodeId(0)), 0.0);
        assert!(!l.is_alive(NodeId(0)));
        l.charge(NodeId(0), RadioMode::Tx, ms(10.0));
        assert_eq!(l.remainder(NodeId(0)), 0.0);
    }

    #[test]
    fn k_factor_values() {
        let l = EnergyLedger::with_levels(EnergyModel::default(), 100.0, vec![100.0, 50.0, 10.0]);
        assert_eq!(l.k_factor(NodeId(0)), 1.0);
        assert_eq!(l.k_factor(NodeId(1)), 2.0);
        assert_eq!(l.k_factor(NodeId(2)), 10.0);
    }

    #[test]
    #[should_panic(expected = "dead node")]
    fn k_factor_of_dead_node_panics() {
        let mut l = EnergyLedger::new(EnergyModel::default(), 1e-6, 1);
        l.charge(NodeId(0), RadioMode::Tx, ms(1000.0));
        l.k_factor(NodeId(0));
    }

    #[test]
    fn average_consumed_is_a_mean() {
        let model = EnergyModel {
            voltage_v: 1.0,
            i_tx_a: 1.0,
            i_rx_a: 1.0,
            i_idle_a: 1.0,
        };
        let mut l = EnergyLedger::new(model, 100.0, 2);
        assert_eq!(l.average_consumed(), 0.0);
        l.charge(NodeId(0), RadioMode::Tx, ms(1000.0));
        l.charge(NodeId(1), RadioMode::Tx, ms(3000.0));
        assert!((l.average_consumed() - 2.0).abs() < 1e-12);
    }
}
