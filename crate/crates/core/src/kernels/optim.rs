//! Parameter updates built from vector commands plus the iterative square
//! root and division.

use serde::{Deserialize, Serialize};

use super::{check_len, KernelError};
use crate::ntx::{divide, special_function, AccInit, Opcode, Operand, SpecialFn, VectorUnit};

/// Elements per pass, so all temporaries fit the scratchpad.
const CHUNK: usize = 512;
/// Core cycles to compute one bias-correction factor.
const CORRECTION_CYCLES: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Rmsprop,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Sgd,
        OptimizerKind::Momentum,
        OptimizerKind::Rmsprop,
        OptimizerKind::Adam,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f32,
    /// Velocity decay for momentum.
    pub momentum: f32,
    /// Squared-gradient decay for RMSProp.
    pub decay: f32,
    /// Stabilizer added under or after the square root.
    pub delta: f32,
    pub beta1: f32,
    pub beta2: f32,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            learning_rate: 0.01,
            momentum: 0.9,
            decay: 0.9,
            delta: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub theta: Vec<f32>,
    pub velocity: Vec<f32>,
    /// Running mean of squared gradients; never negative.
    pub sq_grad: Vec<f32>,
    pub moment1: Vec<f32>,
    pub moment2: Vec<f32>,
    pub step: u64,
    pub hyper: Hyper,
}

impl OptimizerState {
    pub fn new(theta: Vec<f32>, hyper: Hyper) -> Self {
        let n = theta.len();
        OptimizerState {
            theta,
            velocity: vec![0.0; n],
            sq_grad: vec![0.0; n],
            moment1: vec![0.0; n],
            moment2: vec![0.0; n],
            step: 0,
            hyper,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let n = self.theta.len();
        for (name, v) in [
            ("velocity", &self.velocity),
            ("squared gradient", &self.sq_grad),
            ("first moment", &self.moment1),
            ("second moment", &self.moment2),
        ] {
            check_len(name, v.len(), n)?;
        }
        if self.sq_grad.iter().any(|&r| r < 0.0) {
            return Err(KernelError::Shape("negative squared-gradient accumulator".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    /// The gradient held a NaN or infinity and nothing was updated.
    pub skipped: bool,
    pub cycles: u64,
    pub commands: u64,
}

/// Applies one update in place.
pub fn optimizer_step(kind: OptimizerKind, state: &mut OptimizerState, g: &[f32]) -> Result<StepReport, KernelError> {
    state.validate()?;
    check_len("gradient", g.len(), state.theta.len())?;
    let mut report = StepReport::default();

    // 0·g is NaN exactly when g is not finite; the datapath flags it
    for chunk in g.chunks(CHUNK) {
        let mut vu = VectorUnit::new();
        let v = vu.upload(chunk);
        vu.reduce(Opcode::Mac, Operand::Vec(v), Operand::Scalar(0.0), AccInit::Const(0.0), chunk.len());
        report.cycles += vu.cycles;
        report.commands += vu.commands;
        if vu.flags.invalid {
            report.skipped = true;
            return Ok(report);
        }
    }

    let h = state.hyper;
    if kind == OptimizerKind::Adam {
        state.step += 1;
        report.cycles += 2 * CORRECTION_CYCLES;
    }
    let c1 = (1.0 / (1.0 - (h.beta1 as f64).powi(state.step as i32))) as f32;
    let c2 = (1.0 / (1.0 - (h.beta2 as f64).powi(state.step as i32))) as f32;

    for start in (0..g.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(g.len());
        let n = end - start;
        let mut vu = VectorUnit::new();
        let mut special = 0u64;
        let theta = vu.upload(&state.theta[start..end]);
        let grad = vu.upload(&g[start..end]);
        match kind {
            OptimizerKind::Sgd => {
                vu.accumulate(theta, Operand::Vec(grad), Operand::Scalar(-h.learning_rate));
            }
            OptimizerKind::Momentum => {
                let v = vu.upload(&state.velocity[start..end]);
                let v = vu.lincomb2(v, h.momentum, grad, -h.learning_rate);
                let t = vu.vadd(Operand::Vec(theta), Operand::Vec(v), n);
                state.velocity[start..end].copy_from_slice(&vu.download(v));
                state.theta[start..end].copy_from_slice(&vu.download(t));
                report.cycles += vu.cycles;
                report.commands += vu.commands;
                continue;
            }
            OptimizerKind::Rmsprop => {
                let r = vu.upload(&state.sq_grad[start..end]);
                let g2 = vu.vmult(Operand::Vec(grad), Operand::Vec(grad), n);
                let r = vu.lincomb2(r, h.decay, g2, 1.0 - h.decay);
                let d = vu.vadd(Operand::Vec(r), Operand::Scalar(h.delta), n);
                let root = special_function(SpecialFn::Sqrt, &vu.download(d));
                let q = divide(&g[start..end], &root.values);
                special += root.cycles + q.cycles;
                let q = vu.upload(&q.values);
                vu.accumulate(theta, Operand::Vec(q), Operand::Scalar(-h.learning_rate));
                state.sq_grad[start..end].copy_from_slice(&vu.download(r));
            }
            OptimizerKind::Adam => {
                let m1 = vu.upload(&state.moment1[start..end]);
                let m2 = vu.upload(&state.moment2[start..end]);
                let g2 = vu.vmult(Operand::Vec(grad), Operand::Vec(grad), n);
                let m1 = vu.lincomb2(m1, h.beta1, grad, 1.0 - h.beta1);
                let m2 = vu.lincomb2(m2, h.beta2, g2, 1.0 - h.beta2);
                let m1h = vu.vmult(Operand::Vec(m1), Operand::Scalar(c1), n);
                let m2h = vu.vmult(Operand::Vec(m2), Operand::Scalar(c2), n);
                let root = special_function(SpecialFn::Sqrt, &vu.download(m2h));
                let rv = vu.upload(&root.values);
                let den = vu.vadd(Operand::Vec(rv), Operand::Scalar(h.delta), n);
                let q = divide(&vu.download(m1h), &vu.download(den));
                special += root.cycles + q.cycles;
                let q = vu.upload(&q.values);
                vu.accumulate(theta, Operand::Vec(q), Operand::Scalar(-h.learning_rate));
                state.moment1[start..end].copy_from_slice(&vu.download(m1));
                state.moment2[start..end].copy_from_slice(&vu.download(m2));
            }
        }
        state.theta[start..end].copy_from_slice(&vu.download(theta));
        report.cycles += vu.cycles + special;
        report.commands += vu.commands;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(theta: &[f32], hyper: Hyper) -> OptimizerState {
        OptimizerState::new(theta.to_vec(), hyper)
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        for kind in OptimizerKind::ALL {
            let mut s = state(&[1.0, -2.0], Hyper::default());
            s.velocity = vec![0.5, 0.25];
            optimizer_step(kind, &mut s, &[0.0, 0.0]).unwrap();
            if kind == OptimizerKind::Momentum {
                assert_eq!(s.velocity, vec![0.45, 0.225]);
            } else {
                assert_eq!(s.theta, vec![1.0, -2.0], "{kind:?}");
            }
        }
    }

    #[test]
    fn rmsprop_scalar() {
        let hyper = Hyper {
            learning_rate: 0.1,
            decay: 0.9,
            delta: 1e-6,
            ..Hyper::default()
        };
        let mut s = state(&[1.0], hyper);
        optimizer_step(OptimizerKind::Rmsprop, &mut s, &[2.0]).unwrap();
        assert!((s.sq_grad[0] - 0.4).abs() <= f32::EPSILON);
        let want = 1.0 - 0.1 * 2.0 / (0.400001f64).sqrt();
        assert!(((s.theta[0] as f64 - want) / want).abs() <= 2f64.powi(-18));
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let mut s = state(&[1.0, 2.0], Hyper::default());
        let before = s.clone();
        let r = optimizer_step(OptimizerKind::Adam, &mut s, &[f32::INFINITY, 0.0]).unwrap();
        assert!(r.skipped);
        assert_eq!(s, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut s = state(&[1.0, 1.0], Hyper { delta: 1e-8, ..Hyper::default() });
        optimizer_step(OptimizerKind::Adam, &mut s, &[0.5, -3.0]).unwrap();
        // bias-corrected first step is lr·sign(g)
        assert!((s.theta[0] - 0.99).abs() < 1e-6);
        assert!((s.theta[1] - 1.01).abs() < 1e-6);
        assert_eq!(s.step, 1);
    }

    proptest! {
        #[test]
        fn momentum_without_decay_is_sgd(theta in prop::collection::vec(-64i32..64, 1..40), g in prop::collection::vec(-64i32..64, 40)) {
            let hyper = Hyper { learning_rate: 0.25, momentum: 0.0, ..Hyper::default() };
            let theta: Vec<f32> = theta.iter().map(|&v| v as f32).collect();
            let g: Vec<f32> = g[..theta.len()].iter().map(|&v| v as f32).collect();
            let mut a = state(&theta, hyper);
            let mut b = state(&theta, hyper);
            optimizer_step(OptimizerKind::Momentum, &mut a, &g).unwrap();
            optimizer_step(OptimizerKind::Sgd, &mut b, &g).unwrap();
            prop_assert_eq!(a.theta, b.theta);
        }

        #[test]
        fn frozen_rmsprop_is_sgd(theta in prop::collection::vec(-64i32..64, 1..40), g in prop::collection::vec(-64i32..64, 40)) {
            let hyper = Hyper { learning_rate: 0.25, decay: 1.0, delta: 0.25, ..Hyper::default() };
            let theta: Vec<f32> = theta.iter().map(|&v| v as f32).collect();
            let g: Vec<f32> = g[..theta.len()].iter().map(|&v| v as f32).collect();
            let mut a = state(&theta, hyper);
            a.sq_grad = vec![0.75; theta.len()];
            let mut b = state(&theta, hyper);
            optimizer_step(OptimizerKind::Rmsprop, &mut a, &g).unwrap();
            optimizer_step(OptimizerKind::Sgd, &mut b, &g).unwrap();
            prop_assert_eq!(&a.theta, &b.theta);
            prop_assert!(a.sq_grad.iter().all(|&r| r == 0.75));
        }
    }
}
