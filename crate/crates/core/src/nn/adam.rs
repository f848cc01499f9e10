//! Adam optimizer and milestone learning-rate schedule.

use super::tensor::{Scalar, Tensor};
use crate::error::{MarError, Result};

/// Adam moment buffers and step counter. Moments are allocated lazily on the
/// first step and must then keep matching the parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    lr: f64,
    beta1: T,
    beta2: T,
    eps: T,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update over `params`, consuming the gradients
/// stored on each tensor.
pub fn adam_step<T: Scalar>(params: &mut [&mut Tensor<T>], state: &mut AdamState<T>) -> Result<()> {
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(MarError::dim(format!(
            "optimizer tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = T::one() - state.beta1.powi(t);
    let bc2 = T::one() - state.beta2.powi(t);
    let lr = T::from_f64(state.lr);
    let one = T::one();

    for (i, p) in params.iter_mut().enumerate() {
        if state.m[i].len() != p.numel() {
            return Err(MarError::dim(format!(
                "parameter {i} changed size: {} vs {}",
                state.m[i].len(),
                p.numel()
            )));
        }
        let grad = p
            .grad()
            .ok_or_else(|| MarError::config(format!("parameter {i} has no gradient")))?
            .to_vec();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for ((pv, g), (mi, vi)) in p
            .data_mut()
            .iter_mut()
            .zip(&grad)
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mi = state.beta1 * *mi + (one - state.beta1) * *g;
            *vi = state.beta2 * *vi + (one - state.beta2) * *g * *g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Piecewise-constant decay: the learning rate at an epoch is the initial
/// rate times the product of the multipliers of all milestones reached.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub initial_lr: f64,
    /// (epoch, multiplier), epochs strictly increasing, multipliers in (0, 1].
    pub milestones: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn new(initial_lr: f64, milestones: Vec<(usize, f64)>) -> Result<Self> {
        if !(initial_lr.is_finite() && initial_lr > 0.0) {
            return Err(MarError::config("initial_lr must be positive"));
        }
        for pair in milestones.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(MarError::config("milestone epochs must strictly increase"));
            }
        }
        if milestones.iter().any(|&(_, m)| !(m > 0.0 && m <= 1.0)) {
            return Err(MarError::config("multipliers must lie in (0, 1]"));
        }
        Ok(LrSchedule {
            initial_lr,
            milestones,
        })
    }

    /// Constant learning rate.
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            initial_lr: lr,
            milestones: Vec::new(),
        }
    }

    /// Full-scale inpainter schedule: 500 epochs at 5e-3, halved at epochs
    /// 100/200/300 and cut to a tenth at 400/450/475/490.
    pub fn inpaint_full() -> Self {
        LrSchedule {
            initial_lr: 5e-3,
            milestones: vec![
                (100, 0.5),
                (200, 0.5),
                (300, 0.5),
                (400, 0.1),
                (450, 0.1),
                (475, 0.1),
                (490, 0.1),
            ],
        }
    }

    /// Full-scale refiner schedule: 200 epochs at 5e-3, halved at 100/150/175.
    pub fn refine_full() -> Self {
        LrSchedule {
            initial_lr: 5e-3,
            milestones: vec![(100, 0.5), (150, 0.5), (175, 0.5)],
        }
    }

    /// Proportionally rescale milestone epochs from a `from_epochs` budget to
    /// a `to_epochs` budget. Colliding milestones merge by multiplying.
    pub fn rescaled(&self, from_epochs: usize, to_epochs: usize) -> Self {
        let scale = to_epochs as f64 / from_epochs as f64;
        let mut milestones: Vec<(usize, f64)> = Vec::new();
        for &(e, m) in &self.milestones {
            let ne = ((e as f64 * scale).round() as usize).max(1);
            match milestones.last_mut() {
                Some(last) if last.0 == ne => last.1 *= m,
                _ => milestones.push((ne, m)),
            }
        }
        LrSchedule {
            initial_lr: self.initial_lr,
            milestones,
        }
    }

    /// Desk-scale inpainter schedule for the given epoch budget.
    pub fn inpaint_desk(epochs: usize) -> Self {
        Self::inpaint_full().rescaled(500, epochs)
    }

    /// Desk-scale refiner schedule for the given epoch budget.
    pub fn refine_desk(epochs: usize) -> Self {
        Self::refine_full().rescaled(200, epochs)
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let mut lr = self.initial_lr;
        for &(e, m) in &self.milestones {
            if e <= epoch {
                lr *= m;
            }
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Tensor::from_vec([1, 1, 1, 3], vec![1.0f64, -2.0, 0.5]).unwrap();
        p.ensure_grad();
        let before = p.data().to_vec();
        let mut st = AdamState::new(5e-3);
        adam_step(&mut [&mut p], &mut st).unwrap();
        assert_eq!(p.data(), before.as_slice());
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Bias-corrected first step with unit gradient: delta = lr / (1 + eps).
        let mut p = Tensor::from_vec([1, 1, 1, 1], vec![1.0f64]).unwrap();
        p.grad_mut()[0] = 1.0;
        let mut st = AdamState::new(5e-3);
        adam_step(&mut [&mut p], &mut st).unwrap();
        let expected = 1.0 - 5e-3 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn descends_quadratic() {
        // 100 steps on f(w) = w^2 from w=1 must strictly shrink |w| overall
        // with a monotone trend in the running best.
        let mut p = Tensor::from_vec([1, 1, 1, 1], vec![1.0f64]).unwrap();
        p.ensure_grad();
        let mut st = AdamState::new(5e-3);
        let mut best = 1.0f64;
        let mut improvements = 0;
        for _ in 0..100 {
            let w = p.data()[0];
            p.grad_mut()[0] = 2.0 * w;
            adam_step(&mut [&mut p], &mut st).unwrap();
            let aw = p.data()[0].abs();
            if aw < best {
                best = aw;
                improvements += 1;
            }
        }
        assert!(p.data()[0].abs() < 1.0);
        assert!(best < 0.7, "best |w| = {best}");
        assert!(improvements >= 90, "only {improvements} improving steps");
    }

    #[test]
    fn gradient_scaling_keeps_first_update_signs() {
        let mut rng = SeedRng::new(9);
        for _ in 0..20 {
            let g: Vec<f64> = (0..8).map(|_| rng.uniform_f64(-1.0, 1.0)).collect();
            let run = |scale: f64| {
                let mut p = Tensor::from_vec([1, 1, 1, 8], vec![0.0f64; 8]).unwrap();
                p.grad_mut().copy_from_slice(&g.iter().map(|v| v * scale).collect::<Vec<_>>());
                let mut st = AdamState::new(1e-2);
                adam_step(&mut [&mut p], &mut st).unwrap();
                p.data().iter().map(|v| v.signum()).collect::<Vec<_>>()
            };
            assert_eq!(run(1.0), run(37.5));
        }
    }

    #[test]
    fn schedule_examples() {
        let inpaint = LrSchedule::inpaint_full();
        assert_eq!(inpaint.lr_at_epoch(0), 5e-3);
        assert!((inpaint.lr_at_epoch(350) - 6.25e-4).abs() < 1e-18);
        let unet = LrSchedule::refine_full();
        assert!((unet.lr_at_epoch(200) - 5e-3 * 0.125).abs() < 1e-18);
    }

    #[test]
    fn rescaled_desk_schedules() {
        let desk = LrSchedule::inpaint_desk(50);
        assert_eq!(
            desk.milestones,
            vec![
                (10, 0.5),
                (20, 0.5),
                (30, 0.5),
                (40, 0.1),
                (45, 0.1),
                (48, 0.1),
                (49, 0.1)
            ]
        );
        let refine = LrSchedule::refine_desk(30);
        assert_eq!(refine.milestones, vec![(15, 0.5), (23, 0.5), (26, 0.5)]);
    }

    #[test]
    fn schedule_validation() {
        assert!(LrSchedule::new(5e-3, vec![(10, 0.5), (10, 0.5)]).is_err());
        assert!(LrSchedule::new(5e-3, vec![(10, 1.5)]).is_err());
        assert!(LrSchedule::new(0.0, vec![]).is_err());
    }
}
