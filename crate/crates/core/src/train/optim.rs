//! AMSGrad and the step-decay learning-rate schedule.

use crate::error::{Error, Result};

/// AMSGrad with Adam-style bias correction of both moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Amsgrad {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    v_hat: Vec<Vec<f64>>,
}

impl Amsgrad {
    /// Fresh state for parameter arrays of the given lengths.
    pub fn new(sizes: &[usize], lr: f64) -> Self {
        let zeros = || sizes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Amsgrad {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
            v_hat: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moment_max(&self) -> &[Vec<f64>] {
        &self.v_hat
    }

    /// One update of every array in `params`. A non-finite gradient leaves
    /// both parameters and state untouched.
    pub fn step<P: AsMut<[f64]>>(&mut self, params: &mut [P], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("amsgrad", "parameter, gradient and state counts differ"));
        }
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.as_mut().len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::shape("amsgrad", format!("array {i} length")));
            }
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { op: "amsgrad" });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let p = p.as_mut();
            let (m, v, vh) = (&mut self.m[i], &mut self.v[i], &mut self.v_hat[i]);
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                vh[k] = vh[k].max(v[k]);
                let m_hat = m[k] / c1;
                let v_corr = vh[k] / c2;
                p[k] -= self.lr * m_hat / (v_corr.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// `lr(e) = initial * decay^e * step_factor^floor(e / step_every)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: f64,
    pub step_every: usize,
    pub step_factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 0.001,
            decay: 0.95,
            step_every: 5,
            step_factor: 0.5,
        }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            initial: lr,
            decay: 1.0,
            step_every: 1,
            step_factor: 1.0,
        }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        let steps = if self.step_every == 0 { 0 } else { epoch / self.step_every };
        self.initial * self.decay.powi(epoch as i32) * self.step_factor.powi(steps as i32)
    }
}

/// The default schedule started at `initial`.
pub fn lr_schedule(epoch: usize, initial: f64) -> f64 {
    LrSchedule {
        initial,
        ..LrSchedule::default()
    }
    .at(epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Amsgrad::new(&[3], 0.001);
        let mut p = vec![vec![1.0, -2.0, 3.0]];
        opt.step(&mut p, &[vec![0.0; 3]]).unwrap();
        assert_eq!(p[0], vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_golden() {
        // m = 0.1, v = v_hat = 0.001; both corrections give exactly 1, so the
        // update is lr / (1 + eps) evaluated in this order.
        let mut opt = Amsgrad::new(&[1], 0.001);
        let mut p = vec![vec![0.0]];
        opt.step(&mut p, &[vec![1.0]]).unwrap();
        assert_eq!(-p[0][0], 0.0009999999900000003);
    }

    #[test]
    fn non_finite_gradient_aborts_without_side_effects() {
        let mut opt = Amsgrad::new(&[2], 0.1);
        let mut p = vec![vec![1.0, 1.0]];
        let before = opt.clone();
        assert!(opt.step(&mut p, &[vec![1.0, f64::NAN]]).is_err());
        assert_eq!(opt, before);
        assert_eq!(p[0], vec![1.0, 1.0]);
    }

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0, 0.001), 0.001);
        assert!((lr_schedule(1, 0.001) - 0.00095).abs() < 1e-18);
        assert!((lr_schedule(5, 0.001) - 0.001 * 0.95f64.powi(5) * 0.5).abs() < 1e-18);
        assert_eq!(LrSchedule::constant(0.01).at(37), 0.01);
    }
}
