use crate::matrix::Matrix;
use crate::model::ModelParams;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam update of one parameter slice at step `step` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for i in 0..param.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// First and second moments mirroring every tensor of a [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .into_iter()
            .map(|(_, t)| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.step += 1;
        let grads = grads.tensors();
        for (i, p) in params.tensors_mut().into_iter().enumerate() {
            adam_update(
                p.as_mut_slice(),
                grads[i].1.as_slice(),
                self.m[i].as_mut_slice(),
                self.v[i].as_mut_slice(),
                self.step,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, t: u64, lr: f64) {
        let (mut ps, mut ms, mut vs) = ([*p], [*m], [*v]);
        adam_update(
            &mut ps,
            &[g],
            &mut ms,
            &mut vs,
            t,
            lr,
            ADAM_BETA1,
            ADAM_BETA2,
            ADAM_EPS,
        );
        (*p, *m, *v) = (ps[0], ms[0], vs[0]);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, mut m, mut v) = (0.7, 0.0, 0.0);
        scalar_step(&mut p, 0.0, &mut m, &mut v, 1, 1e-3);
        assert_eq!(p, 0.7);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        for g in [3.0, -0.02, 150.0] {
            let (mut p, mut m, mut v) = (1.0, 0.0, 0.0);
            scalar_step(&mut p, g, &mut m, &mut v, 1, 1e-3);
            // m̂ = g, v̂ = g², update = lr·g/(|g| + ε)
            let expect = 1.0 - 1e-3 * g / (g.abs() + ADAM_EPS);
            assert!((p - expect).abs() < 1e-15);
            assert!((p - (1.0 - 1e-3 * g.signum())).abs() < 1e-9);
        }
    }

    #[test]
    fn moments_decay_geometrically() {
        let (mut p, mut m, mut v) = (0.0, 0.0, 0.0);
        scalar_step(&mut p, 2.0, &mut m, &mut v, 1, 1e-3);
        let (m1, v1) = (m, v);
        assert!((m1 - 0.2).abs() < 1e-15);
        assert!((v1 - 0.004).abs() < 1e-15);
        scalar_step(&mut p, 0.0, &mut m, &mut v, 2, 1e-3);
        let (m2, v2) = (m, v);
        scalar_step(&mut p, 0.0, &mut m, &mut v, 3, 1e-3);
        assert!((m2 - ADAM_BETA1 * m1).abs() < 1e-15 && (m - ADAM_BETA1 * m2).abs() < 1e-15);
        assert!((v2 - ADAM_BETA2 * v1).abs() < 1e-18 && (v - ADAM_BETA2 * v2).abs() < 1e-18);
        assert!(m < m2 && m2 < m1 && v < v2 && v2 < v1);
    }

    #[test]
    fn model_step_counts() {
        let mut arch = crate::model::Architecture::new(2, 2);
        arch.hidden = vec![2];
        arch.heads = 1;
        arch.max_len = 2;
        let mut p = ModelParams::init(&arch, 0).unwrap();
        let before = p.clone();
        let mut state = AdamState::new(&p);
        state.step(&mut p, &before.zeros_like(), 1e-3);
        assert_eq!(state.step, 1);
        assert_eq!(p, before);
    }
}
