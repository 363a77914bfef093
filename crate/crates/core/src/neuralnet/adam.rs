use super::LstmParams;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: LstmParams,
    pub v: LstmParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &LstmParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut LstmParams, grads: &LstmParams, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(params.same_shape(grads) && params.same_shape(&state.m) && params.same_shape(&state.v)) {
        return Err(Error::Shape("Adam state, gradients and parameters differ in shape".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);

    let g_all = grads.slices();
    let m_all = state.m.slices_mut();
    let v_all = state.v.slices_mut();
    for (((p, g), m), v) in params.slices_mut().into_iter().zip(g_all).zip(m_all).zip(v_all) {
        for k in 0..p.len() {
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> LstmParams {
        let mut p = LstmParams::zeros(1, 1);
        p.b_out[0] = v;
        p
    }

    #[test]
    fn first_step_moves_by_lr_over_one_plus_eps() {
        let mut p = scalar(0.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(1.0), &mut s, 0.001).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction.
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.b_out[0] - expected).abs() < 1e-18, "{}", p.b_out[0]);
        assert!((p.b_out[0] + 0.000_999_999_99).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = LstmParams::init(5, 3, 1);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut s, 0.001).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn counter_advances_per_call() {
        let mut p = scalar(0.3);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(0.5), &mut s, 0.01).unwrap();
        adam_step(&mut p, &scalar(0.5), &mut s, 0.01).unwrap();
        assert_eq!(s.t, 2);
        // Constant gradient: bias-corrected step stays ≈ lr each time.
        assert!((p.b_out[0] - (0.3 - 0.02)).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = LstmParams::zeros(5, 3);
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &LstmParams::zeros(5, 2), &mut s, 0.001).is_err());
    }
}
