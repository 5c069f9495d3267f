use super::ParamTree;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2: added to the gradient as `wd * param` before the moments.
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ParamTree,
    pub v: ParamTree,
}

impl AdamState {
    pub fn new(params: &ParamTree) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One Adam update with bias correction, in place.
pub fn adam_step(params: &mut ParamTree, grads: &ParamTree, state: &mut AdamState, hyper: &AdamHyper) -> Result<()> {
    params.check_congruent(grads)?;
    params.check_congruent(&state.m)?;
    params.check_congruent(&state.v)?;

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);

    let groups = params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()));
    for (((_, p), (_, g)), ((_, m), (_, v))) in groups {
        let p = p.data_mut();
        let m = m.data_mut();
        let v = v.data_mut();
        for i in 0..p.len() {
            let grad = g.data()[i] + hyper.weight_decay * p[i];
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad * grad;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}
