use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Velocity buffers, one per parameter tensor, plus the number of updates
/// applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        Self {
            velocity: params.into_iter().map(Tensor::zeros_like).collect(),
            step: 0,
        }
    }
}

/// Classical momentum with coupled weight decay:
/// `g′ = g + wd·w`, `v′ = μ·v + g′`, `w′ = w − lr·v′`.
///
/// Shapes are checked before anything is written.
pub fn sgd_step<'a>(
    params: impl IntoIterator<Item = &'a mut Tensor>,
    grads: &[Tensor],
    state: &mut OptimizerState,
    hp: &SgdParams,
) -> Result<()> {
    let mut params: Vec<&mut Tensor> = params.into_iter().collect();
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Contract(format!(
            "sgd_step: {} params, {} grads, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((w, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if w.shape() != g.shape() {
            return Err(Error::shape("sgd_step grad", w.shape(), g.shape()));
        }
        if w.shape() != v.shape() {
            return Err(Error::shape("sgd_step velocity", w.shape(), v.shape()));
        }
    }
    for ((w, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        let w_data = w.data_mut();
        for ((wi, &gi), vi) in w_data.iter_mut().zip(g.data()).zip(v.data_mut()) {
            let g2 = gi + hp.weight_decay * *wi;
            *vi = hp.momentum * *vi + g2;
            *wi -= hp.lr * *vi;
        }
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(lr: f64, momentum: f64, weight_decay: f64) -> SgdParams {
        SgdParams {
            lr,
            momentum,
            weight_decay,
        }
    }

    #[test]
    fn plain_gradient_descent() {
        let mut w = Tensor::from_rows(&[[1.0, -2.0]]);
        let mut st = OptimizerState::new([&w]);
        let g = Tensor::from_rows(&[[0.5, 0.25]]);
        sgd_step([&mut w], &[g], &mut st, &hp(0.1, 0.0, 0.0)).unwrap();
        assert_eq!(w.data(), &[1.0 - 0.05, -2.0 - 0.025]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn momentum_moves_with_zero_gradient() {
        let mut w = Tensor::scalar(1.0);
        let mut st = OptimizerState::new([&w]);
        st.velocity[0] = Tensor::scalar(2.0);
        sgd_step([&mut w], &[Tensor::scalar(0.0)], &mut st, &hp(0.1, 0.5, 0.0)).unwrap();
        assert!((w.item() - (1.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_on_quadratic() {
        // f(w) = w², w0 = 1, lr 0.1, μ 0.9:
        // v1 = 2, w1 = 0.8; v2 = 0.9·2 + 1.6 = 3.4, w2 = 0.46
        let mut w = Tensor::scalar(1.0);
        let mut st = OptimizerState::new([&w]);
        let p = hp(0.1, 0.9, 0.0);
        let mut f = vec![w.item().powi(2)];
        for _ in 0..2 {
            let g = Tensor::scalar(2.0 * w.item());
            sgd_step([&mut w], &[g], &mut st, &p).unwrap();
            f.push(w.item().powi(2));
        }
        assert!((w.item() - 0.46).abs() < 1e-12);
        assert!(f[1] < f[0] && f[2] < f[1]);
    }

    #[test]
    fn weight_decay_alone_is_geometric() {
        let mut w = Tensor::from_rows(&[[3.0, -1.5]]);
        let mut st = OptimizerState::new([&w]);
        let p = hp(0.1, 0.0, 0.5);
        for k in 1..=10 {
            sgd_step([&mut w], &[Tensor::zeros(&[1, 2])], &mut st, &p).unwrap();
            let factor = 0.95f64.powi(k);
            assert!((w.get(0, 0) - 3.0 * factor).abs() < 1e-12);
            assert!((w.get(0, 1) + 1.5 * factor).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_leaves_params_untouched() {
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::zeros(&[2, 2]);
        let mut st = OptimizerState::new([&a, &b]);
        let grads = [Tensor::scalar(1.0), Tensor::zeros(&[2, 3])];
        assert!(sgd_step([&mut a, &mut b], &grads, &mut st, &hp(0.1, 0.0, 0.0)).is_err());
        assert_eq!(a.item(), 1.0);
        assert_eq!(st.step, 0);
    }
}
