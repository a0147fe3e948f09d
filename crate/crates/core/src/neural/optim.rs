use super::lstm::{Gradients, LstmParameters};
use super::tensor::{Dims, Tensors};
use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Running averages kept by AdaDelta, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState {
    pub rho: f64,
    pub epsilon: f64,
    pub grad_sq_avg: Tensors,
    pub update_sq_avg: Tensors,
}

impl AdaDeltaState {
    pub fn new(dims: Dims) -> Self {
        Self::with_hyperparameters(dims, DEFAULT_RHO, DEFAULT_EPSILON)
    }

    pub fn with_hyperparameters(dims: Dims, rho: f64, epsilon: f64) -> Self {
        AdaDeltaState {
            rho,
            epsilon,
            grad_sq_avg: Tensors::zeros(dims),
            update_sq_avg: Tensors::zeros(dims),
        }
    }
}

/// Rescales `grads` in place so that their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm {
        grads.grads.scale(max_norm / norm);
    }
    norm
}

/// One AdaDelta descent step, applied in place.
pub fn adadelta_step(
    params: &mut LstmParameters,
    grads: &Gradients,
    opt: &mut AdaDeltaState,
) -> Result<()> {
    if params.dims() != grads.dims()
        || !opt.grad_sq_avg.dims_match(params.dims())
        || !opt.update_sq_avg.dims_match(params.dims())
    {
        return Err(Error::InvalidDimension(
            "optimizer state, gradients and parameters are not congruent".into(),
        ));
    }
    let rho = opt.rho;
    let eps = opt.epsilon;
    let tensors = params
        .weights
        .slices_mut()
        .into_iter()
        .zip(grads.grads.slices())
        .zip(opt.grad_sq_avg.slices_mut())
        .zip(opt.update_sq_avg.slices_mut());
    for (((p, g), eg), ed) in tensors {
        for k in 0..p.len() {
            let gk = g[k];
            eg[k] = rho * eg[k] + (1.0 - rho) * gk * gk;
            let delta = -((ed[k] + eps).sqrt() / (eg[k] + eps).sqrt()) * gk;
            ed[k] = rho * ed[k] + (1.0 - rho) * delta * delta;
            p[k] += delta;
        }
    }
    Ok(())
}

/// Clip to `max_norm`, then take one AdaDelta step. Returns the pre-clip norm.
pub fn apply_gradients(
    params: &mut LstmParameters,
    mut grads: Gradients,
    opt: &mut AdaDeltaState,
    max_norm: f64,
) -> Result<f64> {
    let norm = clip_global_norm(&mut grads, max_norm);
    adadelta_step(params, &grads, opt)?;
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init_parameters;

    fn dims() -> Dims {
        Dims {
            obs_size: 2,
            action_count: 2,
            hidden: 2,
        }
    }

    fn filled(value: f64) -> Gradients {
        let mut g = Gradients::zeros(dims());
        for s in g.grads.slices_mut() {
            s.fill(value);
        }
        g
    }

    #[test]
    fn clip_halves_norm_two() {
        let mut g = filled(1.0);
        let n = g.norm();
        g.grads.scale(2.0 / n);
        let before = g.clone();
        let pre = clip_global_norm(&mut g, 1.0);
        assert!((pre - 2.0).abs() < 1e-12);
        for (a, b) in g.grads.slices().iter().zip(before.grads.slices()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn clip_leaves_small_gradients() {
        let mut g = filled(1.0);
        let n = g.norm();
        g.grads.scale(0.5 / n);
        let before = g.clone();
        clip_global_norm(&mut g, 1.0);
        assert_eq!(g, before);
    }

    #[test]
    fn zero_gradient_only_decays_accumulators() {
        let mut params = init_parameters(2, 2, 2, 3).unwrap();
        let before = params.clone();
        let mut opt = AdaDeltaState::new(dims());
        opt.grad_sq_avg.slices_mut()[0][0] = 1.0;
        adadelta_step(&mut params, &Gradients::zeros(dims()), &mut opt).unwrap();
        assert_eq!(params, before);
        assert!((opt.grad_sq_avg.slices()[0][0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn scalar_update_from_fresh_state() {
        // Independent evaluation of the update rule for g = 1.
        let rho: f64 = 0.95;
        let eps: f64 = 1e-6;
        let eg = (1.0 - rho) * 1.0;
        let expected = -(eps.sqrt()) / (eg + eps).sqrt();
        assert!((expected - -4.472091e-3).abs() < 1e-9);

        let mut params = LstmParameters::zeros(dims());
        let mut opt = AdaDeltaState::new(dims());
        let mut g = Gradients::zeros(dims());
        g.grads.output_bias[0] = 1.0;
        g.grads.output_bias[1] = 1.0;
        adadelta_step(&mut params, &g, &mut opt).unwrap();
        assert!((params.weights.output_bias[0] - expected).abs() < 1e-15);
        // Equal gradients, equal updates.
        assert_eq!(params.weights.output_bias[0], params.weights.output_bias[1]);
        let ed = opt.update_sq_avg.output_bias[0];
        assert!((ed - 0.05 * expected * expected).abs() < 1e-18);
    }

    #[test]
    fn incongruent_state_is_rejected() {
        let mut params = LstmParameters::zeros(dims());
        let mut opt = AdaDeltaState::new(Dims {
            obs_size: 3,
            ..dims()
        });
        assert!(adadelta_step(&mut params, &Gradients::zeros(dims()), &mut opt).is_err());
    }
}
