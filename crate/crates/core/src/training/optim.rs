use crate::ndmath::{Real, Tensor};

use super::TrainError;

/// Rescales `grads` so their global L2 norm is at most `threshold`.
/// Returns the norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut [Tensor<T>], threshold: f64) -> Result<f64, TrainError> {
    let mut sq = 0.0;
    for (i, g) in grads.iter().enumerate() {
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient { tensor: i });
        }
        sq += g.sq_norm();
    }
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(TrainError::NonFiniteGradient {
            tensor: grads.len(),
        });
    }
    if norm > threshold {
        let scale = T::of(threshold / norm);
        for g in grads.iter_mut() {
            g.scale_in_place(scale);
        }
    }
    Ok(norm)
}

pub fn global_norm<T: Real>(grads: &[Tensor<T>]) -> f64 {
    grads.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        let zeros = || shapes.iter().map(|s| Tensor::zeros(s.to_vec())).collect();
        AdamState {
            config,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[Tensor<T>],
    ) -> Result<(), TrainError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainError::Config(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(TrainError::Config(format!(
                    "gradient {k} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                let gi = gi.as_f64();
                let m_new = beta1 * mi.as_f64() + (1.0 - beta1) * gi;
                let v_new = beta2 * vi.as_f64() + (1.0 - beta2) * gi * gi;
                *mi = T::of(m_new);
                *vi = T::of(v_new);
                let m_hat = m_new / bc1;
                let v_hat = v_new / bc2;
                *x = T::of(x.as_f64() - learning_rate * m_hat / (v_hat.sqrt() + epsilon));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Tensor<f64> {
        Tensor::vector(vec![x]).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.0);
        let mut adam = AdamState::new(AdamConfig::default(), &[&[1]]);
        adam.update(&mut [&mut p], &[scalar(2.0)]).unwrap();
        assert!((p.data()[0] + 0.001).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = Tensor::vector(vec![0.3, -1.5]).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &[&[2]]);
        adam.update(&mut [&mut p], &[Tensor::zeros(vec![2])])
            .unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut p = scalar(1.0);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &[&[1]]);
        for _ in 0..100 {
            let g = scalar(2.0 * p.data()[0]);
            adam.update(&mut [&mut p], &[g]).unwrap();
        }
        assert!(p.data()[0].abs() < 0.1, "{}", p.data()[0]);
    }

    #[test]
    fn clipping_rescales_large_norms_only() {
        let mut g = vec![Tensor::vector(vec![12.0, 16.0]).unwrap()];
        let pre = clip_gradients(&mut g, 10.0).unwrap();
        assert!((pre - 20.0).abs() < 1e-12);
        assert_eq!(g[0].data(), &[6.0, 8.0]);

        let mut g = vec![Tensor::vector(vec![3.0, 4.0]).unwrap()];
        clip_gradients(&mut g, 10.0).unwrap();
        assert_eq!(g[0].data(), &[3.0, 4.0]);
    }

    #[test]
    fn clipping_rejects_nan() {
        let mut g = vec![scalar(1.0), scalar(f64::NAN)];
        assert!(matches!(
            clip_gradients(&mut g, 10.0),
            Err(TrainError::NonFiniteGradient { tensor: 1 })
        ));
    }
}
