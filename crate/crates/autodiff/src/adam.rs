use std::collections::BTreeMap;

use crate::error::{Result, TensorError};
use crate::params::{GradMap, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, betas: (f64, f64)) -> Self {
        AdamConfig {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a fixed set of named parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    first_moment: BTreeMap<String, Tensor>,
    second_moment: BTreeMap<String, Tensor>,
}

impl AdamState {
    /// Moments start at zero for every parameter of `params` selected by `managed`.
    pub fn new(config: AdamConfig, params: &ParamStore, managed: impl Fn(&str) -> bool) -> Self {
        let zeros: BTreeMap<String, Tensor> = params
            .iter()
            .filter(|(n, _)| managed(n))
            .map(|(n, t)| (n.to_string(), Tensor::zeros(t.shape())))
            .collect();
        AdamState {
            config,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn managed(&self) -> impl Iterator<Item = &str> {
        self.first_moment.keys().map(String::as_str)
    }

    /// Applies one update. Managed parameters missing from `grads` see a zero gradient.
    /// Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradMap) -> Result<()> {
        for (name, g) in grads {
            if self.first_moment.contains_key(name) && !g.all_finite() {
                return Err(TensorError::NonFiniteGradient { name: name.clone() });
            }
        }
        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (name, m) in self.first_moment.iter_mut() {
            let v = self.second_moment.get_mut(name).expect("moments share keys");
            let p = params.get_mut(name).ok_or_else(|| TensorError::InvalidArgument {
                op: "adam",
                msg: format!("parameter `{name}` disappeared"),
            })?;
            let g = grads.get(name);
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
                let mhat = md[i] / c1;
                let vhat = vd[i] / c2;
                pd[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::from_vec(vec![v, -v]));
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(0.5);
        let mut adam = AdamState::new(AdamConfig::new(1e-4, (0.9, 0.999)), &p, |_| true);
        let grads: GradMap = [("x".to_string(), Tensor::ones(&[2]))].into();
        adam.step(&mut p, &grads).unwrap();
        let want = 1e-4 / (1.0 + 1e-8);
        let d = p.get("x").unwrap().data();
        assert!((0.5 - d[0] - want).abs() < 1e-15);
        assert!((-0.5 - d[1] - want).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_null_update() {
        let mut p = store(0.5);
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::new(1e-3, (0.5, 0.999)), &p, |_| true);
        let grads: GradMap = [("x".to_string(), Tensor::zeros(&[2]))].into();
        adam.step(&mut p, &grads).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = store(0.5);
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::new(1e-3, (0.9, 0.999)), &p, |_| true);
        let grads: GradMap = [("x".to_string(), Tensor::from_vec(vec![1.0, f64::NAN]))].into();
        let err = adam.step(&mut p, &grads).unwrap_err();
        assert_eq!(err, TensorError::NonFiniteGradient { name: "x".into() });
        assert_eq!(p, before);
        assert_eq!(adam.step_count, 0);
    }

    #[test]
    fn quadratic_descent_is_monotone() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::scalar(1.0));
        let mut adam = AdamState::new(AdamConfig::new(5e-3, (0.9, 0.999)), &p, |_| true);
        let mut last = 1.0_f64;
        for _ in 0..100 {
            let x = p.get("x").unwrap().item();
            let grads: GradMap = [("x".to_string(), Tensor::scalar(2.0 * x))].into();
            adam.step(&mut p, &grads).unwrap();
            let now = p.get("x").unwrap().item().abs();
            assert!(now < last, "{now} !< {last}");
            last = now;
        }
    }
}
