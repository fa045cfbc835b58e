//! Global-norm clipping and the SGD, RMSprop and Adam update rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::params::Parameters;

/// Scales every gradient by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<G: Parameters + ?Sized>(grads: &mut G, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "clip threshold must be positive, got {max_norm}");
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// `θ ← θ − lr·g`.
pub fn sgd_step<P: Parameters + ?Sized, G: Parameters + ?Sized>(params: &mut P, grads: &G, lr: f64) {
    for (t, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        t.iter_mut().zip(g).for_each(|(t, g)| *t -= lr * g);
    }
}

/// Per-scalar moment accumulators, one buffer per parameter tensor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl OptState {
    pub fn new() -> Self {
        OptState::default()
    }

    fn ensure<P: Parameters + ?Sized>(buf: &mut Vec<Vec<f64>>, params: &P) {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        let fits = buf.len() == shapes.len() && buf.iter().zip(&shapes).all(|(b, &n)| b.len() == n);
        if !fits {
            *buf = shapes.into_iter().map(|n| vec![0.0; n]).collect();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.first.iter().chain(&self.second).flatten().all(|v| v.is_finite())
    }
}

/// `v ← decay·v + (1−decay)·g²; θ ← θ − lr·g/(√v + ε)`.
pub fn rmsprop_step<P, G>(params: &mut P, grads: &G, state: &mut OptState, lr: f64, decay: f64, eps: f64)
where
    P: Parameters + ?Sized,
    G: Parameters + ?Sized,
{
    OptState::ensure(&mut state.second, params);
    state.step += 1;
    for ((t, g), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(&mut state.second) {
        for ((t, g), v) in t.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = decay * *v + (1.0 - decay) * g * g;
            *t -= lr * g / (v.sqrt() + eps);
        }
    }
}

/// Bias-corrected Adam.
pub fn adam_step<P, G>(params: &mut P, grads: &G, state: &mut OptState, lr: f64, beta1: f64, beta2: f64, eps: f64)
where
    P: Parameters + ?Sized,
    G: Parameters + ?Sized,
{
    OptState::ensure(&mut state.first, params);
    OptState::ensure(&mut state.second, params);
    state.step += 1;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
    for ((t, g), (m, v)) in tensors.zip(state.first.iter_mut().zip(state.second.iter_mut())) {
        for (((t, g), m), v) in t.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *t -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

pub const RMSPROP_DECAY: f64 = 0.99;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Rmsprop,
    Adam,
}

impl OptimizerKind {
    /// Applies one update with the pinned default hyperparameters.
    pub fn step<P, G>(self, params: &mut P, grads: &G, state: &mut OptState, lr: f64)
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        match self {
            OptimizerKind::Sgd => {
                sgd_step(params, grads, lr);
                state.step += 1;
            }
            OptimizerKind::Rmsprop => rmsprop_step(params, grads, state, lr, RMSPROP_DECAY, EPSILON),
            OptimizerKind::Adam => adam_step(params, grads, state, lr, ADAM_BETA1, ADAM_BETA2, EPSILON),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd, rmsprop or adam)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use proptest::prelude::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn clips_three_four_five() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
        assert_eq!(g, vec![3.0, 4.0]);
    }

    #[test]
    fn clip_norm_is_global_across_tensors() {
        let mut rng = Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mut g: Vec<Vec<f64>> = (0..3).map(|k| (0..k + 2).map(|_| rng.uniform(-5.0, 5.0)).collect()).collect();
            let flat: Vec<f64> = g.concat();
            let before = norm(&flat);
            let max = rng.uniform(0.1, 10.0);
            let pre = clip_global_norm(&mut g, max);
            assert_eq!(pre, before);
            let after = norm(&g.concat());
            assert!((after - before.min(max)).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_examples() {
        let mut t = vec![1.0];
        sgd_step(&mut t, &vec![0.0], 0.5);
        assert_eq!(t, vec![1.0]);
        sgd_step(&mut t, &vec![0.1], 1.0);
        assert_eq!(t, vec![0.9]);
        let (mut a, mut b) = (vec![2.0], vec![2.0]);
        sgd_step(&mut a, &vec![0.5], 0.25);
        sgd_step(&mut a, &vec![0.5], 0.25);
        sgd_step(&mut b, &vec![0.5], 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn rmsprop_zero_gradient_decays_second_moment() {
        let mut t = vec![1.0, -2.0];
        let mut s = OptState::new();
        rmsprop_step(&mut t, &vec![1.0, 1.0], &mut s, 0.0, 0.99, 1e-8);
        let v0 = s.second[0][0];
        rmsprop_step(&mut t, &vec![0.0, 0.0], &mut s, 0.1, 0.99, 1e-8);
        assert_eq!(t, vec![1.0, -2.0]);
        assert_eq!(s.second[0][0], 0.99 * v0);
    }

    #[test]
    fn rmsprop_first_step_closed_form() {
        for g in [0.3, -2.0, 1e-3] {
            let mut t = vec![0.0];
            rmsprop_step(&mut t, &vec![g], &mut OptState::new(), 1e-3, 0.99, 1e-8);
            let expect = -1e-3 * g / (((1.0 - 0.99) * g * g).sqrt() + 1e-8);
            assert!((t[0] - expect).abs() < 1e-18);
            let approx = -1e-3 * g.signum() / 0.1;
            assert!((t[0] - approx).abs() <= approx.abs() * 1e-8 / (0.1 * g.abs()) * 1.01);
        }
    }

    #[test]
    fn rmsprop_constant_gradient_step_is_bounded() {
        for c in [1e-4, 1.0, 1e4] {
            let mut t = vec![0.0];
            let mut s = OptState::new();
            for _ in 0..500 {
                let before = t[0];
                rmsprop_step(&mut t, &vec![c], &mut s, 1e-2, 0.99, 1e-8);
                assert!((t[0] - before).abs() <= 1e-2 / 0.1 * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        for g in [5.0, -0.5, 0.1, -1e-3] {
            let mut t = vec![0.0];
            adam_step(&mut t, &vec![g], &mut OptState::new(), 1e-3, 0.9, 0.999, 1e-8);
            let exact = -1e-3 * g / (g.abs() + 1e-8);
            assert!((t[0] - exact).abs() < 1e-15);
            if g.abs() >= 0.1 {
                assert!((t[0] + 1e-3 * g.signum()).abs() < 1e-6 * 1e-3);
            }
        }
        let mut t = vec![1.0];
        adam_step(&mut t, &vec![0.0], &mut OptState::new(), 1e-3, 0.9, 0.999, 1e-8);
        assert_eq!(t, vec![1.0]);
    }

    #[test]
    fn adam_minimises_a_parabola() {
        let mut t = vec![1.0];
        let mut s = OptState::new();
        for _ in 0..100 {
            let g = vec![2.0 * t[0]];
            adam_step(&mut t, &g, &mut s, 0.1, 0.9, 0.999, 1e-8);
        }
        assert!(t[0].abs() < 0.05, "{}", t[0]);
        assert_eq!(s.step, 100);
    }

    #[test]
    fn state_round_trips_through_json() {
        let mut t = vec![0.3, -0.7];
        let mut s = OptState::new();
        for k in 0..3 {
            adam_step(&mut t, &vec![0.1 * k as f64, 1.0 / 3.0], &mut s, 1e-3, 0.9, 0.999, 1e-8);
        }
        let text = serde_json::to_string(&s).unwrap();
        let back: OptState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn optimizer_names_parse() {
        for k in [OptimizerKind::Sgd, OptimizerKind::Rmsprop, OptimizerKind::Adam] {
            assert_eq!(k.to_string().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("lbfgs".parse::<OptimizerKind>().is_err());
    }

    proptest! {
        #[test]
        fn clipping_keeps_direction(v in prop::collection::vec(-100.0f64..100.0, 1..20), max in 0.01f64..50.0) {
            let mut g = v.clone();
            let pre = clip_global_norm(&mut g, max);
            let scale = if pre > max { max / pre } else { 1.0 };
            for (a, b) in g.iter().zip(&v) {
                prop_assert_eq!(*a, b * scale);
            }
        }

        #[test]
        fn steps_are_deterministic(v in prop::collection::vec(-1.0f64..1.0, 1..8), g in prop::collection::vec(-1.0f64..1.0, 8)) {
            let g = &g[..v.len()].to_vec();
            for kind in [OptimizerKind::Sgd, OptimizerKind::Rmsprop, OptimizerKind::Adam] {
                let (mut a, mut b) = (v.clone(), v.clone());
                let (mut sa, mut sb) = (OptState::new(), OptState::new());
                kind.step(&mut a, g, &mut sa, 1e-2);
                kind.step(&mut b, g, &mut sb, 1e-2);
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(&sa, &sb);
            }
        }
    }
}
