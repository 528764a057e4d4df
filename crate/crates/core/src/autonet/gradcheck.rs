//! Central finite-difference verification of analytic gradients.

use serde::Serialize;

use super::layers::{Mode, Sequential};
use super::loss::softmax_cross_entropy;
use super::tensor::{Parameter, Tensor};
use crate::error::Result;
use crate::rng::Rng;

/// A scalar objective over named parameters.
pub trait Differentiable {
    fn param_names(&self) -> Vec<String>;
    fn param_mut(&mut self, index: usize) -> &mut Parameter<f64>;
    /// Forward pass only.
    fn loss(&mut self) -> Result<f64>;
    /// Forward and backward pass with freshly zeroed gradients.
    fn loss_and_grad(&mut self) -> Result<f64>;
    /// Fingerprint of the piecewise-linear regions visited by the last
    /// forward pass; perturbations that change it straddle a kink.
    fn activation_pattern(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates checked per parameter tensor; smaller tensors are checked fully.
    pub max_coords_per_param: usize,
    /// Lower bound on the relative-error denominator.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            max_coords_per_param: 24,
            denominator_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&ParamCheck> {
        self.params.iter().filter(|p| !p.passed).collect()
    }
}

pub fn gradient_check<D: Differentiable + ?Sized>(
    model: &mut D,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let names = model.param_names();
    model.loss_and_grad()?;
    let base_pattern = model.activation_pattern();
    let analytic: Vec<Vec<f64>> = (0..names.len())
        .map(|i| model.param_mut(i).grad.to_f64())
        .collect();
    let mut rng = Rng::new(opts.seed);
    let h = opts.step;
    let mut report = GradCheckReport::default();
    for (p, name) in names.into_iter().enumerate() {
        let numel = analytic[p].len();
        let mut coords: Vec<usize> = (0..numel).collect();
        rng.shuffle(&mut coords);
        let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
        for &j in &coords {
            if checked >= opts.max_coords_per_param {
                break;
            }
            let original = model.param_mut(p).value.data()[j];
            model.param_mut(p).value.data_mut()[j] = original + h;
            let plus = model.loss()?;
            let plus_pattern = model.activation_pattern();
            model.param_mut(p).value.data_mut()[j] = original - h;
            let minus = model.loss()?;
            let minus_pattern = model.activation_pattern();
            model.param_mut(p).value.data_mut()[j] = original;
            if plus_pattern != base_pattern || minus_pattern != base_pattern {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[p][j];
            let denom = a.abs().max(numeric.abs()).max(opts.denominator_floor);
            worst = worst.max((a - numeric).abs() / denom);
            checked += 1;
        }
        report.params.push(ParamCheck {
            name,
            checked,
            skipped_kinks: skipped,
            max_rel_error: worst,
            passed: worst < opts.tolerance && (checked > 0 || numel == 0),
        });
    }
    Ok(report)
}

/// Softmax cross-entropy of a single [`Sequential`] stack on a fixed batch,
/// in training mode with frozen dropout masks.
pub struct SequentialObjective {
    pub net: Sequential<f64>,
    pub input: Tensor<f64>,
    pub labels: Vec<usize>,
    rng: Rng,
}

impl SequentialObjective {
    pub fn new(mut net: Sequential<f64>, input: Tensor<f64>, labels: Vec<usize>, seed: u64) -> Self {
        net.set_dropout_frozen(true);
        SequentialObjective {
            net,
            input,
            labels,
            rng: Rng::new(seed),
        }
    }

    fn forward(&mut self) -> Result<Tensor<f64>> {
        self.net.forward(&self.input, Mode::Train, &mut self.rng)
    }
}

impl Differentiable for SequentialObjective {
    fn param_names(&self) -> Vec<String> {
        self.net.named_params().into_iter().map(|(n, _)| n).collect()
    }

    fn param_mut(&mut self, index: usize) -> &mut Parameter<f64> {
        self.net.named_params_mut().swap_remove(index).1
    }

    fn loss(&mut self) -> Result<f64> {
        let out = self.forward()?;
        Ok(softmax_cross_entropy(&out, &self.labels)?.0)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        for (_, p) in self.net.named_params_mut() {
            p.zero_grad();
        }
        let out = self.forward()?;
        let (loss, grad) = softmax_cross_entropy(&out, &self.labels)?;
        self.net.backward(&grad);
        Ok(loss)
    }

    fn activation_pattern(&self) -> u64 {
        self.net.activation_hash(0xCBF2_9CE4_8422_2325)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autonet::init::init_params;
    use crate::autonet::layers::LayerSpec;

    fn random_input(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = Rng::new(seed);
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    fn check(specs: &[LayerSpec], input: Tensor<f64>, tol: f64) -> GradCheckReport {
        let labels = (0..input.rows()).map(|i| i % 2).collect();
        let net = init_params(specs, 11).unwrap();
        let mut obj = SequentialObjective::new(net, input, labels, 3);
        let opts = GradCheckOptions {
            tolerance: tol,
            max_coords_per_param: usize::MAX,
            ..Default::default()
        };
        gradient_check(&mut obj, &opts).unwrap()
    }

    #[test]
    fn dense_gradients() {
        let r = check(&[LayerSpec::Dense { inputs: 3, outputs: 2 }], random_input(&[4, 3], 1), 1e-6);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.params.len(), 2);
    }

    #[test]
    fn conv_gradients() {
        let specs = [
            LayerSpec::Conv1d { in_channels: 2, out_channels: 2, kernel: 3 },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 18, outputs: 2 },
        ];
        let r = check(&specs, random_input(&[2, 2, 9], 2), 1e-6);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn batchnorm_gradients() {
        let specs = [
            LayerSpec::Dense { inputs: 5, outputs: 4 },
            LayerSpec::batch_norm(4),
            LayerSpec::Dense { inputs: 4, outputs: 2 },
        ];
        // The pre-normalization bias has an exactly zero gradient, so its numeric
        // estimate is pure cancellation noise measured against the floor.
        let r = check(&specs, random_input(&[6, 5], 3), 1e-4);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn relu_and_dropout_with_frozen_mask() {
        let specs = [
            LayerSpec::Dense { inputs: 6, outputs: 8 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Dense { inputs: 8, outputs: 2 },
        ];
        let r = check(&specs, random_input(&[5, 6], 4), 1e-6);
        assert!(r.passed(), "{r:?}");
    }

    /// Doubles the gradient of one parameter after an otherwise correct backward pass.
    struct Corrupted(SequentialObjective, usize);

    impl Differentiable for Corrupted {
        fn param_names(&self) -> Vec<String> {
            self.0.param_names()
        }
        fn param_mut(&mut self, index: usize) -> &mut Parameter<f64> {
            self.0.param_mut(index)
        }
        fn loss(&mut self) -> Result<f64> {
            self.0.loss()
        }
        fn loss_and_grad(&mut self) -> Result<f64> {
            let loss = self.0.loss_and_grad()?;
            for g in self.0.param_mut(self.1).grad.data_mut() {
                *g *= 2.0;
            }
            Ok(loss)
        }
    }

    #[test]
    fn corrupted_backward_is_flagged() {
        let net = init_params(&[LayerSpec::Dense { inputs: 3, outputs: 2 }], 1).unwrap();
        let obj = SequentialObjective::new(net, random_input(&[4, 3], 5), vec![0, 1, 0, 1], 0);
        let mut bad = Corrupted(obj, 0);
        let r = gradient_check(&mut bad, &GradCheckOptions::default()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.failures().len(), 1);
        assert_eq!(r.failures()[0].name, "0.weight");
    }

    #[test]
    fn empty_network_gives_empty_report() {
        let obj = SequentialObjective::new(Sequential::default(), random_input(&[2, 2], 6), vec![0, 1], 0);
        let mut obj = obj;
        let r = gradient_check(&mut obj, &GradCheckOptions::default()).unwrap();
        assert!(r.params.is_empty());
        assert!(r.passed());
    }
}
