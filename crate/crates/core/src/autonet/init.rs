use super::layers::{Layer, LayerSpec, Sequential};
use super::tensor::Real;
use crate::error::Result;
use crate::rng::Rng;

/// He-normal weights (std `sqrt(2 / fan_in)`) in layer order, element order.
/// Biases stay zero and batch-norm scale/shift stay at one/zero.
pub fn he_init<T: Real>(seq: &mut Sequential<T>, rng: &mut Rng) {
    for layer in &mut seq.layers {
        let Some(fan_in) = layer.fan_in() else {
            continue;
        };
        let std = (2.0 / fan_in as f64).sqrt();
        let weight = match layer {
            Layer::Dense(l) => &mut l.weight,
            Layer::Conv1d(l) => &mut l.weight,
            _ => unreachable!("only dense and conv layers have a fan-in"),
        };
        for w in weight.value.data_mut() {
            *w = T::from_f64(std * rng.normal());
        }
    }
}

pub fn init_params<T: Real>(specs: &[LayerSpec], seed: u64) -> Result<Sequential<T>> {
    let mut seq = Sequential::from_specs(specs)?;
    he_init(&mut seq, &mut Rng::new(seed));
    Ok(seq)
}
