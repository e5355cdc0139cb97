//! Small neural building blocks recorded onto the tape: affine layers,
//! multi-layer perceptrons and the gated recurrent unit used by both
//! channels.
//!
//! Parameters are registered under dotted names (`prefix.l0.w`, `prefix.wz`,
//! ...) so the same prefix strings drive initialization, the forward pass and
//! checkpoint addressing.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::params::ParamSet;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    LeakyRelu(f64),
}

/// One layer of an MLP: output width plus the activation applied after the
/// affine map.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        LayerSpec { width, activation }
    }
}

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
pub fn init_uniform(rng: &mut ChaCha12Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| bound * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    Tensor::new(shape, data).expect("shape/data built together")
}

/// Register weight `[out,in]` and bias `[out]` for one affine layer.
pub fn init_affine(
    params: &mut ParamSet,
    rng: &mut ChaCha12Rng,
    prefix: &str,
    in_width: usize,
    out_width: usize,
) -> Result<()> {
    params.insert(
        &format!("{prefix}.w"),
        init_uniform(rng, vec![out_width, in_width], in_width),
    )?;
    params.insert(
        &format!("{prefix}.b"),
        init_uniform(rng, vec![out_width], in_width),
    )?;
    Ok(())
}

/// `W x + b` using the parameters registered under `prefix`.
pub fn affine(
    tape: &mut Tape,
    params: &ParamSet,
    prefix: &str,
    input: NodeId,
) -> Result<NodeId> {
    let w = tape.param(&format!("{prefix}.w"), params)?;
    let b = tape.param(&format!("{prefix}.b"), params)?;
    let wx = tape.matmul(w, input)?;
    tape.add(wx, b)
}

pub fn apply_activation(tape: &mut Tape, x: NodeId, act: Activation) -> Result<NodeId> {
    match act {
        Activation::Identity => Ok(x),
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Tanh => tape.tanh(x),
        Activation::LeakyRelu(slope) => tape.leaky_relu(x, slope),
    }
}

/// Register parameters for an MLP with the given layer widths.
pub fn init_mlp(
    params: &mut ParamSet,
    rng: &mut ChaCha12Rng,
    prefix: &str,
    in_width: usize,
    layers: &[LayerSpec],
) -> Result<()> {
    let mut prev = in_width;
    for (i, layer) in layers.iter().enumerate() {
        init_affine(params, rng, &format!("{prefix}.l{i}"), prev, layer.width)?;
        prev = layer.width;
    }
    Ok(())
}

/// Composition of affine maps and per-layer activations. The final layer's
/// activation comes from the spec (identity for readouts).
pub fn mlp_forward(
    tape: &mut Tape,
    params: &ParamSet,
    prefix: &str,
    layers: &[LayerSpec],
    input: NodeId,
) -> Result<NodeId> {
    let mut x = input;
    for (i, layer) in layers.iter().enumerate() {
        x = affine(tape, params, &format!("{prefix}.l{i}"), x)?;
        x = apply_activation(tape, x, layer.activation)?;
    }
    Ok(x)
}

/// Register the three gates of a GRU: `wz/wr/wh` over `[x;h]` plus biases.
pub fn init_gru(
    params: &mut ParamSet,
    rng: &mut ChaCha12Rng,
    prefix: &str,
    input_width: usize,
    hidden_width: usize,
) -> Result<()> {
    let fan_in = input_width + hidden_width;
    for gate in ["wz", "wr", "wh"] {
        params.insert(
            &format!("{prefix}.{gate}"),
            init_uniform(rng, vec![hidden_width, fan_in], fan_in),
        )?;
    }
    for gate in ["bz", "br", "bh"] {
        params.insert(
            &format!("{prefix}.{gate}"),
            init_uniform(rng, vec![hidden_width], fan_in),
        )?;
    }
    Ok(())
}

/// One gated recurrent update:
/// `z = sig(Wz[x;h]+bz)`, `r = sig(Wr[x;h]+br)`,
/// `hc = tanh(Wh[x; r*h]+bh)`, `h' = (1-z)*h + z*hc`.
pub fn gru_step(
    tape: &mut Tape,
    params: &ParamSet,
    prefix: &str,
    input: NodeId,
    state: NodeId,
) -> Result<NodeId> {
    let gate = |tape: &mut Tape, w: &str, b: &str, v: NodeId| -> Result<NodeId> {
        let w = tape.param(&format!("{prefix}.{w}"), params)?;
        let b = tape.param(&format!("{prefix}.{b}"), params)?;
        let wv = tape.matmul(w, v)?;
        tape.add(wv, b)
    };
    let xh = tape.concat(&[input, state], 0)?;
    let z = gate(tape, "wz", "bz", xh)?;
    let z = tape.sigmoid(z)?;
    let r = gate(tape, "wr", "br", xh)?;
    let r = tape.sigmoid(r)?;
    let rh = tape.mul(r, state)?;
    let xrh = tape.concat(&[input, rh], 0)?;
    let hc = gate(tape, "wh", "bh", xrh)?;
    let hc = tape.tanh(hc)?;
    let hidden = tape.shape(state).to_vec();
    let one = tape.constant(Tensor::full(hidden, 1.0))?;
    let keep = tape.sub(one, z)?;
    let kept = tape.mul(keep, state)?;
    let new = tape.mul(z, hc)?;
    tape.add(kept, new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn zero_affine(params: &mut ParamSet, prefix: &str, in_w: usize, out_w: usize) {
        params
            .insert(&format!("{prefix}.w"), Tensor::zeros(vec![out_w, in_w]))
            .unwrap();
        params
            .insert(&format!("{prefix}.b"), Tensor::zeros(vec![out_w]))
            .unwrap();
    }

    #[test]
    fn mlp_zero_weights_zero_output() {
        let mut p = ParamSet::new();
        zero_affine(&mut p, "m.l0", 3, 2);
        let layers = [LayerSpec::new(2, Activation::Identity)];
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, -2.0, 3.0])).unwrap();
        let y = mlp_forward(&mut tape, &p, "m", &layers, x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn mlp_one_layer_hand_case() {
        // W=[[2]], b=[1], x=[3], identity -> [7]
        let mut p = ParamSet::new();
        p.insert("m.l0.w", Tensor::matrix(&[vec![2.0]]).unwrap()).unwrap();
        p.insert("m.l0.b", Tensor::vector(vec![1.0])).unwrap();
        let layers = [LayerSpec::new(1, Activation::Identity)];
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![3.0])).unwrap();
        let y = mlp_forward(&mut tape, &p, "m", &layers, x).unwrap();
        assert_eq!(tape.value(y).data(), &[7.0]);
    }

    #[test]
    fn mlp_two_layer_leaky_relu() {
        // W1=[[-1]], x=[1] -> pre-act -1 -> leaky(0.2) -> -0.2 -> W2=[[3]] -> [-0.6]
        let mut p = ParamSet::new();
        p.insert("m.l0.w", Tensor::matrix(&[vec![-1.0]]).unwrap()).unwrap();
        p.insert("m.l0.b", Tensor::vector(vec![0.0])).unwrap();
        p.insert("m.l1.w", Tensor::matrix(&[vec![3.0]]).unwrap()).unwrap();
        p.insert("m.l1.b", Tensor::vector(vec![0.0])).unwrap();
        let layers = [
            LayerSpec::new(1, Activation::LeakyRelu(0.2)),
            LayerSpec::new(1, Activation::Identity),
        ];
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0])).unwrap();
        let y = mlp_forward(&mut tape, &p, "m", &layers, x).unwrap();
        assert!((tape.value(y).data()[0] - (-0.6)).abs() < 1e-15);
    }

    #[test]
    fn mlp_width_mismatch_errors() {
        let mut p = ParamSet::new();
        zero_affine(&mut p, "m.l0", 3, 2);
        let layers = [LayerSpec::new(2, Activation::Identity)];
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0])).unwrap(); // needs 3
        assert!(mlp_forward(&mut tape, &p, "m", &layers, x).is_err());
    }

    fn zero_gru(params: &mut ParamSet, prefix: &str, x: usize, h: usize) {
        for g in ["wz", "wr", "wh"] {
            params
                .insert(&format!("{prefix}.{g}"), Tensor::zeros(vec![h, x + h]))
                .unwrap();
        }
        for g in ["bz", "br", "bh"] {
            params
                .insert(&format!("{prefix}.{g}"), Tensor::zeros(vec![h]))
                .unwrap();
        }
    }

    #[test]
    fn gru_zero_params_zero_state_fixed_point() {
        let mut p = ParamSet::new();
        zero_gru(&mut p, "g", 2, 3);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, -1.0])).unwrap();
        let h = tape.constant(Tensor::zeros(vec![3])).unwrap();
        let h2 = gru_step(&mut tape, &p, "g", x, h).unwrap();
        assert_eq!(tape.value(h2).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn gru_zero_params_halves_state() {
        // z = 0.5, hc = 0 -> h' = 0.5 * h
        let mut p = ParamSet::new();
        zero_gru(&mut p, "g", 2, 3);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.3, 0.7])).unwrap();
        let h = tape.constant(Tensor::vector(vec![2.0, -4.0, 6.0])).unwrap();
        let h2 = gru_step(&mut tape, &p, "g", x, h).unwrap();
        assert_eq!(tape.value(h2).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let t = init_uniform(&mut rng, vec![8, 16], 16);
        let bound = 1.0 / 4.0;
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        // seeded: same seed, same values
        let mut rng2 = ChaCha12Rng::seed_from_u64(11);
        let t2 = init_uniform(&mut rng2, vec![8, 16], 16);
        assert_eq!(t.data(), t2.data());
    }
}
