use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Parameters stored flat: `w1` (hidden x input, row-major), `b1`, `w2`
/// (output x hidden, row-major), `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub activation: Activation,
    pub data: Vec<f64>,
}

impl MlpParams {
    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden + output * hidden + output
    }

    pub fn zeros(input: usize, hidden: usize, output: usize, activation: Activation) -> Self {
        let data = vec![0.0; Self::param_count(input, hidden, output)];
        Self { input, hidden, output, activation, data }
    }

    /// Uniform in `±1/sqrt(fan_in)` for every weight and bias of a layer.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input, hidden, output, activation);
        let b1 = 1.0 / (input.max(1) as f64).sqrt();
        let b2 = 1.0 / (hidden.max(1) as f64).sqrt();
        let split = hidden * input + hidden;
        for x in &mut p.data[..split] {
            *x = rng.gen_range(-b1..=b1);
        }
        for x in &mut p.data[split..] {
            *x = rng.gen_range(-b2..=b2);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        [w1, b1, w2, b2]
    }

    pub fn w1(&self) -> &[f64] {
        let [w1, b1, ..] = self.offsets();
        &self.data[w1..b1]
    }

    pub fn b1(&self) -> &[f64] {
        let [_, b1, w2, _] = self.offsets();
        &self.data[b1..w2]
    }

    pub fn w2(&self) -> &[f64] {
        let [_, _, w2, b2] = self.offsets();
        &self.data[w2..b2]
    }

    pub fn b2(&self) -> &[f64] {
        let [.., b2] = self.offsets();
        &self.data[b2..]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.input == other.input && self.hidden == other.hidden && self.output == other.output
    }
}

/// Gradients in the same flat layout as [`MlpParams::data`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub data: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self { data: vec![0.0; params.len()] }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

pub fn forward_cached(params: &MlpParams, input: &[f64]) -> Result<ForwardCache> {
    if input.len() != params.input {
        return Err(Error::ShapeMismatch { expected: params.input, got: input.len() });
    }
    let (w1, b1, w2, b2) = (params.w1(), params.b1(), params.w2(), params.b2());
    let mut pre = Vec::with_capacity(params.hidden);
    let mut hidden = Vec::with_capacity(params.hidden);
    for h in 0..params.hidden {
        let row = &w1[h * params.input..(h + 1) * params.input];
        let z = b1[h] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        pre.push(z);
        hidden.push(params.activation.apply(z));
    }
    let output = (0..params.output)
        .map(|o| {
            let row = &w2[o * params.hidden..(o + 1) * params.hidden];
            b2[o] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
        })
        .collect();
    Ok(ForwardCache { pre, hidden, output })
}

pub fn forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_cached(params, input)?.output)
}

/// Accumulates `d loss / d params` into `acc` given `d loss / d output`.
pub fn backward_into(
    params: &MlpParams,
    input: &[f64],
    cache: &ForwardCache,
    output_grad: &[f64],
    acc: &mut [f64],
) -> Result<()> {
    if input.len() != params.input {
        return Err(Error::ShapeMismatch { expected: params.input, got: input.len() });
    }
    if output_grad.len() != params.output {
        return Err(Error::ShapeMismatch { expected: params.output, got: output_grad.len() });
    }
    if acc.len() != params.len() {
        return Err(Error::ShapeMismatch { expected: params.len(), got: acc.len() });
    }
    let (ni, nh) = (params.input, params.hidden);
    let b1_off = nh * ni;
    let w2_off = b1_off + nh;
    let b2_off = w2_off + params.output * nh;
    let w2 = params.w2();

    let mut hidden_grad = vec![0.0; nh];
    for (o, &g) in output_grad.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        acc[b2_off + o] += g;
        let row = &mut acc[w2_off + o * nh..w2_off + (o + 1) * nh];
        for (h, a) in row.iter_mut().enumerate() {
            *a += g * cache.hidden[h];
            hidden_grad[h] += g * w2[o * nh + h];
        }
    }
    for h in 0..nh {
        let d = hidden_grad[h] * params.activation.derivative(cache.pre[h], cache.hidden[h]);
        if d == 0.0 {
            continue;
        }
        acc[b1_off + h] += d;
        let row = &mut acc[h * ni..(h + 1) * ni];
        for (a, x) in row.iter_mut().zip(input) {
            *a += d * x;
        }
    }
    Ok(())
}

/// Exact gradients of a scalar loss whose output gradient is `output_grad`.
pub fn backward(params: &MlpParams, input: &[f64], output_grad: &[f64]) -> Result<Grads> {
    let cache = forward_cached(params, input)?;
    let mut g = Grads::zeros_like(params);
    backward_into(params, input, &cache, output_grad, &mut g.data)?;
    Ok(g)
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let p = MlpParams::zeros(3, 4, 2, Activation::Tanh);
        assert_eq!(forward(&p, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let g = backward(&p, &[1.0, -2.0, 3.0], &[0.0, 0.0]).unwrap();
        assert!(g.data.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn tanh_unit_net_at_zero() {
        let mut p = MlpParams::zeros(1, 1, 1, Activation::Tanh);
        p.data = vec![1.0, 0.0, 1.0, 0.0];
        assert_eq!(forward(&p, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn linear_unit_gradient_is_input() {
        // y = w2 * (w1 * x); dy/dw1 = w2 * x
        let mut p = MlpParams::zeros(1, 1, 1, Activation::Identity);
        p.data = vec![0.7, 0.0, 1.0, 0.0];
        let g = backward(&p, &[2.5], &[1.0]).unwrap();
        assert_eq!(g.data[0], 2.5);
        assert_eq!(g.data[3], 1.0);
    }

    #[test]
    fn forward_matches_explicit_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = MlpParams::init(5, 6, 3, Activation::Tanh, &mut rng);
        let x: Vec<f64> = (0..5).map(|i| i as f64 * 0.3 - 0.5).collect();
        let got = forward(&p, &x).unwrap();
        for o in 0..3 {
            let mut y = p.b2()[o];
            for h in 0..6 {
                let mut z = p.b1()[h];
                for i in 0..5 {
                    z += p.w1()[h * 5 + i] * x[i];
                }
                y += p.w2()[o * 6 + h] * z.tanh();
            }
            assert!((y - got[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = MlpParams::zeros(3, 2, 1, Activation::Relu);
        assert!(matches!(forward(&p, &[1.0]), Err(Error::ShapeMismatch { expected: 3, got: 1 })));
        assert!(backward(&p, &[1.0, 2.0, 3.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.3; 4]);
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let s = softmax(&[1000.0, 0.0]);
        assert!(s.iter().all(|x| x.is_finite()));
        assert!((s[0] - 1.0).abs() < 1e-15 && s[1] < 1e-300);
        let ls = log_softmax(&[1000.0, 0.0]);
        assert_eq!(ls[0], 0.0);
        assert_eq!(ls[1], -1000.0);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!((entropy(&[0.5, 0.5]) - 0.693_147_180_559_945_3).abs() < 1e-15);
    }
}
