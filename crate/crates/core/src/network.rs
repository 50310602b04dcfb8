//! Feed-forward fully connected networks: loading, evaluation and interval
//! bounds.
//!
//! Layers are numbered from 1 (layer 0 is the input vector). Error messages
//! use the same numbering.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{relu, Scalar};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("failed to parse network: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("network I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("network has no layers")]
    Empty,
    #[error("input_dim must be at least 1")]
    ZeroInputDim,
    #[error("layer {layer}: {detail}")]
    DimensionMismatch { layer: usize, detail: String },
    #[error("layer {layer}: non-finite {what} at {index:?}")]
    NonFinite {
        layer: usize,
        what: &'static str,
        index: (usize, usize),
    },
    #[error("expected input of length {expected}, got {actual}")]
    InputLength { expected: usize, actual: usize },
    #[error("interval box dimension {index}: lower bound exceeds upper bound or is not finite")]
    BadInterval { index: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[default]
    Relu,
    Linear,
}

impl ActivationKind {
    #[inline]
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            ActivationKind::Relu => relu(v),
            ActivationKind::Linear => v,
        }
    }
}

/// One affine layer followed by an activation. `weights[i][j]` multiplies
/// input `j` of neuron `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LayerSpec<T: Scalar = f64> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<T>,
    /// ReLU when omitted from JSON.
    #[serde(default)]
    pub activation: ActivationKind,
}

impl<T: Scalar> LayerSpec<T> {
    pub fn new(weights: Vec<Vec<T>>, biases: Vec<T>, activation: ActivationKind) -> Self {
        Self {
            weights,
            biases,
            activation,
        }
    }

    pub fn outputs(&self) -> usize {
        self.biases.len()
    }

    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Pre-activation `W x + b`.
    pub fn affine(&self, x: &[T]) -> Vec<T> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Network<T: Scalar = f64> {
    input_dim: usize,
    layers: Vec<LayerSpec<T>>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawNetwork<T: Scalar> {
    input_dim: usize,
    layers: Vec<LayerSpec<T>>,
}

/// Per-layer values recorded by [`Network::forward_trace`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace<T> {
    pub pre: Vec<T>,
    pub post: Vec<T>,
}

impl<T: Scalar> Network<T> {
    /// Builds a network, checking dimensions and finiteness.
    pub fn new(input_dim: usize, layers: Vec<LayerSpec<T>>) -> Result<Self, NetworkError> {
        if input_dim == 0 {
            return Err(NetworkError::ZeroInputDim);
        }
        if layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut width = input_dim;
        for (k, layer) in layers.iter().enumerate() {
            let layer_no = k + 1;
            if layer.weights.len() != layer.biases.len() {
                return Err(NetworkError::DimensionMismatch {
                    layer: layer_no,
                    detail: format!(
                        "{} weight rows but {} biases",
                        layer.weights.len(),
                        layer.biases.len()
                    ),
                });
            }
            if layer.biases.is_empty() {
                return Err(NetworkError::DimensionMismatch {
                    layer: layer_no,
                    detail: "layer has no neurons".into(),
                });
            }
            for (i, row) in layer.weights.iter().enumerate() {
                if row.len() != width {
                    return Err(NetworkError::DimensionMismatch {
                        layer: layer_no,
                        detail: format!(
                            "weight row {i} has {} columns but the previous layer has {width} outputs",
                            row.len()
                        ),
                    });
                }
                if let Some(j) = row.iter().position(|w| !w.is_finite()) {
                    return Err(NetworkError::NonFinite {
                        layer: layer_no,
                        what: "weight",
                        index: (i, j),
                    });
                }
            }
            if let Some(i) = layer.biases.iter().position(|b| !b.is_finite()) {
                return Err(NetworkError::NonFinite {
                    layer: layer_no,
                    what: "bias",
                    index: (i, 0),
                });
            }
            width = layer.biases.len();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, NetworkError> {
        let raw: RawNetwork<T> = serde_json::from_reader(reader)?;
        Self::new(raw.input_dim, raw.layers)
    }

    pub fn from_json_str(s: &str) -> Result<Self, NetworkError> {
        Self::from_reader(s.as_bytes())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<(), NetworkError> {
        w.write_all(self.to_json_string().as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::outputs)
    }

    pub fn layers(&self) -> &[LayerSpec<T>] {
        &self.layers
    }

    /// Number of ReLU neurons over all layers, i.e. the length of an
    /// activation pattern.
    pub fn relu_neuron_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.activation == ActivationKind::Relu)
            .map(LayerSpec::outputs)
            .sum()
    }

    fn check_input(&self, x: &[T]) -> Result<(), NetworkError> {
        if x.len() != self.input_dim {
            return Err(NetworkError::InputLength {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, NetworkError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut next = layer.affine(&cur);
            for v in &mut next {
                *v = layer.activation.apply(*v);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Forward pass that keeps every layer's pre- and post-activation values.
    pub fn forward_trace(&self, x: &[T]) -> Result<Vec<LayerTrace<T>>, NetworkError> {
        self.check_input(x)?;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let pre = layer.affine(&cur);
            let post: Vec<T> = pre.iter().map(|&v| layer.activation.apply(v)).collect();
            cur = post.clone();
            out.push(LayerTrace { pre, post });
        }
        Ok(out)
    }

    /// One entry per ReLU neuron (layer order, then neuron order): `true`
    /// when the pre-activation is strictly negative. A pre-activation of
    /// exactly zero counts as active (`false`).
    pub fn activation_pattern(&self, x: &[T]) -> Result<Vec<bool>, NetworkError> {
        let trace = self.forward_trace(x)?;
        Ok(self
            .layers
            .iter()
            .zip(&trace)
            .filter(|(l, _)| l.activation == ActivationKind::Relu)
            .flat_map(|(_, t)| t.pre.iter().map(|&v| v < T::zero()))
            .collect())
    }

    /// Interval arithmetic pre-activation bounds for every layer over `bx`.
    pub fn interval_bounds(&self, bx: &IntervalBox<T>) -> Result<Vec<Vec<Interval<T>>>, NetworkError> {
        if bx.len() != self.input_dim {
            return Err(NetworkError::InputLength {
                expected: self.input_dim,
                actual: bx.len(),
            });
        }
        let mut cur: Vec<Interval<T>> = bx.dims().to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let pre = affine_interval(layer, &cur);
            cur = pre
                .iter()
                .map(|iv| match layer.activation {
                    ActivationKind::Relu => iv.relu(),
                    ActivationKind::Linear => *iv,
                })
                .collect();
            out.push(pre);
        }
        Ok(out)
    }
}

/// Interval image of the affine map of `layer` over the box `input`.
pub fn affine_interval<T: Scalar>(layer: &LayerSpec<T>, input: &[Interval<T>]) -> Vec<Interval<T>> {
    layer
        .weights
        .iter()
        .zip(&layer.biases)
        .map(|(row, &b)| {
            let (mut lo, mut hi) = (b, b);
            for (&w, iv) in row.iter().zip(input) {
                if w >= T::zero() {
                    lo += w * iv.lo;
                    hi += w * iv.hi;
                } else {
                    lo += w * iv.hi;
                    hi += w * iv.lo;
                }
            }
            Interval::new(lo, hi)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Interval<T: Scalar = f64> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn point(v: T) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: T) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn relu(&self) -> Self {
        Self::new(relu(self.lo), relu(self.hi))
    }

    /// Widens both ends by `abs + rel * |end|`.
    pub fn widen(&self, abs: T, rel: T) -> Self {
        Self::new(
            self.lo - (abs + rel * self.lo.abs()),
            self.hi + (abs + rel * self.hi.abs()),
        )
    }
}

/// Axis-aligned box of input intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox<T: Scalar = f64> {
    dims: Vec<Interval<T>>,
}

impl<T: Scalar> IntervalBox<T> {
    pub fn new(dims: Vec<Interval<T>>) -> Result<Self, NetworkError> {
        for (i, d) in dims.iter().enumerate() {
            if !(d.lo.is_finite() && d.hi.is_finite() && d.lo <= d.hi) {
                return Err(NetworkError::BadInterval { index: i });
            }
        }
        Ok(Self { dims })
    }

    pub fn from_pairs(pairs: &[(T, T)]) -> Result<Self, NetworkError> {
        Self::new(pairs.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect())
    }

    pub fn dims(&self) -> &[Interval<T>] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_net(w: f64, b: f64) -> Network {
        Network::new(
            1,
            vec![LayerSpec::new(vec![vec![w]], vec![b], ActivationKind::Relu)],
        )
        .unwrap()
    }

    #[test]
    fn activation_defaults_to_relu() {
        let net: Network = Network::from_json_str(r#"{"input_dim":1,"layers":[{"weights":[[1]],"biases":[0]}]}"#).unwrap();
        assert_eq!(net.layers()[0].activation, ActivationKind::Relu);
        assert_eq!(net.forward(&[-2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn loads_identity_layer() {
        let net: Network = Network::from_json_str(
            r#"{"input_dim":1,"layers":[{"weights":[[1.0]],"biases":[0.0],"activation":"relu"}]}"#,
        )
        .unwrap();
        assert_eq!(net.input_dim(), 1);
        assert_eq!(net.layers().len(), 1);
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let src = r#"{"input_dim":2,"layers":[
            {"weights":[[1,0],[0,1]],"biases":[0,0],"activation":"relu"},
            {"weights":[[1,1,1]],"biases":[0],"activation":"relu"}]}"#;
        match Network::<f64>::from_json_str(src) {
            Err(NetworkError::DimensionMismatch { layer, .. }) => assert_eq!(layer, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bias_count_mismatch_and_bad_json() {
        let src = r#"{"input_dim":1,"layers":[{"weights":[[1]],"biases":[0,1],"activation":"relu"}]}"#;
        assert!(matches!(
            Network::<f64>::from_json_str(src),
            Err(NetworkError::DimensionMismatch { layer: 1, .. })
        ));
        assert!(matches!(
            Network::<f64>::from_json_str("{\"input_dim\":"),
            Err(NetworkError::Parse(_))
        ));
        assert!(matches!(
            Network::<f64>::from_json_str(r#"{"input_dim":1,"layers":[]}"#),
            Err(NetworkError::Empty)
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let layer = LayerSpec::new(vec![vec![f64::NAN]], vec![0.0], ActivationKind::Relu);
        assert!(matches!(
            Network::new(1, vec![layer]),
            Err(NetworkError::NonFinite { layer: 1, .. })
        ));
    }

    #[test]
    fn forward_scalar_cases() {
        assert_eq!(scalar_net(1.0, 0.0).forward(&[-3.0]).unwrap(), vec![0.0]);
        assert_eq!(scalar_net(2.0, 1.0).forward(&[2.0]).unwrap(), vec![5.0]);
        assert!(matches!(
            scalar_net(1.0, 0.0).forward(&[1.0, 2.0]),
            Err(NetworkError::InputLength { .. })
        ));
    }

    #[test]
    fn linear_final_layer_keeps_sign() {
        let net = Network::new(
            1,
            vec![LayerSpec::new(vec![vec![1.0]], vec![0.0], ActivationKind::Linear)],
        )
        .unwrap();
        assert_eq!(net.forward(&[-3.0]).unwrap(), vec![-3.0]);
        assert_eq!(net.relu_neuron_count(), 0);
    }

    #[test]
    fn pattern_convention() {
        let net = scalar_net(1.0, 0.0);
        assert_eq!(net.activation_pattern(&[-3.0]).unwrap(), vec![true]);
        assert_eq!(net.activation_pattern(&[0.0]).unwrap(), vec![false]);
    }

    #[test]
    fn pattern_two_layer_hand_computed() {
        // layer 1: h0 = x0 - x1, h1 = -x0 + 0.5
        // layer 2: y = h0 - 2 h1 + 0.1
        let net = Network::new(
            2,
            vec![
                LayerSpec::new(
                    vec![vec![1.0, -1.0], vec![-1.0, 0.0]],
                    vec![0.0, 0.5],
                    ActivationKind::Relu,
                ),
                LayerSpec::new(vec![vec![1.0, -2.0]], vec![0.1], ActivationKind::Relu),
            ],
        )
        .unwrap();
        // x = (1, 2): h0 pre = -1 (inactive), h1 pre = -0.5 (inactive), y pre = 0.1
        assert_eq!(
            net.activation_pattern(&[1.0, 2.0]).unwrap(),
            vec![true, true, false]
        );
        // x = (0, -1): h0 pre = 1, h1 pre = 0.5, y pre = 1 - 1 + 0.1 = 0.1
        assert_eq!(
            net.activation_pattern(&[0.0, -1.0]).unwrap(),
            vec![false, false, false]
        );
        // x = (0.2, 0.0): h0 = 0.2, h1 = 0.3, y pre = 0.2 - 0.6 + 0.1 = -0.3
        assert_eq!(
            net.activation_pattern(&[0.2, 0.0]).unwrap(),
            vec![false, false, true]
        );
    }

    #[test]
    fn interval_identity_and_flip() {
        let b = IntervalBox::from_pairs(&[(-1.0, 2.0)]).unwrap();
        let iv = scalar_net(1.0, 0.0).interval_bounds(&b).unwrap();
        assert_eq!(iv[0][0], Interval::new(-1.0, 2.0));

        let b = IntervalBox::from_pairs(&[(0.0, 3.0)]).unwrap();
        let iv = scalar_net(-1.0, 1.0).interval_bounds(&b).unwrap();
        assert_eq!(iv[0][0], Interval::new(-2.0, 1.0));
    }

    #[test]
    fn interval_box_rejects_inverted() {
        assert!(IntervalBox::from_pairs(&[(1.0, 0.0)]).is_err());
        assert!(IntervalBox::from_pairs(&[(0.0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn f32_forward() {
        let net: Network<f32> = Network::new(
            1,
            vec![LayerSpec::new(vec![vec![2.0f32]], vec![1.0], ActivationKind::Relu)],
        )
        .unwrap();
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![5.0f32]);
    }
}
