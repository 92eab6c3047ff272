//! Multiset neurons and layered feed-forward networks of them.
//!
//! A neuron compares its input with its weight vector through the coincidence
//! index and passes the result through an [`Activation`]. Layer 1 reads the
//! feature vector; every later layer reads the previous layer's outputs.
//!
//! Networks serialize to a JSON document:
//!
//! ```json
//! {"input_dim": 2,
//!  "layers": [[{"weights": [1.0, -1.0], "d": 1.0, "mode": "signed",
//!               "activation": {"kind": "sigmoid", "a": 2000.0, "b": 0.0}}]]}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{BinaryMask, PointRole};
use crate::multiset::{coincidence_slices, FeatureVector, SimilarityConfig, SimilarityMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActivationDoc", into = "ActivationDoc")]
pub enum Activation {
    Linear,
    /// Logistic `1 / (1 + exp(-a (z + b)))` with gain `a > 0` and offset `b`.
    Sigmoid { a: f64, b: f64 },
    Relu,
}

impl Activation {
    pub fn sigmoid(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidActivation(format!("sigmoid gain must be > 0, got {a}")));
        }
        if !b.is_finite() {
            return Err(Error::InvalidActivation(format!("sigmoid offset must be finite, got {b}")));
        }
        Ok(Activation::Sigmoid { a, b })
    }

    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Linear => z,
            Activation::Sigmoid { a, b } => 1.0 / (1.0 + (-a * (z + b)).exp()),
            Activation::Relu => z.max(0.0),
        }
    }
}

pub fn activate(z: f64, act: &Activation) -> f64 {
    act.apply(z)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ActivationDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
}

impl TryFrom<ActivationDoc> for Activation {
    type Error = Error;

    fn try_from(doc: ActivationDoc) -> Result<Self> {
        match doc.kind.as_str() {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Activation::sigmoid(
                doc.a
                    .ok_or_else(|| Error::InvalidActivation("sigmoid needs `a`".into()))?,
                doc.b.unwrap_or(0.0),
            ),
            other => Err(Error::InvalidActivation(format!("unknown kind {other:?}"))),
        }
    }
}

impl From<Activation> for ActivationDoc {
    fn from(act: Activation) -> Self {
        match act {
            Activation::Linear => ActivationDoc {
                kind: "linear".into(),
                a: None,
                b: None,
            },
            Activation::Relu => ActivationDoc {
                kind: "relu".into(),
                a: None,
                b: None,
            },
            Activation::Sigmoid { a, b } => ActivationDoc {
                kind: "sigmoid".into(),
                a: Some(a),
                b: Some(b),
            },
        }
    }
}

/// Where a first-layer neuron's weights came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronLabel {
    pub role: PointRole,
    #[serde(rename = "class")]
    pub class_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NeuronDoc", into = "NeuronDoc")]
pub struct Neuron {
    weights: FeatureVector,
    similarity: SimilarityConfig,
    activation: Activation,
    label: Option<NeuronLabel>,
}

impl Neuron {
    pub fn new(weights: FeatureVector, similarity: SimilarityConfig, activation: Activation) -> Result<Self> {
        if weights.is_all_zero() {
            return Err(Error::AllZeroWeights);
        }
        Ok(Self {
            weights,
            similarity,
            activation,
            label: None,
        })
    }

    /// Convenience constructor from raw weights.
    pub fn from_weights(weights: Vec<f64>, d: f64, mode: SimilarityMode, activation: Activation) -> Result<Self> {
        Self::new(FeatureVector::new(weights)?, SimilarityConfig::new(d, mode)?, activation)
    }

    pub fn with_label(mut self, label: NeuronLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn weights(&self) -> &FeatureVector {
        &self.weights
    }

    pub fn similarity(&self) -> &SimilarityConfig {
        &self.similarity
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn label(&self) -> Option<&NeuronLabel> {
        self.label.as_ref()
    }

    /// Pre-activation: coincidence between input and weights.
    pub fn pre_activation(&self, input: &[f64]) -> Result<f64> {
        coincidence_slices(input, &self.weights, &self.similarity)
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        Ok(self.activation.apply(self.pre_activation(input)?))
    }
}

pub fn neuron_forward(input: &FeatureVector, n: &Neuron) -> Result<f64> {
    n.forward(input)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NeuronDoc {
    weights: Vec<f64>,
    d: f64,
    mode: SimilarityMode,
    activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<NeuronLabel>,
}

impl TryFrom<NeuronDoc> for Neuron {
    type Error = Error;

    fn try_from(doc: NeuronDoc) -> Result<Self> {
        let mut n = Neuron::from_weights(doc.weights, doc.d, doc.mode, doc.activation)?;
        n.label = doc.label;
        Ok(n)
    }
}

impl From<Neuron> for NeuronDoc {
    fn from(n: Neuron) -> Self {
        NeuronDoc {
            d: n.similarity.d(),
            mode: n.similarity.mode(),
            weights: n.weights.into_inner(),
            activation: n.activation,
            label: n.label,
        }
    }
}

/// Address of one scalar weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeightRef {
    pub layer: usize,
    pub neuron: usize,
    pub index: usize,
}

impl WeightRef {
    pub fn new(layer: usize, neuron: usize, index: usize) -> Self {
        Self { layer, neuron, index }
    }
}

/// Chooses which weights are free during training or sweeps. Layer indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightSelector {
    /// Every layer after the first (the first is set from annotated points).
    #[default]
    UpperLayers,
    Layers(Vec<usize>),
    Neurons(Vec<(usize, usize)>),
    Weights(Vec<WeightRef>),
}

/// Counters collected during forward passes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardDiagnostics {
    /// Hidden layers that emitted an exactly all-zero vector.
    pub zero_vector_events: u64,
}

impl ForwardDiagnostics {
    pub fn merge(&mut self, other: ForwardDiagnostics) {
        self.zero_vector_events += other.zero_vector_events;
    }
}

/// Validated S-layer feed-forward topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct NetworkSpec {
    input_dim: usize,
    layers: Vec<Vec<Neuron>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkDoc {
    input_dim: usize,
    layers: Vec<Vec<Neuron>>,
}

impl TryFrom<NetworkDoc> for NetworkSpec {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        NetworkSpec::new(doc.input_dim, doc.layers)
    }
}

impl From<NetworkSpec> for NetworkDoc {
    fn from(net: NetworkSpec) -> Self {
        NetworkDoc {
            input_dim: net.input_dim,
            layers: net.layers,
        }
    }
}

impl NetworkSpec {
    pub fn new(input_dim: usize, layers: Vec<Vec<Neuron>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Topology("network needs at least one layer".into()));
        }
        let mut expected = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(Error::Topology(format!("layer {l} has no neurons")));
            }
            for (k, n) in layer.iter().enumerate() {
                if n.weights.len() != expected {
                    return Err(Error::Topology(format!(
                        "layer {l} neuron {k} has {} weights, expected {expected}",
                        n.weights.len()
                    )));
                }
            }
            expected = layer.len();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Vec::len)
    }

    pub fn layers(&self) -> &[Vec<Neuron>] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_with_diagnostics(input).map(|(y, _)| y)
    }

    pub fn forward_with_diagnostics(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardDiagnostics)> {
        if input.len() != self.input_dim {
            return Err(Error::LengthMismatch {
                left: input.len(),
                right: self.input_dim,
            });
        }
        self.forward_layers(0, input)
    }

    /// Runs layers `start..` on `input`, which must be the input of layer `start`.
    pub fn forward_layers(&self, start: usize, input: &[f64]) -> Result<(Vec<f64>, ForwardDiagnostics)> {
        let mut diag = ForwardDiagnostics::default();
        let mut current = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate().skip(start) {
            current = if l > 0 && current.iter().all(|&v| v == 0.0) {
                diag.zero_vector_events += 1;
                vec![0.0; layer.len()]
            } else {
                layer
                    .iter()
                    .map(|n| n.forward(&current))
                    .collect::<Result<Vec<_>>>()?
            };
        }
        Ok((current, diag))
    }

    /// Outputs of layer `end - 1` (the input of layer `end`).
    pub fn forward_prefix(&self, end: usize, input: &[f64]) -> Result<Vec<f64>> {
        if end == 0 {
            return Ok(input.to_vec());
        }
        let truncated = NetworkSpec {
            input_dim: self.input_dim,
            layers: self.layers[..end.min(self.layers.len())].to_vec(),
        };
        truncated.forward(input)
    }

    /// Expands a selector into weight addresses in (layer, neuron, index) order.
    pub fn resolve(&self, selector: &WeightSelector) -> Result<Vec<WeightRef>> {
        let neuron_refs = |l: usize, k: usize| -> Result<Vec<WeightRef>> {
            let n = self
                .layers
                .get(l)
                .and_then(|layer| layer.get(k))
                .ok_or_else(|| Error::Topology(format!("no neuron {k} in layer {l}")))?;
            Ok((0..n.weights.len())
                .map(|index| WeightRef {
                    layer: l,
                    neuron: k,
                    index,
                })
                .collect())
        };
        let mut refs = Vec::new();
        match selector {
            WeightSelector::UpperLayers => {
                for l in 1..self.layers.len() {
                    for k in 0..self.layers[l].len() {
                        refs.extend(neuron_refs(l, k)?);
                    }
                }
            }
            WeightSelector::Layers(ls) => {
                for &l in ls {
                    let count = self
                        .layers
                        .get(l)
                        .ok_or_else(|| Error::Topology(format!("no layer {l}")))?
                        .len();
                    for k in 0..count {
                        refs.extend(neuron_refs(l, k)?);
                    }
                }
            }
            WeightSelector::Neurons(ns) => {
                for &(l, k) in ns {
                    refs.extend(neuron_refs(l, k)?);
                }
            }
            WeightSelector::Weights(ws) => {
                for w in ws {
                    let n = neuron_refs(w.layer, w.neuron)?;
                    if w.index >= n.len() {
                        return Err(Error::Topology(format!(
                            "weight index {} out of range for layer {} neuron {}",
                            w.index, w.layer, w.neuron
                        )));
                    }
                    refs.push(*w);
                }
            }
        }
        let mut sorted = refs.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != refs.len() {
            return Err(Error::Topology("selector names a weight twice".into()));
        }
        Ok(refs)
    }

    pub fn get_weights(&self, refs: &[WeightRef]) -> Vec<f64> {
        refs.iter()
            .map(|r| self.layers[r.layer][r.neuron].weights[r.index])
            .collect()
    }

    /// Copy of the network with `values` installed at `refs`.
    pub fn with_weights(&self, refs: &[WeightRef], values: &[f64]) -> Result<NetworkSpec> {
        if refs.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: refs.len(),
            });
        }
        let mut layers = self.layers.clone();
        for (r, &v) in refs.iter().zip(values) {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: r.index });
            }
            let mut w = layers[r.layer][r.neuron].weights.as_slice().to_vec();
            w[r.index] = v;
            layers[r.layer][r.neuron].weights = FeatureVector::new(w)?;
        }
        for r in refs {
            if layers[r.layer][r.neuron].weights.is_all_zero() {
                return Err(Error::AllZeroWeights);
            }
        }
        Ok(NetworkSpec {
            input_dim: self.input_dim,
            layers,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::parse("network JSON", e))
    }
}

pub fn network_forward(input: &FeatureVector, net: &NetworkSpec) -> Result<Vec<f64>> {
    net.forward(input)
}

/// Pixel-wise logical OR.
pub fn or_combine(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::DimensionMismatch("no masks to combine".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut bits = first.bits().to_vec();
    for m in &masks[1..] {
        if !m.same_dims(w, h) {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, expected {w}x{h}",
                m.width(),
                m.height()
            )));
        }
        for (b, &o) in bits.iter_mut().zip(m.bits()) {
            *b |= o;
        }
    }
    BinaryMask::new(w, h, bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_neuron(w: Vec<f64>, d: f64, act: Activation) -> Neuron {
        Neuron::from_weights(w, d, SimilarityMode::Signed, act).unwrap()
    }

    #[test]
    fn activation_examples() {
        let s = Activation::sigmoid(2000.0, 0.0).unwrap();
        assert_eq!(activate(0.0, &s), 0.5);
        assert_eq!(activate(-0.3, &Activation::Linear), -0.3);
        assert!((activate(0.01, &s) - 1.0).abs() < 1e-8);
        assert_eq!(activate(-2.0, &Activation::Relu), 0.0);
        assert_eq!(activate(0.7, &Activation::Relu), 0.7);
        assert!(Activation::sigmoid(0.0, 0.0).is_err());
    }

    #[test]
    fn neuron_examples() {
        let w = FeatureVector::new(vec![0.3, 0.6, 0.1]).unwrap();
        let lin = Neuron::new(w.clone(), SimilarityConfig::non_negative(3.0).unwrap(), Activation::Linear).unwrap();
        assert_eq!(neuron_forward(&w, &lin).unwrap(), 1.0);

        let n = signed_neuron(vec![1.0, -1.0], 1.0, Activation::Linear);
        let z = n.forward(&[0.8, 0.1]).unwrap();
        assert!((z - 0.35).abs() < 1e-15, "{z}");

        let sig = Neuron::new(w.clone(), SimilarityConfig::non_negative(3.0).unwrap(), Activation::sigmoid(2000.0, 0.0).unwrap()).unwrap();
        assert!((neuron_forward(&w, &sig).unwrap() - 1.0).abs() < 1e-12);

        assert!(matches!(
            Neuron::from_weights(vec![0.0, 0.0], 1.0, SimilarityMode::Signed, Activation::Linear),
            Err(Error::AllZeroWeights)
        ));
    }

    #[test]
    fn forward_examples() {
        let w = vec![0.2, 0.4];
        let single = NetworkSpec::new(
            2,
            vec![vec![Neuron::from_weights(w.clone(), 1.0, SimilarityMode::NonNegative, Activation::Linear).unwrap()]],
        )
        .unwrap();
        assert_eq!(single.forward(&w).unwrap(), vec![1.0]);

        // Layer 1 outputs are identities of the input entries; layer 2 is the signed (1,-1) neuron.
        let two = NetworkSpec::new(
            2,
            vec![
                vec![
                    Neuron::from_weights(vec![1.0, 0.0], 1.0, SimilarityMode::NonNegative, Activation::Linear).unwrap(),
                    Neuron::from_weights(vec![0.0, 1.0], 1.0, SimilarityMode::NonNegative, Activation::Linear).unwrap(),
                ],
                vec![signed_neuron(vec![1.0, -1.0], 1.0, Activation::Linear)],
            ],
        )
        .unwrap();
        let y1 = two.forward_prefix(1, &[0.8, 0.0]).unwrap();
        let direct = two.layers()[1][0].forward(&y1).unwrap();
        assert_eq!(two.forward(&[0.8, 0.0]).unwrap(), vec![direct]);
        assert_eq!(two.forward_layers(1, &[0.8, 0.1]).unwrap().0.len(), 1);
        let z = two.forward_layers(1, &[0.8, 0.1]).unwrap().0[0];
        assert!((z - 0.35).abs() < 1e-15);
    }

    #[test]
    fn identity_chain_propagates() {
        let unit = || Neuron::from_weights(vec![1.0], 1.0, SimilarityMode::NonNegative, Activation::Linear).unwrap();
        let net = NetworkSpec::new(1, vec![vec![unit()], vec![unit()], vec![unit()]]).unwrap();
        for c in [0.05, 0.3, 0.77, 1.0] {
            assert_eq!(net.forward(&[c]).unwrap(), vec![c]);
        }
    }

    #[test]
    fn zero_hidden_output_is_substituted() {
        let relu = Neuron::from_weights(vec![1.0, -1.0], 1.0, SimilarityMode::Signed, Activation::Relu).unwrap();
        let out = signed_neuron(vec![1.0], 1.0, Activation::sigmoid(10.0, 0.0).unwrap());
        let net = NetworkSpec::new(2, vec![vec![relu], vec![out]]).unwrap();
        // Input (0, 1) makes the relu neuron emit exactly 0.
        let (y, diag) = net.forward_with_diagnostics(&[0.0, 1.0]).unwrap();
        assert_eq!(y, vec![0.0]);
        assert_eq!(diag.zero_vector_events, 1);
    }

    #[test]
    fn topology_is_validated() {
        let n2 = || Neuron::from_weights(vec![1.0, 1.0], 1.0, SimilarityMode::NonNegative, Activation::Linear).unwrap();
        assert!(NetworkSpec::new(3, vec![vec![n2()]]).is_err());
        assert!(NetworkSpec::new(2, vec![]).is_err());
        assert!(NetworkSpec::new(2, vec![vec![n2()], vec![]]).is_err());
        assert!(NetworkSpec::new(2, vec![vec![n2(), n2()], vec![n2()]]).is_ok());
        assert!(NetworkSpec::new(2, vec![vec![n2()], vec![n2()]]).is_err());
        let net = NetworkSpec::new(2, vec![vec![n2(), n2()], vec![n2()]]).unwrap();
        assert_eq!(net.output_dim(), 1);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn selectors_and_weight_install() {
        let n = |w: Vec<f64>| Neuron::from_weights(w, 1.0, SimilarityMode::Signed, Activation::Linear).unwrap();
        let net = NetworkSpec::new(
            3,
            vec![vec![n(vec![0.1, 0.2, 0.3]), n(vec![0.3, 0.2, 0.1])], vec![n(vec![1.0, -1.0])]],
        )
        .unwrap();
        let upper = net.resolve(&WeightSelector::UpperLayers).unwrap();
        assert_eq!(upper.len(), 2);
        assert_eq!(net.get_weights(&upper), vec![1.0, -1.0]);
        assert_eq!(net.resolve(&WeightSelector::Layers(vec![0])).unwrap().len(), 6);
        assert_eq!(net.resolve(&WeightSelector::Neurons(vec![(0, 1)])).unwrap()[2].index, 2);
        assert!(net.resolve(&WeightSelector::Layers(vec![5])).is_err());

        let moved = net.with_weights(&upper, &[0.5, -0.25]).unwrap();
        assert_eq!(moved.get_weights(&upper), vec![0.5, -0.25]);
        assert!(matches!(net.with_weights(&upper, &[0.0, 0.0]), Err(Error::AllZeroWeights)));
    }

    #[test]
    fn json_round_trip() {
        let n = Neuron::from_weights(vec![0.1 + 0.2, -1.0 / 3.0], 5.0, SimilarityMode::Signed, Activation::sigmoid(5000.0, -0.01).unwrap())
            .unwrap()
            .with_label(NeuronLabel {
                role: PointRole::CounterPrototype,
                class_label: "bean".into(),
            });
        let net = NetworkSpec::new(2, vec![vec![n]]).unwrap();
        let back = NetworkSpec::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        let v: serde_json::Value = serde_json::from_str(&net.to_json()).unwrap();
        assert_eq!(v["layers"][0][0]["activation"]["kind"], "sigmoid");
        assert_eq!(v["layers"][0][0]["mode"], "signed");
        assert!(NetworkSpec::from_json(r#"{"input_dim":3,"layers":[[{"weights":[1,1],"d":1,"mode":"signed","activation":{"kind":"linear"}}]]}"#).is_err());
    }

    #[test]
    fn or_examples() {
        let a = BinaryMask::from_fn(3, 2, |x, y| x == 0 && y == 0);
        assert_eq!(or_combine(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(or_combine(&[a.clone(), a.complement()]).unwrap(), BinaryMask::filled(3, 2, true));
        let b = BinaryMask::from_fn(3, 2, |x, y| x == 2 && y == 1);
        assert_eq!(or_combine(&[a.clone(), b]).unwrap().count(), 2);
        assert!(or_combine(&[]).is_err());
        assert!(or_combine(&[a, BinaryMask::filled(2, 2, false)]).is_err());
    }
}
