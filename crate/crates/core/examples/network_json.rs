//! Building a network by hand, running it and round-tripping it through JSON.
//!
//!     cargo run -p mmnn --example network_json

use mmnn::{Activation, NetworkSpec, Neuron, SimilarityMode};

fn main() -> mmnn::Result<()> {
    let linear = Activation::Linear;
    let proto = Neuron::from_weights(vec![0.9, 0.8, 0.1], 3.0, SimilarityMode::NonNegative, linear)?;
    let counter = Neuron::from_weights(vec![0.1, 0.2, 0.9], 3.0, SimilarityMode::NonNegative, linear)?;
    let out = Neuron::from_weights(vec![1.0, -1.0], 1.0, SimilarityMode::Signed, Activation::sigmoid(2000.0, 0.0)?)?;
    let net = NetworkSpec::new(3, vec![vec![proto, counter], vec![out]])?;

    for input in [[0.85, 0.8, 0.15], [0.15, 0.25, 0.8], [0.5, 0.5, 0.5]] {
        let hidden = net.forward_prefix(1, &input)?;
        let y = net.forward(&input)?;
        println!("{input:?} -> layer 1 {hidden:.4?} -> {:.6}", y[0]);
    }

    let json = net.to_json();
    println!("{json}");
    let back = NetworkSpec::from_json(&json)?;
    assert_eq!(back, net);
    println!("round trip ok");

    let bad = r#"{"input_dim": 2, "layers": [[{"weights": [0, 0], "d": 1, "mode": "signed", "activation": {"kind": "linear"}}]]}"#;
    if let Err(e) = NetworkSpec::from_json(bad) {
        println!("rejected: {e}");
    }
    Ok(())
}
