//! LoRA adapters, merging, 4-bit quantization and checkpoint round trips.

use hulm::model::{
    dequantize, forward, lora_merge, quantize_4bit, Checkpoint, LmParameters, LoraAdapter, ModelConfig, Tensors,
};

fn main() -> hulm::Result<()> {
    let config = ModelConfig { d_model: 32, d_ff: 64, n_layers: 2, n_heads: 4, max_positions: 64, ..ModelConfig::default() };
    let base = LmParameters::<f64>::init(config)?;
    let mut adapter = LoraAdapter::new(&config, 8, 16.0, 7)?;
    println!("base {} values, adapter {} values", base.num_elements(), adapter.num_elements());

    // A fresh adapter has B = 0 and leaves the model unchanged.
    let tokens: Vec<u32> = b"hello there".iter().map(|&b| b as u32).collect();
    let logits = |p: &LmParameters<f64>, a: Option<&LoraAdapter<f64>>| forward(p, a, &tokens).map(|o| o.logits.expect("logits"));
    assert_eq!(logits(&base, None)?, logits(&base, Some(&adapter))?);

    for layer in &mut adapter.layers {
        for pair in layer.iter_mut() {
            pair.b.mapv_inplace(|_| 0.01);
        }
    }
    let with_adapter = logits(&base, Some(&adapter))?;
    let merged = logits(&lora_merge(&base, &adapter)?, None)?;
    let gap = (&with_adapter - &merged).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    println!("max |logit(base + adapter) - logit(merged)| = {gap:.2e}");

    let w: Vec<f64> = base.layers[0].wq.iter().copied().collect();
    let q = quantize_4bit(&w, 64)?;
    let back: Vec<f64> = dequantize(&q);
    let err = w.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("int4 blocks of 64: {} bytes of codes, max error {err:.2e}", q.packed.len());

    let ck = Checkpoint { params: base, adapter: Some(adapter), meta: serde_json::json!({ "note": "example" }) };
    let bytes = ck.to_bytes()?;
    let back = Checkpoint::<f64>::from_bytes(&bytes)?;
    assert_eq!(back.params.fingerprint(), ck.params.fingerprint());
    println!("checkpoint: {} bytes, fingerprint {:016x}", bytes.len(), back.params.fingerprint());
    Ok(())
}
