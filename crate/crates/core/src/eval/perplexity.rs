use crate::error::Result;
use crate::model::{forward, nll_sum, LmParameters, LoraAdapter, NllSum, Scalar};
use crate::packing::PackedInstance;

/// Which next-token positions count towards an NLL.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum NllSupport {
    /// The instance's own loss mask.
    #[default]
    LossMask,
    /// The loss mask minus positions whose target opens a document span.
    ///
    /// Author-packed and independently packed instances then score exactly the
    /// same tokens: every document token after the first, plus each separator.
    WithinDocument,
}

/// `instance.loss_mask` with document-opening targets removed.
pub fn within_document_mask(instance: &PackedInstance) -> Vec<bool> {
    let mut mask = instance.loss_mask.clone();
    for s in &instance.spans {
        let start = s.start as usize;
        if start > 0 {
            mask[start - 1] = false;
        }
    }
    mask
}

/// Token-weighted NLL over all instances.
pub fn evaluate_nll<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    instances: &[PackedInstance],
    support: NllSupport,
) -> Result<NllSum> {
    let mut total = NllSum::default();
    for inst in instances {
        let logits = forward(params, adapter, &inst.tokens)?
            .logits
            .expect("forward returns logits");
        let mask = match support {
            NllSupport::LossMask => inst.loss_mask.clone(),
            NllSupport::WithinDocument => within_document_mask(inst),
        };
        let (part, _) = nll_sum(&logits, &inst.targets(), &mask, false)?;
        total += part;
    }
    Ok(total)
}

/// `exp` of the token-weighted mean NLL over the instances' loss masks.
pub fn perplexity<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    instances: &[PackedInstance],
) -> Result<f64> {
    Ok(evaluate_nll(params, adapter, instances, NllSupport::LossMask)?.mean()?.exp())
}
