use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{axpy, nll_gradients, GradTarget, Gradients, LmParameters, LoraAdapter, NllSum, Scalar};
use crate::packing::PackedInstance;

/// Splits a shuffled index order into batches of `batch_size` instances, or of
/// at least `batch_tokens` loss tokens when that is set.
pub(crate) fn make_batches(
    instances: &[PackedInstance],
    rng: &mut ChaCha8Rng,
    batch_size: usize,
    batch_tokens: Option<usize>,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(rng);
    match batch_tokens {
        None => order.chunks(batch_size).map(<[usize]>::to_vec).collect(),
        Some(budget) => {
            let mut out = Vec::new();
            let mut cur = Vec::new();
            let mut tokens = 0;
            for i in order {
                cur.push(i);
                tokens += instances[i].loss_mask.iter().filter(|&&m| m).count();
                if tokens >= budget {
                    out.push(std::mem::take(&mut cur));
                    tokens = 0;
                }
            }
            if !cur.is_empty() {
                out.push(cur);
            }
            out
        }
    }
}

pub(crate) fn add_gradients<S: Scalar>(acc: &mut Gradients<S>, g: &Gradients<S>) {
    if let (Some(a), Some(b)) = (acc.params.as_mut(), g.params.as_ref()) {
        axpy(a, S::one(), b);
    }
    if let (Some(a), Some(b)) = (acc.adapter.as_mut(), g.adapter.as_ref()) {
        axpy(a, S::one(), b);
    }
}

pub(crate) fn scale_gradients<S: Scalar>(g: &mut Gradients<S>, alpha: S) {
    if let Some(p) = g.params.as_mut() {
        crate::model::scale(p, alpha);
    }
    if let Some(a) = g.adapter.as_mut() {
        crate::model::scale(a, alpha);
    }
}

/// Token-mean NLL gradient of a batch. Per-instance gradients are summed in
/// batch order whether or not they were computed in parallel, so the result
/// does not depend on the thread count.
pub(crate) fn batch_gradients<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    instances: &[&PackedInstance],
    target: GradTarget,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(NllSum, Gradients<S>)> {
    let one = |inst: &&PackedInstance| match nll_gradients(params, adapter, &inst.tokens, &inst.loss_mask, target) {
        Err(Error::EmptyLossSupport) => Ok(None),
        other => other.map(Some),
    };
    let parts: Vec<Option<(NllSum, Gradients<S>)>> = match pool {
        Some(pool) => pool.install(|| instances.par_iter().map(one).collect::<Result<Vec<_>>>())?,
        None => instances.iter().map(one).collect::<Result<Vec<_>>>()?,
    };
    let mut total = NllSum::default();
    let mut acc: Option<Gradients<S>> = None;
    for (loss, g) in parts.into_iter().flatten() {
        total += loss;
        match acc.as_mut() {
            None => acc = Some(g),
            Some(a) => add_gradients(a, &g),
        }
    }
    let mut acc = acc.ok_or(Error::EmptyLossSupport)?;
    scale_gradients(&mut acc, S::one() / S::of(total.count as f64));
    Ok((total, acc))
}

pub(crate) fn thread_pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}
