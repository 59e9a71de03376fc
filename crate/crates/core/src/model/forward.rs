use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::{LmParameters, LoraAdapter, LoraPair, Scalar};
use crate::error::{Error, Result};
use crate::packing::{TokenId, PAD};

pub const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Per-position last-layer activations (after the final layer norm), `positions × d_model`.
pub type HiddenStates<S> = Array2<S>;

#[derive(Debug, Clone)]
pub struct ForwardOutput<S> {
    /// `positions × vocab_size`; absent when only hidden states were requested.
    pub logits: Option<Array2<S>>,
    pub hidden: HiddenStates<S>,
}

/// Which tensors receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    /// Every base parameter; the adapter (if any) is treated as a constant.
    Base,
    /// Only the adapter; base parameters are frozen.
    Adapter,
}

#[derive(Debug, Clone)]
pub struct Gradients<S> {
    /// Present iff the target was [`GradTarget::Base`].
    pub params: Option<LmParameters<S>>,
    /// Present iff the target was [`GradTarget::Adapter`].
    pub adapter: Option<LoraAdapter<S>>,
}

/// Sum of per-token NLL and the number of tokens it covers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NllSum {
    pub sum: f64,
    pub count: usize,
}

impl NllSum {
    pub fn mean(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyLossSupport);
        }
        Ok(self.sum / self.count as f64)
    }
}

impl std::ops::AddAssign for NllSum {
    fn add_assign(&mut self, o: Self) {
        self.sum += o.sum;
        self.count += o.count;
    }
}

struct LayerCache<S> {
    xhat1: Array2<S>,
    rstd1: Array1<S>,
    a1: Array2<S>,
    q: Array2<S>,
    k: Array2<S>,
    v: Array2<S>,
    /// `x Aᵀ` for each adapted projection (input `a1` for Q/K/V, `o` for O).
    xa: Option<[Array2<S>; 4]>,
    probs: Vec<Array2<S>>,
    o: Array2<S>,
    xhat2: Array2<S>,
    rstd2: Array1<S>,
    a2: Array2<S>,
    u: Array2<S>,
    g: Array2<S>,
}

/// Activations retained by [`forward_cached`] for the backward pass.
pub struct Cache<S> {
    tokens: Vec<TokenId>,
    layers: Vec<LayerCache<S>>,
    xhatf: Array2<S>,
    rstdf: Array1<S>,
    hidden: Array2<S>,
}

fn check_tokens<S: Scalar>(params: &LmParameters<S>, tokens: &[TokenId]) -> Result<()> {
    let c = &params.config;
    if tokens.is_empty() {
        return Err(Error::Empty("token sequence"));
    }
    if tokens.len() > c.max_positions {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            max_positions: c.max_positions,
        });
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= c.vocab_size) {
        return Err(Error::TokenOutOfRange {
            token: t,
            vocab_size: c.vocab_size,
        });
    }
    Ok(())
}

fn layer_norm<S: Scalar>(x: &Array2<S>, g: &Array1<S>, b: &Array1<S>) -> (Array2<S>, Array2<S>, Array1<S>) {
    let n = S::of(x.ncols() as f64);
    let eps = S::of(LN_EPS);
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<S>() / n;
        *r = S::one() / (var + eps).sqrt();
        let rr = *r;
        row.mapv_inplace(|v| v * rr);
    }
    let y = &xhat * g + b;
    (y, xhat, rstd)
}

/// Returns `dx` and accumulates `dg`, `db` when gradient buffers are given.
fn layer_norm_backward<S: Scalar>(
    dy: &Array2<S>,
    xhat: &Array2<S>,
    rstd: &Array1<S>,
    g: &Array1<S>,
    grads: Option<(&mut Array1<S>, &mut Array1<S>)>,
) -> Array2<S> {
    if let Some((dg, db)) = grads {
        *dg += &(dy * xhat).sum_axis(Axis(0));
        *db += &dy.sum_axis(Axis(0));
    }
    let n = S::of(xhat.ncols() as f64);
    let mut dx = dy * g;
    for ((mut row, xh), &r) in dx.rows_mut().into_iter().zip(xhat.rows()).zip(rstd.iter()) {
        let sum = row.sum();
        let dot = row.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<S>();
        Zip::from(&mut row).and(&xh).for_each(|d, &h| {
            *d = r / n * (n * *d - sum - h * dot);
        });
    }
    dx
}

fn gelu<S: Scalar>(x: S) -> S {
    let c = S::of(GELU_C);
    let k = S::of(GELU_K);
    let half = S::of(0.5);
    half * x * (S::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::of(GELU_C);
    let k = S::of(GELU_K);
    let half = S::of(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + S::of(3.0) * k * x * x)
}

/// `y = x Wᵀ (+ s · (x Aᵀ) Bᵀ)`; returns `y` and `x Aᵀ` when adapted.
fn project<S: Scalar>(x: &Array2<S>, w: &Array2<S>, lora: Option<(&LoraPair<S>, S)>) -> (Array2<S>, Option<Array2<S>>) {
    let mut y = x.dot(&w.t());
    let xa = lora.map(|(pair, s)| {
        let xa = x.dot(&pair.a.t());
        general_mat_mul(s, &xa, &pair.b.t(), S::one(), &mut y);
        xa
    });
    (y, xa)
}

/// Backward of [`project`]: returns `dx`, accumulating into the requested gradient buffers.
fn project_backward<S: Scalar>(
    dy: &Array2<S>,
    x: &Array2<S>,
    w: &Array2<S>,
    lora: Option<(&LoraPair<S>, S, &Array2<S>)>,
    gw: Option<&mut Array2<S>>,
    glora: Option<&mut LoraPair<S>>,
) -> Array2<S> {
    if let Some(gw) = gw {
        general_mat_mul(S::one(), &dy.t(), x, S::one(), gw);
    }
    let mut dx = dy.dot(w);
    if let Some((pair, s, xa)) = lora {
        let dyb = dy.dot(&pair.b);
        general_mat_mul(s, &dyb, &pair.a, S::one(), &mut dx);
        if let Some(gl) = glora {
            general_mat_mul(s, &dy.t(), xa, S::one(), &mut gl.b);
            general_mat_mul(s, &dyb.t(), x, S::one(), &mut gl.a);
        }
    }
    dx
}

/// Causal softmax attention for one head; returns the probability matrix.
fn head_probs<S: Scalar>(q: ArrayView2<S>, k: ArrayView2<S>, scale: S) -> Array2<S> {
    let mut p = q.dot(&k.t());
    for (i, mut row) in p.rows_mut().into_iter().enumerate() {
        let mut max = S::neg_infinity();
        for &v in row.iter().take(i + 1) {
            max = max.max(v * scale);
        }
        let mut sum = S::zero();
        for (j, v) in row.iter_mut().enumerate() {
            if j <= i {
                *v = (*v * scale - max).exp();
                sum += *v;
            } else {
                *v = S::zero();
            }
        }
        row.mapv_inplace(|v| v / sum);
    }
    p
}

/// Runs the model and keeps the activations needed by [`backward_from`].
pub fn forward_cached<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    tokens: &[TokenId],
    want_logits: bool,
) -> Result<(ForwardOutput<S>, Cache<S>)> {
    check_tokens(params, tokens)?;
    if let Some(ad) = adapter {
        ad.check_compatible(&params.config)?;
    }
    let c = &params.config;
    let t_len = tokens.len();
    let hd = c.head_dim();
    let scale = S::one() / S::of(hd as f64).sqrt();
    let s_lora = adapter.map(|a| a.scaling()).unwrap_or_else(S::zero);

    let mut x = Array2::zeros((t_len, c.d_model));
    for (t, (mut row, &tok)) in x.rows_mut().into_iter().zip(tokens).enumerate() {
        row.assign(&params.tok_emb.row(tok as usize));
        row += &params.pos_emb.row(t);
    }

    let mut caches = Vec::with_capacity(c.n_layers);
    for (li, layer) in params.layers.iter().enumerate() {
        let pairs = adapter.map(|a| &a.layers[li]);
        let lora = |i: usize| pairs.map(|p| (&p[i], s_lora));

        let (a1, xhat1, rstd1) = layer_norm(&x, &layer.ln1_g, &layer.ln1_b);
        let (q, xa_q) = project(&a1, &layer.wq, lora(0));
        let (k, xa_k) = project(&a1, &layer.wk, lora(1));
        let (v, xa_v) = project(&a1, &layer.wv, lora(2));

        let mut o = Array2::zeros((t_len, c.d_model));
        let mut probs = Vec::with_capacity(c.n_heads);
        for h in 0..c.n_heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let p = head_probs(q.slice(cols), k.slice(cols), scale);
            o.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let (attn, xa_o) = project(&o, &layer.wo, lora(3));
        x += &attn;

        let (a2, xhat2, rstd2) = layer_norm(&x, &layer.ln2_g, &layer.ln2_b);
        let u = a2.dot(&layer.w1.t()) + &layer.b1;
        let g = u.mapv(gelu);
        let f = g.dot(&layer.w2.t()) + &layer.b2;
        x += &f;

        let xa = match (xa_q, xa_k, xa_v, xa_o) {
            (Some(a), Some(b), Some(c), Some(d)) => Some([a, b, c, d]),
            _ => None,
        };
        caches.push(LayerCache {
            xhat1,
            rstd1,
            a1,
            q,
            k,
            v,
            xa,
            probs,
            o,
            xhat2,
            rstd2,
            a2,
            u,
            g,
        });
    }

    let (hidden, xhatf, rstdf) = layer_norm(&x, &params.lnf_g, &params.lnf_b);
    let logits = want_logits.then(|| hidden.dot(&params.output_matrix().t()));
    let cache = Cache {
        tokens: tokens.to_vec(),
        layers: caches,
        xhatf,
        rstdf,
        hidden: hidden.clone(),
    };
    Ok((ForwardOutput { logits, hidden }, cache))
}

/// Logits and last-layer hidden states. `logits[i]` depends only on `tokens[..=i]`.
pub fn forward<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    tokens: &[TokenId],
) -> Result<ForwardOutput<S>> {
    forward_cached(params, adapter, tokens, true).map(|(out, _)| out)
}

/// Hidden states only; skips the vocabulary projection.
pub fn forward_hidden<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    tokens: &[TokenId],
) -> Result<HiddenStates<S>> {
    forward_cached(params, adapter, tokens, false).map(|(out, _)| out.hidden)
}

/// Backpropagates upstream gradients on logits and/or hidden states.
pub fn backward_from<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    cache: &Cache<S>,
    dlogits: Option<&Array2<S>>,
    dhidden: Option<&Array2<S>>,
    target: GradTarget,
) -> Result<Gradients<S>> {
    let c = &params.config;
    let hd = c.head_dim();
    let scale = S::one() / S::of(hd as f64).sqrt();
    let mut gp = (target == GradTarget::Base).then(|| params.zeros_like());
    let mut ga = match target {
        GradTarget::Adapter => Some(
            adapter
                .ok_or_else(|| Error::Invalid("adapter gradients requested without an adapter".into()))?
                .zeros_like(),
        ),
        GradTarget::Base => None,
    };
    let s_lora = adapter.map(|a| a.scaling()).unwrap_or_else(S::zero);

    let mut dh = Array2::zeros(cache.hidden.raw_dim());
    if let Some(dl) = dlogits {
        dh += &dl.dot(params.output_matrix());
        if let Some(gp) = gp.as_mut() {
            let gout = gp.head.as_mut().unwrap_or(&mut gp.tok_emb);
            general_mat_mul(S::one(), &dl.t(), &cache.hidden, S::one(), gout);
        }
    }
    if let Some(d) = dhidden {
        dh += d;
    }

    let mut dx = layer_norm_backward(
        &dh,
        &cache.xhatf,
        &cache.rstdf,
        &params.lnf_g,
        gp.as_mut().map(|g| (&mut g.lnf_g, &mut g.lnf_b)),
    );

    for li in (0..c.n_layers).rev() {
        let layer = &params.layers[li];
        let lc = &cache.layers[li];
        let mut gl = gp.as_mut().map(|g| &mut g.layers[li]);
        let mut gla = ga.as_mut().map(|g| &mut g.layers[li]);
        let pairs = adapter.map(|a| &a.layers[li]);

        // feed-forward block
        if let Some(g) = gl.as_deref_mut() {
            general_mat_mul(S::one(), &dx.t(), &lc.g, S::one(), &mut g.w2);
            g.b2 += &dx.sum_axis(Axis(0));
        }
        let mut du = dx.dot(&layer.w2);
        Zip::from(&mut du).and(&lc.u).for_each(|d, &u| *d *= gelu_grad(u));
        if let Some(g) = gl.as_deref_mut() {
            general_mat_mul(S::one(), &du.t(), &lc.a2, S::one(), &mut g.w1);
            g.b1 += &du.sum_axis(Axis(0));
        }
        let da2 = du.dot(&layer.w1);
        dx += &layer_norm_backward(
            &da2,
            &lc.xhat2,
            &lc.rstd2,
            &layer.ln2_g,
            gl.as_deref_mut().map(|g| (&mut g.ln2_g, &mut g.ln2_b)),
        );

        // attention block
        let lora = |i: usize| match (pairs, lc.xa.as_ref()) {
            (Some(p), Some(xa)) => Some((&p[i], s_lora, &xa[i])),
            _ => None,
        };
        let d_o = project_backward(
            &dx,
            &lc.o,
            &layer.wo,
            lora(3),
            gl.as_deref_mut().map(|g| &mut g.wo),
            gla.as_deref_mut().map(|g| &mut g[3]),
        );
        let mut dq = Array2::zeros(lc.q.raw_dim());
        let mut dk = Array2::zeros(lc.k.raw_dim());
        let mut dv = Array2::zeros(lc.v.raw_dim());
        for (h, p) in lc.probs.iter().enumerate() {
            let cols = s![.., h * hd..(h + 1) * hd];
            let do_h = d_o.slice(cols);
            let mut ds = do_h.dot(&lc.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&do_h));
            for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot = drow.iter().zip(prow.iter()).map(|(&a, &b)| a * b).sum::<S>();
                Zip::from(&mut drow).and(&prow).for_each(|d, &p| *d = p * (*d - dot));
            }
            dq.slice_mut(cols).assign(&(ds.dot(&lc.k.slice(cols)) * scale));
            dk.slice_mut(cols).assign(&(ds.t().dot(&lc.q.slice(cols)) * scale));
        }
        let mut da1 = project_backward(
            &dq,
            &lc.a1,
            &layer.wq,
            lora(0),
            gl.as_deref_mut().map(|g| &mut g.wq),
            gla.as_deref_mut().map(|g| &mut g[0]),
        );
        da1 += &project_backward(
            &dk,
            &lc.a1,
            &layer.wk,
            lora(1),
            gl.as_deref_mut().map(|g| &mut g.wk),
            gla.as_deref_mut().map(|g| &mut g[1]),
        );
        da1 += &project_backward(
            &dv,
            &lc.a1,
            &layer.wv,
            lora(2),
            gl.as_deref_mut().map(|g| &mut g.wv),
            gla.as_deref_mut().map(|g| &mut g[2]),
        );
        dx += &layer_norm_backward(
            &da1,
            &lc.xhat1,
            &lc.rstd1,
            &layer.ln1_g,
            gl.as_deref_mut().map(|g| (&mut g.ln1_g, &mut g.ln1_b)),
        );
    }

    if let Some(g) = gp.as_mut() {
        for (t, (row, &tok)) in dx.rows().into_iter().zip(&cache.tokens).enumerate() {
            let mut e = g.tok_emb.row_mut(tok as usize);
            e += &row;
            let mut p = g.pos_emb.row_mut(t);
            p += &row;
        }
    }
    Ok(Gradients { params: gp, adapter: ga })
}

fn check_mask(len: usize, targets: &[TokenId], mask: &[bool]) -> Result<()> {
    if targets.len() != len {
        return Err(Error::LengthMismatch { left: len, right: targets.len() });
    }
    if mask.len() != len {
        return Err(Error::LengthMismatch { left: len, right: mask.len() });
    }
    Ok(())
}

/// Summed NLL over supported positions and, optionally, its gradient w.r.t. the logits.
pub fn nll_sum<S: Scalar>(
    logits: &Array2<S>,
    targets: &[TokenId],
    loss_mask: &[bool],
    want_grad: bool,
) -> Result<(NllSum, Option<Array2<S>>)> {
    check_mask(logits.nrows(), targets, loss_mask)?;
    let mut total = NllSum::default();
    let mut grad = want_grad.then(|| Array2::zeros(logits.raw_dim()));
    for (i, row) in logits.rows().into_iter().enumerate() {
        let tgt = targets[i];
        if !loss_mask[i] || tgt == PAD {
            continue;
        }
        if tgt as usize >= row.len() {
            return Err(Error::TokenOutOfRange { token: tgt, vocab_size: row.len() });
        }
        let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
        let sum_exp: S = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total.sum += (lse - row[tgt as usize]).f64();
        total.count += 1;
        if let Some(g) = grad.as_mut() {
            let mut grow = g.row_mut(i);
            Zip::from(&mut grow).and(&row).for_each(|d, &v| *d = (v - lse).exp());
            grow[tgt as usize] -= S::one();
        }
    }
    Ok((total, grad))
}

/// Mean next-token NLL over positions with `loss_mask` set and a non-PAD target.
pub fn nll_loss<S: Scalar>(logits: &Array2<S>, targets: &[TokenId], loss_mask: &[bool]) -> Result<S> {
    let (total, _) = nll_sum(logits, targets, loss_mask, false)?;
    total.mean().map(S::of)
}

/// Next-token targets: `tokens` shifted left by one, PAD at the end.
pub fn shifted_targets(tokens: &[TokenId]) -> Vec<TokenId> {
    tokens.iter().skip(1).copied().chain(std::iter::once(PAD)).collect()
}

/// Summed NLL of one sequence and the gradient of that sum.
pub fn nll_gradients<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    tokens: &[TokenId],
    loss_mask: &[bool],
    target: GradTarget,
) -> Result<(NllSum, Gradients<S>)> {
    let (out, cache) = forward_cached(params, adapter, tokens, true)?;
    let logits = out.logits.expect("logits requested");
    let (total, dlogits) = nll_sum(&logits, &shifted_targets(tokens), loss_mask, true)?;
    if total.count == 0 {
        return Err(Error::EmptyLossSupport);
    }
    let grads = backward_from(params, adapter, &cache, dlogits.as_ref(), None, target)?;
    Ok((total, grads))
}

/// Mean NLL and its exact gradient w.r.t. the trainable tensors.
pub fn backward<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    tokens: &[TokenId],
    loss_mask: &[bool],
    target: GradTarget,
) -> Result<(S, Gradients<S>)> {
    let (total, mut grads) = nll_gradients(params, adapter, tokens, loss_mask, target)?;
    let inv = S::one() / S::of(total.count as f64);
    if let Some(g) = grads.params.as_mut() {
        super::scale(g, inv);
    }
    if let Some(g) = grads.adapter.as_mut() {
        super::scale(g, inv);
    }
    Ok((S::of(total.sum / total.count as f64), grads))
}
