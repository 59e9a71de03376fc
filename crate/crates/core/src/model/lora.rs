use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LmParameters, ModelConfig, Scalar, Tensors};
use crate::error::{Error, Result};

pub const DEFAULT_RANK: usize = 8;
pub const DEFAULT_ALPHA: f64 = 16.0;

/// Names of the adapted projections, in storage order.
pub const PROJECTIONS: [&str; 4] = ["q", "k", "v", "o"];

/// One low-rank update `ΔW = (α/r) B A` with `A: r × d_in`, `B: d_out × r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraPair<S> {
    pub a: Array2<S>,
    pub b: Array2<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter<S> {
    pub rank: usize,
    pub alpha: f64,
    /// Per layer, the Q, K, V, O pairs.
    pub layers: Vec<[LoraPair<S>; 4]>,
}

impl<S: Scalar> LoraAdapter<S> {
    /// A ~ Gaussian(0, 1/r), B = 0, so the adapter starts as the identity update.
    pub fn new(config: &ModelConfig, rank: usize, alpha: f64, seed: u64) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Invalid("lora rank must be positive".into()));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Invalid("lora alpha must be positive".into()));
        }
        let d = config.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / rank as f64).sqrt()).expect("positive std");
        let layers = (0..config.n_layers)
            .map(|_| {
                std::array::from_fn(|_| LoraPair {
                    a: Array2::from_shape_simple_fn((rank, d), || S::of(normal.sample(&mut rng))),
                    b: Array2::zeros((d, rank)),
                })
            })
            .collect();
        Ok(Self { rank, alpha, layers })
    }

    pub fn scaling(&self) -> S {
        S::of(self.alpha / self.rank as f64)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            rank: self.rank,
            alpha: self.alpha,
            layers: self
                .layers
                .iter()
                .map(|l| {
                    std::array::from_fn(|i| LoraPair {
                        a: Array2::zeros(l[i].a.raw_dim()),
                        b: Array2::zeros(l[i].b.raw_dim()),
                    })
                })
                .collect(),
        }
    }

    /// `(α/r) B A` for one projection.
    pub fn delta(&self, layer: usize, proj: usize) -> Array2<S> {
        let p = &self.layers[layer][proj];
        p.b.dot(&p.a) * self.scaling()
    }

    /// Verifies that the adapter fits `config` and that every pair has the declared rank.
    pub fn check_compatible(&self, config: &ModelConfig) -> Result<()> {
        if self.layers.len() != config.n_layers {
            return Err(Error::Shape(format!(
                "adapter has {} layers, model has {}",
                self.layers.len(),
                config.n_layers
            )));
        }
        let d = config.d_model;
        for (i, layer) in self.layers.iter().enumerate() {
            for (p, pair) in PROJECTIONS.iter().zip(layer.iter()) {
                let (ra, da) = pair.a.dim();
                let (db, rb) = pair.b.dim();
                if ra != self.rank || rb != self.rank {
                    return Err(Error::RankMismatch(format!(
                        "layers.{i}.{p}: declared rank {}, A has {ra} rows, B has {rb} columns",
                        self.rank
                    )));
                }
                if da != d || db != d {
                    return Err(Error::Shape(format!(
                        "layers.{i}.{p}: expected A {}x{d} and B {d}x{}, found {:?} and {:?}",
                        self.rank,
                        self.rank,
                        pair.a.dim(),
                        pair.b.dim()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Folds the adapter into the base weights: `W ← W + (α/r) B A` for Q, K, V, O.
///
/// Not idempotent: merging the same adapter twice applies the delta twice.
pub fn lora_merge<S: Scalar>(params: &LmParameters<S>, adapter: &LoraAdapter<S>) -> Result<LmParameters<S>> {
    adapter.check_compatible(&params.config)?;
    let mut merged = params.clone();
    for (li, layer) in merged.layers.iter_mut().enumerate() {
        for (pi, w) in layer.projections_mut().into_iter().enumerate() {
            *w += &adapter.delta(li, pi);
        }
    }
    Ok(merged)
}

impl<S: Scalar> Tensors<S> for LoraAdapter<S> {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, S>)> {
        let mut out = Vec::with_capacity(self.layers.len() * 8);
        for (i, layer) in self.layers.iter().enumerate() {
            for (p, pair) in PROJECTIONS.iter().zip(layer.iter()) {
                out.push((format!("lora.layers.{i}.{p}.a"), pair.a.view().into_dyn()));
                out.push((format!("lora.layers.{i}.{p}.b"), pair.b.view().into_dyn()));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, S>)> {
        let mut out = Vec::with_capacity(self.layers.len() * 8);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (p, pair) in PROJECTIONS.iter().zip(layer.iter_mut()) {
                out.push((format!("lora.layers.{i}.{p}.a"), pair.a.view_mut().into_dyn()));
                out.push((format!("lora.layers.{i}.{p}.b"), pair.b.view_mut().into_dyn()));
            }
        }
        out
    }
}
