use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, PosInit, Scalar, Tensors, SINUSOID_SCALE};
use crate::error::{Error, Result};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S> {
    pub ln1_g: Array1<S>,
    pub ln1_b: Array1<S>,
    /// Projections are stored `out × in`; `y = x Wᵀ`.
    pub wq: Array2<S>,
    pub wk: Array2<S>,
    pub wv: Array2<S>,
    pub wo: Array2<S>,
    pub ln2_g: Array1<S>,
    pub ln2_b: Array1<S>,
    pub w1: Array2<S>,
    pub b1: Array1<S>,
    pub w2: Array2<S>,
    pub b2: Array1<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmParameters<S> {
    pub config: ModelConfig,
    pub tok_emb: Array2<S>,
    pub pos_emb: Array2<S>,
    pub layers: Vec<LayerParams<S>>,
    pub lnf_g: Array1<S>,
    pub lnf_b: Array1<S>,
    /// `None` when the output head is tied to `tok_emb`.
    pub head: Option<Array2<S>>,
}

fn gaussian<S: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<S> {
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || S::of(normal.sample(rng)))
}

impl<S: Scalar> LayerParams<S> {
    fn zeros(c: &ModelConfig) -> Self {
        let d = c.d_model;
        Self {
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            w1: Array2::zeros((c.d_ff, d)),
            b1: Array1::zeros(c.d_ff),
            w2: Array2::zeros((d, c.d_ff)),
            b2: Array1::zeros(d),
        }
    }

    fn init(c: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = c.d_model;
        Self {
            ln1_g: Array1::ones(d),
            ln1_b: Array1::zeros(d),
            wq: gaussian(rng, d, d, INIT_STD),
            wk: gaussian(rng, d, d, INIT_STD),
            wv: gaussian(rng, d, d, INIT_STD),
            wo: gaussian(rng, d, d, INIT_STD),
            ln2_g: Array1::ones(d),
            ln2_b: Array1::zeros(d),
            w1: gaussian(rng, c.d_ff, d, INIT_STD),
            b1: Array1::zeros(c.d_ff),
            w2: gaussian(rng, d, c.d_ff, INIT_STD),
            b2: Array1::zeros(d),
        }
    }

    /// Mutable handles to the four attention projections, in Q, K, V, O order.
    pub fn projections_mut(&mut self) -> [&mut Array2<S>; 4] {
        [&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo]
    }

    pub fn projections(&self) -> [&Array2<S>; 4] {
        [&self.wq, &self.wk, &self.wv, &self.wo]
    }
}

impl<S: Scalar> LmParameters<S> {
    /// Seeded initialization: Gaussian(0, 0.02) dense weights, unit gains, zero biases.
    /// The position table is optionally overwritten with sinusoids.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let tok_emb = gaussian(&mut rng, config.vocab_size, d, INIT_STD);
        let mut pos_emb = gaussian(&mut rng, config.max_positions, d, INIT_STD);
        if config.pos_init == PosInit::Sinusoidal {
            for ((p, j), v) in pos_emb.indexed_iter_mut() {
                let freq = 10000f64.powf(-((j / 2 * 2) as f64) / d as f64);
                let angle = p as f64 * freq;
                *v = S::of(SINUSOID_SCALE * if j % 2 == 0 { angle.sin() } else { angle.cos() });
            }
        }
        let layers = (0..config.n_layers)
            .map(|_| LayerParams::init(&config, &mut rng))
            .collect();
        let head = (!config.tie_embeddings)
            .then(|| gaussian(&mut rng, config.vocab_size, d, INIT_STD));
        Ok(Self {
            config,
            tok_emb,
            pos_emb,
            layers,
            lnf_g: Array1::ones(d),
            lnf_b: Array1::zeros(d),
            head,
        })
    }

    /// Same shapes as `self`, every value zero.
    pub fn zeros_like(&self) -> Self {
        let c = self.config;
        Self {
            config: c,
            tok_emb: Array2::zeros(self.tok_emb.raw_dim()),
            pos_emb: Array2::zeros(self.pos_emb.raw_dim()),
            layers: (0..c.n_layers).map(|_| LayerParams::zeros(&c)).collect(),
            lnf_g: Array1::zeros(c.d_model),
            lnf_b: Array1::zeros(c.d_model),
            head: self.head.as_ref().map(|h| Array2::zeros(h.raw_dim())),
        }
    }

    /// The output projection: the untied head or the token embedding.
    pub fn output_matrix(&self) -> &Array2<S> {
        self.head.as_ref().unwrap_or(&self.tok_emb)
    }

    pub fn cast<T: Scalar>(&self) -> LmParameters<T> {
        let c1 = |a: &Array1<S>| a.mapv(|v| T::of(v.f64()));
        let c2 = |a: &Array2<S>| a.mapv(|v| T::of(v.f64()));
        LmParameters {
            config: self.config,
            tok_emb: c2(&self.tok_emb),
            pos_emb: c2(&self.pos_emb),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_g: c1(&l.ln1_g),
                    ln1_b: c1(&l.ln1_b),
                    wq: c2(&l.wq),
                    wk: c2(&l.wk),
                    wv: c2(&l.wv),
                    wo: c2(&l.wo),
                    ln2_g: c1(&l.ln2_g),
                    ln2_b: c1(&l.ln2_b),
                    w1: c2(&l.w1),
                    b1: c1(&l.b1),
                    w2: c2(&l.w2),
                    b2: c1(&l.b2),
                })
                .collect(),
            lnf_g: c1(&self.lnf_g),
            lnf_b: c1(&self.lnf_b),
            head: self.head.as_ref().map(c2),
        }
    }

    /// Checks tensor shapes against the config.
    pub fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let d = c.d_model;
        let want = |name: &str, got: &[usize], exp: &[usize]| {
            if got == exp {
                Ok(())
            } else {
                Err(Error::Shape(format!("{name}: expected {exp:?}, found {got:?}")))
            }
        };
        want("tok_emb", self.tok_emb.shape(), &[c.vocab_size, d])?;
        want("pos_emb", self.pos_emb.shape(), &[c.max_positions, d])?;
        if self.layers.len() != c.n_layers {
            return Err(Error::Shape(format!(
                "expected {} layers, found {}",
                c.n_layers,
                self.layers.len()
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            for (n, w) in ["wq", "wk", "wv", "wo"].iter().zip(l.projections()) {
                want(&format!("layers.{i}.{n}"), w.shape(), &[d, d])?;
            }
            want(&format!("layers.{i}.w1"), l.w1.shape(), &[c.d_ff, d])?;
            want(&format!("layers.{i}.w2"), l.w2.shape(), &[d, c.d_ff])?;
            want(&format!("layers.{i}.b1"), l.b1.shape(), &[c.d_ff])?;
            for (n, v) in [("ln1_g", &l.ln1_g), ("ln1_b", &l.ln1_b), ("ln2_g", &l.ln2_g), ("ln2_b", &l.ln2_b), ("b2", &l.b2)] {
                want(&format!("layers.{i}.{n}"), v.shape(), &[d])?;
            }
        }
        want("lnf_g", self.lnf_g.shape(), &[d])?;
        want("lnf_b", self.lnf_b.shape(), &[d])?;
        match (&self.head, c.tie_embeddings) {
            (Some(h), false) => want("head", h.shape(), &[c.vocab_size, d]),
            (None, true) => Ok(()),
            _ => Err(Error::Shape("output head presence disagrees with tie_embeddings".into())),
        }
    }
}

impl<S: Scalar> Tensors<S> for LmParameters<S> {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, S>)> {
        let mut out = vec![
            ("tok_emb".to_string(), self.tok_emb.view().into_dyn()),
            ("pos_emb".to_string(), self.pos_emb.view().into_dyn()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = |n: &str| format!("layers.{i}.{n}");
            out.extend([
                (p("ln1_g"), l.ln1_g.view().into_dyn()),
                (p("ln1_b"), l.ln1_b.view().into_dyn()),
                (p("wq"), l.wq.view().into_dyn()),
                (p("wk"), l.wk.view().into_dyn()),
                (p("wv"), l.wv.view().into_dyn()),
                (p("wo"), l.wo.view().into_dyn()),
                (p("ln2_g"), l.ln2_g.view().into_dyn()),
                (p("ln2_b"), l.ln2_b.view().into_dyn()),
                (p("w1"), l.w1.view().into_dyn()),
                (p("b1"), l.b1.view().into_dyn()),
                (p("w2"), l.w2.view().into_dyn()),
                (p("b2"), l.b2.view().into_dyn()),
            ]);
        }
        out.push(("lnf_g".into(), self.lnf_g.view().into_dyn()));
        out.push(("lnf_b".into(), self.lnf_b.view().into_dyn()));
        if let Some(h) = &self.head {
            out.push(("head".into(), h.view().into_dyn()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, S>)> {
        let mut out = vec![
            ("tok_emb".to_string(), self.tok_emb.view_mut().into_dyn()),
            ("pos_emb".to_string(), self.pos_emb.view_mut().into_dyn()),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = |n: &str| format!("layers.{i}.{n}");
            out.extend([
                (p("ln1_g"), l.ln1_g.view_mut().into_dyn()),
                (p("ln1_b"), l.ln1_b.view_mut().into_dyn()),
                (p("wq"), l.wq.view_mut().into_dyn()),
                (p("wk"), l.wk.view_mut().into_dyn()),
                (p("wv"), l.wv.view_mut().into_dyn()),
                (p("wo"), l.wo.view_mut().into_dyn()),
                (p("ln2_g"), l.ln2_g.view_mut().into_dyn()),
                (p("ln2_b"), l.ln2_b.view_mut().into_dyn()),
                (p("w1"), l.w1.view_mut().into_dyn()),
                (p("b1"), l.b1.view_mut().into_dyn()),
                (p("w2"), l.w2.view_mut().into_dyn()),
                (p("b2"), l.b2.view_mut().into_dyn()),
            ]);
        }
        out.push(("lnf_g".into(), self.lnf_g.view_mut().into_dyn()));
        out.push(("lnf_b".into(), self.lnf_b.view_mut().into_dyn()));
        if let Some(h) = &mut self.head {
            out.push(("head".into(), h.view_mut().into_dyn()));
        }
        out
    }
}
