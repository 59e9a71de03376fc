use std::hash::Hasher;

use ndarray::{ArrayViewD, ArrayViewMutD};

use super::Scalar;

/// A named, ordered collection of dense tensors.
///
/// The order of `tensors` and `tensors_mut` is fixed and identical; the
/// optimizer, checkpoint writer and gradient checks rely on it.
pub trait Tensors<S: Scalar> {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, S>)>;
    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, S>)>;

    fn num_elements(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// FNV-1a over the little-endian bytes of every tensor, in order.
    fn fingerprint(&self) -> u64 {
        let mut h = fnv::FnvHasher::default();
        let mut buf = Vec::with_capacity(S::BYTES);
        for (name, t) in self.tensors() {
            h.write(name.as_bytes());
            for &v in t.iter() {
                buf.clear();
                v.write_le(&mut buf);
                h.write(&buf);
            }
        }
        h.finish()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Flattened copy of all values, in tensor order.
    fn flat(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.num_elements());
        for (_, t) in self.tensors() {
            out.extend(t.iter().copied());
        }
        out
    }
}

/// `dst += alpha * src`, tensor by tensor. Both sets must share a layout.
pub fn axpy<S: Scalar, A: Tensors<S> + ?Sized, B: Tensors<S> + ?Sized>(
    dst: &mut A,
    alpha: S,
    src: &B,
) {
    let src = src.tensors();
    let mut dst = dst.tensors_mut();
    assert_eq!(src.len(), dst.len(), "tensor sets differ in length");
    for ((_, d), (_, s)) in dst.iter_mut().zip(src.iter()) {
        d.zip_mut_with(s, |d, &s| *d += alpha * s);
    }
}

pub fn scale<S: Scalar, A: Tensors<S> + ?Sized>(dst: &mut A, alpha: S) {
    for (_, mut t) in dst.tensors_mut() {
        t.mapv_inplace(|v| v * alpha);
    }
}

pub fn fill_zero<S: Scalar, A: Tensors<S> + ?Sized>(dst: &mut A) {
    for (_, mut t) in dst.tensors_mut() {
        t.fill(S::zero());
    }
}
