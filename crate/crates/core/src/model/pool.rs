use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// The row at the single given position.
    Last,
    /// Arithmetic mean of the rows at the given positions.
    Mean,
}

fn check<S>(hidden: &Array2<S>, positions: &[usize], mode: PoolMode) -> Result<()> {
    if positions.is_empty() {
        return Err(Error::Empty("pool positions"));
    }
    if mode == PoolMode::Last && positions.len() != 1 {
        return Err(Error::Invalid(format!(
            "last pooling takes one position, got {}",
            positions.len()
        )));
    }
    if let Some(&p) = positions.iter().find(|&&p| p >= hidden.nrows()) {
        return Err(Error::Invalid(format!(
            "pool position {p} outside {} rows",
            hidden.nrows()
        )));
    }
    Ok(())
}

pub fn pool<S: Scalar>(hidden: &Array2<S>, positions: &[usize], mode: PoolMode) -> Result<Array1<S>> {
    check(hidden, positions, mode)?;
    let mut out = Array1::zeros(hidden.ncols());
    for &p in positions {
        out += &hidden.row(p);
    }
    if mode == PoolMode::Mean {
        out /= S::of(positions.len() as f64);
    }
    Ok(out)
}

/// Gradient of [`pool`] w.r.t. the hidden states, given the gradient of the pooled vector.
pub fn pool_backward<S: Scalar>(
    rows: usize,
    positions: &[usize],
    mode: PoolMode,
    dpooled: &Array1<S>,
) -> Array2<S> {
    let mut d = Array2::zeros((rows, dpooled.len()));
    let w = match mode {
        PoolMode::Last => S::one(),
        PoolMode::Mean => S::one() / S::of(positions.len() as f64),
    };
    for &p in positions {
        let mut r = d.row_mut(p);
        r.scaled_add(w, dpooled);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mean_of_identical_rows_is_the_row() {
        let h = array![[1.0f64, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert_eq!(pool(&h, &[0, 1, 2], PoolMode::Mean).unwrap(), array![1.0, 2.0]);
    }

    #[test]
    fn mean_of_two_rows_is_midpoint() {
        let h = array![[1.0f64, 2.0], [3.0, 6.0]];
        assert_eq!(pool(&h, &[0, 1], PoolMode::Mean).unwrap(), array![2.0, 4.0]);
    }

    #[test]
    fn last_selects_row() {
        let h = array![[1.0f64, 2.0], [3.0, 6.0]];
        assert_eq!(pool(&h, &[1], PoolMode::Last).unwrap(), array![3.0, 6.0]);
    }

    #[test]
    fn empty_positions_rejected() {
        let h = array![[1.0f64]];
        assert!(matches!(pool(&h, &[], PoolMode::Mean), Err(Error::Empty(_))));
    }
}
