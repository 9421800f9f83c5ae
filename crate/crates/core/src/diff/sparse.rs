use crate::diff::tensor::Real;
use crate::error::{Error, Result};

/// A sparse linear map over rows: `y[r] = sum_j w[r, j] * x[j]`, stored in
/// compressed-row form. Gathers, scatter-means, barycentric sampling and
/// edge pooling are all instances.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<T>,
}

impl<T: Real> SparseRows<T> {
    /// Builds from per-row `(column, weight)` lists.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, T)>]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        indptr.push(0);
        for row in rows {
            for &(j, w) in row {
                if j >= cols {
                    return Err(Error::ShapeMismatch {
                        op: "SparseRows::from_rows",
                        left: vec![j],
                        right: vec![cols],
                    });
                }
                indices.push(j);
                weights.push(w);
            }
            indptr.push(indices.len());
        }
        Ok(SparseRows {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            weights,
        })
    }

    /// Row `i` of the output is row `index[i]` of the input.
    pub fn gather(index: &[usize], cols: usize) -> Result<Self> {
        if let Some(&bad) = index.iter().find(|&&j| j >= cols) {
            return Err(Error::ShapeMismatch {
                op: "gather",
                left: vec![bad],
                right: vec![cols],
            });
        }
        Ok(SparseRows {
            rows: index.len(),
            cols,
            indptr: (0..=index.len()).collect(),
            indices: index.to_vec(),
            weights: vec![T::one(); index.len()],
        })
    }

    /// Input row `i` is sent to output slot `target[i]`; each output row is
    /// the mean of the rows sent to it (zero when none are).
    pub fn scatter_mean(target: &[usize], rows: usize) -> Result<Self> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); rows];
        for (i, &t) in target.iter().enumerate() {
            if t >= rows {
                return Err(Error::ShapeMismatch {
                    op: "scatter_mean",
                    left: vec![t],
                    right: vec![rows],
                });
            }
            lists[t].push(i);
        }
        Ok(Self::mean_of_groups(&lists, target.len()))
    }

    /// Output row `g` is the mean of the input rows listed in `groups[g]`.
    pub fn mean_of_groups(groups: &[Vec<usize>], cols: usize) -> Self {
        let mut indptr = Vec::with_capacity(groups.len() + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        indptr.push(0);
        for g in groups {
            let w = if g.is_empty() {
                T::zero()
            } else {
                T::one() / T::of(g.len() as f64)
            };
            for &j in g {
                debug_assert!(j < cols);
                indices.push(j);
                weights.push(w);
            }
            indptr.push(indices.len());
        }
        SparseRows {
            rows: groups.len(),
            cols,
            indptr,
            indices,
            weights,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    /// `y = S x` for `x` with `width` columns.
    pub fn apply(&self, x: &[T], width: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols * width);
        let mut y = vec![T::zero(); self.rows * width];
        for r in 0..self.rows {
            let out = &mut y[r * width..(r + 1) * width];
            for (j, w) in self.row(r) {
                let src = &x[j * width..(j + 1) * width];
                for (o, &s) in out.iter_mut().zip(src) {
                    *o = *o + w * s;
                }
            }
        }
        y
    }

    /// `gx += S^T gy`.
    pub fn apply_transpose_acc(&self, gy: &[T], width: usize, gx: &mut [T]) {
        for r in 0..self.rows {
            let src = &gy[r * width..(r + 1) * width];
            for (j, w) in self.row(r) {
                let out = &mut gx[j * width..(j + 1) * width];
                for (o, &s) in out.iter_mut().zip(src) {
                    *o = *o + w * s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_mean_two_values() {
        let s = SparseRows::<f64>::scatter_mean(&[0, 0], 1).unwrap();
        assert_eq!(s.apply(&[2.0, 4.0], 1), vec![3.0]);
    }

    #[test]
    fn gather_and_transpose() {
        let s = SparseRows::<f64>::gather(&[2, 0, 2], 3).unwrap();
        assert_eq!(s.apply(&[10.0, 20.0, 30.0], 1), vec![30.0, 10.0, 30.0]);
        let mut gx = vec![0.0; 3];
        s.apply_transpose_acc(&[1.0, 1.0, 1.0], 1, &mut gx);
        assert_eq!(gx, vec![1.0, 0.0, 2.0]);
        assert!(SparseRows::<f64>::gather(&[3], 3).is_err());
    }
}
