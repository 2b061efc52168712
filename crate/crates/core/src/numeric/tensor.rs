use crate::error::{Error, Result};

/// Rank-4 row-major tensor, used for convolution kernels laid out as
/// `[out, in, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::dims(format!(
                "{} values cannot fill a tensor of dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for a in 0..dims[0] {
            for b in 0..dims[1] {
                for c in 0..dims[2] {
                    for d in 0..dims[3] {
                        data.push(f([a, b, c, d]));
                    }
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, idx: [usize; 4]) -> usize {
        let [_, d1, d2, d3] = self.dims;
        ((idx[0] * d1 + idx[1]) * d2 + idx[2]) * d3 + idx[3]
    }

    #[inline]
    pub fn get(&self, idx: [usize; 4]) -> f64 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Number of trailing 2-D slices, `d0 · d1`.
    pub fn slice_count(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    /// Elements per trailing 2-D slice, `d2 · d3`.
    pub fn slice_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    /// The `(i, j)` trailing slice, flattened row-major.
    pub fn slice(&self, i: usize, j: usize) -> &[f64] {
        let n = self.slice_len();
        let start = (i * self.dims[1] + j) * n;
        &self.data[start..start + n]
    }

    /// All trailing slices in storage order.
    pub fn slices(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.slice_len().max(1))
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        assert_eq!(self.dims, other.dims, "max_abs_diff dims");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reorders the second axis: output channel `c` takes input channel `perm[c]`.
    pub fn permute_axis1(&self, perm: &[usize]) -> Result<Tensor4> {
        let [d0, d1, d2, d3] = self.dims;
        if perm.len() != d1 {
            return Err(Error::dims(format!(
                "permutation of length {} for axis of size {d1}",
                perm.len()
            )));
        }
        let n = d2 * d3;
        let mut data = Vec::with_capacity(self.data.len());
        for a in 0..d0 {
            for &src in perm {
                let start = (a * d1 + src) * n;
                data.extend_from_slice(&self.data[start..start + n]);
            }
        }
        Ok(Tensor4 {
            dims: self.dims,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::from_fn([2, 3, 4, 5], |[a, b, c, d]| {
            (a * 1000 + b * 100 + c * 10 + d) as f64
        });
        assert_eq!(t.get([1, 2, 3, 4]), 1234.0);
        assert_eq!(t.as_slice()[t.len() - 1], 1234.0);
        assert_eq!(t.slice(1, 0)[0], 1000.0);
        assert_eq!(t.slices().count(), 6);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(Tensor4::new([1, 2, 2, 2], vec![0.0; 7]).is_err());
    }

    #[test]
    fn permute_axis1_moves_slices() {
        let t = Tensor4::from_fn([2, 3, 1, 2], |[a, b, _, d]| {
            (a * 10 + b) as f64 + d as f64 * 0.5
        });
        let p = t.permute_axis1(&[2, 0, 1]).unwrap();
        assert_eq!(p.slice(1, 0), t.slice(1, 2));
        assert_eq!(p.slice(0, 2), t.slice(0, 1));
    }
}
