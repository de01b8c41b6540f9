use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Index order of a dense tensor. The letters spell the order exactly,
/// outermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// Single-image feature map: channels, rows, columns.
    Chw,
    /// Filter bank: output channel, input channel, filter row, filter column.
    Kcrs,
    /// Filter bank with the output channel innermost, for coalesced per-channel reads.
    Crsk,
    /// Generic rows x columns matrix.
    RowMajor,
}

impl Layout {
    pub fn rank(self) -> usize {
        match self {
            Layout::Chw => 3,
            Layout::Kcrs | Layout::Crsk => 4,
            Layout::RowMajor => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    layout: Layout,
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(layout: Layout, dims: &[usize], data: Vec<f32>) -> Result<Self> {
        if dims.len() != layout.rank() {
            return Err(Error::Shape(format!(
                "{layout:?} needs {} dims, got {}",
                layout.rank(),
                dims.len()
            )));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} hold {n} elements, data has {}",
                data.len()
            )));
        }
        Ok(Tensor {
            layout,
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn zeros(layout: Layout, dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Tensor::new(layout, dims, vec![0.0; n]).expect("zeros: rank mismatch")
    }

    /// Uniform values in [-1, 1) from a seeded ChaCha stream.
    pub fn random(layout: Layout, dims: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        Tensor::new(layout, dims, data).expect("random: rank mismatch")
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn bytes(&self) -> u64 {
        self.data.len() as u64 * 4
    }

    /// Flat offset of a multi-index given in the tensor's own order.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d);
            acc * d + i
        })
    }

    pub fn at(&self, idx: &[usize]) -> f32 {
        self.data[self.offset(idx)]
    }

    /// Value of a filter bank at logical `(k, c, r, s)`, whichever filter layout it is stored in.
    pub fn filter_at(&self, k: usize, c: usize, r: usize, s: usize) -> f32 {
        match self.layout {
            Layout::Kcrs => self.at(&[k, c, r, s]),
            Layout::Crsk => self.at(&[c, r, s, k]),
            other => panic!("filter_at on {other:?} tensor"),
        }
    }

    pub fn expect_layout(&self, want: Layout) -> Result<()> {
        if self.layout != want {
            return Err(Error::Layout(format!(
                "expected {want:?} tensor, got {:?}",
                self.layout
            )));
        }
        Ok(())
    }

    /// Logical `(K, C, R, S)` extents of a filter bank.
    pub fn filter_dims(&self) -> Result<(usize, usize, usize, usize)> {
        match self.layout {
            Layout::Kcrs => Ok((self.dims[0], self.dims[1], self.dims[2], self.dims[3])),
            Layout::Crsk => Ok((self.dims[3], self.dims[0], self.dims[1], self.dims[2])),
            other => Err(Error::Layout(format!("{other:?} is not a filter layout"))),
        }
    }
}

/// Reorders a filter bank between KCRS and CRSK, or transposes a matrix.
pub fn convert_layout(t: &Tensor, target: Layout) -> Result<Tensor> {
    use Layout::*;
    match (t.layout, target) {
        (a, b) if a == b => Ok(t.clone()),
        (Kcrs, Crsk) => {
            let (k, c, r, s) = t.filter_dims()?;
            let mut out = vec![0.0; t.len()];
            for ki in 0..k {
                for ci in 0..c {
                    for ri in 0..r {
                        for si in 0..s {
                            out[((ci * r + ri) * s + si) * k + ki] =
                                t.data[((ki * c + ci) * r + ri) * s + si];
                        }
                    }
                }
            }
            Tensor::new(Crsk, &[c, r, s, k], out)
        }
        (Crsk, Kcrs) => {
            let (k, c, r, s) = t.filter_dims()?;
            let mut out = vec![0.0; t.len()];
            for ci in 0..c {
                for ri in 0..r {
                    for si in 0..s {
                        for ki in 0..k {
                            out[((ki * c + ci) * r + ri) * s + si] =
                                t.data[((ci * r + ri) * s + si) * k + ki];
                        }
                    }
                }
            }
            Tensor::new(Kcrs, &[k, c, r, s], out)
        }
        (RowMajor, RowMajor) => unreachable!(),
        (a, b) => Err(Error::Layout(format!("no conversion from {a:?} to {b:?}"))),
    }
}

/// Matrix transpose of a ROWMAJOR tensor.
pub fn transpose(t: &Tensor) -> Result<Tensor> {
    t.expect_layout(Layout::RowMajor)?;
    let (rows, cols) = (t.dims[0], t.dims[1]);
    let mut out = vec![0.0; t.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = t.data[i * cols + j];
        }
    }
    Tensor::new(Layout::RowMajor, &[cols, rows], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn degenerate_bank_unchanged() {
        let t = Tensor::new(Layout::Kcrs, &[1, 1, 1, 1], vec![3.5]).unwrap();
        let u = convert_layout(&t, Layout::Crsk).unwrap();
        assert_eq!(u.data(), &[3.5]);
        assert_eq!(u.dims(), &[1, 1, 1, 1]);
    }

    #[test]
    fn two_outputs_keep_order() {
        let t = Tensor::new(Layout::Kcrs, &[2, 1, 1, 1], vec![1.0, 2.0]).unwrap();
        let u = convert_layout(&t, Layout::Crsk).unwrap();
        assert_eq!(u.data(), &[1.0, 2.0]);
        assert_eq!(u.dims(), &[1, 1, 1, 2]);
    }

    #[test]
    fn random_spot_checks_against_flat_index() {
        let (k, c, r, s) = (4, 3, 3, 3);
        let t = Tensor::random(Layout::Kcrs, &[k, c, r, s], 7);
        let u = convert_layout(&t, Layout::Crsk).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (ki, ci, ri, si) = (
                rng.gen_range(0..k),
                rng.gen_range(0..c),
                rng.gen_range(0..r),
                rng.gen_range(0..s),
            );
            let src = ki * 27 + ci * 9 + ri * 3 + si;
            let dst = ci * 36 + ri * 12 + si * 4 + ki;
            assert_eq!(t.data()[src], u.data()[dst]);
        }
    }

    #[test]
    fn incompatible_layouts_rejected() {
        let t = Tensor::zeros(Layout::Chw, &[1, 2, 2]);
        assert!(matches!(
            convert_layout(&t, Layout::Crsk),
            Err(Error::Layout(_))
        ));
        assert!(Tensor::new(Layout::Chw, &[2, 2, 2], vec![0.0; 7]).is_err());
    }

    #[test]
    fn transpose_small() {
        let t = Tensor::new(Layout::RowMajor, &[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(transpose(&t).unwrap().data(), &[1., 4., 2., 5., 3., 6.]);
    }

    proptest! {
        #[test]
        fn filter_round_trip(k in 1usize..6, c in 1usize..5, r in 1usize..4, s in 1usize..4, seed in any::<u64>()) {
            let t = Tensor::random(Layout::Crsk, &[c, r, s, k], seed);
            let back = convert_layout(&convert_layout(&t, Layout::Kcrs).unwrap(), Layout::Crsk).unwrap();
            prop_assert_eq!(&back, &t);
            let kcrs = convert_layout(&t, Layout::Kcrs).unwrap();
            prop_assert_eq!(kcrs.filter_at(k - 1, c - 1, r - 1, s - 1), t.filter_at(k - 1, c - 1, r - 1, s - 1));
        }
    }
}
