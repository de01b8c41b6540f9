use crate::error::{Error, Result};

/// Problem description for a single-image 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub filter_h: usize,
    pub filter_w: usize,
    pub pad: usize,
    pub stride: usize,
}

impl ConvShape {
    /// Builds a shape and checks every invariant, including exact output division.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
        filter_h: usize,
        filter_w: usize,
        pad: usize,
        stride: usize,
    ) -> Result<Self> {
        let s = ConvShape {
            in_channels,
            out_channels,
            height,
            width,
            filter_h,
            filter_w,
            pad,
            stride,
        };
        s.output_shape()?;
        Ok(s)
    }

    /// Same-size 3x3 layer (pad 1, stride 1), the geometry of the ResNet body layers.
    pub fn same3x3(c: usize, k: usize, h: usize, w: usize) -> Result<Self> {
        Self::new(c, k, h, w, 3, 3, 1, 1)
    }

    /// Output extents `(OH, OW)`; rejects non-exact division by the stride.
    pub fn output_shape(&self) -> Result<(usize, usize)> {
        let dims = [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("height", self.height),
            ("width", self.width),
            ("filter_h", self.filter_h),
            ("filter_w", self.filter_w),
            ("stride", self.stride),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Shape(format!("{name} must be >= 1")));
            }
        }
        let oh = out_extent(self.height, self.filter_h, self.pad, self.stride, "height")?;
        let ow = out_extent(self.width, self.filter_w, self.pad, self.stride, "width")?;
        Ok((oh, ow))
    }

    /// Output extents for a shape already known to be valid.
    pub fn out_hw(&self) -> (usize, usize) {
        self.output_shape()
            .expect("ConvShape validated at construction")
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn filter_len(&self) -> usize {
        self.out_channels * self.in_channels * self.filter_h * self.filter_w
    }

    pub fn output_len(&self) -> usize {
        let (oh, ow) = self.out_hw();
        self.out_channels * oh * ow
    }

    /// Multiply-accumulates of the sliding-window definition.
    pub fn macs(&self) -> u64 {
        (self.output_len() * self.in_channels * self.filter_h * self.filter_w) as u64
    }

    /// Returns a copy with both channel counts replaced.
    pub fn with_channels(&self, c: usize, k: usize) -> Self {
        ConvShape {
            in_channels: c,
            out_channels: k,
            ..*self
        }
    }
}

fn out_extent(size: usize, filter: usize, pad: usize, stride: usize, axis: &str) -> Result<usize> {
    let padded = size + 2 * pad;
    if padded < filter {
        return Err(Error::Shape(format!(
            "{axis}: filter {filter} larger than padded input {padded}"
        )));
    }
    let span = padded - filter;
    if !span.is_multiple_of(stride) {
        return Err(Error::Shape(format!(
            "{axis}: ({size} + 2*{pad} - {filter}) not divisible by stride {stride}"
        )));
    }
    Ok(span / stride + 1)
}

/// Standalone form of [`ConvShape::output_shape`].
pub fn output_shape(shape: &ConvShape) -> Result<(usize, usize)> {
    shape.output_shape()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(h: usize, r: usize, pad: usize, stride: usize) -> ConvShape {
        ConvShape {
            in_channels: 1,
            out_channels: 1,
            height: h,
            width: h,
            filter_h: r,
            filter_w: r,
            pad,
            stride,
        }
    }

    /// Counts filter placements whose top-left corner lands on a stride step inside the padded input.
    fn placements(h: usize, r: usize, pad: usize, stride: usize) -> usize {
        let padded = h + 2 * pad;
        (0..padded)
            .filter(|&y| y % stride == 0 && y + r <= padded)
            .count()
    }

    #[test]
    fn conv4_same_size() {
        assert_eq!(
            ConvShape::same3x3(1, 1, 14, 14)
                .unwrap()
                .output_shape()
                .unwrap(),
            (14, 14)
        );
    }

    #[test]
    fn filter_covers_input() {
        assert_eq!(raw(3, 3, 0, 1).output_shape().unwrap(), (1, 1));
    }

    #[test]
    fn strided_matches_enumeration() {
        assert_eq!(placements(7, 3, 1, 2), 4);
        assert_eq!(raw(7, 3, 1, 2).output_shape().unwrap(), (4, 4));
    }

    #[test]
    fn rejects_inexact_division() {
        assert!(matches!(
            raw(8, 3, 1, 2).output_shape(),
            Err(Error::Shape(_))
        ));
        assert!(raw(2, 3, 0, 1).output_shape().is_err());
        assert!(ConvShape::new(0, 1, 3, 3, 3, 3, 0, 1).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_filter_stride_pad(h in 4usize..40, r in 1usize..5, pad in 0usize..3, stride in 1usize..3) {
            // Compare on the floor form so that every parameter combination is comparable.
            let f = |h: usize, r: usize, p: usize, s: usize| (h + 2 * p).checked_sub(r).map(|x| x / s + 1);
            let base = f(h, r, pad, stride);
            prop_assume!(base.is_some());
            if let Some(v) = f(h, r + 1, pad, stride) { prop_assert!(v <= base.unwrap()); }
            if let Some(v) = f(h, r, pad, stride + 1) { prop_assert!(v <= base.unwrap()); }
            prop_assert!(f(h, r, pad + 1, stride).unwrap() >= base.unwrap());
            if let Ok((oh, _)) = raw(h, r, pad, stride).output_shape() {
                prop_assert_eq!(oh, placements(h, r, pad, stride));
                prop_assert_eq!(Some(oh), base);
            }
        }
    }
}
