//! Sliding-window convolution straight from the definition. Ground truth for
//! every other algorithm; accumulates in f64.

use crate::error::{Error, Result};
use crate::par;
use crate::shape::ConvShape;
use crate::tensor::{Layout, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub output: Tensor,
    pub mac_count: u64,
}

/// Checks that `input` is CHW and `filters` a filter bank matching `shape`.
pub fn check_operands(input: &Tensor, filters: &Tensor, shape: &ConvShape) -> Result<()> {
    input.expect_layout(Layout::Chw)?;
    if input.dims() != [shape.in_channels, shape.height, shape.width] {
        return Err(Error::Shape(format!(
            "input dims {:?} do not match C,H,W = {},{},{}",
            input.dims(),
            shape.in_channels,
            shape.height,
            shape.width
        )));
    }
    let (k, c, r, s) = filters.filter_dims()?;
    if (k, c, r, s)
        != (
            shape.out_channels,
            shape.in_channels,
            shape.filter_h,
            shape.filter_w,
        )
    {
        return Err(Error::Shape(format!(
            "filter dims K,C,R,S = {k},{c},{r},{s} do not match shape"
        )));
    }
    Ok(())
}

pub fn oracle_conv(input: &Tensor, filters: &Tensor, shape: &ConvShape) -> Result<OracleResult> {
    check_operands(input, filters, shape)?;
    let (oh, ow) = shape.output_shape()?;
    let ConvShape {
        in_channels: c_n,
        height: h,
        width: w,
        filter_h: r_n,
        filter_w: s_n,
        pad,
        stride,
        ..
    } = *shape;
    let x = input.data();
    let mut out = vec![0.0f32; shape.output_len()];
    par::for_each_chunk(&mut out, oh * ow, |k, plane| {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for c in 0..c_n {
                    for r in 0..r_n {
                        let iy = (oy * stride + r) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for s in 0..s_n {
                            let ix = (ox * stride + s) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let v = x[(c * h + iy as usize) * w + ix as usize] as f64;
                            acc += v * filters.filter_at(k, c, r, s) as f64;
                        }
                    }
                }
                plane[oy * ow + ox] = acc as f32;
            }
        }
    });
    Ok(OracleResult {
        output: Tensor::new(Layout::Chw, &[shape.out_channels, oh, ow], out)?,
        mac_count: shape.macs(),
    })
}

/// Largest `|a - b| / max(1, |b|)` over all elements. Mixed absolute/relative
/// so that near-zero outputs do not blow up the ratio.
pub fn max_rel_error(actual: &[f32], expected: &[f32]) -> f64 {
    assert_eq!(actual.len(), expected.len(), "length mismatch");
    actual
        .iter()
        .zip(expected)
        .map(|(&a, &b)| (a as f64 - b as f64).abs() / (b as f64).abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(actual: &[f32], expected: &[f32]) -> f64 {
    assert_eq!(actual.len(), expected.len(), "length mismatch");
    actual
        .iter()
        .zip(expected)
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent brute force: loops in the opposite order, padding realised
    /// by materialising a zero-bordered copy of the input.
    fn reversed_loops(input: &Tensor, filters: &Tensor, s: &ConvShape) -> Vec<f32> {
        let (oh, ow) = s.out_hw();
        let (ph, pw) = (s.height + 2 * s.pad, s.width + 2 * s.pad);
        let mut padded = vec![0.0f64; s.in_channels * ph * pw];
        for c in 0..s.in_channels {
            for y in 0..s.height {
                for x in 0..s.width {
                    padded[(c * ph + y + s.pad) * pw + x + s.pad] = input.at(&[c, y, x]) as f64;
                }
            }
        }
        let mut out = vec![0.0f64; s.out_channels * oh * ow];
        for c in (0..s.in_channels).rev() {
            for r in (0..s.filter_h).rev() {
                for q in (0..s.filter_w).rev() {
                    for k in 0..s.out_channels {
                        let f = filters.at(&[k, c, r, q]) as f64;
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let v =
                                    padded[(c * ph + oy * s.stride + r) * pw + ox * s.stride + q];
                                out[(k * oh + oy) * ow + ox] += f * v;
                            }
                        }
                    }
                }
            }
        }
        out.into_iter().map(|v| v as f32).collect()
    }

    #[test]
    fn scalar_product() {
        let s = ConvShape::new(1, 1, 1, 1, 1, 1, 0, 1).unwrap();
        let x = Tensor::new(Layout::Chw, &[1, 1, 1], vec![1.5]).unwrap();
        let f = Tensor::new(Layout::Kcrs, &[1, 1, 1, 1], vec![2.0]).unwrap();
        let r = oracle_conv(&x, &f, &s).unwrap();
        assert_eq!(r.output.data(), &[3.0]);
        assert_eq!(r.mac_count, 1);
    }

    #[test]
    fn ones_count_in_bounds_taps() {
        let s = ConvShape::same3x3(1, 1, 3, 3).unwrap();
        let x = Tensor::new(Layout::Chw, &[1, 3, 3], vec![1.0; 9]).unwrap();
        let f = Tensor::new(Layout::Kcrs, &[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let r = oracle_conv(&x, &f, &s).unwrap();
        assert_eq!(r.output.data(), &[4., 6., 4., 6., 9., 6., 4., 6., 4.]);
    }

    #[test]
    fn matches_reversed_brute_force() {
        let s = ConvShape::same3x3(4, 8, 6, 6).unwrap();
        let x = Tensor::random(Layout::Chw, &[4, 6, 6], 1);
        let f = Tensor::random(Layout::Kcrs, &[8, 4, 3, 3], 2);
        let got = oracle_conv(&x, &f, &s).unwrap();
        assert!(max_abs_diff(got.output.data(), &reversed_loops(&x, &f, &s)) <= 1e-5);
        let strided = ConvShape::new(3, 2, 7, 7, 3, 3, 1, 2).unwrap();
        let x = Tensor::random(Layout::Chw, &[3, 7, 7], 3);
        let f = Tensor::random(Layout::Kcrs, &[2, 3, 3, 3], 4);
        let got = oracle_conv(&x, &f, &strided).unwrap();
        assert!(max_abs_diff(got.output.data(), &reversed_loops(&x, &f, &strided)) <= 1e-5);
    }

    #[test]
    fn delta_filter_shifts_input() {
        let s = ConvShape::same3x3(1, 1, 5, 5).unwrap();
        let x = Tensor::random(Layout::Chw, &[1, 5, 5], 9);
        for (r0, s0) in [(0, 0), (1, 1), (2, 1)] {
            let mut f = Tensor::zeros(Layout::Kcrs, &[1, 1, 3, 3]);
            f.data_mut()[r0 * 3 + s0] = 1.0;
            let out = oracle_conv(&x, &f, &s).unwrap().output;
            for y in 0..5isize {
                for xx in 0..5isize {
                    let (iy, ix) = (y + r0 as isize - 1, xx + s0 as isize - 1);
                    let want = if (0..5).contains(&iy) && (0..5).contains(&ix) {
                        x.at(&[0, iy as usize, ix as usize])
                    } else {
                        0.0
                    };
                    assert_eq!(out.at(&[0, y as usize, xx as usize]), want);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let s = ConvShape::same3x3(2, 2, 4, 4).unwrap();
        let x = Tensor::zeros(Layout::Chw, &[2, 4, 5]);
        let f = Tensor::zeros(Layout::Kcrs, &[2, 2, 3, 3]);
        assert!(matches!(oracle_conv(&x, &f, &s), Err(Error::Shape(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn linear_in_input(seed in any::<u64>(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let s = ConvShape::same3x3(3, 2, 5, 5).unwrap();
            let x = Tensor::random(Layout::Chw, &[3, 5, 5], seed);
            let y = Tensor::random(Layout::Chw, &[3, 5, 5], seed ^ 0xabcdef);
            let f = Tensor::random(Layout::Kcrs, &[2, 3, 3, 3], seed.wrapping_add(1));
            let mix: Vec<f32> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
            let mix = Tensor::new(Layout::Chw, &[3, 5, 5], mix).unwrap();
            let lhs = oracle_conv(&mix, &f, &s).unwrap().output;
            let ox = oracle_conv(&x, &f, &s).unwrap().output;
            let oy = oracle_conv(&y, &f, &s).unwrap().output;
            let rhs: Vec<f32> = ox.data().iter().zip(oy.data()).map(|(p, q)| a * p + b * q).collect();
            prop_assert!(max_rel_error(lhs.data(), &rhs) <= 1e-4);
        }

        #[test]
        fn mac_count_formula(c in 1usize..5, k in 1usize..5, h in 3usize..9, r in 1usize..4) {
            let s = ConvShape::new(c, k, h, h, r, r, 0, 1).unwrap();
            let res = oracle_conv(&Tensor::zeros(Layout::Chw, &[c, h, h]), &Tensor::zeros(Layout::Kcrs, &[k, c, r, r]), &s).unwrap();
            let o = h - r + 1;
            prop_assert_eq!(res.mac_count, (k * o * o * c * r * r) as u64);
        }
    }
}
