//! The 3x3 body layers of ResNet.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::shape::ConvShape;

/// ResNet depths with a repeat count column in [`LayerSpec::repeats`].
pub const RESNET_DEPTHS: [usize; 5] = [18, 34, 50, 101, 152];

/// Channel scales the simulation commands accept.
pub const CHANNEL_SCALES: [usize; 4] = [8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayerSpec {
    pub name: &'static str,
    pub channels: usize,
    pub filters: usize,
    pub height: usize,
    pub width: usize,
    /// `(3x3 convolutions per block, blocks)` for each entry of [`RESNET_DEPTHS`].
    pub repeats: [(usize, usize); 5],
}

pub const LAYERS: [LayerSpec; 4] = [
    LayerSpec {
        name: "conv2.x",
        channels: 64,
        filters: 64,
        height: 56,
        width: 56,
        repeats: [(2, 2), (2, 3), (1, 3), (1, 3), (1, 3)],
    },
    LayerSpec {
        name: "conv3.x",
        channels: 128,
        filters: 128,
        height: 28,
        width: 28,
        repeats: [(2, 2), (2, 4), (1, 4), (1, 4), (1, 8)],
    },
    LayerSpec {
        name: "conv4.x",
        channels: 256,
        filters: 256,
        height: 14,
        width: 14,
        repeats: [(2, 2), (2, 6), (1, 6), (1, 23), (1, 36)],
    },
    LayerSpec {
        name: "conv5.x",
        channels: 512,
        filters: 512,
        height: 7,
        width: 7,
        repeats: [(2, 2), (2, 4), (1, 3), (1, 3), (1, 3)],
    },
];

impl LayerSpec {
    pub fn by_name(name: &str) -> Result<Self> {
        LAYERS
            .iter()
            .find(|l| l.name == name || l.name.trim_end_matches(".x") == name)
            .copied()
            .ok_or_else(|| Error::Parse(format!("unknown layer '{name}'")))
    }

    /// Same-size 3x3 convolution at the layer's full channel counts.
    pub fn shape(&self) -> ConvShape {
        ConvShape::same3x3(self.channels, self.filters, self.height, self.width)
            .expect("built-in layers are valid")
    }

    /// The layer with both channel counts capped at `scale`.
    pub fn scaled(&self, scale: usize) -> Result<ConvShape> {
        if !CHANNEL_SCALES.contains(&scale) {
            return Err(Error::Config(format!(
                "channel scale {scale} not in {CHANNEL_SCALES:?}"
            )));
        }
        Ok(self
            .shape()
            .with_channels(self.channels.min(scale), self.filters.min(scale)))
    }

    /// 3x3 convolutions of this geometry in a ResNet of the given depth.
    pub fn convs_for(&self, depth: usize) -> Result<usize> {
        RESNET_DEPTHS
            .iter()
            .position(|&d| d == depth)
            .map(|i| self.repeats[i].0 * self.repeats[i].1)
            .ok_or_else(|| {
                Error::Config(format!(
                    "no ResNet of depth {depth}; expected one of {RESNET_DEPTHS:?}"
                ))
            })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::by_name(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_geometry() {
        let dims: Vec<_> = LAYERS
            .iter()
            .map(|l| (l.channels, l.filters, l.height, l.width))
            .collect();
        assert_eq!(
            dims,
            [
                (64, 64, 56, 56),
                (128, 128, 28, 28),
                (256, 256, 14, 14),
                (512, 512, 7, 7)
            ]
        );
        for l in LAYERS {
            assert_eq!(l.shape().out_hw(), (l.height, l.width));
        }
    }

    #[test]
    fn conv_counts_per_depth() {
        let total = |d: usize| -> usize { LAYERS.iter().map(|l| l.convs_for(d).unwrap()).sum() };
        assert_eq!(total(18), 16);
        assert_eq!(total(34), 34);
        assert_eq!(total(50), 16);
        assert_eq!(total(101), 33);
        assert_eq!(total(152), 50);
        assert_eq!(
            LayerSpec::by_name("conv4.x")
                .unwrap()
                .convs_for(152)
                .unwrap(),
            36
        );
        assert!(LayerSpec::by_name("conv4.x")
            .unwrap()
            .convs_for(20)
            .is_err());
    }

    #[test]
    fn scaling_caps_channels_only() {
        let l = LayerSpec::by_name("conv4").unwrap();
        let s = l.scaled(64).unwrap();
        assert_eq!((s.in_channels, s.out_channels, s.height), (64, 64, 14));
        assert_eq!(
            LayerSpec::by_name("conv2.x").unwrap().scaled(64).unwrap(),
            LAYERS[0].shape()
        );
        assert!(l.scaled(12).is_err());
        assert!(LayerSpec::by_name("conv6.x").is_err());
    }
}
