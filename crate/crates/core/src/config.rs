use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::shape::ConvShape;

/// Largest workgroup any lowering may request, independent of machine.
pub const MAX_WORKGROUP_THREADS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Oracle,
    Im2col,
    FusedUnroll,
    Winograd,
    /// Direct convolution; the filter caching choice lives in [`AlgoConfig::cache_filter`].
    Direct,
    Ilpm,
}

impl Algorithm {
    pub const KERNELS: [Algorithm; 5] = [
        Algorithm::Im2col,
        Algorithm::FusedUnroll,
        Algorithm::Winograd,
        Algorithm::Direct,
        Algorithm::Ilpm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Oracle => "oracle",
            Algorithm::Im2col => "im2col",
            Algorithm::FusedUnroll => "fused_unroll",
            Algorithm::Winograd => "winograd",
            Algorithm::Direct => "direct",
            Algorithm::Ilpm => "ilpm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "oracle" => Algorithm::Oracle,
            "im2col" => Algorithm::Im2col,
            "fused_unroll" | "fused" | "libdnn" => Algorithm::FusedUnroll,
            "winograd" => Algorithm::Winograd,
            "direct" | "direct_cache" | "direct_nocache" => Algorithm::Direct,
            "ilpm" | "ilp-m" => Algorithm::Ilpm,
            other => return Err(Error::Parse(format!("unknown algorithm '{other}'"))),
        })
    }
}

/// Tunable parameters of one algorithm instance. Fields an algorithm does not
/// use are ignored by it but still take part in the ordering used for tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub tile_x: usize,
    pub tile_y: usize,
    pub out_channels_per_thread: usize,
    pub gemm_tile_m: usize,
    pub gemm_tile_n: usize,
    pub gemm_tile_k: usize,
    pub cache_filter: bool,
    pub transpose_output: bool,
    /// Output channels handled by one ILP-M workgroup (one per thread).
    /// `None` means `min(K, 256)`.
    pub wg_channels: Option<usize>,
}

impl AlgoConfig {
    /// A reasonable starting configuration for `algorithm` on `shape`.
    pub fn default_for(algorithm: Algorithm, shape: &ConvShape) -> Self {
        let (oh, ow) = shape.out_hw();
        // ILP-M has one thread per output channel, so its parallelism across
        // the image comes from many small tiles.
        let sizes: &[usize] = if algorithm == Algorithm::Ilpm {
            &[2, 4, 7, 8, 1]
        } else {
            &[7, 8, 4, 2, 1]
        };
        let pick_tile = |n: usize| {
            sizes
                .iter()
                .copied()
                .find(|t| n.is_multiple_of(*t))
                .unwrap_or(1)
        };
        let ocpt = [4, 2, 1]
            .into_iter()
            .find(|o| shape.out_channels.is_multiple_of(*o))
            .unwrap_or(1);
        let tm = [16, 8]
            .into_iter()
            .find(|t| shape.out_channels.is_multiple_of(*t))
            .unwrap_or(1);
        AlgoConfig {
            algorithm,
            tile_x: pick_tile(ow),
            tile_y: pick_tile(oh),
            out_channels_per_thread: ocpt,
            gemm_tile_m: if algorithm == Algorithm::FusedUnroll {
                tm
            } else {
                16
            },
            gemm_tile_n: 16,
            gemm_tile_k: 16,
            cache_filter: false,
            transpose_output: false,
            wg_channels: None,
        }
    }

    pub fn direct(cache_filter: bool, ocpt: usize, tile_x: usize, tile_y: usize) -> Self {
        AlgoConfig {
            algorithm: Algorithm::Direct,
            tile_x,
            tile_y,
            out_channels_per_thread: ocpt,
            gemm_tile_m: 16,
            gemm_tile_n: 16,
            gemm_tile_k: 16,
            cache_filter,
            transpose_output: false,
            wg_channels: None,
        }
    }

    pub fn ilpm(tile_x: usize, tile_y: usize, transpose_output: bool) -> Self {
        AlgoConfig {
            algorithm: Algorithm::Ilpm,
            tile_x,
            tile_y,
            out_channels_per_thread: 1,
            gemm_tile_m: 16,
            gemm_tile_n: 16,
            gemm_tile_k: 16,
            cache_filter: false,
            transpose_output,
            wg_channels: None,
        }
    }

    pub fn with_gemm_tiles(mut self, m: usize, n: usize, k: usize) -> Self {
        self.gemm_tile_m = m;
        self.gemm_tile_n = n;
        self.gemm_tile_k = k;
        self
    }

    pub fn ilpm_wg_channels(&self, shape: &ConvShape) -> usize {
        self.wg_channels
            .unwrap_or_else(|| shape.out_channels.min(256))
    }

    /// Display label, e.g. `direct_cache` / `direct_nocache`.
    pub fn label(&self) -> String {
        match self.algorithm {
            Algorithm::Direct if self.cache_filter => "direct_cache".into(),
            Algorithm::Direct => "direct_nocache".into(),
            a => a.name().into(),
        }
    }

    /// Compact, stable one-line description used in audit CSVs.
    pub fn describe(&self) -> String {
        match self.algorithm {
            Algorithm::Oracle => "oracle".into(),
            Algorithm::Im2col | Algorithm::Winograd => format!(
                "{} tile_m={} tile_n={} tile_k={}",
                self.label(),
                self.gemm_tile_m,
                self.gemm_tile_n,
                self.gemm_tile_k
            ),
            Algorithm::FusedUnroll => format!(
                "{} tile={}x{} tile_m={}",
                self.label(),
                self.tile_x,
                self.tile_y,
                self.gemm_tile_m
            ),
            Algorithm::Direct => format!(
                "{} tile={}x{} ocpt={}",
                self.label(),
                self.tile_x,
                self.tile_y,
                self.out_channels_per_thread
            ),
            Algorithm::Ilpm => format!(
                "{} tile={}x{} transpose={} wg_channels={}",
                self.label(),
                self.tile_x,
                self.tile_y,
                self.transpose_output,
                self.wg_channels
                    .map_or("auto".to_string(), |w| w.to_string())
            ),
        }
    }

    /// Machine-independent validation against a problem shape.
    pub fn validate(&self, shape: &ConvShape) -> Result<()> {
        let (oh, ow) = shape.output_shape()?;
        let bad = |msg: String| Err(Error::Config(msg));
        let tiles_divide = || -> Result<()> {
            if self.tile_x == 0 || self.tile_y == 0 {
                return bad("tile dims must be >= 1".into());
            }
            if ow % self.tile_x != 0 || oh % self.tile_y != 0 {
                return bad(format!(
                    "tile {}x{} does not divide output {}x{}",
                    self.tile_x, self.tile_y, ow, oh
                ));
            }
            Ok(())
        };
        let gemm_tiles = || -> Result<()> {
            for (name, t) in [
                ("m", self.gemm_tile_m),
                ("n", self.gemm_tile_n),
                ("k", self.gemm_tile_k),
            ] {
                if t == 0 || (t > 16 && t % 16 != 0) {
                    return bad(format!(
                        "gemm tile {name}={t} must be <= 16 or a multiple of 16"
                    ));
                }
            }
            Ok(())
        };
        match self.algorithm {
            Algorithm::Oracle => Ok(()),
            Algorithm::Im2col => {
                gemm_tiles()?;
                if self.tile_x * self.tile_y > MAX_WORKGROUP_THREADS
                    || self.tile_x * self.tile_y == 0
                {
                    return bad("im2col tile exceeds workgroup limit".into());
                }
                Ok(())
            }
            Algorithm::Winograd => {
                gemm_tiles()?;
                if shape.filter_h != 3 || shape.filter_w != 3 || shape.pad != 1 || shape.stride != 1
                {
                    return Err(Error::Unsupported(
                        "winograd F(2x2,3x3) needs a 3x3 filter with pad 1 and stride 1".into(),
                    ));
                }
                Ok(())
            }
            Algorithm::FusedUnroll => {
                tiles_divide()?;
                if self.tile_x * self.tile_y > MAX_WORKGROUP_THREADS {
                    return bad("fused tile exceeds workgroup limit".into());
                }
                if self.gemm_tile_m == 0 || !shape.out_channels.is_multiple_of(self.gemm_tile_m) {
                    return bad(format!(
                        "tile_m {} must divide K={}",
                        self.gemm_tile_m, shape.out_channels
                    ));
                }
                Ok(())
            }
            Algorithm::Direct => {
                tiles_divide()?;
                if self.tile_x * self.tile_y > MAX_WORKGROUP_THREADS {
                    return bad("direct tile exceeds workgroup limit".into());
                }
                let o = self.out_channels_per_thread;
                if o == 0 || !shape.out_channels.is_multiple_of(o) {
                    return bad(format!(
                        "out_channels_per_thread {o} must divide K={}",
                        shape.out_channels
                    ));
                }
                Ok(())
            }
            Algorithm::Ilpm => {
                tiles_divide()?;
                let w = self.ilpm_wg_channels(shape);
                if w == 0 || w > MAX_WORKGROUP_THREADS {
                    return bad(format!("ilpm workgroup width {w} out of range"));
                }
                if !shape.out_channels.is_multiple_of(w) {
                    return bad(format!(
                        "K={} is not a multiple of the workgroup width {w}",
                        shape.out_channels
                    ));
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        assert_eq!(
            "direct_cache".parse::<Algorithm>().unwrap(),
            Algorithm::Direct
        );
        assert_eq!("ilpm".parse::<Algorithm>().unwrap(), Algorithm::Ilpm);
        assert!("fft".parse::<Algorithm>().is_err());
    }

    #[test]
    fn validation_rules() {
        let s = ConvShape::same3x3(8, 16, 14, 14).unwrap();
        assert!(AlgoConfig::direct(true, 3, 7, 7).validate(&s).is_err());
        assert!(AlgoConfig::direct(true, 4, 7, 7).validate(&s).is_ok());
        assert!(AlgoConfig::direct(true, 4, 4, 7).validate(&s).is_err());
        assert!(AlgoConfig::ilpm(7, 7, false).validate(&s).is_ok());
        let odd = AlgoConfig {
            wg_channels: Some(5),
            ..AlgoConfig::ilpm(7, 7, false)
        };
        assert!(odd.validate(&s).is_err());
        let s5 = ConvShape::new(8, 8, 7, 7, 5, 5, 2, 1).unwrap();
        assert!(matches!(
            AlgoConfig::default_for(Algorithm::Winograd, &s5).validate(&s5),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn defaults_are_valid_on_resnet_layers() {
        for hw in [56, 28, 14, 7] {
            let s = ConvShape::same3x3(16, 16, hw, hw).unwrap();
            for a in Algorithm::KERNELS {
                AlgoConfig::default_for(a, &s).validate(&s).unwrap();
            }
        }
    }
}
