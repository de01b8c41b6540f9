//! Oracle comparison of every algorithm variant on the ResNet layers.

use std::fmt::Write as _;

use crate::algos::{self, ilpm_conv};
use crate::config::Algorithm;
use crate::error::Result;
use crate::layers::LayerSpec;
use crate::oracle::{max_rel_error, oracle_conv};
use crate::report::{variant_config, VARIANTS};
use crate::shape::ConvShape;
use crate::tensor::{Layout, Tensor};

/// Largest accepted relative error against the oracle.
pub fn tolerance(algorithm: Algorithm) -> f64 {
    match algorithm {
        Algorithm::Winograd => 1e-3,
        _ => 1e-4,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub scale: usize,
    pub seed: u64,
    /// Hands ILP-M the filter bank in its original KCRS order instead of the
    /// CRSK order it requires.
    pub ilpm_kcrs_filters: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyCase {
    pub layer: &'static str,
    pub variant: &'static str,
    pub shape: ConvShape,
    pub config: String,
    pub seed: u64,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl VerifyCase {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }

    /// Everything needed to reproduce the case, on one line.
    pub fn dump(&self) -> String {
        let s = &self.shape;
        format!(
            "layer={} variant={} C={} K={} H={} W={} seed={} config=[{}] max_rel_error={:.3e} tolerance={:.0e}",
            self.layer,
            self.variant,
            s.in_channels,
            s.out_channels,
            s.height,
            s.width,
            self.seed,
            self.config,
            self.max_rel_error,
            self.tolerance
        )
    }
}

/// Operand seeds for one layer, so each layer draws different data.
pub fn layer_seeds(seed: u64, layer: &LayerSpec) -> (u64, u64) {
    let base = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (layer.height as u64) << 32;
    (base, base.wrapping_add(1))
}

/// Runs every variant on random operands of one layer at the requested
/// channel scale and compares each against the oracle.
pub fn verify_layer(layer: &LayerSpec, opts: &VerifyOptions) -> Result<Vec<VerifyCase>> {
    let shape = layer.scaled(opts.scale)?;
    let (si, sf) = layer_seeds(opts.seed, layer);
    let input = Tensor::random(
        Layout::Chw,
        &[shape.in_channels, shape.height, shape.width],
        si,
    );
    let filters = Tensor::random(
        Layout::Kcrs,
        &[shape.out_channels, shape.in_channels, 3, 3],
        sf,
    );
    let expected = oracle_conv(&input, &filters, &shape)?.output;
    let mut cases = Vec::new();
    for variant in VARIANTS {
        let cfg = variant_config(variant, &shape)?;
        let out = if cfg.algorithm == Algorithm::Ilpm && opts.ilpm_kcrs_filters {
            ilpm_conv(&input, &filters, &shape, &cfg)?
        } else {
            algos::run(&cfg, &input, &filters, &shape)?
        };
        cases.push(VerifyCase {
            layer: layer.name,
            variant,
            shape,
            config: cfg.describe(),
            seed: opts.seed,
            max_rel_error: max_rel_error(out.output.data(), expected.data()),
            tolerance: tolerance(cfg.algorithm),
        });
    }
    Ok(cases)
}

/// Per-variant worst error over `cases`, one `variant max_rel_error` line each.
pub fn summary(cases: &[VerifyCase]) -> String {
    let mut s = String::new();
    for variant in VARIANTS {
        let worst = cases
            .iter()
            .filter(|c| c.variant == variant)
            .map(|c| c.max_rel_error)
            .fold(None, |a: Option<f64>, e| Some(a.map_or(e, |a| a.max(e))));
        if let Some(w) = worst {
            let ok = cases
                .iter()
                .filter(|c| c.variant == variant)
                .all(VerifyCase::passed);
            let _ = writeln!(
                s,
                "{variant:<15} max_rel_error={w:.3e} {}",
                if ok { "ok" } else { "FAIL" }
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn small_layer_passes() {
        let opts = VerifyOptions {
            scale: 8,
            seed: 3,
            ilpm_kcrs_filters: false,
        };
        let cases = verify_layer(&LayerSpec::by_name("conv5.x").unwrap(), &opts).unwrap();
        assert_eq!(cases.len(), VARIANTS.len());
        assert!(cases.iter().all(VerifyCase::passed), "{}", summary(&cases));
        assert!(summary(&cases).lines().all(|l| l.ends_with("ok")));
    }

    #[test]
    fn kcrs_filters_are_rejected_by_ilpm() {
        let opts = VerifyOptions {
            scale: 8,
            seed: 3,
            ilpm_kcrs_filters: true,
        };
        let r = verify_layer(&LayerSpec::by_name("conv5.x").unwrap(), &opts);
        assert!(matches!(r, Err(Error::Layout(_))));
    }
}
