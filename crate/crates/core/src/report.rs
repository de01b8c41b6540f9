//! Layer benchmark reports: simulated metrics per kernel next to analytic
//! counts, as CSV and as plot data.

use std::fmt::Write as _;

use crate::algos::{analytic_counts, StageCounts};
use crate::config::{AlgoConfig, Algorithm};
use crate::error::{Error, Result};
use crate::layers::LayerSpec;
use crate::par;
use crate::shape::ConvShape;
use crate::sim::{simulate_config, MachineConfig, SimMetrics, CSV_HEADER};

pub const REPORT_VERSION: &str = "convlab-report v1";

/// Algorithm variants a report can contain, in default report order.
pub const VARIANTS: [&str; 6] = [
    "im2col",
    "fused_unroll",
    "winograd",
    "direct_cache",
    "direct_nocache",
    "ilpm",
];

/// Analytic columns appended after the simulator columns.
pub const ANALYTIC_HEADER: &str =
    "analytic_read,analytic_write,analytic_multiplies,analytic_adds,analytic_barriers";

/// Expands a user-facing variant name. `direct` means both filter caching
/// choices and `all` means every variant.
pub fn expand_variant(name: &str) -> Result<Vec<&'static str>> {
    match name {
        "all" => Ok(VARIANTS.to_vec()),
        "direct" => Ok(vec!["direct_cache", "direct_nocache"]),
        other => {
            let a: Algorithm = other.parse()?;
            VARIANTS
                .iter()
                .copied()
                .find(|v| *v == other || (a != Algorithm::Direct && *v == a.name()))
                .map(|v| vec![v])
                .ok_or_else(|| Error::Parse(format!("unknown algorithm '{other}'")))
        }
    }
}

/// The default configuration of a report variant on `shape`.
pub fn variant_config(variant: &str, shape: &ConvShape) -> Result<AlgoConfig> {
    let algorithm: Algorithm = variant.parse()?;
    if algorithm == Algorithm::Oracle {
        return Err(Error::Unsupported(
            "the oracle has no kernels to report".into(),
        ));
    }
    let mut cfg = AlgoConfig::default_for(algorithm, shape);
    cfg.cache_filter = variant == "direct_cache";
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRequest {
    pub layers: Vec<LayerSpec>,
    pub variants: Vec<&'static str>,
    pub machines: Vec<MachineConfig>,
    /// Channel cap for the simulated shapes; analytic counts use full channels.
    pub scale: usize,
}

/// One kernel (or the `total` of a pipeline) of one layer, variant and machine.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub layer: &'static str,
    pub variant: &'static str,
    pub machine: String,
    pub kernel: String,
    /// Position of the kernel in its pipeline; the total sorts last.
    pub kernel_index: usize,
    pub config: AlgoConfig,
    pub metrics: SimMetrics,
    pub analytic: StageCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub scale: usize,
    pub rows: Vec<ReportRow>,
}

/// Simulates every (layer, variant, machine) combination of `req`. Any
/// failure aborts the whole report so no combination is silently missing.
pub fn build_report(req: &ReportRequest) -> Result<Report> {
    let mut jobs = Vec::new();
    for layer in &req.layers {
        for &variant in &req.variants {
            for machine in &req.machines {
                jobs.push((*layer, variant, machine));
            }
        }
    }
    let results = par::map(&jobs, |(layer, variant, machine)| {
        job_rows(layer, variant, machine, req.scale)
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        (a.layer, &a.machine, a.variant, a.kernel_index).cmp(&(
            b.layer,
            &b.machine,
            b.variant,
            b.kernel_index,
        ))
    });
    Ok(Report {
        scale: req.scale,
        rows,
    })
}

fn job_rows(
    layer: &LayerSpec,
    variant: &'static str,
    machine: &MachineConfig,
    scale: usize,
) -> Result<Vec<ReportRow>> {
    let shape = layer.scaled(scale)?;
    let cfg = variant_config(variant, &shape)?;
    let full = layer.shape();
    let counts = analytic_counts(&variant_config(variant, &full)?, &full)?;
    let sim = simulate_config(&cfg, &shape, machine, 1)?;
    let row = |kernel: &str, kernel_index: usize, metrics: &SimMetrics, analytic: StageCounts| {
        ReportRow {
            layer: layer.name,
            variant,
            machine: machine.name.clone(),
            kernel: kernel.to_string(),
            kernel_index,
            config: cfg,
            metrics: metrics.clone(),
            analytic,
        }
    };
    let mut rows = Vec::new();
    for (i, (name, m)) in sim.kernels.iter().enumerate() {
        let stage = counts
            .stage(name)
            .cloned()
            .ok_or_else(|| Error::Exec(format!("kernel {name} has no analytic stage")))?;
        rows.push(row(name, i, m, stage));
    }
    let total = StageCounts {
        name: "total".into(),
        multiplies: counts.multiplies,
        padded_multiplies: counts.padded_multiplies,
        adds: counts.adds,
        read_bytes: counts.global_read_bytes_analytic,
        write_bytes: counts.global_write_bytes_analytic,
        index_ops: counts.stages.iter().map(|s| s.index_ops).sum(),
        barriers_per_workgroup: counts.stages.iter().map(|s| s.barriers_per_workgroup).sum(),
        workgroups: counts.stages.iter().map(|s| s.workgroups).sum(),
    };
    rows.push(row("total", sim.kernels.len(), &sim.total, total));
    Ok(rows)
}

impl Report {
    pub fn header() -> String {
        format!("layer,algorithm,machine,{CSV_HEADER},{ANALYTIC_HEADER},config")
    }

    /// Version line, column header, then one row per kernel and per total.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {REPORT_VERSION} scale={}", self.scale);
        let _ = writeln!(s, "{}", Self::header());
        for r in &self.rows {
            let a = &r.analytic;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.layer,
                r.variant,
                r.machine,
                r.metrics.csv_row(&r.kernel),
                a.read_bytes,
                a.write_bytes,
                a.multiplies,
                a.adds,
                a.barriers_per_workgroup,
                r.config.describe(),
            );
        }
        s
    }

    /// Two columns, `algorithm cycles`, one block per machine and layer.
    /// Blocks are separated by a blank line and titled by a comment.
    pub fn plot_data(&self) -> String {
        let mut s = String::new();
        let mut block: Option<(&str, &str)> = None;
        for r in self.rows.iter().filter(|r| r.kernel == "total") {
            let key = (r.machine.as_str(), r.layer);
            if block != Some(key) {
                if block.is_some() {
                    s.push('\n');
                }
                let _ = writeln!(s, "# {} {}", r.machine, r.layer);
                block = Some(key);
            }
            let _ = writeln!(s, "{} {}", r.variant, r.metrics.cycles);
        }
        s
    }

    /// The total row of one combination.
    pub fn total(&self, layer: &str, variant: &str, machine: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.kernel == "total" && r.layer == layer && r.variant == variant && r.machine == machine
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_expand() {
        assert_eq!(
            expand_variant("direct").unwrap(),
            ["direct_cache", "direct_nocache"]
        );
        assert_eq!(expand_variant("all").unwrap().len(), 6);
        assert_eq!(expand_variant("ilp-m").unwrap(), ["ilpm"]);
        assert_eq!(expand_variant("direct_cache").unwrap(), ["direct_cache"]);
        assert!(expand_variant("fft").is_err());
        assert!(expand_variant("oracle").is_err());
    }

    #[test]
    fn variant_config_sets_filter_caching() {
        let s = ConvShape::same3x3(8, 8, 7, 7).unwrap();
        assert!(variant_config("direct_cache", &s).unwrap().cache_filter);
        assert!(!variant_config("direct_nocache", &s).unwrap().cache_filter);
        assert!(variant_config("oracle", &s).is_err());
    }
}
