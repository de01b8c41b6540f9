use std::collections::BTreeMap;

/// Metrics of one simulated launch (or the sum over a kernel pipeline).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimMetrics {
    pub global_read_bytes_raw: u64,
    pub global_read_bytes_post_l2: u64,
    pub global_write_bytes: u64,
    /// DRAM read bytes split by buffer name.
    pub post_l2_by_buffer: BTreeMap<String, u64>,
    pub global_transactions: u64,
    pub shared_bytes_per_wg: u64,
    pub bank_conflict_extra_cycles: u64,
    /// Barrier executions per workgroup.
    pub barrier_count: u64,
    /// Warp-level instruction counts.
    pub vector_inst: u64,
    pub scalar_inst: u64,
    pub max_live_regs: u64,
    pub wavefronts: u64,
    pub workgroups_per_cu: u64,
    pub cycles: u64,
    pub alu_busy_fraction: f64,
    pub mem_unit_busy_fraction: f64,
}

pub const CSV_HEADER: &str =
    "kernel,global_read_raw,global_read_post_l2,global_write,shared_per_wg,\
bank_extra_cycles,barriers,vector_inst,scalar_inst,max_live_regs,cycles,alu_busy,mem_busy";

impl SimMetrics {
    /// One CSV row in [`CSV_HEADER`] order.
    pub fn csv_row(&self, kernel: &str) -> String {
        format!(
            "{kernel},{},{},{},{},{},{},{},{},{},{},{:.4},{:.4}",
            self.global_read_bytes_raw,
            self.global_read_bytes_post_l2,
            self.global_write_bytes,
            self.shared_bytes_per_wg,
            self.bank_conflict_extra_cycles,
            self.barrier_count,
            self.vector_inst,
            self.scalar_inst,
            self.max_live_regs,
            self.cycles,
            self.alu_busy_fraction,
            self.mem_unit_busy_fraction
        )
    }

    /// Kernels launched back to back: traffic, instructions and cycles add;
    /// busy fractions are cycle-weighted; per-workgroup figures take the max.
    pub fn sequence(parts: &[SimMetrics]) -> SimMetrics {
        let mut s = SimMetrics::default();
        let mut alu = 0.0;
        let mut mem = 0.0;
        for p in parts {
            s.global_read_bytes_raw += p.global_read_bytes_raw;
            s.global_read_bytes_post_l2 += p.global_read_bytes_post_l2;
            s.global_write_bytes += p.global_write_bytes;
            for (k, v) in &p.post_l2_by_buffer {
                *s.post_l2_by_buffer.entry(k.clone()).or_default() += v;
            }
            s.global_transactions += p.global_transactions;
            s.shared_bytes_per_wg = s.shared_bytes_per_wg.max(p.shared_bytes_per_wg);
            s.bank_conflict_extra_cycles += p.bank_conflict_extra_cycles;
            s.barrier_count += p.barrier_count;
            s.vector_inst += p.vector_inst;
            s.scalar_inst += p.scalar_inst;
            s.max_live_regs = s.max_live_regs.max(p.max_live_regs);
            s.wavefronts += p.wavefronts;
            s.workgroups_per_cu = s.workgroups_per_cu.max(p.workgroups_per_cu);
            s.cycles += p.cycles;
            alu += p.alu_busy_fraction * p.cycles as f64;
            mem += p.mem_unit_busy_fraction * p.cycles as f64;
        }
        if s.cycles > 0 {
            s.alu_busy_fraction = alu / s.cycles as f64;
            s.mem_unit_busy_fraction = mem / s.cycles as f64;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_row_width() {
        let row = SimMetrics::default().csv_row("k");
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        assert!(CSV_HEADER.starts_with("kernel,global_read_raw,global_read_post_l2,global_write,"));
        assert!(CSV_HEADER.ends_with("cycles,alu_busy,mem_busy"));
    }

    #[test]
    fn sequence_weights_busy_by_cycles() {
        let a = SimMetrics {
            cycles: 100,
            alu_busy_fraction: 1.0,
            vector_inst: 3,
            ..Default::default()
        };
        let b = SimMetrics {
            cycles: 300,
            alu_busy_fraction: 0.0,
            vector_inst: 4,
            ..Default::default()
        };
        let s = SimMetrics::sequence(&[a, b]);
        assert_eq!(s.cycles, 400);
        assert_eq!(s.vector_inst, 7);
        assert!((s.alu_busy_fraction - 0.25).abs() < 1e-12);
    }
}
