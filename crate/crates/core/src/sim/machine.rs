use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Simulated device. One cycle is one nanosecond at the nominal 1 GHz
/// clock, so `global_bytes_per_cycle` reads as GB/s.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineConfig {
    pub name: String,
    pub warp_size: u32,
    pub schedulers_per_cu: u32,
    pub max_warps_per_cu: u32,
    /// 32-bit registers per CU, counted per lane.
    pub regfile_per_cu: u32,
    pub shared_per_cu: u32,
    pub num_cus: u32,
    /// Vector ALU lanes per CU, split evenly across the schedulers.
    pub alus_per_cu: u32,
    pub lat_alu: u32,
    pub lat_shared: u32,
    /// Load latency when every line hits in L2.
    pub lat_l2: u32,
    /// Load latency when any line misses L2.
    pub lat_global: u32,
    pub global_bytes_per_cycle: f64,
    pub banks: u32,
    pub l2_lines: u32,
    pub l2_line_bytes: u32,
    pub issue_width: u32,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            name: "default".into(),
            warp_size: 32,
            schedulers_per_cu: 4,
            max_warps_per_cu: 40,
            regfile_per_cu: 65536,
            shared_per_cu: 65536,
            num_cus: 1,
            alus_per_cu: 64,
            lat_alu: 4,
            lat_shared: 20,
            lat_l2: 120,
            lat_global: 400,
            global_bytes_per_cycle: 64.0,
            banks: 32,
            l2_lines: 1024,
            l2_line_bytes: 64,
            issue_width: 1,
        }
    }
}

impl MachineConfig {
    /// Discrete GPU: 60 CUs of 64 ALUs, 1024 GB/s.
    pub fn dedicated() -> Self {
        MachineConfig {
            name: "dedicated".into(),
            num_cus: 60,
            alus_per_cu: 64,
            global_bytes_per_cycle: 1024.0,
            l2_lines: 4096,
            ..Default::default()
        }
    }

    /// Integrated GPU: 8 CUs of 64 ALUs sharing 25 GB/s with the host.
    pub fn integrated() -> Self {
        MachineConfig {
            name: "integrated".into(),
            num_cus: 8,
            alus_per_cu: 64,
            global_bytes_per_cycle: 25.0,
            l2_lines: 1024,
            ..Default::default()
        }
    }

    /// Embedded GPU: 10 cores of 24 ALUs, 33.3 GB/s.
    pub fn embedded() -> Self {
        MachineConfig {
            name: "embedded".into(),
            num_cus: 10,
            alus_per_cu: 24,
            schedulers_per_cu: 3,
            max_warps_per_cu: 24,
            regfile_per_cu: 32768,
            shared_per_cu: 32768,
            global_bytes_per_cycle: 33.3,
            l2_lines: 512,
            ..Default::default()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "dedicated" => Some(Self::dedicated()),
            "integrated" => Some(Self::integrated()),
            "embedded" => Some(Self::embedded()),
            _ => None,
        }
    }

    /// Vector lanes behind one scheduler.
    pub fn lanes_per_scheduler(&self) -> u32 {
        (self.alus_per_cu / self.schedulers_per_cu).max(1)
    }

    /// Cycles one warp-wide vector instruction occupies its ALU pipe.
    pub fn alu_occupancy(&self) -> u64 {
        self.warp_size.div_ceil(self.lanes_per_scheduler()) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("warp_size", self.warp_size),
            ("schedulers_per_cu", self.schedulers_per_cu),
            ("max_warps_per_cu", self.max_warps_per_cu),
            ("regfile_per_cu", self.regfile_per_cu),
            ("shared_per_cu", self.shared_per_cu),
            ("num_cus", self.num_cus),
            ("alus_per_cu", self.alus_per_cu),
            ("lat_alu", self.lat_alu),
            ("lat_shared", self.lat_shared),
            ("lat_l2", self.lat_l2),
            ("lat_global", self.lat_global),
            ("banks", self.banks),
            ("l2_lines", self.l2_lines),
            ("l2_line_bytes", self.l2_line_bytes),
            ("issue_width", self.issue_width),
        ];
        for (k, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("machine field {k} must be positive")));
            }
        }
        if self.lat_l2 > self.lat_global {
            return Err(Error::Config("lat_l2 must not exceed lat_global".into()));
        }
        if !(self.global_bytes_per_cycle > 0.0 && self.global_bytes_per_cycle.is_finite()) {
            return Err(Error::Config(
                "global_bytes_per_cycle must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Parses `key = value` lines over the default machine. `#` starts a
    /// comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = MachineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let int = || {
                v.parse::<u32>()
                    .map_err(|e| Error::Parse(format!("line {}: {k}: {e}", n + 1)))
            };
            match k {
                "name" => m.name = v.to_string(),
                "warp_size" => m.warp_size = int()?,
                "schedulers_per_cu" => m.schedulers_per_cu = int()?,
                "max_warps_per_cu" => m.max_warps_per_cu = int()?,
                "regfile_per_cu" => m.regfile_per_cu = int()?,
                "shared_per_cu" => m.shared_per_cu = int()?,
                "num_cus" => m.num_cus = int()?,
                "alus_per_cu" => m.alus_per_cu = int()?,
                "lat_alu" => m.lat_alu = int()?,
                "lat_shared" => m.lat_shared = int()?,
                "lat_l2" => m.lat_l2 = int()?,
                "lat_global" => m.lat_global = int()?,
                "global_bytes_per_cycle" => {
                    m.global_bytes_per_cycle = v
                        .parse()
                        .map_err(|e| Error::Parse(format!("line {}: {k}: {e}", n + 1)))?
                }
                "banks" => m.banks = int()?,
                "l2_lines" => m.l2_lines = int()?,
                "l2_line_bytes" => m.l2_line_bytes = int()?,
                "issue_width" => m.issue_width = int()?,
                other => return Err(Error::Parse(format!("line {}: unknown key {other}", n + 1))),
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Inverse of [`MachineConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        for (k, v) in [
            ("warp_size", self.warp_size),
            ("schedulers_per_cu", self.schedulers_per_cu),
            ("max_warps_per_cu", self.max_warps_per_cu),
            ("regfile_per_cu", self.regfile_per_cu),
            ("shared_per_cu", self.shared_per_cu),
            ("num_cus", self.num_cus),
            ("alus_per_cu", self.alus_per_cu),
            ("lat_alu", self.lat_alu),
            ("lat_shared", self.lat_shared),
            ("lat_l2", self.lat_l2),
            ("lat_global", self.lat_global),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(
            s,
            "global_bytes_per_cycle = {}",
            self.global_bytes_per_cycle
        );
        for (k, v) in [
            ("banks", self.banks),
            ("l2_lines", self.l2_lines),
            ("l2_line_bytes", self.l2_line_bytes),
            ("issue_width", self.issue_width),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// The three built-in devices.
pub fn machine_presets() -> Vec<MachineConfig> {
    vec![
        MachineConfig::dedicated(),
        MachineConfig::integrated(),
        MachineConfig::embedded(),
    ]
}
