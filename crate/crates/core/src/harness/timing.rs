use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fxp::{latency_cycles, throughput_bps};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub k: usize,
    pub t_max: usize,
    pub f_clk_hz: f64,
    pub bits_per_symbol: u32,
    pub cycles_per_iteration: usize,
    pub latency_cycles: usize,
    pub throughput_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn find(&self, k: usize, t_max: usize, f_clk_hz: f64, bits_per_symbol: u32) -> Option<&TimingRow> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.t_max == t_max && r.f_clk_hz == f_clk_hz && r.bits_per_symbol == bits_per_symbol)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,t_max,f_clk_hz,bits_per_symbol,cycles_per_iteration,latency_cycles,throughput_mbps\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                r.k, r.t_max, r.f_clk_hz, r.bits_per_symbol, r.cycles_per_iteration, r.latency_cycles, r.throughput_mbps
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Latency and throughput for every combination of the inputs and both
/// BPSK (1 bit) and QPSK (2 bits).
pub fn timing_report(k_list: &[usize], t_max_list: &[usize], f_clk_list: &[f64]) -> TimingTable {
    let mut rows = Vec::new();
    for &k in k_list {
        for &t_max in t_max_list {
            for &f in f_clk_list {
                for bits in [1, 2] {
                    rows.push(TimingRow {
                        k,
                        t_max,
                        f_clk_hz: f,
                        bits_per_symbol: bits,
                        cycles_per_iteration: latency_cycles(k, 1),
                        latency_cycles: latency_cycles(k, t_max),
                        throughput_mbps: throughput_bps(k, t_max, f, bits) / 1e6,
                    });
                }
            }
        }
    }
    TimingTable { rows }
}
