//! Bit-exact golden model of the linear PE-array datapath.
//!
//! All arithmetic is on two's-complement integers. Quantization truncates toward
//! negative infinity; each format either wraps or saturates on overflow.
//!
//! Hardware units: the symbol iterate is scaled so that the constellation hull
//! is `[-1, 1]` per component (QPSK is multiplied by `sqrt(2)`), so the pilot
//! and all projection outputs are exact in the 6-bit symbol format.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector, C64};
use crate::model::{Constellation, ConstellationKind, ReceivedBlock};
use crate::prox::{channel_estimate, init_s, preprocess, PreprocessedMatrix, ProxParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Overflow {
    Wrap,
    Saturate,
}

/// Signed fixed-point format with `word_bits` total bits, `frac_bits` of them fractional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub word_bits: u32,
    pub frac_bits: u32,
    pub overflow: Overflow,
}

/// Symbol iterate entries.
pub const S_FMT: FixedPointFormat = FixedPointFormat::new(6, 3, Overflow::Saturate);
/// Preprocessed-matrix entries.
pub const G_FMT: FixedPointFormat = FixedPointFormat::new(12, 11, Overflow::Saturate);
/// Raw multiplier outputs.
pub const PRODUCT_FMT: FixedPointFormat = FixedPointFormat::new(18, 14, Overflow::Wrap);
/// Cross-term adder and subtractor.
pub const CROSS_FMT: FixedPointFormat = FixedPointFormat::new(15, 11, Overflow::Wrap);
/// MAC accumulator and projection-unit adders.
pub const ACC_FMT: FixedPointFormat = FixedPointFormat::new(15, 11, Overflow::Saturate);
/// The `+-1/rho` thresholds.
pub const INV_RHO_FMT: FixedPointFormat = FixedPointFormat::new(12, 11, Overflow::Saturate);

impl FixedPointFormat {
    pub const fn new(word_bits: u32, frac_bits: u32, overflow: Overflow) -> Self {
        Self { word_bits, frac_bits, overflow }
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_bits < self.frac_bits + 1 || self.word_bits > 62 {
            return Err(Error::Parameter(format!(
                "invalid fixed-point format {}b/{}f",
                self.word_bits, self.frac_bits
            )));
        }
        Ok(())
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.word_bits - 1))
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.word_bits - 1)) - 1
    }

    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Applies the overflow rule to an unbounded raw value.
    pub fn fit(&self, raw: i64) -> i64 {
        match self.overflow {
            Overflow::Saturate => raw.clamp(self.min_raw(), self.max_raw()),
            Overflow::Wrap => {
                let shift = 64 - self.word_bits;
                (raw << shift) >> shift
            }
        }
    }
}

/// A fixed-point word: `raw * 2^-frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxpWord {
    raw: i64,
    fmt: FixedPointFormat,
}

impl FxpWord {
    /// Builds a word, applying the format's overflow rule to `raw`.
    pub fn from_raw(raw: i64, fmt: FixedPointFormat) -> Self {
        Self { raw: fmt.fit(raw), fmt }
    }

    pub fn zero(fmt: FixedPointFormat) -> Self {
        Self { raw: 0, fmt }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn fmt(&self) -> FixedPointFormat {
        self.fmt
    }

    pub fn value(&self) -> f64 {
        self.raw as f64 * self.fmt.lsb()
    }

    pub fn is_negative(&self) -> bool {
        self.raw < 0
    }
}

impl fmt::Display for FxpWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.raw)
    }
}

/// Scales by `2^frac_bits`, truncates toward negative infinity and applies the
/// overflow rule. NaN maps to zero; infinities saturate (or wrap from the clamp).
pub fn quantize(x: f64, fmt: FixedPointFormat) -> FxpWord {
    let scaled = (x * (fmt.frac_bits as f64).exp2()).floor();
    let raw = if scaled.is_nan() {
        0
    } else {
        // the clamp keeps the cast exact; 2^62 exceeds every supported word
        scaled.clamp(-(2f64.powi(62)), 2f64.powi(62)) as i64
    };
    FxpWord::from_raw(raw, fmt)
}

/// Complex pair of fixed-point words in a shared format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxpComplex {
    pub re: FxpWord,
    pub im: FxpWord,
}

impl FxpComplex {
    pub fn from_raw(re: i64, im: i64, fmt: FixedPointFormat) -> Self {
        Self { re: FxpWord::from_raw(re, fmt), im: FxpWord::from_raw(im, fmt) }
    }

    pub fn zero(fmt: FixedPointFormat) -> Self {
        Self::from_raw(0, 0, fmt)
    }

    pub fn quantize(z: C64, fmt: FixedPointFormat) -> Self {
        Self { re: quantize(z.re, fmt), im: quantize(z.im, fmt) }
    }

    pub fn value(&self) -> C64 {
        C64::new(self.re.value(), self.im.value())
    }

    #[cfg(test)]
    fn raw_pair(&self) -> (i64, i64) {
        (self.re.raw, self.im.raw)
    }
}

/// One complex multiply-accumulate: 18-bit products, truncation to 15 bits,
/// wrapping cross-term add/subtract, saturating accumulation.
pub fn mac_step(acc: FxpComplex, g: FxpComplex, s: FxpComplex) -> FxpComplex {
    acc_add(acc, cross_terms(g, s))
}

fn products(g: FxpComplex, s: FxpComplex) -> [i64; 4] {
    let fit = |x: i64| PRODUCT_FMT.fit(x);
    [
        fit(g.re.raw * s.re.raw),
        fit(g.im.raw * s.im.raw),
        fit(g.re.raw * s.im.raw),
        fit(g.im.raw * s.re.raw),
    ]
}

fn combine(p: [i64; 4]) -> FxpComplex {
    let drop = PRODUCT_FMT.frac_bits - CROSS_FMT.frac_bits;
    let t = p.map(|x| CROSS_FMT.fit(x >> drop));
    FxpComplex::from_raw(t[0] - t[1], t[2] + t[3], CROSS_FMT)
}

fn cross_terms(g: FxpComplex, s: FxpComplex) -> FxpComplex {
    combine(products(g, s))
}

fn acc_add(acc: FxpComplex, x: FxpComplex) -> FxpComplex {
    FxpComplex::from_raw(acc.re.raw + x.re.raw, acc.im.raw + x.im.raw, ACC_FMT)
}

/// The quantized `1/rho` threshold.
pub fn inv_rho(rho_log2: u8) -> FxpWord {
    quantize((-(rho_log2 as f64)).exp2(), INV_RHO_FMT)
}

/// Projection of `rho * q_bar` onto `[-1, 1]` from the sign bits of
/// `q_bar -+ 1/rho`; the interior branch is the saturated left shift reduced to
/// the 6-bit symbol format by dropping LSBs.
pub fn projection_unit(q_bar: FxpWord, rho_log2: u8, inv_rho: FxpWord) -> FxpWord {
    let one = 1i64 << S_FMT.frac_bits;
    let upper = ACC_FMT.fit(q_bar.raw - inv_rho.raw);
    let lower = ACC_FMT.fit(q_bar.raw + inv_rho.raw);
    if upper >= 0 {
        FxpWord::from_raw(one, S_FMT)
    } else if lower < 0 {
        FxpWord::from_raw(-one, S_FMT)
    } else {
        let shifted = ACC_FMT.fit(q_bar.raw.saturating_mul(1i64 << rho_log2.min(40)));
        FxpWord::from_raw(shifted >> (ACC_FMT.frac_bits - S_FMT.frac_bits), S_FMT)
    }
}

/// Geometry and parameters of the PE array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeArrayConfig {
    /// Number of PEs, `K + 1`.
    pub n: usize,
    pub t_max: usize,
    pub rho_log2: u8,
    pub pipeline_stages: usize,
    pub constellation: ConstellationKind,
}

impl PeArrayConfig {
    pub fn new(n: usize, t_max: usize, rho_log2: u8, constellation: ConstellationKind) -> Self {
        Self { n, t_max, rho_log2, pipeline_stages: 3, constellation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Parameter("the array needs at least two PEs".into()));
        }
        if self.t_max < 1 {
            return Err(Error::Parameter("t_max must be at least 1".into()));
        }
        if self.rho_log2 > 15 {
            return Err(Error::Parameter("rho_log2 must fit in 4 bits".into()));
        }
        if self.pipeline_stages != 3 {
            return Err(Error::Parameter("the MAC model has exactly three pipeline stages".into()));
        }
        Ok(())
    }

    /// `N` MAC issue cycles, the pipeline flush and one projection cycle.
    pub fn cycles_per_iteration(&self) -> usize {
        self.n + (self.pipeline_stages - 1) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Mac,
    Shift,
    Project,
    Idle,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Mac => "mac",
            Action::Shift => "shift",
            Action::Project => "project",
            Action::Idle => "idle",
        })
    }
}

/// What a PE consumed or produced in one cycle. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operands {
    None,
    /// `Ghat[row, col]` times `s[col]`.
    Mac { row: usize, col: usize, g: FxpComplex, s: FxpComplex },
    /// `s[col]` forwarded along the ring.
    Shift { col: usize, s: FxpComplex },
    /// Projection output.
    Output { s: FxpComplex },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// 1-based cycle, counted from the first recorded iteration.
    pub cycle: usize,
    /// 1-based PE index.
    pub pe: usize,
    pub action: Action,
    pub operands: Operands,
    /// Accumulator contents at the end of the cycle.
    pub acc: FxpComplex,
}

/// Per-cycle activity of every PE over one or more iterations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleTrace {
    pub records: Vec<CycleRecord>,
    /// Cycle count of each recorded iteration.
    pub iteration_cycles: Vec<usize>,
}

impl CycleTrace {
    /// Columns consumed by `pe` (1-based) in MAC cycles of the first iteration.
    pub fn operand_order(&self, pe: usize) -> Vec<(usize, usize)> {
        let first = self.iteration_cycles.first().copied().unwrap_or(0);
        self.records
            .iter()
            .filter(|r| r.pe == pe)
            .take(first)
            .filter_map(|r| match r.operands {
                Operands::Mac { row, col, .. } => Some((row, col)),
                _ => None,
            })
            .collect()
    }

    /// One line per record: `cycle,pe,action,re_operands,im_operands,acc`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("cycle,pe,action,re_operands,im_operands,acc\n");
        for r in &self.records {
            let (re, im) = match r.operands {
                Operands::None => ("-".to_string(), "-".to_string()),
                Operands::Mac { row, col, g, s } => (
                    format!("G[{row}|{col}]={} s[{col}]={}", g.re, s.re),
                    format!("G[{row}|{col}]={} s[{col}]={}", g.im, s.im),
                ),
                Operands::Shift { col, s } => (format!("s[{col}]={}", s.re), format!("s[{col}]={}", s.im)),
                Operands::Output { s } => (format!("out={}", s.re), format!("out={}", s.im)),
            };
            let _ = writeln!(out, "{},{},{},{},{},{}|{}", r.cycle, r.pe, r.action, re, im, r.acc.re, r.acc.im);
        }
        out
    }
}

/// Quantized preprocessed matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedMatrix {
    n: usize,
    data: Vec<FxpComplex>,
}

impl QuantizedMatrix {
    pub fn quantize(m: &ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("preprocessed matrix must be square".into()));
        }
        Ok(Self { n: m.rows(), data: m.as_slice().iter().map(|z| FxpComplex::quantize(*z, G_FMT)).collect() })
    }

    pub fn from_entries(n: usize, data: Vec<FxpComplex>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!("{} entries for a {n}x{n} matrix", data.len())));
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> FxpComplex {
        self.data[i * self.n + j]
    }
}

fn project_pair(q: FxpComplex, cfg: &PeArrayConfig) -> FxpComplex {
    let t = inv_rho(cfg.rho_log2);
    let re = projection_unit(q.re, cfg.rho_log2, t);
    let im = match cfg.constellation {
        ConstellationKind::Bpsk => FxpWord::zero(S_FMT),
        ConstellationKind::Qpsk => projection_unit(q.im, cfg.rho_log2, t),
    };
    FxpComplex { re, im }
}

fn check_dims(s_in: &[FxpComplex], g: &QuantizedMatrix, cfg: &PeArrayConfig) -> Result<()> {
    cfg.validate()?;
    if s_in.len() != cfg.n || g.n != cfg.n {
        return Err(Error::Dimension(format!(
            "array of {} PEs with a {}-vector and a {}x{} matrix",
            cfg.n,
            s_in.len(),
            g.n,
            g.n
        )));
    }
    Ok(())
}

/// Pipeline registers of one MAC: multiplier outputs and cross-term sums.
#[derive(Clone, Copy, Default)]
struct MacPipe {
    products: Option<[i64; 4]>,
    sum: Option<FxpComplex>,
}

/// One iteration of the input-cyclic array, cycle by cycle.
///
/// PE 1 holds the pilot and only forwards ring values. In MAC cycle `c`
/// (0-based) every PE `k` holds `s[(k + c) mod N]`, reads its rotated row
/// memory at address `c` and passes its ring value to PE `k - 1`.
pub fn pe_array_iteration(
    s_in: &[FxpComplex],
    g: &QuantizedMatrix,
    cfg: &PeArrayConfig,
    s_check: FxpComplex,
) -> Result<(Vec<FxpComplex>, CycleTrace)> {
    check_dims(s_in, g, cfg)?;
    let mut trace = CycleTrace::default();
    let out = run_array(s_in, g, cfg, s_check, Some(&mut trace));
    Ok((out, trace))
}

fn run_array(
    s_in: &[FxpComplex],
    g: &QuantizedMatrix,
    cfg: &PeArrayConfig,
    s_check: FxpComplex,
    mut trace: Option<&mut CycleTrace>,
) -> Vec<FxpComplex> {
    let n = cfg.n;
    // Rotated row memories: address c of PE k holds Ghat[k, (k + c) mod N].
    let memory: Vec<Vec<(usize, FxpComplex)>> =
        (0..n).map(|k| (0..n).map(|c| ((k + c) % n, g.get(k, (k + c) % n))).collect()).collect();
    // Ring registers with their source slot; PE 1 starts with the pilot.
    let mut ring: Vec<(usize, FxpComplex)> = s_in.iter().copied().enumerate().collect();
    ring[0].1 = s_check;
    let mut acc = vec![FxpComplex::zero(ACC_FMT); n];
    let mut pipe = vec![MacPipe::default(); n];
    let mut out = vec![FxpComplex::zero(S_FMT); n];
    let total = cfg.cycles_per_iteration();
    // cycle numbers continue across the iterations of one trace
    let offset: usize = trace.as_deref().map_or(0, |t| t.iteration_cycles.iter().sum());

    for cycle in 0..total {
        let issuing = cycle < n;
        for k in 0..n {
            let mut operands = Operands::None;
            let mut action = Action::Idle;
            if k > 0 {
                // stage 3 accumulates, stage 2 adds cross terms, stage 1 multiplies
                let p = &mut pipe[k];
                if let Some(x) = p.sum.take() {
                    acc[k] = acc_add(acc[k], x);
                }
                p.sum = p.products.take().map(combine);
                if issuing {
                    let (col, gv) = memory[k][cycle];
                    let (src, sv) = ring[k];
                    debug_assert_eq!(col, src);
                    p.products = Some(products(gv, sv));
                    action = Action::Mac;
                    operands = Operands::Mac { row: k + 1, col: col + 1, g: gv, s: sv };
                } else if cycle == total - 1 {
                    out[k] = project_pair(acc[k], cfg);
                    action = Action::Project;
                    operands = Operands::Output { s: out[k] };
                }
            } else if issuing {
                action = Action::Shift;
                operands = Operands::Shift { col: ring[0].0 + 1, s: ring[0].1 };
            } else if cycle == total - 1 {
                out[0] = s_check;
                action = Action::Project;
                operands = Operands::Output { s: s_check };
            }
            if let Some(t) = trace.as_deref_mut() {
                t.records.push(CycleRecord { cycle: offset + cycle + 1, pe: k + 1, action, operands, acc: acc[k] });
            }
        }
        if issuing {
            ring.rotate_left(1);
        }
    }
    if let Some(t) = trace {
        t.iteration_cycles.push(total);
    }
    out
}

/// Direct row-by-row evaluation of one iteration, accumulating row `k` from
/// column `k` onwards (the order in which PE `k` sees the ring).
pub fn direct_iteration(
    s_in: &[FxpComplex],
    g: &QuantizedMatrix,
    cfg: &PeArrayConfig,
    s_check: FxpComplex,
) -> Result<Vec<FxpComplex>> {
    check_dims(s_in, g, cfg)?;
    let n = cfg.n;
    let operand = |j: usize| if j == 0 { s_check } else { s_in[j] };
    let mut out = Vec::with_capacity(n);
    out.push(s_check);
    for k in 1..n {
        let mut acc = FxpComplex::zero(ACC_FMT);
        for j in (k..n).chain(0..k) {
            acc = mac_step(acc, g.get(k, j), operand(j));
        }
        out.push(project_pair(acc, cfg));
    }
    Ok(out)
}

/// Output of the fixed-point solver.
#[derive(Debug, Clone)]
pub struct FixedSolution {
    pub s_hat: ComplexVector,
    pub h_hat: ComplexVector,
    /// Final iterate in hardware units.
    pub s_q: Vec<FxpComplex>,
    pub pre: PreprocessedMatrix,
}

/// Scale from constellation units to hardware units.
fn hardware_scale(c: &Constellation) -> f64 {
    1.0 / c.hull_half_width()
}

/// Hard decision from the sign bits of a projection output.
pub fn sign_decision(s: FxpComplex, c: &Constellation) -> C64 {
    let target = C64::new(
        if s.re.is_negative() { -1.0 } else { 1.0 },
        match c.kind() {
            ConstellationKind::Bpsk => 0.0,
            ConstellationKind::Qpsk => {
                if s.im.is_negative() {
                    -1.0
                } else {
                    1.0
                }
            }
        },
    );
    c.nearest(target)
}

/// Converts the solver parameters to an array configuration.
pub fn array_config(n: usize, c: &Constellation, params: &ProxParams) -> Result<PeArrayConfig> {
    let rho_log2 = u8::try_from(params.rho_log2)
        .ok()
        .filter(|r| *r <= 15)
        .ok_or_else(|| Error::Parameter(format!("rho_log2 = {} is not a 4-bit shift", params.rho_log2)))?;
    let cfg = PeArrayConfig::new(n, params.t_max, rho_log2, c.kind());
    cfg.validate()?;
    Ok(cfg)
}

/// Fixed-point solver: floating-point preprocessing and initialisation, then
/// `t_max` bit-exact array iterations and sign-bit decisions.
pub fn solve_fixed(
    block: &ReceivedBlock,
    c: &Constellation,
    params: &ProxParams,
    s_check: C64,
) -> Result<FixedSolution> {
    run_fixed(block, c, params, s_check, None)
}

/// [`solve_fixed`] with the cycle trace of every iteration.
pub fn solve_fixed_traced(
    block: &ReceivedBlock,
    c: &Constellation,
    params: &ProxParams,
    s_check: C64,
) -> Result<(FixedSolution, CycleTrace)> {
    let mut trace = CycleTrace::default();
    let sol = run_fixed(block, c, params, s_check, Some(&mut trace))?;
    Ok((sol, trace))
}

fn run_fixed(
    block: &ReceivedBlock,
    c: &Constellation,
    params: &ProxParams,
    s_check: C64,
    mut trace: Option<&mut CycleTrace>,
) -> Result<FixedSolution> {
    let pre = preprocess(block.gram(), params)?;
    let s0 = init_s(block.gram(), s_check)?;
    let n = s0.len();
    let cfg = array_config(n, c, params)?;
    let g = QuantizedMatrix::quantize(&pre.ghat)?;
    let scale = hardware_scale(c);
    let pilot = FxpComplex::quantize(s_check * scale, S_FMT);
    let mut s: Vec<FxpComplex> = s0.iter().map(|z| FxpComplex::quantize(z * scale, S_FMT)).collect();
    if c.kind() == ConstellationKind::Bpsk {
        for z in &mut s {
            z.im = FxpWord::zero(S_FMT);
        }
    }
    s[0] = pilot;
    for _ in 0..cfg.t_max {
        s = run_array(&s, &g, &cfg, pilot, trace.as_deref_mut());
    }
    let mut hard: Vec<C64> = s.iter().map(|z| sign_decision(*z, c)).collect();
    hard[0] = s_check;
    let s_hat = ComplexVector::from_raw(hard);
    let h_hat = channel_estimate(block.y(), &s_hat)?;
    Ok(FixedSolution { s_hat, h_hat, s_q: s, pre })
}

/// Cycles for `t_max` iterations with `K` data slots.
pub fn latency_cycles(k: usize, t_max: usize) -> usize {
    t_max * (k + 4)
}

/// Data throughput in bit/s: `K` data symbols per block of `t_max (K + 4)` cycles.
pub fn throughput_bps(k: usize, t_max: usize, f_clk_hz: f64, bits_per_symbol: u32) -> f64 {
    bits_per_symbol as f64 * k as f64 * f_clk_hz / latency_cycles(k, t_max) as f64
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::random_matrix;
    use crate::model::{gen_rayleigh_channel, random_data_vector, transmit, TransmissionGroundTruth};
    use crate::prox::{solve, Mode};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_instance(n: usize, kind: ConstellationKind, seed: u64) -> (Vec<FxpComplex>, QuantizedMatrix, FxpComplex) {
        let mut r = rng::stream(seed);
        let raw = |r: &mut rng::Stream, f: FixedPointFormat| r.random_range(f.min_raw()..=f.max_raw());
        let g = QuantizedMatrix::from_entries(
            n,
            (0..n * n).map(|_| FxpComplex::from_raw(raw(&mut r, G_FMT), raw(&mut r, G_FMT), G_FMT)).collect(),
        )
        .unwrap();
        let s: Vec<FxpComplex> = (0..n)
            .map(|_| {
                let im = if kind == ConstellationKind::Bpsk { 0 } else { raw(&mut r, S_FMT) };
                FxpComplex::from_raw(raw(&mut r, S_FMT), im, S_FMT)
            })
            .collect();
        (s, g, FxpComplex::from_raw(8, if kind == ConstellationKind::Bpsk { 0 } else { 8 }, S_FMT))
    }

    #[test]
    fn quantize_examples() {
        let w = quantize(0.625, S_FMT);
        assert_eq!((w.raw(), w.value()), (5, 0.625));
        assert_eq!(quantize(4.2, S_FMT).value(), 3.875);
        assert_eq!(quantize(-9.0, S_FMT).value(), -4.0);
        // 15b/11f spans [-8, 8)
        assert_eq!(quantize(16.5, CROSS_FMT).value(), 0.5);
        assert_eq!(quantize(8.5, CROSS_FMT).value(), -7.5);
        assert_eq!(quantize(8.5, ACC_FMT).value(), 8.0 - 1.0 / 2048.0);
        assert_eq!(quantize(-0.0001, S_FMT).raw(), -1);
        assert_eq!(quantize(f64::NAN, S_FMT).raw(), 0);
        assert_eq!(quantize(f64::INFINITY, ACC_FMT).raw(), ACC_FMT.max_raw());
        assert!(FixedPointFormat::new(3, 3, Overflow::Wrap).validate().is_err());
        assert!(S_FMT.validate().is_ok());
    }

    #[test]
    fn mac_examples() {
        let g = FxpComplex::quantize(C64::new(1.0, 0.0), G_FMT);
        assert_eq!(g.re.raw(), 2047);
        let one = FxpComplex::quantize(C64::new(1.0, 0.0), S_FMT);
        let acc = mac_step(FxpComplex::zero(ACC_FMT), g, one);
        assert_eq!(acc.re.value(), 2047.0 / 2048.0);
        assert_eq!(acc.im.raw(), 0);
        let start = FxpComplex::from_raw(123, -77, ACC_FMT);
        assert_eq!(mac_step(start, FxpComplex::zero(G_FMT), one), start);
        assert_eq!(mac_step(start, g, FxpComplex::zero(S_FMT)), start);
    }

    #[test]
    fn mac_matches_big_integer_model() {
        let mut r = rng::stream(8);
        for _ in 0..200_000 {
            let g = (r.random_range(-2048..2048), r.random_range(-2048..2048));
            let s = (r.random_range(-32..32), r.random_range(-32..32));
            let acc = (r.random_range(-16384..16384), r.random_range(-16384..16384));
            let got = mac_step(
                FxpComplex::from_raw(acc.0, acc.1, ACC_FMT),
                FxpComplex::from_raw(g.0, g.1, G_FMT),
                FxpComplex::from_raw(s.0, s.1, S_FMT),
            );
            assert_eq!(got.raw_pair(), oracle::mac(acc, g, s));
        }
    }

    #[test]
    fn projection_examples() {
        for r in 1..=6u8 {
            let t = inv_rho(r);
            assert_eq!(t.raw(), 2048 >> r);
            assert_eq!(projection_unit(t, r, t).raw(), 8);
            assert_eq!(projection_unit(FxpWord::from_raw(16383, ACC_FMT), r, t).raw(), 8);
            assert_eq!(projection_unit(FxpWord::from_raw(-t.raw(), ACC_FMT), r, t).raw(), -8);
            assert_eq!(projection_unit(FxpWord::from_raw(-16384, ACC_FMT), r, t).raw(), -8);
        }
        // 0.2 * 2 = 0.4 -> floor(0.4 * 8) = 3
        assert_eq!(projection_unit(quantize(0.2, ACC_FMT), 1, inv_rho(1)).raw(), 3);
    }

    #[test]
    fn projection_exhaustive_against_oracle() {
        for r in 1..=6u8 {
            let t = inv_rho(r);
            for q in ACC_FMT.min_raw()..=ACC_FMT.max_raw() {
                let got = projection_unit(FxpWord::from_raw(q, ACC_FMT), r, t).raw();
                assert_eq!(got, oracle::project(q, r as u32), "q={q} r={r}");
            }
        }
    }

    #[test]
    fn fig2b_operand_order() {
        let (s, g, p) = random_instance(3, ConstellationKind::Qpsk, 1);
        let cfg = PeArrayConfig::new(3, 1, 1, ConstellationKind::Qpsk);
        let (_, trace) = pe_array_iteration(&s, &g, &cfg, p).unwrap();
        assert_eq!(trace.operand_order(2), vec![(2, 2), (2, 3), (2, 1)]);
        assert_eq!(trace.operand_order(3), vec![(3, 3), (3, 1), (3, 2)]);
        assert!(trace.operand_order(1).is_empty());
        assert_eq!(trace.iteration_cycles, vec![6]);
        // PE 1 forwards the pilot first, then what PE 2 passed on
        let fwd: Vec<usize> = trace
            .records
            .iter()
            .filter_map(|r| match (r.pe, r.operands) {
                (1, Operands::Shift { col, .. }) => Some(col),
                _ => None,
            })
            .collect();
        assert_eq!(fwd, vec![1, 2, 3]);
        // the pilot reaches PE 2 in cycle 3
        let rec = trace.records.iter().find(|r| r.pe == 2 && r.cycle == 3).unwrap();
        assert!(matches!(rec.operands, Operands::Mac { s, .. } if s == p));
    }

    #[test]
    fn trace_text_and_cycle_budget() {
        let (s, g, p) = random_instance(5, ConstellationKind::Qpsk, 2);
        let cfg = PeArrayConfig::new(5, 1, 2, ConstellationKind::Qpsk);
        let (out, trace) = pe_array_iteration(&s, &g, &cfg, p).unwrap();
        assert_eq!(trace.records.iter().map(|r| r.cycle).max(), Some(5 + 3));
        assert_eq!(trace.records.len(), 5 * 8);
        let text = trace.to_text();
        assert_eq!(text.lines().count(), 1 + 40);
        assert!(text.starts_with("cycle,pe,action,re_operands,im_operands,acc\n"));
        assert!(text.contains("1,2,mac,G[2|2]="));
        assert!(text.lines().filter(|l| l.split(',').nth(2) == Some("project")).count() == 5);
        assert_eq!(out[0], p);
        // the accumulator holds the full product only after the flush
        // the last product lands in the accumulator in cycle K+3
        let acc_at = |c: usize| trace.records.iter().find(|r| r.pe == 3 && r.cycle == c).unwrap().acc;
        assert_ne!(acc_at(6), acc_at(7));
        assert_eq!(acc_at(7), acc_at(8));
        assert_eq!(acc_at(1), FxpComplex::zero(ACC_FMT));
        assert_eq!(acc_at(2), FxpComplex::zero(ACC_FMT));
    }

    #[test]
    fn schedule_matches_direct_reference() {
        for (i, n) in [2usize, 3, 5, 9, 17, 33].iter().enumerate() {
            for seed in 0..20u64 {
                let kind = if seed % 2 == 0 { ConstellationKind::Qpsk } else { ConstellationKind::Bpsk };
                let (s, g, p) = random_instance(*n, kind, 100 * i as u64 + seed);
                let cfg = PeArrayConfig::new(*n, 1, (seed % 6 + 1) as u8, kind);
                let (out, _) = pe_array_iteration(&s, &g, &cfg, p).unwrap();
                assert_eq!(out, direct_iteration(&s, &g, &cfg, p).unwrap());
            }
        }
    }

    #[test]
    fn identity_matrix_requantizes() {
        let n = 4;
        let mut entries = vec![FxpComplex::zero(G_FMT); n * n];
        for k in 0..n {
            entries[k * n + k] = FxpComplex::quantize(C64::new(1.0, 0.0), G_FMT);
        }
        let g = QuantizedMatrix::from_entries(n, entries).unwrap();
        let cfg = PeArrayConfig::new(n, 1, 1, ConstellationKind::Qpsk);
        let s: Vec<_> = [(0, 0), (2, -3), (-1, 1), (3, 0)].iter().map(|&(a, b)| FxpComplex::from_raw(a, b, S_FMT)).collect();
        let p = FxpComplex::from_raw(8, 8, S_FMT);
        let (out, _) = pe_array_iteration(&s, &g, &cfg, p).unwrap();
        assert_eq!(out[0], p);
        for k in 1..n {
            // (2047/2048) * s * 2, truncated
            let want = |x: i64| FxpWord::from_raw((((x * 2047) >> 3) * 2) >> 8, S_FMT);
            assert_eq!(out[k].re, want(s[k].re.raw()));
            assert_eq!(out[k].im, want(s[k].im.raw()));
        }
    }

    #[test]
    fn dimension_errors() {
        let (s, g, p) = random_instance(4, ConstellationKind::Qpsk, 3);
        let cfg = PeArrayConfig::new(5, 1, 1, ConstellationKind::Qpsk);
        assert!(matches!(pe_array_iteration(&s, &g, &cfg, p), Err(Error::Dimension(_))));
        let bad = PeArrayConfig::new(4, 1, 16, ConstellationKind::Qpsk);
        assert!(pe_array_iteration(&s, &g, &bad, p).is_err());
        assert!(QuantizedMatrix::quantize(&random_matrix(2, 3, 0)).is_err());
    }

    #[test]
    fn bpsk_imaginary_path_is_zero() {
        let (s, g, p) = random_instance(6, ConstellationKind::Bpsk, 4);
        let cfg = PeArrayConfig::new(6, 1, 2, ConstellationKind::Bpsk);
        let (out, _) = pe_array_iteration(&s, &g, &cfg, p).unwrap();
        assert!(out.iter().all(|z| z.im.raw() == 0));
    }

    #[test]
    fn timing_formulas() {
        assert_eq!(latency_cycles(4, 1), 8);
        assert_eq!(latency_cycles(32, 1), 36);
        assert_eq!(latency_cycles(8, 3), 36);
        assert!((throughput_bps(8, 1, 341e6, 2) / 1e6 - 454.67).abs() < 0.01);
        assert!((throughput_bps(8, 3, 341e6, 2) / 1e6 - 151.56).abs() < 0.01);
        assert!((throughput_bps(16, 2, 846e6, 1) / 1e6 - 338.4).abs() < 1e-9);
    }

    fn block(b: usize, k: usize, cons: &Constellation, n0: f64, seed: u64) -> ReceivedBlock {
        let mut r = rng::stream(seed);
        let h = gen_rayleigh_channel(b, &mut r).unwrap();
        let s = random_data_vector(cons, k, cons.pilot(), &mut r).unwrap();
        transmit(&TransmissionGroundTruth::new(s, h, n0).unwrap(), &mut r).unwrap()
    }

    #[test]
    fn fixed_solver_noise_free() {
        for cons in [Constellation::bpsk(), Constellation::qpsk()] {
            for mode in [Mode::Exact, Mode::Approx] {
                let blk = block(16, 16, &cons, 0.0, 9);
                let params = ProxParams::default().with_mode(mode);
                let fx = solve_fixed(&blk, &cons, &params, cons.pilot()).unwrap();
                assert_eq!(&fx.s_hat, &blk.truth().unwrap().s_true);
                let fl = solve(&blk, &cons, &params, cons.pilot()).unwrap();
                assert_eq!(fx.s_hat, fl.s_hat);
            }
        }
        let q = Constellation::qpsk();
        let blk = block(4, 4, &q, 0.0, 1);
        let params = ProxParams::default().with_t_max(3);
        let (sol, trace) = solve_fixed_traced(&blk, &q, &params, q.pilot()).unwrap();
        assert_eq!(trace.iteration_cycles, vec![8, 8, 8]);
        assert_eq!(trace.records.last().unwrap().cycle, 24);
        assert_eq!(sol.s_hat, solve_fixed(&blk, &q, &params, q.pilot()).unwrap().s_hat);
        assert!(solve_fixed(&blk, &q, &ProxParams::default().with_rho_log2(-1), q.pilot()).is_err());
    }

    #[test]
    fn sign_decisions_follow_canonical_order() {
        let q = Constellation::qpsk();
        let w = |a, b| FxpComplex::from_raw(a, b, S_FMT);
        assert_eq!(q.index_of(sign_decision(w(3, 1), &q)), Some(0));
        assert_eq!(q.index_of(sign_decision(w(-3, 1), &q)), Some(1));
        assert_eq!(q.index_of(sign_decision(w(-3, -1), &q)), Some(2));
        assert_eq!(q.index_of(sign_decision(w(0, -1), &q)), Some(3));
        let b = Constellation::bpsk();
        assert_eq!(sign_decision(w(0, 0), &b), b.pilot());
        assert_eq!(sign_decision(w(-1, 0), &b), -b.pilot());
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent(x in -100.0f64..100.0, w in 4u32..20, f in 0u32..4, sat in any::<bool>()) {
            let fmt = FixedPointFormat::new(w, f.min(w - 1), if sat { Overflow::Saturate } else { Overflow::Wrap });
            let q = quantize(x, fmt);
            prop_assert_eq!(quantize(q.value(), fmt), q);
        }

        #[test]
        fn saturating_quantize_is_monotone(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for fmt in [S_FMT, G_FMT, ACC_FMT] {
                prop_assert!(quantize(lo, fmt).raw() <= quantize(hi, fmt).raw());
            }
        }
    }
}
