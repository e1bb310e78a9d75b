use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{downlink_errors, ml_jed_exhaustive, mrc_chest, mrc_csir, mrc_retrained};
use crate::error::{Error, Result};
use crate::fxp::solve_fixed;
use crate::linalg::ComplexVector;
use crate::model::{
    gen_los_channel, gen_rayleigh_channel, random_data_vector, snr_to_n0, transmit, Constellation,
    ReceivedBlock, TransmissionGroundTruth,
};
use crate::prox::{solve, ProxParams};
use crate::rng::{self, Purpose, Stream};

use super::config::{worker_count, Arithmetic, ChannelSpec, MethodKind, SweepConfig};
use super::stats::{db_gap, wilson_interval, CurvePoint};

/// Trials per work unit. Fixed so that the reduction order, and with it every
/// floating-point sum, is independent of the number of workers.
const CHUNK: usize = 64;

#[derive(Debug, Clone)]
enum Detector {
    Prox { params: ProxParams, fixed: bool },
    MrcCsir,
    MrcChest,
    MrcRt,
    MlJed { budget: u64 },
}

impl Detector {
    fn from_spec(kind: MethodKind, params: Option<ProxParams>, arithmetic: Arithmetic, budget: u64) -> Self {
        match kind {
            MethodKind::Prox | MethodKind::Aprox => Detector::Prox {
                params: params.expect("prox methods carry parameters"),
                fixed: arithmetic == Arithmetic::Fixed,
            },
            MethodKind::MrcCsir => Detector::MrcCsir,
            MethodKind::MrcChest => Detector::MrcChest,
            MethodKind::MrcRt => Detector::MrcRt,
            MethodKind::MlJed => Detector::MlJed { budget },
        }
    }

    fn detect(
        &self,
        blk: &ReceivedBlock,
        c: &Constellation,
        h_true: &ComplexVector,
    ) -> Result<(ComplexVector, ComplexVector)> {
        let pilot = c.pilot();
        let pair = |r: crate::baselines::DetectionResult| {
            let h = r.h_hat.ok_or_else(|| Error::Numeric(format!("{} produced no channel estimate", r.method)))?;
            Ok((r.s_hat, h))
        };
        match self {
            Detector::Prox { params, fixed: false } => {
                let s = solve(blk, c, params, pilot)?;
                Ok((s.s_hat, s.h_hat))
            }
            Detector::Prox { params, fixed: true } => {
                let s = solve_fixed(blk, c, params, pilot)?;
                Ok((s.s_hat, s.h_hat))
            }
            Detector::MrcCsir => pair(mrc_csir(blk, h_true, c, pilot)?),
            Detector::MrcChest => pair(mrc_chest(blk, pilot, c)?),
            Detector::MrcRt => pair(mrc_retrained(blk, pilot, c)?),
            Detector::MlJed { budget } => pair(ml_jed_exhaustive(blk, c, pilot, *budget)?),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Cell {
    uplink_errors: u64,
    downlink_errors: u64,
    mse_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Tally {
    n_snr: usize,
    cells: Vec<Cell>,
    /// Data-slot decisions on which detectors 0 and 1 agree, per SNR.
    agree: Vec<u64>,
}

impl Tally {
    fn new(n_det: usize, n_snr: usize) -> Self {
        Self { n_snr, cells: vec![Cell::default(); n_det * n_snr], agree: vec![0; n_snr] }
    }

    fn cell(&mut self, det: usize, snr: usize) -> &mut Cell {
        &mut self.cells[det * self.n_snr + snr]
    }

    fn merge(mut self, other: &Tally) -> Self {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.uplink_errors += b.uplink_errors;
            a.downlink_errors += b.downlink_errors;
            a.mse_sum += b.mse_sum;
        }
        for (a, b) in self.agree.iter_mut().zip(&other.agree) {
            *a += b;
        }
        self
    }
}

/// Per-trial randomness: channel, data, and the noise and downlink streams that
/// are cloned for every SNR point and method.
struct TrialInput {
    h: ComplexVector,
    s: ComplexVector,
    noise: Stream,
    downlink: Stream,
}

fn trial_input(cfg: &SweepConfig, c: &Constellation, trial: u64) -> Result<TrialInput> {
    let seed = cfg.master_seed;
    let h = match &cfg.channel {
        ChannelSpec::Rayleigh => {
            gen_rayleigh_channel(cfg.antennas, &mut rng::substream(seed, trial, Purpose::Channel))?
        }
        ChannelSpec::Los(g) => gen_los_channel(cfg.antennas, g)?,
    };
    let s = random_data_vector(c, cfg.data_slots, c.pilot(), &mut rng::substream(seed, trial, Purpose::Data))?;
    Ok(TrialInput {
        h,
        s,
        noise: rng::substream(seed, trial, Purpose::Noise),
        downlink: rng::substream(seed, trial, Purpose::Downlink),
    })
}

fn data_errors(a: &ComplexVector, b: &ComplexVector) -> u64 {
    a.iter().zip(b.iter()).skip(1).filter(|(x, y)| x != y).count() as u64
}

fn run_chunk(cfg: &SweepConfig, detectors: &[Detector], trials: std::ops::Range<usize>, agreement: bool) -> Result<Tally> {
    let c = cfg.constellation();
    let mut tally = Tally::new(detectors.len(), cfg.snr_db.len());
    let n_dl = cfg.downlink_symbols();
    for trial in trials {
        let input = trial_input(cfg, &c, trial as u64)?;
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let n0 = snr_to_n0(snr, &c);
            let truth = TransmissionGroundTruth::new(input.s.clone(), input.h.clone(), n0)?;
            let blk = transmit(&truth, &mut input.noise.clone())?;
            let mut decisions = Vec::with_capacity(detectors.len());
            for (di, det) in detectors.iter().enumerate() {
                let (s_hat, h_hat) = det.detect(&blk, &c, &input.h)?;
                let dl = downlink_errors(
                    &input.h,
                    &h_hat,
                    &c,
                    c.pilot(),
                    n_dl,
                    n0,
                    cfg.downlink_receiver,
                    &mut input.downlink.clone(),
                )?;
                let mse = h_hat.iter().zip(input.h.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()
                    / cfg.antennas as f64;
                let cell = tally.cell(di, si);
                cell.uplink_errors += data_errors(&s_hat, &input.s);
                cell.downlink_errors += dl as u64;
                cell.mse_sum += mse;
                if agreement && di < 2 {
                    decisions.push(s_hat);
                }
            }
            if agreement && decisions.len() == 2 {
                tally.agree[si] += cfg.data_slots as u64 - data_errors(&decisions[0], &decisions[1]);
            }
        }
    }
    Ok(tally)
}

fn run_engine(cfg: &SweepConfig, detectors: &[Detector], agreement: bool, workers: usize) -> Result<Tally> {
    cfg.validate()?;
    let chunks = cfg.trials.div_ceil(CHUNK);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let parts: Vec<Result<Tally>> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|ci| run_chunk(cfg, detectors, ci * CHUNK..((ci + 1) * CHUNK).min(cfg.trials), agreement))
            .collect()
    });
    let mut total = Tally::new(detectors.len(), cfg.snr_db.len());
    for p in parts {
        total = total.merge(&p?);
    }
    Ok(total)
}

/// One CSV row: a method at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub snr_db: f64,
    pub uplink_ser: f64,
    pub downlink_ser: f64,
    pub chest_mse: f64,
    pub trials: u64,
    /// Uplink symbol errors over `trials * K` data symbols.
    pub errors: u64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Provenance recorded next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub config: SweepConfig,
    pub config_hash: String,
    pub master_seed: u64,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub meta: SweepMeta,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    fn rows_of<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn uplink_curve(&self, method: &str) -> Vec<CurvePoint> {
        self.rows_of(method).map(|r| CurvePoint { snr_db: r.snr_db, ser: r.uplink_ser }).collect()
    }

    pub fn downlink_curve(&self, method: &str) -> Vec<CurvePoint> {
        self.rows_of(method).map(|r| CurvePoint { snr_db: r.snr_db, ser: r.downlink_ser }).collect()
    }

    /// Lower and upper Wilson-bound curves of the uplink SER.
    pub fn uplink_bounds(&self, method: &str) -> (Vec<CurvePoint>, Vec<CurvePoint>) {
        self.rows_of(method)
            .map(|r| (CurvePoint { snr_db: r.snr_db, ser: r.ci_lo }, CurvePoint { snr_db: r.snr_db, ser: r.ci_hi }))
            .unzip()
    }

    /// Lower and upper Wilson-bound curves of the downlink SER.
    pub fn downlink_bounds(&self, method: &str) -> (Vec<CurvePoint>, Vec<CurvePoint>) {
        let n = (self.meta.config.downlink_symbols() as u64).max(1);
        self.rows_of(method)
            .map(|r| {
                let total = r.trials * n;
                let errors = (r.downlink_ser * total as f64).round() as u64;
                let (lo, hi) = wilson_interval(errors, total);
                (CurvePoint { snr_db: r.snr_db, ser: lo }, CurvePoint { snr_db: r.snr_db, ser: hi })
            })
            .unzip()
    }

    pub fn row<'a>(&'a self, method: &'a str, snr_db: f64) -> Option<&'a SweepRow> {
        self.rows_of(method).find(|r| r.snr_db == snr_db)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
        let mut r = csv::Reader::from_path(path)?;
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }

    /// Sidecar path: the CSV path with a `.json` extension.
    pub fn meta_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the CSV and its JSON metadata sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        self.write_csv(csv_path)?;
        std::fs::write(Self::meta_path(csv_path), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let meta: SweepMeta = serde_json::from_str(&std::fs::read_to_string(Self::meta_path(csv_path))?)?;
        Ok(Self { meta, rows: Self::read_rows(csv_path)? })
    }
}

fn detectors_for(cfg: &SweepConfig) -> Vec<Detector> {
    cfg.methods
        .iter()
        .map(|m| Detector::from_spec(m.kind, m.prox_params(), cfg.arithmetic, cfg.ml_budget))
        .collect()
}

fn meta_for(cfg: &SweepConfig) -> SweepMeta {
    SweepMeta {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Paired Monte-Carlo sweep: every method sees the same blocks.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    run_sweep_with_workers(cfg, worker_count())
}

/// [`run_sweep`] on an explicit number of worker threads; the result does not
/// depend on `workers`.
pub fn run_sweep_with_workers(cfg: &SweepConfig, workers: usize) -> Result<SweepResult> {
    let detectors = detectors_for(cfg);
    let tally = run_engine(cfg, &detectors, false, workers)?;
    let trials = cfg.trials as u64;
    let symbols = trials * cfg.data_slots as u64;
    let dl_symbols = trials * cfg.downlink_symbols() as u64;
    let ratio = |e: u64, n: u64| if n == 0 { 0.0 } else { e as f64 / n as f64 };
    let mut rows = Vec::with_capacity(tally.cells.len());
    for (di, m) in cfg.methods.iter().enumerate() {
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let cell = tally.cells[di * tally.n_snr + si];
            let (ci_lo, ci_hi) = wilson_interval(cell.uplink_errors, symbols);
            rows.push(SweepRow {
                method: m.label(),
                snr_db: snr,
                uplink_ser: ratio(cell.uplink_errors, symbols),
                downlink_ser: ratio(cell.downlink_errors, dl_symbols),
                chest_mse: cell.mse_sum / trials as f64,
                trials,
                errors: cell.uplink_errors,
                ci_lo,
                ci_hi,
            });
        }
    }
    Ok(SweepResult { meta: meta_for(cfg), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwComparePoint {
    pub snr_db: f64,
    /// Fraction of data-slot hard decisions identical in both arithmetics.
    pub agreement: f64,
    pub float_ser: f64,
    pub fixed_ser: f64,
    pub float_errors: u64,
    pub fixed_errors: u64,
    pub symbols: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwCompareReport {
    pub params: ProxParams,
    pub points: Vec<HwComparePoint>,
}

impl HwCompareReport {
    pub fn float_curve(&self) -> Vec<CurvePoint> {
        self.points.iter().map(|p| CurvePoint { snr_db: p.snr_db, ser: p.float_ser }).collect()
    }

    pub fn fixed_curve(&self) -> Vec<CurvePoint> {
        self.points.iter().map(|p| CurvePoint { snr_db: p.snr_db, ser: p.fixed_ser }).collect()
    }

    /// Extra SNR the fixed-point model needs to reach `target`.
    pub fn db_gap(&self, target: f64) -> Option<f64> {
        db_gap(&self.fixed_curve(), &self.float_curve(), target)
    }

    pub fn min_agreement(&self) -> f64 {
        self.points.iter().map(|p| p.agreement).fold(1.0, f64::min)
    }
}

/// Paired floating-point versus fixed-point run of the first PrOX/APrOX method.
pub fn hw_compare(cfg: &SweepConfig) -> Result<HwCompareReport> {
    let spec = cfg
        .methods
        .iter()
        .find(|m| m.prox_params().is_some())
        .ok_or_else(|| Error::Config("hw-compare needs a prox or aprox method".into()))?;
    let params = spec.prox_params().expect("checked above");
    let detectors = [
        Detector::Prox { params, fixed: false },
        Detector::Prox { params, fixed: true },
    ];
    let tally = run_engine(cfg, &detectors, true, worker_count())?;
    let symbols = cfg.trials as u64 * cfg.data_slots as u64;
    let ratio = |e: u64| if symbols == 0 { 0.0 } else { e as f64 / symbols as f64 };
    let points = cfg
        .snr_db
        .iter()
        .enumerate()
        .map(|(si, &snr)| {
            let fl = tally.cells[si];
            let fx = tally.cells[tally.n_snr + si];
            HwComparePoint {
                snr_db: snr,
                agreement: if symbols == 0 { 1.0 } else { tally.agree[si] as f64 / symbols as f64 },
                float_ser: ratio(fl.uplink_errors),
                fixed_ser: ratio(fx.uplink_errors),
                float_errors: fl.uplink_errors,
                fixed_errors: fx.uplink_errors,
                symbols,
            }
        })
        .collect();
    Ok(HwCompareReport { params, points })
}
