//! Reference detectors: maximum-ratio combining with perfect, pilot-based and
//! retrained channel knowledge, the exhaustive maximum-likelihood JED oracle,
//! and downlink MRC beamforming with an uplink channel estimate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexVector, C64};
use crate::model::{Constellation, ReceivedBlock};
use crate::prox::channel_estimate;

/// Default candidate budget of [`ml_jed_exhaustive`].
pub const ML_BUDGET: u64 = 1 << 20;

/// Hard decisions of one detector on one block.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub s_hat: ComplexVector,
    pub h_hat: Option<ComplexVector>,
    pub method: &'static str,
}

fn mrc_slice(
    block: &ReceivedBlock,
    h: &ComplexVector,
    c: &Constellation,
    s_check: C64,
) -> Result<ComplexVector> {
    let y = block.y();
    if h.len() != y.rows() {
        return Err(Error::Dimension(format!(
            "channel of length {} for {} antennas",
            h.len(),
            y.rows()
        )));
    }
    let energy = h.norm_sqr();
    if !(energy > 0.0) {
        return Err(Error::DegenerateInput("zero channel vector".into()));
    }
    let mut s = Vec::with_capacity(y.cols());
    s.push(s_check);
    for k in 1..y.cols() {
        // y_k = h conj(s_k) + n_k
        let z: C64 = (0..y.rows()).map(|b| h[b].conj() * y[(b, k)]).sum::<C64>() / energy;
        s.push(c.nearest(z.conj()));
    }
    Ok(ComplexVector::from_raw(s))
}

/// MRC detection with the true channel.
pub fn mrc_csir(
    block: &ReceivedBlock,
    h: &ComplexVector,
    c: &Constellation,
    s_check: C64,
) -> Result<DetectionResult> {
    Ok(DetectionResult {
        s_hat: mrc_slice(block, h, c, s_check)?,
        h_hat: Some(h.clone()),
        method: "mrc_csir",
    })
}

/// Pilot-only channel estimate from the first slot.
///
/// With `y_1 = h conj(s_check) + n_1`, the estimate is `y_1 s_check / sigma^2`.
pub fn chest_pilot(block: &ReceivedBlock, s_check: C64, c: &Constellation) -> ComplexVector {
    let y = block.y();
    let scale = s_check / (c.sigma() * c.sigma());
    ComplexVector::from_raw((0..y.rows()).map(|b| y[(b, 0)] * scale).collect())
}

/// MRC detection with the pilot-based channel estimate.
pub fn mrc_chest(block: &ReceivedBlock, s_check: C64, c: &Constellation) -> Result<DetectionResult> {
    let h_hat = chest_pilot(block, s_check, c);
    Ok(DetectionResult {
        s_hat: mrc_slice(block, &h_hat, c, s_check)?,
        h_hat: Some(h_hat),
        method: "mrc_chest",
    })
}

/// MRC-CHEST decisions with the channel re-estimated from them.
pub fn mrc_retrained(block: &ReceivedBlock, s_check: C64, c: &Constellation) -> Result<DetectionResult> {
    let first = mrc_chest(block, s_check, c)?;
    let h_hat = channel_estimate(block.y(), &first.s_hat)?;
    Ok(DetectionResult { s_hat: first.s_hat, h_hat: Some(h_hat), method: "mrc_rt" })
}

/// Reflected Gray code over `digits` positions of radix `radix` (even).
///
/// Yields `(position, old_digit, new_digit)` for every step after the all-zero
/// starting word; consecutive words differ in exactly one position.
pub(crate) struct GrayWalk {
    radix: usize,
    digits: usize,
    next: u64,
    total: u64,
    current: Vec<usize>,
}

impl GrayWalk {
    pub(crate) fn new(radix: usize, digits: usize) -> Self {
        debug_assert!(radix.is_multiple_of(2));
        Self {
            radix,
            digits,
            next: 1,
            total: (radix as u64).pow(digits as u32),
            current: vec![0; digits],
        }
    }

    pub(crate) fn word(&self) -> &[usize] {
        &self.current
    }

    fn code(&self, mut n: u64) -> Vec<usize> {
        let mut d = vec![0usize; self.digits];
        for x in d.iter_mut() {
            *x = (n % self.radix as u64) as usize;
            n /= self.radix as u64;
        }
        // position 0 is least significant
        (0..self.digits)
            .map(|i| {
                let above = if i + 1 < self.digits { d[i + 1] } else { 0 };
                if above % 2 == 0 {
                    d[i]
                } else {
                    self.radix - 1 - d[i]
                }
            })
            .collect()
    }
}

impl Iterator for GrayWalk {
    type Item = (usize, usize, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.total {
            return None;
        }
        let word = self.code(self.next);
        self.next += 1;
        let pos = (0..self.digits).find(|&i| word[i] != self.current[i])?;
        let old = self.current[pos];
        self.current = word;
        Some((pos, old, self.current[pos]))
    }
}

/// Exact ML-JED `argmax ||Y s||` over all `s` with `s_1 = s_check`.
///
/// Candidates are visited in Gray-code order so each step updates `Y s` by a
/// single column. Ties are resolved in favour of the candidate that comes first
/// in lexicographic order of `(s_2, ..., s_{K+1})` over canonical point indices.
pub fn ml_jed_exhaustive(
    block: &ReceivedBlock,
    c: &Constellation,
    s_check: C64,
    budget: u64,
) -> Result<DetectionResult> {
    let y = block.y();
    let k = block.data_slots();
    let m = c.size();
    let candidates = (m as u64).checked_pow(k as u32).filter(|&n| n <= budget).ok_or_else(|| {
        Error::Capacity(format!(
            "{m}^{k} candidates exceed the budget of {budget}; reduce K or use BPSK"
        ))
    })?;
    let b = y.rows();
    let cols: Vec<Vec<C64>> = (0..=k).map(|j| (0..b).map(|i| y[(i, j)]).collect()).collect();
    let points = c.points();

    // Gray position i drives slot K - i, so slot 2 is the most significant digit.
    let slot = |pos: usize| k - pos;
    let lex_index = |word: &[usize]| word.iter().rev().fold(0u64, |acc, &d| acc * m as u64 + d as u64);
    let recompute = |word: &[usize]| -> Vec<C64> {
        let mut v: Vec<C64> = cols[0].iter().map(|z| z * s_check).collect();
        for (pos, &d) in word.iter().enumerate() {
            let s = points[d];
            for (vi, yi) in v.iter_mut().zip(&cols[slot(pos)]) {
                *vi += yi * s;
            }
        }
        v
    };

    let mut walk = GrayWalk::new(m, k);
    let mut v = recompute(walk.word());
    let mut best_val = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let mut best_word = walk.word().to_vec();
    let mut best_lex = lex_index(&best_word);
    let mut steps = 0u64;
    while let Some((pos, old, new)) = walk.next() {
        steps += 1;
        if steps.is_multiple_of(4096) {
            v = recompute(walk.word());
        } else {
            let delta = points[new] - points[old];
            for (vi, yi) in v.iter_mut().zip(&cols[slot(pos)]) {
                *vi += yi * delta;
            }
        }
        let val = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if val >= best_val {
            let lex = lex_index(walk.word());
            if val > best_val || lex < best_lex {
                best_val = val;
                best_lex = lex;
                best_word = walk.word().to_vec();
            }
        }
    }
    debug_assert_eq!(steps + 1, candidates);

    let mut s = vec![s_check; k + 1];
    for (pos, &d) in best_word.iter().enumerate() {
        s[slot(pos)] = points[d];
    }
    let s_hat = ComplexVector::from_raw(s);
    let h_hat = channel_estimate(y, &s_hat)?;
    Ok(DetectionResult { s_hat, h_hat: Some(h_hat), method: "ml_jed" })
}

/// How the downlink terminal obtains the composite gain `h^T w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownlinkReceiver {
    /// A beamformed reference symbol `s_check` precedes the data and the
    /// terminal equalizes with the gain estimated from it.
    #[default]
    ReferenceSymbol,
    /// The terminal slices the raw samples.
    Uncompensated,
}

/// Downlink symbol errors of MRC beamforming `w = conj(h_hat)/||h_hat||` over
/// the reciprocal channel `h^T`.
///
/// Returns the number of erroneous symbols among `n_symbols`.
#[allow(clippy::too_many_arguments)]
pub fn downlink_errors<R: Rng + ?Sized>(
    h: &ComplexVector,
    h_hat: &ComplexVector,
    c: &Constellation,
    s_check: C64,
    n_symbols: usize,
    n0: f64,
    receiver: DownlinkReceiver,
    rng: &mut R,
) -> Result<usize> {
    if h.len() != h_hat.len() {
        return Err(Error::Dimension("channel and estimate lengths differ".into()));
    }
    let norm = h_hat.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateInput("zero channel estimate".into()));
    }
    // h^T w
    let gain: C64 = h.iter().zip(h_hat.iter()).map(|(a, b)| a * b.conj()).sum::<C64>() / norm;
    let std = (n0 / 2.0).sqrt();
    let noise = |rng: &mut R| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(std * re, std * im)
    };
    let equalizer = match receiver {
        DownlinkReceiver::ReferenceSymbol => {
            let r_ref = gain * s_check + noise(rng);
            let g_est = r_ref * s_check.conj() / (c.sigma() * c.sigma());
            if g_est.norm() > 0.0 {
                g_est.inv()
            } else {
                C64::new(1.0, 0.0)
            }
        }
        DownlinkReceiver::Uncompensated => C64::new(1.0, 0.0),
    };
    let mut errors = 0;
    for _ in 0..n_symbols {
        let idx = rng.random_range(0..c.size());
        let r = gain * c.points()[idx] + noise(rng);
        if c.nearest_index(r * equalizer) != idx {
            errors += 1;
        }
    }
    Ok(errors)
}

/// Downlink symbol-error rate, see [`downlink_errors`].
#[allow(clippy::too_many_arguments)]
pub fn downlink_ser<R: Rng + ?Sized>(
    h: &ComplexVector,
    h_hat: &ComplexVector,
    c: &Constellation,
    s_check: C64,
    n_symbols: usize,
    n0: f64,
    receiver: DownlinkReceiver,
    rng: &mut R,
) -> Result<f64> {
    if n_symbols == 0 {
        return Ok(0.0);
    }
    let e = downlink_errors(h, h_hat, c, s_check, n_symbols, n0, receiver, rng)?;
    Ok(e as f64 / n_symbols as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ComplexMatrix;
    use crate::model::{gen_rayleigh_channel, random_data_vector, transmit, TransmissionGroundTruth};
    use crate::rng;

    fn block(b: usize, k: usize, cons: &Constellation, n0: f64, seed: u64) -> ReceivedBlock {
        let mut r = rng::stream(seed);
        let h = gen_rayleigh_channel(b, &mut r).unwrap();
        let s = random_data_vector(cons, k, cons.pilot(), &mut r).unwrap();
        transmit(&TransmissionGroundTruth::new(s, h, n0).unwrap(), &mut r).unwrap()
    }

    #[test]
    fn gray_walk_visits_every_word_once() {
        for (radix, digits) in [(2, 1), (2, 5), (4, 3), (4, 1), (2, 0)] {
            let mut walk = GrayWalk::new(radix, digits);
            let mut seen = std::collections::HashSet::new();
            seen.insert(walk.word().to_vec());
            let mut prev = walk.word().to_vec();
            while let Some((pos, old, new)) = walk.next() {
                let w = walk.word().to_vec();
                let changed: Vec<_> = (0..digits).filter(|&i| w[i] != prev[i]).collect();
                assert_eq!(changed, vec![pos]);
                assert_eq!(prev[pos], old);
                assert_eq!(w[pos], new);
                assert!(seen.insert(w.clone()));
                prev = w;
            }
            assert_eq!(seen.len() as u64, (radix as u64).pow(digits as u32));
        }
    }

    #[test]
    fn mrc_noise_free_recovers_symbols() {
        for cons in [Constellation::bpsk(), Constellation::qpsk()] {
            let blk = block(8, 10, &cons, 0.0, 5);
            let t = blk.truth().unwrap();
            assert_eq!(mrc_csir(&blk, &t.h_true, &cons, cons.pilot()).unwrap().s_hat, t.s_true);
            assert_eq!(mrc_chest(&blk, cons.pilot(), &cons).unwrap().s_hat, t.s_true);
            let rt = mrc_retrained(&blk, cons.pilot(), &cons).unwrap();
            assert_eq!(rt.s_hat, t.s_true);
            let h = rt.h_hat.unwrap();
            for i in 0..8 {
                assert!((h[i] - t.h_true[i]).norm() < 1e-14);
            }
            let hc = chest_pilot(&blk, cons.pilot(), &cons);
            for i in 0..8 {
                assert!((hc[i] - t.h_true[i]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn mrc_single_antenna_slices_conjugate() {
        let q = Constellation::qpsk();
        let y = ComplexMatrix::new(
            1,
            3,
            vec![q.pilot().conj(), C64::new(-0.3, 0.2), C64::new(0.4, 0.9)],
        )
        .unwrap();
        let blk = ReceivedBlock::new(y.clone(), None).unwrap();
        let one = ComplexVector::new(vec![C64::new(1.0, 0.0)]).unwrap();
        let r = mrc_csir(&blk, &one, &q, q.pilot()).unwrap();
        assert_eq!(r.s_hat[0], q.pilot());
        for k in 1..3 {
            assert_eq!(r.s_hat[k], q.nearest(y[(0, k)].conj()));
        }
        let zero = ComplexVector::zeros(1);
        assert!(matches!(mrc_csir(&blk, &zero, &q, q.pilot()), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn chest_is_unbiased_with_expected_variance() {
        let q = Constellation::qpsk();
        let h = ComplexVector::new(vec![C64::new(0.8, -0.3), C64::new(-0.2, 0.5)]).unwrap();
        let s = ComplexVector::new(vec![q.pilot(), q.points()[2]]).unwrap();
        let n0 = 0.4;
        let truth = TransmissionGroundTruth::new(s, h.clone(), n0).unwrap();
        let mut r = rng::stream(31);
        let trials = 100_000;
        let mut mean = [C64::new(0.0, 0.0); 2];
        let mut var = [0.0; 2];
        for _ in 0..trials {
            let blk = transmit(&truth, &mut r).unwrap();
            let est = chest_pilot(&blk, q.pilot(), &q);
            for b in 0..2 {
                mean[b] += est[b];
                var[b] += (est[b] - h[b]).norm_sqr();
            }
        }
        for b in 0..2 {
            let m = mean[b] / trials as f64;
            assert!((m - h[b]).norm() <= 0.01 * h[b].norm());
            assert!((var[b] / trials as f64 / n0 - 1.0).abs() <= 0.02);
        }
    }

    #[test]
    fn ml_small_enumeration() {
        let b = Constellation::bpsk();
        let y = ComplexMatrix::new(1, 3, vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let blk = ReceivedBlock::new(y, None).unwrap();
        let r = ml_jed_exhaustive(&blk, &b, b.pilot(), ML_BUDGET).unwrap();
        assert_eq!(r.s_hat.as_slice(), &[C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(1.0, 0.0)]);
    }

    #[test]
    fn ml_tie_break_prefers_lexicographically_first() {
        // All-zero data columns make every candidate equally good.
        let b = Constellation::bpsk();
        let mut y = ComplexMatrix::zeros(2, 4);
        y[(0, 0)] = C64::new(1.0, 0.0);
        let blk = ReceivedBlock::new(y, None).unwrap();
        let r = ml_jed_exhaustive(&blk, &b, b.pilot(), ML_BUDGET).unwrap();
        assert!(r.s_hat.iter().all(|z| *z == b.pilot()));
    }

    #[test]
    fn ml_noise_free_and_budget() {
        let q = Constellation::qpsk();
        let blk = block(4, 6, &q, 0.0, 2);
        let r = ml_jed_exhaustive(&blk, &q, q.pilot(), ML_BUDGET).unwrap();
        assert_eq!(&r.s_hat, &blk.truth().unwrap().s_true);
        let big = block(4, 11, &q, 0.0, 2);
        assert!(matches!(ml_jed_exhaustive(&big, &q, q.pilot(), ML_BUDGET), Err(Error::Capacity(_))));
    }

    #[test]
    fn ml_matches_brute_force() {
        for seed in 0..10 {
            let cons = if seed % 2 == 0 { Constellation::bpsk() } else { Constellation::qpsk() };
            let k = if seed % 2 == 0 { 7 } else { 4 };
            let blk = block(3, k, &cons, 1.5, 70 + seed);
            let r = ml_jed_exhaustive(&blk, &cons, cons.pilot(), ML_BUDGET).unwrap();
            let m = cons.size();
            let mut best = f64::NEG_INFINITY;
            for n in 0..(m as u64).pow(k as u32) {
                let mut s = vec![cons.pilot()];
                let mut x = n;
                let mut digits = vec![0; k];
                for d in digits.iter_mut().rev() {
                    *d = (x % m as u64) as usize;
                    x /= m as u64;
                }
                s.extend(digits.iter().map(|&d| cons.points()[d]));
                let v = blk.y().mul_vec(&ComplexVector::new(s).unwrap()).unwrap().norm_sqr();
                best = best.max(v);
            }
            let got = blk.y().mul_vec(&r.s_hat).unwrap().norm_sqr();
            assert!((got - best).abs() <= 1e-10 * best);
        }
    }

    #[test]
    fn downlink_matched_noise_free_is_error_free() {
        let q = Constellation::qpsk();
        let h = gen_rayleigh_channel(16, &mut rng::stream(1)).unwrap();
        for rx in [DownlinkReceiver::ReferenceSymbol, DownlinkReceiver::Uncompensated] {
            let ser = downlink_ser(&h, &h, &q, q.pilot(), 1000, 0.0, rx, &mut rng::stream(2)).unwrap();
            assert_eq!(ser, 0.0);
        }
        assert!(matches!(
            downlink_ser(&h, &ComplexVector::zeros(16), &q, q.pilot(), 10, 0.1, DownlinkReceiver::ReferenceSymbol, &mut rng::stream(2)),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn downlink_phase_error_needs_compensation() {
        let q = Constellation::qpsk();
        let h = gen_rayleigh_channel(16, &mut rng::stream(1)).unwrap();
        let rotated = h.scaled(C64::from_polar(1.0, 1.0));
        let n0 = 0.1;
        let raw = downlink_ser(&h, &rotated, &q, q.pilot(), 4000, n0, DownlinkReceiver::Uncompensated, &mut rng::stream(3)).unwrap();
        let comp = downlink_ser(&h, &rotated, &q, q.pilot(), 4000, n0, DownlinkReceiver::ReferenceSymbol, &mut rng::stream(3)).unwrap();
        let matched = downlink_ser(&h, &h, &q, q.pilot(), 4000, n0, DownlinkReceiver::Uncompensated, &mut rng::stream(3)).unwrap();
        assert!(raw > 0.4, "{raw}");
        assert!(comp < 0.01 && matched < 0.01);
    }
}
