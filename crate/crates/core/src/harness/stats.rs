use serde::{Deserialize, Serialize};

/// Wilson score interval at 95% confidence for `errors` out of `n`.
pub fn wilson_interval(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// One point of an error-rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub ser: f64,
}

/// SNR at which the curve first falls to `target`, interpolating `log10(SER)`
/// linearly between adjacent points. `None` when the curve never crosses the
/// target between two points with nonzero SER.
pub fn db_at_ser(curve: &[CurvePoint], target: f64) -> Option<f64> {
    if !(target > 0.0) {
        return None;
    }
    let lt = target.log10();
    curve.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if a.ser >= target && b.ser < target {
            if a.ser == target {
                return Some(a.snr_db);
            }
            if b.ser <= 0.0 || a.ser <= 0.0 {
                return None;
            }
            let (la, lb) = (a.ser.log10(), b.ser.log10());
            Some(a.snr_db + (lt - la) / (lb - la) * (b.snr_db - a.snr_db))
        } else {
            None
        }
    })
}

/// `dB(worse) - dB(better)` at `target`.
pub fn db_gap(worse: &[CurvePoint], better: &[CurvePoint], target: f64) -> Option<f64> {
    Some(db_at_ser(worse, target)? - db_at_ser(better, target)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(v: &[(f64, f64)]) -> Vec<CurvePoint> {
        v.iter().map(|&(snr_db, ser)| CurvePoint { snr_db, ser }).collect()
    }

    #[test]
    fn wilson_known_values() {
        // 10 of 100: textbook interval [0.0552, 0.1744]
        let (lo, hi) = wilson_interval(10, 100);
        assert!((lo - 0.0552).abs() < 1e-4 && (hi - 0.1744).abs() < 1e-4);
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.004);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        let (lo, hi) = wilson_interval(1000, 1000);
        assert!(lo > 0.99 && hi == 1.0);
    }

    #[test]
    fn interpolation() {
        let c = curve(&[(0.0, 1e-1), (1.0, 1e-2), (2.0, 1e-3)]);
        assert!((db_at_ser(&c, 1e-2).unwrap() - 1.0).abs() < 1e-12);
        assert!((db_at_ser(&c, 10f64.powf(-1.5)).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(db_at_ser(&c, 1e-4), None);
        assert_eq!(db_at_ser(&c, 0.5), None);
        let shifted = curve(&[(0.0, 0.5), (1.0, 1e-1), (2.0, 1e-2), (3.0, 1e-3)]);
        assert!((db_gap(&shifted, &c, 1e-2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(db_at_ser(&curve(&[(0.0, 0.1), (1.0, 0.0)]), 1e-2), None);
    }
}
