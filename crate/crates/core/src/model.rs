//! Constant-modulus constellations, channel generation and the block-fading
//! SIMO transmission `Y = h s^H + N`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, ComplexMatrix, ComplexVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    Bpsk,
    Qpsk,
}

impl ConstellationKind {
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            ConstellationKind::Bpsk => 1,
            ConstellationKind::Qpsk => 2,
        }
    }
}

impl std::fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstellationKind::Bpsk => "bpsk",
            ConstellationKind::Qpsk => "qpsk",
        })
    }
}

impl std::str::FromStr for ConstellationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(ConstellationKind::Bpsk),
            "qpsk" => Ok(ConstellationKind::Qpsk),
            other => Err(Error::Config(format!("unknown constellation `{other}`"))),
        }
    }
}

/// Constant-modulus constellation with its convex hull.
///
/// Canonical point order (used for tie-breaking) is `[+s, -s]` for BPSK and
/// counter-clockwise starting in the first quadrant for QPSK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    kind: ConstellationKind,
    sigma: f64,
    points: Vec<C64>,
}

impl Constellation {
    pub fn new(kind: ConstellationKind, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
        }
        let points = match kind {
            ConstellationKind::Bpsk => vec![C64::new(sigma, 0.0), C64::new(-sigma, 0.0)],
            ConstellationKind::Qpsk => {
                let a = sigma * FRAC_1_SQRT_2;
                vec![C64::new(a, a), C64::new(-a, a), C64::new(-a, -a), C64::new(a, -a)]
            }
        };
        Ok(Self { kind, sigma, points })
    }

    pub fn bpsk() -> Self {
        Self::new(ConstellationKind::Bpsk, 1.0).expect("unit sigma")
    }

    pub fn qpsk() -> Self {
        Self::new(ConstellationKind::Qpsk, 1.0).expect("unit sigma")
    }

    pub fn of_kind(kind: ConstellationKind) -> Self {
        Self::new(kind, 1.0).expect("unit sigma")
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.kind.bits_per_symbol()
    }

    /// Default pilot symbol, the first canonical point.
    pub fn pilot(&self) -> C64 {
        self.points[0]
    }

    /// Index of `z` among the constellation points, if it is one of them.
    pub fn index_of(&self, z: C64) -> Option<usize> {
        let tol = 1e-12 * self.sigma;
        self.points.iter().position(|p| (p - z).norm() <= tol)
    }

    /// Index of the nearest point; ties go to the lowest canonical index.
    pub fn nearest_index(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn nearest(&self, z: C64) -> C64 {
        self.points[self.nearest_index(z)]
    }

    /// Half-width of the hull along each active axis: `sigma` for the BPSK
    /// segment, `sigma/sqrt(2)` for the QPSK square.
    pub fn hull_half_width(&self) -> f64 {
        match self.kind {
            ConstellationKind::Bpsk => self.sigma,
            ConstellationKind::Qpsk => self.sigma * FRAC_1_SQRT_2,
        }
    }

    /// Orthogonal projection onto the convex hull.
    pub fn project(&self, z: C64) -> C64 {
        let a = self.hull_half_width();
        match self.kind {
            ConstellationKind::Bpsk => C64::new(z.re.clamp(-a, a), 0.0),
            ConstellationKind::Qpsk => C64::new(z.re.clamp(-a, a), z.im.clamp(-a, a)),
        }
    }

    pub fn in_hull(&self, z: C64, tol: f64) -> bool {
        let a = self.hull_half_width() + tol;
        match self.kind {
            ConstellationKind::Bpsk => z.re.abs() <= a && z.im.abs() <= tol,
            ConstellationKind::Qpsk => z.re.abs() <= a && z.im.abs() <= a,
        }
    }

    /// Distance of a hull member to the hull's (relative) boundary.
    pub fn boundary_distance(&self, z: C64) -> f64 {
        let a = self.hull_half_width();
        match self.kind {
            ConstellationKind::Bpsk => (a - z.re.abs()).max(0.0),
            ConstellationKind::Qpsk => (a - z.re.abs()).min(a - z.im.abs()).max(0.0),
        }
    }
}

/// Spherical-wave line-of-sight geometry, lengths in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosGeometry {
    pub antenna_spacing: f64,
    pub user_distance: f64,
    /// Angle from broadside, radians.
    pub user_angle: f64,
}

impl Default for LosGeometry {
    fn default() -> Self {
        Self { antenna_spacing: 0.5, user_distance: 50.0, user_angle: 0.0 }
    }
}

impl LosGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.antenna_spacing > 0.0) || !self.antenna_spacing.is_finite() {
            return Err(Error::Parameter("antenna spacing must be positive".into()));
        }
        if !(self.user_distance > 0.0) || !self.user_distance.is_finite() {
            return Err(Error::Parameter("user distance must be positive".into()));
        }
        if !self.user_angle.is_finite() {
            return Err(Error::Parameter("user angle must be finite".into()));
        }
        Ok(())
    }
}

/// Transmitted symbols, channel and noise level of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionGroundTruth {
    pub s_true: ComplexVector,
    pub h_true: ComplexVector,
    pub n0: f64,
}

impl TransmissionGroundTruth {
    pub fn new(s_true: ComplexVector, h_true: ComplexVector, n0: f64) -> Result<Self> {
        if s_true.is_empty() || h_true.is_empty() {
            return Err(Error::Dimension("empty symbol or channel vector".into()));
        }
        if !(n0 >= 0.0) || !n0.is_finite() {
            return Err(Error::Parameter(format!("noise variance must be >= 0, got {n0}")));
        }
        Ok(Self { s_true, h_true, n0 })
    }

    pub fn pilot(&self) -> C64 {
        self.s_true[0]
    }
}

/// Received `B x (K+1)` block with its cached Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceivedBlock {
    y: ComplexMatrix,
    g: ComplexMatrix,
    truth: Option<TransmissionGroundTruth>,
}

impl ReceivedBlock {
    pub fn new(y: ComplexMatrix, truth: Option<TransmissionGroundTruth>) -> Result<Self> {
        let g = gram(&y)?;
        if let Some(t) = &truth {
            if t.h_true.len() != y.rows() || t.s_true.len() != y.cols() {
                return Err(Error::Dimension("ground truth does not match the block".into()));
            }
        }
        Ok(Self { y, g, truth })
    }

    pub fn y(&self) -> &ComplexMatrix {
        &self.y
    }

    pub fn gram(&self) -> &ComplexMatrix {
        &self.g
    }

    pub fn truth(&self) -> Option<&TransmissionGroundTruth> {
        self.truth.as_ref()
    }

    /// Number of antennas `B`.
    pub fn antennas(&self) -> usize {
        self.y.rows()
    }

    /// Number of data slots `K` (the first of the `K+1` slots is the pilot).
    pub fn data_slots(&self) -> usize {
        self.y.cols() - 1
    }

    /// Same block with `Y` replaced by `c Y`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        Self::new(self.y.scaled(c), self.truth.clone())
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, std_per_axis: f64) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(std_per_axis * re, std_per_axis * im)
}

/// I.i.d. `CN(0, 1)` Rayleigh channel.
pub fn gen_rayleigh_channel<R: Rng + ?Sized>(b: usize, rng: &mut R) -> Result<ComplexVector> {
    if b == 0 {
        return Err(Error::Dimension("channel needs at least one antenna".into()));
    }
    Ok(ComplexVector::from_raw((0..b).map(|_| complex_normal(rng, FRAC_1_SQRT_2)).collect()))
}

/// Unit-magnitude spherical-wave channel of a uniform linear array.
///
/// Antennas sit on the x axis centred at the origin; the user is at
/// `d (sin angle, cos angle)`. Entry `b` is `exp(j 2 pi d_b)` where `d_b` is the
/// exact user-to-antenna distance.
pub fn gen_los_channel(b: usize, geom: &LosGeometry) -> Result<ComplexVector> {
    if b == 0 {
        return Err(Error::Dimension("channel needs at least one antenna".into()));
    }
    geom.validate()?;
    let ux = geom.user_distance * geom.user_angle.sin();
    let uy = geom.user_distance * geom.user_angle.cos();
    let center = (b as f64 - 1.0) / 2.0;
    Ok(ComplexVector::from_raw(
        (0..b)
            .map(|i| {
                let x = (i as f64 - center) * geom.antenna_spacing;
                let d = (ux - x).hypot(uy);
                C64::from_polar(1.0, 2.0 * PI * d.fract())
            })
            .collect(),
    ))
}

/// `K+1` symbols: the pilot followed by `K` uniform draws from the constellation.
pub fn random_data_vector<R: Rng + ?Sized>(
    c: &Constellation,
    k: usize,
    s_check: C64,
    rng: &mut R,
) -> Result<ComplexVector> {
    let pilot = c
        .index_of(s_check)
        .ok_or_else(|| Error::Parameter(format!("pilot {s_check} is not a constellation point")))?;
    let mut s = Vec::with_capacity(k + 1);
    s.push(c.points()[pilot]);
    for _ in 0..k {
        s.push(c.points()[rng.random_range(0..c.size())]);
    }
    Ok(ComplexVector::from_raw(s))
}

/// Passes the ground truth through `Y = h s^H + N`.
///
/// Noise entries are drawn row by row as `sqrt(n0/2) (z_re + j z_im)` with
/// standard-normal `z`, so two calls with identically seeded streams produce
/// noise matrices that differ only by the factor `sqrt(n0)`.
pub fn transmit<R: Rng + ?Sized>(
    truth: &TransmissionGroundTruth,
    rng: &mut R,
) -> Result<ReceivedBlock> {
    let b = truth.h_true.len();
    let n = truth.s_true.len();
    let std = (truth.n0 / 2.0).sqrt();
    let mut y = ComplexMatrix::zeros(b, n);
    for i in 0..b {
        for j in 0..n {
            y[(i, j)] = truth.h_true[i] * truth.s_true[j].conj() + complex_normal(rng, std);
        }
    }
    ReceivedBlock::new(y, Some(truth.clone()))
}

/// Noise variance for a per-receive-antenna average SNR, `sigma^2 E|h_b|^2 / N0`
/// with `E|h_b|^2 = 1`.
pub fn snr_to_n0(snr_db: f64, c: &Constellation) -> f64 {
    c.sigma() * c.sigma() / 10f64.powf(snr_db / 10.0)
}
