//! Seeded generation of channel realizations.
//!
//! Three fading families are supported: i.i.d. circularly symmetric complex
//! Gaussian gains with unit variance (Rayleigh), i.i.d. gains with bounded
//! magnitude (magnitude uniform on `[0, bound]`, phase uniform), and an
//! equal-magnitude direct-line-of-sight family where only the phases are
//! random.

use crate::rng::{mix64, Stream};
use num_complex::Complex64;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FadingError {
    #[error("antenna count must be at least 1")]
    InvalidAntennaCount,
    #[error("magnitude bound must be positive, got {0}")]
    InvalidBound(f64),
    #[error("common magnitude must be positive, got {0}")]
    InvalidMagnitude(f64),
    #[error("unrecognized fading spec `{0}` (expected rayleigh | bounded:<B> | dlos:<A>)")]
    UnrecognizedSpec(String),
}

/// Fading family for a single channel draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FadingKind {
    /// Each gain i.i.d. CN(0, 1): real and imaginary parts of variance 1/2.
    IidRayleigh,
    /// Each gain has magnitude uniform on `[0, bound]` and uniform phase.
    IidBoundedMagnitude { bound: f64 },
    /// All gains share one magnitude; phases i.i.d. uniform.
    Dlos { common_magnitude: f64 },
}

impl FromStr for FadingKind {
    type Err = FadingError;

    fn from_str(s: &str) -> Result<Self, FadingError> {
        if s.eq_ignore_ascii_case("rayleigh") {
            return Ok(FadingKind::IidRayleigh);
        }
        if let Some(rest) = s.strip_prefix("bounded:") {
            let bound: f64 = rest
                .parse()
                .map_err(|_| FadingError::UnrecognizedSpec(s.to_string()))?;
            return Ok(FadingKind::IidBoundedMagnitude { bound });
        }
        if let Some(rest) = s.strip_prefix("dlos:") {
            let mag: f64 = rest
                .parse()
                .map_err(|_| FadingError::UnrecognizedSpec(s.to_string()))?;
            return Ok(FadingKind::Dlos {
                common_magnitude: mag,
            });
        }
        Err(FadingError::UnrecognizedSpec(s.to_string()))
    }
}

impl std::fmt::Display for FadingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FadingKind::IidRayleigh => write!(f, "rayleigh"),
            FadingKind::IidBoundedMagnitude { bound } => write!(f, "bounded:{bound}"),
            FadingKind::Dlos { common_magnitude } => write!(f, "dlos:{common_magnitude}"),
        }
    }
}

/// A fading family together with the antenna count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FadingModel {
    kind: FadingKind,
    n_antennas: usize,
}

impl FadingModel {
    pub fn new(kind: FadingKind, n_antennas: usize) -> Result<Self, FadingError> {
        if n_antennas == 0 {
            return Err(FadingError::InvalidAntennaCount);
        }
        match kind {
            FadingKind::IidBoundedMagnitude { bound } if !(bound > 0.0) => {
                return Err(FadingError::InvalidBound(bound))
            }
            FadingKind::Dlos { common_magnitude } if !(common_magnitude > 0.0) => {
                return Err(FadingError::InvalidMagnitude(common_magnitude))
            }
            _ => {}
        }
        Ok(FadingModel { kind, n_antennas })
    }

    pub fn kind(&self) -> FadingKind {
        self.kind
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }
}

/// Complex channel gains with cached amplitude norms.
#[derive(Clone, Debug)]
pub struct ChannelVector {
    gains: Vec<Complex64>,
    l1: f64,
    l2: f64,
    linf: f64,
}

impl ChannelVector {
    pub fn new(gains: Vec<Complex64>) -> Result<Self, FadingError> {
        if gains.is_empty() {
            return Err(FadingError::InvalidAntennaCount);
        }
        let mut l1 = 0.0;
        let mut l2sq = 0.0;
        let mut linf: f64 = 0.0;
        for g in &gains {
            let a = g.norm();
            l1 += a;
            l2sq += a * a;
            linf = linf.max(a);
        }
        Ok(ChannelVector {
            gains,
            l1,
            l2: l2sq.sqrt(),
            linf,
        })
    }

    pub fn n(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    /// Sum of gain magnitudes.
    pub fn l1(&self) -> f64 {
        self.l1
    }

    /// Euclidean norm of the gain vector.
    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn l2_sqr(&self) -> f64 {
        self.l2 * self.l2
    }

    /// Largest gain magnitude.
    pub fn linf(&self) -> f64 {
        self.linf
    }

    /// Deterministic hash of the gain bits; seeds solver restarts.
    pub fn seed_hash(&self) -> u64 {
        let mut acc = 0x51ab_c0de_u64;
        for g in &self.gains {
            acc = mix64(acc ^ g.re.to_bits());
            acc = mix64(acc ^ g.im.to_bits());
        }
        acc
    }
}

/// Draw one channel realization from `model` using `stream`.
///
/// Identical `(seed, trial)` streams give bit-identical channels regardless
/// of thread count or call order.
pub fn draw_channel(model: &FadingModel, stream: &mut Stream) -> ChannelVector {
    let n = model.n_antennas();
    let mut gains = Vec::with_capacity(n);
    match model.kind() {
        FadingKind::IidRayleigh => {
            for _ in 0..n {
                gains.push(stream.complex_gaussian());
            }
        }
        FadingKind::IidBoundedMagnitude { bound } => {
            for _ in 0..n {
                let mag = bound * stream.uniform();
                let phase = stream.angle();
                gains.push(Complex64::from_polar(mag, phase));
            }
        }
        FadingKind::Dlos { common_magnitude } => {
            for _ in 0..n {
                let phase = stream.angle();
                gains.push(Complex64::from_polar(common_magnitude, phase));
            }
        }
    }
    ChannelVector::new(gains).expect("n_antennas >= 1 by construction")
}
