//! Rate bounds for the annulus-constrained AWGN channel and its baselines.
//!
//! All rates are bits per channel use; SNR is the linear power ratio
//! `P_T / sigma^2`. The achievable-rate lower bound comes from the entropy
//! power inequality applied to a uniform input on the annulus; the upper
//! bound is the minimum of a divergence-based bound (quartic-exponential
//! reference density, optimized in closed form over its free parameter) and
//! the per-antenna average-power capacity. The average-total-power capacity
//! is the maximum-ratio-transmission baseline.

use crate::doughnut::DoughnutRegion;
use crate::fading::ChannelVector;
use std::f64::consts::{E, PI};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CapacityError {
    #[error("snr must be positive and finite, got {0}")]
    InvalidSnr(f64),
    #[error("amplifier efficiency must lie in (0, 1], got {0}")]
    InvalidEfficiency(f64),
}

/// Linear SNR `P_T / sigma^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrPoint {
    linear: f64,
}

impl SnrPoint {
    pub fn from_linear(linear: f64) -> Result<Self, CapacityError> {
        if !(linear > 0.0 && linear.is_finite()) {
            return Err(CapacityError::InvalidSnr(linear));
        }
        Ok(SnrPoint { linear })
    }

    pub fn from_db(db: f64) -> Result<Self, CapacityError> {
        Self::from_linear(10f64.powf(db / 10.0))
    }

    pub fn linear(&self) -> f64 {
        self.linear
    }

    pub fn db(&self) -> f64 {
        10.0 * self.linear.log10()
    }
}

pub fn db_from_linear(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn linear_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Achievable-rate lower bound from a uniform input on the annulus.
#[derive(Clone, Copy, Debug)]
pub struct EpiBound {
    pub bits: f64,
    /// True when the annulus has no area and the bound is vacuous.
    pub degenerate: bool,
}

pub fn epi_lower_bound(region: &DoughnutRegion, snr: SnrPoint) -> EpiBound {
    let m2 = region.outer() * region.outer();
    let i2 = region.inner() * region.inner();
    if !(m2 > i2) {
        return EpiBound {
            bits: 0.0,
            degenerate: true,
        };
    }
    EpiBound {
        bits: (1.0 + snr.linear() * (m2 - i2) / E).log2(),
        degenerate: false,
    }
}

/// Divergence-based upper bound, already minimized over the free parameter
/// of the reference density.
pub fn kl_upper_bound_i1(region: &DoughnutRegion, snr: SnrPoint) -> f64 {
    let m2 = region.outer() * region.outer();
    let s = snr.linear();
    0.5 * (PI / (2.0 * E)).log2() + 0.5 * (m2 * m2 * s * s + 4.0 * m2 * s + 2.0).log2()
}

/// Weaker second form of the same bound; dominates `kl_upper_bound_i1`.
pub fn kl_upper_bound_i1_loose(region: &DoughnutRegion, snr: SnrPoint) -> f64 {
    let m2 = region.outer() * region.outer();
    0.5 * (2.0 * PI / E).log2() + (1.0 + snr.linear() * m2 / 2.0).log2()
}

/// The bound of `kl_upper_bound_i1` before minimization, as a function of
/// the reference-density parameter `beta > 0`.
pub fn kl_bound_at_beta(region: &DoughnutRegion, snr: SnrPoint, beta: f64) -> f64 {
    let m2 = region.outer() * region.outer();
    let s = snr.linear();
    let quartic = m2 * m2 + 2.0 / (s * s) + 4.0 * m2 / s;
    -(2.0 * beta).log2() + PI.powi(3) * beta * beta * std::f64::consts::LOG2_E * quartic
        - (PI * E / s).log2()
}

/// Golden-section minimization of `kl_bound_at_beta`; an independent route
/// to `kl_upper_bound_i1`.
pub fn kl_upper_bound_i1_numeric(region: &DoughnutRegion, snr: SnrPoint) -> f64 {
    let f = |log_beta: f64| kl_bound_at_beta(region, snr, log_beta.exp());
    let (mut a, mut b) = (-40.0f64, 40.0f64);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

/// Capacity under a per-antenna average power constraint of `P_T / N`.
pub fn papc_capacity(region: &DoughnutRegion, snr: SnrPoint) -> f64 {
    let m2 = region.outer() * region.outer();
    (1.0 + snr.linear() * m2).log2()
}

/// Capacity under an average-only total power constraint (MRT baseline).
pub fn atpc_capacity(h: &ChannelVector, snr: SnrPoint) -> f64 {
    atpc_capacity_from_norm(h.l2_sqr(), snr)
}

/// Same, from a cached squared channel norm.
pub fn atpc_capacity_from_norm(l2_sqr: f64, snr: SnrPoint) -> f64 {
    (1.0 + snr.linear() * l2_sqr).log2()
}

/// `min(I1, C_PAPC)`: the operative upper bound.
pub fn combined_upper_bound_i2(region: &DoughnutRegion, snr: SnrPoint) -> f64 {
    kl_upper_bound_i1(region, snr).min(papc_capacity(region, snr))
}

/// The full bound set at one SNR point.
#[derive(Clone, Copy, Debug)]
pub struct RateBounds {
    pub epi_lower: f64,
    pub kl_upper_i1: f64,
    pub papc: f64,
    pub combined_upper_i2: f64,
    pub atpc: f64,
}

pub fn rate_bounds(h: &ChannelVector, region: &DoughnutRegion, snr: SnrPoint) -> RateBounds {
    RateBounds {
        epi_lower: epi_lower_bound(region, snr).bits,
        kl_upper_i1: kl_upper_bound_i1(region, snr),
        papc: papc_capacity(region, snr),
        combined_upper_i2: combined_upper_bound_i2(region, snr),
        atpc: atpc_capacity(h, snr),
    }
}

/// Per-realization quantity `(M^2 - m^2) / (e ||h||^2)` controlling the rate
/// gap to the MRT baseline. Takes the inner radius as input so evaluation
/// stays decoupled from solver cost.
pub fn kappa(h: &ChannelVector, inner: f64) -> f64 {
    let n = h.n() as f64;
    let m2 = h.l1() * h.l1() / n;
    (m2 - inner * inner) / (E * h.l2_sqr())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapRegime {
    LowSnr,
    HighSnr,
}

/// Per-realization power-gap bounds versus the MRT baseline, in dB.
#[derive(Clone, Copy, Debug)]
pub struct GapBoundsDb {
    pub lower_db: f64,
    pub upper_db: f64,
}

pub fn power_gap_bounds(h: &ChannelVector, inner: f64, regime: GapRegime) -> GapBoundsDb {
    let n = h.n() as f64;
    let m2 = h.l1() * h.l1() / n;
    let ratio = h.l2_sqr() / m2;
    match regime {
        GapRegime::LowSnr => {
            let g = db_from_linear(ratio);
            GapBoundsDb {
                lower_db: g,
                upper_db: g,
            }
        }
        GapRegime::HighSnr => GapBoundsDb {
            lower_db: db_from_linear(2.0 * ratio),
            upper_db: db_from_linear(1.0 / kappa(h, inner)),
        },
    }
}

/// Capacity-ratio bounds relative to the MRT baseline.
#[derive(Clone, Copy, Debug)]
pub struct RatioBounds {
    /// `1 - log2(1/kappa) / C_ATPC`; approaches 1 as the baseline capacity
    /// grows.
    pub lower: f64,
    /// Low-SNR ratio `M^2 / ||h||^2`.
    pub low_snr: f64,
}

pub fn capacity_ratio_bound(
    h: &ChannelVector,
    region: &DoughnutRegion,
    snr: SnrPoint,
) -> RatioBounds {
    let c_atpc = atpc_capacity(h, snr);
    let k = kappa(h, region.inner());
    let m2 = region.outer() * region.outer();
    RatioBounds {
        lower: 1.0 - (1.0 / k).log2() / c_atpc,
        low_snr: m2 / h.l2_sqr(),
    }
}

/// Net power-efficiency gain of running efficient nonlinear amplifiers with
/// constant-envelope inputs instead of linear amplifiers with the MRT
/// baseline, given the required extra transmit power in dB.
#[derive(Clone, Copy, Debug)]
pub struct EfficiencyGain {
    pub linear: f64,
    pub db: f64,
}

pub fn efficiency_gain_rho(
    pae_nonlinear: f64,
    pae_linear: f64,
    gap_db: f64,
) -> Result<EfficiencyGain, CapacityError> {
    for pae in [pae_nonlinear, pae_linear] {
        if !(pae > 0.0 && pae <= 1.0) {
            return Err(CapacityError::InvalidEfficiency(pae));
        }
    }
    let linear = (pae_nonlinear / pae_linear) / linear_from_db(gap_db);
    Ok(EfficiencyGain {
        linear,
        db: db_from_linear(linear),
    })
}

/// `E|h|^2 / (E|h|)^2` for unit-variance Rayleigh gains: `4 / pi`.
pub fn rayleigh_moment_ratio() -> f64 {
    4.0 / PI
}

/// Large-array limits for an i.i.d. family with amplitude moment ratio
/// `E|h|^2 / (E|h|)^2 = ratio`: low-SNR gap, high-SNR gap bounds (dB), and
/// the kappa limit.
pub fn asymptotic_low_snr_gap_db(ratio: f64) -> f64 {
    db_from_linear(ratio)
}

pub fn asymptotic_high_snr_gap_bounds_db(ratio: f64) -> (f64, f64) {
    (db_from_linear(2.0 * ratio), db_from_linear(E * ratio))
}

pub fn kappa_limit(ratio: f64) -> f64 {
    1.0 / (E * ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doughnut::{outer_radius, region_for, InnerOpts};
    use crate::fading::{draw_channel, FadingKind, FadingModel};
    use crate::rng::Stream;
    use num_complex::Complex64;

    fn region(inner: f64, outer: f64, n: usize) -> DoughnutRegion {
        DoughnutRegion::new(inner, outer, n).unwrap()
    }

    #[test]
    fn snr_db_round_trip() {
        for db in [-20.0, -3.2, 0.0, 7.7, 25.0] {
            let s = SnrPoint::from_db(db).unwrap();
            assert!((s.db() - db).abs() < 1e-12);
        }
        assert!(SnrPoint::from_linear(0.0).is_err());
        assert!(SnrPoint::from_linear(-1.0).is_err());
    }

    #[test]
    fn epi_examples() {
        // snr (M^2 - m^2) / e = 1 gives exactly one bit.
        let r = region(0.0, 1.0, 4);
        let snr = SnrPoint::from_linear(E).unwrap();
        let b = epi_lower_bound(&r, snr);
        assert!(!b.degenerate);
        assert!((b.bits - 1.0).abs() < 1e-12);

        let degenerate = epi_lower_bound(&region(1.0, 1.0, 4), snr);
        assert!(degenerate.degenerate);
        assert_eq!(degenerate.bits, 0.0);

        // Equal-magnitude channel, N = 4, unit gains, snr = 1:
        // M^2 = 4, m = 0 -> log2(1 + 4/e).
        let dlos = region(0.0, 2.0, 4);
        let b = epi_lower_bound(&dlos, SnrPoint::from_linear(1.0).unwrap());
        let expect = (1.0 + 4.0 / E).ln() / 2f64.ln();
        assert!((b.bits - expect).abs() < 1e-12);
        assert!((expect - 1.3054).abs() < 1e-3);
    }

    #[test]
    fn i1_low_snr_limit() {
        let r = region(0.0, 1.0, 2);
        let i1 = kl_upper_bound_i1(&r, SnrPoint::from_linear(1e-14).unwrap());
        // Limit is 0.5 log2(pi / e).
        let expect = 0.5 * (PI / E).log2();
        assert!((i1 - expect).abs() < 1e-6, "{i1} vs {expect}");
        assert!((expect - 0.1044).abs() < 1e-3);
    }

    #[test]
    fn i1_closed_form_matches_numeric_minimization() {
        let mut stream = Stream::substream(91, 0);
        for _ in 0..200 {
            let outer = 0.2 + 3.0 * stream.uniform();
            let r = region(0.0, outer, 4);
            let snr = SnrPoint::from_db(-15.0 + 40.0 * stream.uniform()).unwrap();
            let closed = kl_upper_bound_i1(&r, snr);
            let numeric = kl_upper_bound_i1_numeric(&r, snr);
            assert!(
                (closed - numeric).abs() < 1e-9,
                "closed {closed} numeric {numeric}"
            );
        }
        // Spot value: M = 1, snr = 100.
        let r = region(0.0, 1.0, 4);
        let i1 = kl_upper_bound_i1(&r, SnrPoint::from_linear(100.0).unwrap());
        let expect = 0.5 * (PI / (2.0 * E)).log2() + 0.5 * 10402f64.log2();
        assert!((i1 - expect).abs() < 1e-12);
        assert!((i1 - 6.2767).abs() < 1e-3, "{i1}");
    }

    #[test]
    fn i1_below_loose_form_and_monotone() {
        let r = region(0.0, 1.7, 4);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..60 {
            let snr = SnrPoint::from_db(-20.0 + k as f64).unwrap();
            let i1 = kl_upper_bound_i1(&r, snr);
            assert!(i1 <= kl_upper_bound_i1_loose(&r, snr) + 1e-12);
            assert!(i1 > prev);
            prev = i1;
        }
    }

    #[test]
    fn papc_and_atpc_collapse_cases() {
        let snr = SnrPoint::from_linear(3.0).unwrap();
        // N = 1.
        let h = ChannelVector::new(vec![Complex64::new(0.8, -0.3)]).unwrap();
        let r = region(h.l2(), h.l2(), 1);
        assert!((papc_capacity(&r, snr) - atpc_capacity(&h, snr)).abs() < 1e-12);
        // Equal magnitudes, N = 4.
        let h = ChannelVector::new(vec![Complex64::new(1.0, 0.0); 4]).unwrap();
        let r = region(0.0, outer_radius(&h), 4);
        assert!((papc_capacity(&r, snr) - atpc_capacity(&h, snr)).abs() < 1e-12);
        // h = (1, i).
        let h = ChannelVector::new(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)])
            .unwrap();
        let r = region(0.0, outer_radius(&h), 2);
        let expect = (1.0 + 2.0 * snr.linear()).log2();
        assert!((papc_capacity(&r, snr) - expect).abs() < 1e-12);
        assert!((atpc_capacity(&h, snr) - expect).abs() < 1e-12);
    }

    #[test]
    fn i2_regimes() {
        let r = region(0.0, 1.0, 4);
        // Low peak SNR: the PAPC branch is tighter.
        let low = SnrPoint::from_linear(0.5).unwrap();
        assert_eq!(combined_upper_bound_i2(&r, low), papc_capacity(&r, low));
        assert!(kl_upper_bound_i1(&r, low) > papc_capacity(&r, low));
        // High peak SNR: the divergence branch is tighter and the difference
        // approaches 0.5 log2(2e/pi).
        let high = SnrPoint::from_linear(1e6).unwrap();
        let i1 = kl_upper_bound_i1(&r, high);
        let papc = papc_capacity(&r, high);
        assert_eq!(combined_upper_bound_i2(&r, high), i1);
        let diff = papc - i1;
        let expect = 0.5 * (2.0 * E / PI).log2();
        assert!((diff - expect).abs() < 1e-4, "diff {diff} expect {expect}");
        assert!((expect - 0.3956).abs() < 1e-4);
        // Always below both arguments.
        for db in [-10.0, 0.0, 10.0, 20.0] {
            let s = SnrPoint::from_db(db).unwrap();
            let i2 = combined_upper_bound_i2(&r, s);
            assert!(i2 <= kl_upper_bound_i1(&r, s) && i2 <= papc_capacity(&r, s));
        }
    }

    #[test]
    fn bound_ordering_on_random_channels() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 6).unwrap();
        for trial in 0..300 {
            let h = draw_channel(&model, &mut Stream::substream(92, trial));
            let (r, _) = region_for(&h, &InnerOpts::default());
            let snr = SnrPoint::from_db(-10.0 + 30.0 * Stream::substream(93, trial).uniform())
                .unwrap();
            let b = rate_bounds(&h, &r, snr);
            if !r.is_degenerate() {
                assert!(b.epi_lower <= b.combined_upper_i2 + 1e-12);
            }
            assert!(b.papc <= b.atpc + 1e-12);
            assert!((b.combined_upper_i2 - b.kl_upper_i1.min(b.papc)).abs() < 1e-15);
        }
    }

    #[test]
    fn kappa_and_gap_examples() {
        // Equal magnitudes, m = 0: 1/kappa = e exactly.
        let h = ChannelVector::new(vec![Complex64::new(1.0, 0.0); 4]).unwrap();
        let k = kappa(&h, 0.0);
        assert!((1.0 / k - E).abs() < 1e-12);

        let low = power_gap_bounds(&h, 0.0, GapRegime::LowSnr);
        assert!(low.lower_db.abs() < 1e-12 && low.upper_db.abs() < 1e-12);
        let high = power_gap_bounds(&h, 0.0, GapRegime::HighSnr);
        assert!((high.lower_db - db_from_linear(2.0)).abs() < 1e-12);
        assert!((high.upper_db - db_from_linear(E)).abs() < 1e-12);
        assert!((high.upper_db - 4.3429).abs() < 1e-3);
        // Upper minus lower is 10 log10(e/2) when m = 0.
        let gap = high.upper_db - high.lower_db;
        assert!((gap - db_from_linear(E / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_limits_for_rayleigh() {
        let ratio = rayleigh_moment_ratio();
        assert!((asymptotic_low_snr_gap_db(ratio) - 1.0491).abs() < 1e-3);
        let (lo, hi) = asymptotic_high_snr_gap_bounds_db(ratio);
        assert!((lo - 4.0601).abs() < 1e-3, "{lo}");
        assert!((hi - 5.3921).abs() < 1e-3, "{hi}");
        assert!((kappa_limit(ratio) - (PI / 4.0) / E).abs() < 1e-15);
        assert!((kappa_limit(ratio) - 0.28893).abs() < 1e-4);
    }

    #[test]
    fn ratio_bound_examples() {
        // kappa = 1/e gives lower = 1 - log2(e)/C_ATPC.
        let h = ChannelVector::new(vec![Complex64::new(1.0, 0.0); 4]).unwrap();
        let r = region(0.0, outer_radius(&h), 4);
        let snr = SnrPoint::from_linear(10.0).unwrap();
        let rb = capacity_ratio_bound(&h, &r, snr);
        let c = atpc_capacity(&h, snr);
        assert!((rb.lower - (1.0 - std::f64::consts::LOG2_E / c)).abs() < 1e-12);
        // Equal magnitudes: low-SNR ratio is exactly 1.
        assert!((rb.low_snr - 1.0).abs() < 1e-12);
        // Growing baseline capacity drives the bound to 1.
        let rb_hi = capacity_ratio_bound(&h, &r, SnrPoint::from_linear(1e30).unwrap());
        assert!(rb_hi.lower > 0.95);
    }

    #[test]
    fn rho_examples() {
        let g = efficiency_gain_rho(0.8, 0.2, 6.0).unwrap();
        assert!((g.linear - 4.0 / linear_from_db(6.0)).abs() < 1e-12);
        assert!((g.linear - 1.0047).abs() < 1e-3);
        assert!(g.linear > 1.0);

        let g = efficiency_gain_rho(0.8, 0.2, 1.05).unwrap();
        assert!((g.db - (db_from_linear(4.0) - 1.05)).abs() < 1e-9);
        assert!((g.db - 4.97).abs() < 0.01);

        let g = efficiency_gain_rho(0.5, 0.5, 0.0).unwrap();
        assert!((g.linear - 1.0).abs() < 1e-15);

        assert!(efficiency_gain_rho(0.0, 0.2, 3.0).is_err());
        assert!(efficiency_gain_rho(0.8, 1.2, 3.0).is_err());
    }
}
