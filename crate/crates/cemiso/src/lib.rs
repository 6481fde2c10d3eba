//! Per-antenna constant-envelope (CE) precoding for the single-user MISO
//! channel.
//!
//! When every transmit antenna is forced to radiate at a fixed amplitude
//! `sqrt(P_T/N)`, the noise-free received signal `sum_i h_i e^{j theta_i} / sqrt(N)`
//! sweeps out an annulus (a "doughnut") in the complex plane. This crate
//! provides:
//!
//! - [`fading`]: seeded, reproducible channel generation (i.i.d. Rayleigh,
//!   bounded-magnitude i.i.d., and equal-magnitude direct line of sight).
//! - [`doughnut`]: the annulus geometry — outer radius `||h||_1 / sqrt(N)`,
//!   inner radius via coordinate-descent minimization, closed forms for
//!   two and three antennas, and a brute-force grid oracle.
//! - [`precoder`]: phase-angle solvers that hit a target symbol inside the
//!   annulus (homotopy continuation, cyclic coordinate descent, depth-first
//!   arc search, closed forms), plus a size-based dispatcher.
//! - [`capacity`]: rate bounds for the annulus-constrained AWGN channel and
//!   the PAPC/ATPC baselines, power-gap bounds, and amplifier-efficiency
//!   bookkeeping.
//! - [`alphabets`]: ring ("discrete amplitude, uniform phase") input
//!   alphabets, mutual-information estimation by radial quadrature, and the
//!   ring-placement optimizer.
//! - [`experiments`]: seeded Monte-Carlo harness producing deterministic CSV
//!   tables (inner/outer radius ratios, ergodic rate curves, minimum SNR for
//!   a target rate, array power gain, outage bounds, inner-radius tails).

pub mod alphabets;
pub mod capacity;
pub mod doughnut;
pub mod experiments;
pub mod fading;
pub mod precoder;
pub mod rng;

pub use num_complex::Complex64;
