//! Ring input alphabets and mutual-information estimation.
//!
//! Inputs on the annulus are either uniform over its area or "discrete in
//! amplitude, uniform in phase": L concentric rings with per-ring
//! probabilities. For both, circular symmetry collapses the output
//! differential entropy to a one-dimensional radial integral whose density
//! is a mixture of Rice-type ring convolutions, evaluated here with
//! composite Gauss-Legendre panels and a scaled Bessel kernel. Working in
//! noise units makes every estimate a function of the ring radii times
//! `sqrt(snr)` only.
//!
//! Ergodic averages over channel ensembles evaluate the (inner/outer ratio,
//! peak amplitude) surface on a small grid and interpolate, which keeps
//! ring-placement optimization affordable at Monte-Carlo scale.

use crate::capacity::SnrPoint;
use crate::doughnut::DoughnutRegion;
use crate::rng::Stream;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{E, PI};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlphabetError {
    #[error("ring amplitudes must be strictly increasing in (0, 1], got {0:?}")]
    InvalidAlphas(Vec<f64>),
    #[error("ring probabilities must be nonnegative and sum to 1")]
    InvalidProbs,
}

#[derive(Debug, Error, PartialEq)]
pub enum MiError {
    #[error("annulus is degenerate (inner = outer); no area to distribute over")]
    DegenerateRegion,
    #[error("quadrature produced a non-finite value")]
    QuadratureFailure,
    #[error("channel ensemble is empty")]
    EmptyEnsemble,
}

// ---------------------------------------------------------------------------
// Scaled Bessel kernel
// ---------------------------------------------------------------------------

/// `exp(-x) * I0(x)` for `x >= 0` without overflow.
///
/// Power series below the switch point (all terms positive, no
/// cancellation), asymptotic series above it.
pub fn scaled_bessel_i0(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 21.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        let mut c = 1.0;
        let mut sum = 1.0;
        for k in 1..=20 {
            let kf = k as f64;
            c *= (2.0 * kf - 1.0) * (2.0 * kf - 1.0) / (8.0 * kf * x);
            sum += c;
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Gauss-Legendre panels
// ---------------------------------------------------------------------------

const GL_ORDER: usize = 16;

fn gl16() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        // Nodes of the order-16 Legendre polynomial by Newton iteration.
        let n = GL_ORDER;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    })
}

/// Integrate `f` over `[lo, hi]` with composite 16-point panels of width at
/// most `panel_width`.
fn integrate(lo: f64, hi: f64, panel_width: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let panels = (((hi - lo) / panel_width).ceil() as usize).max(1);
    let w = (hi - lo) / panels as f64;
    let nodes = gl16();
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * w;
        let mid = a + 0.5 * w;
        let half = 0.5 * w;
        let mut acc = 0.0;
        for &(x, wt) in nodes {
            acc += wt * f(mid + half * x);
        }
        total += acc * half;
    }
    total
}

// ---------------------------------------------------------------------------
// Radial mutual-information quadrature
// ---------------------------------------------------------------------------

/// Quadrature controls, in noise units.
#[derive(Clone, Copy, Debug)]
pub struct QuadOpts {
    /// Panel width for the outer radial integral and the inner amplitude
    /// integral.
    pub panel_width: f64,
    /// Half-width of the Gaussian support kept around each ring.
    pub tail: f64,
    /// When set, a coarse second pass provides the reported error estimate.
    pub with_error: bool,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts {
            panel_width: 0.5,
            tail: 9.0,
            with_error: true,
        }
    }
}

/// A mutual-information value with an estimate of its numerical error, both
/// in bits.
#[derive(Clone, Copy, Debug)]
pub struct MiEstimate {
    pub bits: f64,
    pub err: f64,
}

/// One fused pass over the radial grid: returns the output differential
/// entropy (bits) and the captured probability mass.
fn entropy_bits(
    z_lo: f64,
    z_hi: f64,
    panel_width: f64,
    density: &impl Fn(f64) -> f64,
) -> (f64, f64) {
    if z_hi <= z_lo {
        return (0.0, 0.0);
    }
    let panels = (((z_hi - z_lo) / panel_width).ceil() as usize).max(1);
    let w = (z_hi - z_lo) / panels as f64;
    let nodes = gl16();
    let mut h = 0.0;
    let mut mass = 0.0;
    for p in 0..panels {
        let a = z_lo + p as f64 * w;
        let mid = a + 0.5 * w;
        let half = 0.5 * w;
        let (mut h_acc, mut m_acc) = (0.0, 0.0);
        for &(x, wt) in nodes {
            let z = mid + half * x;
            let q = density(z).max(1e-320);
            let weight = 2.0 * PI * z * q;
            m_acc += wt * weight;
            h_acc -= wt * weight * q.log2();
        }
        h += h_acc * half;
        mass += m_acc * half;
    }
    (h, mass)
}

fn mi_from_density(
    z_lo: f64,
    z_hi: f64,
    opts: &QuadOpts,
    density: &impl Fn(f64) -> f64,
) -> MiEstimate {
    let noise_entropy = (PI * E).log2();
    let (h, mass) = entropy_bits(z_lo, z_hi, opts.panel_width, density);
    let bits = h - noise_entropy;
    let err = if opts.with_error {
        let (h2, _) = entropy_bits(z_lo, z_hi, 2.0 * opts.panel_width, density);
        (h - h2).abs() + (mass - 1.0).abs()
    } else {
        (mass - 1.0).abs()
    };
    MiEstimate { bits, err }
}

/// Mutual information of `t = u + w`, `w ~ CN(0, 1)`, where `|u|` takes the
/// given radii (noise units) with the given probabilities and the phase is
/// uniform.
pub fn ring_mixture_mi(radii: &[f64], weights: &[f64], opts: &QuadOpts) -> MiEstimate {
    assert_eq!(radii.len(), weights.len());
    let a_min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_max = radii.iter().cloned().fold(0.0, f64::max);
    if a_max <= 1e-12 {
        return MiEstimate { bits: 0.0, err: 0.0 };
    }
    let z_lo = (a_min - opts.tail).max(0.0);
    let z_hi = a_max + opts.tail;
    let density = |z: f64| -> f64 {
        let mut q = 0.0;
        for (&a, &p) in radii.iter().zip(weights) {
            let d = z - a;
            q += p * (-d * d).exp() * scaled_bessel_i0(2.0 * z * a);
        }
        q / PI
    };
    mi_from_density(z_lo, z_hi, opts, &density)
}

/// Mutual information for an input uniform over the annulus
/// `a_inner <= |u| <= a_outer` (noise units). A vanishing-width annulus
/// degrades gracefully to the single-ring case.
pub fn uniform_annulus_mi(a_inner: f64, a_outer: f64, opts: &QuadOpts) -> MiEstimate {
    if a_outer <= 1e-12 {
        return MiEstimate { bits: 0.0, err: 0.0 };
    }
    let width = a_outer - a_inner;
    if width <= 1e-9 * a_outer.max(1.0) {
        return ring_mixture_mi(&[a_outer], &[1.0], opts);
    }
    let norm = 2.0 / (PI * (a_outer * a_outer - a_inner * a_inner));
    let panel = opts.panel_width;
    let tail = opts.tail;
    let density = |z: f64| -> f64 {
        let lo = a_inner.max(z - tail);
        let hi = a_outer.min(z + tail);
        if hi <= lo {
            return 0.0;
        }
        norm * integrate(lo, hi, panel, |a| {
            let d = z - a;
            a * (-d * d).exp() * scaled_bessel_i0(2.0 * z * a)
        })
    };
    let z_lo = (a_inner - tail).max(0.0);
    let z_hi = a_outer + tail;
    mi_from_density(z_lo, z_hi, opts, &density)
}

// ---------------------------------------------------------------------------
// Ring alphabets
// ---------------------------------------------------------------------------

/// L concentric rings with normalized amplitudes `0 < a_1 < ... <= 1` and
/// ring probabilities. Ring `l` is realized at amplitude
/// `inner + alpha_l * (outer - inner)` in a given annulus.
#[derive(Clone, Debug, PartialEq)]
pub struct DauipAlphabet {
    alphas: Vec<f64>,
    probs: Vec<f64>,
}

impl DauipAlphabet {
    /// Uniform ring probabilities `1/L`.
    pub fn new(alphas: Vec<f64>) -> Result<Self, AlphabetError> {
        let l = alphas.len();
        Self::with_probs(alphas, vec![1.0 / l as f64; l])
    }

    pub fn with_probs(alphas: Vec<f64>, probs: Vec<f64>) -> Result<Self, AlphabetError> {
        if alphas.is_empty()
            || alphas[0] <= 0.0
            || alphas[alphas.len() - 1] > 1.0
            || alphas.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(AlphabetError::InvalidAlphas(alphas));
        }
        if probs.len() != alphas.len()
            || probs.iter().any(|&p| p < 0.0)
            || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(AlphabetError::InvalidProbs);
        }
        Ok(DauipAlphabet { alphas, probs })
    }

    pub fn ring_count(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Amplitude of ring `l` inside `region`.
    pub fn ring_radius(&self, l: usize, region: &DoughnutRegion) -> f64 {
        region.inner() + self.alphas[l] * (region.outer() - region.inner())
    }
}

/// Draw one symbol: pick a ring by probability, then a uniform phase.
pub fn sample_symbol(
    alphabet: &DauipAlphabet,
    region: &DoughnutRegion,
    stream: &mut Stream,
) -> Complex64 {
    let x = stream.uniform();
    let mut acc = 0.0;
    let mut ring = alphabet.ring_count() - 1;
    for (l, &p) in alphabet.probs().iter().enumerate() {
        acc += p;
        if x < acc {
            ring = l;
            break;
        }
    }
    Complex64::from_polar(alphabet.ring_radius(ring, region), stream.angle())
}

/// Mutual information of the annulus channel `y = sqrt(P_T) u + w` with a
/// ring-alphabet input, reduced to noise units.
pub fn mutual_info_dauip(
    alphabet: &DauipAlphabet,
    region: &DoughnutRegion,
    snr: SnrPoint,
    opts: &QuadOpts,
) -> Result<MiEstimate, MiError> {
    let scale = snr.linear().sqrt();
    let radii: Vec<f64> = (0..alphabet.ring_count())
        .map(|l| alphabet.ring_radius(l, region) * scale)
        .collect();
    let est = ring_mixture_mi(&radii, alphabet.probs(), opts);
    if est.bits.is_finite() {
        Ok(est)
    } else {
        Err(MiError::QuadratureFailure)
    }
}

/// Mutual information for the uniform-over-annulus input.
pub fn mutual_info_uniform_doughnut(
    region: &DoughnutRegion,
    snr: SnrPoint,
    opts: &QuadOpts,
) -> Result<MiEstimate, MiError> {
    if region.is_degenerate() {
        return Err(MiError::DegenerateRegion);
    }
    let scale = snr.linear().sqrt();
    let est = uniform_annulus_mi(region.inner() * scale, region.outer() * scale, opts);
    if est.bits.is_finite() {
        Ok(est)
    } else {
        Err(MiError::QuadratureFailure)
    }
}

// ---------------------------------------------------------------------------
// Ergodic averages over channel ensembles
// ---------------------------------------------------------------------------

/// Input distribution on the annulus for ergodic evaluation.
#[derive(Clone, Copy, Debug)]
pub enum DoughnutInput<'a> {
    Uniform,
    Dauip(&'a DauipAlphabet),
}

/// Ergodic mutual information with Monte-Carlo and quadrature error parts.
#[derive(Clone, Copy, Debug)]
pub struct ErgodicMi {
    pub mean: f64,
    /// Standard error of the ensemble mean.
    pub stderr: f64,
    /// Quadrature/interpolation error bound per sample.
    pub quad_err: f64,
}

fn direct_mi(input: DoughnutInput<'_>, rho: f64, a: f64, opts: &QuadOpts) -> MiEstimate {
    match input {
        DoughnutInput::Uniform => uniform_annulus_mi(rho * a, a, opts),
        DoughnutInput::Dauip(alpha) => {
            let radii: Vec<f64> = alpha
                .alphas()
                .iter()
                .map(|&al| a * (rho + al * (1.0 - rho)))
                .collect();
            ring_mixture_mi(&radii, alpha.probs(), opts)
        }
    }
}

/// Catmull-Rom interpolation on a uniform grid (clamped at the ends).
fn catmull_rom(values: &[f64], x: f64) -> f64 {
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let xc = x.clamp(0.0, (n - 1) as f64);
    let i = (xc.floor() as usize).min(n - 2);
    let t = xc - i as f64;
    let get = |j: i64| values[j.clamp(0, n as i64 - 1) as usize];
    let (p0, p1, p2, p3) = (get(i as i64 - 1), get(i as i64), get(i as i64 + 1), get(i as i64 + 2));
    let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
    let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
    let c = 0.5 * (p2 - p0);
    ((a * t + b) * t + c) * t + p1
}

struct Axis {
    lo: f64,
    step: f64,
    n: usize,
}

impl Axis {
    /// Grid covering `[lo, hi]` padded by one step on each side.
    fn new(lo: f64, hi: f64, target_step: f64, max_nodes: usize) -> Axis {
        let span = hi - lo;
        if span < 1e-9 {
            return Axis { lo, step: 1.0, n: 1 };
        }
        let interior = ((span / target_step).ceil() as usize).clamp(3, max_nodes);
        let step = span / interior as f64;
        Axis {
            lo: lo - step,
            step,
            n: interior + 3,
        }
    }

    fn node(&self, i: usize) -> f64 {
        self.lo + self.step * i as f64
    }

    fn coord(&self, x: f64) -> f64 {
        (x - self.lo) / self.step
    }
}

/// Below this many samples a direct per-sample evaluation is cheaper than a
/// grid fill.
const FIELD_THRESHOLD: usize = 160;

/// Ergodic mutual information over a region ensemble at one SNR point.
///
/// The per-sample value depends only on `(inner/outer, outer * sqrt(snr))`,
/// a smooth surface; for large ensembles it is evaluated on a padded grid
/// and interpolated, with the grid filled in parallel and the mean reduced
/// in trial order.
pub fn ergodic_mi(
    regions: &[DoughnutRegion],
    input: DoughnutInput<'_>,
    snr: SnrPoint,
    opts: &QuadOpts,
) -> Result<ErgodicMi, MiError> {
    if regions.is_empty() {
        return Err(MiError::EmptyEnsemble);
    }
    let scale = snr.linear().sqrt();
    let coords: Vec<(f64, f64)> = regions
        .iter()
        .map(|r| {
            let a = r.outer() * scale;
            let rho = if r.outer() > 0.0 {
                (r.inner() / r.outer()).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (rho, a.max(1e-12).ln())
        })
        .collect();

    let values: Vec<f64>;
    let quad_err;
    if regions.len() < FIELD_THRESHOLD {
        let cell = QuadOpts { with_error: false, ..*opts };
        let est: Vec<MiEstimate> = coords
            .iter()
            .map(|&(rho, la)| direct_mi(input, rho, la.exp(), &cell))
            .collect();
        values = est.iter().map(|e| e.bits).collect();
        let mid = coords[coords.len() / 2];
        quad_err = direct_mi(input, mid.0, mid.1.exp(), opts).err;
    } else {
        let (mut rho_lo, mut rho_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut la_lo, mut la_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(rho, la) in &coords {
            rho_lo = rho_lo.min(rho);
            rho_hi = rho_hi.max(rho);
            la_lo = la_lo.min(la);
            la_hi = la_hi.max(la);
        }
        let ax_rho = Axis::new(rho_lo, rho_hi, 0.12, 16);
        let ax_la = Axis::new(la_lo, la_hi, 0.22, 64);
        // Grid cells tolerate a coarser radial panel than headline
        // estimates; the interpolation allowance dominates either way.
        let cell = QuadOpts {
            with_error: false,
            panel_width: opts.panel_width.max(1.0),
            ..*opts
        };
        let grid: Vec<f64> = (0..ax_la.n * ax_rho.n)
            .into_par_iter()
            .map(|idx| {
                let i_la = idx / ax_rho.n;
                let i_rho = idx % ax_rho.n;
                let rho = ax_rho.node(i_rho).clamp(0.0, 1.0);
                let a = ax_la.node(i_la).exp();
                direct_mi(input, rho, a, &cell).bits
            })
            .collect();
        values = coords
            .iter()
            .map(|&(rho, la)| {
                let xr = ax_rho.coord(rho);
                let xl = ax_la.coord(la);
                if ax_la.n == 1 {
                    catmull_rom(&grid, xr)
                } else if ax_rho.n == 1 {
                    catmull_rom(&grid, xl)
                } else {
                    let i0 = (xl.floor() as i64).clamp(0, ax_la.n as i64 - 1) as usize;
                    let mut rows = [0.0; 4];
                    for (k, row) in rows.iter_mut().enumerate() {
                        let i = (i0 as i64 + k as i64 - 1).clamp(0, ax_la.n as i64 - 1) as usize;
                        *row = catmull_rom(&grid[i * ax_rho.n..(i + 1) * ax_rho.n], xr);
                    }
                    let t = xl - i0 as f64;
                    let a = -0.5 * rows[0] + 1.5 * rows[1] - 1.5 * rows[2] + 0.5 * rows[3];
                    let b = rows[0] - 2.5 * rows[1] + 2.0 * rows[2] - 0.5 * rows[3];
                    let c = 0.5 * (rows[2] - rows[0]);
                    ((a * t + b) * t + c) * t + rows[1]
                }
            })
            .collect();
        // Probe quadrature error at a central node; add an interpolation
        // allowance consistent with the accuracy test.
        let mid = coords[coords.len() / 2];
        quad_err = direct_mi(input, mid.0, mid.1.exp(), opts).err + 3e-3;
    }

    if values.iter().any(|v| !v.is_finite()) {
        return Err(MiError::QuadratureFailure);
    }
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
    Ok(ErgodicMi {
        mean,
        stderr: (var / t).sqrt(),
        quad_err,
    })
}

// ---------------------------------------------------------------------------
// Ring placement search
// ---------------------------------------------------------------------------

/// Search controls for the ring-placement optimization.
#[derive(Clone, Copy, Debug)]
pub struct DauipSearch {
    pub l_max: usize,
    /// Grid resolution per amplitude: candidate values `k / grid`.
    pub alpha_grid: usize,
    /// Exhaustive enumeration is used while the number of increasing
    /// combinations stays below this; larger L fall back to greedy insertion
    /// plus cyclic sweeps over the same grid.
    pub exhaustive_budget: usize,
    pub sweep_rounds: usize,
    pub quad: QuadOpts,
}

impl Default for DauipSearch {
    fn default() -> Self {
        DauipSearch {
            l_max: 4,
            alpha_grid: 32,
            exhaustive_budget: 2500,
            sweep_rounds: 2,
            quad: QuadOpts::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DauipOptimum {
    pub alphabet: DauipAlphabet,
    pub mean_mi: f64,
    pub stderr: f64,
}

fn combinations(grid: &[f64], l: usize) -> Vec<Vec<f64>> {
    fn rec(grid: &[f64], l: usize, start: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == l {
            out.push(cur.clone());
            return;
        }
        let remaining = l - cur.len();
        for i in start..=grid.len().saturating_sub(remaining) {
            cur.push(grid[i]);
            rec(grid, l, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(grid, l, 0, &mut Vec::new(), &mut out);
    out
}

fn n_choose_k(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn eval_alphas(
    regions: &[DoughnutRegion],
    snr: SnrPoint,
    alphas: &[f64],
    quad: &QuadOpts,
) -> Result<ErgodicMi, MiError> {
    let alphabet = DauipAlphabet::new(alphas.to_vec()).expect("grid alphas are valid");
    ergodic_mi(regions, DoughnutInput::Dauip(&alphabet), snr, quad)
}

/// Maximize the ensemble-mean mutual information over the ring count
/// `L <= l_max` and increasing amplitudes on the grid, uniform ring
/// probabilities throughout; ties break toward fewer rings.
pub fn optimize_dauip(
    regions: &[DoughnutRegion],
    snr: SnrPoint,
    search: &DauipSearch,
) -> Result<DauipOptimum, MiError> {
    if regions.is_empty() {
        return Err(MiError::EmptyEnsemble);
    }
    let g = search.alpha_grid.max(1);
    let grid: Vec<f64> = (1..=g).map(|k| k as f64 / g as f64).collect();

    let mut best: Option<(Vec<f64>, ErgodicMi)> = None;
    let mut prev_best_alphas: Vec<f64> = Vec::new();

    for l in 1..=search.l_max.max(1) {
        let candidate = if n_choose_k(grid.len(), l) <= search.exhaustive_budget {
            let mut best_l: Option<(Vec<f64>, ErgodicMi)> = None;
            for combo in combinations(&grid, l) {
                let est = eval_alphas(regions, snr, &combo, &search.quad)?;
                if best_l.as_ref().map_or(true, |(_, b)| est.mean > b.mean) {
                    best_l = Some((combo, est));
                }
            }
            best_l
        } else {
            // Greedy insertion into the previous optimum, then cyclic
            // sweeps over the grid.
            let mut cur = prev_best_alphas.clone();
            if cur.len() != l - 1 {
                cur = grid
                    .iter()
                    .rev()
                    .take(l - 1)
                    .cloned()
                    .rev()
                    .collect();
            }
            let mut best_l: Option<(Vec<f64>, ErgodicMi)> = None;
            for &gv in &grid {
                if cur.contains(&gv) {
                    continue;
                }
                let mut trial = cur.clone();
                trial.push(gv);
                trial.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let est = eval_alphas(regions, snr, &trial, &search.quad)?;
                if best_l.as_ref().map_or(true, |(_, b)| est.mean > b.mean) {
                    best_l = Some((trial, est));
                }
            }
            if let Some((mut alphas, mut est)) = best_l {
                for _ in 0..search.sweep_rounds {
                    for pos in 0..l {
                        for &gv in &grid {
                            if alphas.contains(&gv) && alphas[pos] != gv {
                                continue;
                            }
                            let mut trial = alphas.clone();
                            trial[pos] = gv;
                            trial.sort_by(|a, b| a.partial_cmp(b).unwrap());
                            if trial.windows(2).any(|w| w[0] >= w[1]) {
                                continue;
                            }
                            let e = eval_alphas(regions, snr, &trial, &search.quad)?;
                            if e.mean > est.mean {
                                alphas = trial;
                                est = e;
                            }
                        }
                    }
                }
                Some((alphas, est))
            } else {
                None
            }
        };

        if let Some((alphas, est)) = candidate {
            prev_best_alphas = alphas.clone();
            let improves = best
                .as_ref()
                .map_or(true, |(_, b)| est.mean > b.mean + 1e-9);
            if improves {
                best = Some((alphas, est));
            }
        }
    }

    let (alphas, est) = best.ok_or(MiError::QuadratureFailure)?;
    Ok(DauipOptimum {
        alphabet: DauipAlphabet::new(alphas).expect("validated"),
        mean_mi: est.mean,
        stderr: est.stderr,
    })
}
