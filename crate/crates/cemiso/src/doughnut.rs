//! Geometry of the feasible set of noise-free received values.
//!
//! With per-antenna constant-envelope transmission the noise-free received
//! signal is `z(theta) = sum_i h_i e^{j theta_i} / sqrt(N)`. Its modulus
//! ranges over a closed interval `[m, M]`: the reachable set is an annulus.
//! The outer radius has the closed form `||h||_1 / sqrt(N)`; the inner
//! radius is found by cyclic coordinate descent with deterministic restarts,
//! with exact closed forms for N = 2, 3 and a grid oracle for small N.

use crate::fading::ChannelVector;
use crate::rng::Stream;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DoughnutError {
    #[error("brute force supports at most {max} antennas, got {n}")]
    UnsupportedArity { n: usize, max: usize },
    #[error("expected {expected} antennas, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("invalid radii: inner {inner} outer {outer}")]
    InvalidRadii { inner: f64, outer: f64 },
}

/// Wrap an angle to `[-pi, pi)`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        -PI
    } else {
        y
    }
}

/// The annulus `inner <= |z| <= outer` of reachable noise-free received
/// values, in units of normalized received amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoughnutRegion {
    inner: f64,
    outer: f64,
    n_antennas: usize,
}

impl DoughnutRegion {
    pub fn new(inner: f64, outer: f64, n_antennas: usize) -> Result<Self, DoughnutError> {
        if !(0.0 <= inner && inner <= outer) {
            return Err(DoughnutError::InvalidRadii { inner, outer });
        }
        Ok(DoughnutRegion {
            inner,
            outer,
            n_antennas,
        })
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    /// Closed-annulus membership.
    pub fn contains(&self, u: Complex64) -> bool {
        let r = u.norm();
        self.inner <= r && r <= self.outer
    }

    /// Membership with an absolute tolerance on both boundaries.
    pub fn contains_with_tol(&self, u: Complex64, tol: f64) -> bool {
        let r = u.norm();
        self.inner - tol <= r && r <= self.outer + tol
    }

    /// True when the annulus has (numerically) no area.
    pub fn is_degenerate(&self) -> bool {
        self.outer - self.inner <= 1e-12 * self.outer.max(1e-300)
    }
}

/// Outer radius `||h||_1 / sqrt(N)`, met with phases `-arg(h_i)`.
pub fn outer_radius(h: &ChannelVector) -> f64 {
    h.l1() / (h.n() as f64).sqrt()
}

/// Phases that align every term: the outer radius is attained exactly.
pub fn outer_phases(h: &ChannelVector) -> Vec<f64> {
    h.gains().iter().map(|g| wrap_angle(-g.arg())).collect()
}

/// Options for the inner-radius descent.
#[derive(Clone, Copy, Debug)]
pub struct InnerOpts {
    /// Random restarts in addition to the deterministic alternating-sign
    /// start.
    pub restarts: usize,
    /// Hard sweep cap per start.
    pub max_sweeps: usize,
    /// Stop a start when a full sweep improves the objective by less than
    /// this fraction of the outer radius.
    pub sweep_tol: f64,
}

impl Default for InnerOpts {
    fn default() -> Self {
        InnerOpts {
            restarts: 8,
            max_sweeps: 500,
            sweep_tol: 1e-12,
        }
    }
}

/// Result of the inner-radius search.
#[derive(Clone, Debug)]
pub struct InnerSolution {
    /// Best found `|z|`, normalized by `sqrt(N)`.
    pub value: f64,
    /// Witness phases achieving `value`.
    pub phases: Vec<f64>,
    /// False when the sweep budget ran out while still improving.
    pub converged: bool,
    /// Total sweeps across all starts.
    pub sweeps: usize,
}

/// Alternating-sign start: sort magnitudes descending, align odd ranks and
/// flip even ranks so neighbours cancel.
fn alternating_start(h: &ChannelVector) -> Vec<f64> {
    let n = h.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        h.gains()[b]
            .norm()
            .partial_cmp(&h.gains()[a].norm())
            .unwrap()
    });
    let mut phases = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        let base = -h.gains()[i].arg();
        phases[i] = wrap_angle(if rank % 2 == 0 { base } else { base + std::f64::consts::PI });
    }
    phases
}

/// Exact phases for a two-term sum equal to `p`; `branch` selects the sign
/// of the arccosine. Returns `None` when `p` is unreachable beyond `slack`.
pub(crate) fn pair_phases(
    h1: Complex64,
    h2: Complex64,
    p: Complex64,
    branch: f64,
    slack: f64,
) -> Option<(f64, f64)> {
    let a1 = h1.norm();
    let a2 = h2.norm();
    let pm = p.norm();
    if pm <= f64::EPSILON * (a1 + a2).max(1.0) {
        // Antipodal pair; exact only for equal magnitudes.
        return Some((
            wrap_angle(-h1.arg()),
            wrap_angle(std::f64::consts::PI - h2.arg()),
        ));
    }
    if a2 <= f64::EPSILON * a1 {
        return Some((wrap_angle(p.arg() - h1.arg()), 0.0));
    }
    let mut c = (pm * pm + a2 * a2 - a1 * a1) / (2.0 * pm * a2);
    if c.abs() > 1.0 + slack {
        return None;
    }
    c = c.clamp(-1.0, 1.0);
    let theta2 = wrap_angle(branch * c.acos() + p.arg() - h2.arg());
    let rem = p - h2 * Complex64::from_polar(1.0, theta2);
    let theta1 = if rem.norm() <= f64::EPSILON * pm {
        wrap_angle(-h1.arg())
    } else {
        wrap_angle(rem.arg() - h1.arg())
    };
    Some((theta1, theta2))
}

struct Descent<'a> {
    h: &'a ChannelVector,
    phases: Vec<f64>,
    terms: Vec<Complex64>,
    sum: Complex64,
}

impl<'a> Descent<'a> {
    fn new(h: &'a ChannelVector, phases: Vec<f64>) -> Self {
        let terms: Vec<Complex64> = h
            .gains()
            .iter()
            .zip(&phases)
            .map(|(g, &t)| g * Complex64::from_polar(1.0, t))
            .collect();
        let sum = terms.iter().sum();
        Descent {
            h,
            phases,
            terms,
            sum,
        }
    }

    fn resync(&mut self) {
        self.sum = self.terms.iter().sum();
    }

    /// One cyclic sweep; each update is the exact single-angle minimizer.
    fn sweep(&mut self) {
        for i in 0..self.phases.len() {
            let rest = self.sum - self.terms[i];
            let a = self.h.gains()[i].norm();
            if rest.norm() <= f64::EPSILON * a {
                continue;
            }
            let theta = wrap_angle(std::f64::consts::PI + rest.arg() - self.h.gains()[i].arg());
            let term = -(a / rest.norm()) * rest;
            self.phases[i] = theta;
            self.terms[i] = term;
            self.sum = rest + term;
        }
        self.resync();
    }

    /// Re-aim one pair of terms at the deficit left by the others. Escapes
    /// collinear stalls that single-angle updates cannot leave.
    fn pair_escape(&mut self) -> bool {
        let n = self.phases.len();
        let cur = self.sum.norm();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.sum - self.terms[i] - self.terms[j];
                let ai = self.h.gains()[i].norm();
                let aj = self.h.gains()[j].norm();
                let lo = (ai - aj).abs();
                let hi = ai + aj;
                let dm = d.norm();
                let reach = if dm < lo {
                    lo - dm
                } else if dm > hi {
                    dm - hi
                } else {
                    0.0
                };
                if reach < best.map_or(cur, |(_, _, v)| v) {
                    best = Some((i, j, reach));
                }
            }
        }
        let Some((i, j, reach)) = best else {
            return false;
        };
        if reach >= cur - 1e-14 * self.h.l1().max(1.0) {
            return false;
        }
        let d = self.sum - self.terms[i] - self.terms[j];
        let ai = self.h.gains()[i].norm();
        let aj = self.h.gains()[j].norm();
        let amp = d.norm().clamp((ai - aj).abs(), ai + aj);
        let dir = if d.norm() > 0.0 {
            -d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let p = amp * dir;
        if let Some((ti, tj)) = pair_phases(self.h.gains()[i], self.h.gains()[j], p, 1.0, 1e-9) {
            self.phases[i] = ti;
            self.phases[j] = tj;
            self.terms[i] = self.h.gains()[i] * Complex64::from_polar(1.0, ti);
            self.terms[j] = self.h.gains()[j] * Complex64::from_polar(1.0, tj);
            self.resync();
            true
        } else {
            false
        }
    }
}

/// Inner radius by cyclic coordinate descent from the alternating-sign start
/// plus seeded random restarts, each polished with pair re-aiming.
pub fn inner_radius(h: &ChannelVector, opts: &InnerOpts) -> InnerSolution {
    let n = h.n();
    let sqrt_n = (n as f64).sqrt();
    if n == 1 {
        return InnerSolution {
            value: h.l1(),
            phases: vec![0.0],
            converged: true,
            sweeps: 0,
        };
    }
    let scale = h.l1().max(1e-300);
    let tol = opts.sweep_tol * scale;
    let mut restart_stream = Stream::from_seed(h.seed_hash());

    let mut best_val = f64::INFINITY;
    let mut best_phases = vec![0.0; n];
    let mut converged = true;
    let mut total_sweeps = 0;

    for start in 0..=opts.restarts {
        let init = if start == 0 {
            alternating_start(h)
        } else {
            (0..n).map(|_| restart_stream.angle()).collect()
        };
        let mut d = Descent::new(h, init);
        let mut prev = d.sum.norm();
        let mut sweeps = 0;
        loop {
            let mut stalled = false;
            while sweeps < opts.max_sweeps {
                d.sweep();
                sweeps += 1;
                let obj = d.sum.norm();
                let improving = prev - obj >= tol;
                prev = obj;
                if !improving {
                    stalled = true;
                    break;
                }
            }
            if !stalled {
                // Sweep budget exhausted while still improving.
                converged = false;
                break;
            }
            if prev <= tol || !d.pair_escape() {
                break;
            }
            prev = d.sum.norm();
        }
        total_sweeps += sweeps;
        let val = d.sum.norm();
        if val < best_val {
            best_val = val;
            best_phases = d.phases;
        }
        if best_val <= tol {
            break;
        }
    }

    InnerSolution {
        value: best_val / sqrt_n,
        phases: best_phases,
        converged,
        sweeps: total_sweeps,
    }
}

/// Exact inner radius for two antennas.
pub fn closed_form_inner_n2(h: &ChannelVector) -> Result<f64, DoughnutError> {
    if h.n() != 2 {
        return Err(DoughnutError::WrongArity {
            expected: 2,
            got: h.n(),
        });
    }
    let a = h.gains()[0].norm();
    let b = h.gains()[1].norm();
    Ok((a - b).abs() / 2f64.sqrt())
}

/// Exact inner radius for three antennas (three-branch form).
pub fn closed_form_inner_n3(h: &ChannelVector) -> Result<f64, DoughnutError> {
    if h.n() != 3 {
        return Err(DoughnutError::WrongArity {
            expected: 3,
            got: h.n(),
        });
    }
    let a1 = h.gains()[0].norm();
    let a2 = h.gains()[1].norm();
    let a3 = h.gains()[2].norm();
    let d12 = (a1 - a2).abs();
    let s12 = a1 + a2;
    let sqrt3 = 3f64.sqrt();
    Ok(if a3 <= d12 {
        (d12 - a3) / sqrt3
    } else if a3 <= s12 {
        0.0
    } else {
        (a3 - s12) / sqrt3
    })
}

/// Worst-case gap between the grid minimum and the true minimum:
/// `||h||_1 * pi / (grid * sqrt(N))`.
pub fn bruteforce_grid_error(h: &ChannelVector, grid: usize) -> f64 {
    h.l1() * std::f64::consts::PI / (grid as f64 * (h.n() as f64).sqrt())
}

const BRUTEFORCE_MAX_N: usize = 6;

/// Grid minimum of `|z|` with the first phase fixed to zero (rotation
/// symmetry). Cost grows as `grid^(N-1)`; rejected above N = 6.
pub fn inner_radius_bruteforce(h: &ChannelVector, grid: usize) -> Result<f64, DoughnutError> {
    let n = h.n();
    if n > BRUTEFORCE_MAX_N {
        return Err(DoughnutError::UnsupportedArity {
            n,
            max: BRUTEFORCE_MAX_N,
        });
    }
    if n == 1 {
        return Ok(h.l1());
    }
    // Ring tables: gains[i] rotated to every grid angle.
    let rings: Vec<Vec<Complex64>> = h.gains()[1..]
        .iter()
        .map(|g| {
            (0..grid)
                .map(|k| {
                    let th = -std::f64::consts::PI
                        + 2.0 * std::f64::consts::PI * k as f64 / grid as f64;
                    g * Complex64::from_polar(1.0, th)
                })
                .collect()
        })
        .collect();

    let mut best = f64::INFINITY;
    let mut stack: Vec<(usize, Complex64)> = vec![(0, h.gains()[0])];
    while let Some((depth, partial)) = stack.pop() {
        if depth == rings.len() {
            best = best.min(partial.norm_sqr());
            continue;
        }
        // Prune: even with perfect cancellation of remaining terms the
        // partial cannot reach below |partial| - sum of remaining radii.
        let remaining: f64 = h.gains()[depth + 1..].iter().map(|g| g.norm()).sum();
        let floor = (partial.norm() - remaining).max(0.0);
        if floor * floor >= best {
            continue;
        }
        for v in &rings[depth] {
            stack.push((depth + 1, partial + v));
        }
    }
    Ok(best.sqrt() / (n as f64).sqrt())
}

/// Convenience: outer radius plus inner-radius search, as a region.
pub fn region_for(h: &ChannelVector, opts: &InnerOpts) -> (DoughnutRegion, InnerSolution) {
    let outer = outer_radius(h);
    let mut sol = inner_radius(h, opts);
    if sol.value > outer {
        sol.value = outer;
    }
    let region = DoughnutRegion::new(sol.value, outer, h.n()).expect("ordered radii");
    (region, sol)
}

/// Normalized sum `|sum_i h_i e^{j theta_i}| / sqrt(N)` for given phases.
pub fn modulus_at(h: &ChannelVector, phases: &[f64]) -> f64 {
    let s: Complex64 = h
        .gains()
        .iter()
        .zip(phases)
        .map(|(g, &t)| g * Complex64::from_polar(1.0, t))
        .sum();
    s.norm() / (h.n() as f64).sqrt()
}
