//! Phase-angle solvers.
//!
//! Given channel gains `h` and a target symbol `u` inside the feasible
//! annulus, find phases `theta` with
//! `sum_i h_i e^{j theta_i} / sqrt(N) = u`. Amplitudes never enter: the
//! constant envelope is baked into the parameterization.
//!
//! Four routes are provided and a dispatcher picks by antenna count:
//! closed forms for N = 2, 3; a depth-first search over admissible phase
//! arcs for 3 < N <= 10; cyclic coordinate descent for large N; and a
//! homotopy continuation that is always applicable and serves as the
//! fallback.

use crate::doughnut::{self, inner_radius, outer_radius, wrap_angle, InnerOpts, InnerSolution};
use crate::fading::ChannelVector;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PrecoderError {
    #[error("target modulus {target} outside annulus [{inner}, {outer}]")]
    TargetOutsideDoughnut { target: f64, inner: f64, outer: f64 },
    #[error("no sign change bracketing the target level was found")]
    BracketFailure,
    #[error("depth-first search exhausted its node budget ({budget})")]
    SearchExhausted { budget: usize },
    #[error("solver requires {expected} antennas, got {got}")]
    WrongArity { expected: usize, got: usize },
}

/// Which algorithm produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Homotopy,
    CoordDescent,
    DfsTwoStep,
    ClosedFormN2,
    ClosedFormN3,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverKind::Homotopy => "homotopy",
            SolverKind::CoordDescent => "coord-descent",
            SolverKind::DfsTwoStep => "dfs-two-step",
            SolverKind::ClosedFormN2 => "closed-form-n2",
            SolverKind::ClosedFormN3 => "closed-form-n3",
        };
        write!(f, "{s}")
    }
}

/// Phase angles wrapped to `[-pi, pi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    pub fn new(angles: Vec<f64>) -> Self {
        PhaseVector(angles.into_iter().map(wrap_angle).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A solved precoding instance.
#[derive(Clone, Debug)]
pub struct PhaseSolution {
    pub phases: PhaseVector,
    pub target: Complex64,
    /// `|u - sum_i h_i e^{j theta_i} / sqrt(N)|`, recomputable from the
    /// other fields.
    pub residual: f64,
    pub solver: SolverKind,
    pub iterations: usize,
    /// True when `residual <= epsilon_rel * outer_radius`.
    pub accepted: bool,
}

/// Independent recomputation of the solution error.
pub fn residual_of(h: &ChannelVector, phases: &[f64], u: Complex64) -> f64 {
    let s: Complex64 = h
        .gains()
        .iter()
        .zip(phases)
        .map(|(g, &t)| g * Complex64::from_polar(1.0, t))
        .sum();
    (u - s / (h.n() as f64).sqrt()).norm()
}

/// Acceptance threshold relative to the outer radius.
pub const DEFAULT_EPSILON_REL: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
pub struct CoordOpts {
    pub max_sweeps: usize,
    pub epsilon_rel: f64,
    /// Extra seeded random starts tried when a sweep stalls above the
    /// acceptance threshold.
    pub restarts: usize,
}

impl Default for CoordOpts {
    fn default() -> Self {
        CoordOpts {
            max_sweeps: 300,
            epsilon_rel: DEFAULT_EPSILON_REL,
            restarts: 4,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HomotopyOpts {
    pub scan_points: usize,
    pub bisect_iters: usize,
    pub epsilon_rel: f64,
    pub inner: InnerOpts,
}

impl Default for HomotopyOpts {
    fn default() -> Self {
        HomotopyOpts {
            scan_points: 256,
            bisect_iters: 64,
            epsilon_rel: DEFAULT_EPSILON_REL,
            inner: InnerOpts::default(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DfsOpts {
    /// Depth at which the search stops and hands over to coordinate
    /// descent; `None` means full depth N-1. With up to three antennas
    /// unassigned the leftover subproblem is completed in closed form;
    /// deeper truncations terminate only on a near-zero deficit.
    pub depth: Option<usize>,
    /// Grid points sampled per admissible arc.
    pub grid_per_arc: usize,
    /// Seed acceptance threshold as a fraction of the outer radius.
    pub threshold_frac: f64,
    /// Total candidate expansions before giving up.
    pub node_budget: usize,
    pub epsilon_rel: f64,
    pub inner: InnerOpts,
}

impl Default for DfsOpts {
    fn default() -> Self {
        DfsOpts {
            depth: None,
            grid_per_arc: 64,
            threshold_frac: 0.05,
            node_budget: 50_000,
            epsilon_rel: DEFAULT_EPSILON_REL,
            inner: InnerOpts::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Coordinate descent
// ---------------------------------------------------------------------------

fn cd_from(
    h: &ChannelVector,
    u: Complex64,
    mut phases: Vec<f64>,
    opts: &CoordOpts,
) -> PhaseSolution {
    let n = h.n();
    let sqrt_n = (n as f64).sqrt();
    let v = u * sqrt_n;
    let eps_abs = opts.epsilon_rel * outer_radius(h);
    let stall_tol = 1e-15 * h.l1().max(1e-300);

    let mut terms: Vec<Complex64> = h
        .gains()
        .iter()
        .zip(&phases)
        .map(|(g, &t)| g * Complex64::from_polar(1.0, t))
        .collect();
    let mut sum: Complex64 = terms.iter().sum();
    let mut prev = (v - sum).norm();
    let mut sweeps = 0;

    while sweeps < opts.max_sweeps {
        for i in 0..n {
            let rest = sum - terms[i];
            let d = v - rest;
            let a = h.gains()[i].norm();
            if d.norm() <= f64::EPSILON * a.max(1.0) {
                continue;
            }
            let theta = wrap_angle(d.arg() - h.gains()[i].arg());
            let term = (a / d.norm()) * d;
            phases[i] = theta;
            terms[i] = term;
            sum = rest + term;
        }
        sum = terms.iter().sum();
        sweeps += 1;
        let res = (v - sum).norm();
        if res / sqrt_n <= eps_abs || prev - res < stall_tol {
            prev = res;
            break;
        }
        prev = res;
    }

    let residual = prev / sqrt_n;
    PhaseSolution {
        phases: PhaseVector::new(phases),
        target: u,
        residual,
        solver: SolverKind::CoordDescent,
        iterations: sweeps,
        accepted: residual <= eps_abs,
    }
}

/// Cyclic coordinate descent on the error norm, one exact single-angle
/// minimization per update; monotone nonincreasing objective within each
/// start. The target-aligned start is tried first (it is optimal at the
/// outer boundary but collinear, so it can trap); seeded random starts
/// follow until one is accepted. Stalls above the threshold are reported
/// through `accepted = false`.
pub fn solve_coord_descent(h: &ChannelVector, u: Complex64, opts: &CoordOpts) -> PhaseSolution {
    let aligned: Vec<f64> = h
        .gains()
        .iter()
        .map(|g| wrap_angle(u.arg() - g.arg()))
        .collect();
    let mut best = cd_from(h, u, aligned, opts);
    let mut iterations = best.iterations;
    if !best.accepted {
        let seed = crate::rng::mix64(h.seed_hash() ^ u.re.to_bits() ^ u.im.to_bits().rotate_left(17));
        let mut stream = crate::rng::Stream::from_seed(seed);
        for _ in 0..opts.restarts {
            let init: Vec<f64> = (0..h.n()).map(|_| stream.angle()).collect();
            let sol = cd_from(h, u, init, opts);
            iterations += sol.iterations;
            if sol.residual < best.residual {
                best = sol;
            }
            if best.accepted {
                break;
            }
        }
    }
    best.iterations = iterations;
    best
}

// ---------------------------------------------------------------------------
// Homotopy continuation
// ---------------------------------------------------------------------------

fn homotopy_sum(h: &ChannelVector, theta_star: &[f64], t: f64) -> Complex64 {
    h.gains()
        .iter()
        .zip(theta_star)
        .map(|(g, &ts)| {
            let theta = (1.0 - t) * ts - t * g.arg();
            g * Complex64::from_polar(1.0, theta)
        })
        .sum()
}

/// Continuation from the inner-radius phases to the aligned phases.
///
/// The squared modulus along the path is continuous and spans
/// `[inner^2, outer^2]`, so a scan plus bisection always brackets the target
/// level; a global rotation then fixes the argument, and a short coordinate
/// descent removes the last rounding error.
pub fn solve_homotopy(
    h: &ChannelVector,
    u: Complex64,
    inner: Option<&InnerSolution>,
    opts: &HomotopyOpts,
) -> Result<PhaseSolution, PrecoderError> {
    let n = h.n();
    let sqrt_n = (n as f64).sqrt();
    let outer = outer_radius(h);
    let eps_abs = opts.epsilon_rel * outer;

    let owned;
    let inner_sol = match inner {
        Some(s) => s,
        None => {
            owned = inner_radius(h, &opts.inner);
            &owned
        }
    };
    let m = inner_sol.value.min(outer);
    let target = u.norm();
    if target < m - eps_abs || target > outer + eps_abs {
        return Err(PrecoderError::TargetOutsideDoughnut {
            target,
            inner: m,
            outer,
        });
    }
    let level = target.clamp(m, outer);

    // Boundary targets: the endpoint phases are exact, and skipping the
    // root search avoids the square-root blowup of a one-ulp level error
    // near the extrema of the path.
    let boundary = if level >= outer * (1.0 - 1e-12) {
        Some(h.gains().iter().map(|g| wrap_angle(-g.arg() + u.arg())).collect::<Vec<f64>>())
    } else if level <= m * (1.0 + 1e-12) {
        let z0 = homotopy_sum(h, &inner_sol.phases, 0.0);
        let phi = if z0.norm() > 0.0 { u.arg() - z0.arg() } else { 0.0 };
        Some(
            inner_sol
                .phases
                .iter()
                .map(|&t| wrap_angle(t + phi))
                .collect(),
        )
    } else {
        None
    };
    if let Some(phases) = boundary {
        let cd = cd_from(
            h,
            u,
            phases,
            &CoordOpts {
                max_sweeps: 50,
                epsilon_rel: opts.epsilon_rel,
                restarts: 0,
            },
        );
        return Ok(PhaseSolution {
            solver: SolverKind::Homotopy,
            ..cd
        });
    }

    let level_sq = level * level * n as f64;
    let g_at = |t: f64| homotopy_sum(h, &inner_sol.phases, t).norm_sqr() - level_sq;

    // Scan for a sign-change bracket; guaranteed when the endpoints straddle
    // the level.
    let s = opts.scan_points.max(2);
    let mut bracket = None;
    let mut t_prev = 0.0;
    let mut g_prev = g_at(0.0);
    for k in 1..s {
        let t = k as f64 / (s - 1) as f64;
        let g = g_at(t);
        if g_prev <= 0.0 && g >= 0.0 || g_prev >= 0.0 && g <= 0.0 {
            bracket = Some((t_prev, g_prev, t, g));
            break;
        }
        t_prev = t;
        g_prev = g;
    }
    let Some((mut lo, mut g_lo, mut hi, _)) = bracket else {
        return Err(PrecoderError::BracketFailure);
    };
    for _ in 0..opts.bisect_iters {
        let mid = 0.5 * (lo + hi);
        let g_mid = g_at(mid);
        if (g_lo <= 0.0) == (g_mid <= 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    let t_u = 0.5 * (lo + hi);

    let z = homotopy_sum(h, &inner_sol.phases, t_u) / sqrt_n;
    let phi = if z.norm() > 0.0 { u.arg() - z.arg() } else { 0.0 };
    let phases: Vec<f64> = h
        .gains()
        .iter()
        .zip(&inner_sol.phases)
        .map(|(g, &ts)| wrap_angle((1.0 - t_u) * ts - t_u * g.arg() + phi))
        .collect();

    // Polish away bisection and rounding residue.
    let cd = cd_from(
        h,
        u,
        phases,
        &CoordOpts {
            max_sweeps: 50,
            epsilon_rel: opts.epsilon_rel,
            restarts: 0,
        },
    );
    Ok(PhaseSolution {
        solver: SolverKind::Homotopy,
        iterations: s + opts.bisect_iters + cd.iterations,
        ..cd
    })
}

// ---------------------------------------------------------------------------
// Closed forms for N = 2, 3
// ---------------------------------------------------------------------------

fn finish_pair(
    h: &ChannelVector,
    u: Complex64,
    pre: &[(usize, f64)],
    pair: (usize, usize),
    p: Complex64,
    epsilon_rel: f64,
    solver: SolverKind,
) -> Result<PhaseSolution, PrecoderError> {
    let outer = outer_radius(h);
    let mut best: Option<PhaseSolution> = None;
    for branch in [1.0, -1.0] {
        let Some((t1, t2)) = doughnut::pair_phases(
            h.gains()[pair.0],
            h.gains()[pair.1],
            p,
            branch,
            1e-12,
        ) else {
            continue;
        };
        let mut phases = vec![0.0; h.n()];
        for &(i, t) in pre {
            phases[i] = t;
        }
        phases[pair.0] = t1;
        phases[pair.1] = t2;
        let residual = residual_of(h, &phases, u);
        let sol = PhaseSolution {
            phases: PhaseVector::new(phases),
            target: u,
            residual,
            solver,
            iterations: 1,
            accepted: residual <= epsilon_rel * outer,
        };
        if best.as_ref().map_or(true, |b| sol.residual < b.residual) {
            best = Some(sol);
        }
    }
    best.ok_or(PrecoderError::TargetOutsideDoughnut {
        target: u.norm(),
        inner: 0.0,
        outer,
    })
}

/// Two antennas: law-of-cosines phases, both arccosine branches evaluated,
/// the smaller residual returned.
pub fn solve_closed_form_n2(
    h: &ChannelVector,
    u: Complex64,
    epsilon_rel: f64,
) -> Result<PhaseSolution, PrecoderError> {
    if h.n() != 2 {
        return Err(PrecoderError::WrongArity {
            expected: 2,
            got: h.n(),
        });
    }
    let p = u * 2f64.sqrt();
    finish_pair(h, u, &[], (0, 1), p, epsilon_rel, SolverKind::ClosedFormN2)
}

/// Both arccosine branches for N = 2, in branch order `[+, -]`.
pub fn closed_form_n2_branches(
    h: &ChannelVector,
    u: Complex64,
    epsilon_rel: f64,
) -> Result<[PhaseSolution; 2], PrecoderError> {
    if h.n() != 2 {
        return Err(PrecoderError::WrongArity {
            expected: 2,
            got: h.n(),
        });
    }
    let p = u * 2f64.sqrt();
    let outer = outer_radius(h);
    let mut out = Vec::with_capacity(2);
    for branch in [1.0, -1.0] {
        let (t1, t2) = doughnut::pair_phases(h.gains()[0], h.gains()[1], p, branch, 1e-12)
            .ok_or(PrecoderError::TargetOutsideDoughnut {
                target: u.norm(),
                inner: 0.0,
                outer,
            })?;
        let phases = vec![t1, t2];
        let residual = residual_of(h, &phases, u);
        out.push(PhaseSolution {
            phases: PhaseVector::new(phases),
            target: u,
            residual,
            solver: SolverKind::ClosedFormN2,
            iterations: 1,
            accepted: residual <= epsilon_rel * outer,
        });
    }
    Ok([out.remove(0), out.remove(0)])
}

/// Three antennas: the third phase is taken at the midpoint of its
/// admissible cosine interval (a deterministic tie-break among infinitely
/// many valid choices), then the remaining pair is solved in closed form.
pub fn solve_closed_form_n3(
    h: &ChannelVector,
    u: Complex64,
    epsilon_rel: f64,
) -> Result<PhaseSolution, PrecoderError> {
    if h.n() != 3 {
        return Err(PrecoderError::WrongArity {
            expected: 3,
            got: h.n(),
        });
    }
    let a1 = h.gains()[0].norm();
    let a2 = h.gains()[1].norm();
    let a3 = h.gains()[2].norm();
    let um = u.norm();
    let outer = outer_radius(h);
    let sqrt3 = 3f64.sqrt();

    let theta3 = if um <= f64::EPSILON * outer || a3 <= f64::EPSILON * outer {
        // Degenerate: point the third term along the positive real axis of
        // its own gain; the pair absorbs the rest.
        wrap_angle(-h.gains()[2].arg())
    } else {
        let denom = 2.0 * sqrt3 * um * a3;
        let c_lo = (3.0 * um * um + a3 * a3 - (a1 + a2) * (a1 + a2)) / denom;
        let c_hi = (3.0 * um * um + a3 * a3 - (a1 - a2) * (a1 - a2)) / denom;
        let lo = c_lo.max(-1.0);
        let hi = c_hi.min(1.0);
        if lo > hi + 1e-12 {
            return Err(PrecoderError::TargetOutsideDoughnut {
                target: um,
                inner: 0.0,
                outer,
            });
        }
        let mid = 0.5 * (lo + hi.max(lo));
        wrap_angle(mid.clamp(-1.0, 1.0).acos() + u.arg() - h.gains()[2].arg())
    };

    let p = u * sqrt3 - h.gains()[2] * Complex64::from_polar(1.0, theta3);
    finish_pair(
        h,
        u,
        &[(2, theta3)],
        (0, 1),
        p,
        epsilon_rel,
        SolverKind::ClosedFormN3,
    )
}

// ---------------------------------------------------------------------------
// Depth-first arc search
// ---------------------------------------------------------------------------

/// One admissible arc of phase values: `start + [0, len]`, wrapped.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Arc {
    pub start: f64,
    pub len: f64,
}

impl Arc {
    #[cfg(test)]
    pub fn contains(&self, theta: f64, tol: f64) -> bool {
        let d = (theta - self.start).rem_euclid(2.0 * std::f64::consts::PI);
        d <= self.len + tol || d >= 2.0 * std::f64::consts::PI - tol
    }
}

/// Phases `theta` with `r_lo <= |c - b_mag e^{j(theta + b_arg)}| <= r_hi`:
/// the intersection of a circle of radius `b_mag` centred at the origin
/// (shifted by `c`) with an annulus. At most two arcs.
pub(crate) fn annulus_circle_arcs(
    c: Complex64,
    b_mag: f64,
    b_arg: f64,
    r_lo: f64,
    r_hi: f64,
) -> Vec<Arc> {
    use std::f64::consts::PI;
    let cm = c.norm();
    let full = vec![Arc {
        start: -PI,
        len: 2.0 * PI,
    }];
    if b_mag <= f64::EPSILON * (cm + r_hi).max(1.0) {
        // Term vanishes; either every phase works or none does.
        return if r_lo <= cm && cm <= r_hi { full } else { vec![] };
    }
    if cm <= f64::EPSILON * b_mag {
        return if r_lo <= b_mag && b_mag <= r_hi {
            full
        } else {
            vec![]
        };
    }
    let gamma_lo = (cm * cm + b_mag * b_mag - r_hi * r_hi) / (2.0 * cm * b_mag);
    let gamma_hi = (cm * cm + b_mag * b_mag - r_lo * r_lo) / (2.0 * cm * b_mag);
    let lo = gamma_lo.max(-1.0);
    let hi = gamma_hi.min(1.0);
    if lo > hi {
        return vec![];
    }
    // cos(delta) in [lo, hi]  <=>  |delta| in [acos(hi), acos(lo)].
    let d_min = hi.acos();
    let d_max = lo.acos();
    if d_min <= 0.0 && d_max >= PI {
        return full;
    }
    let offset = c.arg() - b_arg;
    let len = d_max - d_min;
    vec![
        Arc {
            start: wrap_angle(offset + d_min),
            len,
        },
        // Mirror branch of |delta|; overlaps only at touching endpoints.
        Arc {
            start: wrap_angle(offset - d_max),
            len,
        },
    ]
}

/// Exact phases making one, two, or three terms sum to `target`, when
/// reachable; larger remainders return `None`.
fn complete_remainder(gains: &[Complex64], target: Complex64) -> Option<Vec<f64>> {
    match gains {
        [g0] => Some(vec![if target.norm() > 0.0 {
            wrap_angle(target.arg() - g0.arg())
        } else {
            wrap_angle(-g0.arg())
        }]),
        [g0, g1] => {
            let mut best: Option<(f64, Vec<f64>)> = None;
            for branch in [1.0, -1.0] {
                if let Some((t0, t1)) = doughnut::pair_phases(*g0, *g1, target, branch, 1e-6) {
                    let got = g0 * Complex64::from_polar(1.0, t0)
                        + g1 * Complex64::from_polar(1.0, t1);
                    let err = (got - target).norm();
                    if best.as_ref().map_or(true, |(e, _)| err < *e) {
                        best = Some((err, vec![t0, t1]));
                    }
                }
            }
            best.map(|(_, v)| v)
        }
        [g0, g1, g2] => {
            // Pick the third phase from the arcs that keep the remaining
            // pair feasible, then finish the pair in closed form.
            let a0 = g0.norm();
            let a1 = g1.norm();
            let arcs = annulus_circle_arcs(target, g2.norm(), g2.arg(), (a0 - a1).abs(), a0 + a1);
            let arc = arcs.first()?;
            let t2 = wrap_angle(arc.start + 0.5 * arc.len);
            let rest = target - g2 * Complex64::from_polar(1.0, t2);
            let pair = complete_remainder(&[*g0, *g1], rest)?;
            Some(vec![pair[0], pair[1], t2])
        }
        _ => None,
    }
}

struct DfsCtx<'a> {
    h: &'a ChannelVector,
    /// Unnormalized target `u * sqrt(N)`.
    v: Complex64,
    u: Complex64,
    /// Unnormalized prefix annulus radii: `lo[j], hi[j]` bound
    /// `|sum_{i<j} h_i e^{j t_i}|`.
    prefix_lo: Vec<f64>,
    prefix_hi: Vec<f64>,
    depth: usize,
    grid: usize,
    threshold_unnorm: f64,
    budget: usize,
    nodes: usize,
    eps_rel: f64,
}

impl DfsCtx<'_> {
    /// Returns the polished solution for the first seed that survives.
    fn descend(&mut self, k: usize, deficit: Complex64, assigned: &mut Vec<f64>) -> Option<PhaseSolution> {
        let n = self.h.n();
        if k == self.depth {
            return self.terminal(deficit, assigned);
        }
        let idx = n - 1 - k;
        let g = self.h.gains()[idx];
        let mut arcs = annulus_circle_arcs(
            deficit,
            g.norm(),
            g.arg(),
            self.prefix_lo[idx],
            self.prefix_hi[idx],
        );
        arcs.sort_by(|a, b| b.len.partial_cmp(&a.len).unwrap());
        let cands = self.grid.max(1);
        let mut thetas: Vec<f64> = Vec::with_capacity(cands * arcs.len());
        for arc in &arcs {
            // Centre-out ordering over an interior grid of the arc.
            let mut order: Vec<usize> = (0..cands).collect();
            order.sort_by_key(|&j| (2 * j as i64 - (cands as i64 - 1)).abs());
            for j in order {
                let frac = (j as f64 + 0.5) / cands as f64;
                thetas.push(wrap_angle(arc.start + arc.len * frac));
            }
        }
        if k + 1 == self.depth && self.depth < n - 1 {
            // Truncated search: the termination test wants a small deficit,
            // so try the candidates that shrink it most first.
            thetas.sort_by(|&a, &b| {
                let da = (deficit - g * Complex64::from_polar(1.0, a)).norm_sqr();
                let db = (deficit - g * Complex64::from_polar(1.0, b)).norm_sqr();
                da.partial_cmp(&db).unwrap()
            });
        }
        for theta in thetas {
            if self.nodes >= self.budget {
                return None;
            }
            self.nodes += 1;
            let term = g * Complex64::from_polar(1.0, theta);
            assigned.push(theta);
            if let Some(sol) = self.descend(k + 1, deficit - term, assigned) {
                return Some(sol);
            }
            assigned.pop();
        }
        None
    }

    fn terminal(&mut self, deficit: Complex64, assigned: &[f64]) -> Option<PhaseSolution> {
        let n = self.h.n();
        let mut phases = vec![0.0; n];
        // assigned[k] belongs to antenna n-1-k.
        for (k, &t) in assigned.iter().enumerate() {
            phases[n - 1 - k] = t;
        }
        let rem = n - self.depth;
        let dn = deficit.norm();
        let ok = if rem <= 3 {
            // The leftover subproblem is solvable in closed form whenever
            // the deficit sits in the remainder's reachable band.
            dn >= self.prefix_lo[rem] - self.threshold_unnorm
                && dn <= self.prefix_hi[rem] + self.threshold_unnorm
        } else {
            // Deep truncation: only a near-zero deficit leaves the
            // zero-initialized tail inside a good polish basin.
            dn <= self.threshold_unnorm + self.prefix_lo[rem]
        };
        if !ok {
            return None;
        }
        // Small remainders complete in closed form; deeper truncations
        // leave the tail at zero for the polish pass.
        if let Some(tail) = complete_remainder(&self.h.gains()[..rem], deficit) {
            phases[..rem].copy_from_slice(&tail);
        }
        let cd = cd_from(
            self.h,
            self.u,
            phases,
            &CoordOpts {
                max_sweeps: 200,
                epsilon_rel: self.eps_rel,
                restarts: 0,
            },
        );
        if cd.accepted {
            Some(cd)
        } else {
            None
        }
    }
}

/// Step one: depth-first search over discretized admissible arcs, assigning
/// phases from the last antenna downward; each arc is the exact set of
/// phases that keep the remaining prefix feasible. Step two: coordinate
/// descent polish from the search seed.
pub fn solve_dfs_two_step(
    h: &ChannelVector,
    u: Complex64,
    opts: &DfsOpts,
) -> Result<PhaseSolution, PrecoderError> {
    let n = h.n();
    let outer = outer_radius(h);
    let eps_abs = opts.epsilon_rel * outer;

    // Prefix annulus radii (unnormalized).
    let mut prefix_lo = vec![0.0; n];
    let mut prefix_hi = vec![0.0; n];
    let mut acc = 0.0;
    for j in 1..n {
        acc += h.gains()[j - 1].norm();
        prefix_hi[j] = acc;
        let prefix =
            ChannelVector::new(h.gains()[..j].to_vec()).expect("prefix is nonempty");
        let lo = match j {
            1 => h.gains()[0].norm(),
            2 => doughnut::closed_form_inner_n2(&prefix).unwrap() * 2f64.sqrt(),
            3 => doughnut::closed_form_inner_n3(&prefix).unwrap() * 3f64.sqrt(),
            _ => inner_radius(&prefix, &opts.inner).value * (j as f64).sqrt(),
        };
        prefix_lo[j] = lo;
    }

    let full = ChannelVector::new(h.gains().to_vec()).expect("nonempty");
    let inner_sol = inner_radius(&full, &opts.inner);
    let m = inner_sol.value.min(outer);
    if u.norm() < m - eps_abs || u.norm() > outer + eps_abs {
        return Err(PrecoderError::TargetOutsideDoughnut {
            target: u.norm(),
            inner: m,
            outer,
        });
    }

    let depth = opts.depth.unwrap_or(n - 1).clamp(1, n - 1);
    let threshold_unnorm = opts.threshold_frac * outer * (n as f64).sqrt();
    // First pass with honest inner radii (shrunk a hair so float noise never
    // excludes an exactly-feasible branch); second pass with the lower
    // bounds dropped, which can only widen the arcs.
    for relax in [false, true] {
        let mut ctx = DfsCtx {
            h,
            v: u * (n as f64).sqrt(),
            u,
            prefix_lo: if relax {
                vec![0.0; n]
            } else {
                prefix_lo.iter().map(|&x| x * (1.0 - 1e-9)).collect()
            },
            prefix_hi: prefix_hi.iter().map(|&x| x * (1.0 + 1e-12)).collect(),
            depth,
            grid: opts.grid_per_arc,
            threshold_unnorm,
            budget: opts.node_budget,
            nodes: 0,
            eps_rel: opts.epsilon_rel,
        };
        let v = ctx.v;
        if let Some(sol) = ctx.descend(0, v, &mut Vec::with_capacity(depth)) {
            return Ok(PhaseSolution {
                solver: SolverKind::DfsTwoStep,
                iterations: ctx.nodes + sol.iterations,
                ..sol
            });
        }
    }
    Err(PrecoderError::SearchExhausted {
        budget: opts.node_budget,
    })
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Routing policy: closed forms for N <= 3, arc search for 3 < N <= 10,
/// coordinate descent above, homotopy as the universal fallback.
#[derive(Clone, Copy, Debug, Default)]
pub struct DispatchPolicy {
    pub cd: CoordOpts,
    pub dfs: DfsOpts,
    pub homotopy: HomotopyOpts,
}

pub fn dispatch_solve(
    h: &ChannelVector,
    u: Complex64,
    policy: &DispatchPolicy,
) -> Result<PhaseSolution, PrecoderError> {
    let n = h.n();
    let primary: Result<PhaseSolution, PrecoderError> = match n {
        1 => Ok(solve_coord_descent(h, u, &policy.cd)),
        2 => solve_closed_form_n2(h, u, policy.cd.epsilon_rel),
        3 => solve_closed_form_n3(h, u, policy.cd.epsilon_rel),
        4..=10 => solve_dfs_two_step(h, u, &policy.dfs),
        _ => Ok(solve_coord_descent(h, u, &policy.cd)),
    };
    match primary {
        Ok(sol) if sol.accepted => Ok(sol),
        Ok(stalled) => {
            let fallback = solve_homotopy(h, u, None, &policy.homotopy);
            match fallback {
                Ok(hs) if hs.residual < stalled.residual => Ok(hs),
                Ok(_) | Err(_) => Ok(stalled),
            }
        }
        Err(PrecoderError::TargetOutsideDoughnut { target, inner, outer }) => {
            Err(PrecoderError::TargetOutsideDoughnut { target, inner, outer })
        }
        Err(_) => solve_homotopy(h, u, None, &policy.homotopy),
    }
}

/// Uniform-in-area draw of a target inside the annulus.
pub fn sample_target(region: &crate::doughnut::DoughnutRegion, stream: &mut crate::rng::Stream) -> Complex64 {
    let m2 = region.inner() * region.inner();
    let r = (m2 + (region.outer() * region.outer() - m2) * stream.uniform()).sqrt();
    Complex64::from_polar(r, stream.angle())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::{draw_channel, FadingKind, FadingModel};
    use crate::rng::Stream;

    fn cv(gains: &[(f64, f64)]) -> ChannelVector {
        ChannelVector::new(gains.iter().map(|&(r, i)| Complex64::new(r, i)).collect()).unwrap()
    }

    #[test]
    fn homotopy_trivial_alignment() {
        let h = cv(&[(1.0, 0.0), (1.0, 0.0)]);
        let sol =
            solve_homotopy(&h, Complex64::new(2f64.sqrt(), 0.0), None, &HomotopyOpts::default())
                .unwrap();
        assert!(sol.residual < 1e-12);
        for &t in sol.phases.angles() {
            assert!(t.abs() < 1e-9, "theta {t}");
        }
    }

    #[test]
    fn homotopy_outer_boundary_rotation() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 5).unwrap();
        for trial in 0..20 {
            let h = draw_channel(&model, &mut Stream::substream(71, trial));
            let u = Complex64::from_polar(outer_radius(&h), 0.7);
            let sol = solve_homotopy(&h, u, None, &HomotopyOpts::default()).unwrap();
            assert!(sol.residual <= 1e-12 * outer_radius(&h), "res {}", sol.residual);
            for (g, &t) in h.gains().iter().zip(sol.phases.angles()) {
                let want = wrap_angle(-g.arg() + 0.7);
                let diff = wrap_angle(t - want).abs();
                assert!(diff < 1e-6, "phase diff {diff}");
            }
        }
    }

    #[test]
    fn homotopy_rejects_outside_targets() {
        let h = cv(&[(3.0, 0.0), (1.0, 0.0)]);
        let err = solve_homotopy(&h, Complex64::new(0.1, 0.0), None, &HomotopyOpts::default())
            .unwrap_err();
        assert!(matches!(err, PrecoderError::TargetOutsideDoughnut { .. }));
        let err = solve_homotopy(&h, Complex64::new(5.0, 0.0), None, &HomotopyOpts::default())
            .unwrap_err();
        assert!(matches!(err, PrecoderError::TargetOutsideDoughnut { .. }));
    }

    #[test]
    fn homotopy_random_targets() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 8).unwrap();
        let opts = HomotopyOpts::default();
        for trial in 0..1000 {
            let h = draw_channel(&model, &mut Stream::substream(72, trial));
            let inner = inner_radius(&h, &opts.inner);
            let region = crate::doughnut::DoughnutRegion::new(
                inner.value.min(outer_radius(&h)),
                outer_radius(&h),
                8,
            )
            .unwrap();
            let u = sample_target(&region, &mut Stream::substream(73, trial));
            let sol = solve_homotopy(&h, u, Some(&inner), &opts).unwrap();
            assert!(
                sol.residual <= 1e-9 * outer_radius(&h),
                "trial {trial} residual {}",
                sol.residual
            );
            // Residual is recomputable from the parts.
            assert!(
                (residual_of(&h, sol.phases.angles(), u) - sol.residual).abs() < 1e-12
            );
        }
    }

    #[test]
    fn cd_single_antenna_one_update() {
        let h = cv(&[(2.0, 0.0)]);
        let u = Complex64::from_polar(2.0, 1.1);
        let sol = solve_coord_descent(&h, u, &CoordOpts::default());
        assert!(sol.accepted);
        assert!((sol.phases.angles()[0] - 1.1).abs() < 1e-12);
        assert!(sol.iterations <= 1);
    }

    #[test]
    fn cd_objective_monotone() {
        // Monotonicity holds per update by construction; verify per sweep by
        // instrumenting a manual run.
        let model = FadingModel::new(FadingKind::IidRayleigh, 16).unwrap();
        let h = draw_channel(&model, &mut Stream::substream(74, 0));
        let region_outer = outer_radius(&h);
        let u = Complex64::from_polar(0.4 * region_outer, -2.0);
        let mut phases: Vec<f64> = h
            .gains()
            .iter()
            .map(|g| wrap_angle(u.arg() - g.arg()))
            .collect();
        let mut prev = residual_of(&h, &phases, u);
        for _ in 0..40 {
            // One sweep via the solver with a single-iteration budget.
            let sol = cd_from(
                &h,
                u,
                phases.clone(),
                &CoordOpts {
                    max_sweeps: 1,
                    epsilon_rel: 1e-16,
                    restarts: 0,
                },
            );
            let res = sol.residual;
            assert!(res <= prev + 1e-15, "sweep increased: {res} > {prev}");
            prev = res;
            phases = sol.phases.angles().to_vec();
        }
    }

    #[test]
    fn cd_large_n_mostly_accepts() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 64).unwrap();
        let mut accepted = 0;
        let total = 1000;
        for trial in 0..total {
            let h = draw_channel(&model, &mut Stream::substream(75, trial));
            let (region, _) = crate::doughnut::region_for(&h, &InnerOpts::default());
            let u = sample_target(&region, &mut Stream::substream(76, trial));
            let sol = solve_coord_descent(&h, u, &CoordOpts::default());
            if sol.accepted {
                accepted += 1;
                assert!(sol.residual <= 1e-9 * region.outer());
            }
        }
        assert!(accepted * 100 >= total * 99, "accepted {accepted}/{total}");
    }

    #[test]
    fn arcs_match_rejection_sampling() {
        let mut stream = Stream::substream(77, 0);
        for case in 0..200 {
            let c = Complex64::new(stream.normal_pair().0, stream.normal_pair().1);
            let b_mag = stream.uniform() * 2.0 + 0.01;
            let b_arg = stream.angle();
            let r_a = stream.uniform() * 2.5;
            let r_b = stream.uniform() * 2.5;
            let (r_lo, r_hi) = if r_a < r_b { (r_a, r_b) } else { (r_b, r_a) };
            let arcs = annulus_circle_arcs(c, b_mag, b_arg, r_lo, r_hi);
            for k in 0..500 {
                let theta = -std::f64::consts::PI
                    + 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 500.0;
                let d = (c - b_mag * Complex64::from_polar(1.0, theta + b_arg)).norm();
                let inside = r_lo <= d && d <= r_hi;
                let in_arc = arcs.iter().any(|a| a.contains(theta, 1e-9));
                // Skip points within float slop of a boundary.
                let margin = (d - r_lo).abs().min((d - r_hi).abs());
                if margin > 1e-6 {
                    assert_eq!(inside, in_arc, "case {case} theta {theta} d {d}");
                }
            }
        }
    }

    #[test]
    fn dfs_solves_random_targets() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 6).unwrap();
        let opts = DfsOpts::default();
        for trial in 0..100 {
            let h = draw_channel(&model, &mut Stream::substream(78, trial));
            let (region, _) = crate::doughnut::region_for(&h, &opts.inner);
            let u = sample_target(&region, &mut Stream::substream(79, trial));
            let sol = solve_dfs_two_step(&h, u, &opts).unwrap();
            assert!(sol.accepted, "trial {trial} residual {}", sol.residual);
        }
    }

    #[test]
    fn dfs_truncated_depth_polishes_from_seed() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 6).unwrap();
        let opts = DfsOpts {
            depth: Some(3),
            ..DfsOpts::default()
        };
        for trial in 0..20 {
            let h = draw_channel(&model, &mut Stream::substream(95, trial));
            let (region, _) = crate::doughnut::region_for(&h, &opts.inner);
            let u = sample_target(&region, &mut Stream::substream(96, trial));
            let sol = solve_dfs_two_step(&h, u, &opts).unwrap();
            assert!(sol.accepted, "trial {trial} residual {}", sol.residual);
        }
    }

    #[test]
    fn dfs_exhausts_under_tiny_budget() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 6).unwrap();
        let h = draw_channel(&model, &mut Stream::substream(90, 0));
        let (region, _) = crate::doughnut::region_for(&h, &InnerOpts::default());
        let u = sample_target(&region, &mut Stream::substream(90, 1));
        let opts = DfsOpts {
            node_budget: 2,
            ..DfsOpts::default()
        };
        assert!(matches!(
            solve_dfs_two_step(&h, u, &opts),
            Err(PrecoderError::SearchExhausted { .. })
        ));
    }

    #[test]
    fn dfs_boundary_target_collapses_to_alignment() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 5).unwrap();
        let h = draw_channel(&model, &mut Stream::substream(80, 0));
        let phi = 0.3;
        let u = Complex64::from_polar(outer_radius(&h), phi);
        let sol = solve_dfs_two_step(&h, u, &DfsOpts::default()).unwrap();
        assert!(sol.accepted);
        for (g, &t) in h.gains().iter().zip(sol.phases.angles()) {
            let want = wrap_angle(-g.arg() + phi);
            assert!(wrap_angle(t - want).abs() < 1e-5, "not aligned");
        }
    }

    #[test]
    fn closed_form_n2_examples() {
        let h = cv(&[(1.0, 0.0), (1.0, 0.0)]);
        let sol = solve_closed_form_n2(&h, Complex64::new(2f64.sqrt(), 0.0), 1e-9).unwrap();
        assert!(sol.residual < 1e-12);
        for &t in sol.phases.angles() {
            assert!(t.abs() < 1e-9);
        }

        // Inner boundary: antipodal phases.
        let h = cv(&[(3.0, 0.0), (1.0, 0.0)]);
        let u = Complex64::new(2f64.sqrt(), 0.0);
        let sol = solve_closed_form_n2(&h, u, 1e-9).unwrap();
        assert!(sol.residual <= 1e-12);
        let d = wrap_angle(sol.phases.angles()[0] - sol.phases.angles()[1]).abs();
        assert!((d - std::f64::consts::PI).abs() < 1e-6, "not antipodal: {d}");

        let both = closed_form_n2_branches(&h, Complex64::new(1.0, 1.0), 1e-9).unwrap();
        assert!(both[0].residual < 1e-10 && both[1].residual < 1e-10);

        assert!(solve_closed_form_n2(&h, Complex64::new(9.0, 0.0), 1e-9).is_err());
        assert!(solve_closed_form_n2(&cv(&[(1.0, 0.0)]), Complex64::new(1.0, 0.0), 1e-9).is_err());
    }

    #[test]
    fn closed_form_n3_examples() {
        let h = cv(&[(1.0, 0.0), (2.0, 0.0), (2.0, 0.0)]);
        let u = Complex64::from_polar(0.5, 0.3);
        let sol = solve_closed_form_n3(&h, u, 1e-9).unwrap();
        assert!(sol.residual <= 1e-10, "residual {}", sol.residual);

        let model = FadingModel::new(FadingKind::IidRayleigh, 3).unwrap();
        for trial in 0..200 {
            let h = draw_channel(&model, &mut Stream::substream(81, trial));
            let (region, _) = crate::doughnut::region_for(&h, &InnerOpts::default());
            let u = sample_target(&region, &mut Stream::substream(82, trial));
            let sol = solve_closed_form_n3(&h, u, 1e-9).unwrap();
            assert!(sol.residual <= 1e-10, "trial {trial} residual {}", sol.residual);
        }
    }

    #[test]
    fn dispatch_routes_by_size() {
        let pol = DispatchPolicy::default();
        let mk = |n: usize, trial: u64| {
            let model = FadingModel::new(FadingKind::IidRayleigh, n).unwrap();
            let h = draw_channel(&model, &mut Stream::substream(83, trial));
            let (region, _) = crate::doughnut::region_for(&h, &InnerOpts::default());
            let u = sample_target(&region, &mut Stream::substream(84, trial));
            (h, u)
        };
        let (h, u) = mk(2, 0);
        assert_eq!(dispatch_solve(&h, u, &pol).unwrap().solver, SolverKind::ClosedFormN2);
        let (h, u) = mk(3, 1);
        assert_eq!(dispatch_solve(&h, u, &pol).unwrap().solver, SolverKind::ClosedFormN3);
        let (h, u) = mk(7, 2);
        assert_eq!(dispatch_solve(&h, u, &pol).unwrap().solver, SolverKind::DfsTwoStep);
        let (h, u) = mk(64, 3);
        let sol = dispatch_solve(&h, u, &pol).unwrap();
        assert!(matches!(sol.solver, SolverKind::CoordDescent | SolverKind::Homotopy));
        assert!(sol.accepted);
    }

    // Rotating the target rotates every phase by the same constant.
    #[test]
    fn rotation_covariance() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 8).unwrap();
        let opts = HomotopyOpts::default();
        for trial in 0..50 {
            let h = draw_channel(&model, &mut Stream::substream(85, trial));
            let inner = inner_radius(&h, &opts.inner);
            let region = crate::doughnut::DoughnutRegion::new(
                inner.value.min(outer_radius(&h)),
                outer_radius(&h),
                8,
            )
            .unwrap();
            let u = sample_target(&region, &mut Stream::substream(86, trial));
            let phi = Stream::substream(87, trial).angle();
            let base = solve_homotopy(&h, u, Some(&inner), &opts).unwrap();
            let rotated_target = u * Complex64::from_polar(1.0, phi);
            let rot = solve_homotopy(&h, rotated_target, Some(&inner), &opts).unwrap();
            assert!((base.residual - rot.residual).abs() <= 1e-12 * outer_radius(&h));
            // Shifting the base solution by phi reproduces the rotated target.
            let shifted: Vec<f64> = base
                .phases
                .angles()
                .iter()
                .map(|&t| wrap_angle(t + phi))
                .collect();
            assert!(residual_of(&h, &shifted, rotated_target) <= 1e-9 * outer_radius(&h));
        }
    }

    // Endpoints of the continuation path hit the annulus radii.
    #[test]
    fn homotopy_endpoints() {
        let model = FadingModel::new(FadingKind::IidRayleigh, 6).unwrap();
        for trial in 0..50 {
            let h = draw_channel(&model, &mut Stream::substream(88, trial));
            let inner = inner_radius(&h, &InnerOpts::default());
            let n = h.n() as f64;
            let f0 = homotopy_sum(&h, &inner.phases, 0.0).norm_sqr() / n;
            let f1 = homotopy_sum(&h, &inner.phases, 1.0).norm_sqr() / n;
            assert!((f0 - inner.value * inner.value).abs() <= 1e-9);
            let m2 = outer_radius(&h).powi(2);
            assert!((f1 - m2).abs() <= 1e-9 * m2);
        }
    }
}
