//! Deterministic covariance-level verification of the scaling limits:
//! exact variances of rectangle sums, limit variance constants from the
//! kernel-norm integrals, fractional-Brownian-sheet covariance and exact
//! sampling, and estimation of the scaling-exponent curve with its kink.
//!
//! With Gaussian innovations the partial sums are Gaussian, so convergence
//! of finite-dimensional distributions is equivalent to convergence of
//! covariances; everything here is therefore deterministic numerics.

use crate::convolution::CovarianceOracle;
use crate::kernel::KernelContext;
use crate::moments::{rect_second_moments, EngineMode, MomentMatrix, RectSpec};
use crate::params::{derive_exponents, FamilyLabel, RegimeClassification};
use crate::quad::{conv2d, gauss_legendre, integrate_line, LineFeatures, PlaneKernel};
use crate::{Error, Result};
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Small dense linear algebra (symmetric matrices up to a few dozen rows).
// ---------------------------------------------------------------------------

/// Minimum eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig_min(mat: &[f64], n: usize) -> f64 {
    let mut a = mat.to_vec();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0f64, f64::max);
        if off.sqrt() <= 1e-14 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(f64::INFINITY, f64::min)
}

/// Lower Cholesky factor, adding diagonal jitter only if needed.
/// Returns `(L, jitter_used)`.
fn cholesky_jitter(mat: &[f64], n: usize, max_jitter_rel: f64) -> Result<(Vec<f64>, f64)> {
    let scale = (0..n)
        .map(|i| mat[i * n + i].abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    // Semidefinite-aware factorization: pivots within rank_tol of zero are
    // treated as exact zeros (their columns vanish), so degenerate
    // covariances sample exactly on their support instead of picking up
    // sqrt(jitter)-sized noise.
    let rank_tol = 1e-12 * scale;
    let try_factor = |jit: f64| -> Option<Vec<f64>> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = mat[i * n + j] + if i == j { jit } else { 0.0 };
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum.abs() <= rank_tol {
                        l[i * n + j] = 0.0;
                    } else if sum < 0.0 {
                        return None;
                    } else {
                        l[i * n + j] = sum.sqrt();
                    }
                } else if l[j * n + j] == 0.0 {
                    // Zero pivot: PSD forces the rest of the column to 0.
                    if sum.abs() > 64.0 * rank_tol {
                        return None;
                    }
                    l[i * n + j] = 0.0;
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(l)
    };
    for lvl in [0.0, 1e-14, 1e-12, max_jitter_rel] {
        let jit = lvl * scale;
        if let Some(l) = try_factor(jit) {
            return Ok((l, jit));
        }
    }
    Err(Error::NotPsd {
        jitter: max_jitter_rel * scale,
    })
}

// ---------------------------------------------------------------------------
// Fractional Brownian sheet
// ---------------------------------------------------------------------------

/// FBS covariance
/// `(1/4) prod_i (x_i^{2Hi} + y_i^{2Hi} - |x_i - y_i|^{2Hi})`.
pub fn fbs_covariance(x: [f64; 2], y: [f64; 2], h1: f64, h2: f64) -> f64 {
    let f = |a: f64, b: f64, h: f64| -> f64 {
        a.powf(2.0 * h) + b.powf(2.0 * h) - (a - b).abs().powf(2.0 * h)
    };
    0.25 * f(x[0], y[0], h1) * f(x[1], y[1], h2)
}

/// Exact Gaussian samples of an FBS on the given points: Cholesky of the
/// covariance matrix (diagonal jitter at most `1e-10` relative), one row
/// per replicate, streams split off the master seed by replicate index.
pub fn fbs_sample(
    points: &[[f64; 2]],
    h1: f64,
    h2: f64,
    seed: u64,
    replicates: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cov[i * n + j] = fbs_covariance(points[i], points[j], h1, h2);
        }
    }
    let (l, _jit) = cholesky_jitter(&cov, n, 1e-10)?;
    let out: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = crate::synth::substream_rng(seed, r as u64);
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            (0..n)
                .map(|i| (0..=i).map(|k| l[i * n + k] * z[k]).sum())
                .collect()
        })
        .collect();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exact variances and covariances of rectangle partial sums
// ---------------------------------------------------------------------------

/// Rectangle sides `(floor(lambda x1), floor(lambda^gamma x2))`.
pub fn rect_sides(lambda: f64, gamma: f64, x: [f64; 2]) -> (usize, usize) {
    let n1 = (lambda * x[0]).floor().max(0.0) as usize;
    let n2 = (lambda.powf(gamma) * x[1]).floor().max(0.0) as usize;
    (n1, n2)
}

/// `Var S_{lambda,gamma}(x) = sum_k (n1-|k1|)(n2-|k2|) r_X(k)` over the
/// oracle's truncated covariance, with the aggregate truncation tail
/// checked against the result.
pub fn exact_variance(
    oracle: &CovarianceOracle,
    lambda: f64,
    gamma: f64,
    x: [f64; 2],
) -> Result<f64> {
    let (n1, n2) = rect_sides(lambda, gamma, x);
    if n1 < 1 || n2 < 1 {
        return Err(Error::InvalidParameter(format!(
            "rectangle sides must be >= 1, got ({n1}, {n2})"
        )));
    }
    let (value, tail) = weighted_rx_sum(oracle, n1, n2, n1, n2)?;
    if tail > crate::convolution::TAIL_DOMINANCE * value.abs() {
        return Err(Error::TruncationDominates { tail, value });
    }
    Ok(value)
}

/// `Cov(S(x), S(y))` by the separable overlap-count weights
/// `c_i(k_i) = #\{(t, s) : t in (0, n_i(x)], s in (0, n_i(y)], t - s = k_i\}`.
pub fn exact_cross_covariance(
    oracle: &CovarianceOracle,
    lambda: f64,
    gamma: f64,
    x: [f64; 2],
    y: [f64; 2],
) -> Result<f64> {
    let (nx1, nx2) = rect_sides(lambda, gamma, x);
    let (ny1, ny2) = rect_sides(lambda, gamma, y);
    if nx1.min(nx2).min(ny1).min(ny2) < 1 {
        return Err(Error::InvalidParameter(
            "both rectangles must be nonempty".into(),
        ));
    }
    let (value, tail) = weighted_rx_sum(oracle, nx1, nx2, ny1, ny2)?;
    if tail > crate::convolution::TAIL_DOMINANCE * value.abs() {
        return Err(Error::TruncationDominates { tail, value });
    }
    Ok(value)
}

fn overlap(k: i64, na: usize, nb: usize) -> f64 {
    let hi = (na as i64).min(nb as i64 + k);
    let lo = 1i64.max(1 + k);
    ((hi - lo + 1).max(0)) as f64
}

fn weighted_rx_sum(
    oracle: &CovarianceOracle,
    nx1: usize,
    nx2: usize,
    ny1: usize,
    ny2: usize,
) -> Result<(f64, f64)> {
    let k1max = nx1.max(ny1) - 1;
    let k2max = nx2.max(ny2) - 1;
    let table = oracle.window_table(k1max, k2max)?;
    let t2 = 2 * k2max + 1;
    let mut value = 0.0;
    let mut wsum = 0.0;
    for k1 in -(ny1 as i64 - 1)..=(nx1 as i64 - 1) {
        let c1 = overlap(k1, nx1, ny1);
        if c1 == 0.0 {
            continue;
        }
        for k2 in -(ny2 as i64 - 1)..=(nx2 as i64 - 1) {
            let c2 = overlap(k2, nx2, ny2);
            if c2 == 0.0 {
                continue;
            }
            let r = table[(k1 + k1max as i64) as usize * t2 + (k2 + k2max as i64) as usize];
            value += c1 * c2 * r;
            wsum += c1 * c2;
        }
    }
    // Aggregate truncation estimate: per-lag tails vary slowly over the
    // window, so the zero-lag estimate scales by the total weight.
    let tail = oracle.r_x_with_tail([0, 0]).1 * wsum;
    Ok((value, tail))
}

// ---------------------------------------------------------------------------
// Limit families: variance constants and covariances by quadrature
// ---------------------------------------------------------------------------

/// A limit family with its numerically computed variance constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitFamily {
    pub label: FamilyLabel,
    /// Hurst pair when the family is an FBS (unbalanced limits).
    pub hurst: Option<(f64, f64)>,
    /// `sigma^2 = E |V(1,1)|^2`.
    pub sigma2: f64,
}

struct AInf<'a> {
    ctx: &'a KernelContext,
}

impl PlaneKernel for AInf<'_> {
    #[inline]
    fn eval(&self, u: [f64; 2]) -> f64 {
        self.ctx.a_inf_unchecked(u)
    }
}

fn region_name(e: &crate::params::ExponentSet) -> String {
    format!(
        "Q~1 = {:.4}, Q~2 = {:.4}, q = ({}, {})",
        e.q_cap_tilde1, e.q_cap_tilde2, e.q1, e.q2
    )
}

/// Well-definedness gate per the existence conditions of the limit fields.
fn family_defined(label: FamilyLabel, e: &crate::params::ExponentSet) -> bool {
    use FamilyLabel::*;
    let equal = e.q1 == e.q2;
    match label {
        Tilde00 => !equal,
        Tilde22 | Tilde21 | Tilde20 => e.q_tilde2 < 1.0,
        Tilde11 => e.q_tilde1 < 1.0 && !equal,
        Plain01 | Plain11 | Plain21 => e.q_cap_tilde1 < 1.0 && !equal,
        Plain22 => e.q_cap_tilde2 < 1.0 && !equal,
        Tilde01 | Tilde02 | Tilde0 => equal && e.q1 < 1.5,
        Plain10 | Plain20 | Plain0 => equal && e.q1 > 1.5,
    }
}

/// `E |V(x)|^2` for a limit family, by quadrature of its defining integral
/// (rearranged over lag variables; each kernel-convolution node is an
/// independent singular quadrature, so the scaling law in `x` is an output,
/// not an input).
pub fn family_second_moment(
    ctx: &KernelContext,
    label: FamilyLabel,
    x: [f64; 2],
) -> Result<f64> {
    family_moment_weighted(ctx, label, x, x)
}

/// `sigma^2 = E |V(1)|^2`.
pub fn sigma_constant(ctx: &KernelContext, label: FamilyLabel) -> Result<f64> {
    family_second_moment(ctx, label, [1.0, 1.0])
}

/// Covariance `E V(x) V(y)` of a limit family at two points. Supported for
/// every family whose defining matrix has rank one, plus `Tilde20` and
/// `Tilde00`; `Tilde0`/`Plain0` are not implemented (their covariance needs
/// a full 2D kernel-convolution grid).
pub fn family_covariance(
    ctx: &KernelContext,
    label: FamilyLabel,
    x: [f64; 2],
    y: [f64; 2],
) -> Result<f64> {
    family_moment_weighted(ctx, label, x, y)
}

fn family_moment_weighted(
    ctx: &KernelContext,
    label: FamilyLabel,
    x: [f64; 2],
    y: [f64; 2],
) -> Result<f64> {
    use FamilyLabel::*;
    let e = derive_exponents(ctx.q1, ctx.q2)?;
    if !family_defined(label, &e) {
        return Err(Error::FamilyNotDefinedInRegion {
            family: label.to_string(),
            region: region_name(&e),
        });
    }
    let det = ctx.det_b().abs();
    let b = ctx.b;
    match label {
        // Rank-one integral families: E = |det|^{-1} (cross extent) *
        // int c(d) K(v d) d d, with K the exact kernel convolution.
        Tilde22 => tilde_rank1(ctx, [0.0, b[1][1]], 1, x, y, e.q_tilde2),
        Tilde21 => tilde_rank1(ctx, [0.0, b[1][0]], 0, x, y, e.q_tilde2),
        Tilde11 => tilde_rank1(ctx, [b[0][0], 0.0], 0, x, y, e.q_tilde1),
        Tilde01 => tilde_rank1(ctx, [b[0][0], b[1][0]], 0, x, y, e.q_tilde1),
        Tilde02 => tilde_rank1(ctx, [b[0][1], b[1][1]], 1, x, y, e.q_tilde1),
        Tilde20 => tilde20_moment(ctx, x, y, e.q_tilde2),
        Tilde00 => tilde00_moment(ctx, x, y, &e),
        // Rank-one indicator families: E = |det|^{-2} int W(tau) M(tau) d tau
        // with M a marginal of the kernel convolution.
        Plain11 => {
            let c = b[1][1] / ctx.det_b();
            plain_rank1(ctx, Marginal::First, x, y, &[(c, 0usize)], Some(1))
        }
        Plain21 => {
            let c = -b[1][0] / ctx.det_b();
            plain_rank1(ctx, Marginal::First, x, y, &[(c, 1usize)], Some(0))
        }
        Plain22 => {
            let c = b[0][0] / ctx.det_b();
            plain_rank1(ctx, Marginal::Second, x, y, &[(c, 1usize)], Some(0))
        }
        Plain01 => {
            let c1 = b[1][1] / ctx.det_b();
            let c2 = -b[1][0] / ctx.det_b();
            plain_rank1(
                ctx,
                Marginal::First,
                x,
                y,
                &[(c1, 0usize), (c2, 1usize)],
                None,
            )
        }
        Plain10 => {
            let ell = [b[1][1] / ctx.det_b(), -b[0][1] / ctx.det_b()];
            plain_directional(ctx, ell, 0, x, y)
        }
        Plain20 => {
            let ell = [-b[1][0] / ctx.det_b(), b[0][0] / ctx.det_b()];
            plain_directional(ctx, ell, 1, x, y)
        }
        Tilde0 | Plain0 => Err(Error::FamilyNotDefinedInRegion {
            family: format!("{label} (covariance quadrature not implemented)"),
            region: region_name(&e),
        }),
    }
    .map(|v| {
        // Integral families carry |det B|^{-1/2} per factor, indicator
        // families |det B|^{-1}.
        match label {
            Plain11 | Plain21 | Plain22 | Plain01 | Plain10 | Plain20 => v / (det * det),
            _ => v / det,
        }
    })
}

/// Interval-overlap weight for the lag-variable rearrangement,
/// `c(d; a, b) = |(0, a] cap ((0, b] + d)|`.
fn overlap_len(d: f64, a: f64, b: f64) -> f64 {
    (a.min(b + d) - 0.0f64.max(d)).max(0.0)
}

/// Gauss nodes after the power map flattening `|d|^{-alpha}` at zero:
/// integrates `int_0^{len} f(d) d d` with `f ~ d^{-alpha}` near 0.
/// Nodes evaluate in parallel (each is typically a singular quadrature of
/// its own).
fn power_gauss<F: Fn(f64) -> Result<f64> + Sync>(
    f: F,
    len: f64,
    alpha: f64,
    order: usize,
) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(order);
    let p = 1.0 / (1.0 - alpha);
    let terms: Result<Vec<f64>> = nodes
        .par_iter()
        .zip(weights.par_iter())
        .map(|(&t, &w)| {
            let tau = 0.5 * (t + 1.0);
            let d = len * tau.powf(p);
            let jac = len * p * tau.powf(p - 1.0) * 0.5;
            Ok(w * jac * f(d)?)
        })
        .collect();
    Ok(terms?.iter().sum())
}

/// Kernel convolution along a fixed ray `d -> K(v d)` whose direction maps
/// to a single point of the `rho`-sphere (a coordinate axis, or any ray
/// when `q1 = q2`). One unit-scale quadrature per sign; other radii follow
/// by the exact change of variables that `conv2d` applies internally.
struct RayKernel {
    v: [f64; 2],
    unit: [f64; 2], // values at the +v and -v unit points
    q1: f64,
    q2: f64,
    qq: f64,
}

impl RayKernel {
    fn new(ctx: &KernelContext, v: [f64; 2], tol: f64) -> Result<Self> {
        debug_assert!(
            v[0] == 0.0 || v[1] == 0.0 || ctx.q1 == ctx.q2,
            "ray must map to a fixed point of the rho-sphere"
        );
        let a = AInf { ctx };
        let up = conv2d(&a, &a, v, ctx.q1, ctx.q2, tol)?;
        let um = conv2d(&a, &a, [-v[0], -v[1]], ctx.q1, ctx.q2, tol)?;
        let q = 1.0 / ctx.q1 + 1.0 / ctx.q2;
        // conv2d normalizes internally; store values at rho(z) = rho(v).
        let rho_v = v[0].abs().powf(ctx.q1) + v[1].abs().powf(ctx.q2);
        Ok(RayKernel {
            v,
            unit: [up * rho_v.powf(2.0 - q), um * rho_v.powf(2.0 - q)],
            q1: ctx.q1,
            q2: ctx.q2,
            qq: q,
        })
    }

    /// `K(v d)` for signed `d != 0`.
    fn eval(&self, d: f64) -> f64 {
        let mu = (self.v[0] * d).abs().powf(self.q1) + (self.v[1] * d).abs().powf(self.q2);
        let base = if d >= 0.0 { self.unit[0] } else { self.unit[1] };
        base * mu.powf(self.qq - 2.0)
    }
}

/// Shared evaluator for rank-one integral ("tilde") families:
/// `E = x_o y_o int c(d; x_a, y_a) K(v d) d d` where `along` picks the
/// coordinate whose lag `d` the kernel depends on; the other coordinate
/// integrates out to the plain product of extents.
fn tilde_rank1(
    ctx: &KernelContext,
    v: [f64; 2],
    along: usize,
    x: [f64; 2],
    y: [f64; 2],
    alpha: f64,
) -> Result<f64> {
    let ray = RayKernel::new(ctx, v, SIGMA_TOL)?;
    let other = 1 - along;
    let cross = x[other] * y[other];
    let len = x[along].max(y[along]);
    let (xa, ya) = (x[along], y[along]);
    let f = |d: f64| -> Result<f64> {
        Ok(overlap_len(d, xa, ya) * ray.eval(d) + overlap_len(-d, xa, ya) * ray.eval(-d))
    };
    let val = power_gauss(f, len, alpha, 24)?;
    Ok(cross * val)
}

/// Relative tolerance of the per-node kernel convolutions inside the
/// variance-constant quadratures.
const SIGMA_TOL: f64 = 2e-4;

/// `Tilde20`: the defining matrix maps onto the second coordinate axis
/// through `w = b21 d1 + b22 d2`, so the moment collapses to a line
/// integral of `K(0, w)` against a piecewise-smooth weight.
fn tilde20_moment(ctx: &KernelContext, x: [f64; 2], y: [f64; 2], alpha: f64) -> Result<f64> {
    let (b21, b22) = (ctx.b[1][0], ctx.b[1][1]);
    if b22 == 0.0 {
        return Err(Error::InvalidParameter(
            "Tilde20 quadrature requires b22 != 0".into(),
        ));
    }
    // Omega(w) = int c1(d1) c2((w - b21 d1)/b22) / |b22| d d1.
    let omega = |w: f64| -> f64 {
        let (nodes, weights) = gauss_legendre(32);
        let lo = -x[0].max(y[0]);
        let hi = x[0].max(y[0]);
        let mut acc = 0.0;
        for (&t, &ww) in nodes.iter().zip(weights.iter()) {
            let d1 = lo + (hi - lo) * 0.5 * (t + 1.0);
            let c1 = overlap_len(d1, x[0], y[0]);
            if c1 == 0.0 {
                continue;
            }
            let d2 = (w - b21 * d1) / b22;
            let c2 = overlap_len(d2, x[1], y[1]);
            acc += ww * 0.5 * (hi - lo) * c1 * c2 / b22.abs();
        }
        acc
    };
    let wmax = b21.abs() * x[0].max(y[0]) + b22.abs() * x[1].max(y[1]);
    let ray = RayKernel::new(ctx, [0.0, 1.0], SIGMA_TOL)?;
    let f = |w: f64| -> Result<f64> {
        Ok(omega(w) * ray.eval(w) + omega(-w) * ray.eval(-w))
    };
    power_gauss(f, wmax, alpha, 24)
}

/// `Tilde00`: genuine 2D lag integral; kernel-convolution values come from
/// a tabulated angular function (the only interpolated path here). Nested
/// 1D: the inner lag is a bounded peak for nonzero outer lag, the outer
/// marginal has a known power singularity at zero.
fn tilde00_moment(
    ctx: &KernelContext,
    x: [f64; 2],
    y: [f64; 2],
    e: &crate::params::ExponentSet,
) -> Result<f64> {
    let conv = crate::convolution::conv_asymptotic(ctx, ctx, 65, CONV_TAB_TOL)?;
    let (b11, b22) = (ctx.b[0][0], ctx.b[1][1]);
    let (qt1, qt2) = (e.q_tilde1, e.q_tilde2);
    let inner = |d1: f64| -> f64 {
        let f = |d2: f64| {
            let c = overlap_len(d2, x[1], y[1]);
            if c == 0.0 {
                return 0.0;
            }
            c * conv.eval([b11 * d1, b22 * d2]) / conv.det_factor
        };
        let width = (b11 * d1).abs().powf(qt1 / qt2) / b22.abs().max(1e-300);
        let feat = LineFeatures {
            singular: vec![],
            peaks: vec![(0.0, width.max(1e-12))],
            tail_beta: 2.0,
        };
        crate::quad::integrate_interval(&f, -y[1], x[1], &feat, 1e-7)
    };
    // Outer marginal singularity: int dd2 of rho~^{-1} ~ |d1|^{-qt1(1-1/qt2)}.
    let alpha = (qt1 * (1.0 - 1.0 / qt2)).clamp(0.0, 0.99);
    let len = x[0].max(y[0]);
    let f = |d1: f64| -> Result<f64> {
        let (wp, wm) = (overlap_len(d1, x[0], y[0]), overlap_len(-d1, x[0], y[0]));
        let mut acc = 0.0;
        if wp > 0.0 {
            acc += wp * inner(d1);
        }
        if wm > 0.0 {
            acc += wm * inner(-d1);
        }
        Ok(acc)
    };
    power_gauss(f, len, alpha, 32)
}

const CONV_TAB_TOL: f64 = 2e-4;

/// Which coordinate the kernel-convolution marginal integrates out.
#[derive(Clone, Copy)]
enum Marginal {
    /// `M(tau) = int K(tau, t) dt`: profile convolution of
    /// `A(v) = int a_inf(v, y) dy`.
    First,
    /// `M(tau) = int K(t, tau) dt` via `A(v) = int a_inf(x, v) dx`.
    Second,
}

/// 1D profile `A(v)` of the kernel, integrating out one coordinate.
fn profile(ctx: &KernelContext, which: Marginal, v: f64, tol: f64) -> f64 {
    let (q1, q2) = (ctx.q1, ctx.q2);
    match which {
        Marginal::First => {
            let f = |y: f64| ctx.a_inf_unchecked([v, y]);
            let feat = LineFeatures {
                singular: vec![],
                peaks: vec![(0.0, v.abs().powf(q1 / q2).max(1e-12))],
                tail_beta: q2,
            };
            integrate_line(&f, &feat, tol)
        }
        Marginal::Second => {
            let f = |xx: f64| ctx.a_inf_unchecked([xx, v]);
            let feat = LineFeatures {
                singular: vec![],
                peaks: vec![(0.0, v.abs().powf(q2 / q1).max(1e-12))],
                tail_beta: q1,
            };
            integrate_line(&f, &feat, tol)
        }
    }
}

/// Marginal `M(tau)` of the kernel convolution as a 1D convolution of
/// profiles, plus its decay data for the quadrature features.
fn marginal_m(ctx: &KernelContext, which: Marginal, tau: f64, tol: f64) -> f64 {
    let a_exp = match which {
        Marginal::First => ctx.q1 * (1.0 - 1.0 / ctx.q2),
        Marginal::Second => ctx.q2 * (1.0 - 1.0 / ctx.q1),
    };
    let f = |t: f64| profile(ctx, which, t, tol * 0.05) * profile(ctx, which, t + tau, tol * 0.05);
    let feat = LineFeatures {
        singular: vec![(0.0, a_exp.max(0.0).min(0.999)), (-tau, a_exp.max(0.0).min(0.999))],
        peaks: vec![],
        tail_beta: 2.0 * a_exp,
    };
    integrate_line(&f, &feat, tol)
}

/// Rank-one indicator families: `int W(D tau) M(tau) d tau` where the
/// weight is a product of interval overlaps at the signed linear images of
/// the lag and, for each coordinate the image misses, `min(x_i, y_i)`.
fn plain_rank1(
    ctx: &KernelContext,
    which: Marginal,
    x: [f64; 2],
    y: [f64; 2],
    scaled: &[(f64, usize)],
    free_coord: Option<usize>,
) -> Result<f64> {
    let a_exp = match which {
        Marginal::First => ctx.q1 * (1.0 - 1.0 / ctx.q2),
        Marginal::Second => ctx.q2 * (1.0 - 1.0 / ctx.q1),
    };
    let alpha = (2.0 * a_exp - 1.0).clamp(0.0, 0.999);
    let cross = match free_coord {
        Some(i) => x[i].min(y[i]),
        None => 1.0,
    };
    // Support of the weight: smallest |tau| where some factor vanishes.
    let len = scaled
        .iter()
        .map(|&(c, i)| x[i].max(y[i]) / c.abs().max(1e-300))
        .fold(f64::INFINITY, f64::min);
    let weight = |tau: f64| -> f64 {
        scaled
            .iter()
            .map(|&(c, i)| overlap_len(c * tau, x[i], y[i]))
            .product()
    };
    let f = |tau: f64| -> Result<f64> {
        let (wp, wm) = (weight(tau), weight(-tau));
        let mut acc = 0.0;
        if wp > 0.0 {
            acc += wp * marginal_m(ctx, which, tau, 1e-6);
        }
        if wm > 0.0 {
            acc += wm * marginal_m(ctx, which, -tau, 1e-6);
        }
        Ok(acc)
    };
    let val = power_gauss(f, len, alpha, 24)?;
    Ok(cross * val)
}

/// Directional families (`q1 = q2`): the weight depends on `l . tau` only,
/// and the marginal along the complementary direction is a profile
/// convolution with the parallelogram Jacobian.
fn plain_directional(
    ctx: &KernelContext,
    ell: [f64; 2],
    constrained: usize,
    x: [f64; 2],
    y: [f64; 2],
) -> Result<f64> {
    // Basis: f with l.f = 1, e with l.e = 0.
    let l2 = ell[0] * ell[0] + ell[1] * ell[1];
    let fvec = [ell[0] / l2, ell[1] / l2];
    let evec = [-ell[1], ell[0]];
    let jac = (fvec[0] * evec[1] - fvec[1] * evec[0]).abs();
    let q = ctx.q1;
    let dir_profile = |c: f64, tol: f64| -> f64 {
        let f = |s: f64| {
            ctx.a_inf_unchecked([c * fvec[0] + s * evec[0], c * fvec[1] + s * evec[1]])
        };
        // Closest approach of the line to the origin.
        let dot = fvec[0] * evec[0] + fvec[1] * evec[1];
        let s0 = -c * dot / (evec[0] * evec[0] + evec[1] * evec[1]);
        let width = c.abs().max(1e-12);
        let feat = LineFeatures {
            singular: vec![],
            peaks: vec![(s0, width)],
            tail_beta: q,
        };
        integrate_line(&f, &feat, tol)
    };
    let a_exp = q - 1.0; // profile decay exponent for q1 = q2 = q
    let alpha = (2.0 * a_exp - 1.0).clamp(0.0, 0.999);
    let m_dir = |w: f64, tol: f64| -> f64 {
        let f = |c: f64| dir_profile(c, tol * 0.05) * dir_profile(c + w, tol * 0.05);
        let feat = LineFeatures {
            singular: vec![(0.0, a_exp.min(0.999)), (-w, a_exp.min(0.999))],
            peaks: vec![],
            tail_beta: 2.0 * a_exp,
        };
        jac * integrate_line(&f, &feat, tol)
    };
    let free = 1 - constrained;
    let cross = x[free].min(y[free]);
    let len = x[constrained].max(y[constrained]);
    let f = |w: f64| -> Result<f64> {
        let c_plus = overlap_len(w, x[constrained], y[constrained]);
        let c_minus = overlap_len(-w, x[constrained], y[constrained]);
        Ok(c_minus * m_dir(w, 1e-6) + c_plus * m_dir(-w, 1e-6))
    };
    let val = power_gauss(f, len, alpha, 24)?;
    Ok(cross * val)
}

/// Build a [`LimitFamily`] (label, Hurst pair, variance constant) from a
/// classification's limit label.
pub fn limit_family(
    ctx: &KernelContext,
    label: &crate::params::LimitLabel,
) -> Result<LimitFamily> {
    let sigma2 = sigma_constant(ctx, label.family)?;
    Ok(LimitFamily {
        label: label.family,
        hurst: label.hurst,
        sigma2,
    })
}

// ---------------------------------------------------------------------------
// Scaling-exponent curve estimation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingCell {
    pub gamma: f64,
    pub lambda: f64,
    pub n1: usize,
    pub n2: usize,
    pub x: [f64; 2],
    pub variance: f64,
    pub tail: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub gamma_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub cells: Vec<ScalingCell>,
    /// Fitted `H^(gamma)` per gamma (half the log-log variance slope).
    pub h_hat: Vec<f64>,
    /// Slopes from the two largest lambdas only, for stability reporting.
    pub h_hat_top_pair: Vec<f64>,
    /// Kink location of the two-segment fit.
    pub gamma0_hat: f64,
    /// Bootstrap confidence interval for the kink (2.5%, 97.5%).
    pub gamma0_ci: (f64, f64),
    /// Theory curve `H(gamma)` when a classification was supplied.
    pub h_theory: Option<Vec<f64>>,
    pub max_slope_error: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    /// Rescale `x2` per gamma to keep the floor quantization of
    /// `n2 = floor(lambda^gamma x2)` mild across the grid.
    pub auto_x2: bool,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            auto_x2: true,
            seed: 0x5eed,
        }
    }
}

/// Deterministic scaling scan: exact variances over a `(gamma, lambda)`
/// grid, per-gamma log-log slopes, and a continuous two-segment fit of
/// `H^(gamma)` locating the scaling transition.
pub fn estimate_h_curve(
    ctx: &KernelContext,
    regime: Option<&RegimeClassification>,
    gamma_grid: &[f64],
    lambda_grid: &[f64],
    x: [f64; 2],
    opts: ScanOptions,
) -> Result<ScalingReport> {
    if gamma_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("empty scan grids".into()));
    }
    let lam_mid = lambda_grid[lambda_grid.len() / 2];
    let mut cells = Vec::new();
    let mut h_hat = Vec::with_capacity(gamma_grid.len());
    let mut h_top = Vec::with_capacity(gamma_grid.len());
    for &gamma in gamma_grid {
        // Keep n2 large enough that floor quantization cannot bend the
        // log-log slope: scale x2 by a power of two per gamma.
        let x_eff = if opts.auto_x2 {
            let target = lam_mid.powf(1.0 - gamma) * 8.0;
            let scale = target.max(1.0).log2().floor().exp2().clamp(1.0, 64.0);
            [x[0], x[1] * scale]
        } else {
            x
        };
        let mut logs: Vec<(f64, f64)> = Vec::with_capacity(lambda_grid.len());
        for &lambda in lambda_grid {
            let (n1, n2) = rect_sides(lambda, gamma, x_eff);
            if n1 < 1 || n2 < 1 {
                continue;
            }
            let pad1 = (2 * n1.max(n2)).clamp(1024, 24576);
            let pad2 = (2 * n2.max(n1 / 2)).clamp(1024, 49152);
            let mm = rect_second_moments(
                ctx,
                &[RectSpec { n1, n2 }],
                EngineMode::FullKernel { pad1, pad2 },
            )?;
            let var = mm.at(0, 0);
            cells.push(ScalingCell {
                gamma,
                lambda,
                n1,
                n2,
                x: x_eff,
                variance: var,
                tail: mm.tail,
            });
            logs.push((lambda.ln(), var.ln()));
        }
        if logs.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "gamma {gamma}: fewer than two usable lambdas"
            )));
        }
        h_hat.push(0.5 * ols_slope(&logs));
        let top = &logs[logs.len() - 2..];
        h_top.push(0.5 * (top[1].1 - top[0].1) / (top[1].0 - top[0].0));
    }

    let (gamma0_hat, _sse) = kink_fit(gamma_grid, &h_hat);
    let gamma0_ci = kink_bootstrap(gamma_grid, &h_hat, gamma0_hat, opts.seed);

    let (h_theory, max_slope_error) = match regime {
        Some(reg) => {
            let mut curve = Vec::with_capacity(gamma_grid.len());
            let mut maxerr: f64 = 0.0;
            for (i, &g) in gamma_grid.iter().enumerate() {
                let h = crate::params::scaling_exponent(reg, &reg.exponents, g)?;
                maxerr = maxerr.max((h - h_hat[i]).abs());
                curve.push(h);
            }
            (Some(curve), Some(maxerr))
        }
        None => (None, None),
    };

    Ok(ScalingReport {
        gamma_grid: gamma_grid.to_vec(),
        lambda_grid: lambda_grid.to_vec(),
        cells,
        h_hat,
        h_hat_top_pair: h_top,
        gamma0_hat,
        gamma0_ci,
        h_theory,
        max_slope_error,
    })
}

fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Continuous two-segment least-squares fit `a + b g + c (g - g0)_+`,
/// grid-searched over the kink location `g0`.
pub fn kink_fit(gammas: &[f64], h: &[f64]) -> (f64, f64) {
    let lo = gammas[0];
    let hi = gammas[gammas.len() - 1];
    let mut best = (0.5 * (lo + hi), f64::INFINITY);
    let grid = 401;
    for i in 1..grid {
        let g0 = lo + (hi - lo) * i as f64 / grid as f64;
        let sse = segment_sse(gammas, h, g0);
        if sse < best.1 {
            best = (g0, sse);
        }
    }
    best
}

fn segment_sse(gammas: &[f64], h: &[f64], g0: f64) -> f64 {
    // Normal equations for the 3-parameter design [1, g, (g-g0)+].
    let n = gammas.len();
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for i in 0..n {
        let row = [1.0, gammas[i], (gammas[i] - g0).max(0.0)];
        for a in 0..3 {
            for b in 0..3 {
                ata[a][b] += row[a] * row[b];
            }
            atb[a] += row[a] * h[i];
        }
    }
    let Some(coef) = solve3(&ata, &atb) else {
        return f64::INFINITY;
    };
    let mut sse = 0.0;
    for i in 0..n {
        let fit = coef[0] + coef[1] * gammas[i] + coef[2] * (gammas[i] - g0).max(0.0);
        sse += (h[i] - fit) * (h[i] - fit);
    }
    sse
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Residual bootstrap over the gamma-grid points for the kink location.
fn kink_bootstrap(gammas: &[f64], h: &[f64], g0: f64, seed: u64) -> (f64, f64) {
    let n = gammas.len();
    let sse = segment_sse(gammas, h, g0);
    // Fitted values at the optimum.
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for i in 0..n {
        let row = [1.0, gammas[i], (gammas[i] - g0).max(0.0)];
        for a in 0..3 {
            for b in 0..3 {
                ata[a][b] += row[a] * row[b];
            }
            atb[a] += row[a] * h[i];
        }
    }
    let coef = solve3(&ata, &atb).unwrap_or([0.0; 3]);
    let fitted: Vec<f64> = gammas
        .iter()
        .map(|&g| coef[0] + coef[1] * g + coef[2] * (g - g0).max(0.0))
        .collect();
    let residuals: Vec<f64> = h.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let _ = sse;
    let reps = 500;
    let mut estimates: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = crate::synth::substream_rng(seed, r as u64);
            let mut hb = vec![0.0; n];
            for i in 0..n {
                let j = (rng.random::<u64>() % n as u64) as usize;
                hb[i] = fitted[i] + residuals[j];
            }
            kink_fit(gammas, &hb).0
        })
        .collect();
    estimates.sort_by(|a, b| a.total_cmp(b));
    (
        estimates[(reps as f64 * 0.025) as usize],
        estimates[(reps as f64 * 0.975) as usize],
    )
}

// ---------------------------------------------------------------------------
// Limit covariance check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitCheckEntry {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub normalized: f64,
    pub limit: f64,
    pub rel_dev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitCheckReport {
    pub gamma: f64,
    pub lambda: f64,
    pub h_gamma: f64,
    pub sigma2: f64,
    pub family: FamilyLabel,
    pub entries: Vec<LimitCheckEntry>,
    pub max_rel_dev: f64,
}

/// Compare `lambda^{-2H(gamma)} Cov(S(x), S(y))` against the limit
/// covariance `sigma^2 E[B(x) B(y)]` (or the critical-family covariance at
/// `gamma = gamma0`) over all pairs from `xs`.
pub fn limit_covariance_check(
    ctx: &KernelContext,
    regime: &RegimeClassification,
    gamma: f64,
    lambda: f64,
    xs: &[[f64; 2]],
) -> Result<LimitCheckReport> {
    let exps = regime.exponents;
    let h = crate::params::scaling_exponent(regime, &exps, gamma)?;
    let label = if gamma > regime.gamma0 {
        regime.limit_plus
    } else if gamma < regime.gamma0 {
        regime.limit_minus
    } else {
        regime.limit_crit
    };

    // Lattice side: second moments of all rectangles at once.
    let rects: Vec<RectSpec> = xs
        .iter()
        .map(|&x| {
            let (n1, n2) = rect_sides(lambda, gamma, x);
            RectSpec {
                n1: n1.max(1),
                n2: n2.max(1),
            }
        })
        .collect();
    let n1max = rects.iter().map(|r| r.n1).max().unwrap();
    let n2max = rects.iter().map(|r| r.n2).max().unwrap();
    let pad1 = (2 * n1max.max(n2max / 4)).clamp(1024, 16384);
    let pad2 = (2 * n2max.max(n1max / 4)).clamp(1024, 49152);
    let mm = rect_second_moments(ctx, &rects, EngineMode::FullKernel { pad1, pad2 })?;

    let norm = lambda.powf(-2.0 * h);
    let sigma2 = sigma_constant(ctx, label.family)?;
    let mut entries = Vec::new();
    let mut maxdev: f64 = 0.0;
    for i in 0..xs.len() {
        for j in i..xs.len() {
            let normalized = mm.at(i, j) * norm;
            let limit = match label.hurst {
                Some((h1, h2)) => sigma2 * fbs_covariance(xs[i], xs[j], h1, h2),
                None => family_covariance(ctx, label.family, xs[i], xs[j])?,
            };
            let rel = normalized / limit - 1.0;
            maxdev = maxdev.max(rel.abs());
            entries.push(LimitCheckEntry {
                x: xs[i],
                y: xs[j],
                normalized,
                limit,
                rel_dev: rel,
            });
        }
    }
    Ok(LimitCheckReport {
        gamma,
        lambda,
        h_gamma: h,
        sigma2,
        family: label.family,
        entries,
        max_rel_dev: maxdev,
    })
}

/// Expose the full moment matrix for callers that need raw values.
pub fn rect_cov_matrix(
    ctx: &KernelContext,
    rects: &[RectSpec],
    mode: EngineMode,
) -> Result<MomentMatrix> {
    rect_second_moments(ctx, rects, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    fn oracle(m: usize) -> CovarianceOracle {
        let mut p = ModelParams::new(1.2, 1.6, [[1.0, 0.0], [0.0, 1.0]]);
        p.m = m;
        CovarianceOracle::new(KernelContext::new(&p).unwrap())
    }

    #[test]
    fn variance_of_unit_rectangle_is_r0() {
        let o = oracle(512);
        let v = exact_variance(&o, 1.0, 1.0, [1.0, 1.0]).unwrap();
        let r0 = o.r_x_with_tail([0, 0]).0;
        assert!((v - r0).abs() < 1e-12 * r0);
    }

    #[test]
    fn variance_of_two_by_one() {
        let o = oracle(512);
        let v = exact_variance(&o, 2.0, 1.0, [1.0, 0.5]).unwrap();
        let r0 = o.r_x_with_tail([0, 0]).0;
        let r10 = o.r_x_with_tail([1, 0]).0;
        assert!((v - (2.0 * r0 + 2.0 * r10)).abs() < 1e-12 * v.abs());
    }

    #[test]
    fn variance_matches_brute_force_8x8() {
        let o = oracle(512);
        let v = exact_variance(&o, 8.0, 1.0, [1.0, 1.0]).unwrap();
        let mut brute = 0.0;
        for t1 in 1..=8i64 {
            for t2 in 1..=8i64 {
                for s1 in 1..=8i64 {
                    for s2 in 1..=8i64 {
                        brute += o.r_x_with_tail([t1 - s1, t2 - s2]).0;
                    }
                }
            }
        }
        assert!((v - brute).abs() <= 1e-10 * brute.abs());
    }

    #[test]
    fn cross_covariance_reduces_to_variance_and_matches_brute() {
        let o = oracle(512);
        let x = [1.0, 1.0];
        let v = exact_variance(&o, 4.0, 1.0, x).unwrap();
        let c = exact_cross_covariance(&o, 4.0, 1.0, x, x).unwrap();
        assert!((v - c).abs() <= 1e-12 * v.abs());
        // 4x4 vs 6x3 rectangles.
        let cxy = exact_cross_covariance(&o, 1.0, 1.0, [4.0, 4.0], [6.0, 3.0]).unwrap();
        let mut brute = 0.0;
        for t1 in 1..=4i64 {
            for t2 in 1..=4i64 {
                for s1 in 1..=6i64 {
                    for s2 in 1..=3i64 {
                        brute += o.r_x_with_tail([t1 - s1, t2 - s2]).0;
                    }
                }
            }
        }
        assert!((cxy - brute).abs() <= 1e-10 * brute.abs());
    }

    #[test]
    fn fbs_covariance_examples() {
        // H = (1,1): product form.
        assert_eq!(fbs_covariance([2.0, 3.0], [5.0, 7.0], 1.0, 1.0), 2.0 * 3.0 * 5.0 * 7.0);
        // H = (1/2, 1/2) at x = y = (1,1): 1.
        assert_eq!(fbs_covariance([1.0, 1.0], [1.0, 1.0], 0.5, 0.5), 1.0);
        // Worked value.
        let h2 = 0.5666666666666667;
        let v = fbs_covariance([1.0, 1.0], [1.0, 2.0], 1.0, h2);
        let expect = 2f64.powf(2.0 * h2 - 1.0);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn fbs_degenerate_h1_is_rank_one() {
        let pts: Vec<[f64; 2]> = vec![[0.5, 0.5], [1.0, 0.5], [0.5, 1.5], [2.0, 2.0]];
        let samples = fbs_sample(&pts, 1.0, 1.0, 7, 50).unwrap();
        for row in &samples {
            let z = row[0] / (pts[0][0] * pts[0][1]);
            for (v, p) in row.iter().zip(pts.iter()) {
                assert!((v - z * p[0] * p[1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn kink_fit_recovers_breakpoint() {
        let gammas: Vec<f64> = (0..13).map(|i| 0.4 + 0.1 * i as f64).collect();
        let h: Vec<f64> = gammas
            .iter()
            .map(|&g| {
                if g < 0.95 {
                    0.5667 + g
                } else {
                    0.5667 + 0.95 + 0.5667 * (g - 0.95)
                }
            })
            .collect();
        let (g0, _) = kink_fit(&gammas, &h);
        assert!((g0 - 0.95).abs() < 0.02, "kink at {g0}");
    }
}
