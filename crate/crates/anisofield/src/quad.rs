//! Numerical integration for singular kernels.
//!
//! The recurring shapes here are one-dimensional integrals with known
//! integrable power singularities and algebraic tails, and the nested
//! two-dimensional convolution `(a1 * a2)(z) = int a1(u) a2(u + z) du`
//! of generalized homogeneous kernels. Singular panels are flattened by
//! power substitutions, tails by an algebraic map, everything else by
//! adaptive bisection with paired Gauss rules.

use crate::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

thread_local! {
    static GL_LO: (Vec<f64>, Vec<f64>) = gauss_legendre(16);
    static GL_HI: (Vec<f64>, Vec<f64>) = gauss_legendre(32);
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for (&x, &w) in rule.0.iter().zip(rule.1.iter()) {
        acc += w * f(c + h * x);
    }
    acc * h
}

/// Adaptive bisection on `[a, b]` with a paired-Gauss error estimate.
/// `tol` is an absolute tolerance for this segment.
pub fn adaptive_segment<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let coarse = GL_LO.with(|r| gl_panel(f, a, b, r));
    let fine = GL_HI.with(|r| gl_panel(f, a, b, r));
    let err = (fine - coarse).abs();
    if err <= tol || depth == 0 || (b - a) < 1e-14 * (a.abs() + b.abs() + 1.0) {
        return fine;
    }
    let mid = 0.5 * (a + b);
    adaptive_segment(f, a, mid, 0.5 * tol, depth - 1)
        + adaptive_segment(f, mid, b, 0.5 * tol, depth - 1)
}

/// `int_a^b f` where `f ~ c |t - a|^{-alpha}` near `a`, `alpha in [0, 1)`.
/// The substitution `t = a + (b - a) tau^{1/(1-alpha)}` flattens the
/// singularity; the transformed integrand is integrated adaptively.
pub fn power_mapped_left<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, alpha: f64, tol: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&alpha));
    let p = 1.0 / (1.0 - alpha);
    let len = b - a;
    let g = |tau: f64| {
        let t = a + len * tau.powf(p);
        f(t) * len * p * tau.powf(p - 1.0)
    };
    adaptive_segment(&g, 0.0, 1.0, tol, 24)
}

/// Mirror of [`power_mapped_left`] for a singularity at `b`.
pub fn power_mapped_right<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, alpha: f64, tol: f64) -> f64 {
    power_mapped_left(&|t| f(a + b - t), a, b, alpha, tol)
}

/// `int_{t0}^{inf} f` (or the mirrored left tail for `sign < 0`) where
/// `f ~ c |t|^{-beta}` with `beta > 1`. Algebraic map
/// `t = t0 tau^{-1/(beta-1)}` makes the integrand asymptotically flat.
pub fn tail_mapped<F: Fn(f64) -> f64>(f: &F, t0: f64, beta: f64, sign: f64, tol: f64) -> f64 {
    debug_assert!(beta > 1.0 && t0 > 0.0);
    let p = 1.0 / (beta - 1.0);
    let g = |tau: f64| {
        let t = t0 * tau.powf(-p);
        f(sign * t) * t0 * p * tau.powf(-p - 1.0)
    };
    adaptive_segment(&g, 0.0, 1.0, tol, 24)
}

/// A feature description of a 1D integrand over the whole line.
#[derive(Debug, Clone, Default)]
pub struct LineFeatures {
    /// `(location, alpha)` integrable power singularities, `alpha in [0,1)`.
    /// `alpha = 0` marks a point where the integrand is finite but kinked
    /// or sharply peaked; the point still becomes a panel edge.
    pub singular: Vec<(f64, f64)>,
    /// `(center, width)` of sharp but bounded peaks; panels shrink there.
    pub peaks: Vec<(f64, f64)>,
    /// Tail decay exponent: `f ~ |t|^{-beta}` as `t -> +/- inf`.
    pub tail_beta: f64,
}

/// Distance (in units of the feature span) at which algebraic tail maps
/// take over from explicit panels; far enough that the integrand is well
/// into its asymptotic power law.
const FAR_FACTOR: f64 = 256.0;

/// Integrate `f` over the whole real line given its feature map.
///
/// Around each feature the panels form a geometric ladder from the feature's
/// own width out to the half-distance to its neighbour, so peaks whose width
/// is many orders of magnitude below the feature spacing stay cheap. Panels
/// that end on a power singularity are flattened by the power substitution.
pub fn integrate_line<F: Fn(f64) -> f64>(f: &F, feat: &LineFeatures, tol_abs: f64) -> f64 {
    // Assemble feature centers: (location, alpha, width).
    let mut centers: Vec<(f64, f64, f64)> = Vec::new();
    for &(c, a) in &feat.singular {
        centers.push((c, a, 0.0));
    }
    for &(c, w) in &feat.peaks {
        centers.push((c, 0.0, w.max(1e-300)));
    }
    if centers.is_empty() {
        centers.push((0.0, 0.0, 1.0));
    }
    centers.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Merge near-coincident centers, keeping the stronger singularity.
    let mut merged: Vec<(f64, f64, f64)> = Vec::new();
    for c in centers {
        match merged.last_mut() {
            Some(last) if (c.0 - last.0).abs() <= 1e-12 * (1.0 + c.0.abs()) => {
                last.1 = last.1.max(c.1);
                last.2 = last.2.min(c.2);
            }
            _ => merged.push(c),
        }
    }
    let span = (merged.last().unwrap().0 - merged[0].0).abs();
    let scale = span.max(1.0);

    let n = merged.len();
    let seg_tol = tol_abs / (8.0 * n as f64 + 4.0);
    let mut total = 0.0;
    let mut rightmost = f64::NEG_INFINITY;
    let mut leftmost = f64::INFINITY;
    for (i, &(c, alpha, w)) in merged.iter().enumerate() {
        // Window half-widths toward each neighbour (features own disjoint
        // windows; gaps are covered by the geometric ladders).
        let win_l = if i > 0 {
            0.5 * (c - merged[i - 1].0)
        } else {
            FAR_FACTOR * scale
        };
        let win_r = if i + 1 < n {
            0.5 * (merged[i + 1].0 - c)
        } else {
            FAR_FACTOR * scale
        };
        leftmost = leftmost.min(c - win_l);
        rightmost = rightmost.max(c + win_r);
        for (sgn, win) in [(-1.0, win_l), (1.0, win_r)] {
            if win <= 0.0 {
                continue;
            }
            if alpha > 0.0 {
                // One power-mapped panel covers the full window.
                let v = if sgn < 0.0 {
                    power_mapped_right(f, c - win, c, alpha, seg_tol)
                } else {
                    power_mapped_left(f, c, c + win, alpha, seg_tol)
                };
                total += v;
            } else {
                // Geometric ladder from the peak width outward.
                let w0 = w.min(win).max(win * 1e-16);
                let mut lo = 0.0f64;
                let mut hi = w0;
                loop {
                    let (a, b) = if sgn < 0.0 {
                        (c - hi, c - lo)
                    } else {
                        (c + lo, c + hi)
                    };
                    total += adaptive_segment(f, a, b, seg_tol, 12);
                    if hi >= win {
                        break;
                    }
                    lo = hi;
                    hi = (hi * 4.0).min(win);
                }
            }
        }
    }
    // Tails; if all features sit on one side of the origin, bridge the gap
    // so the algebraic tail maps start at positive abscissae.
    if rightmost <= 0.0 {
        total += adaptive_segment(f, rightmost, scale, seg_tol, 12);
        rightmost = scale;
    }
    if leftmost >= 0.0 {
        total += adaptive_segment(f, -scale, leftmost, seg_tol, 12);
        leftmost = -scale;
    }
    total += tail_mapped(f, rightmost.max(1e-8), feat.tail_beta, 1.0, seg_tol);
    total += tail_mapped(f, (-leftmost).max(1e-8), feat.tail_beta, -1.0, seg_tol);
    total
}

/// Integrate `f` over the finite interval `[lo, hi]` given interior
/// features; endpoints are plain panel edges (no tails). A singular feature
/// may sit exactly on an endpoint.
pub fn integrate_interval<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    feat: &LineFeatures,
    tol_abs: f64,
) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let inside = |x: f64| x >= lo - 1e-12 && x <= hi + 1e-12;
    let mut centers: Vec<(f64, f64, f64)> = Vec::new();
    for &(c, a) in &feat.singular {
        if inside(c) {
            centers.push((c.clamp(lo, hi), a, 0.0));
        }
    }
    for &(c, w) in &feat.peaks {
        if inside(c) {
            centers.push((c.clamp(lo, hi), 0.0, w.max(1e-300)));
        }
    }
    if centers.is_empty() {
        return adaptive_segment(f, lo, hi, tol_abs, 18);
    }
    centers.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64, f64)> = Vec::new();
    for c in centers {
        match merged.last_mut() {
            Some(last) if (c.0 - last.0).abs() <= 1e-12 * (1.0 + c.0.abs()) => {
                last.1 = last.1.max(c.1);
                last.2 = last.2.min(c.2);
            }
            _ => merged.push(c),
        }
    }
    let n = merged.len();
    let seg_tol = tol_abs / (8.0 * n as f64 + 4.0);
    let mut total = 0.0;
    for (i, &(c, alpha, w)) in merged.iter().enumerate() {
        let win_l = if i > 0 {
            0.5 * (c - merged[i - 1].0)
        } else {
            c - lo
        };
        let win_r = if i + 1 < n {
            0.5 * (merged[i + 1].0 - c)
        } else {
            hi - c
        };
        for (sgn, win) in [(-1.0f64, win_l), (1.0, win_r)] {
            if win <= 0.0 {
                continue;
            }
            if alpha > 0.0 {
                total += if sgn < 0.0 {
                    power_mapped_right(f, c - win, c, alpha, seg_tol)
                } else {
                    power_mapped_left(f, c, c + win, alpha, seg_tol)
                };
            } else {
                let w0 = w.min(win).max(win * 1e-16);
                let mut lo_r = 0.0f64;
                let mut hi_r = w0;
                loop {
                    let (a, b) = if sgn < 0.0 {
                        (c - hi_r, c - lo_r)
                    } else {
                        (c + lo_r, c + hi_r)
                    };
                    total += adaptive_segment(f, a, b, seg_tol, 12);
                    if hi_r >= win {
                        break;
                    }
                    lo_r = hi_r;
                    hi_r = (hi_r * 4.0).min(win);
                }
            }
        }
    }
    total
}

/// Like [`conv2d`] but restricted to `u` in the rectangle
/// `[lo1, hi1] x [lo2, hi2]`.
pub fn conv2d_over_box<K1: PlaneKernel, K2: PlaneKernel>(
    a1: &K1,
    a2: &K2,
    z: [f64; 2],
    rect: [[f64; 2]; 2],
    q1: f64,
    q2: f64,
    tol_rel: f64,
) -> Result<f64> {
    let alpha_out = (q2 * (1.0 - 1.0 / q1)).max(0.0);
    let [xr, yr] = rect;
    let inner = move |u2: f64, tol_abs: f64| -> f64 {
        let w1 = u2.abs().powf(q2 / q1);
        let w2 = (u2 + z[1]).abs().powf(q2 / q1);
        let f = |u1: f64| a1.eval([u1, u2]) * a2.eval([u1 + z[0], u2 + z[1]]);
        let feat = LineFeatures {
            singular: vec![],
            peaks: vec![(0.0, w1.max(1e-12)), (-z[0], w2.max(1e-12))],
            tail_beta: 2.0 * q1,
        };
        integrate_interval(&f, xr[0], xr[1], &feat, tol_abs)
    };
    let eval = |tol_abs: f64| -> f64 {
        let outer = |u2: f64| inner(u2, 0.08 * tol_abs);
        let feat = LineFeatures {
            singular: vec![(0.0, alpha_out), (-z[1], alpha_out)],
            peaks: vec![],
            tail_beta: q2 * (2.0 - 1.0 / q1),
        };
        integrate_interval(&outer, yr[0], yr[1], &feat, tol_abs)
    };
    let rough = eval(f64::INFINITY).abs().max(1e-300);
    let coarse = eval(rough * tol_rel * 2.0);
    let fine = eval(rough * tol_rel * 0.5);
    let change = (fine - coarse).abs() / fine.abs().max(1e-300);
    if change > tol_rel.max(1e-13) {
        return Err(Error::QuadratureNotConverged {
            change,
            tol: tol_rel,
        });
    }
    Ok(fine)
}

/// Run an integration at two resolutions and insist on relative agreement.
pub fn converged<G: Fn(f64) -> f64>(eval: G, tol_rel: f64) -> Result<f64> {
    let coarse = eval(tol_rel);
    let fine = eval(tol_rel / 8.0);
    let change = (fine - coarse).abs() / fine.abs().max(1e-300);
    if change > tol_rel.max(1e-13) {
        return Err(Error::QuadratureNotConverged {
            change,
            tol: tol_rel,
        });
    }
    Ok(fine)
}

/// A evaluable planar kernel, `u != 0` guaranteed by callers.
pub trait PlaneKernel: Sync {
    fn eval(&self, u: [f64; 2]) -> f64;
}

impl<F: Fn([f64; 2]) -> f64 + Sync> PlaneKernel for F {
    fn eval(&self, u: [f64; 2]) -> f64 {
        self(u)
    }
}

/// Exact continuous convolution `(a1 * a2)(z) = int a1(u) a2(u + z) du`
/// of two kernels with common radial exponents `(q1, q2)`, `1 < Q < 2`.
///
/// Both kernels must be generalized homogeneous (which the asymptotic
/// kernels are, by construction): the argument is first normalized onto
/// the unit `rho`-sphere by the exact change of variables
/// `u -> (mu^{1/q1} u1, mu^{1/q2} u2)`, so the quadrature always runs at
/// unit scale regardless of `|z|`.
///
/// Inner integral in `u1` (peaks at `0` and `-z1`, tail `|u1|^{-2 q1}`),
/// outer in `u2` (power singularities at `0` and `-z2` of exponent
/// `q2 (1 - 1/q1)` when `q1 > 1`, tail `|u2|^{-q2 (2 - 1/q1)}`).
pub fn conv2d<K1: PlaneKernel, K2: PlaneKernel>(
    a1: &K1,
    a2: &K2,
    z: [f64; 2],
    q1: f64,
    q2: f64,
    tol_rel: f64,
) -> Result<f64> {
    let q = 1.0 / q1 + 1.0 / q2;
    let rho_z = z[0].abs().powf(q1) + z[1].abs().powf(q2);
    if rho_z > 0.0 && !(0.5..=2.0).contains(&rho_z) {
        let mu = rho_z;
        let zu = [z[0] / mu.powf(1.0 / q1), z[1] / mu.powf(1.0 / q2)];
        return conv2d(a1, a2, zu, q1, q2, tol_rel).map(|v| v * mu.powf(q - 2.0));
    }
    let beta_in = 2.0 * q1;
    let beta_out = q2 * (2.0 - 1.0 / q1);
    debug_assert!(beta_in > 1.0 && beta_out > 1.0);
    let alpha_out = (q2 * (1.0 - 1.0 / q1)).max(0.0);

    let inner = move |u2: f64, tol_abs: f64| -> f64 {
        let w1 = u2.abs().powf(q2 / q1); // peak width of a1's factor
        let w2 = (u2 + z[1]).abs().powf(q2 / q1);
        let f = |u1: f64| a1.eval([u1, u2]) * a2.eval([u1 + z[0], u2 + z[1]]);
        let feat = LineFeatures {
            singular: vec![],
            peaks: vec![(0.0, w1.max(1e-12)), (-z[0], w2.max(1e-12))],
            tail_beta: beta_in,
        };
        integrate_line(&f, &feat, tol_abs)
    };

    let eval = |tol_abs: f64| -> f64 {
        let outer = |u2: f64| inner(u2, 0.08 * tol_abs);
        let feat = LineFeatures {
            singular: vec![(0.0, alpha_out), (-z[1], alpha_out)],
            peaks: vec![],
            tail_beta: beta_out,
        };
        integrate_line(&outer, &feat, tol_abs)
    };
    // Rough pass fixes the magnitude, then two budgeted passes check
    // convergence at the requested relative tolerance.
    let rough = eval(f64::INFINITY).abs().max(1e-300);
    let coarse = eval(rough * tol_rel * 2.0);
    let fine = eval(rough * tol_rel * 0.5);
    let change = (fine - coarse).abs() / fine.abs().max(1e-300);
    if change > tol_rel.max(1e-13) {
        return Err(Error::QuadratureNotConverged {
            change,
            tol: tol_rel,
        });
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        // degree-15 polynomial integrated exactly
        let f = |t: f64| 3.0 * t.powi(15) + t.powi(8) - 2.0 * t.powi(3) + 1.0;
        let got: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * f(xi)).sum();
        let expect = 2.0 / 9.0 + 2.0; // odd powers cancel
        assert!((got - expect).abs() < 1e-13);
    }

    #[test]
    fn power_map_handles_inverse_sqrt() {
        // int_0^1 t^{-1/2} dt = 2
        let v = power_mapped_left(&|t: f64| t.powf(-0.5), 0.0, 1.0, 0.5, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn tail_map_handles_power_decay() {
        // int_1^inf t^{-1.87} dt = 1/0.87
        let v = tail_mapped(&|t: f64| t.abs().powf(-1.87), 1.0, 1.87, 1.0, 1e-12);
        assert!((v - 1.0 / 0.87).abs() < 1e-9);
    }

    #[test]
    fn line_integral_of_lorentzian() {
        // int dt / (1 + t^2) = pi, peak width 1 at 0, tail beta 2
        let f = |t: f64| 1.0 / (1.0 + t * t);
        let feat = LineFeatures {
            singular: vec![],
            peaks: vec![(0.0, 1.0)],
            tail_beta: 2.0,
        };
        let v = integrate_line(&f, &feat, 1e-10);
        assert!((v - std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn conv2d_is_generalized_homogeneous() {
        let (q1, q2) = (1.2, 1.6);
        let q = 1.0 / q1 + 1.0 / q2;
        let (qt1, qt2) = (q1 * (2.0 - q), q2 * (2.0 - q));
        let a = move |u: [f64; 2]| 1.0 / (u[0].abs().powf(q1) + u[1].abs().powf(q2));
        let base = conv2d(&a, &a, [1.0, 1.0], q1, q2, 1e-5).unwrap();
        for lam in [2.0, 10.0, 100.0] {
            let zs = [
                (lam as f64).powf(1.0 / qt1),
                (lam as f64).powf(1.0 / qt2),
            ];
            let v = lam * conv2d(&a, &a, [zs[0], zs[1]], q1, q2, 1e-5).unwrap();
            let dev = (v - base).abs() / base;
            assert!(dev < 1e-3, "lam={lam}: dev={dev}, v={v}, base={base}");
        }
    }
}
