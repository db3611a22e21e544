//! Discrete autocovariance `r_X = b * b` and its continuous convolution
//! asymptotics.
//!
//! The lattice covariance of the linear field is the discrete convolution
//! of the coefficient sequence with itself. Asymptotically it follows
//! `r_X(k) ~ rho~(Bk)^{-1} L~(angular)` where `rho~` carries the reduced
//! exponents `q~i = qi (2 - Q)` and `L~` is the (numerically tabulated)
//! angular function of the continuous convolution `a_inf * a_inf`.

use crate::kernel::KernelContext;
use crate::quad::{conv2d, LineFeatures, PlaneKernel};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;

/// Relative tolerance for the convolution quadratures.
pub const CONV_TOL: f64 = 1e-4;

/// Fraction of the returned value above which a truncation tail estimate
/// turns into a hard error.
pub const TAIL_DOMINANCE: f64 = 0.1;

struct AInf<'a> {
    ctx: &'a KernelContext,
}

impl PlaneKernel for AInf<'_> {
    #[inline]
    fn eval(&self, u: [f64; 2]) -> f64 {
        self.ctx.a_inf_unchecked(u)
    }
}

/// Asymptotic convolution `[g1 * g2](t) ~ rho~(Bt)^{-1} L~(Bt)`:
/// reduced exponents, tabulated angular function and the `|det B|^{-1}`
/// factor folded into the table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticConv {
    pub q_tilde1: f64,
    pub q_tilde2: f64,
    pub det_factor: f64,
    /// Angular nodes, uniform over `[-1, 1]`.
    pub grid: Vec<f64>,
    /// `L~` on the upper branch (`u2 >= 0`), det factor included.
    pub table_plus: Vec<f64>,
    /// `L~` on the lower branch.
    pub table_minus: Vec<f64>,
}

impl AsymptoticConv {
    pub fn rho_tilde(&self, u: [f64; 2]) -> f64 {
        u[0].abs().powf(self.q_tilde1) + u[1].abs().powf(self.q_tilde2)
    }

    /// Interpolated angular value `L~` at `z in [-1, 1]`.
    pub fn angular(&self, z: f64, upper: bool) -> f64 {
        let tab = if upper { &self.table_plus } else { &self.table_minus };
        let n = tab.len();
        let pos = (z.clamp(-1.0, 1.0) + 1.0) / 2.0 * (n - 1) as f64;
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        tab[i] * (1.0 - frac) + tab[i + 1] * frac
    }

    /// Asymptotic value at `u != 0` (already in `Bt` coordinates):
    /// `rho~(u)^{-1} L~(u1 / rho~(u)^{1/q~1})`.
    pub fn eval(&self, u: [f64; 2]) -> f64 {
        let r = self.rho_tilde(u);
        let z = u[0] / r.powf(1.0 / self.q_tilde1);
        self.angular(z, u[1] >= 0.0) / r
    }
}

/// Tabulate the angular function of the continuous convolution
/// `(a1 * a2)` on the `rho~`-unit sphere, for kernels sharing `(q1, q2)`
/// with `1 < Q < 2`.
///
/// Each node is an independent singular quadrature; the generalized
/// invariance of the result is a property to be tested, not an input.
pub fn conv_asymptotic(
    ctx1: &KernelContext,
    ctx2: &KernelContext,
    grid_len: usize,
    tol: f64,
) -> Result<AsymptoticConv> {
    let (q1, q2) = (ctx1.q1, ctx1.q2);
    if (ctx2.q1 - q1).abs() > 1e-15 || (ctx2.q2 - q2).abs() > 1e-15 {
        return Err(Error::InvalidParameter(
            "convolved kernels must share (q1, q2)".into(),
        ));
    }
    let q = 1.0 / q1 + 1.0 / q2;
    if !(q > 1.0 && q < 2.0) {
        return Err(Error::OutOfRegion { q });
    }
    let (qt1, qt2) = (q1 * (2.0 - q), q2 * (2.0 - q));
    let det = ctx1.det_b().abs();
    let grid_len = grid_len.max(5);
    let grid: Vec<f64> = (0..grid_len)
        .map(|i| -1.0 + 2.0 * i as f64 / (grid_len - 1) as f64)
        .collect();
    let a1 = AInf { ctx: ctx1 };
    let a2 = AInf { ctx: ctx2 };
    let node = |z: f64, sgn: f64| -> Result<f64> {
        let w2 = sgn * (1.0 - z.abs().powf(qt1)).max(0.0).powf(1.0 / qt2);
        Ok(conv2d(&a1, &a2, [z, w2], q1, q2, tol)? / det)
    };
    let table_plus: Result<Vec<f64>> = grid.par_iter().map(|&z| node(z, 1.0)).collect();
    let table_minus: Result<Vec<f64>> = grid.par_iter().map(|&z| node(z, -1.0)).collect();
    Ok(AsymptoticConv {
        q_tilde1: qt1,
        q_tilde2: qt2,
        det_factor: 1.0 / det,
        grid,
        table_plus: table_plus?,
        table_minus: table_minus?,
    })
}

/// Deterministic evaluator of the lattice autocovariance
/// `r_X(k) = sum_u b(u) b(u+k)`, truncated to the window
/// `|u|_inf <= M, |u+k|_inf <= M`, with cached values and a numerically
/// estimated truncation tail per lag.
///
/// The symmetric (both-factor) window keeps `r_X(k) = r_X(-k)` exact and
/// makes the window table an honest Gram sequence (positive semidefinite).
pub struct CovarianceOracle {
    ctx: KernelContext,
    pub m: i64,
    cache: Mutex<HashMap<(i64, i64), (f64, f64)>>,
}

impl CovarianceOracle {
    pub fn new(ctx: KernelContext) -> Self {
        let m = ctx.m as i64;
        CovarianceOracle {
            ctx,
            m,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_truncation(ctx: KernelContext, m: usize) -> Self {
        CovarianceOracle {
            ctx,
            m: m as i64,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn context(&self) -> &KernelContext {
        &self.ctx
    }

    /// `r_X(k)`, erroring when the truncation tail estimate exceeds
    /// [`TAIL_DOMINANCE`] of the value.
    pub fn r_x(&self, k: [i64; 2]) -> Result<f64> {
        let (v, tail) = self.r_x_with_tail(k);
        if tail > TAIL_DOMINANCE * v.abs() {
            return Err(Error::TruncationDominates { tail, value: v });
        }
        Ok(v)
    }

    /// Raw truncated value and tail estimate, no dominance gate.
    pub fn r_x_with_tail(&self, k: [i64; 2]) -> (f64, f64) {
        if let Some(&hit) = self.cache.lock().unwrap().get(&(k[0], k[1])) {
            return hit;
        }
        let computed = self.compute(k);
        self.cache.lock().unwrap().insert((k[0], k[1]), computed);
        computed
    }

    fn compute(&self, k: [i64; 2]) -> (f64, f64) {
        let m = self.m;
        let lo1 = (-m).max(-m - k[0]);
        let hi1 = m.min(m - k[0]);
        let lo2 = (-m).max(-m - k[1]);
        let hi2 = m.min(m - k[1]);
        if lo1 > hi1 || lo2 > hi2 {
            return (0.0, self.tail_estimate(k));
        }
        let cols = (hi2 - lo2 + 1) as usize;
        let tables = self
            .ctx
            .lattice_tables(m + k[0].abs(), m + k[1].abs());
        let rows: Vec<i64> = (lo1..=hi1).collect();
        let sum = rows
            .par_iter()
            .fold(
                || (vec![0.0; cols], vec![0.0; cols], 0.0f64),
                |(mut ra, mut rb, acc), &u1| {
                    match &tables {
                        Some(t) => {
                            t.row(u1, lo2, &mut ra);
                            t.row(u1 + k[0], lo2 + k[1], &mut rb);
                        }
                        None => {
                            self.ctx.coeff_row(u1, lo2, &mut ra);
                            self.ctx.coeff_row(u1 + k[0], lo2 + k[1], &mut rb);
                        }
                    }
                    let dot: f64 = ra.iter().zip(rb.iter()).map(|(a, b)| a * b).sum();
                    (ra, rb, acc + dot)
                },
            )
            .map(|(_, _, acc)| acc)
            .sum::<f64>();
        (sum, self.tail_estimate(k))
    }

    /// Coarse numerical bound on the neglected mass
    /// `sum_{|u| > M} |b(u) b(u+k)|`: geometric rings of cells outside the
    /// window, midpoint values times cell area, continued until the ring
    /// contributions die out.
    fn tail_estimate(&self, k: [i64; 2]) -> f64 {
        let sup_l = self.ctx.angular.sup_abs();
        let m = self.m as f64;
        let mut total = 0.0;
        let mut r = m;
        for _ in 0..40 {
            let r_next = r * 2.0;
            // 24 x 24 midpoint cells over the ring [-r_next, r_next]^2 \ [-r, r]^2
            let n = 24;
            let h = 2.0 * r_next / n as f64;
            let mut ring = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let u = [
                        -r_next + (i as f64 + 0.5) * h,
                        -r_next + (j as f64 + 0.5) * h,
                    ];
                    if u[0].abs() <= r && u[1].abs() <= r {
                        continue;
                    }
                    let w1 = self.ctx.apply_b(u);
                    let w2 = self
                        .ctx
                        .apply_b([u[0] + k[0] as f64, u[1] + k[1] as f64]);
                    let d = crate::kernel::rho(w1, self.ctx.q1, self.ctx.q2)
                        * crate::kernel::rho(w2, self.ctx.q1, self.ctx.q2);
                    ring += h * h / d;
                }
            }
            ring *= sup_l * sup_l;
            total += ring;
            r = r_next;
            if ring < 1e-4 * total {
                break;
            }
        }
        total
    }

    /// Full `r_X` table over lags `|k1| <= k1max, |k2| <= k2max` via
    /// zero-padded fast convolution of the truncated coefficient window
    /// with itself. Returns a row-major `(2 k1max + 1) x (2 k2max + 1)`
    /// table indexed by `(k1 + k1max, k2 + k2max)`.
    pub fn window_table(&self, k1max: usize, k2max: usize) -> Result<Vec<f64>> {
        let side = (2 * self.m + 1) as usize;
        let pad1 = crate::fft2::good_size(2 * side - 1);
        let pad2 = pad1;
        let bytes = pad1 * pad2 * 16 * 2;
        let ceiling = 2usize << 30;
        if bytes > ceiling {
            return Err(Error::AllocationTooLarge { bytes, ceiling });
        }
        let mut coeffs = vec![0.0; side * side];
        let tables = self.ctx.lattice_tables(self.m, self.m);
        for (i, u1) in (-self.m..=self.m).enumerate() {
            let row = &mut coeffs[i * side..(i + 1) * side];
            match &tables {
                Some(t) => t.row(u1, -self.m, row),
                None => self.ctx.coeff_row(u1, -self.m, row),
            }
        }
        // Correlation = convolution with the index-reversed window.
        let rev: Vec<f64> = coeffs.iter().rev().copied().collect();
        let (full, rr, cc) = crate::fft2::convolve2(&coeffs, side, side, &rev, side, side);
        debug_assert_eq!((rr, cc), (2 * side - 1, 2 * side - 1));
        // Lag k sits at index k + 2M in the full correlation.
        let c0 = (side - 1) as i64;
        let (t1, t2) = (2 * k1max + 1, 2 * k2max + 1);
        let mut out = vec![0.0; t1 * t2];
        for (i, row) in out.chunks_exact_mut(t2).enumerate() {
            let k1 = i as i64 - k1max as i64;
            for (j, slot) in row.iter_mut().enumerate() {
                let k2 = j as i64 - k2max as i64;
                let (a, b) = ((k1 + c0) as usize, (k2 + c0) as usize);
                *slot = if a < rr && b < cc { full[a * cc + b] } else { 0.0 };
            }
        }
        Ok(out)
    }
}

/// Effectively untruncated `r_X(k)`: exact lattice summation over core
/// boxes around the two singular points, plus the continuum convolution
/// integral over the complement (computed in `w = Bu` coordinates where
/// the kernel is coordinate-structured). Returns `(value, error_estimate)`.
pub fn r_x_untruncated(ctx: &KernelContext, k: [i64; 2], tol: f64) -> Result<(f64, f64)> {
    let core = 768i64;
    let a = AInf { ctx };
    let bk = ctx.apply_b([k[0] as f64, k[1] as f64]);
    let det = ctx.det_b().abs();
    let full = conv2d(&a, &a, bk, ctx.q1, ctx.q2, tol)? / det;

    let boxes: Vec<[i64; 4]> = if k[0].abs() <= 2 * core && k[1].abs() <= 2 * core {
        vec![[
            0.min(-k[0]) - core,
            0.max(-k[0]) + core,
            0.min(-k[1]) - core,
            0.max(-k[1]) + core,
        ]]
    } else {
        vec![
            [-core, core, -core, core],
            [-k[0] - core, -k[0] + core, -k[1] - core, -k[1] + core],
        ]
    };

    let mut value = full;
    let mut err = tol * full.abs();
    for b in &boxes {
        value += lattice_box_sum(ctx, k, *b);
        let cont = continuum_box_integral(ctx, k, *b, tol)?;
        value -= cont;
        err += tol * cont.abs();
    }
    // Lattice-vs-continuum discrepancy outside the cores decays with the
    // integrand's second derivative; folded into the estimate.
    err += 1e-3 * value.abs() * (256.0 / core as f64);
    Ok((value, err))
}

fn lattice_box_sum(ctx: &KernelContext, k: [i64; 2], b: [i64; 4]) -> f64 {
    let [lo1, hi1, lo2, hi2] = b;
    let cols = (hi2 - lo2 + 1) as usize;
    let u1ext = lo1.abs().max(hi1.abs()) + k[0].abs();
    let u2ext = lo2.abs().max(hi2.abs()) + k[1].abs();
    let tables = ctx.lattice_tables(u1ext, u2ext);
    let rows: Vec<i64> = (lo1..=hi1).collect();
    rows.par_iter()
        .fold(
            || (vec![0.0; cols], vec![0.0; cols], 0.0f64),
            |(mut ra, mut rb, acc), &u1| {
                match &tables {
                    Some(t) => {
                        t.row(u1, lo2, &mut ra);
                        t.row(u1 + k[0], lo2 + k[1], &mut rb);
                    }
                    None => {
                        ctx.coeff_row(u1, lo2, &mut ra);
                        ctx.coeff_row(u1 + k[0], lo2 + k[1], &mut rb);
                    }
                }
                let dot: f64 = ra.iter().zip(rb.iter()).map(|(a, b)| a * b).sum();
                (ra, rb, acc + dot)
            },
        )
        .map(|(_, _, acc)| acc)
        .sum::<f64>()
}

/// Continuum integral of `b(u) b(u+k)` over a lattice-aligned box
/// (half-cell-extended), computed in `w = Bu` coordinates where the
/// integrand is `a_inf(w) a_inf(w + Bk) / |det B|` over a parallelogram.
fn continuum_box_integral(
    ctx: &KernelContext,
    k: [i64; 2],
    b: [i64; 4],
    tol: f64,
) -> Result<f64> {
    let [lo1, hi1, lo2, hi2] = b;
    let rect = [
        [lo1 as f64 - 0.5, hi1 as f64 + 0.5],
        [lo2 as f64 - 0.5, hi2 as f64 + 0.5],
    ];
    let corners = [
        [rect[0][0], rect[1][0]],
        [rect[0][0], rect[1][1]],
        [rect[0][1], rect[1][1]],
        [rect[0][1], rect[1][0]],
    ];
    let verts: Vec<[f64; 2]> = corners.iter().map(|&c| ctx.apply_b(c)).collect();
    let bk = ctx.apply_b([k[0] as f64, k[1] as f64]);
    let det = ctx.det_b().abs();
    let (q1, q2) = (ctx.q1, ctx.q2);
    let a = AInf { ctx };

    // Horizontal slice of the parallelogram at w2 = y.
    let slice = |y: f64| -> Option<(f64, f64)> {
        let mut xs: Vec<f64> = Vec::with_capacity(4);
        for i in 0..4 {
            let (p, q) = (verts[i], verts[(i + 1) % 4]);
            let (y0, y1) = (p[1], q[1]);
            if (y1 - y0).abs() < 1e-300 {
                if (y0 - y).abs() < 1e-12 {
                    xs.push(p[0]);
                    xs.push(q[0]);
                }
            } else if (y0 <= y && y < y1) || (y1 <= y && y < y0) {
                let t = (y - y0) / (y1 - y0);
                xs.push(p[0] + t * (q[0] - p[0]));
            }
        }
        if xs.len() < 2 {
            return None;
        }
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    };

    let ymin = verts.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
    let ymax = verts
        .iter()
        .map(|v| v[1])
        .fold(f64::NEG_INFINITY, f64::max);
    let alpha_out = (q2 * (1.0 - 1.0 / q1)).max(0.0);

    let inner = |w2: f64, tol_abs: f64| -> f64 {
        let Some((xlo, xhi)) = slice(w2) else {
            return 0.0;
        };
        let wp1 = w2.abs().powf(q2 / q1);
        let wp2 = (w2 + bk[1]).abs().powf(q2 / q1);
        let f = |w1: f64| a.eval([w1, w2]) * a.eval([w1 + bk[0], w2 + bk[1]]);
        let feat = LineFeatures {
            singular: vec![],
            peaks: vec![(0.0, wp1.max(1e-12)), (-bk[0], wp2.max(1e-12))],
            tail_beta: 2.0 * q1,
        };
        crate::quad::integrate_interval(&f, xlo, xhi, &feat, tol_abs)
    };
    let eval = |tol_abs: f64| -> f64 {
        let outer = |w2: f64| inner(w2, 0.08 * tol_abs);
        let mut feat = LineFeatures {
            singular: vec![(0.0, alpha_out), (-bk[1], alpha_out)],
            peaks: vec![],
            tail_beta: q2 * (2.0 - 1.0 / q1),
        };
        // Parallelogram vertices kink the slice bounds.
        for v in &verts {
            feat.peaks.push((v[1], 1.0));
        }
        crate::quad::integrate_interval(&outer, ymin, ymax, &feat, tol_abs)
    };
    let rough = eval(f64::INFINITY).abs().max(1e-300);
    let coarse = eval(rough * tol * 2.0);
    let fine = eval(rough * tol * 0.5);
    let change = (fine - coarse).abs() / fine.abs().max(1e-300);
    if change > tol.max(1e-13) {
        return Err(Error::QuadratureNotConverged { change, tol });
    }
    Ok(fine / det)
}

/// One compared lag in [`lattice_conv_vs_asymptotic`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvComparisonRow {
    pub k: [i64; 2],
    pub rho_tilde: f64,
    pub r_x: f64,
    pub asymptotic: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvComparisonReport {
    pub rows: Vec<ConvComparisonRow>,
    /// Max |relative error| over rows with `rho_tilde >= threshold`.
    pub max_rel_error_far: f64,
    pub threshold: f64,
    /// Per-direction flags: |relative error| non-increasing along the
    /// ladder of increasing `rho_tilde`.
    pub monotone_by_direction: Vec<bool>,
}

/// Compare lattice covariance values against the asymptotic form along
/// direction ladders. `lags_by_direction[d]` must be sorted by increasing
/// `rho_tilde(Bk)`.
pub fn lattice_conv_vs_asymptotic<F>(
    r_x: F,
    ctx: &KernelContext,
    conv: &AsymptoticConv,
    lags_by_direction: &[Vec<[i64; 2]>],
    threshold: f64,
) -> Result<ConvComparisonReport>
where
    F: Fn([i64; 2]) -> Result<f64>,
{
    let mut rows = Vec::new();
    let mut monotone = Vec::new();
    let mut max_far: f64 = 0.0;
    for lags in lags_by_direction {
        let mut errs = Vec::new();
        for &k in lags {
            let bk = ctx.apply_b([k[0] as f64, k[1] as f64]);
            let rt = conv.rho_tilde(bk);
            let asym = conv.eval(bk);
            let v = r_x(k)?;
            let rel = v / asym - 1.0;
            errs.push(rel.abs());
            if rt >= threshold {
                max_far = max_far.max(rel.abs());
            }
            rows.push(ConvComparisonRow {
                k,
                rho_tilde: rt,
                r_x: v,
                asymptotic: asym,
                rel_error: rel,
            });
        }
        monotone.push(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
    Ok(ConvComparisonReport {
        rows,
        max_rel_error_far: max_far,
        threshold,
        monotone_by_direction: monotone,
    })
}

/// Write `(k1, k2, value, tail_bound)` rows as CSV with full precision.
pub fn export_rx_csv<W: std::io::Write>(
    mut w: W,
    oracle: &CovarianceOracle,
    lags: &[[i64; 2]],
) -> Result<()> {
    writeln!(w, "k1,k2,value,tail_bound")?;
    for &k in lags {
        let (v, tail) = oracle.r_x_with_tail(k);
        writeln!(w, "{},{},{:.17e},{:.17e}", k[0], k[1], v, tail)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    fn small_ctx() -> KernelContext {
        let mut p = ModelParams::new(1.2, 1.6, [[1.0, 0.0], [0.0, 1.0]]);
        p.m = 48;
        KernelContext::new(&p).unwrap()
    }

    #[test]
    fn rx_zero_lag_positive_and_symmetric() {
        let oracle = CovarianceOracle::new(small_ctx());
        let r0 = oracle.r_x_with_tail([0, 0]).0;
        assert!(r0 > 0.0);
        // r_X(k) = r_X(-k) exactly, and r_X(0) dominates.
        let mut state = 1234567u64;
        let mut nexti = move |range: i64| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) % (2 * range as u64 + 1)) as i64 - range
        };
        for _ in 0..100 {
            let k = [nexti(20), nexti(20)];
            let a = oracle.r_x_with_tail(k).0;
            let b = oracle.r_x_with_tail([-k[0], -k[1]]).0;
            assert_eq!(a, b);
            assert!(r0 >= a.abs());
        }
    }

    #[test]
    fn window_table_matches_direct() {
        let mut p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
        p.m = 24;
        let oracle = CovarianceOracle::new(KernelContext::new(&p).unwrap());
        let table = oracle.window_table(6, 9).unwrap();
        let mut state = 99u64;
        let mut nexti = move |range: i64| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) % (2 * range as u64 + 1)) as i64 - range
        };
        for _ in 0..10 {
            let k = [nexti(6), nexti(9)];
            let direct = oracle.r_x_with_tail(k).0;
            let fft = table[(k[0] + 6) as usize * 19 + (k[1] + 9) as usize];
            assert!(
                (fft - direct).abs() <= 1e-10 * direct.abs().max(1e-30),
                "lag {k:?}: fft {fft} vs direct {direct}"
            );
        }
    }

    #[test]
    fn psd_on_random_subsets() {
        let oracle = CovarianceOracle::new(small_ctx());
        // 20 scattered lattice points; covariance matrix must be PSD.
        let pts: Vec<[i64; 2]> = (0..20)
            .map(|i| {
                let a = (i * 7) % 13 - 6;
                let b = (i * 11) % 17 - 8;
                [a, b]
            })
            .collect();
        let n = pts.len();
        let mut mat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = [pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]];
                mat[i * n + j] = oracle.r_x_with_tail(k).0;
            }
        }
        let r0 = oracle.r_x_with_tail([0, 0]).0;
        let min_eig = crate::limits::sym_eig_min(&mat, n);
        assert!(min_eig >= -1e-8 * r0, "min eigenvalue {min_eig}");
    }

    #[test]
    fn lrd_partial_sums_grow() {
        // sum_{|k|<=n} |r_X(k)| keeps growing: long-range dependence.
        let mut p = ModelParams::new(1.2, 1.6, [[1.0, 0.0], [0.0, 1.0]]);
        p.m = 640;
        let oracle = CovarianceOracle::new(KernelContext::new(&p).unwrap());
        let table = oracle.window_table(512, 512).unwrap();
        let side = 1025usize;
        let absum = |n: i64| -> f64 {
            let mut acc = 0.0;
            for k1 in -n..=n {
                for k2 in -n..=n {
                    acc += table[(k1 + 512) as usize * side + (k2 + 512) as usize].abs();
                }
            }
            acc
        };
        let s256 = absum(256);
        let s512 = absum(512);
        assert!(
            s512 >= 1.01 * s256,
            "partial absolute sums s256={s256} s512={s512}"
        );
    }

    #[test]
    fn untruncated_matches_big_box_at_moderate_lag() {
        let ctx = small_ctx();
        let k = [40i64, 25];
        let (far, err) = r_x_untruncated(&ctx, k, 1e-4).unwrap();
        // Reference: a box oracle big enough that its own tail is tiny.
        let mut p = ModelParams::new(1.2, 1.6, [[1.0, 0.0], [0.0, 1.0]]);
        p.m = 6000;
        let oracle = CovarianceOracle::with_truncation(KernelContext::new(&p).unwrap(), 6000);
        let (reference, tail) = oracle.r_x_with_tail(k);
        let slack = 3.0 * (err + tail) + 2e-3 * reference.abs();
        assert!(
            (far - reference).abs() <= slack,
            "far {far} vs ref {reference} (err {err}, tail {tail})"
        );
    }
}
