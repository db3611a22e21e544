//! Radial/angular kernel evaluation and the polar representation.
//!
//! Everything here is built from the radial function
//! `rho(u) = |u1|^q1 + |u2|^q2`, an angular pair `L+/L-` on `[-1, 1]`, the
//! asymptotic kernel `a_inf(u) = L(u)/rho(u)` and the concrete
//! moving-average coefficients `b(t) = a_inf(B t)` (with `b(0)` set by
//! convention).

use crate::params::InnovationSpec;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Matching tolerance for the angular endpoint conditions
/// `L+(1) = L-(1)`, `L+(-1) = L-(-1)`.
pub const ENDPOINT_TOL: f64 = 1e-12;

/// Number of nodes used for tabulated angular functions.
pub const ANGULAR_GRID: usize = 1025;

/// One branch of an angular function: a continuous function on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AngularBranch {
    Constant { value: f64 },
    /// Polynomial in the angular variable, coefficients in ascending order.
    Poly { coeffs: Vec<f64> },
    /// Piecewise-linear on a uniform grid over `[-1, 1]`.
    Table { values: Vec<f64> },
}

impl AngularBranch {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            AngularBranch::Constant { value } => *value,
            AngularBranch::Poly { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
            }
            AngularBranch::Table { values } => {
                let n = values.len();
                if n == 1 {
                    return values[0];
                }
                let pos = (z.clamp(-1.0, 1.0) + 1.0) / 2.0 * (n - 1) as f64;
                let i = (pos.floor() as usize).min(n - 2);
                let frac = pos - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }
}

/// Angular part of the kernel: branches for `u2 >= 0` and `u2 < 0`, with
/// matched values at the endpoints `z = +/-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngularSpec {
    pub plus: AngularBranch,
    pub minus: AngularBranch,
}

impl Default for AngularSpec {
    fn default() -> Self {
        AngularSpec::constant(1.0)
    }
}

impl AngularSpec {
    pub fn constant(value: f64) -> Self {
        AngularSpec {
            plus: AngularBranch::Constant { value },
            minus: AngularBranch::Constant { value },
        }
    }

    /// Same polynomial on both branches.
    pub fn poly(coeffs: Vec<f64>) -> Self {
        AngularSpec {
            plus: AngularBranch::Poly {
                coeffs: coeffs.clone(),
            },
            minus: AngularBranch::Poly { coeffs },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for branch in [&self.plus, &self.minus] {
            if let AngularBranch::Table { values } = branch {
                if values.is_empty() {
                    return Err(Error::InvalidParameter(
                        "angular table must be nonempty".into(),
                    ));
                }
            }
            for z in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                if !branch.eval(z).is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "angular function not finite at z = {z}"
                    )));
                }
            }
        }
        for z in [1.0, -1.0] {
            let d = (self.plus.eval(z) - self.minus.eval(z)).abs();
            if d > ENDPOINT_TOL {
                return Err(Error::InvalidParameter(format!(
                    "angular endpoint mismatch at z = {z}: |L+ - L-| = {d}"
                )));
            }
        }
        Ok(())
    }

    /// Evaluate the branch selected by the sign of `u2`.
    #[inline]
    pub fn eval(&self, z: f64, u2_nonneg: bool) -> f64 {
        if u2_nonneg {
            self.plus.eval(z)
        } else {
            self.minus.eval(z)
        }
    }

    /// Upper bound on `|L|` over the grid, used in coefficient bounds.
    pub fn sup_abs(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for i in 0..ANGULAR_GRID {
            let z = -1.0 + 2.0 * i as f64 / (ANGULAR_GRID - 1) as f64;
            sup = sup.max(self.plus.eval(z).abs()).max(self.minus.eval(z).abs());
        }
        sup
    }
}

/// `rho(u) = |u1|^q1 + |u2|^q2`; zero exactly at the origin.
#[inline]
pub fn rho(u: [f64; 2], q1: f64, q2: f64) -> f64 {
    u[0].abs().powf(q1) + u[1].abs().powf(q2)
}

/// Angular value `L(u)` of Assumption B: the branch is picked by the sign
/// of `u2` and evaluated at `z = u1 / rho(u)^{1/q1} in [-1, 1]`.
pub fn angular_l(u: [f64; 2], spec: &AngularSpec, q1: f64, q2: f64) -> Result<f64> {
    if u == [0.0, 0.0] {
        return Err(Error::SingularOrigin);
    }
    let r = rho(u, q1, q2);
    let z = u[0] / r.powf(1.0 / q1);
    Ok(spec.eval(z.clamp(-1.0, 1.0), u[1] >= 0.0))
}

/// Immutable hot-path view of the kernel parameters.
#[derive(Debug, Clone)]
pub struct KernelContext {
    pub q1: f64,
    pub q2: f64,
    pub b: [[f64; 2]; 2],
    pub angular: Arc<AngularSpec>,
    pub b0: f64,
    pub m: usize,
    pub innovation: InnovationSpec,
    /// True when both angular branches are the same constant; enables the
    /// fast coefficient path.
    const_angular: Option<f64>,
}

impl KernelContext {
    pub fn new(params: &crate::params::ModelParams) -> Result<Self> {
        params.validate()?;
        let mut ctx = Self::from_parts(
            params.q1,
            params.q2,
            params.b,
            params.angular.clone(),
            params.b0,
            params.m,
        );
        ctx.innovation = params.innovation;
        Ok(ctx)
    }

    pub fn from_parts(
        q1: f64,
        q2: f64,
        b: [[f64; 2]; 2],
        angular: AngularSpec,
        b0: f64,
        m: usize,
    ) -> Self {
        let const_angular = match (&angular.plus, &angular.minus) {
            (AngularBranch::Constant { value: a }, AngularBranch::Constant { value: c_ })
                if a == c_ =>
            {
                Some(*a)
            }
            _ => None,
        };
        KernelContext {
            q1,
            q2,
            b,
            angular: Arc::new(angular),
            b0,
            m,
            innovation: InnovationSpec::Gaussian,
            const_angular,
        }
    }

    pub fn det_b(&self) -> f64 {
        self.b[0][0] * self.b[1][1] - self.b[0][1] * self.b[1][0]
    }

    #[inline]
    pub fn apply_b(&self, t: [f64; 2]) -> [f64; 2] {
        [
            self.b[0][0] * t[0] + self.b[0][1] * t[1],
            self.b[1][0] * t[0] + self.b[1][1] * t[1],
        ]
    }

    /// `a_inf(u) = L(u) / rho(u)` for `u != 0`.
    pub fn a_inf(&self, u: [f64; 2]) -> Result<f64> {
        if u == [0.0, 0.0] {
            return Err(Error::SingularOrigin);
        }
        Ok(self.a_inf_unchecked(u))
    }

    /// Like [`KernelContext::a_inf`] but returns `+inf`-free garbage at the
    /// origin; callers guarantee `u != 0`.
    #[inline]
    pub fn a_inf_unchecked(&self, u: [f64; 2]) -> f64 {
        let r = rho(u, self.q1, self.q2);
        match self.const_angular {
            Some(c) => c / r,
            None => {
                let z = (u[0] / r.powf(1.0 / self.q1)).clamp(-1.0, 1.0);
                self.angular.eval(z, u[1] >= 0.0) / r
            }
        }
    }

    /// Moving-average coefficient `b(t) = a_inf(B t)` for `t != 0`, `b0`
    /// at the origin. The `o(1)` term of Assumption B is taken to be zero.
    #[inline]
    pub fn coeff_b(&self, t: [i64; 2]) -> f64 {
        if t == [0, 0] {
            return self.b0;
        }
        self.a_inf_unchecked(self.apply_b([t[0] as f64, t[1] as f64]))
    }

    /// Row evaluator: fills `out[j] = b((d1, e0 + j))`, skipping nothing.
    /// Affine-in-`e` arguments keep this branch-light.
    pub fn coeff_row(&self, d1: i64, e0: i64, out: &mut [f64]) {
        let d1f = d1 as f64;
        let a1 = self.b[0][0] * d1f;
        let a2 = self.b[1][0] * d1f;
        let (b1, b2) = (self.b[0][1], self.b[1][1]);
        match self.const_angular {
            Some(c) => {
                for (j, slot) in out.iter_mut().enumerate() {
                    let e = (e0 + j as i64) as f64;
                    let w1 = a1 + b1 * e;
                    let w2 = a2 + b2 * e;
                    let r = w1.abs().powf(self.q1) + w2.abs().powf(self.q2);
                    *slot = c / r;
                }
            }
            None => {
                for (j, slot) in out.iter_mut().enumerate() {
                    let e = e0 + j as i64;
                    *slot = if d1 == 0 && e == 0 {
                        self.b0
                    } else {
                        self.a_inf_unchecked(self.apply_b([d1f, e as f64]))
                    };
                }
            }
        }
        // Patch the origin for the fast path.
        if self.const_angular.is_some() && d1 == 0 && e0 <= 0 && -e0 < out.len() as i64 {
            out[(-e0) as usize] = self.b0;
        }
    }
}


/// Integer-lattice power tables: when `B` has rational entries with a small
/// common denominator and the angular part is a constant, kernel rows reduce
/// to `c / (T1[|j1|] + T2[|j2|])` with `j = denom * B u` exact integers.
/// Several times faster than `powf` per point on the hot summation paths.
pub struct LatticeTables {
    t1: Vec<f64>,
    t2: Vec<f64>,
    d: [[i64; 2]; 2],
    c: f64,
    b0: f64,
}

impl LatticeTables {
    /// Largest table size (entries per coordinate) before falling back.
    const MAX_ENTRIES: usize = 1 << 27;

    /// Fill `out[j] = b((d1, e0 + j))`; bounds must respect the extents
    /// the tables were built for.
    #[inline]
    pub fn row(&self, d1: i64, e0: i64, out: &mut [f64]) {
        let mut j1 = self.d[0][0] * d1 + self.d[0][1] * e0;
        let mut j2 = self.d[1][0] * d1 + self.d[1][1] * e0;
        let (s1, s2) = (self.d[0][1], self.d[1][1]);
        for slot in out.iter_mut() {
            let r = self.t1[j1.unsigned_abs() as usize] + self.t2[j2.unsigned_abs() as usize];
            *slot = self.c / r;
            j1 += s1;
            j2 += s2;
        }
        if d1 == 0 && e0 <= 0 && -e0 < out.len() as i64 {
            out[(-e0) as usize] = self.b0;
        }
    }
}

impl KernelContext {
    /// Build lattice tables covering `|u1| <= u1max`, `|u2| <= u2max`
    /// (including row shifts), or `None` when the kernel does not qualify.
    pub fn lattice_tables(&self, u1max: i64, u2max: i64) -> Option<LatticeTables> {
        let c = self.const_angular?;
        let mut denom = 0i64;
        'outer: for den in 1..=16i64 {
            for row in &self.b {
                for &v in row {
                    let scaled = v * den as f64;
                    if (scaled - scaled.round()).abs() > 1e-12 {
                        continue 'outer;
                    }
                }
            }
            denom = den;
            break;
        }
        if denom == 0 {
            return None;
        }
        let d = [
            [
                (self.b[0][0] * denom as f64).round() as i64,
                (self.b[0][1] * denom as f64).round() as i64,
            ],
            [
                (self.b[1][0] * denom as f64).round() as i64,
                (self.b[1][1] * denom as f64).round() as i64,
            ],
        ];
        let need1 = (d[0][0].abs() * u1max + d[0][1].abs() * u2max) as usize + 2;
        let need2 = (d[1][0].abs() * u1max + d[1][1].abs() * u2max) as usize + 2;
        if need1.max(need2) > LatticeTables::MAX_ENTRIES {
            return None;
        }
        let inv = 1.0 / denom as f64;
        let t1 = (0..need1)
            .map(|i| (i as f64 * inv).powf(self.q1))
            .collect();
        let t2 = (0..need2)
            .map(|i| (i as f64 * inv).powf(self.q2))
            .collect();
        Some(LatticeTables {
            t1,
            t2,
            d,
            c,
            b0: self.b0,
        })
    }
}

/// Tabulate the angular pair of a generalized homogeneous function `h` from
/// samples on the curve `rho = 1`:
/// `L+/-(z) = h(z, +/-(1 - |z|^q1)^{1/q2})`.
///
/// Homogeneity (`lambda h(lambda^{1/q1} t1, lambda^{1/q2} t2) = h(t)`) is
/// checked on random rays first; failures are rejected since such an `h`
/// has no polar representation.
pub fn polar_decompose<F>(h: F, q1: f64, q2: f64, grid: usize) -> Result<AngularSpec>
where
    F: Fn([f64; 2]) -> f64,
{
    let grid = grid.max(3);
    let tol = 1e-8;
    let mut max_dev: f64 = 0.0;
    // Deterministic test rays; scales spread over several decades.
    let test_z: [f64; 5] = [-0.93, -0.41, 0.07, 0.55, 0.99];
    let scales: [f64; 5] = [1e-3, 0.04, 1.0, 27.0, 1e3];
    for (i, &z) in test_z.iter().enumerate() {
        for &sgn in &[1.0, -1.0] {
            let w2 = sgn * (1.0 - z.abs().powf(q1)).powf(1.0 / q2);
            let base = h([z, w2]);
            if !base.is_finite() {
                continue;
            }
            for (j, &lam) in scales.iter().enumerate() {
                if i == 2 && j == 2 {
                    continue;
                }
                let scaled = lam * h([lam.powf(1.0 / q1) * z, lam.powf(1.0 / q2) * w2]);
                let dev = (scaled - base).abs() / base.abs().max(1e-300);
                max_dev = max_dev.max(dev);
            }
        }
    }
    if max_dev > tol {
        return Err(Error::InconsistentHomogeneity { max_dev, tol });
    }
    let sample = |z: f64, sgn: f64| -> f64 {
        let w2 = sgn * (1.0 - z.abs().powf(q1)).powf(1.0 / q2);
        h([z, w2])
    };
    let zs: Vec<f64> = (0..grid)
        .map(|i| -1.0 + 2.0 * i as f64 / (grid - 1) as f64)
        .collect();
    let plus: Vec<f64> = zs.iter().map(|&z| sample(z, 1.0)).collect();
    let minus: Vec<f64> = zs.iter().map(|&z| sample(z, -1.0)).collect();
    let spec = AngularSpec {
        plus: AngularBranch::Table { values: plus },
        minus: AngularBranch::Table { values: minus },
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    fn ctx_identity(q1: f64, q2: f64) -> KernelContext {
        KernelContext::from_parts(q1, q2, [[1.0, 0.0], [0.0, 1.0]], AngularSpec::constant(1.0), 0.0, 64)
    }

    #[test]
    fn rho_values() {
        assert_eq!(rho([1.0, 0.0], 1.2, 1.6), 1.0);
        assert_eq!(rho([0.0, 0.0], 1.2, 1.6), 0.0);
        let v = rho([2.0, 3.0], 1.2, 1.6);
        let expect = 2f64.powf(1.2) + 3f64.powf(1.6);
        assert!((v - expect).abs() < 1e-12);
        // cross-check through logarithms
        let alt = (1.2 * 2f64.ln()).exp() + (1.6 * 3f64.ln()).exp();
        assert!((v - alt).abs() < 1e-12 * v);
    }

    #[test]
    fn angular_branch_selection() {
        let spec = AngularSpec {
            plus: AngularBranch::Constant { value: 2.0 },
            minus: AngularBranch::Table {
                values: (0..ANGULAR_GRID)
                    .map(|i| {
                        let z = -1.0 + 2.0 * i as f64 / (ANGULAR_GRID - 1) as f64;
                        if z.abs() == 1.0 {
                            2.0
                        } else {
                            3.0
                        }
                    })
                    .collect(),
            },
        };
        spec.validate().unwrap();
        // u2 < 0 picks the minus branch; z = 0 there.
        let v = angular_l([0.0, -1.0], &spec, 1.2, 1.6).unwrap();
        assert_eq!(v, 3.0);
        // u = (1, 0): z = 1, both branches agree.
        let v = angular_l([1.0, 0.0], &spec, 1.2, 1.6).unwrap();
        assert_eq!(v, 2.0);
        assert!(matches!(
            angular_l([0.0, 0.0], &spec, 1.2, 1.6),
            Err(Error::SingularOrigin)
        ));
    }

    #[test]
    fn a_inf_matches_rho_example() {
        let ctx = ctx_identity(1.2, 1.6);
        assert_eq!(ctx.a_inf([1.0, 0.0]).unwrap(), 1.0);
        let v = ctx.a_inf([2.0, 3.0]).unwrap();
        assert!((v - 1.0 / (2f64.powf(1.2) + 3f64.powf(1.6))).abs() < 1e-15);
    }

    #[test]
    fn a_inf_generalized_homogeneity() {
        let ctx = ctx_identity(1.2, 1.6);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let z = 2.0 * next() - 1.0;
            let sgn = if next() > 0.5 { 1.0 } else { -1.0 };
            let u = [z, sgn * (1.0 - z.abs().powf(1.2)).powf(1.0 / 1.6)];
            let base = ctx.a_inf(u).unwrap();
            let lam = 10f64.powf(6.0 * next() - 3.0);
            let v = lam
                * ctx
                    .a_inf([lam.powf(1.0 / 1.2) * u[0], lam.powf(1.0 / 1.6) * u[1]])
                    .unwrap();
            assert!((v - base).abs() <= 1e-12 * base.abs().max(1.0));
        }
    }

    #[test]
    fn coeff_b_origin_and_bound() {
        // B = I: the bound |b(t)| <= sup|L| max(rho(Bt),1)^{-1} holds with
        // the bare angular sup, since rho(t) >= 1 off the origin on Z^2.
        let ctx = ctx_identity(1.2, 1.6);
        assert_eq!(ctx.coeff_b([0, 0]), 0.0);
        let c = ctx.angular.sup_abs();
        for t1 in -50i64..=50 {
            for t2 in -50i64..=50 {
                if (t1, t2) == (0, 0) {
                    continue;
                }
                let b = ctx.coeff_b([t1, t2]);
                let r = rho([t1 as f64, t2 as f64], 1.2, 1.6);
                assert!(b.abs() <= c / r.max(1.0) + 1e-15);
            }
        }
        // Oblique B: nonzero lattice points may fall inside the unit rho
        // ball, so the constant absorbs the worst such point.
        let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
        let ctx = KernelContext::new(&p).unwrap();
        let mut cmax: f64 = ctx.angular.sup_abs();
        for t1 in -2i64..=2 {
            for t2 in -2i64..=2 {
                if (t1, t2) == (0, 0) {
                    continue;
                }
                let r = rho(ctx.apply_b([t1 as f64, t2 as f64]), 1.2, 1.6);
                cmax = cmax.max(ctx.angular.sup_abs() / r.min(1.0));
            }
        }
        for t1 in -50i64..=50 {
            for t2 in -50i64..=50 {
                if (t1, t2) == (0, 0) {
                    continue;
                }
                let b = ctx.coeff_b([t1, t2]);
                let r = rho(ctx.apply_b([t1 as f64, t2 as f64]), 1.2, 1.6);
                assert!(b.abs() <= cmax / r.max(1.0) + 1e-15);
            }
        }
    }

    #[test]
    fn coeff_row_matches_pointwise() {
        let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
        let ctx = KernelContext::new(&p).unwrap();
        let mut row = vec![0.0; 21];
        ctx.coeff_row(-3, -10, &mut row);
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v, ctx.coeff_b([-3, -10 + j as i64]));
        }
        ctx.coeff_row(0, -10, &mut row);
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v, ctx.coeff_b([0, -10 + j as i64]));
        }
    }

    #[test]
    fn polar_round_trip_constant() {
        let ctx = ctx_identity(1.2, 1.6);
        let spec = polar_decompose(|u| ctx.a_inf_unchecked(u), 1.2, 1.6, 257).unwrap();
        for i in 0..257 {
            let z = -1.0 + 2.0 * i as f64 / 256.0;
            assert!((spec.plus.eval(z) - 1.0).abs() < 1e-10);
            assert!((spec.minus.eval(z) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn polar_round_trip_poly() {
        let (q1, q2) = (1.2, 1.6);
        let h = |u: [f64; 2]| {
            let r = rho(u, q1, q2);
            let z = u[0] / r.powf(1.0 / q1);
            (2.0 + z) / r
        };
        let spec = polar_decompose(h, q1, q2, 257).unwrap();
        for i in 0..257 {
            let z = -1.0 + 2.0 * i as f64 / 256.0;
            assert!((spec.plus.eval(z) - (2.0 + z)).abs() < 1e-10);
        }
    }

    #[test]
    fn polar_rejects_inhomogeneous() {
        let (q1, q2) = (1.2, 1.6);
        let h = |u: [f64; 2]| (-rho(u, q1, q2)).exp();
        assert!(matches!(
            polar_decompose(h, q1, q2, 65),
            Err(Error::InconsistentHomogeneity { .. })
        ));
    }
}
