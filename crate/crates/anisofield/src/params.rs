//! Model parameters, derived exponents and regime classification.
//!
//! The scaling theory attaches to every admissible pair `(q1, q2)` a family
//! of exponents (`Q`, `q~i`, `Q~i`, `H~i`, `Hi`), and to every model a
//! parameter region, a scaling type (congruous / incongruous), a critical
//! point `gamma0` and the piecewise-linear normalization exponent curve
//! `H(gamma)`.

use crate::kernel::AngularSpec;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default tolerance around excluded boundary parameter values.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Innovation law for the i.i.d. driving noise; always mean 0, variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InnovationSpec {
    #[default]
    Gaussian,
    Rademacher,
    CenteredUniform,
}

/// Full specification of a linear-field model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub q1: f64,
    pub q2: f64,
    /// Row-major entries `[[b11, b12], [b21, b22]]` of the nondegenerate
    /// matrix applied to lattice points inside the kernel.
    pub b: [[f64; 2]; 2],
    #[serde(default)]
    pub angular: AngularSpec,
    #[serde(default)]
    pub innovation: InnovationSpec,
    /// Value of the coefficient at the origin; the asymptotic form does not
    /// constrain it.
    #[serde(default)]
    pub b0: f64,
    /// Kernel truncation radius (sup-norm) used by synthesis and the
    /// covariance oracle.
    #[serde(default = "default_trunc")]
    pub m: usize,
    #[serde(default = "default_boundary_tol")]
    pub boundary_tol: f64,
}

fn default_trunc() -> usize {
    1 << 10
}

fn default_boundary_tol() -> f64 {
    BOUNDARY_TOL
}

impl ModelParams {
    pub fn new(q1: f64, q2: f64, b: [[f64; 2]; 2]) -> Self {
        ModelParams {
            q1,
            q2,
            b,
            angular: AngularSpec::default(),
            innovation: InnovationSpec::default(),
            b0: 0.0,
            m: default_trunc(),
            boundary_tol: BOUNDARY_TOL,
        }
    }

    pub fn det_b(&self) -> f64 {
        self.b[0][0] * self.b[1][1] - self.b[0][1] * self.b[1][0]
    }

    /// Check all invariants: `1 < Q < 2`, `det B != 0`, no boundary
    /// parameters, matched angular endpoints.
    pub fn validate(&self) -> Result<()> {
        if !(self.q1 > 0.0 && self.q2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "exponents must be positive, got ({}, {})",
                self.q1, self.q2
            )));
        }
        let exps = derive_exponents_with_tol(self.q1, self.q2, self.boundary_tol)?;
        let ratio = self.q1 / self.q2;
        if ratio != 1.0 && (ratio - 1.0).abs() <= self.boundary_tol {
            return Err(Error::BoundaryParameter {
                what: "q1/q2",
                value: ratio,
                tol: self.boundary_tol,
            });
        }
        // Excluded in the equal-exponent regime: q = 3/2 splits the two cases.
        if self.q1 == self.q2 && (self.q1 - 1.5).abs() <= self.boundary_tol {
            return Err(Error::BoundaryParameter {
                what: "q (= q1 = q2)",
                value: self.q1,
                tol: self.boundary_tol,
            });
        }
        let det = self.det_b();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "matrix B must be nondegenerate, det = {det}"
            )));
        }
        self.angular.validate()?;
        let _ = exps;
        Ok(())
    }
}

/// All exponents derived from `(q1, q2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentSet {
    pub q1: f64,
    pub q2: f64,
    /// `Q = 1/q1 + 1/q2`
    pub q_sum: f64,
    /// `q~i = qi (2 - Q)`
    pub q_tilde1: f64,
    pub q_tilde2: f64,
    /// `Q~i = Q - 1/(2 qi)`
    pub q_cap_tilde1: f64,
    pub q_cap_tilde2: f64,
    /// `H~i = 1 - (qi/2)(2 - Q)`
    pub h_tilde1: f64,
    pub h_tilde2: f64,
    /// `Hi = 1/2 + qi (Q - 1)`
    pub h1: f64,
    pub h2: f64,
}

/// Compute the derived exponents, rejecting `Q` outside `(1,2)` and
/// `Q~i` within [`BOUNDARY_TOL`] of 1.
pub fn derive_exponents(q1: f64, q2: f64) -> Result<ExponentSet> {
    derive_exponents_with_tol(q1, q2, BOUNDARY_TOL)
}

pub fn derive_exponents_with_tol(q1: f64, q2: f64, tol: f64) -> Result<ExponentSet> {
    if !(q1 > 0.0 && q2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exponents must be positive, got ({q1}, {q2})"
        )));
    }
    let q = 1.0 / q1 + 1.0 / q2;
    if q <= 1.0 + tol || q >= 2.0 - tol {
        return Err(Error::OutOfRegion { q });
    }
    let exps = ExponentSet {
        q1,
        q2,
        q_sum: q,
        q_tilde1: q1 * (2.0 - q),
        q_tilde2: q2 * (2.0 - q),
        q_cap_tilde1: q - 1.0 / (2.0 * q1),
        q_cap_tilde2: q - 1.0 / (2.0 * q2),
        h_tilde1: 1.0 - (q1 / 2.0) * (2.0 - q),
        h_tilde2: 1.0 - (q2 / 2.0) * (2.0 - q),
        h1: 0.5 + q1 * (q - 1.0),
        h2: 0.5 + q2 * (q - 1.0),
    };
    for (what, v) in [
        ("Q~1", exps.q_cap_tilde1),
        ("Q~2", exps.q_cap_tilde2),
    ] {
        if (v - 1.0).abs() <= tol {
            return Err(Error::BoundaryParameter {
                what,
                value: v,
                tol,
            });
        }
    }
    Ok(exps)
}

/// Parameter region by the sign pattern of `Q~1, Q~2` (user coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `Q~1 ^ Q~2 > 1`
    BothGt,
    /// `Q~1 < 1 < Q~2`
    Mixed12,
    /// `Q~2 < 1 < Q~1`
    Mixed21,
    /// `Q~1 v Q~2 < 1`
    BothLt,
    /// `q1 = q2 in (1, 3/2)`
    EqSmall,
    /// `q1 = q2 in (3/2, 2)`
    EqLarge,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Region::BothGt => "R_BOTH_GT",
            Region::Mixed12 => "R_MIXED_12",
            Region::Mixed21 => "R_MIXED_21",
            Region::BothLt => "R_BOTH_LT",
            Region::EqSmall => "EQ_SMALL",
            Region::EqLarge => "EQ_LARGE",
        };
        f.write_str(s)
    }
}

/// Names of the limit random fields appearing in the theorems.
///
/// `TildeIJ` families integrate the kernel over the rectangle
/// (`int_(0,x] a_inf(D~ t - u) dt`); `PlainIJ` families integrate an
/// indicator against the kernel (`int a_inf(t) 1(D t + u in (0,x]) dt`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyLabel {
    Tilde00,
    Tilde01,
    Tilde02,
    Tilde11,
    Tilde20,
    Tilde21,
    Tilde22,
    Tilde0,
    Plain0,
    Plain01,
    Plain10,
    Plain20,
    Plain11,
    Plain21,
    Plain22,
}

impl std::str::FromStr for FamilyLabel {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        use FamilyLabel::*;
        Ok(match s {
            "V~00" => Tilde00,
            "V~01" => Tilde01,
            "V~02" => Tilde02,
            "V~11" => Tilde11,
            "V~20" => Tilde20,
            "V~21" => Tilde21,
            "V~22" => Tilde22,
            "V~0" => Tilde0,
            "V0" => Plain0,
            "V01" => Plain01,
            "V10" => Plain10,
            "V20" => Plain20,
            "V11" => Plain11,
            "V21" => Plain21,
            "V22" => Plain22,
            other => {
                return Err(crate::Error::Config(format!(
                    "unknown limit family label '{other}'"
                )))
            }
        })
    }
}

impl std::fmt::Display for FamilyLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FamilyLabel::Tilde00 => "V~00",
            FamilyLabel::Tilde01 => "V~01",
            FamilyLabel::Tilde02 => "V~02",
            FamilyLabel::Tilde11 => "V~11",
            FamilyLabel::Tilde20 => "V~20",
            FamilyLabel::Tilde21 => "V~21",
            FamilyLabel::Tilde22 => "V~22",
            FamilyLabel::Tilde0 => "V~0",
            FamilyLabel::Plain0 => "V0",
            FamilyLabel::Plain01 => "V01",
            FamilyLabel::Plain10 => "V10",
            FamilyLabel::Plain20 => "V20",
            FamilyLabel::Plain11 => "V11",
            FamilyLabel::Plain21 => "V21",
            FamilyLabel::Plain22 => "V22",
        };
        f.write_str(s)
    }
}

/// One limit label together with its fractional-Brownian-sheet Hurst pair
/// when the family is an FBS (unbalanced limits only), in user coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitLabel {
    pub family: FamilyLabel,
    pub hurst: Option<(f64, f64)>,
}

/// Scaling classification of a model in user coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub region: Region,
    pub congruous: bool,
    pub gamma0: f64,
    pub limit_plus: LimitLabel,
    pub limit_minus: LimitLabel,
    pub limit_crit: LimitLabel,
    /// True when the exponent labels were swapped internally (`q1 > q2`).
    pub exponent_swapped: bool,
    /// True when the scan axes were swapped internally (congruous via
    /// `b22 = 0`); reported `gamma0` and Hurst pairs are already mapped
    /// back to user coordinates.
    pub coordinate_swapped: bool,
    pub exponents: ExponentSet,
}

/// Canonical (internal) view: exponent indices sorted so `q1 <= q2`,
/// coordinates swapped so a congruous model has `b21 = 0`.
#[derive(Debug, Clone, Copy)]
struct Canonical {
    exps: ExponentSet,
    region: Region,
    congruous: bool,
    gamma0: f64,
}

fn canonical_region(exps: &ExponentSet, equal: bool) -> Result<Region> {
    if equal {
        // q in (1, 2) is forced by 1 < Q = 2/q < 2; q = 3/2 is rejected
        // upstream as a boundary value.
        return Ok(if exps.q1 < 1.5 {
            Region::EqSmall
        } else {
            Region::EqLarge
        });
    }
    Ok(if exps.q_cap_tilde1 > 1.0 {
        Region::BothGt
    } else if exps.q_cap_tilde2 > 1.0 {
        Region::Mixed12
    } else {
        Region::BothLt
    })
}

/// Classify a model: region, scaling type, critical point and the three
/// limit labels of the theorems.
///
/// Inputs with `q1 > q2` are canonicalized internally by relabeling the
/// exponent indices (rows of `B` swap along with the `q`s); a congruous
/// model given through `b22 = 0` is mapped to the `b21 = 0` form by a
/// coordinate swap, which inverts `gamma0` and transposes Hurst pairs in
/// the reported (user-coordinate) classification.
pub fn classify_regime(params: &ModelParams) -> Result<RegimeClassification> {
    params.validate()?;
    let user_exps = derive_exponents_with_tol(params.q1, params.q2, params.boundary_tol)?;

    let exponent_swapped = params.q1 > params.q2;
    // Row of B carrying the larger exponent, in canonical labeling.
    let row2 = if exponent_swapped {
        params.b[0]
    } else {
        params.b[1]
    };
    let canon_exps = if exponent_swapped {
        derive_exponents_with_tol(params.q2, params.q1, params.boundary_tol)?
    } else {
        user_exps
    };
    let equal = params.q1 == params.q2;

    // Dependence axis {b2 . t = 0} (canonical labels). Congruous iff the
    // axis is a coordinate axis.
    let congruous = row2[0] == 0.0 || row2[1] == 0.0;
    // b22 = 0 form: swap scan coordinates so that b21 = 0 holds.
    let coordinate_swapped = !equal && congruous && row2[1] == 0.0;

    let canon = {
        let region = canonical_region(&canon_exps, equal)?;
        let gamma0 = if equal || !congruous {
            1.0
        } else {
            canon_exps.q1 / canon_exps.q2
        };
        Canonical {
            exps: canon_exps,
            region,
            congruous,
            gamma0,
        }
    };

    let (plus_c, minus_c, crit_c) = canonical_limits(&canon);

    // Map back to user coordinates: a coordinate swap exchanges the roles
    // of gamma > gamma0 and gamma < gamma0 and transposes Hurst pairs.
    let (limit_plus, limit_minus) = if coordinate_swapped {
        (transpose_label(minus_c), transpose_label(plus_c))
    } else {
        (plus_c, minus_c)
    };
    let limit_crit = if coordinate_swapped {
        transpose_label(crit_c)
    } else {
        crit_c
    };
    let gamma0 = if coordinate_swapped {
        1.0 / canon.gamma0
    } else {
        canon.gamma0
    };

    let region = match (canon.region, exponent_swapped) {
        (Region::Mixed12, true) => Region::Mixed21,
        (r, _) => r,
    };

    Ok(RegimeClassification {
        region,
        congruous,
        gamma0,
        limit_plus,
        limit_minus,
        limit_crit,
        exponent_swapped,
        coordinate_swapped,
        exponents: user_exps,
    })
}

fn transpose_label(l: LimitLabel) -> LimitLabel {
    LimitLabel {
        family: l.family,
        hurst: l.hurst.map(|(a, b)| (b, a)),
    }
}

/// Limit labels for the canonical orientation (`q1 <= q2`, congruous means
/// `b21 = 0`), with Hurst pairs in canonical coordinates.
fn canonical_limits(c: &Canonical) -> (LimitLabel, LimitLabel, LimitLabel) {
    use FamilyLabel::*;
    let e = &c.exps;
    let lbl = |family, hurst| LimitLabel { family, hurst };
    match (c.region, c.congruous) {
        (Region::BothGt, false) => (
            lbl(Tilde22, Some((1.0, e.h_tilde2))),
            lbl(Tilde21, Some((e.h_tilde2, 1.0))),
            lbl(Tilde20, None),
        ),
        (Region::BothGt, true) => (
            lbl(Tilde22, Some((1.0, e.h_tilde2))),
            lbl(Tilde11, Some((e.h_tilde1, 1.0))),
            lbl(Tilde00, None),
        ),
        (Region::Mixed12 | Region::BothLt, false) => (
            lbl(Plain11, Some((e.h1, 0.5))),
            lbl(Plain21, Some((0.5, e.h1))),
            lbl(Plain01, None),
        ),
        (Region::Mixed12, true) => (
            lbl(Plain11, Some((e.h1, 0.5))),
            lbl(Tilde11, Some((e.h_tilde1, 1.0))),
            lbl(Tilde00, None),
        ),
        (Region::BothLt, true) => (
            lbl(Plain11, Some((e.h1, 0.5))),
            lbl(Plain22, Some((0.5, e.h2))),
            lbl(Tilde00, None),
        ),
        (Region::EqSmall, _) => {
            let h = 2.0 - e.q1;
            (
                lbl(Tilde02, Some((1.0, h))),
                lbl(Tilde01, Some((h, 1.0))),
                lbl(Tilde0, None),
            )
        }
        (Region::EqLarge, _) => {
            let h = 2.5 - e.q1;
            (
                lbl(Plain10, Some((h, 0.5))),
                lbl(Plain20, Some((0.5, h))),
                lbl(Plain0, None),
            )
        }
        // Canonicalization sorts the exponents, so Mixed21 cannot occur here.
        (Region::Mixed21, _) => unreachable!("canonical region is never Mixed21"),
    }
}

/// Normalization exponent `H(gamma)` of `A_{lambda,gamma} = lambda^{H(gamma)}`.
///
/// Piecewise linear in `gamma` and continuous at `gamma0`; on either side it
/// equals `H1 + gamma H2` for the Hurst pair of the unbalanced limit.
pub fn scaling_exponent(
    regime: &RegimeClassification,
    exps: &ExponentSet,
    gamma: f64,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    // Consistency with the classification's own exponent set.
    if (exps.q1 - regime.exponents.q1).abs() > 1e-12
        || (exps.q2 - regime.exponents.q2).abs() > 1e-12
    {
        return Err(Error::InvalidParameter(
            "exponent set does not match classification".into(),
        ));
    }
    if regime.coordinate_swapped {
        // User scan (lambda, lambda^gamma) is the canonical scan
        // (mu, mu^{1/gamma}) with mu = lambda^gamma.
        let hc = canonical_h(regime, 1.0 / gamma)?;
        Ok(gamma * hc)
    } else {
        canonical_h(regime, gamma)
    }
}

/// `H(gamma)` in canonical coordinates.
fn canonical_h(regime: &RegimeClassification, gamma: f64) -> Result<f64> {
    let e = if regime.exponent_swapped {
        derive_exponents(regime.exponents.q2, regime.exponents.q1)?
    } else {
        regime.exponents
    };
    let gamma0 = if regime.coordinate_swapped {
        1.0 / regime.gamma0
    } else {
        regime.gamma0
    };
    let canon_region = match regime.region {
        Region::Mixed21 => Region::Mixed12,
        r => r,
    };
    let h = match (canon_region, regime.congruous) {
        (Region::BothGt, false) => {
            if gamma >= gamma0 {
                1.0 + gamma * e.h_tilde2
            } else {
                gamma + e.h_tilde2
            }
        }
        (Region::BothGt, true) => {
            if gamma >= gamma0 {
                1.0 + gamma * e.h_tilde2
            } else {
                gamma + e.h_tilde1
            }
        }
        (Region::Mixed12 | Region::BothLt, false) => {
            if gamma >= gamma0 {
                e.h1 + gamma / 2.0
            } else {
                0.5 + gamma * e.h1
            }
        }
        (Region::Mixed12, true) => {
            if gamma >= gamma0 {
                e.h1 + gamma / 2.0
            } else {
                gamma + e.h_tilde1
            }
        }
        (Region::BothLt, true) => {
            if gamma >= gamma0 {
                e.h1 + gamma / 2.0
            } else {
                0.5 + gamma * e.h2
            }
        }
        (Region::EqSmall, _) => {
            let ht = 2.0 - e.q1;
            if gamma >= gamma0 {
                1.0 + gamma * ht
            } else {
                gamma + ht
            }
        }
        (Region::EqLarge, _) => {
            let h = 2.5 - e.q1;
            if gamma >= gamma0 {
                h + gamma / 2.0
            } else {
                0.5 + gamma * h
            }
        }
        (Region::Mixed21, _) => unreachable!(),
    };
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn exponents_match_hand_computed_fractions() {
        let e = derive_exponents(1.2, 1.6).unwrap();
        assert!(close(e.q_sum, 35.0 / 24.0, 1e-12));
        assert!(close(e.q_cap_tilde1, 25.0 / 24.0, 1e-12));
        assert!(close(e.q_cap_tilde2, 27.5 / 24.0, 1e-12));
        assert!(close(e.h_tilde1, 0.675, 1e-12));
        assert!(close(e.h_tilde2, 0.675 - 0.325 / 3.0, 1e-12)); // 0.5666..
        assert!(close(e.q_tilde1, 0.65, 1e-12));
        assert!(close(e.q_tilde2, 13.0 / 15.0, 1e-12));
    }

    #[test]
    fn equal_exponents_reduce_to_two_minus_q() {
        let e = derive_exponents(1.25, 1.25).unwrap();
        assert!(close(e.q_sum, 1.6, 1e-12));
        assert!(close(e.h_tilde1, 0.75, 1e-12));
        assert!(close(e.h_tilde2, 2.0 - 1.25, 1e-12));
    }

    #[test]
    fn out_of_region_rejected() {
        assert!(matches!(
            derive_exponents(3.0, 4.0),
            Err(Error::OutOfRegion { .. })
        ));
    }

    #[test]
    fn boundary_q_tilde_rejected() {
        // Q~1 = 1 exactly at q1 = 1.2, q2 = 1.5: Q = 3/2, 1/(2 q1) = ...
        // solve instead numerically: pick q2 so Q - 1/(2 q1) = 1.
        let q1 = 1.2f64;
        let q2 = 1.0 / (1.0 + 1.0 / (2.0 * q1) - 1.0 / q1);
        assert!(matches!(
            derive_exponents(q1, q2),
            Err(Error::BoundaryParameter { .. })
        ));
    }

    #[test]
    fn classify_incongruous_both_gt() {
        let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
        let c = classify_regime(&p).unwrap();
        assert_eq!(c.region, Region::BothGt);
        assert!(!c.congruous);
        assert!(close(c.gamma0, 1.0, 0.0));
        assert_eq!(c.limit_plus.family, FamilyLabel::Tilde22);
        let (h1, h2) = c.limit_plus.hurst.unwrap();
        assert!(close(h1, 1.0, 0.0) && close(h2, 0.5666666666666667, 1e-12));
        let (g1, g2) = c.limit_minus.hurst.unwrap();
        assert!(close(g1, 0.5666666666666667, 1e-12) && close(g2, 1.0, 0.0));
    }

    #[test]
    fn classify_congruous_both_gt() {
        let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.0, 1.0]]);
        let c = classify_regime(&p).unwrap();
        assert!(c.congruous);
        assert!(close(c.gamma0, 0.75, 1e-12));
        assert_eq!(c.limit_plus.family, FamilyLabel::Tilde22);
        assert_eq!(c.limit_minus.family, FamilyLabel::Tilde11);
        assert_eq!(c.limit_crit.family, FamilyLabel::Tilde00);
        let (_, h2) = c.limit_plus.hurst.unwrap();
        assert!(close(h2, c.exponents.h_tilde2, 0.0));
        let (g1, _) = c.limit_minus.hurst.unwrap();
        assert!(close(g1, c.exponents.h_tilde1, 0.0));
    }

    #[test]
    fn classify_incongruous_both_lt() {
        let p = ModelParams::new(1.3, 4.0, [[1.0, 0.5], [0.7, 1.0]]);
        let c = classify_regime(&p).unwrap();
        assert_eq!(c.region, Region::BothLt);
        assert!(close(c.gamma0, 1.0, 0.0));
        let (h1, h2) = c.limit_plus.hurst.unwrap();
        assert!(close(h1, 0.525, 1e-12));
        assert!(close(h2, 0.5, 0.0));
        let (g1, g2) = c.limit_minus.hurst.unwrap();
        assert!(close(g1, 0.5, 0.0) && close(g2, 0.525, 1e-12));
        // H2 stays available in the exponent set.
        assert!(close(c.exponents.h2, 0.576923076923077, 1e-12));
    }

    #[test]
    fn h_curve_matches_examples() {
        let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
        let c = classify_regime(&p).unwrap();
        let e = c.exponents;
        let h2 = scaling_exponent(&c, &e, 2.0).unwrap();
        assert!(close(h2, 1.0 + 2.0 * e.h_tilde2, 1e-12));
        // continuity at gamma0 = 1
        let ha = scaling_exponent(&c, &e, 1.0).unwrap();
        assert!(close(ha, 1.0 + e.h_tilde2, 1e-12));
        assert!(close(ha, e.h_tilde2 + 1.0, 1e-12));
    }

    #[test]
    fn congruous_branches_agree_at_gamma0() {
        let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.0, 1.0]]);
        let c = classify_regime(&p).unwrap();
        let e = c.exponents;
        let h = scaling_exponent(&c, &e, 0.75).unwrap();
        assert!(close(h, 1.0 + 0.75 * e.h_tilde2, 1e-12));
        assert!(close(h, 0.75 + e.h_tilde1, 1e-12));
        assert!(close(h, 1.425, 1e-12));
    }

    #[test]
    fn swapped_exponents_relabel_consistently() {
        // Same model expressed both ways: (q1, q2, B) and the row/exponent
        // relabeled version (q2, q1, B rows swapped) describe the same field.
        let a = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
        let b = ModelParams::new(1.6, 1.2, [[0.7, 1.0], [1.0, 0.5]]);
        let ca = classify_regime(&a).unwrap();
        let cb = classify_regime(&b).unwrap();
        assert_eq!(ca.congruous, cb.congruous);
        assert!(close(ca.gamma0, cb.gamma0, 0.0));
        assert_eq!(ca.limit_plus.family, cb.limit_plus.family);
        assert_eq!(ca.limit_plus.hurst, cb.limit_plus.hurst);
        for gamma in [0.3, 0.9, 1.0, 1.7] {
            let ha = scaling_exponent(&ca, &ca.exponents, gamma).unwrap();
            let hb = scaling_exponent(&cb, &cb.exponents, gamma).unwrap();
            assert!(close(ha, hb, 1e-12));
        }
    }

    #[test]
    fn congruous_via_b22_zero_inverts_gamma0() {
        // Dependence axis is the vertical coordinate axis; scan roles swap.
        let p = ModelParams::new(1.2, 1.6, [[0.5, 1.0], [0.7, 0.0]]);
        let c = classify_regime(&p).unwrap();
        assert!(c.congruous);
        assert!(c.coordinate_swapped);
        assert!(close(c.gamma0, 1.6 / 1.2, 1e-12));
        // H(gamma) continuous there too.
        let h = scaling_exponent(&c, &c.exponents, c.gamma0).unwrap();
        let hl = scaling_exponent(&c, &c.exponents, c.gamma0 - 1e-9).unwrap();
        let hr = scaling_exponent(&c, &c.exponents, c.gamma0 + 1e-9).unwrap();
        assert!(close(h, hl, 1e-7) && close(h, hr, 1e-7));
    }

    #[test]
    fn equal_exponent_regimes() {
        let p = ModelParams::new(1.25, 1.25, [[1.0, 0.5], [0.7, 1.0]]);
        let c = classify_regime(&p).unwrap();
        assert_eq!(c.region, Region::EqSmall);
        assert!(close(c.gamma0, 1.0, 0.0));
        assert_eq!(c.limit_plus.family, FamilyLabel::Tilde02);
        assert_eq!(c.limit_plus.hurst.unwrap().1, 0.75);

        let p = ModelParams::new(1.75, 1.75, [[1.0, 0.5], [0.7, 1.0]]);
        let c = classify_regime(&p).unwrap();
        assert_eq!(c.region, Region::EqLarge);
        assert_eq!(c.limit_plus.family, FamilyLabel::Plain10);
        assert_eq!(c.limit_plus.hurst.unwrap().0, 0.75);
    }
}
