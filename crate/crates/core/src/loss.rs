//! Smooth convex margin losses `ℓ(z)` together with their derivatives,
//! Fenchel conjugates `ℓ*(α)`, dual domains and smoothness constants.
//!
//! Every loss here is a function of the signed margin `z = y·xᵀw`. The dual
//! variable of example `i` at a primal point is `αᵢ = ℓ'(zᵢ)`, which always
//! lies in [`LossSpec::dual_domain`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Slack used for dual-domain membership tests.
pub const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `½(1 − z)²`
    Square,
    /// `ln(1 + e^{−z})`
    Logistic,
    /// Quadratically smoothed hinge with smoothing width `μ`.
    SmoothedHinge { smoothing: f64 },
}

/// Closed interval, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo - DOMAIN_TOL && x <= self.hi + DOMAIN_TOL
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
}

impl LossSpec {
    pub fn square() -> Self {
        LossSpec {
            kind: LossKind::Square,
        }
    }

    pub fn logistic() -> Self {
        LossSpec {
            kind: LossKind::Logistic,
        }
    }

    pub fn smoothed_hinge(smoothing: f64) -> Result<Self> {
        if !(smoothing.is_finite() && smoothing > 0.0) {
            return Err(Error::invalid("smoothing", format!("must be positive, got {smoothing}")));
        }
        Ok(LossSpec {
            kind: LossKind::SmoothedHinge { smoothing },
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Lipschitz constant of `ℓ'`.
    pub fn gamma(&self) -> f64 {
        match self.kind {
            LossKind::Square => 1.0,
            LossKind::Logistic => 0.25,
            LossKind::SmoothedHinge { smoothing } => 1.0 / smoothing,
        }
    }

    pub fn dual_domain(&self) -> Interval {
        match self.kind {
            LossKind::Square => Interval::REAL_LINE,
            LossKind::Logistic | LossKind::SmoothedHinge { .. } => Interval { lo: -1.0, hi: 0.0 },
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        match self.kind {
            LossKind::Square => 0.5 * (1.0 - z) * (1.0 - z),
            LossKind::Logistic => {
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
            LossKind::SmoothedHinge { smoothing: mu } => {
                if z >= 1.0 {
                    0.0
                } else if z <= 1.0 - mu {
                    1.0 - z - 0.5 * mu
                } else {
                    (1.0 - z) * (1.0 - z) / (2.0 * mu)
                }
            }
        }
    }

    pub fn gradient(&self, z: f64) -> f64 {
        match self.kind {
            LossKind::Square => z - 1.0,
            LossKind::Logistic => {
                // −1/(1 + e^z), written to avoid overflow on either side
                if z > 0.0 {
                    let e = (-z).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + z.exp())
                }
            }
            LossKind::SmoothedHinge { smoothing: mu } => {
                if z >= 1.0 {
                    0.0
                } else if z <= 1.0 - mu {
                    -1.0
                } else {
                    (z - 1.0) / mu
                }
            }
        }
    }

    /// Second derivative (a generalized one at the smoothed-hinge kinks).
    pub fn curvature(&self, z: f64) -> f64 {
        match self.kind {
            LossKind::Square => 1.0,
            LossKind::Logistic => {
                let e = (-z.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            LossKind::SmoothedHinge { smoothing: mu } => {
                if z >= 1.0 || z <= 1.0 - mu {
                    0.0
                } else {
                    1.0 / mu
                }
            }
        }
    }

    /// Fenchel conjugate `ℓ*(α) = sup_z αz − ℓ(z)` on the dual domain.
    pub fn conjugate(&self, alpha: f64) -> Result<f64> {
        let dom = self.dual_domain();
        if !alpha.is_finite() || !dom.contains(alpha) {
            return Err(Error::DomainViolation {
                value: alpha,
                lo: dom.lo,
                hi: dom.hi,
            });
        }
        let a = dom.clamp(alpha);
        Ok(match self.kind {
            LossKind::Square => a + 0.5 * a * a,
            LossKind::Logistic => xlogx(-a) + xlogx(1.0 + a),
            LossKind::SmoothedHinge { smoothing: mu } => a + 0.5 * mu * a * a,
        })
    }
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::Square => write!(f, "square"),
            LossKind::Logistic => write!(f, "logistic"),
            LossKind::SmoothedHinge { smoothing } => write!(f, "smoothed_hinge:{smoothing}"),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// Parses `square`, `logistic`, `smoothed_hinge` or `smoothed_hinge:<mu>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "square" => return Ok(LossSpec::square()),
            "logistic" => return Ok(LossSpec::logistic()),
            "smoothed_hinge" => return LossSpec::smoothed_hinge(1.0),
            _ => {}
        }
        if let Some(mu) = s.strip_prefix("smoothed_hinge:") {
            let mu: f64 = mu
                .parse()
                .map_err(|_| Error::invalid("loss", format!("bad smoothing parameter in `{s}`")))?;
            return LossSpec::smoothed_hinge(mu);
        }
        Err(Error::invalid(
            "loss",
            format!("unknown loss `{s}` (expected square | logistic | smoothed_hinge:<mu>)"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn all_losses() -> Vec<LossSpec> {
        vec![
            LossSpec::square(),
            LossSpec::logistic(),
            LossSpec::smoothed_hinge(1.0).unwrap(),
            LossSpec::smoothed_hinge(0.3).unwrap(),
        ]
    }

    #[test]
    fn point_values() {
        assert_eq!(LossSpec::square().value(1.0), 0.0);
        assert!((LossSpec::logistic().value(0.0) - LN_2).abs() < 1e-15);
        assert_eq!(LossSpec::smoothed_hinge(1.0).unwrap().value(0.0), 0.5);
        assert_eq!(LossSpec::square().gradient(1.0), 0.0);
        assert_eq!(LossSpec::square().gradient(0.0), -1.0);
        assert_eq!(LossSpec::logistic().gradient(0.0), -0.5);
    }

    #[test]
    fn conjugate_values() {
        assert_eq!(LossSpec::square().conjugate(0.0).unwrap(), 0.0);
        let v = LossSpec::logistic().conjugate(-0.5).unwrap();
        assert!((v + LN_2).abs() < 1e-15);
        // endpoints use 0·ln 0 = 0
        assert_eq!(LossSpec::logistic().conjugate(0.0).unwrap(), 0.0);
        assert_eq!(LossSpec::logistic().conjugate(-1.0).unwrap(), 0.0);
    }

    #[test]
    fn conjugate_rejects_outside_domain() {
        assert!(matches!(
            LossSpec::logistic().conjugate(0.1),
            Err(Error::DomainViolation { .. })
        ));
        assert!(LossSpec::smoothed_hinge(1.0).unwrap().conjugate(-1.5).is_err());
        assert!(LossSpec::square().conjugate(-1e6).is_ok());
        // rounding slack
        assert!(LossSpec::logistic().conjugate(1e-13).is_ok());
    }

    #[test]
    fn parse_round_trip() {
        for l in all_losses() {
            assert_eq!(l.to_string().parse::<LossSpec>().unwrap(), l);
        }
        assert_eq!("smoothed_hinge".parse::<LossSpec>().unwrap().gamma(), 1.0);
        assert_eq!("smoothed_hinge:0.5".parse::<LossSpec>().unwrap().gamma(), 2.0);
        assert!("hinge".parse::<LossSpec>().is_err());
        assert!("smoothed_hinge:-1".parse::<LossSpec>().is_err());
        assert!("smoothed_hinge:abc".parse::<LossSpec>().is_err());
    }

    #[test]
    fn logistic_is_overflow_safe() {
        let l = LossSpec::logistic();
        assert!((l.value(-800.0) - 800.0).abs() < 1e-9);
        assert_eq!(l.value(800.0), 0.0);
        assert_eq!(l.gradient(-800.0), -1.0);
        assert!(l.gradient(800.0) <= 0.0);
        assert!(l.curvature(800.0).is_finite());
    }

    proptest! {
        #[test]
        fn gradient_matches_central_difference(z in -6.0f64..6.0) {
            let h = 1e-6;
            for l in all_losses() {
                if let LossKind::SmoothedHinge { smoothing } = l.kind() {
                    // skip the two kinks where the derivative of ℓ' jumps
                    if (z - 1.0).abs() < 2.0 * h || (z - 1.0 + smoothing).abs() < 2.0 * h {
                        continue;
                    }
                }
                let fd = (l.value(z + h) - l.value(z - h)) / (2.0 * h);
                prop_assert!((fd - l.gradient(z)).abs() < 1e-6, "{l}: fd {fd} vs {}", l.gradient(z));
            }
        }

        #[test]
        fn curvature_matches_gradient_difference(z in -6.0f64..6.0) {
            let h = 1e-6;
            for l in [LossSpec::square(), LossSpec::logistic()] {
                let fd = (l.gradient(z + h) - l.gradient(z - h)) / (2.0 * h);
                prop_assert!((fd - l.curvature(z)).abs() < 1e-6);
            }
        }

        #[test]
        fn fenchel_young_equality(z in -40.0f64..40.0) {
            for l in all_losses() {
                let a = l.gradient(z);
                prop_assert!(l.dual_domain().contains(a));
                let lhs = a * z - l.conjugate(a).unwrap();
                prop_assert!((lhs - l.value(z)).abs() < 1e-9, "{l} at {z}");
            }
        }

        #[test]
        fn fenchel_young_inequality(z in -20.0f64..20.0, t in 0.0f64..1.0) {
            for l in all_losses() {
                let dom = l.dual_domain();
                let a = if dom.lo.is_finite() { dom.lo + t * (dom.hi - dom.lo) } else { 10.0 * (t - 0.5) };
                prop_assert!(a * z - l.conjugate(a).unwrap() <= l.value(z) + 1e-12);
            }
        }

        #[test]
        fn gradient_lipschitz_within_gamma(z in -10.0f64..10.0, h in -1.0f64..1.0) {
            prop_assume!(h.abs() > 1e-9);
            for l in all_losses() {
                let slope = (l.gradient(z + h) - l.gradient(z)).abs() / h.abs();
                prop_assert!(slope <= l.gamma() + 1e-6);
            }
        }

        #[test]
        fn conjugate_midpoint_convex(s in 0.0f64..1.0, t in 0.0f64..1.0) {
            for l in all_losses() {
                let (a, b) = (-s, -t);
                let mid = l.conjugate(0.5 * (a + b)).unwrap();
                let avg = 0.5 * (l.conjugate(a).unwrap() + l.conjugate(b).unwrap());
                prop_assert!(mid <= avg + 1e-12);
            }
        }
    }
}
