//! Pointwise log odds ratios, efficient-score evaluations and the doubly
//! robust product moment.
//!
//! Everything here is a total function of its arguments: probabilities on
//! the boundary of (0, 1) are rejected rather than clipped. Clipping belongs
//! to the learners that produce the probabilities.

use crate::error::{Error, Result};

/// Logistic link.
#[inline]
pub fn expit(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} = {p} is not in the open interval (0, 1)"
        )))
    }
}

fn check_bit(name: &str, b: u8) -> Result<f64> {
    match b {
        0 => Ok(0.0),
        1 => Ok(1.0),
        _ => Err(Error::Domain(format!(
            "{name} = {b} is not a binary indicator"
        ))),
    }
}

/// `log{p1 (1 - p0) / [(1 - p1) p0]}` with `p1 = P(Y=1|T=1,x)` and
/// `p0 = P(Y=1|T=0,x)`.
pub fn log_or_prospective(p1: f64, p0: f64) -> Result<f64> {
    check_prob("p1", p1)?;
    check_prob("p0", p0)?;
    Ok(logit(p1) - logit(p0))
}

/// Same cross-product ratio written with `q1 = P(T=1|Y=1,x)` and
/// `q0 = P(T=1|Y=0,x)`. Equal to the prospective value by Bayes' rule.
pub fn log_or_retrospective(q1: f64, q0: f64) -> Result<f64> {
    check_prob("q1", q1)?;
    check_prob("q0", q0)?;
    Ok(logit(q1) - logit(q0))
}

/// Uncentered prospective score:
///
/// `log OR + t (y - p1) / [w p1 (1 - p1)] - (1 - t)(y - p0) / [(1 - w) p0 (1 - p0)]`
///
/// where `w = P(T=1|x)`. Callers subtract the centering value.
pub fn psi_prospective(y: u8, t: u8, p0: f64, p1: f64, w: f64) -> Result<f64> {
    let yf = check_bit("y", y)?;
    let tf = check_bit("t", t)?;
    check_prob("w", w)?;
    let lor = log_or_prospective(p1, p0)?;
    Ok(lor + tf * (yf - p1) / (w * p1 * (1.0 - p1))
        - (1.0 - tf) * (yf - p0) / ((1.0 - w) * p0 * (1.0 - p0)))
}

/// Uncentered retrospective score, the mirror image of [`psi_prospective`]
/// with the roles of outcome and exposure swapped; `w = P(Y=1|x)`.
pub fn psi_retrospective(t: u8, y: u8, q0: f64, q1: f64, w: f64) -> Result<f64> {
    psi_prospective(t, y, q0, q1, w)
}

/// Product moment `{y - expit(phi_p)}{t - expit(phi_r)} exp(-theta t y)`.
pub fn dr_moment(phi_p: f64, phi_r: f64, theta: f64, y: u8, t: u8) -> Result<f64> {
    if !(phi_p.is_finite() && phi_r.is_finite() && theta.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite moment argument (phi_p = {phi_p}, phi_r = {phi_r}, theta = {theta})"
        )));
    }
    let yf = check_bit("y", y)?;
    let tf = check_bit("t", t)?;
    Ok((yf - expit(phi_p)) * (tf - expit(phi_r)) * (-theta * tf * yf).exp())
}

/// Efficient score built from the product moment:
///
/// `theta0(x) - theta_bar + m(y, t) / [P(Y=1,T=1|x) m(1, 1)]`
///
/// with every moment evaluated at the true `(phi_p0, phi_r0, theta0(x))`.
pub fn dr_efficient_score(
    y: u8,
    t: u8,
    phi_p0: f64,
    phi_r0: f64,
    theta0x: f64,
    pyt11: f64,
    theta_bar: f64,
) -> Result<f64> {
    check_prob("P(Y=1,T=1|x)", pyt11)?;
    let num = dr_moment(phi_p0, phi_r0, theta0x, y, t)?;
    let den = dr_moment(phi_p0, phi_r0, theta0x, 1, 1)?;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Domain(
            "moment at (1, 1) vanishes; the cell probabilities are not bounded away from 0 and 1"
                .into(),
        ));
    }
    Ok(theta0x - theta_bar + num / (pyt11 * den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_or_values() {
        assert_eq!(log_or_prospective(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(log_or_prospective(0.8, 0.8).unwrap(), 0.0);
        assert_abs_diff_eq!(
            log_or_prospective(0.6, 0.4).unwrap(),
            0.810930,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            log_or_prospective(0.6, 0.4).unwrap(),
            2.25f64.ln(),
            epsilon = 1e-15
        );
        assert_eq!(log_or_retrospective(0.5, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(
            log_or_retrospective(0.6, 0.4).unwrap(),
            0.810930,
            epsilon = 1e-6
        );
    }

    #[test]
    fn log_or_rejects_boundary() {
        assert!(matches!(
            log_or_prospective(1.0, 0.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            log_or_prospective(0.5, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            log_or_retrospective(f64::NAN, 0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn invariance_on_a_table() {
        // cells indexed [y][t]
        let c = [[0.3, 0.2], [0.2, 0.3]];
        let p1 = c[1][1] / (c[0][1] + c[1][1]);
        let p0 = c[1][0] / (c[0][0] + c[1][0]);
        let q1 = c[1][1] / (c[1][0] + c[1][1]);
        let q0 = c[0][1] / (c[0][0] + c[0][1]);
        assert_abs_diff_eq!(p1, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(q1, 0.6, epsilon = 1e-15);
        let a = log_or_prospective(p1, p0).unwrap();
        let b = log_or_retrospective(q1, q0).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.810930, epsilon = 1e-6);
    }

    #[test]
    fn psi_values() {
        assert_abs_diff_eq!(
            psi_prospective(1, 1, 0.5, 0.5, 0.5).unwrap(),
            4.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            psi_prospective(0, 0, 0.5, 0.5, 0.5).unwrap(),
            4.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            psi_prospective(1, 1, 0.2, 0.8, 0.5).unwrap(),
            16f64.ln() + 2.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            psi_prospective(1, 1, 0.2, 0.8, 0.5).unwrap(),
            5.272589,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            psi_retrospective(1, 1, 0.5, 0.5, 0.5).unwrap(),
            4.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            psi_retrospective(0, 0, 0.5, 0.5, 0.5).unwrap(),
            4.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn psi_rejects_bad_inputs() {
        assert!(psi_prospective(2, 1, 0.5, 0.5, 0.5).is_err());
        assert!(psi_prospective(1, 1, 0.5, 0.5, 1.0).is_err());
        assert!(psi_retrospective(1, 0, 0.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn psi_forms_agree_on_a_table() {
        let c = [[0.3, 0.2], [0.2, 0.3]];
        let p0 = c[1][0] / (c[0][0] + c[1][0]);
        let p1 = c[1][1] / (c[0][1] + c[1][1]);
        let wt = c[0][1] + c[1][1];
        let q0 = c[0][1] / (c[0][0] + c[0][1]);
        let q1 = c[1][1] / (c[1][0] + c[1][1]);
        let wy = c[1][0] + c[1][1];
        for y in 0..2u8 {
            for t in 0..2u8 {
                let a = psi_prospective(y, t, p0, p1, wt).unwrap();
                let b = psi_retrospective(t, y, q0, q1, wy).unwrap();
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dr_moment_values() {
        assert_abs_diff_eq!(
            dr_moment(0.0, 0.0, 3.7, 0, 0).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            dr_moment(0.0, 0.0, 0.0, 1, 1).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert!(dr_moment(f64::INFINITY, 0.0, 0.0, 1, 1).is_err());
    }

    #[test]
    fn dr_score_matches_prospective_under_independence() {
        // all four cells 0.25: phi_p0 = phi_r0 = theta0 = 0
        let f_dr = dr_efficient_score(1, 1, 0.0, 0.0, 0.0, 0.25, 0.0).unwrap();
        let f_p = psi_prospective(1, 1, 0.5, 0.5, 0.5).unwrap();
        assert_abs_diff_eq!(f_dr, f_p, epsilon = 1e-12);
    }

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(-800.0) >= 0.0);
        assert_eq!(expit(800.0), 1.0);
        assert_abs_diff_eq!(logit(expit(1.3)), 1.3, epsilon = 1e-12);
    }
}
