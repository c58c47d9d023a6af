//! DP advantage bound and the two-sample Kolmogorov–Smirnov test.

use alloc::string::String;
use alloc::vec::Vec;

use super::design::{Design, Matrix};
use super::AnalysisError;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DpParams {
    pub eps: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DpBound {
    /// Bound on `Pr[correct] - 1/2`.
    pub advantage: f64,
    /// `advantage / 0.5`.
    pub normalized: f64,
    /// False once `eps >= ln(3 - 2 delta)`, where the bound reaches 1/2
    /// and says nothing.
    pub useful: bool,
}

/// `(e^eps - 1)/4 + delta/2`, capped at 1/2: the most any attacker can
/// gain over a coin flip against an (eps, delta)-DP view of two
/// neighboring inputs.
pub fn dp_bound(p: DpParams) -> Result<DpBound, AnalysisError> {
    if !(p.eps >= 0.0 && p.eps.is_finite()) {
        return Err(AnalysisError::Eps);
    }
    if !(0.0..1.0).contains(&p.delta) {
        return Err(AnalysisError::Delta);
    }
    let advantage = (libm::expm1(p.eps) / 4.0 + p.delta / 2.0).min(0.5);
    Ok(DpBound {
        advantage,
        normalized: 2.0 * advantage,
        useful: p.eps < libm::log(3.0 - 2.0 * p.delta),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KsResult {
    pub d: f64,
    pub p_value: f64,
}

/// Two-sample KS statistic with the asymptotic p-value.
pub fn ks_test(a: &[f64], b: &[f64]) -> Result<KsResult, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = libm::sqrt(n * m / (n + m));
    Ok(KsResult {
        d,
        p_value: kolmogorov_q((ne + 0.12 + 0.11 / ne) * d),
    })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = sign * libm::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KsRow {
    pub feature: String,
    pub d: f64,
    pub p_value: f64,
}

/// KS statistic of every column between the two label classes, sorted
/// by decreasing `d`.
pub fn ks_table<S: AsRef<str>>(x: &Matrix, y: &[bool], names: &[S]) -> Result<Vec<KsRow>, AnalysisError> {
    if x.rows() != y.len() {
        return Err(AnalysisError::LengthMismatch {
            rows: x.rows(),
            labels: y.len(),
        });
    }
    let mut rows = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (v, &l) in x.column(j).zip(y) {
            if l { b.push(v) } else { a.push(v) }
        }
        let r = ks_test(&a, &b)?;
        rows.push(KsRow {
            feature: names.get(j).map_or_else(|| alloc::format!("col_{j}"), |s| s.as_ref().into()),
            d: r.d,
            p_value: r.p_value,
        });
    }
    rows.sort_by(|a, b| b.d.total_cmp(&a.d));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_values() {
        let b = dp_bound(DpParams { eps: 0.5, delta: 0.01 }).unwrap();
        assert!((b.advantage - 0.1672).abs() < 1e-4);
        assert!(b.advantage < 0.17 && b.normalized < 0.34);
        assert!(b.useful);
        assert_eq!(dp_bound(DpParams { eps: 0.0, delta: 0.0 }).unwrap().advantage, 0.0);
        let t = dp_bound(DpParams { eps: 0.1, delta: 1e-9 }).unwrap();
        assert!((t.advantage - 0.026293).abs() < 1e-6);
        assert!(dp_bound(DpParams { eps: -1.0, delta: 0.0 }).is_err());
        assert!(dp_bound(DpParams { eps: 1.0, delta: 1.0 }).is_err());
    }

    #[test]
    fn bound_usefulness_edge() {
        let delta = 0.2;
        let edge = libm::log(3.0 - 2.0 * delta);
        let at = dp_bound(DpParams { eps: edge, delta }).unwrap();
        assert!(!at.useful);
        assert!((at.advantage - 0.5).abs() < 1e-12);
        assert!(dp_bound(DpParams { eps: edge * 0.99, delta }).unwrap().useful);
        let past = dp_bound(DpParams { eps: 2.0, delta }).unwrap();
        assert_eq!((past.advantage, past.normalized, past.useful), (0.5, 1.0, false));
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_test(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap().d, 0.0);
        assert_eq!(ks_test(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]).unwrap().d, 1.0);
        assert_eq!(ks_test(&[1.0, 2.0], &[1.0, 3.0]).unwrap().d, 0.5);
        assert_eq!(ks_test(&[], &[1.0]), Err(AnalysisError::EmptySample));
        assert_eq!(ks_test(&[1.0], &[1.0]).unwrap().p_value, 1.0);
    }

    #[test]
    fn ks_p_value_reference() {
        // scipy.stats.kstwobign.sf(1.0) = 0.26999967...
        assert!((kolmogorov_q(1.0) - 0.2699996716).abs() < 1e-8);
    }
}
