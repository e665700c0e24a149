//! Power-law kernels, regime classification and tail diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::LogisticQuadrature;
use crate::ode::LearningCurve;
use crate::spectral::SpectralMixture;

fn require_shared_binary(model: &SpectralMixture) -> Result<()> {
    if model.num_classes() != 2 || !model.has_shared_covariance() {
        return Err(Error::invalid(
            "model",
            "kernels need two classes with a shared covariance",
        ));
    }
    Ok(())
}

/// `F(x) = sum_rho mu~_rho exp(-gamma lambda_rho x)` for the first class mean.
pub fn kernel_f_mu(model: &SpectralMixture, gamma: f64, x: f64) -> Result<f64> {
    require_shared_binary(model)?;
    let lam = model.eigvals(0);
    Ok((0..model.dim())
        .map(|r| model.mean_sq(0, r) * (-gamma * lam[r] * x).exp())
        .sum())
}

/// `K2(x) = (1/d) sum_rho lambda_rho^2 exp(-2 gamma lambda_rho x)`.
pub fn kernel_k2(model: &SpectralMixture, gamma: f64, x: f64) -> Result<f64> {
    require_shared_binary(model)?;
    let d = model.dim();
    Ok(model
        .eigvals(0)
        .iter()
        .map(|l| l * l * (-2.0 * gamma * l * x).exp())
        .sum::<f64>()
        / d as f64)
}

/// `int_0^inf F(x) dx = sum_rho mu~_rho / (gamma lambda_rho)`; infinite when
/// mean mass sits on a zero eigenvalue.
pub fn f_mu_l1_norm(model: &SpectralMixture, gamma: f64) -> Result<f64> {
    require_shared_binary(model)?;
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    let lam = model.eigvals(0);
    let mut total = 0.0;
    for r in 0..model.dim() {
        let mu = model.mean_sq(0, r);
        if mu == 0.0 {
            continue;
        }
        if lam[r] == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += mu / (gamma * lam[r]);
    }
    Ok(total)
}

/// Floor `log(1 + exp(-c_w gamma |F|_1))` on the risk of a saturating run.
pub fn mild_loss_floor(cw: f64, gamma: f64, f_mu_l1: f64) -> f64 {
    (-cw * gamma * f_mu_l1).exp().ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Mild,
    Boundary,
    Extreme,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub alpha: f64,
    pub beta: f64,
    /// `(beta + 1) / alpha`; infinite for the identity spectrum.
    pub kappa_mu: f64,
    /// Decay exponent of the `lambda^2`-weighted kernel, `1/alpha + 2`.
    pub kappa_2: f64,
    pub regime: Regime,
    /// `beta + 1 <= alpha`: the polynomially decaying family, which
    /// includes the boundary.
    pub extreme_family: bool,
    /// Flat spectrum (`alpha = 0`).
    pub identity: bool,
    pub notes: Vec<String>,
}

impl RegimeReport {
    pub fn is_extreme_family(&self) -> bool {
        self.extreme_family
    }
}

const BOUNDARY_TOL: f64 = 1e-9;

/// Regime of the power-law model with exponents `alpha` (spectrum) and
/// `beta` (mean profile).
pub fn classify_regime(alpha: f64, beta: f64) -> Result<RegimeReport> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid("alpha", format!("{alpha} must be >= 0")));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::invalid("beta", format!("{beta} must be >= 0")));
    }
    let mut notes = vec![
        "kappa_2 is the decay of the lambda^2-weighted kernel; the lambda-weighted kernel \
         decays like 1/alpha + 1"
            .to_string(),
    ];
    if alpha == 0.0 {
        notes.push("alpha = 0 is the identity spectrum; the risk saturates".into());
        return Ok(RegimeReport {
            alpha,
            beta,
            kappa_mu: f64::INFINITY,
            kappa_2: f64::INFINITY,
            regime: Regime::Mild,
            extreme_family: false,
            identity: true,
            notes,
        });
    }
    let kappa_mu = (beta + 1.0) / alpha;
    let regime = if (kappa_mu - 1.0).abs() <= BOUNDARY_TOL {
        notes.push("boundary: overlap grows like log log t".into());
        Regime::Boundary
    } else if kappa_mu > 1.0 {
        Regime::Mild
    } else {
        Regime::Extreme
    };
    Ok(RegimeReport {
        alpha,
        beta,
        kappa_mu,
        kappa_2: 1.0 / alpha + 2.0,
        regime,
        extreme_family: regime != Regime::Mild,
        identity: false,
        notes,
    })
}

/// `a(t) = W1 / (W1 - W2)` along a binary logistic curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CwSeries {
    pub t: Vec<f64>,
    /// `NaN` where `W1 - W2` is not positive.
    pub a: Vec<f64>,
    /// Indices where `W1 - W2 <= 0` numerically.
    pub flagged: Vec<usize>,
    pub sup: f64,
    /// Value at the last unflagged time.
    pub plateau: f64,
}

/// Measures the ratio from the recorded `(m, B_1)` of every row.
pub fn measure_cw(curve: &LearningCurve, quadrature: &LogisticQuadrature) -> Result<CwSeries> {
    if curve.is_empty() {
        return Err(Error::invalid("curve", "empty"));
    }
    let mut out = CwSeries {
        t: Vec::with_capacity(curve.len()),
        a: Vec::with_capacity(curve.len()),
        flagged: Vec::new(),
        sup: f64::NEG_INFINITY,
        plateau: f64::NAN,
    };
    for (i, row) in curve.rows.iter().enumerate() {
        let b = *row
            .b
            .first()
            .ok_or_else(|| Error::invalid("curve", "rows carry no B column"))?;
        let w = quadrature.moments(row.m, b.max(0.0))?;
        let gap = w.w1 - w.w2;
        out.t.push(row.t);
        if gap > 0.0 {
            let a = w.w1 / gap;
            out.a.push(a);
            out.sup = out.sup.max(a);
            out.plateau = a;
        } else {
            out.a.push(f64::NAN);
            out.flagged.push(i);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailLaw {
    /// `log y` against `log t`.
    Power,
    /// `y` against `log t`.
    Log,
    /// Mean level and largest deviation.
    Const,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub law: TailLaw,
    /// Slope for `power` and `log`, mean for `const`.
    pub value: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Largest absolute residual (in the fitted coordinates).
    pub max_deviation: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 10;

/// Least-squares fit of a tail law to `(t, y)` restricted to `window`.
pub fn fit_tail_points(t: &[f64], y: &[f64], window: (f64, f64), law: TailLaw) -> Result<TailFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Fit(format!("window [{lo}, {hi}] must satisfy 0 < t1 < t2")));
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} points in window, need at least {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    if law == TailLaw::Power && pts.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::Fit("power law needs positive values".into()));
    }
    let n = pts.len() as f64;
    if law == TailLaw::Const {
        let mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let max_deviation = pts.iter().map(|p| (p.1 - mean).abs()).fold(0.0, f64::max);
        return Ok(TailFit {
            law,
            value: mean,
            intercept: mean,
            r_squared: f64::NAN,
            max_deviation,
            points: pts.len(),
        });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = match law {
        TailLaw::Power => pts.iter().map(|p| p.1.ln()).collect(),
        _ => pts.iter().map(|p| p.1).collect(),
    };
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - intercept - slope * x);
    let ss_res: f64 = residuals.clone().map(|r| r * r).sum();
    let max_deviation = residuals.map(f64::abs).fold(0.0, f64::max);
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(TailFit {
        law,
        value: slope,
        intercept,
        r_squared,
        max_deviation,
        points: pts.len(),
    })
}

/// [`fit_tail_points`] on a named curve column.
pub fn fit_tail(
    curve: &LearningCurve,
    column: &str,
    window: (f64, f64),
    law: TailLaw,
) -> Result<TailFit> {
    let y = curve
        .column(column)
        .ok_or_else(|| Error::Fit(format!("curve has no column `{column}`")))?;
    fit_tail_points(&curve.times(), &y, window, law)
}

/// Sufficient step size for monotone square-loss decay:
/// `1 / max_i (tr K_i + |mu_i|^2) / d`.
///
/// For an isotropic centred model the scalar equation decays at rate
/// `gamma (2 - gamma)`, so this bound is conservative by a factor two there.
pub fn lr_threshold_mse(model: &SpectralMixture) -> Result<f64> {
    let d = model.dim() as f64;
    let worst = (0..model.num_classes())
        .map(|i| (model.trace(i) + model.mean_norm_sq(i)) / d)
        .fold(0.0, f64::max);
    if worst <= 0.0 {
        return Err(Error::invalid("model", "all eigenvalues and means are zero"));
    }
    Ok(1.0 / worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{CurveKind, CurveMeta, CurveRow};
    use crate::spectral::{build_identity, build_power_law};

    #[test]
    fn identity_kernel_is_exponential() {
        let model = build_identity(50, 1.5).unwrap();
        for x in [0.0, 0.3, 2.0] {
            let f = kernel_f_mu(&model, 0.7, x).unwrap();
            assert!((f - 1.5 * (-0.7 * x).exp()).abs() < 1e-12);
            let k = kernel_k2(&model, 0.7, x).unwrap();
            assert!((k - (-1.4 * x).exp()).abs() < 1e-12);
        }
        assert!((f_mu_l1_norm(&model, 0.5).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_kernels_match_integrals() {
        let model = build_power_law(10_000, &[1.0, 1.0], 0.0, 1.0).unwrap();
        let f = kernel_f_mu(&model, 1.0, 2.0).unwrap();
        let exact = (1.0 - (-2f64).exp()) / 2.0;
        assert!((f / exact - 1.0).abs() < 0.01);
        // int_0^1 y^2 e^{-2y} dy
        let exact = 0.25 - 1.25 * (-2f64).exp();
        let k = kernel_k2(&model, 1.0, 1.0).unwrap();
        assert!((k / exact - 1.0).abs() < 0.01);
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(1.2, 1.0).unwrap().regime, Regime::Mild);
        assert_eq!(classify_regime(1.5, 0.2).unwrap().regime, Regime::Extreme);
        // (0.2 + 1) / 1.2 sits exactly on the boundary, which belongs to the
        // polynomially decaying family.
        let edge = classify_regime(1.2, 0.2).unwrap();
        assert_eq!(edge.regime, Regime::Boundary);
        assert!(edge.is_extreme_family());
        let b = classify_regime(1.0, 0.0).unwrap();
        assert_eq!(b.regime, Regime::Boundary);
        assert!(b.extreme_family);
        assert!((b.kappa_2 - 3.0).abs() < 1e-15);
        let id = classify_regime(0.0, 1.0).unwrap();
        assert!(id.identity && id.regime == Regime::Mild);
        assert!(classify_regime(-1.0, 0.0).is_err());
    }

    #[test]
    fn cw_at_origin_is_two() {
        let mut curve = LearningCurve::new(CurveMeta::new(CurveKind::Ode));
        curve.rows.push(CurveRow {
            t: 0.0,
            loss: 2f64.ln(),
            m: 0.0,
            v: 0.0,
            b: vec![0.0, 0.0],
            blocks: None,
            align: 0.0,
        });
        let s = measure_cw(&curve, LogisticQuadrature::shared()).unwrap();
        assert!((s.a[0] - 2.0).abs() < 1e-14);
        assert_eq!(s.sup, s.plateau);
        assert!(s.flagged.is_empty());
    }

    #[test]
    fn fits_exact_laws() {
        let t: Vec<f64> = (0..40).map(|i| 10f64.powf(2.0 + i as f64 / 20.0)).collect();
        let l: Vec<f64> = t.iter().map(|t| 3.0 / t).collect();
        let fit = fit_tail_points(&t, &l, (1e2, 1e4), TailLaw::Power).unwrap();
        assert!((fit.value + 1.0).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let m: Vec<f64> = t.iter().map(|t| t.ln() + 0.3).collect();
        let fit = fit_tail_points(&t, &m, (1e2, 1e4), TailLaw::Log).unwrap();
        assert!((fit.value - 1.0).abs() < 1e-9 && (fit.intercept - 0.3).abs() < 1e-9);
        let c = fit_tail_points(&t, &vec![2.0; 40], (1e2, 1e4), TailLaw::Const).unwrap();
        assert_eq!((c.value, c.max_deviation), (2.0, 0.0));
    }

    #[test]
    fn fit_rejects_bad_input() {
        let t: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let y = vec![-1.0; 20];
        assert!(fit_tail_points(&t, &y, (1.0, 20.0), TailLaw::Power).is_err());
        assert!(fit_tail_points(&t, &y, (1.0, 5.0), TailLaw::Log).is_err());
    }

    #[test]
    fn thresholds() {
        let centred = SpectralMixture::new(vec![1.0], vec![vec![1.0; 10]], vec![vec![0.0; 10]]).unwrap();
        assert!((lr_threshold_mse(&centred).unwrap() - 1.0).abs() < 1e-15);
        let shifted = build_identity(10, 1.0).unwrap();
        assert!((lr_threshold_mse(&shifted).unwrap() - 1.0 / 1.1).abs() < 1e-14);
        let d = 20_000;
        let spectrum = (1..=d).map(|r| r as f64 / d as f64).collect();
        let pl = SpectralMixture::new(vec![1.0], vec![spectrum], vec![vec![0.0; d]]).unwrap();
        assert!((lr_threshold_mse(&pl).unwrap() - 2.0).abs() < 1e-3);
    }
}
