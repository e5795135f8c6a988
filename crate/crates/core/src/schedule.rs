//! Parameter schedule linking the data gap to the Fourier cutoff and the
//! Carleman parameter, the H⁻¹ frequency split, and the stability bounds.
//!
//! `δ = exp(-exp(Kλ̃^{1/L}))` underflows for every admissible input, so gaps
//! and thresholds are carried as natural logarithms throughout.

use crate::error::{invalid, Error, Result};
use crate::geometry::DomainGrid;
use crate::spectral::{k2, FourierField, SpectralBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    SmallGap,
    LargeGap,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::SmallGap => "small_gap",
            Regime::LargeGap => "large_gap",
        }
    }
}

/// Inputs of the schedule that do not depend on the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleConfig {
    pub n: usize,
    pub s: f64,
    pub theta: f64,
    pub radius: f64,
    pub m_bound: f64,
    pub lambda0: f64,
    /// `C₂·M` from the CGO calibration.
    pub c2m: f64,
    pub margin: f64,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n != 2 && self.n != 3 {
            return invalid(format!("dimension must be 2 or 3, got {}", self.n));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid(format!("theta must lie in (0,1), got {}", self.theta));
        }
        if !(self.s > self.n as f64 / 2.0) {
            return invalid(format!("s = {} gives eta <= 0; need s > n/2", self.s));
        }
        if self.s < (self.n / 2 + 1) as f64 {
            return invalid(format!("s = {} below [n/2]+1", self.s));
        }
        if !(self.radius >= 1.0) || !(self.m_bound > 0.0) || !(self.lambda0 >= 0.0) || !(self.c2m >= 0.0) {
            return invalid("R >= 1, M > 0, lambda0 >= 0 and C2M >= 0 are required");
        }
        if !(self.margin > 0.0) {
            return invalid("margin must be positive");
        }
        Ok(())
    }

    pub fn k_const(&self) -> f64 {
        let (n, t) = (self.n as f64, self.theta);
        n / t + 4.0 * n * (1.0 - t) / t + 5.0 * self.radius + (n + 2.0) / t
    }

    pub fn l_const(&self) -> f64 {
        let (n, t) = (self.n as f64, self.theta);
        (3.0 * n - 2.0 * n * t + 2.0) / t
    }

    /// `η` with `s = n/2 + 2η`.
    pub fn eta(&self) -> f64 {
        (self.s - self.n as f64 / 2.0) / 2.0
    }

    pub fn p(&self) -> f64 {
        (1.0 + self.s - self.eta()) / (1.0 + self.s)
    }

    pub fn lambda_tilde(&self) -> f64 {
        1f64.max(self.lambda0).max(self.c2m) * (1.0 + self.margin)
    }

    /// `ln δ = -exp(K λ̃^{1/L})`.
    pub fn ln_delta(&self) -> f64 {
        -(self.k_const() * self.lambda_tilde().powf(1.0 / self.l_const())).exp()
    }

    /// Stand-in for `|ln 0|`.
    pub fn ln_zero_cap(&self) -> f64 {
        700f64.max(2.0 * self.ln_delta().abs())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleParams {
    pub config: ScheduleConfig,
    pub omega: f64,
    pub ln_gap: f64,
    pub lambda_tilde: f64,
    pub k: f64,
    pub l: f64,
    pub ln_delta: f64,
    pub rho: Option<f64>,
    pub lambda: Option<f64>,
    pub ln_lambda: Option<f64>,
    pub eta: f64,
    pub p: f64,
    pub regime: Regime,
    /// Set when a zero gap was replaced by the cap.
    pub capped: bool,
}

/// `ln g`, with `-∞` for a zero gap.
pub fn ln_gap(gap: f64) -> f64 {
    if gap > 0.0 {
        gap.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn link(name: &str, ok: bool, detail: String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::ScheduleInvariant {
            link: name.into(),
            detail,
        })
    }
}

/// Builds the schedule for one frequency and gap and checks every link of
/// the chain `ρ ≥ λ̃^{1/L}`, `λ ≥ ρ^L ≥ λ̃ ≥ λ₀`, `ρ ≤ λ ≤ 2(λ²+ω²)`,
/// `(ω²+2λ²)^{1/2} > C₂M`.
pub fn schedule_params(omega: f64, ln_gap: f64, cfg: &ScheduleConfig) -> Result<ScheduleParams> {
    cfg.validate()?;
    if !(omega > 1.0) {
        return invalid(format!("omega must exceed 1, got {omega}"));
    }
    if ln_gap.is_nan() || ln_gap == f64::INFINITY {
        return invalid("gap must be finite and non-negative");
    }
    let (k, l) = (cfg.k_const(), cfg.l_const());
    let lt = cfg.lambda_tilde();
    let ln_delta = cfg.ln_delta();
    let regime = if ln_gap < ln_delta { Regime::SmallGap } else { Regime::LargeGap };
    let mut params = ScheduleParams {
        config: *cfg,
        omega,
        ln_gap,
        lambda_tilde: lt,
        k,
        l,
        ln_delta,
        rho: None,
        lambda: None,
        ln_lambda: None,
        eta: cfg.eta(),
        p: cfg.p(),
        regime,
        capped: false,
    };
    link("L >= 1", l >= 1.0, format!("L = {l}"))?;
    link("delta < 1", ln_delta < 0.0, format!("ln delta = {ln_delta}"))?;
    if regime == Regime::LargeGap {
        return Ok(params);
    }
    let (abs_ln, capped) = if ln_gap == f64::NEG_INFINITY {
        (cfg.ln_zero_cap(), true)
    } else {
        (ln_gap.abs(), false)
    };
    let n = cfg.n as f64;
    let t = cfg.theta;
    let rho = (omega.ln() + abs_ln).ln() / k;
    let ln_lambda = (n + 2.0) / t * rho.ln() + 2.0 * n * rho * (1.0 - t) / t;
    let lambda = ln_lambda.exp();
    params.rho = Some(rho);
    params.lambda = Some(lambda);
    params.ln_lambda = Some(ln_lambda);
    params.capped = capped;
    let tol = 1e-12;
    let root = lt.powf(1.0 / l);
    link("rho >= lambda_tilde^(1/L)", rho >= root * (1.0 - tol), format!("rho = {rho}, root = {root}"))?;
    link(
        "lambda >= rho^L",
        ln_lambda >= l * rho.ln() - tol * ln_lambda.abs().max(1.0),
        format!("ln lambda = {ln_lambda}, L ln rho = {}", l * rho.ln()),
    )?;
    link(
        "rho^L >= lambda_tilde",
        l * rho.ln() >= lt.ln() - tol * lt.ln().abs().max(1.0),
        format!("L ln rho = {}, ln lambda_tilde = {}", l * rho.ln(), lt.ln()),
    )?;
    link("lambda_tilde >= lambda0", lt >= cfg.lambda0, format!("{lt} < {}", cfg.lambda0))?;
    link("rho <= lambda", rho <= lambda, format!("rho = {rho}, lambda = {lambda}"))?;
    link(
        "lambda <= 2(lambda^2 + omega^2)",
        lambda <= 2.0 * (lambda * lambda + omega * omega),
        format!("lambda = {lambda}"),
    )?;
    let zeta = (omega * omega + 2.0 * lambda * lambda).sqrt();
    link("|zeta| > C2 M", zeta > cfg.c2m, format!("|zeta| = {zeta}, C2M = {}", cfg.c2m))?;
    Ok(params)
}

impl ScheduleParams {
    /// Checks `|ξ| ≤ ρ` for a tested mode.
    pub fn check_mode(&self, xi_norm: f64) -> Result<()> {
        match self.rho {
            Some(rho) => link("|xi| <= rho", xi_norm <= rho, format!("|xi| = {xi_norm}, rho = {rho}")),
            None => Err(Error::WrongRegime("modes are only scheduled for small gaps".into())),
        }
    }

    /// Outer exponent `θη/(2(1+s))`.
    pub fn outer_exponent(&self) -> f64 {
        self.config.theta * self.eta / (2.0 * (1.0 + self.config.s))
    }
}

/// Squared H⁻¹ norm split at `|ξ| = ρ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HMinus1Split {
    pub low: f64,
    pub high: f64,
    pub total: f64,
}

pub fn hminus1_split(field: &FourierField, rho: f64) -> HMinus1Split {
    let w = field.weight();
    let (mut low, mut high) = (0.0, 0.0);
    for (k, v) in field.k.iter().zip(&field.values) {
        let k2v = k2(k);
        let term = w * v.norm_sqr() / (1.0 + k2v);
        if k2v < rho * rho {
            low += term;
        } else {
            high += term;
        }
    }
    HMinus1Split {
        low,
        high,
        total: low + high,
    }
}

/// Transform of zero-extended cell values on the box of side `2R`.
pub fn fourier_field(grid: &DomainGrid, values: &[f64]) -> Result<FourierField> {
    if values.len() != grid.n_cells() {
        return Err(Error::GridMismatch("field length does not match grid".into()));
    }
    let b = SpectralBox::around(grid, 2.0 * grid.radius())?;
    Ok(b.transform(grid, values))
}

/// `‖g‖_{H⁻¹}` of zero-extended cell values.
pub fn hminus1_norm(grid: &DomainGrid, values: &[f64]) -> Result<f64> {
    Ok(hminus1_split(&fourier_field(grid, values)?, 0.0).total.sqrt())
}

/// `C·‖g‖_{H⁻¹}^{η/(1+s)}·M^p`.
pub fn interpolate_linfty(hminus1: f64, cfg: &ScheduleConfig, m: f64, c: f64) -> Result<f64> {
    if !(hminus1 >= 0.0) {
        return invalid("H^-1 norm must be non-negative");
    }
    let e = cfg.eta() / (1.0 + cfg.s);
    Ok(c * hminus1.powf(e) * m.powf(cfg.p()))
}

/// `ln[(2CM/δ^{θ/2}) g^{θ/2}]`.
pub fn ln_large_gap_bound(ln_delta: f64, m: f64, theta: f64, ln_gap: f64, c: f64) -> Result<f64> {
    if ln_gap < ln_delta {
        return Err(Error::WrongRegime("large-gap bound needs gap >= delta".into()));
    }
    Ok((2.0 * c * m).ln() + 0.5 * theta * (ln_gap - ln_delta))
}

/// Large-gap bound in linear scale; overflows to infinity for realistic `δ`.
pub fn large_gap_bound(ln_delta: f64, m: f64, theta: f64, ln_gap: f64, c: f64) -> Result<f64> {
    Ok(ln_large_gap_bound(ln_delta, m, theta, ln_gap, c)?.exp())
}

/// `ln` of `C[ω⁷g + ρ^{-2/θ}]^{θη/(2(1+s))}`.
pub fn ln_stability_rhs(params: &ScheduleParams, c: f64) -> Result<f64> {
    let rho = match (params.regime, params.rho) {
        (Regime::SmallGap, Some(rho)) => rho,
        _ => return Err(Error::WrongRegime("stability bound needs gap < delta".into())),
    };
    let first = (7.0 * params.omega.ln() + params.ln_gap).exp();
    let second = rho.powf(-2.0 / params.config.theta);
    Ok(c.ln() + params.outer_exponent() * (first + second).ln())
}

pub fn stability_rhs(params: &ScheduleParams, c: f64) -> Result<f64> {
    Ok(ln_stability_rhs(params, c)?.exp())
}

/// `ln` of the uncalibrated bound on `‖q₁-q₂‖_∞` in either regime. The
/// large-gap branch interpolates the large-gap H⁻¹ bound with `‖·‖_{H^s} ≤ 2M`.
pub fn ln_rhs_uncalibrated(params: &ScheduleParams) -> Result<f64> {
    match params.regime {
        Regime::SmallGap => ln_stability_rhs(params, 1.0),
        Regime::LargeGap => {
            let cfg = &params.config;
            let m2 = 2.0 * cfg.m_bound;
            let lgb = ln_large_gap_bound(params.ln_delta, cfg.m_bound, cfg.theta, params.ln_gap, 1.0)?;
            Ok(cfg.eta() / (1.0 + cfg.s) * lgb + cfg.p() * m2.ln())
        }
    }
}

/// `ln C` as the largest `ln(measured) - ln(uncalibrated bound)` over training points.
pub fn calibrate_global_constant(points: &[(f64, f64)]) -> Result<f64> {
    if points.is_empty() {
        return invalid("empty training family");
    }
    let ln_c = points
        .iter()
        .map(|(ln_meas, ln_rhs)| ln_meas - ln_rhs)
        .fold(f64::NEG_INFINITY, f64::max);
    // An all-zero family leaves C free; use 1.
    Ok(if ln_c.is_finite() { ln_c } else { 0.0 })
}

/// `ln(measured) ≤ ln C + ln(bound)`, with rounding slack for the
/// cancellation between the two large logarithms.
pub fn bound_holds(ln_meas: f64, ln_c: f64, ln_rhs: f64) -> bool {
    let tol = 16.0 * f64::EPSILON * (ln_c.abs() + ln_rhs.abs());
    ln_meas <= ln_c + ln_rhs + tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;
    use proptest::prelude::*;

    fn cfg() -> ScheduleConfig {
        ScheduleConfig {
            n: 3,
            s: 3.0,
            theta: 0.5,
            radius: 1.0,
            m_bound: 10.0,
            lambda0: 1.0,
            c2m: 0.5,
            margin: 0.1,
        }
    }

    #[test]
    fn schedule_constants_for_n3() {
        let c = cfg();
        assert_eq!(c.k_const(), 33.0);
        assert_eq!(c.l_const(), 16.0);
        assert_eq!(c.eta(), 0.75);
        assert_eq!(c.p(), 13.0 / 16.0);
        let p = schedule_params(2.0, -1e300, &c).unwrap();
        assert_eq!(p.outer_exponent(), 3.0 / 64.0);
        assert!((c.ln_delta() + (33.0 * 1.1f64.powf(1.0 / 16.0)).exp()).abs() < 1e-3);
    }

    #[test]
    fn regimes() {
        let c = cfg();
        let large = schedule_params(4.0, 0.01f64.ln(), &c).unwrap();
        assert_eq!(large.regime, Regime::LargeGap);
        assert!(large.rho.is_none() && large.lambda.is_none());
        assert!(stability_rhs(&large, 1.0).is_err());
        let zero = schedule_params(4.0, f64::NEG_INFINITY, &c).unwrap();
        assert_eq!(zero.regime, Regime::SmallGap);
        assert!(zero.capped);
        let bad = ScheduleConfig { s: 1.5, ..c };
        assert!(schedule_params(4.0, -1.0, &bad).is_err());
        assert!(schedule_params(4.0, -1.0, &ScheduleConfig { theta: 1.0, ..c }).is_err());
    }

    #[test]
    fn large_gap_branch() {
        let ld = -5.0;
        assert!((large_gap_bound(ld, 3.0, 0.5, ld, 1.0).unwrap() - 6.0).abs() < 1e-12);
        let four = large_gap_bound(ld, 3.0, 0.5, ld + 4f64.ln(), 1.0).unwrap();
        assert!((four - 6.0 * 4f64.powf(0.25)).abs() < 1e-12);
        assert!(large_gap_bound(ld, 3.0, 0.5, ld - 1.0, 1.0).is_err());
        let mut last = 0.0;
        for g in [-4.0, -2.0, 0.0, 2.0] {
            let b = large_gap_bound(ld, 3.0, 0.5, g, 1.0).unwrap();
            assert!(b > last);
            last = b;
        }
    }

    #[test]
    fn interpolation_power_law() {
        let c = cfg();
        assert_eq!(interpolate_linfty(0.0, &c, 5.0, 1.0).unwrap(), 0.0);
        let a = interpolate_linfty(0.3, &c, 5.0, 2.0).unwrap();
        let b = interpolate_linfty(0.6, &c, 5.0, 2.0).unwrap();
        assert!((b / a - 2f64.powf(0.75 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn rhs_limits_and_monotonicity() {
        let c = cfg();
        let mut last = f64::INFINITY;
        for e in [1e3, 1e6, 1e9, 1e12, 1e15, 1e18] {
            let p = schedule_params(3.0, -e, &c).unwrap();
            if p.regime != Regime::SmallGap {
                continue;
            }
            let r = stability_rhs(&p, 1.0).unwrap();
            assert!(r <= last);
            last = r;
        }
        for ln_g in [-1e15, -1e16] {
            let mut prev = f64::INFINITY;
            for omega in [2.0, 4.0, 8.0, 16.0, 32.0] {
                let p = schedule_params(omega, ln_g, &c).unwrap();
                let r = stability_rhs(&p, 1.0).unwrap();
                assert!(r <= prev, "omega {omega}");
                prev = r;
            }
        }
        let p = schedule_params(3.0, f64::NEG_INFINITY, &c).unwrap();
        let rho = p.rho.unwrap();
        let want = (p.outer_exponent() * (rho.powf(-4.0)).ln()).exp();
        assert!((stability_rhs(&p, 1.0).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn delta_independent_of_omega() {
        let c = cfg();
        let a = schedule_params(2.0, -1e300, &c).unwrap();
        let b = schedule_params(17.0, -1e300, &c).unwrap();
        assert_eq!(a.ln_delta, b.ln_delta);
    }

    #[test]
    fn hminus1_split_properties() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.125).unwrap();
        let vals: Vec<f64> = g
            .cell_centers()
            .iter()
            .map(|x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 0.02).exp() * (1.0 + 3.0 * x[1]))
            .collect();
        let f = fourier_field(&g, &vals).unwrap();
        let l2 = f.l2_squared();
        let l2_direct: f64 = vals.iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
        assert!((l2 - l2_direct).abs() < 1e-10 * l2);
        for rho in [2.0, 4.0, 8.0] {
            let s = hminus1_split(&f, rho);
            assert_eq!(s.total, s.low + s.high);
            assert!(s.high <= l2 / (rho * rho));
        }
        let all = hminus1_split(&f, 1e9);
        assert_eq!(all.high, 0.0);
        assert!((all.low - hminus1_norm(&g, &vals).unwrap().powi(2)).abs() < 1e-12 * all.low);
        // One lattice mode below the cutoff.
        let mut single = f.clone();
        single.values.iter_mut().for_each(|v| *v = num_complex::Complex64::new(0.0, 0.0));
        let idx = single.k.iter().position(|k| k2(k) > 0.0 && k2(k) < 16.0).unwrap();
        single.values[idx] = num_complex::Complex64::new(2.0, 1.0);
        let s = hminus1_split(&single, 4.0);
        assert_eq!(s.high, 0.0);
        assert!((s.low - single.weight() * 5.0 / (1.0 + k2(&single.k[idx]))).abs() < 1e-15);
    }

    #[test]
    fn calibration_and_check() {
        let pts = [(-3.0, 2.0), (-1.0, 1.5), (f64::NEG_INFINITY, 0.0)];
        let ln_c = calibrate_global_constant(&pts).unwrap();
        assert_eq!(ln_c, -2.5);
        assert!(pts.iter().all(|(m, r)| bound_holds(*m, ln_c, *r)));
        assert!(!bound_holds(0.0, ln_c, 2.0));
        assert_eq!(calibrate_global_constant(&[(f64::NEG_INFINITY, 1.0)]).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn chain_holds_for_small_gaps(omega in 1.01f64..100.0, extra in 0.0f64..50.0, theta in 0.2f64..0.8) {
            let c = ScheduleConfig { theta, ..cfg() };
            let ln_g = c.ln_delta() * (1.0 + extra) - 1.0;
            let p = schedule_params(omega, ln_g, &c).unwrap();
            prop_assert_eq!(p.regime, Regime::SmallGap);
            let rho = p.rho.unwrap();
            prop_assert!(p.check_mode(rho).is_ok());
            prop_assert!(p.check_mode(rho * 1.01).is_err());
        }
    }
}
