//! Penalty intensity and intraday trajectory models.
//!
//! The trading day is the interval `[0, T]`. Two ingredients shape every
//! equilibrium quantity:
//!
//! * the penalty intensity `κ(t) > 0`, which weights the quadratic penalty
//!   for being away from the target schedule, and
//! * the intraday trajectory `γ(t)`, strictly increasing with `γ(0) = 0`
//!   and `γ(T) = 1`, which describes the fraction of the trading target
//!   that should be in hand at time `t` (TWAP trading is `γ(t) = t/T`).
//!
//! From these the module provides the integral kernel
//!
//! ```text
//! G(t0, s) = ∫_{t0}^{T} κ(u) (γ(u) − γ(s)) du
//! ```
//!
//! its diagonal `F(t) = G(t, t)`, which is strictly decreasing with
//! `F(T) = 0`, and the inverse of `F`. All stop-trade times are obtained by
//! inverting `F` at cost-proportional thresholds, so `F` and its inverse are
//! evaluated in closed form whenever possible and otherwise by quadratures
//! that are exact for the piecewise-linear table models supported here.

use crate::error::{Error, Result};

/// Penalty intensity `κ`: either constant or a table of strictly positive
/// samples on a uniform grid over `[0, T]`, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaModel {
    Constant(f64),
    Table(Vec<f64>),
}

/// Intraday trajectory `γ`: either TWAP (`γ(t) = t/T`) or a table of samples
/// on a uniform grid over `[0, T]`, linearly interpolated. Table samples must
/// be strictly increasing with first value 0 and last value 1.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaModel {
    Twap,
    Table(Vec<f64>),
}

/// Default resolution of the precomputed `F` grid.
pub const DEFAULT_F_RESOLUTION: usize = 4097;

/// Refinement factor for the composite Simpson rule used on each knot
/// interval. Both integrands in this module are piecewise quadratic under
/// linear interpolation, so any even refinement makes Simpson exact; the
/// refinement only mops up rounding.
const SIMPSON_REFINEMENT: usize = 4;

/// Immutable model of `(T, κ, γ)` together with a precomputed `F` grid.
///
/// All evaluation methods are pure, so a model may be shared freely across
/// threads.
#[derive(Debug, Clone)]
pub struct TrajectoryModel {
    horizon: f64,
    kappa: KappaModel,
    gamma: GammaModel,
    /// Interior knot times where either table changes slope, sorted.
    knots: Vec<f64>,
    /// `F` sampled on `f_resolution` uniform points over `[0, T]`.
    f_grid: Vec<f64>,
    /// Cached `F(0)`.
    f0: f64,
}

impl TrajectoryModel {
    /// Builds a model with the default `F`-grid resolution, validating every
    /// structural requirement on `κ` and `γ`.
    pub fn new(horizon: f64, kappa: KappaModel, gamma: GammaModel) -> Result<Self> {
        Self::with_resolution(horizon, kappa, gamma, DEFAULT_F_RESOLUTION)
    }

    /// As [`TrajectoryModel::new`] with an explicit `F`-grid resolution.
    pub fn with_resolution(
        horizon: f64,
        kappa: KappaModel,
        gamma: GammaModel,
        f_resolution: usize,
    ) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::Domain(format!(
                "horizon must be a positive finite number, got {horizon}"
            )));
        }
        if f_resolution < 3 {
            return Err(Error::Domain(format!(
                "F grid resolution must be at least 3, got {f_resolution}"
            )));
        }
        match &kappa {
            KappaModel::Constant(v) => {
                if !v.is_finite() || *v <= 0.0 {
                    return Err(Error::Domain(format!(
                        "constant kappa must be positive and finite, got {v}"
                    )));
                }
            }
            KappaModel::Table(values) => {
                if values.len() < 2 {
                    return Err(Error::Domain(
                        "kappa table needs at least 2 samples".to_string(),
                    ));
                }
                for (i, v) in values.iter().enumerate() {
                    if !v.is_finite() || *v <= 0.0 {
                        return Err(Error::Domain(format!(
                            "kappa table sample {i} must be positive and finite, got {v}"
                        )));
                    }
                }
            }
        }
        match &gamma {
            GammaModel::Twap => {}
            GammaModel::Table(values) => {
                if values.len() < 2 {
                    return Err(Error::Domain(
                        "gamma table needs at least 2 samples".to_string(),
                    ));
                }
                if values[0] != 0.0 {
                    return Err(Error::Domain(format!(
                        "gamma table must start at 0, got {}",
                        values[0]
                    )));
                }
                if *values.last().unwrap() != 1.0 {
                    return Err(Error::Domain(format!(
                        "gamma table must end at 1, got {}",
                        values.last().unwrap()
                    )));
                }
                for (i, w) in values.windows(2).enumerate() {
                    if !w[1].is_finite() || w[1] <= w[0] {
                        return Err(Error::Domain(format!(
                            "gamma table must be strictly increasing, violated between samples {i} and {}",
                            i + 1
                        )));
                    }
                }
            }
        }

        let mut knots: Vec<f64> = Vec::new();
        if let KappaModel::Table(values) = &kappa {
            let n = values.len();
            knots.extend((1..n - 1).map(|i| horizon * i as f64 / (n - 1) as f64));
        }
        if let GammaModel::Table(values) = &gamma {
            let n = values.len();
            knots.extend((1..n - 1).map(|i| horizon * i as f64 / (n - 1) as f64));
        }
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * horizon);

        let mut model = TrajectoryModel {
            horizon,
            kappa,
            gamma,
            knots,
            f_grid: Vec::new(),
            f0: 0.0,
        };
        let mut f_grid = Vec::with_capacity(f_resolution);
        for i in 0..f_resolution {
            let t = horizon * i as f64 / (f_resolution - 1) as f64;
            f_grid.push(model.capital_f_unchecked(t));
        }
        // F must be strictly decreasing; a violation means the trajectory is
        // too flat somewhere for the construction to be well posed.
        for (i, w) in f_grid.windows(2).enumerate() {
            if !(w[0] > w[1]) {
                return Err(Error::Domain(format!(
                    "F is not strictly decreasing between grid points {i} and {} \
                     (values {} and {}); gamma increases too slowly there",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        model.f0 = f_grid[0];
        model.f_grid = f_grid;
        Ok(model)
    }

    /// The trading-day length `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The penalty intensity model.
    pub fn kappa(&self) -> &KappaModel {
        &self.kappa
    }

    /// The trajectory model.
    pub fn gamma(&self) -> &GammaModel {
        &self.gamma
    }

    /// Cached `F(0)`, the largest value `F` attains.
    pub fn f0(&self) -> f64 {
        self.f0
    }

    /// The precomputed `F` samples on a uniform grid over `[0, T]`.
    pub fn f_grid(&self) -> &[f64] {
        &self.f_grid
    }

    /// True when both `κ` and `γ` admit closed-form integrals (constant
    /// intensity with TWAP trajectory).
    pub fn is_closed_form(&self) -> bool {
        matches!(self.kappa, KappaModel::Constant(_)) && matches!(self.gamma, GammaModel::Twap)
    }

    /// Interior grid times of tabulated inputs — the points where κ or γ may
    /// kink. Quadratures split their panels here to stay exact.
    pub(crate) fn interior_knots(&self) -> &[f64] {
        &self.knots
    }

    pub(crate) fn check_time(&self, what: &str, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.horizon.max(1.0);
        if !t.is_finite() || t < -slack || t > self.horizon + slack {
            return Err(Error::Domain(format!(
                "{what} = {t} lies outside the trading day [0, {}]",
                self.horizon
            )));
        }
        Ok(t.clamp(0.0, self.horizon))
    }

    /// Evaluates `κ(t)`.
    pub fn kappa_at(&self, t: f64) -> f64 {
        match &self.kappa {
            KappaModel::Constant(v) => *v,
            KappaModel::Table(values) => interpolate(values, t, self.horizon),
        }
    }

    /// Evaluates `γ(t)`.
    pub fn gamma_at(&self, t: f64) -> f64 {
        match &self.gamma {
            GammaModel::Twap => t / self.horizon,
            GammaModel::Table(values) => interpolate(values, t, self.horizon),
        }
    }

    /// `∫_a^b κ(u) du`, exact for the supported models.
    pub fn integral_kappa(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match &self.kappa {
            KappaModel::Constant(v) => v * (b - a),
            KappaModel::Table(_) => self.simpson_over_knots(a, b, |u| self.kappa_at(u)),
        }
    }

    /// `∫_a^b κ(u) γ(u) du`, exact for the supported models.
    pub fn integral_kappa_gamma(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if self.is_closed_form() {
            let k = match self.kappa {
                KappaModel::Constant(v) => v,
                _ => unreachable!(),
            };
            return k * (b * b - a * a) / (2.0 * self.horizon);
        }
        self.simpson_over_knots(a, b, |u| self.kappa_at(u) * self.gamma_at(u))
    }

    /// The kernel `G(t0, s) = ∫_{t0}^{T} κ(u) (γ(u) − γ(s)) du`.
    pub fn kernel_g(&self, t0: f64, s: f64) -> Result<f64> {
        let t0 = self.check_time("t0", t0)?;
        let s = self.check_time("s", s)?;
        if let (KappaModel::Constant(k), GammaModel::Twap) = (&self.kappa, &self.gamma) {
            // ∫_{t0}^{T} κ (u − s)/T du = κ/(2T) · (T − t0)(T + t0 − 2s)
            let t = self.horizon;
            return Ok(k / (2.0 * t) * (t - t0) * (t + t0 - 2.0 * s));
        }
        let gs = self.gamma_at(s);
        Ok(self.simpson_over_knots(t0, self.horizon, |u| self.kappa_at(u) * (self.gamma_at(u) - gs)))
    }

    /// `F(t) = G(t, t)`, computed through an independent route from
    /// [`TrajectoryModel::kernel_g`] so the two can cross-check each other:
    /// the closed form uses the square `(T − t)²` directly, and the general
    /// case splits the integral as `∫κγ − γ(t)∫κ`.
    pub fn capital_f(&self, t: f64) -> Result<f64> {
        let t = self.check_time("t", t)?;
        Ok(self.capital_f_unchecked(t))
    }

    fn capital_f_unchecked(&self, t: f64) -> f64 {
        if let (KappaModel::Constant(k), GammaModel::Twap) = (&self.kappa, &self.gamma) {
            let t_minus = self.horizon - t;
            return k / (2.0 * self.horizon) * t_minus * t_minus;
        }
        self.integral_kappa_gamma(t, self.horizon) - self.gamma_at(t) * self.integral_kappa(t, self.horizon)
    }

    /// The smallest `t ∈ [0, T]` with `F(t) ≤ y`.
    ///
    /// Because `F` is strictly decreasing with `F(T) = 0`, the answer is `0`
    /// whenever `y ≥ F(0)`, `T` when `y = 0`, and otherwise the unique root of
    /// `F(t) = y`. The closed form is used when available; otherwise the root
    /// is bracketed by bisection on the exact evaluator (never the grid)
    /// until the bracket cannot shrink any further in floating point, which
    /// is far tighter than any tolerance used downstream.
    pub fn invert_f(&self, y: f64) -> Result<f64> {
        if !y.is_finite() || y < 0.0 {
            return Err(Error::Domain(format!(
                "cannot invert F at {y}; the target must be nonnegative"
            )));
        }
        if y >= self.f0 {
            return Ok(0.0);
        }
        if y == 0.0 {
            return Ok(self.horizon);
        }
        if let (KappaModel::Constant(k), GammaModel::Twap) = (&self.kappa, &self.gamma) {
            // F(t) = κ/(2T)(T − t)² = y  ⇒  t = T − √(2Ty/κ)
            let t = self.horizon - (2.0 * self.horizon * y / k).sqrt();
            return Ok(t.clamp(0.0, self.horizon));
        }
        // Bisection invariant: F(lo) > y and F(hi) ≤ y.
        let mut lo = 0.0_f64;
        let mut hi = self.horizon;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.capital_f_unchecked(mid) <= y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Composite Simpson rule on `[a, b]`, split at the interior table knots
    /// so each panel sees a single polynomial piece of the integrand.
    fn simpson_over_knots<FInt: Fn(f64) -> f64>(&self, a: f64, b: f64, f: FInt) -> f64 {
        debug_assert!(b >= a);
        let mut cuts: Vec<f64> = Vec::with_capacity(self.knots.len() + 2);
        cuts.push(a);
        for &k in &self.knots {
            if k > a && k < b {
                cuts.push(k);
            }
        }
        cuts.push(b);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += simpson_panel(w[0], w[1], &f);
        }
        total
    }
}

/// Composite Simpson rule with [`SIMPSON_REFINEMENT`] subintervals on one panel.
fn simpson_panel<FInt: Fn(f64) -> f64>(a: f64, b: f64, f: &FInt) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = SIMPSON_REFINEMENT;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += weight * f(a + h * i as f64);
    }
    sum * h / 3.0
}

/// Linear interpolation of uniform samples over `[0, horizon]`.
fn interpolate(values: &[f64], t: f64, horizon: f64) -> f64 {
    let n = values.len();
    let x = (t / horizon) * (n - 1) as f64;
    let i = (x.floor() as usize).min(n - 2);
    let frac = x - i as f64;
    values[i] + frac * (values[i + 1] - values[i])
}
