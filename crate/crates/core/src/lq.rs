//! Lq-spectra of frequency measures: the inflation word quantities `φ_k`, the bounds and closed
//! forms they give, entropies, the concave conjugate and the multifractal spectrum.
//!
//! Structural conditions are supplied by the caller as a [`Regime`]; nothing here re-verifies
//! them.

use rayon::prelude::*;

use crate::conditions::{require_compatible, Regime};
use crate::distribution::{logsumexp, InflationLevels};
use crate::error::{Error, Result};
use crate::spectral::PerronData;
use crate::substitution::RandomSubstitution;

/// Evenly spaced grid `min, min + step, …, max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) || step <= 0.0 || max < min {
            return Err(Error::Domain("grid needs finite min ≤ max and step > 0"));
        }
        Ok(Grid { min, max, step })
    }

    /// The default range for emitted curves.
    pub fn curve_default() -> Self {
        Grid {
            min: -6.0,
            max: 6.0,
            step: 0.05,
        }
    }

    /// The default inner grid of the numeric conjugate.
    pub fn conjugate_default() -> Self {
        Grid {
            min: -60.0,
            max: 60.0,
            step: 0.01,
        }
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// What a [`SpectrumCurve`] holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    LowerBound(usize),
    UpperBound(usize),
    ClosedForm,
    Conjugate,
    Empirical(usize),
}

/// Sampled curve over `q` (or `α` for conjugates).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCurve {
    pub kind: CurveKind,
    /// Sorted by abscissa.
    pub samples: Vec<(f64, f64)>,
    pub lambda: f64,
    pub regime: Option<Regime>,
}

impl SpectrumCurve {
    /// Largest discrete second difference `g(x₋) − 2g(x) + g(x₊)`, normalised to unit spacing
    /// squared so that `≤ 0` means concave.
    pub fn max_second_difference(&self) -> f64 {
        self.samples
            .windows(3)
            .map(|w| {
                let (h1, h2) = (w[1].0 - w[0].0, w[2].0 - w[1].0);
                let slope_change = (w[2].1 - w[1].1) / h2 - (w[1].1 - w[0].1) / h1;
                slope_change * 0.5 * (h1 + h2)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_concave(&self, tol: f64) -> bool {
        self.samples.len() < 3 || self.max_second_difference() <= tol
    }

    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.samples.windows(2).all(|w| w[1].1 >= w[0].1 - tol)
    }

    pub fn is_sorted(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].0 < w[1].0)
    }
}

/// `φ₁(q) = −Σ_a R_a log Σ_{s∈ϑ(a)} P[ϑ_P(a) = s]^q`, read straight from the rules.
///
/// Distinct realisations of one letter are distinct words, so no aggregation is needed.
pub fn phi_one(subst: &RandomSubstitution, perron: &PerronData, q: f64) -> f64 {
    if q == 1.0 {
        return 0.0;
    }
    subst
        .letters()
        .map(|a| {
            let rules = subst.realisations(a);
            let log_sum = if q == 0.0 {
                (rules.len() as f64).ln()
            } else {
                logsumexp(rules.iter().map(|r| q * r.prob.ln()))
            };
            -perron.right[a as usize] * log_sum
        })
        .sum()
}

/// `φ_k(q) = −Σ_a R_a log Σ_{s∈ϑ^k(a)} P[ϑ_P^k(a) = s]^q`.
pub fn phi_k(
    subst: &RandomSubstitution,
    perron: &PerronData,
    k: usize,
    q: f64,
    cap: usize,
) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    let levels = InflationLevels::build(subst, k, cap)?;
    Ok(phi_from_levels(&levels, perron, k, q))
}

fn phi_from_levels(levels: &InflationLevels, perron: &PerronData, k: usize, q: f64) -> f64 {
    if q == 1.0 {
        return 0.0;
    }
    levels
        .letters_at(k)
        .iter()
        .zip(&perron.right)
        .map(|(d, r)| -r * d.log_sum_pow(q))
        .sum()
}

/// Bracket for `τ(q)` at inflation level `k`; no upper bound is available for `q < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauBounds {
    pub lower: f64,
    pub upper: Option<f64>,
}

impl TauBounds {
    fn from_phi(phi: f64, lambda_k: f64, q: f64) -> Self {
        let (a, b) = (phi / (lambda_k - 1.0), phi / lambda_k);
        if q < 0.0 {
            TauBounds {
                lower: a,
                upper: None,
            }
        } else if q <= 1.0 {
            TauBounds {
                lower: a,
                upper: Some(b),
            }
        } else {
            TauBounds {
                lower: b,
                upper: Some(a),
            }
        }
    }

    pub fn width(&self) -> Option<f64> {
        self.upper.map(|u| u - self.lower)
    }

    /// Whether `self` lies inside `outer`, up to `slack`.
    pub fn nested_in(&self, outer: &TauBounds, slack: f64) -> bool {
        let lower_ok = self.lower >= outer.lower - slack;
        let upper_ok = match (self.upper, outer.upper) {
            (Some(u), Some(v)) => u <= v + slack,
            (_, None) => true,
            (None, Some(_)) => false,
        };
        lower_ok && upper_ok
    }
}

/// Exact inflation word distributions up to a fixed level, with the Perron data needed to turn
/// them into `φ_k` and bounds on `τ`.
#[derive(Debug, Clone)]
pub struct InflationSpectrum {
    levels: InflationLevels,
    perron: PerronData,
}

impl InflationSpectrum {
    /// Requires compatibility, and primitivity through `perron`.
    pub fn new(
        subst: &RandomSubstitution,
        perron: &PerronData,
        k_max: usize,
        cap: usize,
    ) -> Result<Self> {
        require_compatible(subst)?;
        Ok(InflationSpectrum {
            levels: InflationLevels::build(subst, k_max, cap)?,
            perron: perron.clone(),
        })
    }

    pub fn depth(&self) -> usize {
        self.levels.depth()
    }

    pub fn perron(&self) -> &PerronData {
        &self.perron
    }

    pub fn levels(&self) -> &InflationLevels {
        &self.levels
    }

    pub fn phi(&self, k: usize, q: f64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        phi_from_levels(&self.levels, &self.perron, k, q)
    }

    /// `λ^{-k} φ_k(q)`.
    pub fn normalised_phi(&self, k: usize, q: f64) -> f64 {
        self.phi(k, q) / self.perron.lambda.powi(k as i32)
    }

    pub fn bounds(&self, k: usize, q: f64) -> TauBounds {
        TauBounds::from_phi(self.phi(k, q), self.perron.lambda.powi(k as i32), q)
    }

    /// Lower and upper bound curves at level `k` over `grid`; the upper curve stops at `q < 0`.
    pub fn bound_curves(&self, k: usize, grid: &Grid) -> (SpectrumCurve, SpectrumCurve) {
        let bounds: Vec<(f64, TauBounds)> = grid
            .points()
            .into_par_iter()
            .map(|q| (q, self.bounds(k, q)))
            .collect();
        let lower = SpectrumCurve {
            kind: CurveKind::LowerBound(k),
            samples: bounds.iter().map(|&(q, b)| (q, b.lower)).collect(),
            lambda: self.perron.lambda,
            regime: None,
        };
        let upper = SpectrumCurve {
            kind: CurveKind::UpperBound(k),
            samples: bounds
                .iter()
                .filter_map(|&(q, b)| b.upper.map(|u| (q, u)))
                .collect(),
            lambda: self.perron.lambda,
            regime: None,
        };
        (lower, upper)
    }
}

/// Bracket on `τ(q)` from level `k`.
pub fn tau_bounds(
    subst: &RandomSubstitution,
    perron: &PerronData,
    k: usize,
    q: f64,
    cap: usize,
) -> Result<TauBounds> {
    if k == 0 {
        return Err(Error::Domain("inflation level must be at least 1"));
    }
    Ok(InflationSpectrum::new(subst, perron, k, cap)?.bounds(k, q))
}

/// `τ(q) = φ₁(q)/(λ−1)` (recognisable, or disjoint set condition with `q ≥ 0`) or
/// `τ(q) = φ₁(q)/λ` (identical set condition with identical production probabilities, `q ≥ 0`).
#[derive(Debug, Clone)]
pub struct ClosedFormTau {
    regime: Regime,
    coefficient: f64,
    /// Per letter: Perron weight and log-probabilities of its realisations.
    letters: Vec<(f64, Vec<f64>)>,
    lambda: f64,
}

impl ClosedFormTau {
    pub fn new(subst: &RandomSubstitution, perron: &PerronData, regime: Regime) -> Result<Self> {
        let coefficient = match regime {
            Regime::Recognisable | Regime::Disjoint => 1.0 / (perron.lambda - 1.0),
            Regime::Identical => 1.0 / perron.lambda,
            Regime::BoundsOnly => {
                return Err(Error::ConditionNotEstablished(
                    "disjoint set, identical set or recognisability",
                ))
            }
        };
        let letters = subst
            .letters()
            .map(|a| {
                let logs = subst.realisations(a).iter().map(|r| r.prob.ln()).collect();
                (perron.right[a as usize], logs)
            })
            .collect();
        Ok(ClosedFormTau {
            regime,
            coefficient,
            letters,
            lambda: perron.lambda,
        })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `1/(λ−1)` or `1/λ`.
    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn check_q(&self, q: f64) -> Result<()> {
        if q < 0.0 && self.regime != Regime::Recognisable {
            return Err(Error::NegativeQWithoutRecognisability(q));
        }
        Ok(())
    }

    /// `τ(q)` without the domain check.
    fn value(&self, q: f64) -> f64 {
        if q == 1.0 {
            return 0.0;
        }
        let phi: f64 = self
            .letters
            .iter()
            .map(|(r, logs)| {
                let s = if q == 0.0 {
                    (logs.len() as f64).ln()
                } else {
                    logsumexp(logs.iter().map(|lp| q * lp))
                };
                -r * s
            })
            .sum();
        self.coefficient * phi
    }

    /// `τ′(q)`: the coefficient times `Σ_a R_a E_{Q_a}[−log P]` for the tilted `Q`.
    fn slope(&self, q: f64) -> f64 {
        let dphi: f64 = self
            .letters
            .iter()
            .map(|(r, logs)| {
                let norm = logsumexp(logs.iter().map(|lp| q * lp));
                let mean: f64 = logs.iter().map(|lp| -lp * (q * lp - norm).exp()).sum();
                r * mean
            })
            .sum();
        self.coefficient * dphi
    }

    pub fn tau(&self, q: f64) -> Result<f64> {
        self.check_q(q)?;
        Ok(self.value(q))
    }

    /// `α(q) = τ′(q)`.
    pub fn alpha(&self, q: f64) -> Result<f64> {
        self.check_q(q)?;
        Ok(self.slope(q))
    }

    /// `(α(q), qα(q) − τ(q))`, a point of the conjugate parametrised by `q`.
    pub fn conjugate_point(&self, q: f64) -> Result<(f64, f64)> {
        self.check_q(q)?;
        let a = self.slope(q);
        Ok((a, q * a - self.value(q)))
    }

    pub fn curve(&self, grid: &Grid) -> Result<SpectrumCurve> {
        let samples = grid
            .points()
            .into_par_iter()
            .map(|q| Ok((q, self.tau(q)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectrumCurve {
            kind: CurveKind::ClosedForm,
            samples,
            lambda: self.lambda,
            regime: Some(self.regime),
        })
    }

    /// Asymptotic slopes of `τ`, valid for the recognisable form only.
    pub fn alpha_range(&self) -> Result<AlphaRange> {
        if self.regime != Regime::Recognisable {
            return Err(Error::ConditionNotEstablished("recognisability"));
        }
        let (mut lo, mut hi) = (0.0, 0.0);
        let (mut f_lo, mut f_hi) = (0.0, 0.0);
        for (r, logs) in &self.letters {
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = logs.iter().copied().fold(f64::INFINITY, f64::min);
            let count = |x: f64| logs.iter().filter(|&&l| (l - x).abs() <= 1e-12).count() as f64;
            lo -= r * max;
            hi -= r * min;
            f_lo += r * count(max).ln();
            f_hi += r * count(min).ln();
        }
        let c = self.coefficient;
        Ok(AlphaRange {
            min: c * lo,
            max: c * hi,
            min_without_factor: lo,
            max_without_factor: hi,
            f_at_min: c * f_lo,
            f_at_max: c * f_hi,
        })
    }

    /// `q` with `α(q) = alpha` for `α_min < alpha < α_max`, by bisection on the decreasing `α`.
    pub fn q_for_alpha(&self, alpha: f64) -> Result<f64> {
        let range = self.alpha_range()?;
        if !(alpha > range.min && alpha < range.max) {
            return Err(Error::Domain("α must lie strictly inside (α_min, α_max)"));
        }
        let mut hi = 1.0;
        while self.slope(hi) > alpha {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Domain("α too close to α_min"));
            }
        }
        let mut lo = -1.0;
        while self.slope(lo) < alpha {
            lo *= 2.0;
            if lo < -1e6 {
                return Err(Error::Domain("α too close to α_max"));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.slope(mid) > alpha {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `τ*(α)` from the parametrisation; exact at the endpoints, `−∞` outside `[α_min, α_max]`.
    pub fn conjugate_at(&self, alpha: f64) -> Result<f64> {
        let range = self.alpha_range()?;
        let tol = 1e-12 * range.max.abs().max(1.0);
        if (range.max - range.min).abs() <= tol {
            return Ok(if (alpha - range.min).abs() <= tol {
                range.f_at_min
            } else {
                f64::NEG_INFINITY
            });
        }
        if (alpha - range.min).abs() <= tol {
            return Ok(range.f_at_min);
        }
        if (alpha - range.max).abs() <= tol {
            return Ok(range.f_at_max);
        }
        if alpha < range.min || alpha > range.max {
            return Ok(f64::NEG_INFINITY);
        }
        let q = self.q_for_alpha(alpha)?;
        Ok(q * alpha - self.value(q))
    }
}

/// Closed-form `τ(q)` under the regime the caller has established.
pub fn closed_form_tau(
    subst: &RandomSubstitution,
    perron: &PerronData,
    regime: Regime,
    q: f64,
) -> Result<f64> {
    ClosedFormTau::new(subst, perron, regime)?.tau(q)
}

/// Range of local dimensions, with the conjugate's values at the endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRange {
    /// `(1/(λ−1)) Σ_a R_a (−log max_s P[ϑ_P(a) = s])`.
    pub min: f64,
    /// `(1/(λ−1)) Σ_a R_a (−log min_s P[ϑ_P(a) = s])`.
    pub max: f64,
    /// `min` without the `1/(λ−1)` factor.
    pub min_without_factor: f64,
    /// `max` without the `1/(λ−1)` factor.
    pub max_without_factor: f64,
    /// `(1/(λ−1)) Σ_a R_a log #{s : P[ϑ_P(a) = s] maximal}`.
    pub f_at_min: f64,
    /// `(1/(λ−1)) Σ_a R_a log #{s : P[ϑ_P(a) = s] minimal}`.
    pub f_at_max: f64,
}

/// `α_min` and `α_max` for a recognisable substitution.
pub fn alpha_range(
    subst: &RandomSubstitution,
    perron: &PerronData,
    regime: Regime,
) -> Result<AlphaRange> {
    ClosedFormTau::new(subst, perron, regime)?.alpha_range()
}

/// `g*(α) = inf_q {qα − g(q)}` over `grid`, refined by golden-section search around the best
/// grid point.
///
/// A minimum at either end of the grid means the infimum is not attained inside it; this is
/// reported as `−∞`, the value of the conjugate outside the range of slopes of `g`.
pub fn concave_conjugate<F>(g: F, alpha: f64, grid: &Grid) -> f64
where
    F: Fn(f64) -> f64,
{
    let h = |q: f64| q * alpha - g(q);
    let n = grid.len();
    let (best, _) =
        (0..n)
            .map(|i| (i, h(grid.point(i))))
            .fold(
                (0, f64::INFINITY),
                |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
            );
    if best == 0 || best == n - 1 {
        return f64::NEG_INFINITY;
    }
    let (mut a, mut b) = (grid.point(best - 1), grid.point(best + 1));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut hc, mut hd) = (h(c), h(d));
    for _ in 0..80 {
        if hc < hd {
            b = d;
            d = c;
            hd = hc;
            c = b - ratio * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + ratio * (b - a);
            hd = h(d);
        }
    }
    h(0.5 * (a + b)).min(hc).min(hd)
}

/// `inf_i {q_i α − g_i}` over sampled points, with a parabola through the best three samples.
/// Endpoint minima give `−∞` as in [`concave_conjugate`].
pub fn concave_conjugate_of_samples(samples: &[(f64, f64)], alpha: f64) -> f64 {
    let h: Vec<f64> = samples.iter().map(|&(q, g)| q * alpha - g).collect();
    let Some((best, _)) = h.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)) else {
        return f64::NEG_INFINITY;
    };
    if best == 0 || best == h.len() - 1 {
        return f64::NEG_INFINITY;
    }
    let (x0, x1, x2) = (samples[best - 1].0, samples[best].0, samples[best + 1].0);
    let (y0, y1, y2) = (h[best - 1], h[best], h[best + 1]);
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if a <= 0.0 {
        return y1;
    }
    let c = y1 - a * x1 * x1 - b * x1;
    (c - b * b / (4.0 * a)).min(y1)
}

/// `f(α) = τ*(α)` on the points of `alphas` inside `[α_min, α_max]`.
pub fn multifractal_spectrum(closed: &ClosedFormTau, alphas: &[f64]) -> Result<SpectrumCurve> {
    let range = closed.alpha_range()?;
    let tol = 1e-12 * range.max.abs().max(1.0);
    let mut inside: Vec<f64> = alphas
        .iter()
        .copied()
        .filter(|&a| a >= range.min - tol && a <= range.max + tol)
        .collect();
    inside.sort_by(f64::total_cmp);
    inside.dedup();
    let samples = inside
        .into_par_iter()
        .map(|a| Ok((a, closed.conjugate_at(a)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumCurve {
        kind: CurveKind::Conjugate,
        samples,
        lambda: closed.lambda(),
        regime: Some(closed.regime()),
    })
}

/// `m` equally spaced points from `α_min` to `α_max`, endpoints included.
pub fn alpha_grid(range: &AlphaRange, m: usize) -> Vec<f64> {
    if m < 2 || range.max - range.min <= 1e-12 * range.max.abs().max(1.0) {
        return vec![range.min];
    }
    (0..m)
        .map(|i| range.min + (range.max - range.min) * i as f64 / (m - 1) as f64)
        .collect()
}

/// Sequence of approximants `s_k` (with `s_0 = 0`) and the extrapolated limit.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropySequence {
    /// `s_1, …, s_{k_max}`.
    pub approximants: Vec<f64>,
    /// `s_k + (s_k − s_{k−1})/(λ−1)`, exact when `s_k = C(1 − λ^{-k})`.
    pub limit_estimate: f64,
    /// Bracket on the limit from the level-`k_max` bounds, when one is available.
    pub bracket: Option<(f64, f64)>,
    /// Largest drop `s_{k−1} − s_k`; positive values break monotonicity.
    pub monotonicity_gap: f64,
}

impl EntropySequence {
    fn from_terms(terms: Vec<f64>, lambda: f64, bracket: Option<(f64, f64)>) -> Self {
        let k = terms.len();
        let last = terms[k - 1];
        let prev = if k >= 2 { terms[k - 2] } else { 0.0 };
        let monotonicity_gap = std::iter::once(0.0)
            .chain(terms.iter().copied())
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::NEG_INFINITY, f64::max);
        EntropySequence {
            limit_estimate: last + (last - prev) / (lambda - 1.0),
            approximants: terms,
            bracket,
            monotonicity_gap,
        }
    }

    pub fn last(&self) -> f64 {
        *self.approximants.last().expect("at least one level")
    }
}

/// `λ^{-k} Σ_a R_a log #ϑ^k(a)` for `k = 1..=k_max`, bracketed by the `q = 0` bounds at `k_max`.
pub fn topological_entropy(
    subst: &RandomSubstitution,
    perron: &PerronData,
    k_max: usize,
    cap: usize,
) -> Result<EntropySequence> {
    if k_max == 0 {
        return Err(Error::Domain("k_max must be at least 1"));
    }
    let levels = InflationLevels::build(subst, k_max, cap)?;
    let terms: Vec<f64> = (1..=k_max)
        .map(|k| -phi_from_levels(&levels, perron, k, 0.0) / perron.lambda.powi(k as i32))
        .collect();
    let lk = perron.lambda.powi(k_max as i32);
    let phi = phi_from_levels(&levels, perron, k_max, 0.0);
    let bracket = Some((-phi / lk, -phi / (lk - 1.0)));
    Ok(EntropySequence::from_terms(terms, perron.lambda, bracket))
}

/// `ρ_k/λ^k` with `ρ_k = −Σ_a R_a Σ_s P log P` over `ϑ^k(a)`, for `k = 1..=k_max`.
pub fn measure_entropy(
    subst: &RandomSubstitution,
    perron: &PerronData,
    k_max: usize,
    cap: usize,
) -> Result<EntropySequence> {
    if k_max == 0 {
        return Err(Error::Domain("k_max must be at least 1"));
    }
    let levels = InflationLevels::build(subst, k_max, cap)?;
    let terms: Vec<f64> = (1..=k_max)
        .map(|k| {
            let rho: f64 = levels
                .letters_at(k)
                .iter()
                .zip(&perron.right)
                .map(|(d, r)| r * d.entropy())
                .sum();
            rho / perron.lambda.powi(k as i32)
        })
        .collect();
    let lk = perron.lambda.powi(k_max as i32);
    let last = terms[k_max - 1];
    let bracket = Some((last, last * lk / (lk - 1.0)));
    Ok(EntropySequence::from_terms(terms, perron.lambda, bracket))
}

/// `P[ϑ_Q(a) = s] = P[ϑ_P(a) = s]^q e^{T_a(q)}` with `T_a(q) = −log Σ_s P[ϑ_P(a) = s]^q`.
pub fn tilted_probabilities(subst: &RandomSubstitution, q: f64) -> Result<RandomSubstitution> {
    if !q.is_finite() {
        return Err(Error::Domain("q must be finite"));
    }
    let probs: Vec<Vec<f64>> = subst
        .rules()
        .iter()
        .map(|row| {
            let logs: Vec<f64> = row.iter().map(|r| q * r.prob.ln()).collect();
            let norm = logsumexp(logs.iter().copied());
            let mut p: Vec<f64> = logs.iter().map(|l| (l - norm).exp()).collect();
            let drift: f64 = 1.0 - p.iter().sum::<f64>();
            if let Some(m) = p.iter_mut().max_by(|x, y| x.total_cmp(y)) {
                *m += drift;
            }
            p
        })
        .collect();
    subst.with_probabilities(&probs)
}

/// `H^{m,a}_{P,Q} = Σ_{v∈ϑ^m(a)} −P[ϑ_Q^m(a) = v] log P[ϑ_P^m(a) = v]` for every letter.
#[derive(Debug, Clone, PartialEq)]
pub struct RelEntropyVector {
    pub m: usize,
    pub h: Vec<f64>,
}

impl RelEntropyVector {
    /// `λ^{-m} H·R`.
    pub fn normalised(&self, perron: &PerronData) -> f64 {
        self.h
            .iter()
            .zip(&perron.right)
            .map(|(h, r)| h * r)
            .sum::<f64>()
            / perron.lambda.powi(self.m as i32)
    }
}

fn same_rules(p: &RandomSubstitution, q: &RandomSubstitution) -> bool {
    p.names() == q.names()
        && p.rules().len() == q.rules().len()
        && p.rules()
            .iter()
            .zip(q.rules())
            .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(r, s)| r.word == s.word))
}

/// [`RelEntropyVector`] at every level `1..=m_max`.
pub fn relative_entropy_vectors(
    p: &RandomSubstitution,
    q: &RandomSubstitution,
    m_max: usize,
    cap: usize,
) -> Result<Vec<RelEntropyVector>> {
    if !same_rules(p, q) {
        return Err(Error::Domain(
            "P and Q must be probabilities for the same set-valued substitution",
        ));
    }
    let lp = InflationLevels::build(p, m_max, cap)?;
    let lq = InflationLevels::build(q, m_max, cap)?;
    Ok((1..=m_max)
        .map(|m| RelEntropyVector {
            m,
            h: lp
                .letters_at(m)
                .iter()
                .zip(lq.letters_at(m))
                .map(|(dp, dq)| dp.cross_entropy(dq))
                .collect(),
        })
        .collect())
}

/// `H^m_{P,Q}` at level `m`.
pub fn relative_entropy_vector(
    p: &RandomSubstitution,
    q: &RandomSubstitution,
    m: usize,
    cap: usize,
) -> Result<RelEntropyVector> {
    if m == 0 {
        return Err(Error::Domain("level must be at least 1"));
    }
    Ok(relative_entropy_vectors(p, q, m, cap)?
        .pop()
        .expect("m ≥ 1"))
}

/// `(1/(λ−1)) H¹_{P,Q}·R`, the limit of `λ^{-m} H^m_{P,Q}·R` under the disjoint set condition.
pub fn relative_entropy_limit(
    p: &RandomSubstitution,
    q: &RandomSubstitution,
    perron: &PerronData,
) -> Result<f64> {
    let v = relative_entropy_vector(p, q, 1, usize::MAX)?;
    Ok(v.normalised(perron) * perron.lambda / (perron.lambda - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalogue;
    use crate::distribution::DEFAULT_CAP;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn perron(s: &RandomSubstitution) -> PerronData {
        PerronData::of(s).unwrap()
    }

    /// `Σ P^q` over every realisation path of `ϑ^k(a)`, merging equal words by hand.
    fn brute_phi(s: &RandomSubstitution, k: usize, q: f64) -> f64 {
        fn paths(
            s: &RandomSubstitution,
            word: Vec<u8>,
            k: usize,
            p: f64,
            out: &mut Vec<(Vec<u8>, f64)>,
        ) {
            if k == 0 {
                out.push((word, p));
                return;
            }
            let mut partial = vec![(Vec::new(), p)];
            for &a in &word {
                let mut next = Vec::new();
                for (w, pw) in &partial {
                    for r in s.realisations(a) {
                        let mut x: Vec<u8> = w.clone();
                        x.extend_from_slice(&r.word);
                        next.push((x, pw * r.prob));
                    }
                }
                partial = next;
            }
            for (w, pw) in partial {
                paths(s, w, k - 1, pw, out);
            }
        }
        let pd = perron(s);
        let mut total = 0.0;
        for a in s.letters() {
            let mut out = Vec::new();
            paths(s, vec![a], k, 1.0, &mut out);
            let mut merged: std::collections::BTreeMap<Vec<u8>, f64> = Default::default();
            for (w, p) in out {
                *merged.entry(w).or_default() += p;
            }
            let sum: f64 = merged.values().map(|p| p.powf(q)).sum();
            total -= pd.right[a as usize] * sum.ln();
        }
        total
    }

    #[test]
    fn phi_matches_brute_force() {
        for s in [
            catalogue::random_fibonacci(0.3),
            catalogue::period_doubling(0.4),
            catalogue::identical_images(0.2),
        ] {
            let pd = perron(&s);
            for k in 1..=3 {
                for q in [-1.5, 0.0, 0.5, 2.0, 3.0] {
                    let exact = phi_k(&s, &pd, k, q, DEFAULT_CAP).unwrap();
                    assert_abs_diff_eq!(exact, brute_phi(&s, k, q), epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn phi_examples() {
        let s = catalogue::random_fibonacci(0.5);
        let pd = perron(&s);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let expected = -(1.0 / golden) * 0.5f64.ln();
        assert_abs_diff_eq!(
            phi_k(&s, &pd, 1, 2.0, DEFAULT_CAP).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(phi_one(&s, &pd, 2.0), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.428389, epsilon = 1e-6);
        for k in 1..=4 {
            assert_abs_diff_eq!(
                phi_k(&s, &pd, k, 1.0, DEFAULT_CAP).unwrap(),
                0.0,
                epsilon = 1e-12
            );
        }
        let spec = InflationSpectrum::new(&s, &pd, 3, DEFAULT_CAP).unwrap();
        let levels = spec.levels();
        let direct: f64 = s
            .letters()
            .map(|a| -pd.right[a as usize] * (levels.level(3, a).len() as f64).ln())
            .sum();
        assert_abs_diff_eq!(spec.phi(3, 0.0), direct, epsilon = 1e-12);
    }

    #[test]
    fn bound_regimes() {
        let s = catalogue::period_doubling(0.5);
        let pd = perron(&s);
        let spec = InflationSpectrum::new(&s, &pd, 4, DEFAULT_CAP).unwrap();
        let b = spec.bounds(2, 1.0);
        assert_abs_diff_eq!(b.lower, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.upper.unwrap(), 0.0, epsilon = 1e-12);
        assert!(spec.bounds(3, -1.0).upper.is_none());
        let closed = 2.0 / 3.0 * 2f64.ln();
        let b = spec.bounds(1, 2.0);
        assert!(b.lower <= closed + 1e-12 && closed <= b.upper.unwrap() + 1e-12);
        assert!(matches!(
            tau_bounds(
                &catalogue::full_shift(0.1, 0.3),
                &perron(&catalogue::full_shift(0.1, 0.3)),
                1,
                2.0,
                DEFAULT_CAP
            ),
            Err(Error::NotCompatible { .. })
        ));
    }

    #[test]
    fn closed_forms() {
        let s17 = 17f64.sqrt();
        for p in [0.2, 0.4] {
            let s = catalogue::recognisable(p);
            let cf = ClosedFormTau::new(&s, &perron(&s), Regime::Recognisable).unwrap();
            for q in [-4.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0] {
                let expected = -(7.0 - s17) / 8.0 * (p.powf(q) + (1.0 - p).powf(q)).ln();
                assert_abs_diff_eq!(cf.tau(q).unwrap(), expected, epsilon = 1e-10);
            }
        }
        let s = catalogue::period_doubling(0.3);
        let pd = perron(&s);
        for q in [0.0, 0.5, 2.0] {
            let expected = -(2.0 / 3.0) * (0.3f64.powf(q) + 0.7f64.powf(q)).ln();
            assert_abs_diff_eq!(
                closed_form_tau(&s, &pd, Regime::Disjoint, q).unwrap(),
                expected,
                epsilon = 1e-10
            );
        }
        assert_eq!(
            closed_form_tau(&s, &pd, Regime::Disjoint, -1.0).unwrap_err(),
            Error::NegativeQWithoutRecognisability(-1.0)
        );
        assert!(matches!(
            closed_form_tau(&s, &pd, Regime::BoundsOnly, 1.0),
            Err(Error::ConditionNotEstablished(_))
        ));
        let s = catalogue::identical_images(0.3);
        let q = 2.5;
        let expected = -0.5 * (0.3f64.powf(q) + 0.7f64.powf(q)).ln();
        assert_abs_diff_eq!(
            closed_form_tau(&s, &perron(&s), Regime::Identical, q).unwrap(),
            expected,
            epsilon = 1e-10
        );
    }

    #[test]
    fn entropies() {
        let det = catalogue::deterministic_fibonacci();
        let pd = perron(&det);
        let top = topological_entropy(&det, &pd, 4, DEFAULT_CAP).unwrap();
        assert!(top.approximants.iter().all(|&x| x == 0.0));
        assert_eq!(
            measure_entropy(&det, &pd, 4, DEFAULT_CAP)
                .unwrap()
                .limit_estimate,
            0.0
        );

        let s = catalogue::three_letter(0.5, 0.5, 0.5);
        let top = topological_entropy(&s, &perron(&s), 3, DEFAULT_CAP).unwrap();
        assert_abs_diff_eq!(top.limit_estimate, 2f64.ln() / 2.0, epsilon = 1e-10);
        let (lo, hi) = top.bracket.unwrap();
        assert!(lo <= 2f64.ln() / 2.0 && 2f64.ln() / 2.0 <= hi + 1e-12);

        let s = catalogue::period_doubling(0.5);
        let pd = perron(&s);
        let h = measure_entropy(&s, &pd, 5, DEFAULT_CAP).unwrap();
        assert_abs_diff_eq!(h.limit_estimate, 2.0 / 3.0 * 2f64.ln(), epsilon = 1e-10);
        assert!(h.monotonicity_gap <= 0.0);

        let s = catalogue::recognisable(0.2);
        let h = measure_entropy(&s, &perron(&s), 4, DEFAULT_CAP).unwrap();
        let bern = -(0.2 * 0.2f64.ln() + 0.8 * 0.8f64.ln());
        assert_abs_diff_eq!(
            h.limit_estimate,
            (7.0 - 17f64.sqrt()) / 8.0 * bern,
            epsilon = 1e-10
        );
    }

    #[test]
    fn alpha_ranges() {
        let c = (7.0 - 17f64.sqrt()) / 8.0;
        let s = catalogue::recognisable(0.2);
        let pd = perron(&s);
        let r = alpha_range(&s, &pd, Regime::Recognisable).unwrap();
        assert_abs_diff_eq!(r.min, -c * 0.8f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.max, -c * 0.2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            r.max_without_factor * c / pd.right[0],
            r.max,
            epsilon = 1e-12
        );
        assert!(alpha_range(&s, &pd, Regime::Disjoint).is_err());

        let s = catalogue::three_letter(0.5, 0.5, 0.5);
        let r = alpha_range(&s, &perron(&s), Regime::Recognisable).unwrap();
        assert_abs_diff_eq!(r.min, 2f64.ln() / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.max, 2f64.ln() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn conjugates() {
        // τ(q) = s(q − 1) has conjugate s at s and −∞ elsewhere.
        let slope = 0.7;
        let tau = |q: f64| slope * (q - 1.0);
        let grid = Grid::conjugate_default();
        assert_eq!(
            concave_conjugate(tau, slope + 0.1, &grid),
            f64::NEG_INFINITY
        );
        assert_eq!(
            concave_conjugate(tau, slope - 0.1, &grid),
            f64::NEG_INFINITY
        );

        let s = catalogue::recognisable(0.5);
        let cf = ClosedFormTau::new(&s, &perron(&s), Regime::Recognisable).unwrap();
        let r = cf.alpha_range().unwrap();
        assert_abs_diff_eq!(r.min, r.max, epsilon = 1e-15);
        let htop = -cf.tau(0.0).unwrap();
        assert_abs_diff_eq!(cf.conjugate_at(htop).unwrap(), htop, epsilon = 1e-12);
        assert_eq!(cf.conjugate_at(htop + 0.01).unwrap(), f64::NEG_INFINITY);

        let s = catalogue::recognisable(0.2);
        let cf = ClosedFormTau::new(&s, &perron(&s), Regime::Recognisable).unwrap();
        let (a1, f1) = cf.conjugate_point(1.0).unwrap();
        assert_abs_diff_eq!(a1, f1, epsilon = 1e-14);
        let r = cf.alpha_range().unwrap();
        for i in 1..10 {
            let alpha = r.min + (r.max - r.min) * i as f64 / 10.0;
            let param = cf.conjugate_at(alpha).unwrap();
            let numeric = concave_conjugate(|q| cf.tau(q).unwrap(), alpha, &grid);
            assert_abs_diff_eq!(param, numeric, epsilon = 1e-8);
            let samples: Vec<(f64, f64)> = grid
                .points()
                .into_iter()
                .map(|q| (q, cf.tau(q).unwrap()))
                .collect();
            assert_abs_diff_eq!(
                concave_conjugate_of_samples(&samples, alpha),
                param,
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn spectrum_endpoints() {
        let s = catalogue::three_realisations(0.2);
        let pd = perron(&s);
        let cf = ClosedFormTau::new(&s, &pd, Regime::Recognisable).unwrap();
        let r = cf.alpha_range().unwrap();
        // Two realisations share the smallest probability p, so f(α_max) = (3/10) log 2.
        assert_abs_diff_eq!(r.f_at_max, 0.3 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.f_at_min, 0.0, epsilon = 1e-12);
        let near = r.max - 1e-7 * (r.max - r.min);
        assert_abs_diff_eq!(cf.conjugate_at(near).unwrap(), r.f_at_max, epsilon = 1e-4);
        let curve = multifractal_spectrum(&cf, &alpha_grid(&r, 41)).unwrap();
        assert_eq!(curve.samples.len(), 41);
        assert!(curve.is_concave(1e-9));
        let htop = -cf.tau(0.0).unwrap();
        let max = curve
            .samples
            .iter()
            .map(|s| s.1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max <= htop + 1e-12);
    }

    #[test]
    fn tilting() {
        let s = catalogue::recognisable(0.2);
        let q1 = tilted_probabilities(&s, 1.0).unwrap();
        for (x, y) in s.rules().iter().flatten().zip(q1.rules().iter().flatten()) {
            assert_abs_diff_eq!(x.prob, y.prob, epsilon = 1e-15);
        }
        let q0 = tilted_probabilities(&s, 0.0).unwrap();
        assert_abs_diff_eq!(q0.realisations(0)[0].prob, 0.5, epsilon = 1e-15);
        let q2 = tilted_probabilities(&s, 2.0).unwrap();
        assert_abs_diff_eq!(q2.realisations(0)[0].prob, 1.0 / 17.0, epsilon = 1e-15);
    }

    #[test]
    fn relative_entropies() {
        let s = catalogue::period_doubling(0.3);
        let pd = perron(&s);
        let h = measure_entropy(&s, &pd, 3, DEFAULT_CAP).unwrap();
        assert_abs_diff_eq!(
            relative_entropy_limit(&s, &s, &pd).unwrap(),
            h.limit_estimate,
            epsilon = 1e-10
        );
        let vs = relative_entropy_vectors(&s, &s, 3, DEFAULT_CAP).unwrap();
        for (v, t) in vs.iter().zip(&h.approximants) {
            assert_abs_diff_eq!(v.normalised(&pd), *t, epsilon = 1e-12);
        }
        let det = catalogue::deterministic_fibonacci();
        let v = relative_entropy_vector(&det, &det, 3, DEFAULT_CAP).unwrap();
        assert!(v.h.iter().all(|&x| x == 0.0));

        // Relative entropy against the tilted measure is the slope of τ.
        let s = catalogue::recognisable(0.2);
        let pd = perron(&s);
        let cf = ClosedFormTau::new(&s, &pd, Regime::Recognisable).unwrap();
        for q in [-1.0, 0.5, 2.0, 4.0] {
            let tilted = tilted_probabilities(&s, q).unwrap();
            let lim = relative_entropy_limit(&s, &tilted, &pd).unwrap();
            let h = 1e-5;
            let fd = (cf.tau(q + h).unwrap() - cf.tau(q - h).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(lim, fd, epsilon = 1e-8);
            assert_abs_diff_eq!(lim, cf.alpha(q).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn isc_ipp_is_exact_at_every_level() {
        let s = catalogue::identical_images(0.3);
        let pd = perron(&s);
        let spec = InflationSpectrum::new(&s, &pd, 5, DEFAULT_CAP).unwrap();
        for q in [0.0, 0.5, 2.0, 4.0] {
            let first = spec.normalised_phi(1, q);
            for k in 2..=5 {
                assert_abs_diff_eq!(spec.normalised_phi(k, q), first, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn grid_points() {
        let g = Grid::new(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 11);
        assert_abs_diff_eq!(g.points()[10], 1.0, epsilon = 1e-12);
        assert_eq!(Grid::curve_default().len(), 241);
        assert_eq!(Grid::conjugate_default().len(), 12001);
        assert!(Grid::new(1.0, 0.0, 0.1).is_err());
        assert!(Grid::new(0.0, 1.0, 0.0).is_err());
    }

    fn examples() -> Vec<RandomSubstitution> {
        vec![
            catalogue::random_fibonacci(0.3),
            catalogue::period_doubling(0.2),
            catalogue::recognisable(0.35),
            catalogue::identical_images(0.6),
            catalogue::three_letter(0.2, 0.5, 0.7),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn phi_vanishes_at_one_and_has_signs(which in 0usize..5, k in 1usize..4, q in -4.0f64..6.0) {
            let s = examples()[which].clone();
            let pd = perron(&s);
            let spec = InflationSpectrum::new(&s, &pd, k, DEFAULT_CAP).unwrap();
            prop_assert!(spec.phi(k, 1.0).abs() < 1e-12);
            let phi = spec.phi(k, q);
            if q >= 1.0 {
                prop_assert!(phi >= -1e-12);
            } else if q >= 0.0 {
                prop_assert!(phi <= 1e-12);
            }
        }

        #[test]
        fn normalised_phi_concave_nondecreasing(which in 0usize..5, k in 1usize..4, lo in -5.0f64..3.0) {
            let s = examples()[which].clone();
            let pd = perron(&s);
            let spec = InflationSpectrum::new(&s, &pd, k, DEFAULT_CAP).unwrap();
            let grid = Grid::new(lo, lo + 4.0, 0.1).unwrap();
            let curve = SpectrumCurve {
                kind: CurveKind::LowerBound(k),
                samples: grid.points().into_iter().map(|q| (q, spec.normalised_phi(k, q))).collect(),
                lambda: pd.lambda,
                regime: None,
            };
            prop_assert!(curve.is_sorted());
            prop_assert!(curve.is_concave(1e-9));
            prop_assert!(curve.is_nondecreasing(1e-12));
        }

        #[test]
        fn tilted_rows_are_distributions(which in 0usize..5, q in -10.0f64..10.0) {
            let s = examples()[which].clone();
            let t = tilted_probabilities(&s, q).unwrap();
            prop_assert!(t.validate().is_valid());
        }
    }

    #[test]
    fn monotone_in_k() {
        for s in examples() {
            let pd = perron(&s);
            let spec = (3..=5)
                .rev()
                .find_map(|k| InflationSpectrum::new(&s, &pd, k, DEFAULT_CAP).ok())
                .unwrap();
            let depth = spec.depth();
            for q in [2.0, 5.0] {
                for k in 1..depth {
                    let (a, b) = (spec.normalised_phi(k, q), spec.normalised_phi(k + 1, q));
                    assert!(b >= a - 1e-10, "{:?} q={q} k={k}: {a} then {b}", s.names());
                }
            }
            // For q < 0 the sequence decreases, as the disjoint-set value φ₁(1 − λ^{-k})/(λ−1) does.
            for q in [-2.0, 0.25, 0.5, 0.75] {
                for k in 1..depth {
                    let (a, b) = (spec.normalised_phi(k, q), spec.normalised_phi(k + 1, q));
                    assert!(b <= a + 1e-10, "{:?} q={q} k={k}: {a} then {b}", s.names());
                }
            }
        }
    }

    #[test]
    fn closed_form_inside_bounds_under_dsc() {
        for s in [
            catalogue::period_doubling(0.3),
            catalogue::recognisable(0.2),
        ] {
            let pd = perron(&s);
            let cf = ClosedFormTau::new(&s, &pd, Regime::Disjoint).unwrap();
            let spec = InflationSpectrum::new(&s, &pd, 4, DEFAULT_CAP).unwrap();
            for k in 1..=4 {
                for q in [0.0, 0.3, 0.8, 1.0, 1.5, 3.0, 6.0] {
                    let t = cf.tau(q).unwrap();
                    let b = spec.bounds(k, q);
                    assert!(
                        b.lower <= t + 1e-12 && t <= b.upper.unwrap() + 1e-12,
                        "k={k} q={q}"
                    );
                }
            }
            let h = 1e-5;
            let fd = (cf.tau(1.0 + h).unwrap() - cf.tau(1.0 - h).unwrap()) / (2.0 * h);
            let ent = measure_entropy(&s, &pd, 4, DEFAULT_CAP).unwrap();
            assert_abs_diff_eq!(fd, ent.limit_estimate, epsilon = 1e-6);
        }
    }
}
