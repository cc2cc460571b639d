//! Scalar transforms of the reference measures.
//!
//! Three one-parameter families appear throughout the crate: the two-atom
//! Bernoulli law `y δ_1 + (1-y) δ_0` (the spectral law of a single whitened
//! block), the Marchenko-Pastur family in its mass-`y`-at-the-bulk
//! normalization (first moment `y`, atom `1-y` at zero when `y < 1`), and the
//! standard semicircle law. Each is exposed through its Stieltjes transform
//! `m(z) = ∫ (λ - z)^{-1} dμ(λ)` and, for the Bernoulli law, the reciprocal
//! transform `F(ω) = -1/m(ω)` with derivatives up to third order.
//!
//! All functions are pure closed forms. Derivatives are analytic; finite
//! differences are reserved for tests. Square-root branches are chosen so
//! every transform is Nevanlinna: it maps the upper half-plane into itself
//! and is conjugate-symmetric across the real axis.

use num_complex::Complex64;
use thiserror::Error;

/// A point of the complex spectral plane, `z = re + i*im`.
pub type ComplexPoint = Complex64;

/// Inputs closer than this to a pole or branch point raise a typed error.
/// Rationale: a silent `inf`/`nan` would corrupt downstream Newton steps.
pub const POLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("evaluation point {z} is within {POLE_TOL:e} of the pole at {pole}")]
    PoleAtAtom { z: Complex64, pole: f64 },
    #[error("argument {w} is within {POLE_TOL:e} of the singularity at 1-y = {pole}")]
    ReciprocalSingularity { w: Complex64, pole: f64 },
    #[error("derivative order {order} unsupported (max {max})")]
    UnsupportedOrder { order: u32, max: u32 },
    #[error("real point {x} lies inside the support [{a}, {b}]; offset into the upper half-plane to pick a branch")]
    BranchAmbiguity { x: f64, a: f64, b: f64 },
    #[error("atom weight {y} outside [0, 1)")]
    InvalidWeight { y: f64 },
}

/// Two-atom law `y δ_1 + (1-y) δ_0`.
///
/// The weight field is public so that degenerate endpoints (`y = 1`, a pure
/// atom at 1) can be built directly where a limit is being probed; `new`
/// enforces the working range `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliMeasure {
    pub y: f64,
}

impl BernoulliMeasure {
    pub fn new(y: f64) -> Result<Self, MeasureError> {
        if !(0.0..1.0).contains(&y) {
            return Err(MeasureError::InvalidWeight { y });
        }
        Ok(Self { y })
    }
}

/// Stieltjes transform of a Bernoulli measure:
/// `m(z) = y/(1-z) - (1-y)/z`.
///
/// Errors when `z` is within [`POLE_TOL`] of either atom.
pub fn bernoulli_stieltjes(mu: BernoulliMeasure, z: ComplexPoint) -> Result<ComplexPoint, MeasureError> {
    if z.norm() <= POLE_TOL {
        return Err(MeasureError::PoleAtAtom { z, pole: 0.0 });
    }
    if (z - 1.0).norm() <= POLE_TOL {
        return Err(MeasureError::PoleAtAtom { z, pole: 1.0 });
    }
    Ok(mu.y / (1.0 - z) - (1.0 - mu.y) / z)
}

/// Reciprocal Stieltjes transform of a Bernoulli measure and its
/// derivatives:
///
/// `F(ω) = ω - y + y(1-y)/(1-y-ω)`, and for `n ≥ 1`
/// `F^(n)(ω) = [n = 1] + y(1-y) n! / (1-y-ω)^{n+1}`.
///
/// `order` selects the derivative, `0..=3`. Errors when `ω` is within
/// [`POLE_TOL`] of the pole at `1-y`.
pub fn f_recip(mu: BernoulliMeasure, w: ComplexPoint, order: u32) -> Result<ComplexPoint, MeasureError> {
    let y = mu.y;
    let d = (1.0 - y) - w;
    if d.norm() <= POLE_TOL {
        return Err(MeasureError::ReciprocalSingularity { w, pole: 1.0 - y });
    }
    let c = y * (1.0 - y);
    match order {
        0 => Ok(w - y + c / d),
        1 => Ok(1.0 + c / (d * d)),
        2 => Ok(2.0 * c / (d * d * d)),
        3 => Ok(6.0 * c / (d * d * d * d)),
        _ => Err(MeasureError::UnsupportedOrder { order, max: 3 }),
    }
}

/// Support endpoints `(1 ∓ √y)²` of the Marchenko-Pastur bulk.
pub fn mp_edges(y: f64) -> (f64, f64) {
    let r = y.sqrt();
    ((1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r))
}

/// Square root with branch cut along `[a, b]` only: the product of
/// principal roots of the linear factors. Maps the upper half-plane into
/// itself and is positive real for `x > b`, negative real for real `x < a`.
fn split_sqrt(z: Complex64, a: f64, b: f64) -> Complex64 {
    (z - a).sqrt() * (z - b).sqrt()
}

/// Stieltjes transform of the Marchenko-Pastur law with ratio `y > 0`,
/// normalized so the first moment is `y` (mass `1-y` at zero when `y < 1`):
/// the Nevanlinna root of `1 + (z - y + 1) m + z m² = 0`, evaluated as
///
/// `m(z) = -2 / (z + 1 - y + √(z-a) √(z-b))`,   `a, b = (1 ∓ √y)²`.
///
/// `order = 1` returns `dm/dz = -m(1+m)/(√(z-a)√(z-b))` by implicit
/// differentiation of the quadratic.
///
/// Errors at the pole `z = 0` and for real `z` inside the bulk, where the
/// two quadratic roots are complex conjugates and neither is preferred;
/// callers wanting boundary densities must offset into the upper half-plane.
pub fn mp_stieltjes(y: f64, z: ComplexPoint, order: u32) -> Result<ComplexPoint, MeasureError> {
    if y < 0.0 {
        return Err(MeasureError::InvalidWeight { y });
    }
    if z.norm() <= POLE_TOL {
        return Err(MeasureError::PoleAtAtom { z, pole: 0.0 });
    }
    let (a, b) = mp_edges(y);
    if z.im == 0.0 && z.re > a - POLE_TOL && z.re < b + POLE_TOL {
        return Err(MeasureError::BranchAmbiguity { x: z.re, a, b });
    }
    let s = split_sqrt(z, a, b);
    let m = -2.0 / (z + 1.0 - y + s);
    match order {
        0 => Ok(m),
        1 => Ok(-m * (1.0 + m) / s),
        _ => Err(MeasureError::UnsupportedOrder { order, max: 1 }),
    }
}

/// Stieltjes transform of the standard semicircle law on `[-2, 2]`:
/// the Nevanlinna root of `1 + z m + m² = 0`,
///
/// `m(z) = (-z + √(z-2) √(z+2)) / 2`,
///
/// evaluated in the rationalized form `-2/(z + √(z-2) √(z+2))`, which is
/// free of cancellation for large `|z|`. Errors for real `z` inside
/// `[-2, 2]` where the branch is ambiguous.
pub fn semicircle_stieltjes(z: ComplexPoint) -> Result<ComplexPoint, MeasureError> {
    if z.im == 0.0 && z.re > -2.0 - POLE_TOL && z.re < 2.0 + POLE_TOL {
        return Err(MeasureError::BranchAmbiguity { x: z.re, a: -2.0, b: 2.0 });
    }
    Ok(-2.0 / (z + split_sqrt(z, -2.0, 2.0)))
}
