//! Free additive convolution of Bernoulli laws via subordination.
//!
//! For block ratios `y_1, ..., y_k` the limiting spectral law of the block
//! correlation matrix is `μ = μ_1 ⊞ ... ⊞ μ_k` with `μ_t = y_t δ_1 +
//! (1-y_t) δ_0`. Its Stieltjes transform `m(z)` is characterized by
//! subordination functions `ω_t(z)` solving the coupled system
//!
//! ```text
//! Φ_t(ω, z) = (k-1) F_t(ω_t) - Σ_s ω_s + z = 0,    m(z) = m_{μ_t}(ω_t(z)),
//! ```
//!
//! where `F_t` is the reciprocal Stieltjes transform of `μ_t`. Because each
//! `F_t` is a rational function, `m` itself satisfies a scalar equation: with
//! `ℓ_t(m) = √((m+1)² - 4 y_t m)`,
//!
//! ```text
//! z(m) = -1/m + Σ_t (m + 1 - ℓ_t(m)) / (2m),
//! ω_t  = (m - 1 - ℓ_t(m)) / (2m).
//! ```
//!
//! [`solve_point`] inverts `z(m)` by a damped complex Newton iteration,
//! continued in decreasing `Im z` from a half-plane height where the seed
//! `m ≈ -1/z` is in the basin of attraction; the square-root branches are
//! tracked along the path. [`solve_newton_kd`] solves the `k`-dimensional
//! `Φ = 0` system directly and serves as an independent cross-check: it
//! never forms `z(m)` or a square root, so agreement between the two routes
//! validates both the branch tracking and the solved values.
//!
//! First and second `z`-derivatives of `m` and `ω_t` ([`derivatives`]) come
//! from analytic differentiation of `z(m)`; they feed the contour integrals
//! of the `asymptotics` module. The spectral density is recovered by
//! Stieltjes inversion ([`density_grid`]), and approximate support endpoints
//! by locating the critical points of `z(m)` on the real `m` axis
//! ([`support_interval`]).

use num_complex::Complex64;
use thiserror::Error;

use crate::measures::{self, f_recip, BernoulliMeasure, ComplexPoint};

/// Newton step size below which an iterate is accepted.
pub const STEP_TOL: f64 = 1e-12;
/// Acceptance threshold for the defect `max_t |Φ_t|`, relative to
/// `max(1, |z|)`: the defect sums terms of size `|z|`, so its floating-point
/// floor grows with the query point.
pub const RESIDUAL_TOL: f64 = 1e-10;

fn residual_gate(z: Complex64) -> f64 {
    RESIDUAL_TOL * z.norm().max(1.0)
}
/// Iteration cap for either solver at a single point.
pub const MAX_ITER: usize = 200;
/// Real-axis queries closer than this to the continuous support are refused.
pub const EDGE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Error)]
pub enum FreeconvError {
    #[error("ratio vector must be non-empty")]
    EmptyRatios,
    #[error("ratio y[{index}] = {y} outside the open interval (0, 1)")]
    InvalidRatio { index: usize, y: f64 },
    #[error("solver stalled at z = {z}: residual {residual:e} after {iterations} iterations")]
    NoConvergence {
        z: Complex64,
        residual: f64,
        iterations: usize,
        /// Best iterate reached; usable for diagnostics, not for results.
        best: Box<SubordinationSolution>,
    },
    #[error("subordination branch violated at z = {z}: Im ω[{index}] = {im_omega:e} < Im z")]
    BranchViolation { z: Complex64, index: usize, im_omega: f64 },
    #[error("Jacobian of the subordination system is singular at z = {z} (gap {gap:e})")]
    SingularJacobian { z: Complex64, gap: f64 },
    #[error("z = {z} is within {EDGE_MARGIN:e} of the support [{a}, {b}]; offset into the complex plane")]
    EdgeProximity { z: Complex64, a: f64, b: f64 },
    #[error("branch point nearby: |ℓ[{index}]| = {ell:e}; derivatives are unreliable here")]
    NearBranchPoint { index: usize, ell: f64 },
    #[error("derivative system degenerate at z = {z}: |D(m)| = {magnitude:e}")]
    DerivativeSingular { z: Complex64, magnitude: f64 },
    #[error("support detection failed: {reason}")]
    SupportDetection { reason: String },
    #[error(transparent)]
    Measure(#[from] measures::MeasureError),
}

/// Validated vector of block ratios `y_t ∈ (0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct YVector {
    y: Vec<f64>,
}

impl YVector {
    pub fn new(y: Vec<f64>) -> Result<Self, FreeconvError> {
        if y.is_empty() {
            return Err(FreeconvError::EmptyRatios);
        }
        for (index, &yt) in y.iter().enumerate() {
            if !yt.is_finite() || yt <= 0.0 || yt >= 1.0 {
                return Err(FreeconvError::InvalidRatio { index, y: yt });
            }
        }
        Ok(Self { y })
    }

    pub fn k(&self) -> usize {
        self.y.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.y
    }

    /// Aggregate ratio `Σ_t y_t`.
    pub fn total(&self) -> f64 {
        self.y.iter().sum()
    }
}

/// A solved subordination point: `m = m_μ(z)` and the `ω_t(z)`, together
/// with the achieved defect `max_t |Φ_t|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinationSolution {
    pub z: ComplexPoint,
    pub m: ComplexPoint,
    pub omega: Vec<ComplexPoint>,
    pub residual: f64,
}

/// Density samples of the continuous part, with the atom masses reported
/// out of band (they are never folded into the grid values).
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub values: Vec<f64>,
    /// Mass of the atom at each integer `0..=k`.
    pub atoms: Vec<f64>,
}

/// First- and second-order `z`-derivatives at a solved point. Second-order
/// entries are present only when requested with `order = 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub m_prime: ComplexPoint,
    pub omega_prime: Vec<ComplexPoint>,
    pub m_second: Option<ComplexPoint>,
    pub omega_second: Option<Vec<ComplexPoint>>,
}

/// Branch-tracked square roots `ℓ_t` and the current `m` iterate.
struct ScalarState {
    m: Complex64,
    ell: Vec<Complex64>,
}

impl ScalarState {
    fn seed(z: Complex64, k: usize) -> Self {
        ScalarState {
            m: -1.0 / z,
            ell: vec![Complex64::new(1.0, 0.0); k],
        }
    }

    /// Update every `ℓ_t` at the current `m`, choosing the square-root sign
    /// nearest the previous value so branches vary continuously along the
    /// continuation path.
    fn refresh_ell(&mut self, y: &[f64]) {
        let m = self.m;
        for (lt, &yt) in self.ell.iter_mut().zip(y) {
            let w = (m + 1.0) * (m + 1.0) - 4.0 * yt * m;
            let root = w.sqrt();
            *lt = if (root - *lt).norm() <= (-root - *lt).norm() { root } else { -root };
        }
    }

    /// `z(m)` and `D(m) = m² z'(m)` at the current iterate.
    fn zofm(&self, y: &[f64]) -> (Complex64, Complex64) {
        let m = self.m;
        let half = 0.5 / m;
        let mut z = -1.0 / m;
        let mut d = Complex64::new(1.0, 0.0);
        for (lt, &yt) in self.ell.iter().zip(y) {
            z += (m + 1.0 - lt) * half;
            let g = (m + 1.0 - 2.0 * yt * m) / lt;
            d -= 0.5 * (1.0 - g);
        }
        (z, d)
    }

    fn omegas(&self) -> Vec<Complex64> {
        let m = self.m;
        self.ell.iter().map(|lt| (m - 1.0 - lt) / (2.0 * m)).collect()
    }

    /// Newton iteration for `z(m) = z` from the current iterate.
    fn newton_at(&mut self, y: &[f64], z: Complex64) -> bool {
        let scale = 1.0 + z.norm();
        for _ in 0..MAX_ITER {
            self.refresh_ell(y);
            let (zv, d) = self.zofm(y);
            let f = zv - z;
            if f.norm() < 1e-14 * scale {
                return true;
            }
            let dzdm = d / (self.m * self.m);
            if !dzdm.is_finite() || dzdm.norm() < 1e-280 {
                return false;
            }
            let mut step = f / dzdm;
            // Trust region: never jump past the origin in one step, where
            // the branch bookkeeping would lose its footing.
            let cap = 0.5 * self.m.norm();
            if step.norm() > cap {
                step *= cap / step.norm();
            }
            self.m -= step;
            if !self.m.is_finite() {
                return false;
            }
            if step.norm() < STEP_TOL * self.m.norm().max(1.0) {
                self.refresh_ell(y);
                return true;
            }
        }
        false
    }
}

/// Sheet check for a continuation step: the Nevanlinna property of `m` and
/// the subordination ordering of every `ω_t`. Branch tracking can slip
/// where some `ℓ_t` passes near zero; a slipped sheet still satisfies the
/// defect equations, so this inequality is the only reliable detector.
fn on_subordination_sheet(state: &ScalarState, im_z: f64) -> bool {
    if state.m.im < -1e-12 {
        return false;
    }
    if im_z > 0.0 {
        // Slack scales with the height: omega is recovered through a
        // quadratic-root formula whose roundoff is proportional to |z|.
        let slack = 1e-12 * im_z.max(1.0);
        let m = state.m;
        for lt in &state.ell {
            let omega_im = ((m - 1.0 - lt) / (2.0 * m)).im;
            if omega_im < im_z - slack {
                return false;
            }
        }
    }
    true
}

/// Continuation from `Im z = 10 (1 + Σ y_t)` down to the query height.
/// Every accepted step must stay on the subordination sheet; a violation
/// restarts the descent with a finer step ratio. Returns the converged
/// state, or the best state on total failure.
fn continue_to(y: &[f64], z: Complex64) -> Result<ScalarState, ScalarState> {
    let y_total: f64 = y.iter().sum();
    let im_start = 10.0 * (1.0 + y_total);
    if z.im >= im_start {
        let mut state = ScalarState::seed(z, y.len());
        return if state.newton_at(y, z) { Ok(state) } else { Err(state) };
    }
    let floor = z.im.max(1e-8);
    let mut best: Option<ScalarState> = None;
    for ratio in [0.4, 0.7, 0.88, 0.96] {
        let z0 = Complex64::new(z.re, im_start);
        let mut state = ScalarState::seed(z0, y.len());
        if !state.newton_at(y, z0) {
            continue;
        }
        let mut im = im_start;
        let mut ok = true;
        while im > floor {
            im = (im * ratio).max(floor);
            if !state.newton_at(y, Complex64::new(z.re, im)) || !on_subordination_sheet(&state, im) {
                ok = false;
                break;
            }
        }
        if ok && state.newton_at(y, z) && on_subordination_sheet(&state, z.im) {
            return Ok(state);
        }
        best = Some(state);
    }
    Err(best.unwrap_or_else(|| ScalarState::seed(z, y.len())))
}

/// Defect `max_t |Φ_t|` of a candidate solution.
fn defect(y: &[f64], z: Complex64, omega: &[Complex64]) -> f64 {
    let k = y.len();
    let sum: Complex64 = omega.iter().sum();
    let mut worst = 0.0f64;
    for (&yt, &wt) in y.iter().zip(omega) {
        let ft = match f_recip(BernoulliMeasure { y: yt }, wt, 0) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        let phi = ((k as f64) - 1.0) * ft - sum + z;
        worst = worst.max(phi.norm());
    }
    worst
}

fn package(y: &[f64], z: Complex64, state: &ScalarState) -> SubordinationSolution {
    let omega = state.omegas();
    let residual = defect(y, z, &omega);
    SubordinationSolution { z, m: state.m, omega, residual }
}

fn conjugate_solution(sol: SubordinationSolution) -> SubordinationSolution {
    SubordinationSolution {
        z: sol.z.conj(),
        m: sol.m.conj(),
        omega: sol.omega.iter().map(|w| w.conj()).collect(),
        residual: sol.residual,
    }
}

/// Evaluate `m_μ(z)` and all subordination functions at one point.
///
/// `z` must have `Im z ≠ 0`, or be real and away from the continuous
/// support; real queries within [`EDGE_MARGIN`] of the support are refused.
/// Points in the lower half-plane are solved by conjugate symmetry.
///
/// The returned solution satisfies `residual <` [`RESIDUAL_TOL`] and the
/// subordination ordering `Im ω_t ≥ Im z` (up to 1e-12); violations are
/// reported as typed errors with the best iterate attached.
pub fn solve_point(y: &YVector, z: ComplexPoint) -> Result<SubordinationSolution, FreeconvError> {
    if z.im < 0.0 {
        return solve_point(y, z.conj()).map(conjugate_solution);
    }
    if z.im < EDGE_MARGIN && y.k() >= 2 {
        if let Ok((a, b)) = support_interval(y) {
            let dx = (a - z.re).max(z.re - b).max(0.0);
            if dx.hypot(z.im) < EDGE_MARGIN {
                return Err(FreeconvError::EdgeProximity { z, a, b });
            }
        }
    }
    solve_cold(y, z).map(|(sol, _)| sol)
}

/// Cold solve at one upper-half-plane point: scalar continuation, then a
/// polish on the defect system when the scalar route misses the gate.
/// Near a square-root branch point the scalar Newton pins `z(m) = z` to
/// machine precision while `m` is only determined to the square root of
/// that tolerance, which inflates the defect in the `ω` variables; Newton
/// on `Φ(ω)` itself recovers the lost digits from that iterate. Also
/// returns the scalar state for warm-starting when the route produced one.
fn solve_cold(
    y: &YVector,
    z: Complex64,
) -> Result<(SubordinationSolution, Option<ScalarState>), FreeconvError> {
    let ys = y.as_slice();
    match continue_to(ys, z) {
        Ok(state) => {
            let sol = package(ys, z, &state);
            if !sol.residual.is_finite() || sol.residual >= residual_gate(z) {
                if let Some(polished) = kd_polish(y, z, &sol) {
                    return Ok((polished, Some(state)));
                }
            }
            Ok((finish_solution(sol, z)?, Some(state)))
        }
        Err(best) => {
            let sol = package(ys, z, &best);
            match kd_polish(y, z, &sol) {
                Some(polished) => Ok((polished, None)),
                None => Err(FreeconvError::NoConvergence {
                    z,
                    residual: sol.residual,
                    iterations: MAX_ITER,
                    best: Box::new(sol),
                }),
            }
        }
    }
}

/// Rescue attempt for a scalar-route iterate whose defect misses the gate.
/// The polished solution must clear [`finish_solution`] and stay on the
/// Nevanlinna sheet (`Im m ≥ -1e-12`), matching the continuation's own
/// sheet test; anything else is discarded.
fn kd_polish(
    y: &YVector,
    z: Complex64,
    sol: &SubordinationSolution,
) -> Option<SubordinationSolution> {
    let polished = solve_newton_kd(y, z, &sol.omega).ok()?;
    (polished.m.im >= -1e-12).then_some(polished)
}

fn finish_solution(sol: SubordinationSolution, z: Complex64) -> Result<SubordinationSolution, FreeconvError> {
    if !sol.residual.is_finite() || sol.residual >= residual_gate(z) {
        let residual = sol.residual;
        return Err(FreeconvError::NoConvergence {
            z,
            residual,
            iterations: MAX_ITER,
            best: Box::new(sol),
        });
    }
    if z.im > 0.0 {
        let slack = 1e-12 * z.im.max(1.0);
        for (index, w) in sol.omega.iter().enumerate() {
            if w.im < z.im - slack {
                return Err(FreeconvError::BranchViolation { z, index, im_omega: w.im });
            }
        }
    }
    Ok(sol)
}

/// Solve the `k`-dimensional system `Φ(ω) = 0` by Newton's method from a
/// caller-supplied start. Kept deliberately square-root free so it shares
/// no branch logic with [`solve_point`]; used as that solver's oracle and
/// as its terminal polish near square-root branch points.
///
/// The Jacobian `(k-1) diag(F_t') - 𝟙𝟙ᵀ` is inverted in closed form via the
/// rank-one update formula; a singular update (`1 - Σ_t 1/((k-1) F_t')`
/// near zero) is reported as an error.
pub fn solve_newton_kd(
    y: &YVector,
    z: ComplexPoint,
    omega0: &[ComplexPoint],
) -> Result<SubordinationSolution, FreeconvError> {
    let ys = y.as_slice();
    let k = ys.len();
    assert_eq!(omega0.len(), k, "omega0 must supply one start per block");
    let mut omega = omega0.to_vec();
    let km1 = (k as f64) - 1.0;

    let mut residual = defect(ys, z, &omega);
    let target = residual_gate(z) * 1e-2;
    for iteration in 0..MAX_ITER {
        if residual < target {
            break;
        }
        let sum: Complex64 = omega.iter().sum();
        let mut phi = Vec::with_capacity(k);
        for (&yt, &wt) in ys.iter().zip(&omega) {
            phi.push(km1 * f_recip(BernoulliMeasure { y: yt }, wt, 0)? - sum + z);
        }
        let step: Vec<Complex64> = if k == 1 {
            // Φ_1 = z - ω_1; the Jacobian is -1.
            vec![phi[0]]
        } else {
            let mut dinv = Vec::with_capacity(k);
            for (&yt, &wt) in ys.iter().zip(&omega) {
                let d = km1 * f_recip(BernoulliMeasure { y: yt }, wt, 1)?;
                if d.norm() < 1e-14 {
                    return Err(FreeconvError::SingularJacobian { z, gap: d.norm() });
                }
                dinv.push(1.0 / d);
            }
            let gap = 1.0 - dinv.iter().sum::<Complex64>();
            if gap.norm() < 1e-12 {
                return Err(FreeconvError::SingularJacobian { z, gap: gap.norm() });
            }
            let s: Complex64 = phi.iter().zip(&dinv).map(|(p, di)| p * di).sum();
            // δ = -J⁻¹Φ with J = D - 𝟙𝟙ᵀ:
            // J⁻¹ = D⁻¹ + D⁻¹𝟙 𝟙ᵀD⁻¹ / (1 - 𝟙ᵀD⁻¹𝟙).
            phi.iter()
                .zip(&dinv)
                .map(|(p, di)| -(di * p + di * s / gap))
                .collect()
        };
        // Backtracking keeps the iteration inside the basin when the start
        // is far from the solution.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<Complex64> = omega.iter().zip(&step).map(|(w, s)| w + lambda * s).collect();
            let trial_res = defect(ys, z, &trial);
            if trial_res < residual || trial_res < target {
                omega = trial;
                residual = trial_res;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // Stagnation at the floating-point floor of the defect. The
            // 1e-2 headroom in `target` is ambition, not the contract:
            // an iterate under the public gate is converged.
            if residual < residual_gate(z) {
                break;
            }
            let m = bernoulli_m(ys[0], omega[0]);
            let best = SubordinationSolution { z, m, omega, residual };
            return Err(FreeconvError::NoConvergence {
                z,
                residual,
                iterations: iteration,
                best: Box::new(best),
            });
        }
    }
    let m = bernoulli_m(ys[0], omega[0]);
    let sol = SubordinationSolution { z, m, omega, residual };
    finish_solution(sol, z)
}

fn bernoulli_m(y: f64, w: Complex64) -> Complex64 {
    y / (1.0 - w) - (1.0 - y) / w
}

/// Analytic `z`-derivatives of `m` and every `ω_t` at a solved point.
///
/// The branch data is recovered algebraically from the solution itself
/// (`ℓ_t = m - 1 - 2 m ω_t`), so no square-root choice is made here. With
/// `g_t = (m + 1 - 2 y_t m)/ℓ_t` and `D = 1 - Σ_t (1 - g_t)/2`:
///
/// ```text
/// m'   = m² / D,                ω_t'  = (1 + g_t) / (2D),
/// m''  = m' (2mD - m²D') / D²,  ω_t'' = m' (g_t' D - (1 + g_t) D') / (2D²),
/// ```
///
/// where `g_t' = -4 y_t (1-y_t) m / ℓ_t³` and `D' = Σ_t g_t'/2` are
/// `m`-derivatives. Near a spectral edge `ℓ_t → 0` or `D → 0` and the
/// formulas blow up; such points are refused.
pub fn derivatives(
    sol: &SubordinationSolution,
    y: &YVector,
    order: u32,
) -> Result<DerivativeBundle, FreeconvError> {
    assert!(order == 1 || order == 2, "order must be 1 or 2");
    let ys = y.as_slice();
    let k = ys.len();
    assert_eq!(sol.omega.len(), k, "solution and ratio vector disagree on k");
    let m = sol.m;

    let mut ell = Vec::with_capacity(k);
    let mut g = Vec::with_capacity(k);
    let mut d = Complex64::new(1.0, 0.0);
    for (index, (&yt, &wt)) in ys.iter().zip(&sol.omega).enumerate() {
        let lt = m - 1.0 - 2.0 * m * wt;
        if lt.norm() < 1e-8 {
            return Err(FreeconvError::NearBranchPoint { index, ell: lt.norm() });
        }
        let gt = (m + 1.0 - 2.0 * yt * m) / lt;
        d -= 0.5 * (1.0 - gt);
        ell.push(lt);
        g.push(gt);
    }
    if d.norm() < 1e-12 {
        return Err(FreeconvError::DerivativeSingular { z: sol.z, magnitude: d.norm() });
    }

    let m_prime = m * m / d;
    let omega_prime: Vec<Complex64> = g.iter().map(|gt| (1.0 + gt) / (2.0 * d)).collect();
    if order == 1 {
        return Ok(DerivativeBundle { m_prime, omega_prime, m_second: None, omega_second: None });
    }

    let gp: Vec<Complex64> = ys
        .iter()
        .zip(&ell)
        .map(|(&yt, lt)| -4.0 * yt * (1.0 - yt) * m / (lt * lt * lt))
        .collect();
    let dp: Complex64 = gp.iter().sum::<Complex64>() * 0.5;
    let m_second = m_prime * (2.0 * m * d - m * m * dp) / (d * d);
    let omega_second: Vec<Complex64> = g
        .iter()
        .zip(&gp)
        .map(|(gt, gpt)| m_prime * (gpt * d - (1.0 + gt) * dp) / (2.0 * d * d))
        .collect();
    Ok(DerivativeBundle {
        m_prime,
        omega_prime,
        m_second: Some(m_second),
        omega_second: Some(omega_second),
    })
}

/// Warm-started solve across a sequence of nearby points (a density sweep
/// or a quadrature contour). Pointwise results match [`solve_point`]; the
/// previous solution seeds the next Newton call, with a cold restart on any
/// failure. Lower half-plane points are handled by conjugate symmetry.
pub fn solve_path(y: &YVector, zs: &[ComplexPoint]) -> Result<Vec<SubordinationSolution>, FreeconvError> {
    let ys = y.as_slice();
    let mut out = Vec::with_capacity(zs.len());
    let mut warm: Option<ScalarState> = None;
    for &z_raw in zs {
        let flip = z_raw.im < 0.0;
        let z = if flip { z_raw.conj() } else { z_raw };
        let mut solved = None;
        if let Some(state) = warm.as_mut() {
            if state.newton_at(ys, z) && on_subordination_sheet(state, z.im) {
                let sol = package(ys, z, state);
                if sol.residual < residual_gate(z) {
                    solved = Some(sol);
                }
            }
        }
        let sol = match solved {
            Some(sol) => finish_solution(sol, z)?,
            None => {
                let (sol, state) = solve_cold(y, z)?;
                warm = state;
                sol
            }
        };
        out.push(if flip { conjugate_solution(sol) } else { sol });
    }
    Ok(out)
}

/// Stieltjes inversion `ρ(x) ≈ Im m(x + iε)/π` over a sorted grid.
///
/// The atom at zero (mass `max(1 - Σ y_t, 0)`) is subtracted analytically
/// from each sample and reported out of band, so the returned values
/// approximate only the continuous part. Values are clamped to `[0, ∞)`.
pub fn density_grid(y: &YVector, xs: &[f64], eps: f64) -> Result<Density, FreeconvError> {
    assert!(eps > 0.0, "eps must be positive");
    let atoms = atom_masses(y);
    let zs: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(x, eps)).collect();
    let sols = solve_path(y, &zs)?;
    let values = sols
        .iter()
        .map(|sol| (continuous_transform(sol, &atoms).im / std::f64::consts::PI).max(0.0))
        .collect();
    Ok(Density { values, atoms })
}

/// Stieltjes transform of the continuous part: `m(z)` with every atom pole
/// subtracted analytically.
fn continuous_transform(sol: &SubordinationSolution, atoms: &[f64]) -> Complex64 {
    let mut out = sol.m;
    for (j, &mass) in atoms.iter().enumerate() {
        if mass > 0.0 {
            out += mass / (sol.z - j as f64);
        }
    }
    out
}

/// Mass of the atom of the limit law at each integer `0..=k`.
///
/// The law is a free sum of Bernoulli components, each carrying atoms of
/// mass `1 - y_t` at 0 and `y_t` at 1. An atom survives at `j` exactly
/// when some alignment of the component atoms summing to `j` has total
/// mass exceeding `k - 1`, and its mass is that excess:
/// `max(0, 1 - j + 2 S_j - Σ_t y_t)` with `S_j` the sum of the `j`
/// largest ratios (the best alignment takes the atom at 1 from the `j`
/// largest components).
pub fn atom_masses(y: &YVector) -> Vec<f64> {
    let mut sorted = y.as_slice().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    let mut prefix = 0.0;
    let mut masses = Vec::with_capacity(sorted.len() + 1);
    masses.push((1.0 - total).max(0.0));
    for (i, &yt) in sorted.iter().enumerate() {
        prefix += yt;
        let j = (i + 1) as f64;
        masses.push((1.0 - j + 2.0 * prefix - total).max(0.0));
    }
    masses
}

/// Real-`m` evaluation of `z(m)` and `D(m)` on a fixed square-root branch.
/// `(m+1)² - 4ym > 0` for every real `m` and `y ∈ (0,1)` (the discriminant
/// in `m` is `16y(y-1) < 0`), so `ℓ` is real; `sign = -1` selects the
/// second sheet, which carries the gap between the atom at zero and the
/// left spectral edge.
fn real_branch(y: &[f64], m: f64, sign: f64) -> (f64, f64) {
    let mut z = -1.0 / m;
    let mut d = 1.0;
    for &yt in y {
        let ell = sign * ((m + 1.0) * (m + 1.0) - 4.0 * yt * m).sqrt();
        z += (m + 1.0 - ell) / (2.0 * m);
        let g = (m + 1.0 - 2.0 * yt * m) / ell;
        d -= 0.5 * (1.0 - g);
    }
    (z, d)
}

fn bisect_root(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if (fmid > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-14 * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// First sign change of `f` along a geometric sweep from `start` (a value
/// with `f > 0`) in the direction `factor` scales; returns the refined root.
fn first_root_geometric(start: f64, factor: f64, limit: f64, mut f: impl FnMut(f64) -> f64) -> Option<f64> {
    let mut prev = start;
    if !(f(prev) > 0.0) {
        return None;
    }
    let mut cur = start * factor;
    while cur.abs() <= limit {
        if f(cur) <= 0.0 {
            return Some(bisect_root(prev, cur, f));
        }
        prev = cur;
        cur *= factor;
    }
    None
}

/// Approximate endpoints `[a, b]` of the continuous spectral support.
///
/// The spectral edges are critical points of `z(m)` for real `m`: the right
/// edge is the first zero of `D(m)` on the negative `m` axis (the sheet
/// reached from `z > b`), the left edge the first zero of the second-sheet
/// `D` coming up from `m = -∞` (the sheet carrying the gap above the atom)
/// when `Σ y_t < 1`, or of the first sheet on `m > 0` otherwise. A density
/// threshold scan backs the critical-point search up if either sweep fails.
/// Detected endpoints are numerical approximations, not exact values.
pub fn support_interval(y: &YVector) -> Result<(f64, f64), FreeconvError> {
    let ys = y.as_slice();
    if ys.len() == 1 {
        // A single whitened block has eigenvalues 0 and 1 only.
        return Ok((1.0, 1.0));
    }
    let y_total = y.total();

    let right = first_root_geometric(-1e-9, 1.1, 1e16, |m| real_branch(ys, m, 1.0).1)
        .map(|mb| real_branch(ys, mb, 1.0).0);
    let left = if y_total < 1.0 {
        // Second sheet, swept from very negative m toward 0.
        first_root_geometric(-1e16, 1.0 / 1.1, 1e17, |m| real_branch(ys, m, -1.0).1)
            .map(|ma| real_branch(ys, ma, -1.0).0)
    } else {
        match first_root_geometric(1e-9, 1.1, 1e16, |m| real_branch(ys, m, 1.0).1) {
            Some(ma) => Some(real_branch(ys, ma, 1.0).0),
            None => Some(0.0),
        }
    };

    match (left, right) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() && a < b => Ok((a, b)),
        _ => support_by_scan(y),
    }
}

/// Fallback edge detection: sweep the density at a small height and report
/// the outermost threshold crossings, with the atoms subtracted so they
/// cannot masquerade as continuous spectrum.
fn support_by_scan(y: &YVector) -> Result<(f64, f64), FreeconvError> {
    let k = y.k() as f64;
    let eps = 1e-4;
    let step = 1e-3 * (k + 1.0);
    let atoms = atom_masses(y);
    let n = ((k + 1.0) / step) as usize;
    let xs: Vec<f64> = (1..n).map(|i| i as f64 * step).collect();
    let sols = solve_path(y, &xs.iter().map(|&x| Complex64::new(x, eps)).collect::<Vec<_>>())?;
    let mut lo = None;
    let mut hi = None;
    for (x, sol) in xs.iter().zip(&sols) {
        let rho = continuous_transform(sol, &atoms).im / std::f64::consts::PI;
        if rho > 1e-2 {
            if lo.is_none() {
                lo = Some(x - step);
            }
            hi = Some(x + step);
        }
    }
    match (lo, hi) {
        (Some(a), Some(b)) if a < b => Ok((a.max(0.0), b)),
        _ => Err(FreeconvError::SupportDetection {
            reason: format!("no continuous spectrum found above threshold for k = {}", y.k()),
        }),
    }
}
