//! Asymptotic null mean and variance of linear spectral statistics, and
//! standardization of observed statistics into z-scores and p-values.
//!
//! Three routes produce the parameters:
//!
//! * closed forms for Schott's statistic (`f = x²`) and Wilks' statistic
//!   (`f = log x`),
//! * numerical contour integration of the general CLT built on the
//!   subordination solver, valid for any test function analytic around the
//!   spectral support,
//! * the same contour integrals with the limit law replaced by the
//!   Marchenko-Pastur approximation, cheap and accurate when every block
//!   is small relative to the sample count (`p_max² ≪ N`).
//!
//! Contours are counterclockwise rectangles. For log-type functions the
//! rectangle crosses the real axis at `ε ∈ (0, a)` and `M > b`, excluding
//! the origin and the branch cut on the negative axis; otherwise it
//! crosses at `-ε < 0`, enclosing the whole spectrum including any mass
//! at zero. Either rectangle is homotopic, in the integrand's domain of
//! analyticity, to the keyhole-shaped contours the theory is stated on,
//! so the integrals are identical by Cauchy's theorem.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{BlockError, BlockLayout, MeanMode, TestFunction};
use crate::freeconv::{derivatives, solve_path, support_interval, FreeconvError, YVector};
use crate::measures::{mp_edges, mp_stieltjes, MeasureError};
use crate::quadrature::{closed_polyline_nodes, rectangle};

/// Variances below this trigger the degenerate-variance warning and
/// suppress p-values: the normal approximation is unreliable there.
pub const DEGENERATE_VARIANCE: f64 = 1e-3;
/// Node doubling stops when every integral is stable to this, relative.
const QUAD_REL: f64 = 1e-8;
/// Hard failure threshold for quadrature stabilization.
const QUAD_FAIL: f64 = 1e-6;
/// Minimum distance between transform images of the two contours.
const SEPARATION_MIN: f64 = 1e-4;
/// Allowed imaginary leakage in integrals that must be real.
const REALNESS_TOL: f64 = 1e-8;
const NODE_START: usize = 32;
const NODE_CAP: usize = 512;

#[derive(Debug, Clone, Error)]
pub enum AsymptoticsError {
    #[error("Wilks-type statistics need aggregate ratio below 1, got {y_total:.6}")]
    Regime { y_total: f64 },
    #[error(
        "origin-avoiding contour impossible: aggregate ratio {y_total:.6} >= 1 \
         leaves no spectral gap at the origin"
    )]
    OriginContour { y_total: f64 },
    #[error("invalid contour geometry: {detail}")]
    ContourGeometry { detail: String },
    #[error("contour does not clear the spectral support: {detail}")]
    SupportClearance { detail: String },
    #[error("contour transform images too close: min distance {min:.3e}")]
    ContourSeparation { min: f64 },
    #[error("{integral} integral failed to stabilize: delta {delta:.3e} at {nodes} nodes/segment")]
    QuadratureNonConvergence {
        integral: &'static str,
        delta: f64,
        nodes: usize,
    },
    #[error("{integral} integral should be real, got imaginary part {imaginary:.3e}")]
    ConjugateAsymmetry {
        integral: &'static str,
        imaginary: f64,
    },
    #[error("computed variance {variance:.3e} is negative beyond roundoff")]
    NegativeVariance { variance: f64 },
    #[error("variance {variance:.3e} is too small to standardize against")]
    DegenerateVariance { variance: f64 },
    #[error(transparent)]
    Freeconv(#[from] FreeconvError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Block(#[from] BlockError),
}

/// How a set of LSS parameters was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodTag {
    #[serde(rename = "schott-closed")]
    SchottClosed,
    #[serde(rename = "wilks-closed")]
    WilksClosed,
    #[serde(rename = "contour-free")]
    ContourFree,
    #[serde(rename = "contour-mp")]
    ContourMp,
}

/// Null mean and variance of a linear spectral statistic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LssParams {
    pub mean: f64,
    pub variance: f64,
    pub method: MethodTag,
    pub mean_mode: MeanMode,
    pub warnings: Vec<String>,
}

impl LssParams {
    fn assemble(
        mean: f64,
        variance: f64,
        method: MethodTag,
        mean_mode: MeanMode,
        mut warnings: Vec<String>,
    ) -> Result<Self, AsymptoticsError> {
        // Deterministic statistics come out as variance -epsilon from
        // quadrature roundoff; anything more negative is a real defect.
        let variance = if variance < 0.0 {
            if variance < -1e-9 {
                return Err(AsymptoticsError::NegativeVariance { variance });
            }
            0.0
        } else {
            variance
        };
        if variance < DEGENERATE_VARIANCE {
            warnings.push(format!(
                "variance {variance:.3e} below {DEGENERATE_VARIANCE:.0e}: normal approximation unreliable"
            ));
        }
        Ok(Self {
            mean,
            variance,
            method,
            mean_mode,
            warnings,
        })
    }

    pub fn degenerate_variance(&self) -> bool {
        self.variance < DEGENERATE_VARIANCE
    }
}

/// Closed-form parameters for Schott's statistic `Tr B²`:
/// `a₁ = N_eff (Σ_{r≠s} y_r y_s + Σ_t y_t)` and
/// `b₁ = 4 Σ_{r≠s} y_r y_s (1-y_r)(1-y_s)`, with `b₁` treated as the
/// variance (standardization divides by `√b₁`).
pub fn schott_params(layout: &BlockLayout, mode: MeanMode) -> Result<LssParams, AsymptoticsError> {
    let y = layout.ratios(mode)?;
    let n_eff = layout.effective_samples(mode) as f64;
    let ys = y.as_slice();
    let sum: f64 = ys.iter().sum();
    let sum_sq: f64 = ys.iter().map(|v| v * v).sum();
    let off_diag = sum * sum - sum_sq;
    let mean = n_eff * (off_diag + sum);
    let u: Vec<f64> = ys.iter().map(|v| v * (1.0 - v)).collect();
    let u_sum: f64 = u.iter().sum();
    let u_sq: f64 = u.iter().map(|v| v * v).sum();
    let variance = 4.0 * (u_sum * u_sum - u_sq);
    LssParams::assemble(mean, variance, MethodTag::SchottClosed, mode, Vec::new())
}

/// Closed-form parameters for Wilks' statistic `Tr log B`:
/// `a₂ = Σ_t (N_eff - p_t - 1/2) log(1-y_t) - (N_eff - N_eff y - 1/2) log(1-y)`
/// and `b₂ = -2 log(1-y) + 2 Σ_t log(1-y_t)`. Requires `y < 1`.
pub fn wilks_params(layout: &BlockLayout, mode: MeanMode) -> Result<LssParams, AsymptoticsError> {
    let y = layout.ratios(mode)?;
    let n_eff = layout.effective_samples(mode) as f64;
    let ys = y.as_slice();
    let y_total = y.total();
    if y_total >= 1.0 {
        return Err(AsymptoticsError::Regime { y_total });
    }
    let mut mean = -(n_eff - n_eff * y_total - 0.5) * (1.0 - y_total).ln();
    for (&yt, &pt) in ys.iter().zip(layout.block_sizes()) {
        mean += (n_eff - pt as f64 - 0.5) * (1.0 - yt).ln();
    }
    let variance =
        -2.0 * (1.0 - y_total).ln() + 2.0 * ys.iter().map(|v| (1.0 - v).ln()).sum::<f64>();
    LssParams::assemble(mean, variance, MethodTag::WilksClosed, mode, Vec::new())
}

/// Which side of the origin a contour's left edge sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContourKind {
    /// Crosses the real axis at `ε > 0` and `M`; excludes the origin and
    /// the negative axis. Required for log-type test functions.
    #[serde(rename = "origin-avoiding")]
    OriginAvoiding,
    /// Crosses at `-ε < 0` and `M`; encloses the whole spectrum including
    /// mass at zero.
    #[serde(rename = "origin-enclosing")]
    OriginEnclosing,
}

/// A counterclockwise rectangular contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub kind: ContourKind,
    re_left: f64,
    re_right: f64,
    half_height: f64,
    nodes_per_segment: usize,
}

impl ContourSpec {
    pub fn new(
        kind: ContourKind,
        re_left: f64,
        re_right: f64,
        half_height: f64,
        nodes_per_segment: usize,
    ) -> Result<Self, AsymptoticsError> {
        let geometry_ok = match kind {
            ContourKind::OriginAvoiding => re_left > 0.0,
            ContourKind::OriginEnclosing => re_left < 0.0,
        };
        if !geometry_ok || re_right <= re_left.max(0.0) || half_height <= 0.0 || nodes_per_segment < 2
        {
            return Err(AsymptoticsError::ContourGeometry {
                detail: format!(
                    "kind {kind:?} with crossings [{re_left}, {re_right}], half height \
                     {half_height}, {nodes_per_segment} nodes/segment"
                ),
            });
        }
        Ok(Self {
            kind,
            re_left,
            re_right,
            half_height,
            nodes_per_segment,
        })
    }

    pub fn re_left(&self) -> f64 {
        self.re_left
    }

    pub fn re_right(&self) -> f64 {
        self.re_right
    }

    pub fn half_height(&self) -> f64 {
        self.half_height
    }

    pub fn nodes_per_segment(&self) -> usize {
        self.nodes_per_segment
    }

    /// Same rectangle with a different panel size.
    pub fn with_nodes(&self, nodes_per_segment: usize) -> Self {
        Self {
            nodes_per_segment,
            ..self.clone()
        }
    }

    /// Uniformly scaled rectangle (crossings and height), for perturbation
    /// studies; the caller must re-validate enclosure.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kind: self.kind,
            re_left: self.re_left * factor,
            re_right: self.re_right * factor,
            half_height: self.half_height * factor,
            nodes_per_segment: self.nodes_per_segment,
        }
    }

    pub fn vertices(&self) -> [Complex64; 4] {
        rectangle(self.re_left, self.re_right, self.half_height)
    }

    /// Quadrature polyline. For origin-avoiding contours the left side
    /// passes within `ε` of the origin, where the transform's pole at the
    /// zero-eigenvalue atom makes the integrand vary on scale `ε`; graded
    /// panels split at `±ε·4^j` keep per-panel Gauss rules geometric
    /// regardless of how small `ε` is.
    pub fn polyline(&self) -> Vec<Complex64> {
        let mut verts = vec![
            Complex64::new(self.re_left, -self.half_height),
            Complex64::new(self.re_right, -self.half_height),
            Complex64::new(self.re_right, self.half_height),
            Complex64::new(self.re_left, self.half_height),
        ];
        if self.kind == ContourKind::OriginAvoiding {
            let mut cuts = Vec::new();
            let mut c = 4.0 * self.re_left;
            while c < 0.75 * self.half_height {
                cuts.push(c);
                c *= 4.0;
            }
            for &c in cuts.iter().rev() {
                verts.push(Complex64::new(self.re_left, c));
            }
            for &c in &cuts {
                verts.push(Complex64::new(self.re_left, -c));
            }
        }
        verts
    }

    /// The rectangle must strictly enclose `[a, b]` while its crossings
    /// stay clear of the support (and, for the origin-avoiding kind, of
    /// the origin).
    fn validate_support(&self, a: f64, b: f64) -> Result<(), AsymptoticsError> {
        let clear = match self.kind {
            ContourKind::OriginAvoiding => self.re_left < a,
            ContourKind::OriginEnclosing => true,
        };
        if !clear || self.re_right <= b {
            return Err(AsymptoticsError::SupportClearance {
                detail: format!(
                    "crossings [{}, {}] against support [{a:.6}, {b:.6}]",
                    self.re_left, self.re_right
                ),
            });
        }
        Ok(())
    }
}

fn validate_nested(outer: &ContourSpec, inner: &ContourSpec) -> Result<(), AsymptoticsError> {
    if outer.re_left < inner.re_left
        && outer.re_right > inner.re_right
        && outer.half_height > inner.half_height
    {
        Ok(())
    } else {
        Err(AsymptoticsError::ContourGeometry {
            detail: "second contour must strictly enclose the first".into(),
        })
    }
}

/// Contour kind demanded by a test function: log needs to skirt its branch
/// cut; everything else encloses the origin.
pub fn contour_kind_for(f: &TestFunction) -> ContourKind {
    match f {
        TestFunction::Log => ContourKind::OriginAvoiding,
        _ => ContourKind::OriginEnclosing,
    }
}

/// Build the nested contour pair for a layout and test function. The inner
/// contour crosses at `ε₁ = a/3` (origin-avoiding) and `M₁ = b + 1`; the
/// outer one at `ε₂ = ε₁/1.5` and `M₂ = b + 2` with 1.5× the height. The
/// enclosed interval covers both the free-convolution support and the
/// Marchenko-Pastur support so the same pair serves either engine.
pub fn build_contours(
    layout: &BlockLayout,
    f: &TestFunction,
    mode: MeanMode,
) -> Result<(ContourSpec, ContourSpec), AsymptoticsError> {
    let y = layout.ratios(mode)?;
    let (a_free, b_free) = support_interval(&y)?;
    let (a_mp, b_mp) = mp_edges(y.total());
    let a = a_free.min(a_mp);
    let b = b_free.max(b_mp);
    let kind = contour_kind_for(f);
    let y_total = layout.ratio_total(mode);
    if kind == ContourKind::OriginAvoiding && (y_total >= 1.0 || a <= 0.0) {
        return Err(AsymptoticsError::OriginContour { y_total });
    }

    let (m1, m2) = (b + 1.0, b + 2.0);
    let (h1, h2) = (1.0, 1.5);
    let (inner, outer) = match kind {
        ContourKind::OriginAvoiding => {
            let e1 = a / 3.0;
            (
                ContourSpec::new(kind, e1, m1, h1, NODE_START)?,
                ContourSpec::new(kind, e1 / 1.5, m2, h2, NODE_START)?,
            )
        }
        ContourKind::OriginEnclosing => {
            let e1 = (a / 3.0).max(0.3);
            (
                ContourSpec::new(kind, -e1, m1, h1, NODE_START)?,
                ContourSpec::new(kind, -1.5 * e1, m2, h2, NODE_START)?,
            )
        }
    };
    inner.validate_support(a, b)?;
    outer.validate_support(a, b)?;
    validate_nested(&outer, &inner)?;
    Ok((inner, outer))
}

fn f_complex(f: &TestFunction, z: Complex64) -> Complex64 {
    match f {
        TestFunction::Square => z * z,
        TestFunction::Log => z.ln(),
        TestFunction::Polynomial(coeffs) => coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c),
    }
}

/// Everything the integrands need at one quadrature node. `omega*` stay
/// empty on the Marchenko-Pastur route; `m2`/`omega2` are filled only when
/// second derivatives were requested.
struct NodeEval {
    z: Complex64,
    w: Complex64,
    fz: Complex64,
    m: Complex64,
    m1: Complex64,
    m2: Complex64,
    omega: Vec<Complex64>,
    omega1: Vec<Complex64>,
    omega2: Vec<Complex64>,
}

fn eval_free(
    y: &YVector,
    f: &TestFunction,
    spec: &ContourSpec,
    nodes_per_segment: usize,
    order: u32,
) -> Result<Vec<NodeEval>, AsymptoticsError> {
    let nodes = closed_polyline_nodes(&spec.polyline(), nodes_per_segment);
    let zs: Vec<Complex64> = nodes.iter().map(|p| p.0).collect();
    let sols = solve_path(y, &zs)?;
    let mut out = Vec::with_capacity(nodes.len());
    for (&(z, w), sol) in nodes.iter().zip(sols) {
        let d = derivatives(&sol, y, order)?;
        out.push(NodeEval {
            z,
            w,
            fz: f_complex(f, z),
            m: sol.m,
            m1: d.m_prime,
            m2: d.m_second.unwrap_or_default(),
            omega: sol.omega,
            omega1: d.omega_prime,
            omega2: d.omega_second.unwrap_or_default(),
        });
    }
    Ok(out)
}

fn eval_mp(
    y_total: f64,
    f: &TestFunction,
    spec: &ContourSpec,
    nodes_per_segment: usize,
) -> Result<Vec<NodeEval>, AsymptoticsError> {
    let nodes = closed_polyline_nodes(&spec.polyline(), nodes_per_segment);
    let mut out = Vec::with_capacity(nodes.len());
    for &(z, w) in &nodes {
        out.push(NodeEval {
            z,
            w,
            fz: f_complex(f, z),
            m: mp_stieltjes(y_total, z, 0)?,
            m1: mp_stieltjes(y_total, z, 1)?,
            m2: Complex64::default(),
            omega: Vec::new(),
            omega1: Vec::new(),
            omega2: Vec::new(),
        });
    }
    Ok(out)
}

fn check_separation(inner: &[NodeEval], outer: &[NodeEval]) -> Result<(), AsymptoticsError> {
    let mut min = f64::INFINITY;
    for a in inner {
        for b in outer {
            min = min.min((a.m - b.m).norm());
            for t in 0..a.omega.len() {
                min = min.min((a.omega[t] - b.omega[t]).norm());
            }
        }
    }
    if min < SEPARATION_MIN {
        Err(AsymptoticsError::ContourSeparation { min })
    } else {
        Ok(())
    }
}

struct Integrals {
    centering: Complex64,
    shift: Complex64,
    mean_correction: Complex64,
    variance: Complex64,
}

/// Assemble the three contour integrals from evaluated nodes: the
/// centering `-(N_eff/2πi) ∮ f m dz`, the mean shift
/// `pref · ∮ f · bracket dz`, the unknown-mean correction
/// `(1/4πi) ∮ f(z)/z dz`, and the variance double integral
/// `(-1/2π²) ∮∮ f(z₁) f(z₂) K(z₁, z₂) dz₂ dz₁`.
fn assemble(
    inner: &[NodeEval],
    outer: &[NodeEval],
    n_eff: f64,
    mean_pref: Complex64,
    bracket: impl Fn(&NodeEval) -> Complex64,
    kernel: impl Fn(&NodeEval, &NodeEval) -> Complex64,
) -> Integrals {
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let mut centering = Complex64::default();
    let mut shift = Complex64::default();
    let mut mean_correction = Complex64::default();
    let mut variance = Complex64::default();
    for a in inner {
        centering += a.w * a.fz * a.m;
        shift += a.w * a.fz * bracket(a);
        mean_correction += a.w * a.fz / a.z;
        let mut row = Complex64::default();
        for b in outer {
            row += b.w * b.fz * kernel(a, b);
        }
        variance += a.w * a.fz * row;
    }
    Integrals {
        centering: -n_eff / two_pi_i * centering,
        shift: mean_pref * shift,
        mean_correction: mean_correction / (2.0 * two_pi_i),
        variance: -variance / (2.0 * PI * PI),
    }
}

fn free_bracket(node: &NodeEval, k: f64) -> Complex64 {
    let mut b = Complex64::default();
    for (w2, w1) in node.omega2.iter().zip(&node.omega1) {
        b += w2 / w1;
    }
    b + (k - 1.0) * (2.0 * node.m1 / node.m - node.m2 / node.m1)
}

fn free_kernel(a: &NodeEval, b: &NodeEval, k: f64) -> Complex64 {
    let mut s = Complex64::default();
    for t in 0..a.omega.len() {
        let d = a.omega[t] - b.omega[t];
        s += a.omega1[t] * b.omega1[t] / (d * d);
    }
    let dz = a.z - b.z;
    s -= 1.0 / (dz * dz);
    let dm = a.m - b.m;
    s - (k - 1.0) * a.m1 * b.m1 / (dm * dm)
}

fn mp_bracket(node: &NodeEval, ys: &[f64], n_eff: f64, y_total: f64) -> Complex64 {
    let one_m = 1.0 + node.m;
    let cube = one_m * one_m * one_m;
    let mut s = Complex64::default();
    for &yt in ys {
        s -= n_eff * yt * yt / (1.0 - yt) * node.m * node.m1 / cube;
    }
    s + y_total * (node.m1 * node.m1 - node.m * node.m * node.m1) / (node.m * cube)
}

fn mp_kernel(a: &NodeEval, b: &NodeEval, y_total: f64) -> Complex64 {
    let dm = a.m - b.m;
    let dz = a.z - b.z;
    let pa = (1.0 + a.m) * (1.0 + a.m);
    let pb = (1.0 + b.m) * (1.0 + b.m);
    a.m1 * b.m1 / (dm * dm) - 1.0 / (dz * dz) - y_total * a.m1 * b.m1 / (pa * pb)
}

fn require_real(value: Complex64, integral: &'static str) -> Result<f64, AsymptoticsError> {
    if value.im.abs() > REALNESS_TOL * value.re.abs().max(1.0) {
        return Err(AsymptoticsError::ConjugateAsymmetry {
            integral,
            imaginary: value.im,
        });
    }
    Ok(value.re)
}

/// Converged real parts of the contour integrals: `mean = centering + shift`.
struct EngineOutcome {
    centering: f64,
    shift: f64,
    variance: f64,
}

fn run_engine(
    mode: MeanMode,
    n_eff: f64,
    mean_pref: Complex64,
    eval_inner: impl Fn(usize, u32) -> Result<Vec<NodeEval>, AsymptoticsError>,
    eval_outer: impl Fn(usize) -> Result<Vec<NodeEval>, AsymptoticsError>,
    bracket: impl Fn(&NodeEval) -> Complex64,
    kernel: impl Fn(&NodeEval, &NodeEval) -> Complex64,
) -> Result<EngineOutcome, AsymptoticsError> {
    let mut prev: Option<Integrals> = None;
    let mut n = NODE_START;
    loop {
        let inner = eval_inner(n, 2)?;
        let outer = eval_outer(n)?;
        if prev.is_none() {
            check_separation(&inner, &outer)?;
        }
        let cur = assemble(&inner, &outer, n_eff, mean_pref, &bracket, &kernel);
        if let Some(last) = &prev {
            let checks: [(&'static str, Complex64, Complex64); 4] = [
                ("centering", cur.centering, last.centering),
                ("mean-shift", cur.shift, last.shift),
                ("mean-correction", cur.mean_correction, last.mean_correction),
                ("variance", cur.variance, last.variance),
            ];
            let (worst, delta) = checks
                .iter()
                .map(|(name, c, l)| (*name, (c - l).norm() / c.norm().max(1.0)))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("non-empty checks");
            if delta <= QUAD_REL || (n >= NODE_CAP && delta <= QUAD_FAIL) {
                let centering = require_real(cur.centering, "centering")?;
                let mut shift = require_real(cur.shift, "mean-shift")?;
                if mode == MeanMode::Unknown {
                    shift += require_real(cur.mean_correction, "mean-correction")?;
                }
                let variance = require_real(cur.variance, "variance")?;
                return Ok(EngineOutcome {
                    centering,
                    shift,
                    variance,
                });
            }
            if n >= NODE_CAP {
                return Err(AsymptoticsError::QuadratureNonConvergence {
                    integral: worst,
                    delta,
                    nodes: n,
                });
            }
        }
        prev = Some(cur);
        n *= 2;
    }
}

fn free_outcome(
    layout: &BlockLayout,
    f: &TestFunction,
    mode: MeanMode,
    inner: &ContourSpec,
    outer: &ContourSpec,
) -> Result<EngineOutcome, AsymptoticsError> {
    let y = layout.ratios(mode)?;
    let (a_free, b_free) = support_interval(&y)?;
    inner.validate_support(a_free, b_free)?;
    outer.validate_support(a_free, b_free)?;
    validate_nested(outer, inner)?;
    let n_eff = layout.effective_samples(mode) as f64;
    let k = y.k() as f64;
    // a_f = -(1/4πi) ∮ f(z) [Σ_t ω_t''/ω_t' + (k-1)(2m'/m - m''/m')] dz.
    let mean_pref = -1.0 / Complex64::new(0.0, 4.0 * PI);
    run_engine(
        mode,
        n_eff,
        mean_pref,
        |n, order| eval_free(&y, f, inner, n, order),
        |n| eval_free(&y, f, outer, n, 1),
        |node| free_bracket(node, k),
        |a, b| free_kernel(a, b, k),
    )
}

/// LSS parameters from the general CLT, integrating over a caller-supplied
/// contour pair. `mean = N_eff ∫f dμ + a_f`; `variance = σ_f²`. Node
/// counts double until all integrals stabilize.
pub fn contour_lss_params_on(
    layout: &BlockLayout,
    f: &TestFunction,
    mode: MeanMode,
    inner: &ContourSpec,
    outer: &ContourSpec,
) -> Result<LssParams, AsymptoticsError> {
    let out = free_outcome(layout, f, mode, inner, outer)?;
    LssParams::assemble(
        out.centering + out.shift,
        out.variance,
        MethodTag::ContourFree,
        mode,
        Vec::new(),
    )
}

/// LSS parameters from the general CLT on automatically built contours.
pub fn contour_lss_params(
    layout: &BlockLayout,
    f: &TestFunction,
    mode: MeanMode,
) -> Result<LssParams, AsymptoticsError> {
    let (inner, outer) = build_contours(layout, f, mode)?;
    contour_lss_params_on(layout, f, mode, &inner, &outer)
}

/// The two components of the contour mean, `(N_eff ∫f dμ, a_f)`, where
/// `a_f` includes the unknown-mean correction when applicable.
pub fn contour_mean_split(
    layout: &BlockLayout,
    f: &TestFunction,
    mode: MeanMode,
) -> Result<(f64, f64), AsymptoticsError> {
    let (inner, outer) = build_contours(layout, f, mode)?;
    let out = free_outcome(layout, f, mode, &inner, &outer)?;
    Ok((out.centering, out.shift))
}

/// LSS parameters with the limit law approximated by the Marchenko-Pastur
/// law of the aggregate ratio. Valid when `p_max² ≪ N_eff`; a warning is
/// attached otherwise.
pub fn mp_lss_params(
    layout: &BlockLayout,
    f: &TestFunction,
    mode: MeanMode,
) -> Result<LssParams, AsymptoticsError> {
    let (inner, outer) = build_contours(layout, f, mode)?;
    let y = layout.ratios(mode)?;
    let ys = y.as_slice().to_vec();
    let y_total = y.total();
    let n_eff = layout.effective_samples(mode) as f64;
    let p_max = *layout.block_sizes().iter().max().expect("nonempty layout");
    let mut warnings = Vec::new();
    if (p_max * p_max) as f64 > n_eff {
        warnings.push(format!(
            "largest block {p_max} too big for the Marchenko-Pastur approximation \
             (needs p_max^2 << N_eff = {n_eff})"
        ));
    }
    // a_f = (1/2πi) ∮ f(z) [ -Σ_t (N y_t²/(1-y_t)) m m'/(1+m)³
    //                        + y (m'² - m² m')/(m (1+m)³) ] dz.
    let mean_pref = 1.0 / Complex64::new(0.0, 2.0 * PI);
    let out = run_engine(
        mode,
        n_eff,
        mean_pref,
        |n, _| eval_mp(y_total, f, &inner, n),
        |n| eval_mp(y_total, f, &outer, n),
        |node| mp_bracket(node, &ys, n_eff, y_total),
        |a, b| mp_kernel(a, b, y_total),
    )?;
    LssParams::assemble(
        out.centering + out.shift,
        out.variance,
        MethodTag::ContourMp,
        mode,
        warnings,
    )
}

/// Result of standardizing an observed statistic against null parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub z_score: f64,
    /// Two-sided normal p-value; absent when the variance is degenerate.
    pub p_value: Option<f64>,
    pub mean: f64,
    pub variance: f64,
    pub method: MethodTag,
    pub mean_mode: MeanMode,
    /// Fixed record of the standardization convention.
    pub standardization: String,
    pub warnings: Vec<String>,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standardize `statistic` against `params`: `z = (S - mean)/√variance`,
/// `p = 2(1 - Φ(|z|))`. A degenerate variance (below
/// [`DEGENERATE_VARIANCE`]) yields a report without a p-value; a
/// non-positive variance is an error.
pub fn run_test(statistic: f64, params: &LssParams) -> Result<TestReport, AsymptoticsError> {
    if !(params.variance > 0.0) {
        return Err(AsymptoticsError::DegenerateVariance {
            variance: params.variance,
        });
    }
    let z_score = (statistic - params.mean) / params.variance.sqrt();
    let p_value = if params.degenerate_variance() {
        None
    } else {
        Some(libm::erfc(z_score.abs() / std::f64::consts::SQRT_2))
    };
    Ok(TestReport {
        statistic,
        z_score,
        p_value,
        mean: params.mean,
        variance: params.variance,
        method: params.method,
        mean_mode: params.mean_mode,
        standardization: "z = (S - mean)/sqrt(variance); p = 2(1 - Phi(|z|))".into(),
        warnings: params.warnings.clone(),
    })
}
