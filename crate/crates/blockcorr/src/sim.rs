//! Monte Carlo harness for size and power studies of the block-independence
//! tests at desk scale.
//!
//! Data follows the model `y = Σ^{1/2} x` with i.i.d. standardized entries
//! in `x`; the sample mean is always subtracted even though the population
//! mean is zero, so every replication exercises the unknown-mean pipeline.
//!
//! Determinism contract: replication `i` draws from a counter-based RNG
//! stream derived from `(seed, i + 1)`; stream 0 is reserved for building
//! the population covariance. Results are therefore bit-identical across
//! runs and across thread counts.

use nalgebra::DMatrix;
use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::{normal_cdf, schott_params, wilks_params, AsymptoticsError, LssParams};
use crate::blocks::{lss, spectrum, BlockError, BlockLayout, DataMatrix, MeanMode, TestFunction};
use crate::freeconv::FreeconvError;

/// Two-sided 5% critical value of the standard normal.
const REJECT_Z: f64 = 1.959963984540054;
/// Relative eigenvalue floor below which a covariance is treated as
/// numerically singular.
const PD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("invalid simulation config: {detail}")]
    InvalidConfig { detail: String },
    #[error("covariance construction failed: {detail}")]
    Covariance { detail: String },
    #[error(
        "covariance not positive definite at rho = {rho}: \
         maximal feasible rho is about {max_feasible:.4}"
    )]
    NotPositiveDefinite { rho: f64, max_feasible: f64 },
    #[error("replication {index} failed: {detail}")]
    Replication { index: usize, detail: String },
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Freeconv(#[from] FreeconvError),
}

/// Population distribution of the i.i.d. entries, already standardized to
/// mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dist {
    #[serde(alias = "d1", alias = "normal")]
    Gaussian,
    /// `(χ²(1) - 1)/√2`.
    #[serde(alias = "d2", alias = "chi-squared")]
    Chi2,
    /// `t₅/√(5/3)`.
    #[serde(alias = "d3", alias = "student-t5")]
    T5,
}

/// Within-block population covariance structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovStructure {
    #[serde(alias = "m1")]
    Identity,
    /// `Σ_tt = B (0.3^{|j₁-j₂|^{1/3}}) B` with
    /// `B = diag((0.5 + j/(p_t+1))^{1/2})`.
    #[serde(alias = "m2")]
    Toeplitz,
    /// `Σ_tt = U U'/p_t` with `U` a `p_t × 2p_t` matrix of U(1,5) entries.
    #[serde(alias = "m3")]
    Gram,
}

/// Sample-size regime relative to the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `N = 2p`: aggregate ratio about 1/2.
    #[serde(rename = "2p", alias = "g1")]
    TwiceTotal,
    /// `N = p + 3`: aggregate ratio close to 1.
    #[serde(rename = "p+3", alias = "g2")]
    TotalPlus3,
    /// `N = 3 max_t p_t`: aggregate ratio may exceed 1.
    #[serde(rename = "3max", alias = "g3")]
    TripleMaxBlock,
}

/// Named block scenarios at total dimension `p`, or an explicit layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// `k = 4` equal blocks of `p/4`.
    S1,
    /// `k = p/2` blocks of 2.
    S2,
    /// Two blocks of 2 and two of `p/2 - 2`.
    S3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockSpec {
    Scenario { scenario: Scenario, p: usize },
    Explicit { sizes: Vec<usize> },
}

impl BlockSpec {
    pub fn sizes(&self) -> Result<Vec<usize>, SimError> {
        let invalid = |detail: String| SimError::InvalidConfig { detail };
        match self {
            BlockSpec::Scenario {
                scenario: Scenario::S1,
                p,
            } => {
                if *p < 4 || p % 4 != 0 {
                    return Err(invalid(format!("scenario s1 needs p divisible by 4, got {p}")));
                }
                Ok(vec![p / 4; 4])
            }
            BlockSpec::Scenario {
                scenario: Scenario::S2,
                p,
            } => {
                if *p < 4 || p % 2 != 0 {
                    return Err(invalid(format!("scenario s2 needs even p >= 4, got {p}")));
                }
                Ok(vec![2; p / 2])
            }
            BlockSpec::Scenario {
                scenario: Scenario::S3,
                p,
            } => {
                if *p < 6 || p % 2 != 0 {
                    return Err(invalid(format!("scenario s3 needs even p >= 6, got {p}")));
                }
                Ok(vec![2, 2, p / 2 - 2, p / 2 - 2])
            }
            BlockSpec::Explicit { sizes } => Ok(sizes.clone()),
        }
    }
}

/// Cross-block dependence pattern under the alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    #[serde(alias = "h0")]
    Null,
    /// `Σ_ts = ρ 𝟙𝟙'`.
    #[serde(alias = "h1")]
    Dense,
    /// `Σ_ts = ρ` on the rectangular main diagonal.
    #[serde(alias = "h2")]
    Sparse,
    /// A single `ρ` in the top-left corner of each cross block.
    #[serde(alias = "h3")]
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Schott,
    Wilks,
}

impl Statistic {
    pub fn test_function(self) -> TestFunction {
        match self {
            Statistic::Schott => TestFunction::Square,
            Statistic::Wilks => TestFunction::Log,
        }
    }
}

fn default_alt() -> Alternative {
    Alternative::Null
}

/// One simulation experiment. Serialized field names are the config-file
/// schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dist: Dist,
    pub cov: CovStructure,
    pub regime: Regime,
    pub blocks: BlockSpec,
    #[serde(default = "default_alt")]
    pub alt: Alternative,
    #[serde(default)]
    pub rho: f64,
    pub reps: usize,
    pub seed: u64,
    pub statistic: Statistic,
}

impl SimConfig {
    /// Resolved layout and sample count, for report echoes.
    pub fn layout_and_samples(&self) -> Result<(BlockLayout, usize), SimError> {
        let sizes = self.blocks.sizes()?;
        let p: usize = sizes.iter().sum();
        let n = match self.regime {
            Regime::TwiceTotal => 2 * p,
            Regime::TotalPlus3 => p + 3,
            Regime::TripleMaxBlock => {
                3 * *sizes.iter().max().ok_or_else(|| SimError::InvalidConfig {
                    detail: "empty block list".into(),
                })?
            }
        };
        let layout = BlockLayout::new(sizes, n)?;
        Ok((layout, n))
    }
}

/// Aggregated outcome of a simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalResult {
    pub raw: Vec<f64>,
    pub standardized: Vec<f64>,
    /// Two-sided rejection rate at nominal level 0.05.
    pub rejection_rate: f64,
    /// One-sample Kolmogorov-Smirnov distance of the standardized values
    /// to the standard normal.
    pub ks_distance: f64,
    pub config: SimConfig,
}

impl EmpiricalResult {
    pub fn standardized_mean(&self) -> f64 {
        self.standardized.iter().sum::<f64>() / self.standardized.len() as f64
    }

    pub fn standardized_variance(&self) -> f64 {
        let mean = self.standardized_mean();
        self.standardized
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (self.standardized.len() - 1) as f64
    }
}

fn min_eigenvalue(mat: &DMatrix<f64>) -> Result<f64, SimError> {
    mat.clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .map(|e| e.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v)))
        .ok_or_else(|| SimError::Covariance {
            detail: format!("eigendecomposition failed for a {} x {} matrix", mat.nrows(), mat.ncols()),
        })
}

fn sqrt_pd(mat: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>, SimError> {
    let eig = mat
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| SimError::Covariance {
            detail: format!("{context}: eigendecomposition failed"),
        })?;
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if !(min > PD_TOL * max.max(1.0)) {
        return Err(SimError::Covariance {
            detail: format!("{context}: not positive definite (min eigenvalue {min:.3e})"),
        });
    }
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * root * eig.eigenvectors.transpose())
}

/// Within-block covariance matrices `Σ_tt` for a structure tag. Only the
/// Gram structure consumes randomness.
pub fn covariance_blocks(
    cov: CovStructure,
    layout: &BlockLayout,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<DMatrix<f64>>, SimError> {
    let mut blocks = Vec::with_capacity(layout.k());
    for &pt in layout.block_sizes() {
        let block = match cov {
            CovStructure::Identity => DMatrix::identity(pt, pt),
            CovStructure::Toeplitz => {
                let b: Vec<f64> = (1..=pt)
                    .map(|j| (0.5 + j as f64 / (pt as f64 + 1.0)).sqrt())
                    .collect();
                DMatrix::from_fn(pt, pt, |i, j| {
                    let d = i.abs_diff(j) as f64;
                    b[i] * b[j] * 0.3f64.powf(d.cbrt())
                })
            }
            CovStructure::Gram => {
                let uniform = Uniform::new(1.0, 5.0);
                let u = DMatrix::from_iterator(
                    pt,
                    2 * pt,
                    (0..pt * 2 * pt).map(|_| rng.sample(uniform)),
                );
                &u * u.transpose() / pt as f64
            }
        };
        blocks.push(block);
    }
    Ok(blocks)
}

fn block_diagonal(blocks: &[DMatrix<f64>], layout: &BlockLayout) -> DMatrix<f64> {
    let p = layout.p_total();
    let mut out = DMatrix::zeros(p, p);
    for (t, block) in blocks.iter().enumerate() {
        let range = layout.row_range(t);
        out.view_mut((range.start, range.start), (block.nrows(), block.ncols()))
            .copy_from(block);
    }
    out
}

/// Block-diagonal `Σ^{1/2}` for a covariance structure, via the symmetric
/// square root.
pub fn covariance_factory(
    cov: CovStructure,
    layout: &BlockLayout,
    rng: &mut ChaCha12Rng,
) -> Result<DMatrix<f64>, SimError> {
    let blocks = covariance_blocks(cov, layout, rng)?;
    sqrt_pd(&block_diagonal(&blocks, layout), "block covariance")
}

/// The cross-block part of the alternative: zero diagonal blocks, the
/// selected pattern scaled by `rho` elsewhere.
fn cross_pattern(alt: Alternative, rho: f64, layout: &BlockLayout) -> DMatrix<f64> {
    let p = layout.p_total();
    let mut out = DMatrix::zeros(p, p);
    if alt == Alternative::Null || rho == 0.0 {
        return out;
    }
    for t in 0..layout.k() {
        for s in 0..layout.k() {
            if s == t {
                continue;
            }
            let rt = layout.row_range(t);
            let rs = layout.row_range(s);
            match alt {
                Alternative::Dense => {
                    for i in rt.clone() {
                        for j in rs.clone() {
                            out[(i, j)] = rho;
                        }
                    }
                }
                Alternative::Sparse => {
                    for d in 0..rt.len().min(rs.len()) {
                        out[(rt.start + d, rs.start + d)] = rho;
                    }
                }
                Alternative::Single => out[(rt.start, rs.start)] = rho,
                Alternative::Null => unreachable!(),
            }
        }
    }
    out
}

fn assert_pd_with_feasible_rho(
    diag: &DMatrix<f64>,
    alt: Alternative,
    rho: f64,
    layout: &BlockLayout,
) -> Result<DMatrix<f64>, SimError> {
    let sigma = diag + cross_pattern(alt, rho, layout);
    if min_eigenvalue(&sigma)? > PD_TOL {
        return Ok(sigma);
    }
    // Bisect for the largest rho that keeps this diagonal PD, to report.
    let (mut lo, mut hi) = (0.0f64, rho);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if min_eigenvalue(&(diag + cross_pattern(alt, mid, layout)))? > PD_TOL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SimError::NotPositiveDefinite {
        rho,
        max_feasible: lo,
    })
}

/// Full population covariance under an alternative, with identity diagonal
/// blocks and the selected cross-block pattern. Errors if `rho` pushes the
/// matrix out of the positive-definite cone, reporting the maximal
/// feasible `rho`.
pub fn alternative_factory(
    alt: Alternative,
    rho: f64,
    layout: &BlockLayout,
) -> Result<DMatrix<f64>, SimError> {
    if rho < 0.0 {
        return Err(SimError::InvalidConfig {
            detail: format!("rho must be nonnegative, got {rho}"),
        });
    }
    let p = layout.p_total();
    assert_pd_with_feasible_rho(&DMatrix::identity(p, p), alt, rho, layout)
}

struct SimPlan {
    dist: Dist,
    layout: BlockLayout,
    n: usize,
    t_factor: DMatrix<f64>,
    params: LssParams,
    f: TestFunction,
}

impl SimPlan {
    fn resolve(config: &SimConfig) -> Result<Self, SimError> {
        if config.reps == 0 {
            return Err(SimError::InvalidConfig {
                detail: "reps must be at least 1".into(),
            });
        }
        if config.rho < 0.0 {
            return Err(SimError::InvalidConfig {
                detail: format!("rho must be nonnegative, got {}", config.rho),
            });
        }
        let (layout, n) = config.layout_and_samples()?;
        let p = layout.p_total();
        if config.statistic == Statistic::Wilks && p + 1 >= n {
            return Err(SimError::InvalidConfig {
                detail: format!("wilks needs p < N - 1, got p = {p}, N = {n}"),
            });
        }

        // Stream 0 builds the population; replications use streams >= 1.
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        let blocks = covariance_blocks(config.cov, &layout, &mut rng)?;
        let diag = block_diagonal(&blocks, &layout);
        let sigma = assert_pd_with_feasible_rho(&diag, config.alt, config.rho, &layout)?;
        let t_factor = sqrt_pd(&sigma, "population covariance")?;

        let params = match config.statistic {
            Statistic::Schott => schott_params(&layout, MeanMode::Unknown)?,
            Statistic::Wilks => wilks_params(&layout, MeanMode::Unknown)?,
        };
        if !(params.variance > 0.0) {
            return Err(SimError::InvalidConfig {
                detail: format!("null variance {} is not positive", params.variance),
            });
        }
        Ok(Self {
            dist: config.dist,
            layout,
            n,
            t_factor,
            params,
            f: config.statistic.test_function(),
        })
    }

    fn draw(&self, seed: u64, stream: u64) -> DataMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let p = self.layout.p_total();
        let x = DMatrix::from_iterator(
            p,
            self.n,
            standardized_draws(self.dist, p * self.n, &mut rng),
        );
        let values = &self.t_factor * x;
        DataMatrix::new(values, self.layout.clone()).expect("plan dimensions are consistent")
    }
}

/// Iterator of standardized draws from the selected entry distribution.
fn standardized_draws(
    dist: Dist,
    len: usize,
    rng: &mut ChaCha12Rng,
) -> impl Iterator<Item = f64> + '_ {
    let chi = ChiSquared::new(1.0).expect("valid dof");
    let t5 = StudentT::new(5.0).expect("valid dof");
    let t5_scale = (5.0f64 / 3.0).sqrt();
    (0..len).map(move |_| match dist {
        Dist::Gaussian => rng.sample(StandardNormal),
        Dist::Chi2 => (chi.sample(rng) - 1.0) / std::f64::consts::SQRT_2,
        Dist::T5 => t5.sample(rng) / t5_scale,
    })
}

/// One population draw for a config, on the given RNG stream.
pub fn sample_population(config: &SimConfig, stream: u64) -> Result<DataMatrix, SimError> {
    let plan = SimPlan::resolve(config)?;
    Ok(plan.draw(config.seed, stream))
}

fn replicate(plan: &SimPlan, seed: u64, stream: u64) -> Result<(f64, f64), SimError> {
    let data = plan.draw(seed, stream);
    let spec = spectrum(&data, MeanMode::Unknown)?;
    let raw = lss(&spec, &plan.f)?;
    let z = (raw - plan.params.mean) / plan.params.variance.sqrt();
    Ok((raw, z))
}

/// One-sample Kolmogorov-Smirnov distance to the standard normal.
pub fn ks_normal(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "KS distance needs at least one value");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal_cdf(x);
        d = d.max(cdf - i as f64 / n).max((i + 1) as f64 / n - cdf);
    }
    d
}

/// Run all replications of an experiment in parallel and aggregate.
pub fn run_experiment(config: &SimConfig) -> Result<EmpiricalResult, SimError> {
    let plan = SimPlan::resolve(config)?;
    let pairs: Vec<(f64, f64)> = (0..config.reps)
        .into_par_iter()
        .map(|i| {
            replicate(&plan, config.seed, i as u64 + 1).map_err(|e| SimError::Replication {
                index: i,
                detail: e.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;
    let raw: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let standardized: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let rejections = standardized.iter().filter(|z| z.abs() > REJECT_Z).count();
    Ok(EmpiricalResult {
        rejection_rate: rejections as f64 / config.reps as f64,
        ks_distance: ks_normal(&standardized),
        raw,
        standardized,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base_config() -> SimConfig {
        SimConfig {
            dist: Dist::Gaussian,
            cov: CovStructure::Identity,
            regime: Regime::TwiceTotal,
            blocks: BlockSpec::Explicit {
                sizes: vec![4, 4, 4, 4],
            },
            alt: Alternative::Null,
            rho: 0.0,
            reps: 200,
            seed: 20240811,
            statistic: Statistic::Schott,
        }
    }

    fn moments(values: &[f64]) -> (f64, f64, f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let central = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
        let var = central(2);
        (mean, var, central(3) / var.powf(1.5), central(4) / (var * var))
    }

    #[test]
    fn scenarios_resolve_to_documented_layouts() {
        let s = |scenario, p| BlockSpec::Scenario { scenario, p }.sizes().unwrap();
        assert_eq!(s(Scenario::S1, 32), vec![8, 8, 8, 8]);
        assert_eq!(s(Scenario::S2, 32), vec![2; 16]);
        assert_eq!(s(Scenario::S3, 32), vec![2, 2, 14, 14]);
        assert!(BlockSpec::Scenario {
            scenario: Scenario::S1,
            p: 30
        }
        .sizes()
        .is_err());
    }

    #[test]
    fn regimes_resolve_to_documented_sample_counts() {
        let n_of = |regime, blocks: BlockSpec| {
            SimConfig {
                regime,
                blocks,
                ..base_config()
            }
            .layout_and_samples()
            .unwrap()
            .1
        };
        let s3 = BlockSpec::Scenario {
            scenario: Scenario::S3,
            p: 32,
        };
        assert_eq!(n_of(Regime::TwiceTotal, s3.clone()), 64);
        assert_eq!(n_of(Regime::TotalPlus3, s3.clone()), 35);
        assert_eq!(n_of(Regime::TripleMaxBlock, s3), 42);
    }

    #[test]
    fn entry_distributions_have_documented_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n = 200_000;

        let (mean, var, _, _) = moments(&standardized_draws(Dist::Gaussian, n, &mut rng).collect::<Vec<_>>());
        assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.02);

        // χ²(1) has skewness √8; standardization is affine so it carries over.
        let (mean, var, skew, _) = moments(&standardized_draws(Dist::Chi2, n, &mut rng).collect::<Vec<_>>());
        assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.02);
        assert_relative_eq!(skew, 8.0f64.sqrt(), max_relative = 0.05);

        // t₅ kurtosis is 9; the estimator is heavy-tailed, hence the loose band.
        let (mean, var, _, kurt) = moments(&standardized_draws(Dist::T5, n, &mut rng).collect::<Vec<_>>());
        assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.05);
        assert!(kurt > 6.0 && kurt < 13.0, "t5 kurtosis estimate {kurt}");
    }

    #[test]
    fn sampled_rows_have_unit_variance() {
        let config = SimConfig {
            blocks: BlockSpec::Explicit { sizes: vec![2, 2] },
            regime: Regime::TwiceTotal,
            ..base_config()
        };
        // Long run of N = 2p = 8 is too short; draw many columns by hand.
        let plan = SimPlan::resolve(&config).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let row: Vec<f64> = standardized_draws(Dist::Gaussian, 10_000, &mut rng).collect();
        let (_, var, _, _) = moments(&row);
        assert!((var - 1.0).abs() < 5.0 / (10_000f64).sqrt());
        assert_eq!(plan.n, 8);
    }

    #[test]
    fn toeplitz_block_matches_hand_value() {
        let layout = BlockLayout::new(vec![2], 10).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let blocks = covariance_blocks(CovStructure::Toeplitz, &layout, &mut rng).unwrap();
        let b1 = (0.5f64 + 1.0 / 3.0).sqrt();
        let b2 = (0.5f64 + 2.0 / 3.0).sqrt();
        assert_relative_eq!(blocks[0][(0, 0)], b1 * b1, epsilon = 1e-14);
        assert_relative_eq!(blocks[0][(1, 1)], b2 * b2, epsilon = 1e-14);
        assert_relative_eq!(blocks[0][(0, 1)], b1 * b2 * 0.3, epsilon = 1e-14);
        assert_relative_eq!(blocks[0][(1, 0)], b1 * b2 * 0.3, epsilon = 1e-14);
    }

    #[test]
    fn gram_blocks_are_positive_definite() {
        let layout = BlockLayout::new(vec![3, 5], 20).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let blocks = covariance_blocks(CovStructure::Gram, &layout, &mut rng).unwrap();
            for block in &blocks {
                assert!(min_eigenvalue(block).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn identity_structure_yields_identity_factor() {
        let layout = BlockLayout::new(vec![3, 2], 12).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let factor = covariance_factory(CovStructure::Identity, &layout, &mut rng).unwrap();
        assert_relative_eq!(
            (factor - DMatrix::<f64>::identity(5, 5)).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn alternative_patterns_match_their_definitions() {
        let layout = BlockLayout::new(vec![2, 3], 12).unwrap();

        let dense = alternative_factory(Alternative::Dense, 0.1, &layout).unwrap();
        for i in 0..2 {
            for j in 2..5 {
                assert_eq!(dense[(i, j)], 0.1);
                assert_eq!(dense[(j, i)], 0.1);
            }
        }

        let sparse = alternative_factory(Alternative::Sparse, 0.1, &layout).unwrap();
        let cross = sparse.view((0, 2), (2, 3));
        assert_eq!(cross[(0, 0)], 0.1);
        assert_eq!(cross[(1, 1)], 0.1);
        assert_eq!(cross[(0, 1)], 0.0);
        assert_eq!(cross[(1, 2)], 0.0);

        let single = alternative_factory(Alternative::Single, 0.1, &layout).unwrap();
        let cross = single.view((0, 2), (2, 3));
        assert_eq!(cross[(0, 0)], 0.1);
        assert_eq!(cross.iter().filter(|v| **v != 0.0).count(), 1);

        let null = alternative_factory(Alternative::Null, 0.0, &layout).unwrap();
        assert_relative_eq!(
            (null - DMatrix::<f64>::identity(5, 5)).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn two_singletons_give_hand_correlation_matrix() {
        let layout = BlockLayout::new(vec![1, 1], 8).unwrap();
        let sigma = alternative_factory(Alternative::Dense, 0.5, &layout).unwrap();
        assert_eq!(sigma[(0, 0)], 1.0);
        assert_eq!(sigma[(1, 1)], 1.0);
        assert_eq!(sigma[(0, 1)], 0.5);
        assert_eq!(sigma[(1, 0)], 0.5);
    }

    #[test]
    fn infeasible_rho_reports_the_boundary() {
        // For all-ones cross blocks of sizes 4x4 the boundary is 1/4.
        let layout = BlockLayout::new(vec![4, 4], 32).unwrap();
        match alternative_factory(Alternative::Dense, 0.3, &layout) {
            Err(SimError::NotPositiveDefinite { rho, max_feasible }) => {
                assert_eq!(rho, 0.3);
                assert_relative_eq!(max_feasible, 0.25, epsilon = 1e-3);
            }
            other => panic!("expected PD failure, got {other:?}"),
        }
    }

    #[test]
    fn experiments_are_deterministic_across_runs_and_thread_counts() {
        let config = SimConfig {
            reps: 16,
            ..base_config()
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_experiment(&config))
            .unwrap();
        let quad = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_experiment(&config))
            .unwrap();
        let again = run_experiment(&config).unwrap();
        assert_eq!(single.raw, quad.raw);
        assert_eq!(single.raw, again.raw);
        assert_eq!(single.standardized, quad.standardized);
        assert_eq!(single.rejection_rate, quad.rejection_rate);
    }

    #[test]
    fn block_scaling_leaves_statistics_unchanged() {
        // The block correlation matrix self-normalizes per block, so
        // scaling each population block leaves both statistics fixed on
        // matched draws.
        let layout = BlockLayout::new(vec![3, 5], 24).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let blocks = covariance_blocks(CovStructure::Toeplitz, &layout, &mut rng).unwrap();
        let scaled: Vec<DMatrix<f64>> = blocks
            .iter()
            .zip([2.5, 0.04])
            .map(|(b, c)| b * c)
            .collect();
        let t1 = sqrt_pd(&block_diagonal(&blocks, &layout), "t1").unwrap();
        let t2 = sqrt_pd(&block_diagonal(&scaled, &layout), "t2").unwrap();

        let mut rng = ChaCha12Rng::seed_from_u64(7);
        rng.set_stream(1);
        let x = DMatrix::from_iterator(8, 24, standardized_draws(Dist::Gaussian, 8 * 24, &mut rng));
        for f in [TestFunction::Square, TestFunction::Log] {
            let s1 = lss(
                &spectrum(
                    &DataMatrix::new(&t1 * &x, layout.clone()).unwrap(),
                    MeanMode::Unknown,
                )
                .unwrap(),
                &f,
            )
            .unwrap();
            let s2 = lss(
                &spectrum(
                    &DataMatrix::new(&t2 * &x, layout.clone()).unwrap(),
                    MeanMode::Unknown,
                )
                .unwrap(),
                &f,
            )
            .unwrap();
            assert_relative_eq!(s1, s2, epsilon = 1e-9);
        }
    }

    #[test]
    fn null_experiment_is_roughly_standard_normal() {
        let config = SimConfig {
            blocks: BlockSpec::Scenario {
                scenario: Scenario::S1,
                p: 32,
            },
            reps: 300,
            ..base_config()
        };
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.raw.len(), 300);
        assert_eq!(result.standardized.len(), 300);
        assert!(result.standardized_mean().abs() < 0.2);
        assert!((0.7..1.3).contains(&result.standardized_variance()));
        assert!(result.ks_distance < 0.1);
        assert!(result.rejection_rate < 0.12);
    }

    #[test]
    fn wilks_pipeline_runs_and_respects_its_regime() {
        let config = SimConfig {
            statistic: Statistic::Wilks,
            reps: 50,
            ..base_config()
        };
        let result = run_experiment(&config).unwrap();
        assert!(result.standardized_mean().abs() < 0.6);

        let bad = SimConfig {
            regime: Regime::TripleMaxBlock,
            blocks: BlockSpec::Scenario {
                scenario: Scenario::S1,
                p: 32,
            },
            ..config
        };
        assert!(matches!(
            run_experiment(&bad),
            Err(SimError::InvalidConfig { .. })
        ));
    }

    #[test]
    fn heavier_dependence_rejects_more_often() {
        let at_rho = |rho| {
            let config = SimConfig {
                alt: Alternative::Sparse,
                rho,
                reps: 200,
                ..base_config()
            };
            run_experiment(&config).unwrap().rejection_rate
        };
        let null_rate = at_rho(0.0);
        let alt_rate = at_rho(0.3);
        assert!(
            alt_rate > null_rate + 0.1,
            "power {alt_rate} vs size {null_rate}"
        );
    }

    #[test]
    fn non_gaussian_pipelines_run_clean() {
        for dist in [Dist::Chi2, Dist::T5] {
            let config = SimConfig {
                dist,
                reps: 10,
                ..base_config()
            };
            let result = run_experiment(&config).unwrap();
            assert_eq!(result.raw.len(), 10);
            assert!(result.standardized.iter().all(|z| z.is_finite()));
        }
    }

    #[test]
    fn ks_distance_reference_behaviors() {
        // Exact standard normal sample: below the 1% critical value.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let sample: Vec<f64> = standardized_draws(Dist::Gaussian, 2000, &mut rng).collect();
        assert!(ks_normal(&sample) < 1.63 / (2000f64).sqrt());

        // Constant list: at least 1/2.
        assert!(ks_normal(&[0.0; 10]) >= 0.5);

        // Shift by one: analytic distance Φ(0.5) - Φ(-0.5) ≈ 0.383.
        let shifted: Vec<f64> = sample.iter().map(|v| v + 1.0).collect();
        assert!(ks_normal(&shifted) > 0.3);
    }

    #[test]
    fn config_serde_round_trip_with_aliases() {
        let config = SimConfig {
            blocks: BlockSpec::Scenario {
                scenario: Scenario::S2,
                p: 16,
            },
            ..base_config()
        };
        let json = serde_json::to_string(&config).unwrap();
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);

        let aliased = r#"{
            "dist": "d3", "cov": "m2", "regime": "g1",
            "blocks": {"scenario": "s1", "p": 32},
            "alt": "h2", "rho": 0.1, "reps": 5, "seed": 1,
            "statistic": "schott"
        }"#;
        let parsed: SimConfig = serde_json::from_str(aliased).unwrap();
        assert_eq!(parsed.dist, Dist::T5);
        assert_eq!(parsed.cov, CovStructure::Toeplitz);
        assert_eq!(parsed.regime, Regime::TwiceTotal);
        assert_eq!(parsed.alt, Alternative::Sparse);
    }
}
