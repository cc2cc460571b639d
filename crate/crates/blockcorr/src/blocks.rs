//! Sample block correlation matrices and their spectra.
//!
//! Data is a `p × N` matrix holding `N` observations of a `p`-dimensional
//! vector whose coordinates are partitioned into `k` row blocks. The block
//! correlation matrix `B` whitens each block by the inverse square root of
//! its Gram matrix, so every diagonal block becomes an identity and the
//! spectrum is invariant under block-wise affine maps of the data. The
//! companion construction `H` sums the `k` orthogonal projections onto the
//! block row spaces; its nonzero spectrum coincides with `B`'s, which gives
//! an `N × N` eigenproblem when `p` exceeds the effective sample count.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freeconv::{FreeconvError, YVector};

/// Eigenvalues below this are treated as exact zeros of the spectrum.
pub const ZERO_EIG_TOL: f64 = 1e-10;
/// A block Gram matrix is singular when `λ_min < RANK_TOL · λ_max`.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error)]
pub enum BlockError {
    #[error("block layout needs at least one block")]
    EmptyLayout,
    #[error("block {block} has zero rows")]
    EmptyBlock { block: usize },
    #[error("block layout needs at least one sample")]
    NoSamples,
    #[error("data has {rows} rows but the layout prescribes {expected}")]
    RowMismatch { rows: usize, expected: usize },
    #[error("data has {cols} columns but the layout prescribes {expected}")]
    ColumnMismatch { cols: usize, expected: usize },
    #[error("centering needs at least two samples, got {n}")]
    TooFewSamples { n: usize },
    #[error(
        "block {block} has a singular Gram matrix (eigenvalues in [{min_eig:.3e}, {max_eig:.3e}]); \
         each block needs at most as many rows as effective samples and non-degenerate data"
    )]
    SingularBlock {
        block: usize,
        min_eig: f64,
        max_eig: f64,
    },
    #[error("symmetric eigensolver failed to converge on a {size}x{size} matrix")]
    EigenFailure { size: usize },
    #[error("spectrum has {len} eigenvalues but the layout prescribes {expected}")]
    LengthMismatch { len: usize, expected: usize },
    #[error("eigenvalue {index} = {value:.6e} lies outside [-1e-10, k + 1e-8]")]
    EigenvalueOutOfRange { index: usize, value: f64 },
    #[error("eigenvalue sum {trace:.12e} should equal the total dimension {expected}")]
    TraceMismatch { trace: f64, expected: usize },
    #[error("log statistic undefined: eigenvalue {index} = {value:.6e} is not positive")]
    LogOfNonPositive { index: usize, value: f64 },
}

/// Whether the population mean is known to be zero or estimated from the
/// sample. Estimation costs one effective observation: every dimension
/// ratio divides by `N - 1` instead of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanMode {
    Known,
    Unknown,
}

impl MeanMode {
    pub fn effective_samples(self, n: usize) -> usize {
        match self {
            MeanMode::Known => n,
            MeanMode::Unknown => n.saturating_sub(1),
        }
    }
}

/// Partition of `p_total` coordinates into `k` blocks observed `N` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    p: Vec<usize>,
    n: usize,
}

impl BlockLayout {
    pub fn new(p: Vec<usize>, n: usize) -> Result<Self, BlockError> {
        if p.is_empty() {
            return Err(BlockError::EmptyLayout);
        }
        if let Some(block) = p.iter().position(|&pt| pt == 0) {
            return Err(BlockError::EmptyBlock { block });
        }
        if n == 0 {
            return Err(BlockError::NoSamples);
        }
        Ok(Self { p, n })
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.p
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn p_total(&self) -> usize {
        self.p.iter().sum()
    }

    pub fn effective_samples(&self, mode: MeanMode) -> usize {
        mode.effective_samples(self.n)
    }

    /// Row range of block `t` within the stacked data matrix.
    pub fn row_range(&self, t: usize) -> Range<usize> {
        let start: usize = self.p[..t].iter().sum();
        start..start + self.p[t]
    }

    /// Dimension ratios `y_t = p_t / N_eff` as a validated vector; fails
    /// when some ratio reaches 1, where the limit law degenerates.
    pub fn ratios(&self, mode: MeanMode) -> Result<YVector, FreeconvError> {
        let n_eff = self.effective_samples(mode) as f64;
        YVector::new(self.p.iter().map(|&pt| pt as f64 / n_eff).collect())
    }

    /// Aggregate ratio `p_total / N_eff`, defined even beyond 1.
    pub fn ratio_total(&self, mode: MeanMode) -> f64 {
        self.p_total() as f64 / self.effective_samples(mode) as f64
    }
}

/// A `p_total × N` observation matrix tied to its block layout.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    layout: BlockLayout,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, layout: BlockLayout) -> Result<Self, BlockError> {
        if values.nrows() != layout.p_total() {
            return Err(BlockError::RowMismatch {
                rows: values.nrows(),
                expected: layout.p_total(),
            });
        }
        if values.ncols() != layout.samples() {
            return Err(BlockError::ColumnMismatch {
                cols: values.ncols(),
                expected: layout.samples(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }
}

/// Subtract each row's sample mean.
pub fn center(data: &DataMatrix) -> Result<DataMatrix, BlockError> {
    let n = data.layout.samples();
    if n < 2 {
        return Err(BlockError::TooFewSamples { n });
    }
    let mut values = data.values.clone();
    for mut row in values.row_iter_mut() {
        let mean = row.sum() / n as f64;
        row.add_scalar_mut(-mean);
    }
    Ok(DataMatrix {
        values,
        layout: data.layout.clone(),
    })
}

fn prepared(data: &DataMatrix, mode: MeanMode) -> Result<DMatrix<f64>, BlockError> {
    match mode {
        MeanMode::Known => Ok(data.values.clone()),
        MeanMode::Unknown => Ok(center(data)?.values),
    }
}

fn symmetrize(mat: &mut DMatrix<f64>) {
    for i in 0..mat.nrows() {
        for j in 0..i {
            let s = 0.5 * (mat[(i, j)] + mat[(j, i)]);
            mat[(i, j)] = s;
            mat[(j, i)] = s;
        }
    }
}

fn gram_gate(min_eig: f64, max_eig: f64, block: usize) -> Result<(), BlockError> {
    if max_eig > 0.0 && min_eig >= RANK_TOL * max_eig {
        Ok(())
    } else {
        Err(BlockError::SingularBlock {
            block,
            min_eig,
            max_eig,
        })
    }
}

/// The sample block correlation matrix: each block of rows is whitened by
/// the inverse square root of its Gram matrix (computed via symmetric
/// eigendecomposition), making every diagonal block an identity.
pub fn block_correlation(data: &DataMatrix, mode: MeanMode) -> Result<DMatrix<f64>, BlockError> {
    let mat = prepared(data, mode)?;
    let layout = &data.layout;
    let mut w = mat.clone();
    for t in 0..layout.k() {
        let range = layout.row_range(t);
        let pt = range.len();
        let yt = mat.rows(range.start, pt);
        let gram = &yt * yt.transpose();
        let eig = gram
            .try_symmetric_eigen(f64::EPSILON, 10_000)
            .ok_or(BlockError::EigenFailure { size: pt })?;
        gram_gate(eig.eigenvalues.min(), eig.eigenvalues.max(), t)?;
        let inv_root = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|q| 1.0 / q.sqrt()))
            * eig.eigenvectors.transpose();
        w.rows_mut(range.start, pt).copy_from(&(inv_root * yt));
    }
    let mut b = &w * w.transpose();
    symmetrize(&mut b);
    Ok(b)
}

/// The sum of the `k` orthogonal projections onto the block row spaces,
/// an `N × N` matrix with the same nonzero spectrum as the block
/// correlation matrix. Projections are formed through Cholesky solves, a
/// route deliberately different from the eigendecomposition used by
/// [`block_correlation`], so the two constructions cross-check each other.
pub fn build_projection_sum(data: &DataMatrix, mode: MeanMode) -> Result<DMatrix<f64>, BlockError> {
    let mat = prepared(data, mode)?;
    let layout = &data.layout;
    let n = layout.samples();
    let mut h = DMatrix::zeros(n, n);
    for t in 0..layout.k() {
        let range = layout.row_range(t);
        let yt = mat.rows(range.start, range.len()).clone_owned();
        let gram = &yt * yt.transpose();
        let eigs = gram.symmetric_eigenvalues();
        gram_gate(eigs.min(), eigs.max(), t)?;
        let chol = Cholesky::new(gram).ok_or(BlockError::SingularBlock {
            block: t,
            min_eig: eigs.min(),
            max_eig: eigs.max(),
        })?;
        h += yt.transpose() * chol.solve(&yt);
    }
    symmetrize(&mut h);
    Ok(h)
}

/// Sorted spectrum of a block correlation matrix together with its layout.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    eigenvalues: Vec<f64>,
    layout: BlockLayout,
    mean_mode: MeanMode,
}

impl SpectrumResult {
    /// Validates and normalizes a raw eigenvalue list: sorts ascending,
    /// clamps values below [`ZERO_EIG_TOL`] to exact zeros, and enforces
    /// the range `[-1e-10, k + 1e-8]` and the trace identity `Σλ = p_total`.
    pub fn new(
        mut eigenvalues: Vec<f64>,
        layout: BlockLayout,
        mean_mode: MeanMode,
    ) -> Result<Self, BlockError> {
        let p_total = layout.p_total();
        if eigenvalues.len() != p_total {
            return Err(BlockError::LengthMismatch {
                len: eigenvalues.len(),
                expected: p_total,
            });
        }
        eigenvalues.sort_by(f64::total_cmp);
        let upper = layout.k() as f64 + 1e-8;
        for (index, value) in eigenvalues.iter_mut().enumerate() {
            if !value.is_finite() || *value < -ZERO_EIG_TOL || *value > upper {
                return Err(BlockError::EigenvalueOutOfRange {
                    index,
                    value: *value,
                });
            }
            if *value < ZERO_EIG_TOL {
                *value = 0.0;
            }
        }
        let trace: f64 = eigenvalues.iter().sum();
        if (trace - p_total as f64).abs() > 1e-8 * p_total as f64 {
            return Err(BlockError::TraceMismatch {
                trace,
                expected: p_total,
            });
        }
        Ok(Self {
            eigenvalues,
            layout,
            mean_mode,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The spectrum with exact zeros stripped; the view the log statistic
    /// is defined on.
    pub fn nonzero(&self) -> &[f64] {
        let zeros = self.eigenvalues.iter().take_while(|&&l| l == 0.0).count();
        &self.eigenvalues[zeros..]
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn mean_mode(&self) -> MeanMode {
        self.mean_mode
    }

    /// `r`-th moment of the empirical spectral distribution.
    pub fn moment(&self, r: u32) -> f64 {
        let p = self.eigenvalues.len() as f64;
        self.eigenvalues.iter().map(|l| l.powi(r as i32)).sum::<f64>() / p
    }
}

fn sorted_eigenvalues(mat: DMatrix<f64>) -> Result<Vec<f64>, BlockError> {
    let size = mat.nrows();
    let eig = mat
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(BlockError::EigenFailure { size })?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Eigenvalues of an already-built symmetric matrix, validated against the
/// layout's invariants.
pub fn spectrum_of(
    matrix: &DMatrix<f64>,
    layout: BlockLayout,
    mean_mode: MeanMode,
) -> Result<SpectrumResult, BlockError> {
    SpectrumResult::new(sorted_eigenvalues(matrix.clone())?, layout, mean_mode)
}

/// Spectrum of the block correlation matrix of `data`, computed from the
/// `p × p` matrix when `p_total ≤ N_eff` and otherwise from the `N × N`
/// projection sum (same nonzero spectrum, smaller eigenproblem), padding
/// the zero eigenvalues the `p × p` form would carry.
pub fn spectrum(data: &DataMatrix, mode: MeanMode) -> Result<SpectrumResult, BlockError> {
    let layout = data.layout.clone();
    let p_total = layout.p_total();
    if p_total <= layout.effective_samples(mode) {
        let b = block_correlation(data, mode)?;
        spectrum_of(&b, layout, mode)
    } else {
        let h = build_projection_sum(data, mode)?;
        let eigs = sorted_eigenvalues(h)?;
        let nonzero: Vec<f64> = eigs.into_iter().filter(|&l| l >= ZERO_EIG_TOL).collect();
        if nonzero.len() > p_total {
            return Err(BlockError::LengthMismatch {
                len: nonzero.len(),
                expected: p_total,
            });
        }
        let mut full = vec![0.0; p_total - nonzero.len()];
        full.extend(nonzero);
        SpectrumResult::new(full, layout, mode)
    }
}

/// Test function of a linear spectral statistic `Σ_i f(λ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    /// `f(x) = x²`; yields Schott's statistic.
    Square,
    /// `f(x) = log x` over the nonzero spectrum; yields Wilks' statistic.
    Log,
    /// Polynomial with ascending coefficients `c₀ + c₁x + …`.
    Polynomial(Vec<f64>),
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Linear spectral statistic `Σ_i f(λ_i)`. The log statistic runs over the
/// nonzero spectrum and rejects any eigenvalue at or below `1e-12`.
pub fn lss(spec: &SpectrumResult, f: &TestFunction) -> Result<f64, BlockError> {
    match f {
        TestFunction::Square => Ok(spec.eigenvalues().iter().map(|l| l * l).sum()),
        TestFunction::Log => {
            let zeros = spec.eigenvalues().len() - spec.nonzero().len();
            let mut sum = 0.0;
            for (i, &l) in spec.nonzero().iter().enumerate() {
                if l <= 1e-12 {
                    return Err(BlockError::LogOfNonPositive {
                        index: zeros + i,
                        value: l,
                    });
                }
                sum += l.ln();
            }
            Ok(sum)
        }
        TestFunction::Polynomial(coeffs) => {
            Ok(spec.eigenvalues().iter().map(|&l| horner(coeffs, l)).sum())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn data(p: &[usize], n: usize, seed: u64) -> DataMatrix {
        let layout = BlockLayout::new(p.to_vec(), n).unwrap();
        DataMatrix::new(randn(layout.p_total(), n, seed), layout).unwrap()
    }

    #[test]
    fn layout_derives_ratios_and_ranges() {
        let layout = BlockLayout::new(vec![2, 3, 1], 13).unwrap();
        assert_eq!(layout.k(), 3);
        assert_eq!(layout.p_total(), 6);
        assert_eq!(layout.row_range(1), 2..5);
        assert_eq!(layout.effective_samples(MeanMode::Known), 13);
        assert_eq!(layout.effective_samples(MeanMode::Unknown), 12);
        let y = layout.ratios(MeanMode::Unknown).unwrap();
        assert_relative_eq!(y.as_slice()[0], 2.0 / 12.0);
        assert_relative_eq!(y.total(), 6.0 / 12.0);
        assert_relative_eq!(layout.ratio_total(MeanMode::Known), 6.0 / 13.0);
    }

    #[test]
    fn layout_rejects_degenerate_shapes() {
        assert!(matches!(
            BlockLayout::new(vec![], 5),
            Err(BlockError::EmptyLayout)
        ));
        assert!(matches!(
            BlockLayout::new(vec![2, 0], 5),
            Err(BlockError::EmptyBlock { block: 1 })
        ));
        assert!(matches!(
            BlockLayout::new(vec![2], 0),
            Err(BlockError::NoSamples)
        ));
        let layout = BlockLayout::new(vec![2], 5).unwrap();
        assert!(matches!(
            DataMatrix::new(DMatrix::zeros(3, 5), layout.clone()),
            Err(BlockError::RowMismatch { rows: 3, expected: 2 })
        ));
        assert!(matches!(
            DataMatrix::new(DMatrix::zeros(2, 4), layout),
            Err(BlockError::ColumnMismatch { cols: 4, expected: 5 })
        ));
    }

    #[test]
    fn centering_zeroes_constant_rows_and_is_idempotent() {
        let layout = BlockLayout::new(vec![1, 1], 5).unwrap();
        let mut values = randn(2, 5, 1);
        values.row_mut(0).fill(3.25);
        let d = DataMatrix::new(values, layout).unwrap();
        let once = center(&d).unwrap();
        assert!(once.values().row(0).iter().all(|&v| v == 0.0));
        let twice = center(&once).unwrap();
        for (a, b) in once.values().iter().zip(twice.values().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn centered_rows_have_zero_mean() {
        let d = data(&[3], 5, 2);
        let centered = center(&d).unwrap();
        for row in centered.values().row_iter() {
            let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(row.sum().abs() <= 1e-10 * 5.0 * scale.max(1.0));
        }
    }

    #[test]
    fn single_block_correlation_is_identity() {
        let d = data(&[4], 9, 3);
        for mode in [MeanMode::Known, MeanMode::Unknown] {
            let b = block_correlation(&d, mode).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((b[(i, j)] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unit_blocks_recover_classical_correlation() {
        let d = data(&[1, 1, 1], 9, 4);
        let b = block_correlation(&d, MeanMode::Unknown).unwrap();
        let centered = center(&d).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let ri = centered.values().row(i);
                let rj = centered.values().row(j);
                let want = ri.dot(&rj) / (ri.norm() * rj.norm());
                assert!((b[(i, j)] - want).abs() < 1e-12);
                assert!(b[(i, j)] <= 1.0 + 1e-12 && b[(i, j)] >= -1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_blocks_are_identities() {
        let d = data(&[2, 3, 2], 20, 5);
        let b = block_correlation(&d, MeanMode::Unknown).unwrap();
        let layout = d.layout();
        for t in 0..3 {
            let range = layout.row_range(t);
            for i in range.clone() {
                for j in range.clone() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((b[(i, j)] - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn projection_summands_are_projections() {
        // A single-block layout makes H exactly one projection.
        let d = data(&[3], 8, 6);
        let h = build_projection_sum(&d, MeanMode::Unknown).unwrap();
        let h2 = &h * &h;
        for i in 0..8 {
            for j in 0..8 {
                assert!((h2[(i, j)] - h[(i, j)]).abs() < 1e-9);
                assert!((h[(i, j)] - h[(j, i)]).abs() < 1e-9);
            }
        }
        assert!((h.trace() - 3.0).abs() < 1e-9);
        let eigs = sorted_eigenvalues(h).unwrap();
        for &l in &eigs {
            assert!(l > -1e-10 && l < 1.0 + 1e-10);
        }
        assert_eq!(eigs.iter().filter(|&&l| l > 0.5).count(), 3);
    }

    #[test]
    fn projection_sum_traces_and_bounds() {
        let d = data(&[2, 3, 2], 12, 7);
        let h = build_projection_sum(&d, MeanMode::Unknown).unwrap();
        assert!((h.trace() - 7.0).abs() < 1e-9);
        let eigs = sorted_eigenvalues(h).unwrap();
        assert!(eigs[0] > -1e-10);
        assert!(eigs[eigs.len() - 1] < 3.0 + 1e-8);
    }

    #[test]
    fn correlation_and_projection_share_nonzero_spectrum() {
        let d = data(&[2, 2], 6, 8);
        for mode in [MeanMode::Known, MeanMode::Unknown] {
            let b = block_correlation(&d, mode).unwrap();
            let h = build_projection_sum(&d, mode).unwrap();
            let eb = sorted_eigenvalues(b).unwrap();
            let eh: Vec<f64> = sorted_eigenvalues(h)
                .unwrap()
                .into_iter()
                .filter(|&l| l > ZERO_EIG_TOL)
                .collect();
            assert_eq!(eb.len(), 4);
            assert_eq!(eh.len(), 4);
            for (a, b) in eb.iter().zip(&eh) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn duplicate_rows_name_the_singular_block() {
        let layout = BlockLayout::new(vec![2, 2], 8).unwrap();
        let mut values = randn(4, 8, 9);
        let copy = values.row(2).clone_owned();
        values.row_mut(3).copy_from(&copy);
        let d = DataMatrix::new(values, layout).unwrap();
        match block_correlation(&d, MeanMode::Unknown) {
            Err(BlockError::SingularBlock { block: 1, .. }) => {}
            other => panic!("expected singular block 1, got {other:?}"),
        }
        match build_projection_sum(&d, MeanMode::Unknown) {
            Err(BlockError::SingularBlock { block: 1, .. }) => {}
            other => panic!("expected singular block 1, got {other:?}"),
        }
    }

    #[test]
    fn spectrum_of_identity_is_flat() {
        let layout = BlockLayout::new(vec![2, 2], 10).unwrap();
        let spec = spectrum_of(&DMatrix::identity(4, 4), layout, MeanMode::Known).unwrap();
        assert_eq!(spec.eigenvalues(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(spec.nonzero().len(), 4);
        assert_relative_eq!(spec.moment(2), 1.0);
    }

    #[test]
    fn spectrum_invariants_hold_on_random_data() {
        let d = data(&[2, 3, 2], 15, 10);
        let spec = spectrum(&d, MeanMode::Unknown).unwrap();
        assert_eq!(spec.eigenvalues().len(), 7);
        let trace: f64 = spec.eigenvalues().iter().sum();
        assert!((trace - 7.0).abs() < 1e-8 * 7.0);
        assert!(spec.eigenvalues()[6] <= 3.0 + 1e-8);
        assert!(spec.eigenvalues()[0] >= 0.0);
    }

    #[test]
    fn oversized_layouts_use_the_projection_route() {
        // p_total = 6 > N_eff = 4 forces the N x N eigenproblem and
        // zero-padding back to dimension 6.
        let d = data(&[3, 3], 5, 11);
        let spec = spectrum(&d, MeanMode::Unknown).unwrap();
        assert_eq!(spec.eigenvalues().len(), 6);
        assert!(spec.nonzero().len() <= 4);
        let trace: f64 = spec.eigenvalues().iter().sum();
        assert!((trace - 6.0).abs() < 1e-8 * 6.0);
        assert!(spec.eigenvalues()[5] <= 2.0 + 1e-8);
    }

    #[test]
    fn spectrum_routes_agree_when_both_apply() {
        let d = data(&[2, 3], 12, 12);
        let b = block_correlation(&d, MeanMode::Unknown).unwrap();
        let from_b = spectrum_of(&b, d.layout().clone(), MeanMode::Unknown).unwrap();
        let h = build_projection_sum(&d, MeanMode::Unknown).unwrap();
        let nonzero: Vec<f64> = sorted_eigenvalues(h)
            .unwrap()
            .into_iter()
            .filter(|&l| l >= ZERO_EIG_TOL)
            .collect();
        assert_eq!(nonzero.len(), 5);
        for (a, b) in from_b.eigenvalues().iter().zip(&nonzero) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn statistics_on_identity_spectra() {
        let d = data(&[4], 9, 13);
        let spec = spectrum(&d, MeanMode::Unknown).unwrap();
        assert!((lss(&spec, &TestFunction::Square).unwrap() - 4.0).abs() < 1e-9);
        assert!(lss(&spec, &TestFunction::Log).unwrap().abs() < 1e-9);
    }

    #[test]
    fn square_statistic_matches_frobenius_norm() {
        let d = data(&[2, 2, 3], 25, 14);
        let b = block_correlation(&d, MeanMode::Unknown).unwrap();
        let spec = spectrum_of(&b, d.layout().clone(), MeanMode::Unknown).unwrap();
        let frob: f64 = b.iter().map(|v| v * v).sum();
        let schott = lss(&spec, &TestFunction::Square).unwrap();
        assert!((schott - frob).abs() < 1e-9 * frob.max(1.0));
    }

    #[test]
    fn polynomial_statistic_uses_ascending_coefficients() {
        let layout = BlockLayout::new(vec![1, 1], 10).unwrap();
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.5]));
        let spec = spectrum_of(&m, layout, MeanMode::Known).unwrap();
        // f(x) = 1 + 2x + x^2 at 0.5 and 1.5: 2.25 + 6.25.
        let f = TestFunction::Polynomial(vec![1.0, 2.0, 1.0]);
        assert_relative_eq!(lss(&spec, &f).unwrap(), 8.5, epsilon = 1e-12);
    }

    #[test]
    fn log_statistic_skips_padded_zeros_only() {
        let d = data(&[3, 3], 5, 15);
        let spec = spectrum(&d, MeanMode::Unknown).unwrap();
        let zeros = spec.eigenvalues().len() - spec.nonzero().len();
        assert!(zeros >= 2);
        let wilks = lss(&spec, &TestFunction::Log).unwrap();
        let direct: f64 = spec.nonzero().iter().map(|l| l.ln()).sum();
        assert_relative_eq!(wilks, direct, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_result_rejects_bad_inputs() {
        let layout = BlockLayout::new(vec![1, 1], 10).unwrap();
        assert!(matches!(
            SpectrumResult::new(vec![1.0], layout.clone(), MeanMode::Known),
            Err(BlockError::LengthMismatch { .. })
        ));
        assert!(matches!(
            SpectrumResult::new(vec![-0.5, 2.5], layout.clone(), MeanMode::Known),
            Err(BlockError::EigenvalueOutOfRange { .. })
        ));
        assert!(matches!(
            SpectrumResult::new(vec![0.2, 0.3], layout, MeanMode::Known),
            Err(BlockError::TraceMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn block_affine_maps_leave_the_spectrum_invariant(
            p in prop::collection::vec(1usize..=3, 1..=3),
            extra in 2usize..=6,
            seed in any::<u64>(),
        ) {
            let p_total: usize = p.iter().sum();
            let n = p_total + extra + 1;
            let layout = BlockLayout::new(p, n).unwrap();
            let base = DataMatrix::new(randn(p_total, n, seed), layout.clone()).unwrap();

            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
            let mut transformed = base.values().clone();
            for t in 0..layout.k() {
                let range = layout.row_range(t);
                let pt = range.len();
                // Shifted random matrix: comfortably invertible.
                let tmat = DMatrix::from_fn(pt, pt, |i, j| {
                    let g: f64 = rng.sample(StandardNormal);
                    g + if i == j { 4.0 } else { 0.0 }
                });
                let block = transformed.rows(range.start, pt).clone_owned();
                transformed.rows_mut(range.start, pt).copy_from(&(tmat * block));
            }
            for i in 0..p_total {
                let shift: f64 = rng.sample(StandardNormal);
                transformed.row_mut(i).add_scalar_mut(shift);
            }
            let mapped = DataMatrix::new(transformed, layout).unwrap();

            let s0 = spectrum(&base, MeanMode::Unknown).unwrap();
            let s1 = spectrum(&mapped, MeanMode::Unknown).unwrap();
            for (a, b) in s0.eigenvalues().iter().zip(s1.eigenvalues()) {
                prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }

        #[test]
        fn nonzero_spectra_of_both_constructions_match(
            p in prop::collection::vec(1usize..=3, 1..=3),
            extra in 1usize..=5,
            seed in any::<u64>(),
        ) {
            let p_total: usize = p.iter().sum();
            let n = p_total + extra;
            let layout = BlockLayout::new(p, n).unwrap();
            let d = DataMatrix::new(randn(p_total, n, seed), layout.clone()).unwrap();

            let b = block_correlation(&d, MeanMode::Known).unwrap();
            let eb: Vec<f64> = sorted_eigenvalues(b).unwrap()
                .into_iter().filter(|&l| l >= ZERO_EIG_TOL).collect();
            let h = build_projection_sum(&d, MeanMode::Known).unwrap();
            let eh: Vec<f64> = sorted_eigenvalues(h).unwrap()
                .into_iter().filter(|&l| l >= ZERO_EIG_TOL).collect();

            prop_assert_eq!(eb.len(), eh.len());
            for (a, b) in eb.iter().zip(&eh) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }
}
