//! Spectral analysis of sample block correlation matrices.

pub mod asymptotics;
pub mod blocks;
pub mod freeconv;
pub mod measures;
pub mod quadrature;
pub mod sim;

pub use asymptotics::{ContourKind, ContourSpec, LssParams, MethodTag, TestReport};
pub use sim::{EmpiricalResult, SimConfig};
pub use blocks::{BlockLayout, DataMatrix, MeanMode, SpectrumResult, TestFunction};
pub use freeconv::{SubordinationSolution, YVector};
pub use measures::{BernoulliMeasure, ComplexPoint};
