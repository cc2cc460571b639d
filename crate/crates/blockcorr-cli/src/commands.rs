//! The four subcommands.

use std::fs;
use std::path::Path;

use blockcorr::asymptotics::{
    contour_lss_params, mp_lss_params, run_test, schott_params, wilks_params,
};
use blockcorr::blocks::{lss, spectrum, BlockLayout, DataMatrix, MeanMode};
use blockcorr::freeconv::{density_grid, support_interval};
use blockcorr::sim::{run_experiment, SimConfig};
use blockcorr::{LssParams, YVector};
use serde::Serialize;

use crate::args::{DensityArgs, MethodArg, ParamsArgs, SimulateArgs, Stat, TestArgs};
use crate::document::{Histogram, ParamsDocument, SimulationDocument, TestReportDocument};
use crate::{ingest, CliError};

pub fn cmd_test(args: &TestArgs) -> Result<(), CliError> {
    let matrix = ingest::read_csv(&args.csv_path)?;
    let (p, n) = (matrix.nrows(), matrix.ncols());
    let total: usize = args.blocks.iter().sum();
    if total != p {
        return Err(CliError::Invalid(format!(
            "--blocks sums to {total} but the CSV has {p} data columns"
        )));
    }
    let layout = BlockLayout::new(args.blocks.clone(), n)?;
    let data = DataMatrix::new(matrix, layout.clone())?;
    let mode = args.mean.into();
    // Parameters first: regime errors should win over data diagnostics.
    let params = resolve_params(&layout, &args.stat, mode, args.method)?;
    let observed = lss(&spectrum(&data, mode)?, &args.stat.test_function())?;
    let report = run_test(observed, &params)?;
    let doc = TestReportDocument::new(args.stat.to_string(), &report, &layout);
    emit_json(&doc, args.out.as_deref())
}

pub fn cmd_params(args: &ParamsArgs) -> Result<(), CliError> {
    let layout = BlockLayout::new(args.blocks.clone(), args.n)?;
    let mode = args.mean.into();
    let params = resolve_params(&layout, &args.stat, mode, args.method)?;
    let doc = ParamsDocument::new(args.stat.to_string(), &params, &layout);
    emit_json(&doc, None)
}

pub fn cmd_density(args: &DensityArgs) -> Result<(), CliError> {
    if !(args.eps > 0.0 && args.eps.is_finite()) {
        return Err(CliError::Invalid(format!(
            "--eps must be positive and finite, got {}",
            args.eps
        )));
    }
    if args.points < 2 {
        return Err(CliError::Invalid("--points must be at least 2".into()));
    }
    let y = YVector::new(args.y.clone())?;
    let (a, b) = support_interval(&y)?;
    let pad = 0.05 * (b - a).max(1.0);
    let xmin = args.xmin.unwrap_or(a - pad);
    let xmax = args.xmax.unwrap_or(b + pad);
    if !(xmin < xmax) || !xmin.is_finite() || !xmax.is_finite() {
        return Err(CliError::Invalid(format!(
            "need --xmin < --xmax, got {xmin} and {xmax}"
        )));
    }
    let step = (xmax - xmin) / (args.points - 1) as f64;
    let xs: Vec<f64> = (0..args.points).map(|i| xmin + i as f64 * step).collect();
    let density = density_grid(&y, &xs, args.eps)?;

    let mut out = String::new();
    out.push_str(&format!(
        "# limiting spectral density for y = {}\n",
        args.y
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    ));
    // The table is the continuous part only; every atom's mass is
    // reported here exactly once.
    for (j, mass) in density.atoms.iter().enumerate() {
        if *mass > 0.0 {
            out.push_str(&format!("# atom at {j}: mass {mass:.12}\n"));
        }
    }
    out.push_str("# x density\n");
    for (x, d) in xs.iter().zip(&density.values) {
        out.push_str(&format!("{x:.12e} {d:.12e}\n"));
    }
    print!("{out}");
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)?;
    let mut deserializer = serde_json::Deserializer::from_str(&text);
    let config: SimConfig = serde_path_to_error::deserialize(&mut deserializer)
        .map_err(|err| {
            CliError::Invalid(format!(
                "config schema error at `{}`: {}",
                err.path(),
                err.inner()
            ))
        })?;
    let result = run_experiment(&config)?;
    let doc = SimulationDocument::new(result);
    match &args.out {
        Some(path) => {
            emit_json(&doc, Some(path))?;
            print_histogram(&doc.histogram);
        }
        None => emit_json(&doc, None)?,
    }
    Ok(())
}

fn resolve_params(
    layout: &BlockLayout,
    stat: &Stat,
    mode: MeanMode,
    method: Option<MethodArg>,
) -> Result<LssParams, CliError> {
    let method = method.unwrap_or(match stat {
        Stat::Schott | Stat::Wilks => MethodArg::Closed,
        Stat::Poly(_) => MethodArg::Contour,
    });
    let params = match (stat, method) {
        (Stat::Schott, MethodArg::Closed) => schott_params(layout, mode)?,
        (Stat::Wilks, MethodArg::Closed) => wilks_params(layout, mode)?,
        (Stat::Poly(_), MethodArg::Closed) => {
            return Err(CliError::Invalid(
                "polynomial statistics have no closed form; pass --method contour or --method mp"
                    .into(),
            ))
        }
        (stat, MethodArg::Contour) => contour_lss_params(layout, &stat.test_function(), mode)?,
        (stat, MethodArg::Mp) => mp_lss_params(layout, &stat.test_function(), mode)?,
    };
    Ok(params)
}

fn emit_json<T: Serialize>(doc: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc).expect("documents always serialize");
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn print_histogram(histogram: &Histogram) {
    println!("# standardized statistic histogram");
    println!("# bin_left bin_right count");
    for (window, count) in histogram.edges.windows(2).zip(&histogram.counts) {
        println!("{:.6} {:.6} {}", window[0], window[1], count);
    }
}
