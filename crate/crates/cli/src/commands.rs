use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use condext::error::{Error, Result};
use condext::fit::{
    extract_blocks, fit_blocks, parameter_stability_scan, residual_diagnostics, Direction,
    FitConfig, FitOptions, FittedConditionalModel, Parameterization, ResidualModel, WorkingMargin,
};
use condext::functionals::{
    empirical_functional, estimate_functional, Conditioning, EmpiricalOptions, FunctionalKind,
    FunctionalSpec, McOptions, Scale,
};
use condext::generators::{generate, GeneratorKind, GeneratorSpec};
use condext::margins::{
    fit_marginal, format_float, from_laplace, threshold_stability_scan, to_laplace, MarginalModel,
    Series,
};
use condext::norming::{Model, StructureKind};
use condext::resample::{bootstrap_replicates, BootstrapKind, BootstrapScheme};
use condext::simulate::{forward_simulate, write_blocks_csv, SimConfig};
use condext::stats::{laplace_quantile, quantile_sorted, std_dev};
use serde::Serialize;

use crate::manifest::{manifest_path, sha256_hex, RunManifest, SCHEMA_VERSION};
use crate::*;

fn input_err(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical { .. } => 3,
        e if e.is_input() => 2,
        _ => 1,
    }
}

/// Tracks inputs and outputs of one run for its manifest.
struct Ctx {
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    start: Instant,
}

impl Ctx {
    fn new() -> Self {
        Self {
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            start: Instant::now(),
        }
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path)
            .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn series(&mut self, path: &Path) -> Result<Series> {
        let bytes = self.read(path)?;
        Series::read_csv(bytes.as_slice()).map_err(|e| match e {
            Error::Input(m) => input_err(format!("{}: {m}", path.display())),
            e => input_err(format!("{}: {e}", path.display())),
        })
    }

    /// Returns the model and the hash of its file.
    fn marginal(&mut self, path: &Path) -> Result<(MarginalModel, String)> {
        let bytes = self.read(path)?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| input_err(format!("{} is not UTF-8", path.display())))?;
        Ok((MarginalModel::from_json(&text)?, sha256_hex(&bytes)))
    }

    fn model(&mut self, path: &Path) -> Result<FittedConditionalModel> {
        let bytes = self.read(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| input_err(format!("{} is not UTF-8", path.display())))?;
        FittedConditionalModel::from_json(&text)
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        fs::write(path, bytes)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    fn finish(self, cli: &Cli, anchor: &Path, seed: Option<u64>) -> Result<()> {
        let parameters = serde_json::json!({
            "threads": cli.threads,
            "args": serde_json::to_value(&cli.command)?,
        });
        let command = parameters["args"]["command"].as_str().unwrap_or("").to_string();
        let m = RunManifest {
            schema_version: SCHEMA_VERSION,
            command,
            parameters,
            input_hashes: self.inputs,
            outputs: self.outputs,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
        };
        fs::write(manifest_path(anchor), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }
}

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn series_bytes(s: &Series) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    Ok(buf)
}

/// Standard Laplace quantile for `q ∈ [1/2, 1)`.
fn laplace_threshold(q: f64, what: &str) -> Result<f64> {
    if !(0.5..1.0).contains(&q) {
        return Err(input_err(format!("{what} must lie in [0.5, 1), got {q}")));
    }
    Ok(laplace_quantile(q))
}

fn check_marginal_ref(model: &FittedConditionalModel, hash: &str) -> Result<()> {
    match &model.marginal_model_ref {
        Some(r) if r != hash => Err(input_err(
            "marginal model does not match the one the conditional model was fitted with",
        )),
        _ => Ok(()),
    }
}

/// Reads a series, mapping it to Laplace margins when a marginal is given.
fn laplace_input(
    ctx: &mut Ctx,
    input: &Path,
    marginal: Option<&PathBuf>,
) -> Result<(Series, Option<(MarginalModel, String)>)> {
    let raw = ctx.series(input)?;
    match marginal {
        Some(p) => {
            let (m, h) = ctx.marginal(p)?;
            Ok((to_laplace(&raw, &m)?, Some((m, h))))
        }
        None => Ok((raw, None)),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::FitMarginal(a) => fit_marginal_cmd(cli, a),
        Command::Transform(a) => transform_cmd(cli, a),
        Command::Fit(a) => fit_cmd(cli, a),
        Command::Simulate(a) => simulate_cmd(cli, a),
        Command::Estimate(a) => estimate_cmd(cli, a),
        Command::Bootstrap(a) => bootstrap_cmd(cli, a),
        Command::Generate(a) => generate_cmd(cli, a),
        Command::Diagnose(a) => diagnose_cmd(cli, a),
    }
}

fn fit_marginal_cmd(cli: &Cli, a: &FitMarginalArgs) -> Result<()> {
    let mut ctx = Ctx::new();
    let raw = ctx.series(&a.input)?;
    match &a.scan {
        Some(grid) => {
            let rows = threshold_stability_scan(&raw, grid)?;
            let bytes = csv_bytes(|w| {
                w.write_record(["quantile", "threshold", "n_exceed", "scale", "shape", "scale_se", "shape_se", "error"])?;
                for r in &rows {
                    w.write_record([
                        format_float(r.quantile),
                        format_float(r.threshold),
                        r.n_exceed.to_string(),
                        format_float(r.scale),
                        format_float(r.shape),
                        format_float(r.scale_se),
                        format_float(r.shape_se),
                        r.error.clone().unwrap_or_default(),
                    ])?;
                }
                Ok(())
            })?;
            ctx.write(&a.output, &bytes)?;
        }
        None => {
            let m = fit_marginal(&raw, a.quantile)?;
            ctx.write(&a.output, m.to_json()?.as_bytes())?;
        }
    }
    ctx.finish(cli, &a.output, None)
}

fn transform_cmd(cli: &Cli, a: &TransformArgs) -> Result<()> {
    let mut ctx = Ctx::new();
    let s = ctx.series(&a.input)?;
    let (m, _) = ctx.marginal(&a.marginal)?;
    let out = if a.inverse {
        s.with_values(from_laplace(&s.values, &m))?
    } else {
        to_laplace(&s, &m)?
    };
    ctx.write(&a.output, &series_bytes(&out)?)?;
    ctx.finish(cli, &a.output, None)
}

fn fit_config(s: &FitSettings) -> Result<(FitConfig, Direction)> {
    let structure = match s.structure {
        StructureArg::Free => StructureKind::Free,
        StructureArg::Geometric => StructureKind::Geometric,
        StructureArg::Ar2 => StructureKind::Ar2,
        StructureArg::Ar3 => StructureKind::Ar3,
        StructureArg::Pt => StructureKind::Pt { order: s.order },
    };
    let direction = match s.direction {
        DirectionArg::Forward => Direction::Forward,
        DirectionArg::Both => Direction::BackwardForward,
    };
    let config = FitConfig {
        model: if s.model == 1 { Model::Model1 } else { Model::Model2 },
        structure,
        working_margin: match s.working_margin {
            MarginArg::Dlaplace => WorkingMargin::DeltaLaplace,
            MarginArg::Gaussian => WorkingMargin::Gaussian,
        },
        parametric: s.parametric.then_some(match s.parameterization {
            ParameterizationArg::ThresholdScaled => Parameterization::ThresholdScaled,
            ParameterizationArg::Unscaled => Parameterization::Unscaled,
        }),
        options: FitOptions {
            symmetric: !s.asymmetric,
            restarts: s.restarts,
            seed: s.seed,
            ..FitOptions::default()
        },
    };
    Ok((config, direction))
}

fn fit_series(series: &Series, s: &FitSettings) -> Result<FittedConditionalModel> {
    let u = laplace_threshold(s.u_quantile, "--u-quantile")?;
    let (config, direction) = fit_config(s)?;
    let blocks = extract_blocks(series, u, s.k, direction)?;
    fit_blocks(&blocks, &config)
}

fn fit_cmd(cli: &Cli, a: &FitArgs) -> Result<()> {
    let mut ctx = Ctx::new();
    let (series, marginal) = laplace_input(&mut ctx, &a.input, a.marginal.as_ref())?;
    let mut fit = fit_series(&series, &a.settings)?;
    fit.marginal_model_ref = marginal.map(|(_, h)| h);
    ctx.write(&a.output, fit.to_json()?.as_bytes())?;
    if let Some(path) = &a.residuals {
        match &fit.residuals {
            ResidualModel::Empirical { residual_store, .. } => {
                let mut buf = Vec::new();
                residual_store.write_csv(&mut buf)?;
                ctx.write(path, &buf)?;
            }
            ResidualModel::Parametric { .. } => {
                return Err(input_err("parametric fits keep no residual store"))
            }
        }
    }
    ctx.finish(cli, &a.output, Some(a.settings.seed))
}

fn simulate_cmd(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let mut ctx = Ctx::new();
    let fit = ctx.model(&a.model)?;
    let v = laplace_threshold(a.v_quantile, "--v-quantile")?;
    let config = SimConfig {
        threads: cli.threads,
        ..SimConfig::new(a.n, a.seed, v, a.d)
    };
    let mut blocks = forward_simulate(&fit, &config)?;
    if let Some(p) = &a.marginal {
        let (m, h) = ctx.marginal(p)?;
        check_marginal_ref(&fit, &h)?;
        for b in &mut blocks {
            *b = from_laplace(b, &m);
        }
    }
    let mut buf = Vec::new();
    write_blocks_csv(&blocks, &mut buf)?;
    ctx.write(&a.output, &buf)?;
    ctx.finish(cli, &a.output, Some(a.seed))
}

fn functional_spec(a: &EstimateArgs) -> Result<FunctionalSpec> {
    let v = laplace_threshold(a.v_quantile, "--v-quantile")?;
    let scale = match a.scale {
        ScaleArg::Laplace => Scale::Laplace,
        ScaleArg::Data => Scale::Data,
    };
    let kind = match a.functional {
        FunctionalArg::Theta => FunctionalKind::Theta,
        FunctionalArg::Chi => FunctionalKind::Chi,
        FunctionalArg::E1 => FunctionalKind::E1,
        FunctionalArg::E2 => FunctionalKind::E2,
        FunctionalArg::E3 => FunctionalKind::E3,
        FunctionalArg::P => FunctionalKind::P { r: a.r },
        FunctionalArg::Pstar => FunctionalKind::PStar { r: a.r },
        FunctionalArg::MaxExceed => FunctionalKind::MaxExceed {
            level: match (a.level, scale) {
                (Some(l), _) => l,
                (None, Scale::Laplace) => v,
                (None, Scale::Data) => return Err(input_err("data-scale max_exceed needs --level")),
            },
        },
        FunctionalArg::TotalExceed => FunctionalKind::TotalExceed { s: a.s },
        FunctionalArg::ConsecExceed => FunctionalKind::ConsecExceed { s: a.s },
    };
    Ok(FunctionalSpec::new(kind, v, a.d)?.with_scale(scale))
}

fn params_label(spec: &FunctionalSpec) -> String {
    let mut p = format!("v={};d={}", format_float(spec.v), spec.d);
    match spec.kind {
        FunctionalKind::P { r } | FunctionalKind::PStar { r } => p += &format!(";r={r}"),
        FunctionalKind::TotalExceed { s } | FunctionalKind::ConsecExceed { s } => p += &format!(";s={s}"),
        FunctionalKind::MaxExceed { level } => p += &format!(";level={}", format_float(level)),
        _ => {}
    }
    if spec.scale == Scale::Data {
        p += ";scale=data";
    }
    p
}

fn empirical_estimate(series: &Series, spec: &FunctionalSpec, marginal: Option<&MarginalModel>, a: &EstimateArgs, threads: usize) -> Result<condext::simulate::EstimateReport> {
    empirical_functional(series, spec, marginal, &EmpiricalOptions {
        block_length: a.block_length,
        replications: a.replications,
        seed: a.seed,
        threads,
    })
}

fn estimate_cmd(cli: &Cli, a: &EstimateArgs) -> Result<()> {
    let mut ctx = Ctx::new();
    let spec = functional_spec(a)?;
    let report = match a.method {
        MethodArg::Empirical => {
            let path = a.series.as_ref().ok_or_else(|| input_err("--method empirical needs --series"))?;
            let (series, marginal) = laplace_input(&mut ctx, path, a.marginal.as_ref())?;
            empirical_estimate(&series, &spec, marginal.as_ref().map(|m| &m.0), a, cli.threads)?
        }
        MethodArg::Forward | MethodArg::Aloe => {
            let path = a.model.as_ref().ok_or_else(|| input_err("model-based methods need --model"))?;
            let fit = ctx.model(path)?;
            let marginal = match &a.marginal {
                Some(p) => {
                    let (m, h) = ctx.marginal(p)?;
                    check_marginal_ref(&fit, &h)?;
                    Some(m)
                }
                None => None,
            };
            let forward = spec.conditioning() == Conditioning::First;
            match (a.method, forward) {
                (MethodArg::Forward, false) => {
                    return Err(input_err(format!("{} is estimated with --method aloe", spec.kind.name())))
                }
                (MethodArg::Aloe, true) => {
                    return Err(input_err(format!("{} is estimated with --method forward", spec.kind.name())))
                }
                _ => {}
            }
            let opts = McOptions {
                n_samples: a.n,
                seed: a.seed,
                threads: cli.threads,
            };
            estimate_functional(&fit, &spec, marginal.as_ref(), &opts)?
        }
    };
    let bytes = csv_bytes(|w| {
        w.write_record(["kind", "params", "estimate", "stderr", "n", "seed"])?;
        w.write_record([
            spec.kind.name().to_string(),
            params_label(&spec),
            format_float(report.estimate),
            format_float(report.std_error),
            report.n.to_string(),
            report.seed.to_string(),
        ])?;
        Ok(())
    })?;
    ctx.write(&a.output, &bytes)?;
    ctx.finish(cli, &a.output, Some(a.seed))
}

#[derive(Serialize)]
struct ColumnSummary {
    name: String,
    estimate: f64,
    mean: f64,
    std_error: f64,
    ci_low: f64,
    ci_high: f64,
}

#[derive(Serialize)]
struct BootstrapSummary {
    replications: usize,
    failures: usize,
    scheme: BootstrapScheme,
    columns: Vec<ColumnSummary>,
}

fn bootstrap_cmd(cli: &Cli, a: &BootstrapArgs) -> Result<()> {
    let mut ctx = Ctx::new();
    let mut args: Vec<String> = std::iter::once("condext".to_string()).chain(a.inner.iter().cloned()).collect();
    // the inner command writes nothing, so its output flag is optional here
    if !args.iter().any(|x| x == "-o" || x == "--output" || x.starts_with("--output=")) {
        args.extend(["--output".to_string(), "-".to_string()]);
    }
    let inner = Cli::try_parse_from(args)
        .map_err(|e| input_err(format!("inner command: {e}")))?;
    let scheme = BootstrapScheme {
        kind: match a.scheme {
            SchemeArg::Block => BootstrapKind::Block,
            SchemeArg::MovingBlock => BootstrapKind::MovingBlock,
            SchemeArg::Stationary => BootstrapKind::Stationary,
        },
        block_length: a.block_length,
        seed: a.seed,
    };
    let threads = cli.threads;
    // Each replicate resamples the inner command's input on its own scale.
    let (input, names, estimator): (Series, Vec<String>, Box<dyn Fn(&Series) -> Result<Vec<f64>> + Sync>) =
        match inner.command {
            Command::Fit(f) => {
                let raw = ctx.series(&f.input)?;
                let marginal = match &f.marginal {
                    Some(p) => Some(ctx.marginal(p)?.0),
                    None => None,
                };
                let k = f.settings.k;
                let mut names: Vec<String> = (1..=k).map(|i| format!("alpha_{i}")).collect();
                names.push("beta".into());
                let est = move |s: &Series| -> Result<Vec<f64>> {
                    let lap = match &marginal {
                        Some(m) => to_laplace(s, m)?,
                        None => s.clone(),
                    };
                    let fit = fit_series(&lap, &f.settings)?;
                    let spec = fit.norming.forward();
                    let mut row = spec.alphas(k)?;
                    row.push(spec.beta);
                    Ok(row)
                };
                (raw, names, Box::new(est))
            }
            Command::Estimate(e) => {
                if !matches!(e.method, MethodArg::Empirical) {
                    return Err(input_err("bootstrap supports estimate with --method empirical only"));
                }
                let path = e.series.clone().ok_or_else(|| input_err("inner estimate needs --series"))?;
                let raw = ctx.series(&path)?;
                let marginal = match &e.marginal {
                    Some(p) => Some(ctx.marginal(p)?.0),
                    None => None,
                };
                let spec = functional_spec(&e)?;
                let est = move |s: &Series| -> Result<Vec<f64>> {
                    let lap = match &marginal {
                        Some(m) => to_laplace(s, m)?,
                        None => s.clone(),
                    };
                    // point estimate only; the outer bootstrap supplies the error
                    let opts = EstimateArgs { replications: 2, ..e.clone() };
                    Ok(vec![empirical_estimate(&lap, &spec, marginal.as_ref(), &opts, 1)?.estimate])
                };
                (raw, vec!["estimate".into()], Box::new(est))
            }
            _ => return Err(input_err("bootstrap wraps a fit or estimate command")),
        };
    let original = estimator(&input)?;
    let (rows, failures) = bootstrap_replicates(&input, &scheme, a.replications, threads, |s| estimator(s))?;
    let bytes = csv_bytes(|w| {
        let mut header = vec!["replicate".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (i, r) in rows.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(r.iter().map(|&v| format_float(v)));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    ctx.write(&a.output, &bytes)?;
    let columns = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let se = std_dev(&col);
            col.sort_by(f64::total_cmp);
            ColumnSummary {
                name: name.clone(),
                estimate: original[j],
                mean,
                std_error: se,
                ci_low: quantile_sorted(&col, 0.025),
                ci_high: quantile_sorted(&col, 0.975),
            }
        })
        .collect();
    let summary = BootstrapSummary {
        replications: a.replications,
        failures,
        scheme,
        columns,
    };
    let mut summary_path = a.output.as_os_str().to_owned();
    summary_path.push(".summary.json");
    ctx.write(Path::new(&summary_path), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    ctx.finish(cli, &a.output, Some(a.seed))
}

fn generate_cmd(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let mut ctx = Ctx::new();
    let kind = match a.kind {
        GeneratorArg::GaussAr1 => GeneratorKind::GaussAr1 { rho: a.rho },
        GeneratorArg::InvLogistic => GeneratorKind::InvLogistic { gamma: a.gamma },
        GeneratorArg::GaussAr2 => GeneratorKind::GaussAr2 {
            theta1: a.theta1,
            theta2: a.theta2,
        },
    };
    let s = generate(&GeneratorSpec {
        kind,
        n: a.n,
        seed: a.seed,
    })?;
    ctx.write(&a.output, &series_bytes(&s)?)?;
    ctx.finish(cli, &a.output, Some(a.seed))
}

fn config_of(fit: &FittedConditionalModel) -> FitConfig {
    let spec = fit.norming.forward();
    let (working_margin, parametric) = match &fit.residuals {
        ResidualModel::Empirical { working_margin, .. } => (*working_margin, None),
        ResidualModel::Parametric { curves, .. } => (WorkingMargin::DeltaLaplace, Some(curves.parameterization)),
    };
    let symmetric = match &fit.norming {
        condext::fit::Norming::BackwardForward(bf) => bf.symmetric,
        condext::fit::Norming::Forward(_) => true,
    };
    FitConfig {
        model: spec.model,
        structure: spec.alpha.kind(),
        working_margin,
        parametric,
        options: FitOptions {
            symmetric,
            seed: fit.fit_metadata.seed,
            ..FitOptions::default()
        },
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn diagnose_cmd(cli: &Cli, a: &DiagnoseArgs) -> Result<()> {
    let mut ctx = Ctx::new();
    let fit = ctx.model(&a.model)?;
    let (series, marginal) = laplace_input(&mut ctx, &a.input, a.marginal.as_ref())?;
    if let Some((_, h)) = &marginal {
        check_marginal_ref(&fit, h)?;
    }
    let blocks = extract_blocks(&series, fit.u, fit.k, fit.direction())?;
    let d = residual_diagnostics(&fit, &blocks)?;
    let side = |s: condext::fit::Side| match s {
        condext::fit::Side::Forward => "forward",
        condext::fit::Side::Backward => "backward",
    };
    let tau = csv_bytes(|w| {
        w.write_record(["side", "lag", "n_pairs", "tau", "skipped"])?;
        for l in &d.lags {
            w.write_record([
                side(l.side).to_string(),
                l.lag.to_string(),
                l.n_pairs.to_string(),
                l.tau.map(format_float).unwrap_or_default(),
                l.skipped.to_string(),
            ])?;
        }
        Ok(())
    })?;
    ctx.write(&with_suffix(&a.output, "_tau.csv"), &tau)?;
    let qq = csv_bytes(|w| {
        w.write_record(["side", "lag", "prob", "empirical", "model"])?;
        for q in &d.qq {
            w.write_record([
                side(q.side).to_string(),
                q.lag.to_string(),
                format_float(q.prob),
                format_float(q.empirical),
                format_float(q.model),
            ])?;
        }
        Ok(())
    })?;
    ctx.write(&with_suffix(&a.output, "_qq.csv"), &qq)?;
    if let Some(grid) = &a.u_grid {
        let u_grid = grid
            .iter()
            .map(|&q| laplace_threshold(q, "--u-grid entries"))
            .collect::<Result<Vec<_>>>()?;
        let rows = parameter_stability_scan(&series, &u_grid, fit.k, fit.direction(), &config_of(&fit))?;
        let st = csv_bytes(|w| {
            let mut header = vec!["u".to_string(), "n_blocks".into(), "beta".into(), "nll".into()];
            header.extend((1..=fit.k).map(|i| format!("alpha_{i}")));
            header.push("error".into());
            w.write_record(&header)?;
            for r in &rows {
                let mut rec = vec![
                    format_float(r.u),
                    r.n_blocks.to_string(),
                    format_float(r.beta),
                    format_float(r.nll),
                ];
                for i in 0..fit.k {
                    rec.push(r.alpha.get(i).map(|&x| format_float(x)).unwrap_or_default());
                }
                rec.push(r.error.clone().unwrap_or_default());
                w.write_record(&rec)?;
            }
            Ok(())
        })?;
        ctx.write(&with_suffix(&a.output, "_stability.csv"), &st)?;
    }
    ctx.finish(cli, &with_suffix(&a.output, "_diagnose"), None)
}
