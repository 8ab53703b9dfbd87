//! The per-command drivers behind `--command`.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{BuiltModel, GreenParams, SignalSpec};
use super::Context;
use crate::error::{Error, Result};
use crate::evolution::{classify_stability, trajectory, StateSampler, OMEGA_FLOOR};
use crate::green::{estimate_admissibility, green_apply};
use crate::lp::{indicator, lp_norm, Exponent, SampledSignal};
use crate::mild::solve_mild;
use crate::stability::certify_from_admissibility;
use crate::state::{self, State};

fn model_kind(cfg: &super::ModelConfig) -> &'static str {
    match cfg {
        super::ModelConfig::ClosedFormLinear { .. } => "closed_form_linear",
        super::ModelConfig::ScalarH { .. } => "scalar_h",
        super::ModelConfig::SpectralHeat { .. } => "spectral_heat",
    }
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    index: usize,
    file: String,
    t0: f64,
    x0: State,
    final_state: State,
    max_norm: f64,
    picard_iterations: Option<usize>,
    picard_residual: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    model: &'static str,
    dim: usize,
    horizon: f64,
    dt: f64,
    trajectories: Vec<TrajectoryRow>,
}

pub fn simulate(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config()?.clone();
    let grid = cfg.grid.grid()?;
    let model = BuiltModel::build(&cfg.model)?;
    let family = model.family();
    let dim = family.dim();
    let params = cfg.simulate.clone().unwrap_or_default();
    let initial = if params.initial.is_empty() { vec![vec![1.0; dim]] } else { params.initial.clone() };

    let mut rows = Vec::with_capacity(initial.len());
    for (index, given) in initial.iter().enumerate() {
        if given.len() > dim {
            return Err(Error::InvalidConfig(format!(
                "simulate.initial[{index}] has {} entries but the model has dimension {dim}",
                given.len()
            )));
        }
        let mut x0 = given.clone();
        x0.resize(dim, 0.0);
        let traj = trajectory(family, params.t0, &x0, grid)?;
        let (picard_iterations, picard_residual) = match model.mild_parts() {
            Some((linear, f, solver)) if grid.end() > params.t0 => {
                let sol = solve_mild(linear, f, params.t0, &x0, grid.end() - params.t0, solver)?;
                (Some(sol.iterations), Some(sol.residual))
            }
            _ => (None, None),
        };
        let file = format!("trajectory_{index}.csv");
        ctx.write_signal(&file, &traj.path)?;
        rows.push(TrajectoryRow {
            index,
            file,
            t0: params.t0,
            x0,
            final_state: traj.path.values.last().cloned().unwrap_or_default(),
            max_norm: traj.path.values.iter().map(|v| state::norm(v)).fold(0.0, f64::max),
            picard_iterations,
            picard_residual,
        });
    }
    let residuals: Vec<Option<f64>> = rows.iter().map(|r| r.picard_residual).collect();
    ctx.note("residuals", json!(residuals));
    let report = SimulateReport {
        model: model_kind(&cfg.model),
        dim,
        horizon: cfg.grid.horizon,
        dt: cfg.grid.dt,
        trajectories: rows,
    };
    ctx.write_report("simulate.json", &report)?;
    println!("simulate: wrote {} trajectories to {}", report.trajectories.len(), ctx.out_dir.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct GreenReport {
    model: &'static str,
    dim: usize,
    len: usize,
    dt: f64,
    input_file: String,
    output_file: String,
    input_sup: f64,
    output_sup: f64,
    output_l1: f64,
    output_l2: f64,
}

pub fn green(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config()?.clone();
    let grid = cfg.grid.grid()?;
    let model = BuiltModel::build(&cfg.model)?;
    let family = model.family();
    let dim = family.dim();
    let params = cfg.green.clone().unwrap_or(GreenParams { signal: SignalSpec::Zero });
    let input = match &params.signal {
        SignalSpec::Zero => SampledSignal::zeros(grid, dim),
        SignalSpec::Indicator { a, b, amplitude } => {
            if amplitude.len() != dim {
                return Err(Error::InvalidConfig(format!(
                    "green.signal.amplitude has {} entries but the model has dimension {dim}",
                    amplitude.len()
                )));
            }
            indicator(*a, *b, amplitude, grid)?
        }
        SignalSpec::Csv { path } => {
            let signal = SampledSignal::load_csv(path)?;
            if signal.dim() != dim {
                return Err(Error::InvalidConfig(format!(
                    "{} has {} components but the model has dimension {dim}",
                    path.display(),
                    signal.dim()
                )));
            }
            signal
        }
    };
    let output = green_apply(family, &input)?;
    ctx.write_signal("green_input.csv", &input)?;
    ctx.write_signal("green_output.csv", &output)?;
    let report = GreenReport {
        model: model_kind(&cfg.model),
        dim,
        len: output.len(),
        dt: output.dt,
        input_file: "green_input.csv".into(),
        output_file: "green_output.csv".into(),
        input_sup: lp_norm(&input, Exponent::Infinity),
        output_sup: lp_norm(&output, Exponent::Infinity),
        output_l1: lp_norm(&output, Exponent::Finite(1.0)),
        output_l2: lp_norm(&output, Exponent::Finite(2.0)),
    };
    ctx.write_report("green.json", &report)?;
    println!("green: sup ‖𝔾f‖ = {:e}", report.output_sup);
    Ok(())
}

pub fn admissibility(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config()?.clone();
    let params = cfg
        .admissibility
        .clone()
        .ok_or_else(|| Error::InvalidConfig("missing [admissibility] section with p and q".into()))?;
    let grid = cfg.grid.grid()?;
    let model = BuiltModel::build(&cfg.model)?;
    let report = estimate_admissibility(model.family(), params.p, params.q, grid, params.n_test_pairs, cfg.seed)?;
    ctx.write_report("admissibility.json", &report)?;
    println!(
        "admissibility: K_estimate = {} for (p, q) = ({}, {}) over {} pairs ({})",
        report.k_estimate, report.p, report.q, report.n_valid_pairs, report.estimate_quality
    );
    Ok(())
}

/// `(K, p, q, source)` from a prior admissibility report.
fn read_admissibility(path: &PathBuf) -> Result<(f64, Exponent, Exponent)> {
    let text = std::fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text)?;
    let body = doc.get("report").unwrap_or(&doc);
    let bad = || Error::InvalidConfig(format!("{} is not an admissibility report", path.display()));
    let k = body.get("K_estimate").and_then(Value::as_f64).ok_or_else(bad)?;
    let p: Exponent = serde_json::from_value(body.get("p").cloned().ok_or_else(bad)?)?;
    let q: Exponent = serde_json::from_value(body.get("q").cloned().ok_or_else(bad)?)?;
    Ok((k, p, q))
}

#[derive(Debug, Serialize)]
struct CertifyReport {
    k_source: String,
    certificate: crate::stability::StabilityCertificate,
    trace: Vec<String>,
}

pub fn certify(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config()?.clone();
    let params = cfg.certify.clone().unwrap_or_default();
    let model = BuiltModel::build(&cfg.model)?;

    let (k, p, q, k_source) = if let Some(k) = params.k {
        let (p, q) = match (params.p, params.q) {
            (Some(p), Some(q)) => (p, q),
            _ => return Err(Error::InvalidConfig("certify.K given inline also needs certify.p and certify.q".into())),
        };
        (k, p, q, "inline".to_string())
    } else {
        let path = params.report.clone().unwrap_or_else(|| ctx.out_dir.join("admissibility.json"));
        if !path.exists() {
            return Err(Error::Dependency(format!(
                "certify needs an admissibility constant: set certify.K or run the `admissibility` command first (no report at {})",
                path.display()
            )));
        }
        let (k, rp, rq) = read_admissibility(&path)?;
        let p = params.p.unwrap_or(rp);
        let q = params.q.unwrap_or(rq);
        if p != rp || q != rq {
            return Err(Error::InvalidConfig(format!(
                "report {} estimates K for (p, q) = ({rp}, {rq}), but certify asks for ({p}, {q})",
                path.display()
            )));
        }
        (k, p, q, path.display().to_string())
    };

    let growth = model.family().growth();
    let m = params.m.unwrap_or(growth.m);
    let omega = params.omega.unwrap_or(growth.omega.max(OMEGA_FLOOR));
    let certificate = certify_from_admissibility(k, m, omega, p, q)?;
    let trace = certificate.trace();
    for line in &trace {
        println!("{line}");
    }
    ctx.write_report("certificate.json", &CertifyReport { k_source, certificate, trace })?;
    Ok(())
}

pub fn classify(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config()?.clone();
    let grid = cfg.grid.grid()?;
    let model = BuiltModel::build(&cfg.model)?;
    let family = model.family();
    let classify_cfg = cfg.classify.clone().unwrap_or_default().to_config(cfg.seed);
    let sampler = StateSampler::unit_cube(family.dim());
    let report = classify_stability(family, grid, &sampler, classify_cfg)?;
    ctx.write_report("classify.json", &report)?;
    println!(
        "classify: uniformly stable = {}, uniformly exponentially stable = {}, asymptotically stable = {}",
        report.uniformly_stable, report.uniformly_exponentially_stable, report.asymptotically_stable
    );
    if let Some((n, nu)) = report.certificate() {
        println!("classify: fitted ‖X(t,s)‖_lip ≤ {n} e^(−{nu}(t−s))");
    }
    Ok(())
}
