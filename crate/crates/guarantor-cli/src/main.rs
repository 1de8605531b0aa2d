//! Command-line front end: `solve`, `verify`, `oracle`, `sweep`.
//!
//! Outputs are machine-readable (JSON for reports, CSV for curves) and
//! written atomically. Exit codes: 0 solved/verified, 1 verification failed,
//! 2 bad input or solver failure, 3 no optimum exists, 4 unbounded.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::{env, fs, io, process};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use config::{Config, RiskCfg, INSTANCE_SCHEMA, ORACLE_SCHEMA, SOLUTION_SCHEMA, VERIFICATION_SCHEMA};
use guarantor::planner::{self, xi_of_s};
use guarantor::{norm, oracle};
use guarantor::{
    Classification, DensityModel, Plan, ProblemSpec, SolverError, SubsetRow, UtilitySpec,
};

#[derive(Parser)]
#[command(name = "guarantor", version, about = "Design and audit guaranteed-fund payoffs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a config and write the solution JSON plus a payoff CSV.
    Solve { config: PathBuf },
    /// Re-simulate a solution against its config and report pass/fail.
    Verify { config: PathBuf, solution: PathBuf },
    /// Exactly enumerate a small discrete instance.
    Oracle { instance: PathBuf },
    /// Re-solve across a parameter list and write the curve as CSV.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated numbers.
        #[arg(long)]
        values: String,
    },
}

pub enum CliError {
    Io { path: PathBuf, source: io::Error },
    Parse { path: PathBuf, source: serde_json::Error },
    Config(String),
    Solver(SolverError),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config(_) => "config",
            CliError::Solver(e) => match e {
                SolverError::SeedMissing => "seed_missing",
                SolverError::Unbounded { .. } => "unbounded",
                SolverError::NonConvergent { .. } | SolverError::BracketFailure { .. } => {
                    "non_convergent"
                }
                SolverError::InfeasibleTail { .. } => "infeasible_tail",
                SolverError::BudgetExceeded { .. } => "budget_exceeded",
                SolverError::Config(_) | SolverError::Domain(_) => "config",
            },
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(SolverError::Unbounded { .. }) => 4,
            _ => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Io { path, source } => format!("{}: {source}", path.display()),
            CliError::Parse { path, source } => format!("{}: {source}", path.display()),
            CliError::Config(msg) => msg.clone(),
            CliError::Solver(e) => e.to_string(),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let doc = serde_json::json!({"error": {"kind": e.kind(), "message": e.message()}});
            eprintln!("{doc}");
            e.exit_code()
        }
    };
    process::exit(code);
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.cmd {
        Cmd::Solve { config } => cmd_solve(config),
        Cmd::Verify { config, solution } => cmd_verify(config, solution),
        Cmd::Oracle { instance } => cmd_oracle(instance),
        Cmd::Sweep { config, param, values } => cmd_sweep(config, param, values),
    }
}

#[derive(Serialize, Deserialize)]
struct SolutionDoc {
    schema: String,
    #[serde(flatten)]
    plan: Plan,
}

fn cmd_solve(config_path: &Path) -> Result<i32, CliError> {
    let cfg: Config = load_json(config_path)?;
    let spec = cfg.to_spec()?;
    let plan = planner::solve(&spec).map_err(CliError::Solver)?;

    let doc = SolutionDoc { schema: SOLUTION_SCHEMA.into(), plan };
    let sol_path = out_path(&cfg.outputs.solution, "solution.json");
    write_atomic(&sol_path, &to_json(&doc))?;
    println!("wrote {}", sol_path.display());

    if doc.plan.payoff.is_some() {
        let csv = payoff_csv(&spec, &doc.plan)?;
        let payoff_path = out_path(&cfg.outputs.payoff, "payoff.csv");
        write_atomic(&payoff_path, &csv)?;
        println!("wrote {}", payoff_path.display());
    }

    Ok(match doc.plan.classification {
        Classification::Optimal => 0,
        Classification::NoOptimum => 3,
        Classification::Unbounded => 4,
    })
}

fn cmd_verify(config_path: &Path, solution_path: &Path) -> Result<i32, CliError> {
    let cfg: Config = load_json(config_path)?;
    let spec = cfg.to_spec()?;
    let doc: SolutionDoc = load_json(solution_path)?;
    if doc.schema != SOLUTION_SCHEMA {
        return Err(CliError::Config(format!(
            "unsupported solution schema {:?}, expected {SOLUTION_SCHEMA:?}",
            doc.schema
        )));
    }
    let report = oracle::verify_solution(&spec, &doc.plan, spec.numerics.mc_paths, spec.numerics.seed)
        .map_err(CliError::Solver)?;

    #[derive(Serialize)]
    struct VerificationDoc<'a> {
        schema: &'static str,
        #[serde(flatten)]
        report: &'a oracle::VerificationReport,
    }
    let out = out_path(&cfg.outputs.verification, "verification.json");
    write_atomic(&out, &to_json(&VerificationDoc { schema: VERIFICATION_SCHEMA, report: &report }))?;
    println!("wrote {}", out.display());
    for check in &report.checks {
        println!(
            "{} {}: estimate {:.6e} target {:.6e} (se {:.2e})",
            if check.pass { "pass" } else { "FAIL" },
            check.name,
            check.estimate,
            check.target,
            check.se
        );
    }
    Ok(if report.pass { 0 } else { 1 })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    schema: String,
    states: Vec<(f64, f64)>,
    utility: UtilitySpec,
    risk: RiskCfg,
    x0: f64,
    rho0: f64,
}

fn cmd_oracle(instance_path: &Path) -> Result<i32, CliError> {
    let doc: InstanceDoc = load_json(instance_path)?;
    if doc.schema != INSTANCE_SCHEMA {
        return Err(CliError::Config(format!(
            "unsupported instance schema {:?}, expected {INSTANCE_SCHEMA:?}",
            doc.schema
        )));
    }
    let model = DensityModel::discrete(&doc.states).map_err(CliError::Solver)?;
    let inst = oracle::OracleInstance::new(model, doc.utility, doc.risk.lower()?, doc.x0, doc.rho0)
        .map_err(CliError::Solver)?;
    let res = oracle::enumerate_solve(&inst).map_err(CliError::Solver)?;

    #[derive(Serialize)]
    struct OracleDoc<'a> {
        schema: &'static str,
        n: usize,
        best: &'a SubsetRow,
        best_claim: &'a [f64],
        best_lower: &'a SubsetRow,
        lower_set_gap: f64,
        /// Full table included only when it stays small.
        #[serde(skip_serializing_if = "Option::is_none")]
        rows: Option<&'a [SubsetRow]>,
    }
    let n = doc.states.len();
    let out_doc = OracleDoc {
        schema: ORACLE_SCHEMA,
        n,
        best: &res.best,
        best_claim: &res.best_claim,
        best_lower: &res.best_lower,
        lower_set_gap: res.lower_set_gap,
        rows: if n <= 8 { Some(&res.rows) } else { None },
    };
    let out = out_path(&None, "oracle.json");
    write_atomic(&out, &to_json(&out_doc))?;
    println!("wrote {}", out.display());
    Ok(0)
}

fn cmd_sweep(config_path: &Path, param: &str, values: &str) -> Result<i32, CliError> {
    let cfg: Config = load_json(config_path)?;
    let vals: Vec<f64> = {
        let mut parsed = Vec::new();
        for piece in values.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            parsed.push(
                piece
                    .parse::<f64>()
                    .map_err(|e| CliError::Config(format!("bad value {piece:?}: {e}")))?,
            );
        }
        parsed
    };
    if vals.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }

    let mut csv = String::new();
    match param {
        "c-grid" => {
            let spec = cfg.to_spec()?;
            csv.push_str("c,q,delta_c,lambda_c,v_c\n");
            for &c in &vals {
                let cp = planner::evaluate_at_c(&spec, c).map_err(CliError::Solver)?;
                let lam = cp.lambda.unwrap_or(f64::INFINITY);
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    num(cp.c),
                    num(cp.q),
                    num(cp.delta),
                    num(lam),
                    num(cp.value)
                );
            }
        }
        "rho0" | "delta" | "beta" => {
            csv.push_str(&format!("{param},v_star\n"));
            for &v in &vals {
                let mut varied = cfg.clone();
                match param {
                    "rho0" => varied.risk_budget = v,
                    "delta" => match varied.utility {
                        UtilitySpec::Exponential { .. } => {
                            varied.utility = UtilitySpec::Exponential { delta: v }
                        }
                        other => {
                            return Err(CliError::Config(format!(
                                "delta sweep needs an exponential utility, config has {other:?}"
                            )))
                        }
                    },
                    _ => match varied.risk {
                        RiskCfg::Entropic { .. } => varied.risk = RiskCfg::Entropic { beta: v },
                        ref other => {
                            return Err(CliError::Config(format!(
                                "beta sweep needs an entropic risk, config has {other:?}"
                            )))
                        }
                    },
                }
                let plan = planner::solve(&varied.to_spec()?).map_err(CliError::Solver)?;
                let v_star = match plan.classification {
                    Classification::Unbounded => f64::INFINITY,
                    _ => plan.value.unwrap_or(f64::NAN),
                };
                let _ = writeln!(csv, "{},{}", num(v), num(v_star));
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown sweep parameter {other:?}; expected rho0, c-grid, delta, or beta"
            )))
        }
    }

    let out = out_path(&cfg.outputs.sweep, "sweep.csv");
    write_atomic(&out, &csv)?;
    println!("wrote {}", out.display());
    Ok(0)
}

/// Payoff curve; priced states for a plain market map onto terminal stock
/// levels, anything else lists the claim against the price density itself.
fn payoff_csv(spec: &ProblemSpec, plan: &Plan) -> Result<String, CliError> {
    let payoff = plan.payoff.as_ref().expect("caller checked");
    let mut csv = String::new();
    match (&spec.market, &spec.model) {
        (Some(market), DensityModel::Lognormal { .. }) => {
            csv.push_str("S_T,x_star,investor_payoff\n");
            let n = 201;
            let drift = (market.b - 0.5 * market.sigma * market.sigma) * market.t;
            let vol = market.sigma * market.t.sqrt();
            for i in 0..n {
                let u = (i as f64 + 1.0) / (n as f64 + 1.0);
                let g = norm::quantile(u).map_err(CliError::Solver)?;
                let s = market.s0 * (drift + vol * g).exp();
                let x = payoff.eval(xi_of_s(market, s));
                let _ = writeln!(csv, "{},{},{}", num(s), num(x), num(spec.z + x.max(0.0)));
            }
        }
        (_, DensityModel::Discrete { .. }) => {
            csv.push_str("xi,x_star\n");
            for st in spec.model.states().expect("discrete") {
                let _ = writeln!(csv, "{},{}", num(st.xi), num(payoff.eval(st.xi)));
            }
        }
        _ => {
            csv.push_str("xi,x_star\n");
            let n = 201;
            for i in 0..n {
                let u = (i as f64 + 1.0) / (n as f64 + 1.0);
                let xi = spec.model.quantile(u).map_err(CliError::Solver)?;
                let _ = writeln!(csv, "{},{}", num(xi), num(payoff.eval(xi)));
            }
        }
    }
    Ok(csv)
}

/// 17 significant digits: lossless for f64 and byte-stable across runs.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text =
        fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse { path: path.into(), source })
}

fn out_path(name: &Option<String>, default_name: &str) -> PathBuf {
    let name = name.as_deref().unwrap_or(default_name);
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        env::var_os("GUARANTOR_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| ".".into()).join(p)
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let err = |source: io::Error| CliError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(err)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}
