//! `ahlab`: verification suites, tensor dumps, symbol certificates and
//! homogeneous flows from the command line.
//!
//! Exit codes: 0 pass, 1 check failure, 2 usage or configuration error.

mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;

use ahlab_core::chern::chern_connection;
use ahlab_core::classify::classified;
use ahlab_core::flows::{integrate_homogeneous, FlowFamily, FlowSpec, MonitorThresholds, Trajectory};
use ahlab_core::report::VerificationReport;
use ahlab_core::riemann::levi_civita;
use ahlab_core::structures::{builtin, homogeneous_builtin};
use ahlab_core::suite::{full_suite, SuiteConfig};
use ahlab_core::symbols::{ak_symbol_certificate, ellipticity_certificate, hermitian_symbol_certificate};
use ahlab_core::tensor::{classify_2tensor, Tensor};
use ahlab_core::PropertyFlags;
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{Certificate, Flags, Format, RunConfig};
use output::{float, matrix_rows, to_json};

/// Threshold on the largest certificate residual for `symbol` to pass.
const SYMBOL_PASS: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "ahlab", version, about = "Numerical laboratory for almost Hermitian geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity suites for a structure at sampled points.
    Verify(Flags),
    /// Print the tensors of a structure at a point.
    Tensors(Flags),
    /// Run principal-symbol certificates on random probes.
    Symbol(Flags),
    /// Integrate a flow on a homogeneous model.
    Flow(Flags),
}

enum Failure {
    Usage(String),
    Check,
}

impl From<ahlab_core::Error> for Failure {
    fn from(e: ahlab_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Usage(e)
    }
}

type Outcome = Result<(), Failure>;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn envelope<'a, T: Serialize>(config: &'a RunConfig, body: T) -> Envelope<'a, T> {
    Envelope {
        tool: "ahlab",
        version: env!("CARGO_PKG_VERSION"),
        config,
        body,
    }
}

fn emit(config: &RunConfig, text: &str) -> Result<(), Failure> {
    match &config.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Usage(format!("cannot write output: {e}")))
        }
    }
}

#[derive(Serialize)]
struct ReportBody<'a> {
    suite: &'a str,
    summary: ahlab_core::report::Summary,
    records: &'a [ahlab_core::report::CheckRecord],
}

fn report_text(report: &VerificationReport) -> String {
    let mut s = String::new();
    for r in &report.records {
        let point = r
            .point
            .as_ref()
            .map(|p| format!(" at [{}]", p.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")))
            .unwrap_or_default();
        let op = match r.bound {
            ahlab_core::report::Bound::Below => "<",
            ahlab_core::report::Bound::Above => ">",
        };
        s.push_str(&format!(
            "{} {} {:.3e} {op} {:.1e}{point}\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.id,
            r.residual,
            r.tolerance
        ));
    }
    let sum = report.summary();
    s.push_str(&format!("{}: {}/{} passed, {} failed\n", report.suite, sum.passed, sum.total, sum.failed));
    s
}

fn cmd_verify(config: &RunConfig) -> Outcome {
    let prov = builtin(config.structure()?, &config.params)?;
    let suite = SuiteConfig {
        points: config.points,
        seed: config.seed,
        tol_analytic: config.tol_analytic,
        tol_fd: config.tol_fd,
        ..SuiteConfig::default()
    };
    let report = full_suite(prov, &suite)?;
    let text = match config.format {
        Format::Json => {
            let body = ReportBody {
                suite: &report.suite,
                summary: report.summary(),
                records: &report.records,
            };
            to_json(&envelope(config, body)) + "\n"
        }
        Format::Text => report_text(&report),
    };
    emit(config, &text)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

#[derive(Serialize)]
struct Entry {
    name: String,
    tensor: Tensor,
    #[serde(skip_serializing_if = "Option::is_none")]
    flags: Option<PropertyFlags>,
}

#[derive(Serialize)]
struct TensorsBody {
    structure: String,
    setting: &'static str,
    point: Vec<f64>,
    scalars: Vec<(String, f64)>,
    tensors: Vec<Entry>,
}

fn cmd_tensors(config: &RunConfig) -> Outcome {
    let prov = builtin(config.structure()?, &config.params)?;
    let point = match &config.point {
        Some(p) => p.clone(),
        None => prov.sample_points(1, config.seed).remove(0),
    };
    let jet = prov.jet_at(&point)?;
    let p = levi_civita(&jet)?;
    let ct = classified(&p);
    let chern = chern_connection(&p, config.tol_analytic.max(1e-9))?;
    let j = p.j_tensor();
    // tensors far below the quadratic scale are reported with exact-zero flags
    let scale = ct.ei(1).abs().max(ahlab_core::tensor::norm(&p.ric)).max(1.0);
    let flags = |t: &Tensor| {
        if t.norm() <= 1e-12 * scale {
            classify_2tensor(&t.scaled(0.0), &j, config.tol_analytic)
        } else {
            classify_2tensor(t, &j, config.tol_analytic)
        }
    };
    let mut tensors = Vec::new();
    let mut push = |name: &str, t: Tensor| {
        let covariant = t.variance().iter().all(|v| *v == ahlab_core::Variance::Down);
        let f = (t.rank() == 2 && covariant).then(|| flags(&t));
        tensors.push(Entry {
            name: name.to_string(),
            tensor: t,
            flags: f,
        });
    };
    push("g", p.g_tensor());
    push("J", j.clone());
    push("DJ", p.dj_tensor());
    push("Rm", p.rm_tensor());
    push("Ric", p.ric_tensor());
    push("theta", p.theta_tensor());
    for i in 1..=10 {
        push(&format!("B{i}"), ct.bi(i).clone());
    }
    push("P", chern.p_tensor());
    push("S", chern.s_tensor());
    let scalars = (1..=4).map(|i| (format!("E{i}"), ct.ei(i))).chain([("scal".to_string(), p.scal)]).collect();
    let body = TensorsBody {
        structure: prov.name(),
        setting: prov.setting().name(),
        point,
        scalars,
        tensors,
    };
    let text = match config.format {
        Format::Json => to_json(&envelope(config, &body)) + "\n",
        Format::Text => {
            let mut s = format!(
                "{} ({}) at [{}]\n",
                body.structure,
                body.setting,
                body.point.iter().map(|v| float(*v)).collect::<Vec<_>>().join(", ")
            );
            for (k, v) in &body.scalars {
                s.push_str(&format!("{k} = {}\n", float(*v)));
            }
            for e in &body.tensors {
                s.push_str(&format!("{}:", e.name));
                if let Some(f) = &e.flags {
                    let names = [
                        ("symmetric", f.symmetric),
                        ("skew", f.skew),
                        ("(1,1)", f.type11),
                        ("(0,2)+(2,0)", f.type0220),
                    ];
                    let on: Vec<&str> = names.iter().filter(|(_, b)| *b).map(|(n, _)| *n).collect();
                    s.push_str(&format!(" [{}]", on.join(", ")));
                }
                s.push('\n');
                if e.tensor.rank() <= 2 {
                    for row in matrix_rows(e.tensor.data(), e.tensor.rank()) {
                        s.push_str(&format!("  {row}\n"));
                    }
                } else {
                    s.push_str(&format!("  rank {}, norm {:.6e}\n", e.tensor.rank(), e.tensor.norm()));
                }
            }
            s
        }
    };
    emit(config, &text)
}

#[derive(Serialize)]
struct SymbolBody<'a> {
    reports: &'a [VerificationReport],
    max_residual: f64,
    threshold: f64,
    pass: bool,
}

fn cmd_symbol(config: &RunConfig) -> Outcome {
    let (seed, trials, dim) = (config.seed, config.trials, config.dim);
    let mut reports = Vec::new();
    let want = |c: Certificate| config.certificate == Certificate::All || config.certificate == c;
    if want(Certificate::Ellipticity) {
        reports.push(ellipticity_certificate(seed, trials, dim)?);
    }
    if want(Certificate::Hermitian) {
        reports.push(hermitian_symbol_certificate(seed, trials, dim)?);
    }
    if want(Certificate::Ak) {
        reports.push(ak_symbol_certificate(seed, trials, dim)?);
    }
    let max_residual = reports
        .iter()
        .map(|r| r.max_residual(""))
        .fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) });
    let pass = max_residual < SYMBOL_PASS;
    let text = match config.format {
        Format::Json => {
            let body = SymbolBody {
                reports: &reports,
                max_residual,
                threshold: SYMBOL_PASS,
                pass,
            };
            to_json(&envelope(config, body)) + "\n"
        }
        Format::Text => {
            let mut s = String::new();
            for r in &reports {
                let sum = r.summary();
                s.push_str(&format!(
                    "{}: max residual {:.3e} over {} records\n",
                    r.suite,
                    r.max_residual(""),
                    sum.total
                ));
            }
            s.push_str(&format!(
                "{} max residual {:.3e} (threshold {:.0e})\n",
                if pass { "PASS" } else { "FAIL" },
                max_residual,
                SYMBOL_PASS
            ));
            s
        }
    };
    emit(config, &text)?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

#[derive(Serialize)]
struct FlowBody<'a> {
    structure: &'a str,
    spec: &'a FlowSpec,
    status: &'a ahlab_core::flows::FlowStatus,
    steps: usize,
    final_state: &'a ahlab_core::flows::FlowRecord,
    drift: f64,
}

fn cmd_flow(config: &RunConfig) -> Outcome {
    let family: FlowFamily = config
        .flow
        .as_deref()
        .ok_or_else(|| "flow needs --flow ahcf|scf|hcf".to_string())?
        .parse()?;
    let model = homogeneous_builtin(config.structure()?, &config.params)?;
    let spec = FlowSpec {
        family,
        a: config.a,
        q1: config.q1.clone(),
        q2: config.q2.clone(),
        hcf: config.hcf,
    };
    spec.validate()?;
    let traj: Trajectory = integrate_homogeneous(&model, &spec, config.t_end, config.dt, &MonitorThresholds::default())?;
    let records: String = match config.format {
        Format::Json => traj.records.iter().map(|r| to_json(r) + "\n").collect(),
        Format::Text => traj
            .records
            .iter()
            .map(|r| {
                format!(
                    "t={:.6} compat={:.3e} j2={:.3e} min_eig={:.6}\n",
                    r.t, r.monitors.compatibility, r.monitors.j_squared, r.monitors.min_eig_g
                )
            })
            .collect(),
    };
    let body = FlowBody {
        structure: &traj.structure,
        spec: &traj.spec,
        status: &traj.status,
        steps: traj.records.len() - 1,
        final_state: traj.last(),
        drift: traj.drift(),
    };
    let summary = match config.format {
        Format::Json => to_json(&envelope(config, body)) + "\n",
        Format::Text => format!(
            "{}: {} steps, status {:?}, drift {:.3e}\n",
            body.structure, body.steps, body.status, body.drift
        ),
    };
    emit(config, &records)?;
    // the trajectory owns stdout unless it went to a file
    if config.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    if traj.completed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = match &cli.command {
        Command::Verify(f) => ("verify", f),
        Command::Tensors(f) => ("tensors", f),
        Command::Symbol(f) => ("symbol", f),
        Command::Flow(f) => ("flow", f),
    };
    let result = RunConfig::resolve(name, flags).map_err(Failure::Usage).and_then(|config| match name {
        "verify" => cmd_verify(&config),
        "tensors" => cmd_tensors(&config),
        "symbol" => cmd_symbol(&config),
        _ => cmd_flow(&config),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
