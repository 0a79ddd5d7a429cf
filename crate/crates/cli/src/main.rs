//! bk-lab: exact computations with rank-2 Breuil-Kisin modules with tame
//! descent data over finite fields. JSON on stdout, diagnostics on stderr;
//! exit 0 = all requested checks pass, 1 = a check failed, 2 = malformed
//! input.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use bklab_core::bk::{strong_det_check, type_of, validate};
use bklab_core::census::{census, CensusOptions};
use bklab_core::dieudonne::{dieudonne_of, eta_coordinates};
use bklab_core::error::BkError;
use bklab_core::json as wire;
use bklab_core::locmodel::{
    cuspidal_to_iwahori, pair_kottwitz, pair_strong_det, pair_type, to_hyperspecial, to_iwahori,
    wedge_zero, KottwitzMode,
};

#[derive(Parser)]
#[command(name = "bk-lab", version, about = "Breuil-Kisin modules with tame descent data")]
struct Cli {
    /// Context JSON file; when given, must agree with the context embedded
    /// in the input object.
    #[arg(long, global = true)]
    ctx: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a module and report type and strong determinant data.
    Check {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        height: usize,
        /// Also run the strong determinant check (rank 2, height 1).
        #[arg(long)]
        strong_det: bool,
    },
    /// Compute the local model pair of a height-1 module.
    Psi { file: PathBuf },
    /// Extract the Dieudonne module and eta-line coordinates.
    Dieudonne {
        file: PathBuf,
        #[arg(long)]
        eta: Option<u64>,
    },
    /// Local model pair operations.
    Locmodel {
        #[command(subcommand)]
        cmd: LocmodelCmd,
    },
    /// Enumerate a grid of modules.
    Enumerate {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        precision: Option<usize>,
    },
    /// Run the census over a grid.
    Census {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        precision: Option<usize>,
        /// Node budget for isomorphism searches.
        #[arg(long)]
        budget: Option<u64>,
        /// Classify modules up to phi-conjugacy.
        #[arg(long)]
        classify: bool,
        /// Skip the doubled-precision stability re-run.
        #[arg(long)]
        no_stability: bool,
    },
}

#[derive(Subcommand)]
enum LocmodelCmd {
    /// Determinant-condition report for a pair.
    Check { file: PathBuf },
    /// Convert a pair to hyperspecial / Iwahori / cuspidal-Iwahori form.
    Convert {
        file: PathBuf,
        #[arg(long, value_enum)]
        target: ConvertTarget,
        #[arg(long)]
        eta: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertTarget {
    Hyp,
    Iw,
    CuspIw,
}

enum Outcome {
    Pass(Value),
    Fail(Value),
}

fn read_json(path: &PathBuf) -> Result<Value, BkError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BkError::malformed(path.display().to_string(), e.to_string()))?;
    serde_json::from_str(&text)
        .map_err(|e| BkError::malformed(path.display().to_string(), format!("invalid JSON: {e}")))
}

fn check_ctx_override(cli_ctx: &Option<PathBuf>, embedded: &Value) -> Result<(), BkError> {
    let Some(path) = cli_ctx else {
        return Ok(());
    };
    let v = read_json(path)?;
    let given = wire::context_from_json(&v)?;
    let object = embedded
        .get("context")
        .ok_or_else(|| BkError::malformed("/context", "missing context"))?;
    let inner = wire::context_from_json(object)?;
    if wire::context_to_json(&given) != wire::context_to_json(&inner) {
        return Err(BkError::Precondition(
            "--ctx does not match the context embedded in the input".into(),
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome, BkError> {
    match cli.command {
        Command::Check {
            file,
            height,
            strong_det,
        } => {
            let v = read_json(&file)?;
            check_ctx_override(&cli.ctx, &v)?;
            let m = wire::module_from_json(&v)?;
            let report = validate(&m, height)?;
            let mut out = json!({
                "validate": wire::validation_report_to_json(&report),
            });
            let mut pass = report.pass;
            if report.pass {
                let (t, unmixed) = type_of(&m)?;
                out["type"] = json!({
                    "components": t.components,
                    "unmixed": unmixed,
                });
                if strong_det {
                    let sd = strong_det_check(&m)?;
                    pass = pass && sd.pass;
                    out["strong_det"] = wire::strong_det_report_to_json(&sd);
                }
            }
            Ok(if pass {
                Outcome::Pass(out)
            } else {
                Outcome::Fail(out)
            })
        }
        Command::Psi { file } => {
            let v = read_json(&file)?;
            check_ctx_override(&cli.ctx, &v)?;
            let m = wire::module_from_json(&v)?;
            let report = validate(&m, 1)?;
            if !report.pass {
                return Ok(Outcome::Fail(json!({
                    "error": "module is not a valid height-1 module",
                    "validate": wire::validation_report_to_json(&report),
                })));
            }
            let pair = bklab_core::locmodel::psi(&m)?;
            Ok(Outcome::Pass(wire::pair_to_json(&pair)))
        }
        Command::Dieudonne { file, eta } => {
            let v = read_json(&file)?;
            check_ctx_override(&cli.ctx, &v)?;
            let m = wire::module_from_json(&v)?;
            let report = validate(&m, 1)?;
            if !report.pass {
                return Ok(Outcome::Fail(json!({
                    "error": "module is not a valid height-1 module",
                    "validate": wire::validation_report_to_json(&report),
                })));
            }
            let dm = dieudonne_of(&m)?;
            let mut out = json!({ "dieudonne": wire::dieudonne_to_json(&dm) });
            if let Some(eta) = eta {
                let coords = eta_coordinates(&dm, eta)?;
                out["coordinates"] = wire::coordinates_to_json(&coords);
            }
            Ok(Outcome::Pass(out))
        }
        Command::Locmodel { cmd } => match cmd {
            LocmodelCmd::Check { file } => {
                let v = read_json(&file)?;
                check_ctx_override(&cli.ctx, &v)?;
                let pair = wire::pair_from_json(&v)?;
                pair.validate()?;
                let sd = pair_strong_det(&pair)?;
                let kd = pair_kottwitz(&pair, KottwitzMode::Dims)?;
                let ks = pair_kottwitz(&pair, KottwitzMode::Symbolic)?;
                let t = pair_type(&pair)?;
                let wz = if kd { Some(wedge_zero(&pair)?) } else { None };
                let out = json!({
                    "type": t.components,
                    "strong_det": {"dims": sd.dims, "pass": sd.pass},
                    "kottwitz": {"dims": kd, "symbolic": ks},
                    "wedge_zero": wz,
                });
                Ok(if sd.pass {
                    Outcome::Pass(out)
                } else {
                    Outcome::Fail(out)
                })
            }
            LocmodelCmd::Convert { file, target, eta } => {
                let v = read_json(&file)?;
                check_ctx_override(&cli.ctx, &v)?;
                let pair = wire::pair_from_json(&v)?;
                pair.validate()?;
                let out = match target {
                    ConvertTarget::Hyp => {
                        let eta = eta.ok_or_else(|| {
                            BkError::Precondition("--eta is required for hyperspecial".into())
                        })?;
                        let h = to_hyperspecial(&pair, eta)?;
                        json!({
                            "hyperspecial": wire::hyperspecial_to_json(&h),
                            "bt": bklab_core::locmodel::hyperspecial_bt(&h),
                        })
                    }
                    ConvertTarget::Iw => {
                        let eta = eta.ok_or_else(|| {
                            BkError::Precondition("--eta is required for iwahori".into())
                        })?;
                        let iw = to_iwahori(&pair, eta)?;
                        json!({
                            "iwahori": wire::iwahori_to_json(&iw),
                            "bt": bklab_core::locmodel::iwahori_bt(&iw),
                        })
                    }
                    ConvertTarget::CuspIw => {
                        let iw = cuspidal_to_iwahori(&pair)?;
                        json!({
                            "iwahori": wire::iwahori_to_json(&iw),
                            "bt": bklab_core::locmodel::iwahori_bt(&iw),
                        })
                    }
                };
                Ok(Outcome::Pass(out))
            }
        },
        Command::Enumerate {
            grid,
            seed,
            precision,
        } => {
            let v = read_json(&grid)?;
            let mut g = wire::grid_from_json(&v)?;
            if let Some(s) = seed {
                g.seed = s;
            }
            if precision.is_some() {
                g.prec = precision;
            }
            let (modules, stats) = bklab_core::grid::enumerate(&g)?;
            let out = json!({
                "stats": {
                    "candidates": stats.candidates,
                    "rejected": stats.by_reason,
                    "valid": modules.len(),
                },
                "modules": modules.iter().map(wire::module_to_json).collect::<Vec<_>>(),
            });
            Ok(Outcome::Pass(out))
        }
        Command::Census {
            grid,
            seed,
            precision,
            budget,
            classify,
            no_stability,
        } => {
            let v = read_json(&grid)?;
            let mut g = wire::grid_from_json(&v)?;
            if let Some(s) = seed {
                g.seed = s;
            }
            if precision.is_some() {
                g.prec = precision;
            }
            let mut opts = CensusOptions::default();
            if let Some(b) = budget {
                opts.iso_budget = b;
            }
            opts.classify = classify;
            opts.precision_stability = !no_stability;
            let report = census(&g, &opts)?;
            let out = report.to_json();
            if report.all_properties_pass() {
                Ok(Outcome::Pass(out))
            } else {
                let failure = report.first_failure().expect("violations present");
                eprintln!(
                    "census property '{}' failed; minimal witness serialized in the report",
                    failure.name
                );
                Ok(Outcome::Fail(out))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass(v)) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Ok(Outcome::Fail(v)) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
