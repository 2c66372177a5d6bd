use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use gowers::cubical::{cubical_convolution, multconv_approx, MultconvOptions, Strategy};
use gowers::error::BUDGET_ENV;
use gowers::forms::{partition_rank_exhaustive, MultilinearForm};
use gowers::inverse::{inverse_theorem, PsiStrategy, R1Strategy};
use gowers::io::{
    bias_report, compute_norm, inverse_config, load_value, verify_artifact, write_atomic, Artifact, CubconvReport,
    Generator, NormInput, NormKind, RunConfig,
};
use gowers::spectrum::mls_enumerate;
use gowers::{Budget, CubicalFamily, Error, FunctionTable, GroupSpec, Polynomial, Result};

#[derive(Parser)]
#[command(name = "gowers", version, about = "Uniformity norms, cubical convolutions and multilinear forms over F_p")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1e-9)]
    tolerance: f64,
    /// Tuple-count cap for exhaustive stages.
    #[arg(long, global = true, env = BUDGET_ENV)]
    budget: Option<u128>,
    /// Write the artifact here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Re-verify the artifact before emitting it.
    #[arg(long, global = true)]
    verify: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Uniformity, box, directional or mixed norm; several inputs or parameters give a CSV sweep.
    Norm {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        kind: NormKind,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        r: Vec<usize>,
        /// JSON list of `{"basis": [[..], ..]}` subspaces.
        #[arg(long)]
        subspaces: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Cubical convolution of a family (or of a single function), optionally with a multiaffine fit.
    Cubconv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value = "exhaustive")]
        strategy: Strategy,
        #[arg(long, default_value_t = 3)]
        max_components: usize,
    },
    /// Large multilinear spectrum by enumeration.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Bias and analytic rank of a multilinear form.
    Bias {
        #[arg(long)]
        input: PathBuf,
    },
    /// Exhaustive partition rank.
    Prank {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_rank: usize,
    },
    /// Inverse pipeline for the mixed norm of order r.
    Inverse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value = "exhaustive")]
        r1: R1Strategy,
        #[arg(long, default_value = "exhaustive")]
        psi: PsiStrategy,
        #[arg(long, default_value_t = 0.0)]
        min_norm: f64,
        #[arg(long, default_value_t = 0.0)]
        correlation_floor: f64,
        /// Only require p >= r + 1.
        #[arg(long)]
        no_strict: bool,
    },
    /// Generate a function table or a random multilinear form.
    Gen {
        #[arg(long)]
        p: u32,
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value = "phase")]
        generator: String,
        /// Polynomial JSON (inline or a file); random of `--degree` when absent.
        #[arg(long)]
        phase: Option<String>,
        #[arg(long, default_value_t = 2)]
        degree: u32,
    },
    /// Re-check an artifact against its embedded inputs.
    Verify {
        #[arg(long)]
        input: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn inline_or_file(s: &str) -> Result<String> {
    let p = Path::new(s);
    if p.is_file() {
        read(p)
    } else {
        Ok(s.to_string())
    }
}

fn load_family(text: &str) -> Result<CubicalFamily> {
    load_value::<CubicalFamily>(text).or_else(|_| load_value::<FunctionTable>(text).map(|f| CubicalFamily::uniform(&f)))
}

enum Output {
    Artifact(Artifact),
    Csv(String),
}

fn run(cli: Cli) -> Result<Output> {
    let g = &cli.global;
    let budget = g.budget.map(Budget).unwrap_or_default();
    let mut config = RunConfig {
        seed: g.seed,
        tolerance: g.tolerance,
        budget,
        output: g.output.as_ref().map(|p| p.display().to_string()),
        ..RunConfig::default()
    };
    let art = match cli.cmd {
        Cmd::Norm { input, kind, k, r, subspaces, csv } => {
            let params: Vec<Option<usize>> = match kind {
                NormKind::Uk => k.into_iter().map(Some).collect(),
                NormKind::Mixed => r.into_iter().map(Some).collect(),
                _ => vec![None],
            };
            let params = if params.is_empty() { vec![None] } else { params };
            let subspaces = match &subspaces {
                Some(p) => Some(serde_json::from_str(&read(p)?).map_err(|e| Error::Input(format!("subspaces: {e}")))?),
                None => None,
            };
            if csv || input.len() * params.len() > 1 {
                let mut w = csv::Writer::from_writer(Vec::new());
                let io = |e: csv::Error| Error::Input(e.to_string());
                w.write_record(["input", "kind", "param", "value", "power_average", "imag_residual"]).map_err(io)?;
                for path in &input {
                    let function: FunctionTable = load_value(&read(path)?)?;
                    for &param in &params {
                        let ni = NormInput { function: function.clone(), kind, param, subspaces: subspaces.clone() };
                        let res = compute_norm(&ni, budget)?;
                        w.write_record([
                            path.display().to_string(),
                            serde_json::to_value(kind)?.as_str().unwrap_or_default().to_string(),
                            param.map(|v| v.to_string()).unwrap_or_default(),
                            format!("{:.17e}", res.value),
                            format!("{:.17e}", res.power_average),
                            format!("{:.3e}", res.imag_residual),
                        ])
                        .map_err(io)?;
                    }
                }
                let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
                return Ok(Output::Csv(String::from_utf8_lossy(&bytes).into_owned()));
            }
            let function: FunctionTable = load_value(&read(&input[0])?)?;
            let group = function.group().clone();
            let ni = NormInput { function, kind, param: params[0], subspaces };
            let res = compute_norm(&ni, budget)?;
            Artifact::new("norm", &group, &config, &ni, res)?
        }
        Cmd::Cubconv { input, eps, strategy, max_components } => {
            let fam = load_family(&read(&input)?)?;
            config.strategy = Some(serde_json::to_value(strategy)?.as_str().unwrap_or_default().to_string());
            let convolution = cubical_convolution(&fam, budget)?;
            let approximation = match eps {
                Some(eps) => {
                    let opts = MultconvOptions { max_components, budget, ..MultconvOptions::default() };
                    Some(multconv_approx(&fam, eps, strategy, &opts)?)
                }
                None => None,
            };
            let group = fam.group().clone();
            let input = json!({ "family": fam, "eps": eps, "max_components": max_components });
            Artifact::new("cubconv", &group, &config, input, CubconvReport { convolution, approximation })?
        }
        Cmd::Spectrum { input, eps } => {
            let f: FunctionTable = load_value(&read(&input)?)?;
            let entries = mls_enumerate(&f, eps, budget)?;
            Artifact::new("spectrum", &f.group().clone(), &config, json!({ "function": f, "eps": eps }), entries)?
        }
        Cmd::Bias { input } => {
            let form: MultilinearForm = load_value(&read(&input)?)?;
            let group = GroupSpec::new(form.p(), form.blocks().to_vec())?;
            let rep = bias_report(&form)?;
            Artifact::new("bias", &group, &config, json!({ "form": form }), rep)?
        }
        Cmd::Prank { input, max_rank } => {
            let form: MultilinearForm = load_value(&read(&input)?)?;
            let group = GroupSpec::new(form.p(), form.blocks().to_vec())?;
            let res = partition_rank_exhaustive(&form, max_rank, budget)?;
            Artifact::new("prank", &group, &config, json!({ "form": form, "max_rank": max_rank }), res)?
        }
        Cmd::Inverse { input, r, r1, psi, min_norm, correlation_floor, no_strict } => {
            let f: FunctionTable = load_value(&read(&input)?)?;
            let mut cfg = inverse_config(budget);
            cfg.r1 = r1;
            cfg.psi = psi;
            cfg.min_norm = min_norm;
            cfg.correlation_floor = correlation_floor;
            cfg.strict_characteristic = !no_strict;
            config.strategy = Some(format!("r1={},psi={}", serde_json::to_value(r1)?, serde_json::to_value(psi)?));
            let w = inverse_theorem(&f, r, &cfg)?;
            Artifact::new("inverse", &f.group().clone(), &config, json!({ "function": f, "r": r, "config": cfg }), w)?
        }
        Cmd::Gen { p, dims, generator, phase, degree } => {
            let group = GroupSpec::new(p, dims)?;
            let poly = || -> Result<Polynomial> {
                match &phase {
                    Some(s) => load_value(&inline_or_file(s)?),
                    None => Ok(Polynomial::random(&group, degree, g.seed)),
                }
            };
            if generator == "form" {
                let form = MultilinearForm::random(p, group.dims().to_vec(), g.seed);
                Artifact::new("form", &group, &config, json!({ "seed": g.seed }), form)?
            } else {
                let gen = match generator.as_str() {
                    "ones" => Generator::Ones,
                    "phase" => Generator::Phase { poly: poly()? },
                    "structured" => Generator::Structured { poly: poly()?, seed: g.seed },
                    "unimodular" => Generator::Unimodular { seed: g.seed },
                    "bounded" => Generator::Bounded { seed: g.seed },
                    "roots" => Generator::Roots { seed: g.seed },
                    other => return Err(Error::Input(format!("unknown generator {other:?}"))),
                };
                let f = gen.build(&group)?;
                Artifact::new("function", &group, &config, json!({ "generator": gen }), f)?
            }
        }
        Cmd::Verify { input } => {
            let a = Artifact::from_json(&read(&input)?)?;
            verify_artifact(&a)?;
            return Ok(Output::Csv(format!("ok {} {}\n", a.kind, input.display())));
        }
    };
    if g.verify {
        verify_artifact(&art)?;
    }
    Ok(Output::Artifact(art))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.global.output.clone();
    let emitted = run(cli).and_then(|o| {
        let text = match o {
            Output::Artifact(a) => a.to_json()?,
            Output::Csv(s) => s,
        };
        match &out {
            Some(path) => write_atomic(path, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    });
    match emitted {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
