use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use distmu_core::automaton::Automaton;
use distmu_core::graph::{Digraph, PointedDigraph};
use distmu_core::harness::{self, Device, EquivVerdict, FuzzVerdict};
use distmu_core::logic::{lfp, MuSystem};
use distmu_core::runtime::{
    async_run, default_budget, sample_timing, Consistency, TimingPrefix, TimingWitness,
    DEFAULT_P_ACTIVE, DEFAULT_STARVATION_BOUND,
};
use distmu_core::transform::{automaton_to_formula, compute_enables, formula_to_automaton};

#[derive(Parser)]
#[command(
    name = "distmu",
    version,
    about = "Distributed automata and backward mu-formulas on labeled digraphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a formula on a digraph
    Eval {
        #[arg(long)]
        formula: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Report only this node; exit 1 if it is not satisfied
        #[arg(long)]
        point: Option<String>,
    },
    /// Run an automaton on a digraph and print the run report
    Run(RunArgs),
    /// Translate a formula into an equivalent automaton
    CompileUp {
        #[arg(long)]
        formula: PathBuf,
        /// Label width of the automaton (defaults to the formula's)
        #[arg(long)]
        bits: Option<usize>,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Translate a lossless-asynchronous automaton into a formula
    CompileDown {
        #[arg(long)]
        automaton: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Report quasi-acyclicity, totality and trace count
    Check {
        #[arg(long)]
        automaton: PathBuf,
    },
    /// Search for timing-dependent verdicts on random digraphs
    Fuzz {
        #[arg(long)]
        automaton: PathBuf,
        #[arg(long, default_value_t = 5)]
        max_nodes: usize,
        /// Timings sampled per digraph
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Number of random digraphs
        #[arg(long, default_value_t = 50)]
        graphs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        lossless_only: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare two devices (.json automaton or .sexp formula)
    Equiv {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        max_nodes: usize,
        /// Check this many random digraphs instead of all of them
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write the enables relation of an automaton as JSON lines
    Enables {
        #[arg(long)]
        automaton: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    automaton: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Timing prefix document
    #[arg(long, conflicts_with_all = ["sync", "sample"])]
    timing: Option<PathBuf>,
    /// Synchronous timing (the default)
    #[arg(long, conflicts_with = "sample")]
    sync: bool,
    /// Sample a fair timing prefix of this many steps
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0, requires = "sample")]
    seed: u64,
    #[arg(long, requires = "sample")]
    lossless: bool,
    #[arg(long, default_value_t = DEFAULT_STARVATION_BOUND, requires = "sample")]
    starvation_bound: usize,
    /// Stop at the end of the prefix even for quasi-acyclic automata
    #[arg(long)]
    no_extend: bool,
}

/// A failure attributable to the input rather than a negative verdict.
struct InputError(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(InputError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_graph(path: &Path) -> Result<Digraph> {
    Digraph::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_automaton(path: &Path) -> Result<Automaton> {
    Automaton::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_formula(path: &Path) -> Result<MuSystem> {
    MuSystem::parse(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_device(path: &Path) -> Result<Device> {
    Device::load(path).with_context(|| format!("in {}", path.display()))
}

fn print_json(v: &Value) {
    let text = serde_json::to_string_pretty(v).expect("values serialize");
    // a closed pipe is not worth a panic
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn run(command: Command) -> Result<bool, InputError> {
    match command {
        Command::Eval {
            formula,
            graph,
            point,
        } => eval(&formula, &graph, point.as_deref()),
        Command::Run(args) => run_automaton(args),
        Command::CompileUp {
            formula,
            bits,
            output,
        } => {
            let mut sys = load_formula(&formula)?;
            if let Some(bits) = bits {
                sys = sys.with_bits(bits)?;
            }
            let a = formula_to_automaton(&sys)?;
            write(&output, &a.to_json())?;
            eprintln!("{} states written to {}", a.state_count(), output.display());
            Ok(true)
        }
        Command::CompileDown { automaton, output } => {
            let a = load_automaton(&automaton)?;
            eprintln!(
                "warning: the result matches the automaton only if it is lossless-asynchronous; this is not checked"
            );
            let sys = automaton_to_formula(&a)?;
            write(&output, &format!("{}\n", sys.to_sexp()))?;
            eprintln!(
                "{} variables written to {}",
                sys.var_count(),
                output.display()
            );
            Ok(true)
        }
        Command::Check { automaton } => {
            let a = load_automaton(&automaton)?;
            let acyclic = a.is_quasi_acyclic()?;
            println!("states: {}", a.state_count());
            println!("total: true");
            println!("quasi-acyclic: {acyclic}");
            if acyclic {
                println!("traces: {}", a.traces()?.len());
            }
            Ok(acyclic)
        }
        Command::Fuzz {
            automaton,
            max_nodes,
            samples,
            graphs,
            seed,
            lossless_only,
            jobs,
        } => {
            if max_nodes == 0 {
                return Err(anyhow!("--max-nodes must be at least 1").into());
            }
            let a = load_automaton(&automaton)?;
            let v = harness::fuzz_consistency(
                &a,
                max_nodes,
                graphs,
                samples,
                lossless_only,
                seed,
                jobs,
            )?;
            print_json(&fuzz_json(&v));
            Ok(matches!(v, FuzzVerdict::ConsistentUpToBudget { .. }))
        }
        Command::Equiv {
            a,
            b,
            max_nodes,
            samples,
            seed,
            jobs,
        } => {
            if max_nodes == 0 {
                return Err(anyhow!("--max-nodes must be at least 1").into());
            }
            let (d1, d2) = (load_device(&a)?, load_device(&b)?);
            let bits = d1.bits().max(d2.bits());
            let (d1, d2) = (d1.widen_to(bits)?, d2.widen_to(bits)?);
            let v = match samples {
                Some(n) => harness::equiv_sampled_jobs(&d1, &d2, max_nodes, n, seed, jobs)?,
                None => harness::equiv_exhaustive_jobs(&d1, &d2, max_nodes, jobs)?,
            };
            print_json(&v.to_json());
            Ok(matches!(v, EquivVerdict::Equivalent { .. }))
        }
        Command::Enables { automaton, output } => {
            let a = load_automaton(&automaton)?;
            let es = compute_enables(&a)?;
            write(&output, &es.to_jsonl(&a))?;
            eprintln!(
                "{} pairs over {} traces in {} rounds written to {}",
                es.pair_count(),
                es.traces().len(),
                es.iterations_used,
                output.display()
            );
            Ok(true)
        }
    }
}

fn eval(formula: &Path, graph: &Path, point: Option<&str>) -> Result<bool, InputError> {
    let g = load_graph(graph)?;
    let mut sys = load_formula(formula)?;
    if sys.bits() < g.bits() {
        sys = sys.with_bits(g.bits())?;
    }
    let fp = lfp(&sys, &g)?;
    let members =
        |x: usize| -> Vec<&str> { fp.valuation.get(x).ones().map(|v| g.node_id(v)).collect() };
    let fixpoint: Map<String, Value> = sys
        .vars()
        .iter()
        .enumerate()
        .map(|(x, name)| (name.clone(), json!(members(x))))
        .collect();
    let x0 = fp.valuation.get(0);
    let (satisfied, verdict) = match point {
        Some(id) => {
            let p = PointedDigraph::new(g.clone(), id)?;
            let holds = x0.contains(p.point);
            (json!({ id: holds }), holds)
        }
        None => {
            let all: Map<String, Value> = (0..g.node_count())
                .map(|v| (g.node_id(v).to_string(), json!(x0.contains(v))))
                .collect();
            (Value::Object(all), true)
        }
    };
    print_json(&json!({
        "satisfied": satisfied,
        "fixpoint": fixpoint,
        "iterations": fp.iterations,
    }));
    Ok(verdict)
}

fn run_automaton(args: RunArgs) -> Result<bool, InputError> {
    let a = load_automaton(&args.automaton)?;
    let g = load_graph(&args.graph)?;
    let prefix = if let Some(path) = &args.timing {
        TimingPrefix::from_json(&read(path)?, &g)
            .with_context(|| format!("in {}", path.display()))?
    } else if let Some(steps) = args.sample {
        sample_timing(
            &g,
            steps,
            DEFAULT_P_ACTIVE,
            args.starvation_bound,
            args.lossless,
            args.seed,
        )?
    } else {
        TimingPrefix::synchronous(&g, default_budget(&g, DEFAULT_STARVATION_BOUND))
    };
    let extend = !args.no_extend && a.is_quasi_acyclic()?;
    let report = async_run(&a, &g, &prefix, extend)?;
    print_json(&report.to_json(&a, &g));
    Ok(true)
}

fn witness_json(w: &TimingWitness, g: &Digraph) -> Value {
    match w {
        TimingWitness::Synchronous => json!("synchronous"),
        TimingWitness::Sampled { seed, prefix } => json!({
            "seed": seed,
            "timing": serde_json::from_str::<Value>(&prefix.to_json(g)).expect("timing serializes"),
        }),
    }
}

fn fuzz_json(v: &FuzzVerdict) -> Value {
    match v {
        FuzzVerdict::ConsistentUpToBudget { graphs } => {
            json!({"verdict": "consistent_up_to_budget", "graphs": graphs})
        }
        FuzzVerdict::Inconsistent {
            graph,
            seed,
            finding,
        } => {
            let Consistency::Inconsistent {
                node,
                first,
                second,
            } = finding.as_ref()
            else {
                unreachable!("only inconsistent findings are reported")
            };
            json!({
                "verdict": "inconsistent",
                "graph": graph.to_doc(),
                "seed": seed,
                "node": graph.node_id(*node),
                "first": {"timing": witness_json(&first.0, graph), "accepted": first.1},
                "second": {"timing": witness_json(&second.0, graph), "accepted": second.1},
            })
        }
    }
}
