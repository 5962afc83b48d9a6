//! Command-line front end: generate -> pathfind/slice -> contract ->
//! verify, plus the oracle and the two synthetic benches.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 resource-budget
//! failure. Config precedence: CLI flag > config file > built-in
//! default; `TENKONTRACT_SEED` is the global seed fallback.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::circuit::{
    circuit_from_json, circuit_to_json, circuit_to_network, format_circuit,
    generate_random_circuit, linear_coupler_pattern, parse_circuit, Circuit,
    RandomCircuitOptions,
};
use crate::engine::{
    classify_gemm, execute_step, plan_from_tree, rank_steps, reorder_topk, run_simulation,
    ExecutionPlan, NodeRef,
};
use crate::error::{Error, Result};
use crate::network::{format_bitstring_file, parse_bitstring_file, BitString, SparseState};
use crate::oracle;
use crate::pathopt::{sa_optimize, BalancePenalty, CostModel, SaSchedule, ScoreParams};
use crate::precision::{
    mac_dot_real, FormatSpec, MacCounter, PrecisionSchedule, SplitMode, StepPrecision,
};
use crate::slicer::dynamic_slice;
use crate::verify::{
    fl_error, histogram_logdp, lxeb, report_to_csv, squared_l2_error, AmplitudeSet,
    DEFAULT_HISTOGRAM_BINS, DEFAULT_HISTOGRAM_RANGE,
};

#[derive(Parser)]
#[command(
    name = "tenkontract",
    about = "Sparse-state tensor network simulator for random quantum circuits",
    version
)]
struct Cli {
    /// Config file (key = value, TOML); defaults to ./tenkontract.toml
    /// when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random circuit: per cycle one single-qubit layer and
    /// one fsim layer over the coupler pattern.
    GenCircuit(GenCircuitArgs),
    /// Search a contraction order (greedy + simulated annealing), slice
    /// to the memory budget, reorder the top-k steps, emit an order file.
    Pathfind(PathfindArgs),
    /// Contract a circuit along an order file and write amplitudes.
    Contract(ContractArgs),
    /// LXEB fidelity, error metrics, and the log-probability histogram.
    Verify(VerifyArgs),
    /// Brute-force state-vector amplitudes or fidelity-controlled samples.
    Oracle(OracleArgs),
    /// Synthetic timing of the top-k einsum-to-GEMM conversion.
    Bench(BenchArgs),
    /// Dot-product error curves across emulated precisions.
    PrecisionBench(PrecisionBenchArgs),
}

#[derive(Args)]
struct GenCircuitArgs {
    #[arg(long)]
    qubits: usize,
    #[arg(long)]
    cycles: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// `linear` or a JSON file: a list of edge lists.
    #[arg(long, default_value = "linear")]
    pattern: String,
    #[arg(long)]
    fsim_theta: Option<f64>,
    #[arg(long)]
    fsim_phi: Option<f64>,
    /// Allow repeating the previous cycle's single-qubit gate.
    #[arg(long)]
    allow_repeat: bool,
    /// `text` or `json`; inferred from the output extension when absent.
    #[arg(long)]
    format: Option<String>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct StateArgs {
    /// Bitstring file (one 0/1 string per line) selecting a sparse state.
    #[arg(long)]
    bitstrings: Option<PathBuf>,
    /// Use the full final state instead of a sample list.
    #[arg(long)]
    full: bool,
}

impl StateArgs {
    fn resolve(&self, n_qubits: usize) -> Result<(SparseState, Option<Vec<BitString>>)> {
        match (&self.bitstrings, self.full) {
            (Some(path), false) => {
                let bits = parse_bitstring_file(&std::fs::read_to_string(path)?)?;
                let state = if bits.len() == 1 {
                    SparseState::single(n_qubits, bits[0])?
                } else {
                    SparseState::sparse(n_qubits, &bits)?
                };
                Ok((state, Some(bits)))
            }
            (None, true) => Ok((SparseState::full(n_qubits)?, None)),
            (None, false) => Err(Error::Config(
                "specify a final state: --bitstrings FILE or --full".into(),
            )),
            (Some(_), true) => {
                Err(Error::Config("--bitstrings and --full are mutually exclusive".into()))
            }
        }
    }
}

#[derive(Args)]
struct PathfindArgs {
    circuit: PathBuf,
    #[command(flatten)]
    state: StateArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Peak step working-set budget, e.g. `4GiB`, `512MiB`, or bytes.
    #[arg(long)]
    mem_budget: Option<String>,
    /// Enable the balanced-shape penalty in the score.
    #[arg(long)]
    balance: bool,
    #[arg(long)]
    balance_weight: Option<f64>,
    #[arg(long)]
    finetune_sweeps: Option<usize>,
    /// Reorder the top-k costliest steps into GEMMs (0 disables).
    #[arg(long)]
    topk: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ContractArgs {
    circuit: PathBuf,
    #[arg(long)]
    order: PathBuf,
    #[command(flatten)]
    state: StateArgs,
    /// Precision schedule file; overrides the precision flags.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    split: Option<u32>,
    /// Accumulation format (fp32 or fp64).
    #[arg(long)]
    accum: Option<String>,
    /// Drop the top-k costliest steps to the single-pass variant of the
    /// chosen format (mixed precision).
    #[arg(long)]
    mixed_topk: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Emit a per-step JSON report (T_cc, formability, shape, time).
    #[arg(long)]
    flop_report: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    amplitudes: PathBuf,
    /// Reference amplitudes for the precision-error metrics.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    /// `json` or `csv`.
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    circuit: PathBuf,
    #[arg(long)]
    bitstrings: Option<PathBuf>,
    #[arg(long)]
    full: bool,
    /// Sample this many bitstrings instead of computing amplitudes.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long)]
    fidelity: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PrecisionBenchArgs {
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Flat key/value config file; every key mirrors a long flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    alpha: Option<f64>,
    beta: Option<f64>,
    sweeps: Option<usize>,
    seed: Option<u64>,
    mem_budget: Option<String>,
    balance: Option<bool>,
    balance_weight: Option<f64>,
    finetune_sweeps: Option<usize>,
    topk: Option<usize>,
    workers: Option<usize>,
    precision: Option<String>,
    split: Option<u32>,
    accum: Option<String>,
    mixed_topk: Option<usize>,
    fsim_theta: Option<f64>,
    fsim_phi: Option<f64>,
}

fn load_config(explicit: &Option<PathBuf>) -> Result<FileConfig> {
    let path = match explicit {
        Some(p) => p.clone(),
        None => {
            let default = PathBuf::from("tenkontract.toml");
            if !default.exists() {
                return Ok(FileConfig::default());
            }
            default
        }
    };
    let text = std::fs::read_to_string(&path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn env_seed() -> Option<u64> {
    std::env::var("TENKONTRACT_SEED").ok().and_then(|s| s.parse().ok())
}

fn resolve_seed(flag: Option<u64>, cfg: &FileConfig) -> u64 {
    flag.or(cfg.seed).or_else(env_seed).unwrap_or(0)
}

pub fn parse_mem_budget(s: &str) -> Result<u64> {
    let s = s.trim();
    let lower = s.to_ascii_lowercase();
    let (digits, mult) = if let Some(d) = lower.strip_suffix("gib") {
        (d, 1u64 << 30)
    } else if let Some(d) = lower.strip_suffix("mib") {
        (d, 1u64 << 20)
    } else if let Some(d) = lower.strip_suffix("kib") {
        (d, 1u64 << 10)
    } else if let Some(d) = lower.strip_suffix("gb") {
        (d, 1_000_000_000)
    } else if let Some(d) = lower.strip_suffix("mb") {
        (d, 1_000_000)
    } else if let Some(d) = lower.strip_suffix("kb") {
        (d, 1_000)
    } else if let Some(d) = lower.strip_suffix('b') {
        (d, 1)
    } else {
        (lower.as_str(), 1)
    };
    let value: f64 = digits
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse memory budget `{s}`")))?;
    if value <= 0.0 {
        return Err(Error::Config(format!("memory budget `{s}` must be positive")));
    }
    Ok((value * mult as f64) as u64)
}

fn load_circuit(path: &Path) -> Result<Circuit> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        circuit_from_json(&text)
    } else {
        parse_circuit(&text)
    }
}

/// Order file: the executable plan plus the search parameters that
/// produced it.
#[derive(Serialize, Deserialize)]
pub struct OrderFile {
    pub plan: ExecutionPlan,
    pub params: OrderParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderParams {
    pub alpha: f64,
    pub beta: f64,
    pub sweeps: usize,
    pub seed: u64,
    pub mem_budget: Option<u64>,
    pub balance: bool,
    pub finetune_sweeps: usize,
    pub topk: usize,
}

/// Schedule file: {default:{fmt,mode}, accum, overrides:[{step,fmt,mode}]}.
#[derive(Serialize, Deserialize)]
struct ScheduleFile {
    default: ScheduleEntry,
    accum: String,
    #[serde(default)]
    overrides: Vec<ScheduleOverride>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleEntry {
    fmt: String,
    mode: u32,
}

#[derive(Serialize, Deserialize)]
struct ScheduleOverride {
    step: usize,
    fmt: String,
    mode: u32,
}

pub fn schedule_to_json(schedule: &PrecisionSchedule) -> String {
    let file = ScheduleFile {
        default: ScheduleEntry {
            fmt: schedule.default.fmt.name().to_string(),
            mode: schedule.default.mode.count(),
        },
        accum: schedule.accum.name().to_string(),
        overrides: schedule
            .overrides
            .iter()
            .map(|(step, p)| ScheduleOverride {
                step: *step,
                fmt: p.fmt.name().to_string(),
                mode: p.mode.count(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("schedule serialization")
}

pub fn schedule_from_json(text: &str) -> Result<PrecisionSchedule> {
    let file: ScheduleFile = serde_json::from_str(text)?;
    let parse_entry = |fmt: &str, mode: u32| -> Result<StepPrecision> {
        Ok(StepPrecision { fmt: FormatSpec::from_name(fmt)?, mode: SplitMode::from_count(mode)? })
    };
    Ok(PrecisionSchedule {
        default: parse_entry(&file.default.fmt, file.default.mode)?,
        accum: FormatSpec::from_name(&file.accum)?,
        overrides: file
            .overrides
            .iter()
            .map(|o| Ok((o.step, parse_entry(&o.fmt, o.mode)?)))
            .collect::<Result<Vec<_>>>()?,
        replaced_tcc_ratio: 0.0,
    })
}

fn write_output(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

fn emit(path: &Option<PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => write_output(p, content),
        None => {
            // Ignore EPIPE so piping into `head` stays clean.
            use std::io::Write;
            let _ = writeln!(std::io::stdout(), "{content}");
            Ok(())
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match dispatch(cli.command, &cfg) {
        Ok(()) => 0,
        Err(Error::BudgetUnreachable { residual, budget }) => {
            eprintln!("error: memory budget unreachable: residual {residual} B > budget {budget} B");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command, cfg: &FileConfig) -> Result<()> {
    match cmd {
        Command::GenCircuit(args) => cmd_gen_circuit(args, cfg),
        Command::Pathfind(args) => cmd_pathfind(args, cfg),
        Command::Contract(args) => cmd_contract(args, cfg),
        Command::Verify(args) => cmd_verify(args),
        Command::Oracle(args) => cmd_oracle(args, cfg),
        Command::Bench(args) => cmd_bench(args, cfg),
        Command::PrecisionBench(args) => cmd_precision_bench(args, cfg),
    }
}

fn cmd_gen_circuit(args: GenCircuitArgs, cfg: &FileConfig) -> Result<()> {
    let pattern: Vec<Vec<(usize, usize)>> = if args.pattern == "linear" {
        linear_coupler_pattern(args.qubits)
    } else {
        let text = std::fs::read_to_string(&args.pattern)?;
        serde_json::from_str(&text)?
    };
    let opts = RandomCircuitOptions {
        forbid_repeat: !args.allow_repeat,
        fsim_theta: args.fsim_theta.or(cfg.fsim_theta).unwrap_or(std::f64::consts::FRAC_PI_2),
        fsim_phi: args.fsim_phi.or(cfg.fsim_phi).unwrap_or(std::f64::consts::FRAC_PI_6),
    };
    let seed = resolve_seed(args.seed, cfg);
    let circuit = generate_random_circuit(args.qubits, args.cycles, &pattern, seed, &opts)?;
    let by_ext = args.output.extension().map(|e| e == "json").unwrap_or(false);
    let as_json = match args.format.as_deref() {
        Some("json") => true,
        Some("text") => false,
        Some(other) => return Err(Error::Config(format!("unknown circuit format `{other}`"))),
        None => by_ext,
    };
    let content = if as_json { circuit_to_json(&circuit) } else { format_circuit(&circuit) };
    write_output(&args.output, &content)
}

fn cmd_pathfind(args: PathfindArgs, cfg: &FileConfig) -> Result<()> {
    let circuit = load_circuit(&args.circuit)?;
    let (state, _) = args.state.resolve(circuit.n_qubits)?;
    let mut net = circuit_to_network(&circuit, &state)?;

    let balance = args.balance || cfg.balance.unwrap_or(false);
    let params = ScoreParams {
        alpha: args.alpha.or(cfg.alpha).unwrap_or(64.0),
        beta: args.beta.or(cfg.beta).unwrap_or(1.0),
        log_base: 2.0,
        balance: balance.then(|| BalancePenalty {
            weight: args.balance_weight.or(cfg.balance_weight).unwrap_or(0.05),
            ..Default::default()
        }),
    };
    let sweeps = args.sweeps.or(cfg.sweeps).unwrap_or(200);
    let schedule = SaSchedule { sweeps, ..Default::default() };
    let seed = resolve_seed(args.seed, cfg);
    let model = CostModel::default();
    let mut tree = sa_optimize(&net, &params, &schedule, seed, model)?;

    let mem_budget = match args.mem_budget.as_deref().or(cfg.mem_budget.as_deref()) {
        Some(s) => Some(parse_mem_budget(s)?),
        None => None,
    };
    let finetune = args.finetune_sweeps.or(cfg.finetune_sweeps).unwrap_or(30);
    if let Some(budget) = mem_budget {
        let (t, _slices) = dynamic_slice(&mut net, tree, budget, finetune, &params, seed, model)?;
        tree = t;
    }
    let mut plan = plan_from_tree(&net, &tree)?;
    plan.score = tree.score(&params);
    let topk = args.topk.or(cfg.topk).unwrap_or(10);
    reorder_topk(&mut plan, topk);

    let order = OrderFile {
        plan,
        params: OrderParams {
            alpha: params.alpha,
            beta: params.beta,
            sweeps,
            seed,
            mem_budget,
            balance,
            finetune_sweeps: finetune,
            topk,
        },
    };
    write_output(&args.output, &serde_json::to_string_pretty(&order)?)
}

#[derive(Serialize)]
struct FlopReportStep {
    step: usize,
    tcc: u64,
    formable: bool,
    shape: Option<(u64, u64, u64, u64)>,
    time_us: f64,
}

#[derive(Serialize)]
struct FlopReport {
    total_flops: u64,
    subtasks: usize,
    elapsed_s: f64,
    steps: Vec<FlopReportStep>,
}

fn cmd_contract(args: ContractArgs, cfg: &FileConfig) -> Result<()> {
    let circuit = load_circuit(&args.circuit)?;
    let (state, requested) = args.state.resolve(circuit.n_qubits)?;
    let mut net = circuit_to_network(&circuit, &state)?;
    let order: OrderFile = serde_json::from_str(&std::fs::read_to_string(&args.order)?)?;
    let plan = order.plan;
    for bond in &plan.slices {
        net.bonds
            .get_mut(bond)
            .ok_or_else(|| Error::Engine(format!("order file slices unknown bond {bond}")))?
            .sliced = true;
    }
    plan.validate_against(&net)?;

    let schedule = match &args.schedule {
        Some(path) => schedule_from_json(&std::fs::read_to_string(path)?)?,
        None => {
            let fmt = FormatSpec::from_name(
                args.precision.as_deref().or(cfg.precision.as_deref()).unwrap_or("fp64"),
            )?;
            let mode = SplitMode::from_count(args.split.or(cfg.split).unwrap_or(1))?;
            let accum = FormatSpec::from_name(
                args.accum
                    .as_deref()
                    .or(cfg.accum.as_deref())
                    .unwrap_or(if fmt.is_fp64() { "fp64" } else { "fp32" }),
            )?;
            match args.mixed_topk.or(cfg.mixed_topk) {
                Some(k) if k > 0 => PrecisionSchedule::from_topk(
                    &plan.step_tccs(),
                    k,
                    StepPrecision { fmt, mode: SplitMode::Single },
                    StepPrecision { fmt, mode },
                    accum,
                ),
                _ => PrecisionSchedule::uniform(fmt, mode, accum),
            }
        }
    };

    let workers = args.workers.or(cfg.workers).unwrap_or_else(num_cpus);
    let started = Instant::now();
    let out = run_simulation(&net, &plan, &schedule, workers, requested.as_deref())?;
    let elapsed = started.elapsed().as_secs_f64();
    write_output(&args.output, &out.amplitudes.to_text())?;

    if let Some(report_path) = &args.flop_report {
        let steps = time_steps(&net, &plan, &schedule)?;
        let report = FlopReport {
            total_flops: out.flops,
            subtasks: out.subtasks,
            elapsed_s: elapsed,
            steps,
        };
        write_output(report_path, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn num_cpus() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Execute one subtask stepwise, timing each contraction.
fn time_steps(
    net: &crate::network::TensorNetwork,
    plan: &ExecutionPlan,
    schedule: &PrecisionSchedule,
) -> Result<Vec<FlopReportStep>> {
    let sub = crate::slicer::subtask_network(net, &plan.slice_set(), 0)?;
    let mut leaves: Vec<Option<crate::network::ComplexTensor>> = Vec::new();
    for (pos, id) in plan.leaves.iter().enumerate() {
        let t = &sub.tensors[id];
        let want = &plan.leaf_layouts[pos];
        leaves.push(Some(if &t.labels == want { t.clone() } else { t.permuted(want)? }));
    }
    let mut outputs: Vec<Option<crate::network::ComplexTensor>> = vec![None; plan.steps.len()];
    let mut rows = Vec::with_capacity(plan.steps.len());
    for (i, step) in plan.steps.iter().enumerate() {
        let fetch = |r: NodeRef,
                     leaves: &mut Vec<Option<crate::network::ComplexTensor>>,
                     outputs: &mut Vec<Option<crate::network::ComplexTensor>>| {
            match r {
                NodeRef::Leaf(p) => leaves[p].take().unwrap(),
                NodeRef::Step(s) => outputs[s].take().unwrap(),
            }
        };
        let a = fetch(step.lhs, &mut leaves, &mut outputs);
        let b = fetch(step.rhs, &mut leaves, &mut outputs);
        let mut counter = MacCounter::default();
        let t0 = Instant::now();
        let out = execute_step(&a, &b, &step.spec, schedule.resolve(i), schedule.accum, &mut counter)?;
        let dt = t0.elapsed().as_secs_f64() * 1e6;
        let class = classify_gemm(&step.spec);
        let shape = match &class {
            crate::engine::GemmClass::Formable(s) => Some((s.b, s.m, s.n, s.k)),
            _ => None,
        };
        rows.push(FlopReportStep {
            step: i,
            tcc: step.t_cc,
            formable: class.is_formable(),
            shape,
            time_us: dt,
        });
        outputs[i] = Some(out);
    }
    Ok(rows)
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let amps = AmplitudeSet::from_text(&std::fs::read_to_string(&args.amplitudes)?)?;
    let mut report = histogram_logdp(
        &amps,
        args.bins.unwrap_or(DEFAULT_HISTOGRAM_BINS),
        DEFAULT_HISTOGRAM_RANGE,
    );
    if let Some(ref_path) = &args.reference {
        let reference = AmplitudeSet::from_text(&std::fs::read_to_string(ref_path)?)?;
        let eps = squared_l2_error(&reference, &amps)?;
        report.eps_l2sq = Some(eps);
        report.eps_fl = fl_error(eps, lxeb(&reference));
    }
    let content = match args.format.as_str() {
        "json" => serde_json::to_string_pretty(&report)?,
        "csv" => report_to_csv(&report),
        other => return Err(Error::Config(format!("unknown report format `{other}`"))),
    };
    emit(&args.output, &content)
}

fn cmd_oracle(args: OracleArgs, cfg: &FileConfig) -> Result<()> {
    let circuit = load_circuit(&args.circuit)?;
    if let Some(m) = args.sample {
        let fidelity = args.fidelity.unwrap_or(1.0);
        let seed = resolve_seed(args.seed, cfg);
        let bits = oracle::sample(&circuit, m, fidelity, seed)?;
        return write_output(&args.output, &format_bitstring_file(&bits));
    }
    let bits: Vec<BitString> = match (&args.bitstrings, args.full) {
        (Some(path), false) => parse_bitstring_file(&std::fs::read_to_string(path)?)?,
        (None, true) => {
            let state = SparseState::full(circuit.n_qubits)?;
            state.enumerate()?.into_iter().map(|i| BitString::new(circuit.n_qubits, i)).collect()
        }
        _ => {
            return Err(Error::Config(
                "oracle needs --bitstrings, --full, or --sample".into(),
            ))
        }
    };
    let amps = oracle::amplitudes_for(&circuit, &bits)?;
    write_output(&args.output, &amps.to_text())
}

#[derive(Serialize)]
struct BenchRow {
    rank: usize,
    step: usize,
    tcc: u64,
    formable_before: bool,
    formable_after: bool,
    time_us_before: f64,
    time_us_after: f64,
    speedup: f64,
}

#[derive(Serialize)]
struct BenchReport {
    qubits: usize,
    cycles: usize,
    samples: usize,
    total_tcc: u64,
    formable_topk_before: usize,
    formable_topk_after: usize,
    rows: Vec<BenchRow>,
}

fn cmd_bench(args: BenchArgs, cfg: &FileConfig) -> Result<()> {
    let n = args.qubits.unwrap_or(10);
    let cycles = args.cycles.unwrap_or(12);
    let seed = resolve_seed(args.seed, cfg);
    let samples = args.samples.unwrap_or(64);
    let topk = args.topk.or(cfg.topk).unwrap_or(10);

    let circuit =
        generate_random_circuit(n, cycles, &linear_coupler_pattern(n), seed, &RandomCircuitOptions::default())?;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0xb3);
    let bits: Vec<BitString> =
        (0..samples).map(|_| BitString::new(n, rng.gen_range(0..(1u64 << n)))).collect();
    let state = SparseState::sparse(n, &bits)?;
    let net = circuit_to_network(&circuit, &state)?;
    let params = ScoreParams::default();
    let tree = sa_optimize(
        &net,
        &params,
        &SaSchedule { sweeps: args.cycles.map(|_| 60).unwrap_or(60), ..Default::default() },
        seed,
        CostModel::default(),
    )?;
    let base = plan_from_tree(&net, &tree)?;
    let mut tuned = base.clone();
    reorder_topk(&mut tuned, topk);

    let schedule = PrecisionSchedule::fp64();
    let before = time_steps(&net, &base, &schedule)?;
    let after = time_steps(&net, &tuned, &schedule)?;
    let ranked = rank_steps(&base);
    let rows: Vec<BenchRow> = ranked
        .iter()
        .take(topk)
        .enumerate()
        .map(|(rank, &i)| BenchRow {
            rank,
            step: i,
            tcc: base.steps[i].t_cc,
            formable_before: before[i].formable,
            formable_after: after[i].formable,
            time_us_before: before[i].time_us,
            time_us_after: after[i].time_us,
            speedup: if after[i].time_us > 0.0 { before[i].time_us / after[i].time_us } else { 1.0 },
        })
        .collect();
    let report = BenchReport {
        qubits: n,
        cycles,
        samples,
        total_tcc: base.total_tcc(),
        formable_topk_before: rows.iter().filter(|r| r.formable_before).count(),
        formable_topk_after: rows.iter().filter(|r| r.formable_after).count(),
        rows,
    };
    let content = match args.format.as_str() {
        "json" => serde_json::to_string_pretty(&report)?,
        "csv" => {
            let mut s =
                String::from("rank,step,tcc,formable_before,formable_after,time_us_before,time_us_after,speedup\n");
            for r in &report.rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.rank,
                    r.step,
                    r.tcc,
                    r.formable_before,
                    r.formable_after,
                    r.time_us_before,
                    r.time_us_after,
                    r.speedup
                ));
            }
            s
        }
        other => return Err(Error::Config(format!("unknown report format `{other}`"))),
    };
    emit(&args.output, &content)
}

#[derive(Serialize)]
struct PrecisionBenchRow {
    config: String,
    median_rel_err: f64,
}

fn cmd_precision_bench(args: PrecisionBenchArgs, cfg: &FileConfig) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let length = args.length.unwrap_or(1024);
    let trials = args.trials.unwrap_or(2000);
    let lo = args.lo.unwrap_or(1e-7);
    let hi = args.hi.unwrap_or(1e3);
    let seed = resolve_seed(args.seed, cfg);
    let configs: Vec<(&str, FormatSpec, SplitMode)> = vec![
        ("fp32", FormatSpec::FP32, SplitMode::Single),
        ("1xtf32", FormatSpec::TF32, SplitMode::Single),
        ("3xtf32", FormatSpec::TF32, SplitMode::Triple),
        ("3xfp16", FormatSpec::FP16, SplitMode::Triple),
        ("3xbf16", FormatSpec::BF16, SplitMode::Triple),
    ];
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut errs: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); configs.len()];
    for _ in 0..trials {
        let a: Vec<f64> = (0..length).map(|_| (llo + (lhi - llo) * rng.gen::<f64>()).exp()).collect();
        let b: Vec<f64> = (0..length).map(|_| (llo + (lhi - llo) * rng.gen::<f64>()).exp()).collect();
        let exact: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        for (slot, (_, fmt, mode)) in errs.iter_mut().zip(&configs) {
            let v = mac_dot_real(&a, &b, *fmt, *mode, FormatSpec::FP32)?;
            let e = ((v - exact) / exact).abs();
            slot.push(if e.is_nan() { f64::INFINITY } else { e });
        }
    }
    let rows: Vec<PrecisionBenchRow> = configs
        .iter()
        .zip(errs.into_iter())
        .map(|((name, _, _), mut v)| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            PrecisionBenchRow { config: name.to_string(), median_rel_err: v[v.len() / 2] }
        })
        .collect();
    let content = match args.format.as_str() {
        "json" => serde_json::to_string_pretty(&rows)?,
        "csv" => {
            let mut s = String::from("config,median_rel_err\n");
            for r in &rows {
                s.push_str(&format!("{},{}\n", r.config, r.median_rel_err));
            }
            s
        }
        other => return Err(Error::Config(format!("unknown report format `{other}`"))),
    };
    emit(&args.output, &content)
}
