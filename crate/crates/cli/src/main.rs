mod config;
mod design;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use srtaccel::analysis::{
    beam_quality_study, compare_policies, period_sweep, reference_periods, response_stats, uncontended_latencies,
    AnalysisError, Method, PolicyComparison, PolicyRun, SweepSpec,
};
use srtaccel::dse::beam_search;
use srtaccel::model::{util_to_f64, DesignPoint, Policy, TaskSet};
use srtaccel::sim::{detect_divergence, simulate_design, SimPolicy, Verdict};

use config::{parse_config, BeamWidth, Diagnostic, ExperimentConfig};
use design::DesignDoc;
use manifest::{sha256_hex, ArtifactWriter, Manifest};

const EXIT_OK: u8 = 0;
const EXIT_INTERNAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NO_FEASIBLE: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "srtaccel",
    version,
    about = "Design and validate pipelined multi-accelerator systems for soft real-time DNN task sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a design whose every accelerator passes the utilization test.
    Dse(RunArgs),
    /// Simulate a design and judge whether tardiness stays bounded.
    Simulate(DesignArgs),
    /// Feasibility of each method over a grid of period ratios.
    Sweep(RunArgs),
    /// Response times of one design under FIFO and EDF (with and without overhead).
    Compare(DesignArgs),
    /// Best utilization and search effort per beam width, against the exhaustive oracle.
    BeamStudy(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fifo,
    Edf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run with this single seed instead of `sim.seeds`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Positive integer or "inf".
    #[arg(long)]
    beam_width: Option<BeamWidth>,
    #[arg(long)]
    max_m: Option<usize>,
    #[arg(long)]
    grid: Option<u64>,
    #[arg(long)]
    horizon_mult: Option<u64>,
    /// Charge save and reload cycles on EDF preemption.
    #[arg(long, value_enum)]
    overhead: Option<Switch>,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Design document written by `dse`; without it the configured search runs first.
    #[arg(long)]
    design: Option<PathBuf>,
}

enum Failure {
    Config(Vec<Diagnostic>),
    Internal(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::Internal(e.to_string())
    }
}

fn emit(kind: &str, code: u8, message: &str, line: Option<usize>, column: Option<usize>) {
    let mut d = json!({"severity": "error", "kind": kind, "exit_code": code, "message": message});
    if let (Some(l), Some(c)) = (line, column) {
        d["line"] = json!(l);
        d["column"] = json!(c);
    }
    eprintln!("{d}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(diags)) => {
            for d in &diags {
                emit("config", EXIT_CONFIG, &d.message, d.line, d.column);
            }
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Internal(m)) => {
            emit("internal", EXIT_INTERNAL, &m, None, None);
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

/// Loaded configuration with command-line overrides applied.
struct Context {
    command: &'static str,
    cfg: ExperimentConfig,
    config_sha: String,
    ts: TaskSet,
    out: ArtifactWriter,
    design_sha: Option<String>,
    /// `--policy`, which also overrides a design document's policy.
    policy_flag: Option<Policy>,
}

impl Context {
    fn load(command: &'static str, a: &RunArgs) -> Result<Self, Failure> {
        let text = fs::read_to_string(&a.config).map_err(|e| {
            Failure::Config(vec![Diagnostic::new(format!(
                "cannot read {}: {e}",
                a.config.display()
            ))])
        })?;
        let mut cfg = parse_config(&text).map_err(Failure::Config)?;
        if let Some(s) = a.seed {
            cfg.sim.seeds = vec![s];
        }
        let policy_flag = a.policy.map(|p| match p {
            PolicyArg::Fifo => Policy::Fifo,
            PolicyArg::Edf => Policy::Edf,
        });
        if let Some(p) = policy_flag {
            cfg.dse.policy = p;
        }
        if let Some(b) = a.beam_width {
            cfg.dse.beam_width = b;
        }
        if let Some(m) = a.max_m {
            cfg.dse.max_m = m;
        }
        if let Some(g) = a.grid {
            cfg.dse.grid = g;
        }
        if let Some(h) = a.horizon_mult {
            cfg.sim.horizon_mult = h;
        }
        if let Some(o) = a.overhead {
            cfg.sim.overhead = matches!(o, Switch::On);
        }
        if let Some(dir) = &a.out {
            cfg.output.dir = dir.to_string_lossy().into_owned();
        }
        let diags = cfg.validate(None);
        if !diags.is_empty() {
            return Err(Failure::Config(diags));
        }
        let ts = cfg.taskset();
        let out = ArtifactWriter::new(Path::new(&cfg.output.dir))?;
        Ok(Self {
            command,
            config_sha: sha256_hex(text.as_bytes()),
            cfg,
            ts,
            out,
            design_sha: None,
            policy_flag,
        })
    }

    fn finish(mut self, code: u8) -> Result<u8, Failure> {
        let effective = self.cfg.to_toml();
        self.out.write("config.toml", effective.as_bytes())?;
        let manifest = Manifest {
            tool: "srtaccel",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.into(),
            args: std::env::args().skip(1).collect(),
            config_sha256: self.config_sha,
            design_sha256: self.design_sha,
            seeds: self.cfg.sim.seeds.clone(),
            effective_config: serde_json::to_value(&self.cfg).map_err(|e| Failure::Internal(e.to_string()))?,
            exit_code: code.into(),
            artifacts: Vec::new(),
        };
        self.out.finish(manifest)?;
        Ok(code)
    }

    /// The design to study: from `--design`, else the configured search.
    fn design(&mut self, path: Option<&Path>) -> Result<Option<DesignPoint>, Failure> {
        let Some(path) = path else {
            let r = beam_search(&self.ts, self.cfg.budget(), self.cfg.search_options())
                .map_err(|e| Failure::Internal(e.to_string()))?;
            if let Some(d) = &r.best {
                self.out.write("design.toml", DesignDoc::of(d).to_toml().as_bytes())?;
            }
            return Ok(r.best);
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(vec![Diagnostic::new(format!("cannot read {}: {e}", path.display()))]))?;
        self.design_sha = Some(sha256_hex(text.as_bytes()));
        let doc: DesignDoc = toml::from_str(&text).map_err(|e| {
            let msg = format!("{}: {}", path.display(), e.message().trim());
            Failure::Config(vec![Diagnostic::at(msg, Some(&text), e.span())])
        })?;
        doc.to_design(&self.ts, self.policy_flag)
            .map(Some)
            .map_err(|m| Failure::Config(vec![Diagnostic::new(format!("{}: {m}", path.display()))]))
    }
}

fn no_feasible(ctx: Context, what: &str) -> Result<u8, Failure> {
    emit("no_feasible_design", EXIT_NO_FEASIBLE, what, None, None);
    ctx.finish(EXIT_NO_FEASIBLE)
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Dse(a) => dse(Context::load("dse", &a)?),
        Command::Simulate(a) => {
            let ctx = Context::load("simulate", &a.run)?;
            simulate(ctx, a.design.as_deref())
        }
        Command::Sweep(a) => sweep(Context::load("sweep", &a)?),
        Command::Compare(a) => {
            let ctx = Context::load("compare", &a.run)?;
            compare(ctx, a.design.as_deref())
        }
        Command::BeamStudy(a) => beam_study(Context::load("beam-study", &a)?),
    }
}

fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn dse(mut ctx: Context) -> Result<u8, Failure> {
    let options = ctx.cfg.search_options();
    let r = beam_search(&ctx.ts, ctx.cfg.budget(), options).map_err(|e| Failure::Internal(e.to_string()))?;
    let s = &r.stats;
    let best = r.best.as_ref();
    let stats = json!({
        "feasible_designs": r.feasible.len(),
        "best_max_util": best.map(|d| util_to_f64(&d.max_util())),
        "best_num_accs": best.map(DesignPoint::num_accs),
        "parents_expanded": s.parents_expanded,
        "parent_bound": options.parent_bound().map(|b| b.to_string()),
        "children_generated": s.children_generated,
        "children_pruned": s.children_pruned,
        "create_acc_calls": s.create_acc_calls,
        "evaluation_bound": options.evaluation_bound(&ctx.ts).map(|b| b.to_string()),
        "evals_to_first_feasible": s.evals_to_first_feasible,
        "kept_per_iteration": s.kept_per_iteration,
    });
    ctx.out.write("dse.json", &json_bytes(&stats))?;
    let Some(d) = best else {
        return no_feasible(ctx, "no design passes the utilization test within the budget");
    };
    ctx.out.write("design.toml", DesignDoc::of(d).to_toml().as_bytes())?;
    println!(
        "feasible design: max_util {:.6} on {} accelerator(s), {} feasible found",
        util_to_f64(&d.max_util()),
        d.num_accs(),
        r.feasible.len()
    );
    ctx.finish(EXIT_OK)
}

fn sim_policy(cfg: &ExperimentConfig, design: &DesignPoint) -> SimPolicy {
    match design.policy {
        Policy::Fifo => SimPolicy::FifoPipelined,
        Policy::Edf => SimPolicy::Edf {
            overhead: cfg.sim.overhead,
        },
    }
}

fn simulate(mut ctx: Context, design: Option<&Path>) -> Result<u8, Failure> {
    let Some(d) = ctx.design(design)? else {
        return no_feasible(ctx, "the configured search found no design to simulate");
    };
    let policy = sim_policy(&ctx.cfg, &d);
    let horizon = ctx.cfg.horizon(&ctx.ts);
    let lower = uncontended_latencies(&d, &ctx.ts);
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for &seed in &ctx.cfg.sim.seeds.clone() {
        let trace =
            simulate_design(&d, &ctx.ts, policy, horizon, seed).map_err(|e| Failure::Internal(e.to_string()))?;
        ctx.out
            .write(&format!("trace_seed{seed}.jsonl"), trace.to_jsonl().as_bytes())?;
        let report = detect_divergence(&trace).map_err(|e| Failure::Internal(e.to_string()))?;
        summary.push(json!({
            "seed": seed,
            "verdict": report.verdict,
            "preemptions": trace.preemptions.len(),
            "final_quarter_occupancy": report.final_quarter_occupancy,
            "half_responses": report.half_responses,
        }));
        runs.push(PolicyRun {
            policy,
            seed,
            tasks: response_stats(&trace, &lower),
            preemptions: trace.preemptions.len() as u64,
            verdict: Some(report.verdict),
            reliable: report.verdict == Verdict::Bounded,
        });
    }
    let diverged: Vec<u64> = runs
        .iter()
        .filter(|r| r.verdict == Some(Verdict::Diverging))
        .map(|r| r.seed)
        .collect();
    let mut csv = Vec::new();
    PolicyComparison { runs }.write_csv(&mut csv)?;
    ctx.out.write("responses.csv", &csv)?;
    ctx.out.write(
        "simulate.json",
        &json_bytes(
            &json!({"policy": policy, "horizon": horizon, "max_util": util_to_f64(&d.max_util()), "runs": summary}),
        ),
    )?;
    if diverged.is_empty() {
        println!(
            "bounded: {} seed(s) under {policy}, horizon {horizon}",
            ctx.cfg.sim.seeds.len()
        );
        ctx.finish(EXIT_OK)
    } else {
        let msg = format!("tardiness diverges under {policy} for seed(s) {diverged:?}");
        emit("divergence_detected", EXIT_DIVERGENCE, &msg, None, None);
        ctx.finish(EXIT_DIVERGENCE)
    }
}

fn sweep(mut ctx: Context) -> Result<u8, Failure> {
    let budget = ctx.cfg.budget();
    let reference = match reference_periods(&ctx.ts, budget) {
        Ok(r) => r,
        Err(AnalysisError::NoReferenceDesign) => {
            return no_feasible(ctx, "no single accelerator fits the platform budget");
        }
        Err(e) => return Err(e.into()),
    };
    let spec = SweepSpec {
        axes: ctx.cfg.sweep_axes(),
        methods: Method::ALL.to_vec(),
        budget,
        options: ctx.cfg.search_options(),
        horizon_mult: ctx.cfg.sim.horizon_mult,
        seed: ctx.cfg.sim.seeds[0],
    };
    let grid = period_sweep(&ctx.ts, &reference, &spec)?;
    let mut csv = Vec::new();
    grid.write_csv(&mut csv)?;
    ctx.out.write("sweep.csv", &csv)?;
    let counts: serde_json::Map<String, serde_json::Value> = Method::ALL
        .iter()
        .map(|&m| (m.label().to_string(), json!(grid.feasible_count(m))))
        .collect();
    let exclusive = grid.exclusive_cells(Method::Schedulability).len();
    ctx.out.write(
        "sweep.json",
        &json_bytes(&json!({
            "reference_periods": reference,
            "feasible_cells": counts,
            "schedulability_only_cells": exclusive,
        })),
    )?;
    let line: Vec<String> = Method::ALL
        .iter()
        .map(|&m| format!("{} {}", m.label(), grid.feasible_count(m)))
        .collect();
    println!("feasible cells: {}; schedulability-only {exclusive}", line.join(", "));
    ctx.finish(EXIT_OK)
}

fn compare(mut ctx: Context, design: Option<&Path>) -> Result<u8, Failure> {
    let Some(d) = ctx.design(design)? else {
        return no_feasible(ctx, "the configured search found no design to compare");
    };
    let policies = [
        SimPolicy::FifoPipelined,
        SimPolicy::Edf { overhead: true },
        SimPolicy::Edf { overhead: false },
    ];
    let horizon = ctx.cfg.horizon(&ctx.ts);
    let cmp = compare_policies(&d, &ctx.ts, &policies, horizon, &ctx.cfg.sim.seeds)?;
    let mut csv = Vec::new();
    cmp.write_csv(&mut csv)?;
    ctx.out.write("compare.csv", &csv)?;
    let winners: Vec<serde_json::Value> = (0..ctx.ts.len())
        .map(|i| {
            json!({
                "task": i,
                "winner": cmp.winner(i).map(|p| p.label()),
                "max_response": policies
                    .iter()
                    .map(|&p| (p.label().to_string(), json!(cmp.max_response(p, i))))
                    .collect::<serde_json::Map<_, _>>(),
            })
        })
        .collect();
    ctx.out.write(
        "compare.json",
        &json_bytes(&json!({"horizon": horizon, "tasks": winners})),
    )?;
    for i in 0..ctx.ts.len() {
        let parts: Vec<String> = policies
            .iter()
            .map(|&p| format!("{} {}", p.label(), cmp.max_response(p, i).unwrap_or(0)))
            .collect();
        println!("task {i} max response: {}", parts.join(", "));
    }
    ctx.finish(EXIT_OK)
}

fn beam_study(mut ctx: Context) -> Result<u8, Failure> {
    let d = &ctx.cfg.dse;
    let widths: Vec<Option<usize>> = d.study_widths.iter().map(|w| w.0).collect();
    let study = beam_quality_study(
        &ctx.ts,
        ctx.cfg.budget(),
        &widths,
        d.max_m,
        d.grid,
        d.policy,
        d.node_budget,
    )?;
    let mut csv = Vec::new();
    study.write_csv(&mut csv)?;
    ctx.out.write("beam_study.csv", &csv)?;
    ctx.out.write(
        "beam_study.json",
        &json_bytes(&json!({
            "monotone": study.monotone(),
            "matches_oracle": study.matches_oracle(),
            "oracle_within_node_budget": study.brute_force.is_some(),
        })),
    )?;
    println!(
        "monotone in width: {}; unbounded beam matches oracle: {}",
        study.monotone(),
        study
            .matches_oracle()
            .map_or("oracle over node budget".into(), |b| b.to_string())
    );
    ctx.finish(EXIT_OK)
}
