use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ratekit_core::bench::{run_bench, BenchConfig};
use ratekit_core::config::ToolConfig;
use ratekit_core::energy::{battery_discharge, Battery, EnergyBudget};
use ratekit_core::sim::{simulate, RateBank, SimulationTrace};
use ratekit_core::store::{ProfitContext, Provenance, TableBundle};
use ratekit_core::synthesis::{
    candidate_cost_energy, min_energy_for_cost, synthesize, Algorithm, DisturbancePattern,
    SynthesisResult,
};
use ratekit_core::tables::{cost_table_from_models, design_rates, build_power_table, totals_over_window};
use serde::Deserialize;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ngit: ",
    env!("RATEKIT_GIT_HASH"),
    "\nprofile: ",
    env!("RATEKIT_BUILD_PROFILE"),
    "\ntarget: ",
    env!("RATEKIT_TARGET"),
);

#[derive(Parser)]
#[command(
    name = "ratekit",
    version,
    long_version = LONG_VERSION,
    about = "Energy-budgeted multi-rate LQG controller synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design controllers for every rate and write the cost, power and profit tables.
    Precompute(PrecomputeArgs),
    /// Choose a multi-rate controller for a disturbance pattern and energy budget.
    Synthesize(SynthesizeArgs),
    /// Run the on-line regulation loop and write a JSONL event trace.
    Simulate(SimulateArgs),
    /// Compare search algorithms over growing rate sets.
    Bench(BenchArgs),
    /// Battery discharge under fixed-rate and multi-rate operation.
    Battery(BatteryArgs),
}

#[derive(Args)]
struct PrecomputeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    tables: PathBuf,
    /// Level shares, e.g. `0.7,0.1,0.2`.
    #[arg(long)]
    pattern: DisturbancePattern,
    /// Energy allowed per window, J.
    #[arg(long)]
    budget_energy: f64,
    /// Window length, s.
    #[arg(long)]
    budget_window: f64,
    #[arg(long, default_value = "approach1")]
    algo: Algorithm,
    /// Exit with status 2 when no controller fits the budget.
    #[arg(long)]
    strict: bool,
    /// Include wall-clock time in the output.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// CSV of time against cost and battery level; defaults to `<out>.plot.csv`.
    #[arg(long, num_args = 0..=1)]
    emit_plotdata: Option<Option<PathBuf>>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    cases: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BatteryArgs {
    #[arg(long)]
    tables: PathBuf,
    /// Pattern JSON file, or level shares such as `0.7,0.1,0.2`.
    #[arg(long)]
    pattern: String,
    /// Capacity, e.g. `1000mAh`.
    #[arg(long, default_value = "1000mAh", value_parser = parse_capacity)]
    capacity: f64,
    /// Nominal voltage, V.
    #[arg(long, default_value_t = 3.7)]
    voltage: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_capacity(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let number = lower.strip_suffix("mah").unwrap_or(&lower).trim();
    match number.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{t}` is not a positive capacity in mAh")),
    }
}

/// Failure that maps to a specific exit status.
#[derive(Debug)]
struct Infeasible;

impl std::fmt::Display for Infeasible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("no multi-rate controller satisfies the energy budget")
    }
}

impl std::error::Error for Infeasible {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let outcome = match cli.command {
        Command::Precompute(a) => precompute(a),
        Command::Synthesize(a) => synthesize_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Battery(a) => battery_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Infeasible>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("RATEKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .with_context(|| format!("RATEKIT_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn precompute(args: PrecomputeArgs) -> anyhow::Result<()> {
    let config_bytes =
        fs::read(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let cfg = ToolConfig::from_path(&args.config)?;
    let (plant, plant_bytes) = cfg.load_plant()?;
    let rates = cfg.rates()?;
    let levels = cfg.level_spec()?;
    let models = design_rates(&plant, &rates)?;
    let ct = cost_table_from_models(&models, &levels)?;
    let pt = build_power_table(&rates, cfg.peak_power_mw)?;
    let profit = cfg.pattern.clone().map(|pattern| ProfitContext {
        pattern,
        window_s: cfg.hyper_period_s,
    });
    let bundle = TableBundle::new(
        ct,
        pt,
        levels,
        Provenance::now(&plant_bytes, Some(&config_bytes)),
        profit,
    )?;
    bundle.write(&args.out)?;
    for v in &bundle.cost_table.violations {
        eprintln!(
            "warning: cost falls from {} to {} between {} ms and {} ms at level {}",
            v.shorter,
            v.longer,
            bundle.cost_table.periods_ms[v.period_index],
            bundle.cost_table.periods_ms[v.period_index + 1],
            v.level + 1
        );
    }
    println!(
        "wrote {} rates x {} levels to {}",
        bundle.cost_table.rates(),
        bundle.cost_table.levels(),
        args.out.display()
    );
    Ok(())
}

fn result_json(result: &SynthesisResult, timing: bool) -> anyhow::Result<String> {
    let mut v = serde_json::to_value(result)?;
    if !timing {
        if let Some(obj) = v.as_object_mut() {
            obj.remove("elapsed_s");
        }
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

fn synthesize_cmd(args: SynthesizeArgs) -> anyhow::Result<()> {
    let bundle = TableBundle::read(&args.tables)?;
    let budget = EnergyBudget::new(args.budget_energy, args.budget_window)?;
    let totals = totals_over_window(
        &bundle.cost_table,
        &bundle.power_table,
        &args.pattern,
        args.budget_window,
    )?;
    let result = synthesize(args.algo, &totals, &budget)?;
    println!("{}", result_json(&result, args.timing)?);
    if !result.feasible {
        eprintln!("warning: {Infeasible}; reporting the all-longest-period controller");
        if args.strict {
            return Err(Infeasible.into());
        }
    }
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> anyhow::Result<()> {
    let cfg = ToolConfig::from_path(&args.config)?;
    let (plant, _) = cfg.load_plant()?;
    let levels = cfg.level_spec()?;
    let scenario = cfg.load_scenario(args.seed)?;
    let strategy = cfg.strategy()?;
    let bank = RateBank::build(&plant, cfg.rates()?, levels.clone(), cfg.peak_power_mw)?;
    let pattern = cfg.nominal_pattern(&levels, Some(&scenario))?;
    let budget = cfg.resolve_budget(&bank, &pattern)?;
    let trace = simulate(
        &plant,
        &bank,
        &scenario,
        &budget,
        cfg.hyper_period_s,
        strategy,
        &cfg.sim_options(),
    )?;
    let mut out = create(&args.out)?;
    trace
        .write_jsonl(&mut out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    out.flush()?;

    if let Some(plot) = args.emit_plotdata {
        let path = plot.unwrap_or_else(|| {
            let mut p = args.out.clone().into_os_string();
            p.push(".plot.csv");
            PathBuf::from(p)
        });
        let capacity = Battery::full(cfg.battery.capacity_mah, cfg.battery.voltage_v)?;
        write_plotdata(&path, &trace, capacity.capacity_j())?;
    }
    let mut summary = serde_json::to_value(&trace.summary)?;
    summary["budget_j"] = budget.max_energy_j.into();
    summary["seed"] = scenario.seed.into();
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn write_plotdata(path: &Path, trace: &SimulationTrace, battery_j: f64) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t_s,cost_integral,avg_cost,energy_j,battery_j")?;
    for p in &trace.series {
        let avg = if p.t > 0.0 { p.cost_integral / p.t } else { 0.0 };
        writeln!(
            w,
            "{},{},{},{},{}",
            p.t,
            p.cost_integral,
            avg,
            p.energy_j,
            (battery_j - p.energy_j).max(0.0)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> anyhow::Result<()> {
    let cfg = BenchConfig::from_path(&args.cases)?;
    let report = run_bench(&cfg)?;
    let out = create(&args.out)?;
    report.write_csv(out)?;
    print!("{}", report.table());
    Ok(())
}

fn default_fixed_ms() -> f64 {
    50.0
}

fn default_horizon_samples() -> usize {
    100
}

fn default_algo() -> Algorithm {
    Algorithm::Approach1
}

/// Inputs of the battery comparison. Only `pattern` is required.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatteryPlan {
    pattern: DisturbancePattern,
    #[serde(default)]
    window_s: Option<f64>,
    #[serde(default = "default_fixed_ms")]
    fixed_ms: f64,
    /// Energy per window; by default the least energy that matches the
    /// fixed-rate cost.
    #[serde(default)]
    budget_j: Option<f64>,
    #[serde(default = "default_algo")]
    algorithm: Algorithm,
    #[serde(default)]
    horizon_s: Option<f64>,
    #[serde(default = "default_horizon_samples")]
    samples: usize,
}

fn load_plan(arg: &str) -> anyhow::Result<BatteryPlan> {
    if let Ok(pattern) = arg.parse::<DisturbancePattern>() {
        return Ok(BatteryPlan {
            pattern,
            window_s: None,
            fixed_ms: default_fixed_ms(),
            budget_j: None,
            algorithm: default_algo(),
            horizon_s: None,
            samples: default_horizon_samples(),
        });
    }
    let text = fs::read_to_string(arg).with_context(|| format!("reading pattern file {arg}"))?;
    serde_json::from_str(&text).with_context(|| format!("parsing pattern file {arg}"))
}

fn battery_cmd(args: BatteryArgs) -> anyhow::Result<()> {
    let bundle = TableBundle::read(&args.tables)?;
    let plan = load_plan(&args.pattern)?;
    let window = plan
        .window_s
        .or_else(|| bundle.meta.profit.as_ref().map(|p| p.window_s))
        .unwrap_or(100.0);
    let totals = totals_over_window(&bundle.cost_table, &bundle.power_table, &plan.pattern, window)?;
    let Some(fixed) = bundle.cost_table.index_of_millis(plan.fixed_ms) else {
        bail!("config error in `fixed_ms`: {} ms is not in the tables", plan.fixed_ms);
    };
    let (fixed_cost, fixed_energy) = candidate_cost_energy(&vec![fixed; totals.levels()], &totals);
    let budget_j = match plan.budget_j {
        Some(b) => b,
        None => min_energy_for_cost(&totals, fixed_cost).unwrap_or(fixed_energy),
    };
    let budget = EnergyBudget::new(budget_j, window)?;
    let result = synthesize(plan.algorithm, &totals, &budget)?;

    let battery = Battery::full(
        args.capacity,
        args.voltage,
    )?;
    let fixed_mw = fixed_energy / window * 1000.0;
    let adaptive_mw = result.predicted_energy_j / window * 1000.0;
    let horizon = plan
        .horizon_s
        .unwrap_or_else(|| battery.level_j / (fixed_mw.min(adaptive_mw) / 1000.0));
    let fixed_trace = battery_discharge(&battery, fixed_mw, horizon, plan.samples)?;
    let adaptive_trace = battery_discharge(&battery, adaptive_mw, horizon, plan.samples)?;

    let mut w: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(w, "t_s,fixed_j,multirate_j")?;
    for (f, a) in fixed_trace.points.iter().zip(&adaptive_trace.points) {
        writeln!(w, "{},{},{}", f.0, f.1, a.1)?;
    }
    w.flush()?;

    let life = |t: Option<f64>| t.map_or(f64::INFINITY, |s| s);
    let (lf, la) = (life(fixed_trace.depletion_s), life(adaptive_trace.depletion_s));
    eprintln!(
        "fixed {} ms: {:.3} mW, cost {:.6}, battery life {:.1} h",
        plan.fixed_ms,
        fixed_mw,
        fixed_cost,
        lf / 3600.0
    );
    eprintln!(
        "multi-rate {:?} ms: {:.3} mW, cost {:.6}, battery life {:.1} h ({:+.2}%)",
        result.periods_ms,
        adaptive_mw,
        result.predicted_cost,
        la / 3600.0,
        (la / lf - 1.0) * 100.0
    );
    Ok(())
}
