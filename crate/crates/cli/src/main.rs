mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperpinn::bench::{self, time_median, BenchConfig, Method};
use hyperpinn::doe::{load_task_table, save_task_table, test_tasks, validate_design, validation_tasks, DesignKind, TaskDesign};
use hyperpinn::fd::{self, capacity_weights, energy_balance_residual, export::save_field_csv, outlet_means, Grid};
use hyperpinn::hypernet::{build_bank, infer_field, reconstruction_rmse, train_hypernet, HypernetModel, ValidationTask, WeightBank};
use hyperpinn::model::{OperatingCondition, SECTOR_NAMES};
use hyperpinn::pinn::{evaluate_field_with, train_base_pinn};
use hyperpinn::{config_hash, Error, Result};
use serde_json::{json, Value};

use config::Config;

/// Condition used for the three-way field comparison export.
const COMPARISON_TASK: [f64; 4] = [300.00, 21.59, 16.69, 790.06];

#[derive(Parser, Debug)]
#[command(name = "hyperpinn", version, about = "Rotary regenerator thermal fields: FD oracle, PINN bank and hypernetwork")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Print one JSON object on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct TaskArg {
    /// Operating condition `Tin1,Tin2,Tin3,m1` (°C, °C, °C, flow).
    #[arg(long, value_parser = parse_task)]
    task: Option<OperatingCondition>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one task with the finite-difference oracle; writes field.csv.
    Solve {
        #[command(flatten)]
        task: TaskArg,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Generate a task design; writes design.csv.
    Design,
    /// Train one base PINN per design task; writes the bank directory.
    TrainBank {
        /// Task table to train on instead of the configured design.
        #[arg(long)]
        design: Option<PathBuf>,
        /// Bank directory, default `<out>/bank`.
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit the hypernetwork to a bank; writes hypernet.bin.
    TrainHypernet {
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Validation task table; the bundled set by default.
        #[arg(long)]
        validation: Option<PathBuf>,
        /// Monitor the training loss instead of validation error.
        #[arg(long, conflicts_with = "validation")]
        no_validation: bool,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Predict weights and evaluate the field for one task; writes inferred_field.csv.
    Infer {
        #[command(flatten)]
        task: TaskArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Compare methods against the oracle on a task table; writes report.csv and companions.
    Benchmark {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Task table; the bundled test set by default.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Comma-separated subset of hypernet, base-pinn, nearest-neighbor.
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
    },
    /// Write oracle, freshly trained base PINN and hypernetwork fields for one task.
    ExportField {
        #[command(flatten)]
        task: TaskArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        grid: Option<usize>,
    },
}

fn parse_task(s: &str) -> std::result::Result<OperatingCondition, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let a: [f64; 4] = v.try_into().map_err(|v: Vec<f64>| format!("expected 4 values, got {}", v.len()))?;
    Ok(OperatingCondition::from_array(a))
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

/// What a command reports: a JSON object and its human-readable form.
struct Outcome {
    json: Value,
    text: String,
}

struct Ctx {
    cfg: Config,
    out: PathBuf,
}

impl Ctx {
    fn grid(&self, over: Option<usize>) -> Result<Grid> {
        Grid::square(over.unwrap_or(self.cfg.grid))
    }

    fn path(&self, over: Option<PathBuf>, default: &str) -> PathBuf {
        over.unwrap_or_else(|| self.out.join(default))
    }

    fn task(&self, t: TaskArg) -> OperatingCondition {
        t.task.unwrap_or_else(|| self.cfg.model.ranges.center())
    }

    fn write_field(&self, f: &fd::FieldSolution<f64>, name: &str) -> Result<PathBuf> {
        let p = self.out.join(name);
        save_field_csv(f, &self.cfg.model.scale, &p)?;
        Ok(p)
    }
}

fn outlets_celsius(ctx: &Ctx, f: &fd::FieldSolution<f64>) -> Value {
    let o = outlet_means(f);
    let m: serde_json::Map<String, Value> = SECTOR_NAMES
        .iter()
        .zip(o)
        .map(|(n, v)| (n.to_string(), json!(ctx.cfg.model.scale.from_nondim_temperature(v))))
        .collect();
    Value::Object(m)
}

fn solve(ctx: &Ctx, task: TaskArg, grid: Option<usize>) -> Result<Outcome> {
    let c = ctx.task(task);
    let g = ctx.grid(grid)?;
    let p = ctx.cfg.model.nondim::<f64>(&c)?;
    let (f, t) = bench::time_operation(|| fd::solve(&p, g, &ctx.cfg.solver));
    let f = f?;
    let path = ctx.write_field(&f, "field.csv")?;
    let eb = energy_balance_residual(&f, &capacity_weights());
    let outlets = outlets_celsius(ctx, &f);
    Ok(Outcome {
        text: format!(
            "solved {:?} on {}x{} in {} sweeps ({t:.3} s)\noutlet means °C: {outlets}\nenergy balance residual {eb:.3e}\nwrote {}",
            c.to_array(),
            g.n_phi,
            g.n_z,
            f.outer_iterations,
            path.display()
        ),
        json: json!({
            "command": "solve", "task": c, "grid": g, "outer_iterations": f.outer_iterations,
            "interface_residual": f.interface_residual, "outlet_means_celsius": outlets,
            "energy_balance_residual": eb, "seconds": t, "field": path,
        }),
    })
}

fn design(ctx: &Ctx, seed: u64) -> Result<Outcome> {
    let d = ctx.cfg.design.generate(&ctx.cfg.model, seed)?;
    let path = ctx.out.join("design.csv");
    save_task_table(&d.tasks, &path)?;
    let rep = validate_design(&d, &ctx.cfg.model.ranges);
    Ok(Outcome {
        text: format!(
            "{} ({}): {} tasks, balanced {}, min distance {:.4}\nwrote {}",
            d.name,
            d.kind.label(),
            d.len(),
            rep.balanced,
            rep.min_pairwise_distance,
            path.display()
        ),
        json: json!({"command": "design", "name": d.name, "kind": d.kind.label(), "tasks": d.tasks, "balance": rep, "file": path}),
    })
}

fn train_bank(ctx: &Ctx, seed: u64, design: Option<PathBuf>, bank: Option<PathBuf>, workers: Option<usize>) -> Result<Outcome> {
    let d = match design {
        Some(p) => TaskDesign {
            name: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            kind: DesignKind::Table,
            tasks: load_task_table(&p)?,
            level_spec: Vec::new(),
        },
        None => ctx.cfg.design.generate(&ctx.cfg.model, seed)?,
    };
    let dir = ctx.path(bank, "bank");
    let workers = workers.unwrap_or_else(rayon::current_num_threads);
    let ((b, reports), t) = {
        let (r, t) = bench::time_operation(|| build_bank::<f64>(&d, &ctx.cfg.model, &ctx.cfg.train, seed, workers));
        match r {
            Ok(v) => (v, t),
            Err(failure) => {
                if !failure.partial.is_empty() {
                    failure.partial.save(&dir)?;
                    log::warn!("saved {} trained entries to {}", failure.partial.len(), dir.display());
                }
                return Err(failure.into());
            }
        }
    };
    b.save(&dir)?;
    let losses: Vec<f64> = reports.iter().flatten().map(|r| r.final_losses.total).collect();
    let worst = losses.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        text: format!("trained {} PINNs for {} in {t:.1} s, worst final loss {worst:.3e}\nwrote {}", b.len(), d.name, dir.display()),
        json: json!({
            "command": "train-bank", "design": d.name, "entries": b.len(), "seconds": t,
            "final_losses": losses, "config_hash": b.metadata.config_hash, "bank": dir,
        }),
    })
}

fn oracle_tasks(ctx: &Ctx, tasks: &[OperatingCondition], g: Grid) -> Result<Vec<ValidationTask<f64>>> {
    tasks
        .iter()
        .map(|c| {
            let p = ctx.cfg.model.nondim(c)?;
            Ok(ValidationTask {
                condition: *c,
                oracle: fd::solve(&p, g, &ctx.cfg.solver)?,
            })
        })
        .collect()
}

fn train_hyper(
    ctx: &Ctx,
    seed: u64,
    bank: Option<PathBuf>,
    validation: Option<PathBuf>,
    no_validation: bool,
    model: Option<PathBuf>,
) -> Result<Outcome> {
    let bank: WeightBank<f64> = WeightBank::load(&ctx.path(bank, "bank"))?;
    let val = match (no_validation, validation) {
        (true, _) => Vec::new(),
        (false, Some(p)) => oracle_tasks(ctx, &load_task_table(&p)?, ctx.grid(None)?)?,
        (false, None) => oracle_tasks(ctx, &validation_tasks(), ctx.grid(None)?)?,
    };
    let hc = hyperpinn::hypernet::HypernetConfig { seed, ..ctx.cfg.hypernet };
    let (m, rep) = train_hypernet(&bank, &val, &hc)?;
    let path = ctx.path(model, "hypernet.bin");
    m.save(&path)?;
    let rmse = reconstruction_rmse(&m, &bank)?;
    let best = rep.monitored.iter().find(|(e, _)| *e == rep.best_epoch).map(|&(_, v)| v);
    Ok(Outcome {
        text: format!(
            "{} epochs (best {}, early stop {}) in {:.1} s, monitored {:?}, reconstruction RMSE {rmse:.4}\nwrote {}",
            rep.epochs,
            rep.best_epoch,
            rep.early_stopped,
            rep.seconds,
            best,
            path.display()
        ),
        json: json!({"command": "train-hypernet", "report": rep, "best_monitored": best, "reconstruction_rmse": rmse, "model": path}),
    })
}

fn infer(ctx: &Ctx, task: TaskArg, model: Option<PathBuf>, grid: Option<usize>) -> Result<Outcome> {
    let m: HypernetModel<f64> = HypernetModel::load(&ctx.path(model, "hypernet.bin"))?;
    let c = ctx.task(task);
    let g = ctx.grid(grid)?;
    let (f, timing) = time_median(ctx.cfg.benchmark.timing_runs, || infer_field(&m, &c, g, &ctx.cfg.model));
    let f = f?;
    let path = ctx.write_field(&f, "inferred_field.csv")?;
    let outlets = outlets_celsius(ctx, &f);
    Ok(Outcome {
        text: format!(
            "inferred {:?} on {}x{} in {:.4} s (median)\noutlet means °C: {outlets}\nwrote {}",
            c.to_array(),
            g.n_phi,
            g.n_z,
            timing.median,
            path.display()
        ),
        json: json!({"command": "infer", "task": c, "grid": g, "timing": timing, "outlet_means_celsius": outlets, "field": path}),
    })
}

fn benchmark(
    ctx: &Ctx,
    seed: u64,
    model: Option<PathBuf>,
    bank: Option<PathBuf>,
    tasks: Option<PathBuf>,
    methods: Option<Vec<Method>>,
) -> Result<Outcome> {
    let m: HypernetModel<f64> = HypernetModel::load(&ctx.path(model, "hypernet.bin"))?;
    let b: WeightBank<f64> = WeightBank::load(&ctx.path(bank, "bank"))?;
    let tasks = match tasks {
        Some(p) => load_task_table(&p)?,
        None => test_tasks(),
    };
    let bc = BenchConfig {
        grid: ctx.grid(None)?,
        solver: ctx.cfg.solver,
        methods: methods.unwrap_or_else(|| ctx.cfg.benchmark.methods.clone()),
        selection: ctx.cfg.benchmark.selection,
        train: ctx.cfg.train,
        seed,
        timing_runs: ctx.cfg.benchmark.timing_runs,
    };
    let r = bench::run_benchmark(&m, &b, &tasks, &bc, &ctx.cfg.model);
    let path = ctx.out.join("report.csv");
    bench::export_report(&r, &path)?;
    let agg: serde_json::Map<String, Value> = r
        .aggregates()
        .into_iter()
        .map(|(k, (mae, max))| (k.name().to_string(), json!({"mae_celsius": mae, "max_celsius": max})))
        .collect();
    let failures = r.failures();
    let text = format!("{}{failures} failed rows\nwrote {}", r.summary(), path.display());
    let json = json!({"command": "benchmark", "report": r, "aggregates": agg, "failures": failures, "file": path});
    if failures > 0 {
        log::warn!("{failures} benchmark rows failed; see {}", path.display());
    }
    Ok(Outcome { json, text })
}

fn export_field(ctx: &Ctx, seed: u64, task: TaskArg, model: Option<PathBuf>, grid: Option<usize>) -> Result<Outcome> {
    let m: HypernetModel<f64> = HypernetModel::load(&ctx.path(model, "hypernet.bin"))?;
    let c = task.task.unwrap_or(OperatingCondition::from_array(COMPARISON_TASK));
    let g = ctx.grid(grid)?;
    let p = ctx.cfg.model.nondim::<f64>(&c)?;
    let oracle = fd::solve(&p, g, &ctx.cfg.solver)?;
    let (pinn, report) = train_base_pinn(&p, c, &ctx.cfg.train, seed, None)?;
    let base = evaluate_field_with(&pinn, g, p)?;
    let hyper = infer_field(&m, &c, g, &ctx.cfg.model)?;
    let dir = ctx.out.join("fields");
    let paths = bench::export_field_comparison(&dir, &ctx.cfg.model.scale, &oracle, &base, &hyper)?;
    let sel = ctx.cfg.benchmark.selection;
    let (bm, bx) = bench::mae_max_error(&base, &oracle, &ctx.cfg.model.scale, sel)?;
    let (hm, hx) = bench::mae_max_error(&hyper, &oracle, &ctx.cfg.model.scale, sel)?;
    Ok(Outcome {
        text: format!(
            "task {:?}\nbase PINN: MAE {bm:.3} °C, max {bx:.3} °C ({} steps)\nhypernet:  MAE {hm:.3} °C, max {hx:.3} °C\nwrote {}",
            c.to_array(),
            report.steps,
            dir.display()
        ),
        json: json!({
            "command": "export-field", "task": c, "grid": g,
            "base_pinn": {"mae_celsius": bm, "max_celsius": bx, "steps": report.steps},
            "hypernet": {"mae_celsius": hm, "max_celsius": hx}, "files": paths,
        }),
    })
}

fn run(cli: Cli) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.validate()?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
        path: cli.out.clone(),
        source: e,
    })?;
    log::debug!("config hash {}", config_hash(&cfg));
    let ctx = Ctx { cfg, out: cli.out };
    match cli.command {
        Command::Solve { task, grid } => solve(&ctx, task, grid),
        Command::Design => design(&ctx, seed),
        Command::TrainBank { design, bank, workers } => train_bank(&ctx, seed, design, bank, workers),
        Command::TrainHypernet {
            bank,
            validation,
            no_validation,
            model,
        } => train_hyper(&ctx, seed, bank, validation, no_validation, model),
        Command::Infer { task, model, grid } => infer(&ctx, task, model, grid),
        Command::Benchmark {
            model,
            bank,
            tasks,
            methods,
        } => benchmark(&ctx, seed, model, bank, tasks, methods),
        Command::ExportField { task, model, grid } => export_field(&ctx, seed, task, model, grid),
    }
}

fn exit_code(code: i32) -> ExitCode {
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}

/// Prints a line, ignoring a closed stdout.
fn emit(s: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{s}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(o) => {
            emit(&if json { o.json.to_string() } else { o.text });
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.category().exit_code();
            if json {
                emit(&json!({"error": e.to_string(), "category": format!("{:?}", e.category()), "exit_code": code}).to_string());
            } else {
                eprintln!("error: {e}");
            }
            exit_code(code)
        }
    }
}
