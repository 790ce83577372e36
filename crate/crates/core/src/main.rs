use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};

use kafcm::datagen::{Dataset, DatasetMeta, SplitPart};
use kafcm::experiment::{
    evaluate, generate_dataset, grid_cell_error, run_experiment, split, train_model, ExperimentConfig, ExperimentError,
};
use kafcm::metrics::{comparison_table, TableRow, TABLE_HEADER};
use kafcm::model_file::Model;
use kafcm::symbolic::{fit_candidates, sample_edge};
use kafcm::training::{grid_search_resume, parse_rows, GridSearchReport};

#[derive(Parser)]
#[command(name = "kafcm", version, about = "Kolmogorov-Arnold fuzzy cognitive map experiments")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartArg {
    Train,
    Val,
    Test,
    Trainval,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Write the experiment dataset as CSV plus a metadata sidecar.
    Generate,
    /// Train the configured model on the train and validation parts.
    Train {
        /// Dataset CSV; defaults to `<out>/dataset.csv`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a model file on a dataset part.
    Evaluate {
        /// Defaults to `<out>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Defaults to `<out>/dataset.csv`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        part: PartArg,
        /// Append a row to this comparison table CSV.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Model name used in the table row; defaults to the model kind.
        #[arg(long)]
        label: Option<String>,
    },
    /// Exhaustive hyperparameter search for the spline map; resumes from an
    /// existing `gridsearch.csv`.
    Gridsearch {
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Sample one learned edge and fit closed-form candidates to it.
    Extract {
        /// Defaults to `<out>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Target and source node of the edge.
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        edge: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Train and test all three models and write the comparison table.
    Run,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn history_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        s.push_str(&format!("{e},{l:?}\n"));
    }
    s
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Self, ExperimentError> {
        let path = cli
            .config
            .as_deref()
            .ok_or_else(|| ExperimentError::Config("--config is required".into()))?;
        let mut cfg = ExperimentConfig::from_json(&read(path)?)?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
        Ok(Self { cfg, out })
    }

    fn load_dataset(&self, path: Option<&Path>) -> Result<Dataset, ExperimentError> {
        let csv = path.map_or_else(|| self.out.join("dataset.csv"), Path::to_path_buf);
        let meta_path = csv.with_extension("json");
        let text = read(&csv)?;
        let meta: DatasetMeta = serde_json::from_str(&read(&meta_path)?)
            .map_err(|e| io_err(&meta_path, format!("malformed metadata: {e}")))?;
        Ok(Dataset::from_csv(&text, meta.provenance)?)
    }
}

fn generate(ctx: &Ctx) -> Result<(), ExperimentError> {
    let data = generate_dataset(&ctx.cfg)?;
    write(&ctx.out.join("dataset.csv"), &data.to_csv())?;
    write(&ctx.out.join("dataset.json"), &json(&DatasetMeta::of(&data)))?;
    println!("wrote {} rows to {}", data.len(), ctx.out.join("dataset.csv").display());
    Ok(())
}

fn train(ctx: &Ctx, data: Option<&Path>) -> Result<(), ExperimentError> {
    let data = ctx.load_dataset(data)?;
    let fit = split(&ctx.cfg, &data)?.part(SplitPart::TrainVal);
    let history_path = ctx.out.join("history.csv");
    match train_model(&ctx.cfg, ctx.cfg.model, &fit) {
        Ok(t) => {
            write(&ctx.out.join("model.json"), &t.model.to_json())?;
            write(&history_path, &history_csv(&t.history))?;
            println!(
                "trained {} for {} epochs, final loss {:e}",
                t.model.kind_name(),
                t.history.len(),
                t.history.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Err(ExperimentError::Divergence { epoch, history }) => {
            write(&history_path, &history_csv(&history))?;
            Err(ExperimentError::Divergence { epoch, history })
        }
        Err(e) => Err(e),
    }
}

fn evaluate_cmd(
    ctx: &Ctx,
    model: Option<&Path>,
    data: Option<&Path>,
    part: PartArg,
    table: Option<&Path>,
    label: Option<&str>,
) -> Result<(), ExperimentError> {
    let model_path = model.map_or_else(|| ctx.out.join("model.json"), Path::to_path_buf);
    let model = Model::from_json(&read(&model_path)?)?;
    let data = ctx.load_dataset(data)?;
    let data = match part {
        PartArg::All => data,
        p => {
            let splits = split(&ctx.cfg, &data)?;
            splits.part(match p {
                PartArg::Train => SplitPart::Train,
                PartArg::Val => SplitPart::Val,
                PartArg::Test => SplitPart::Test,
                _ => SplitPart::TrainVal,
            })
        }
    };
    let report = evaluate(&model, &data)?;
    write(&ctx.out.join("metrics.json"), &json(&report))?;
    if let Some(table) = table {
        let row = TableRow {
            model: label.unwrap_or(model.kind_name()).to_string(),
            report: report.clone(),
        };
        let fresh = !table.exists();
        if fresh {
            write(table, &format!("{TABLE_HEADER}\n"))?;
        }
        let mut f = OpenOptions::new().append(true).open(table).map_err(|e| io_err(table, e))?;
        writeln!(f, "{}", row.to_csv_line()).map_err(|e| io_err(table, e))?;
    }
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

fn gridsearch(ctx: &Ctx, jobs: usize) -> Result<(), ExperimentError> {
    let cfg = &ctx.cfg;
    let data = generate_dataset(cfg)?;
    let splits = split(cfg, &data)?;
    let csv_path = ctx.out.join("gridsearch.csv");
    let done = if csv_path.exists() {
        let text = read(&csv_path)?;
        // A run killed mid-write can leave a torn last line; drop it.
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        parse_rows(complete, cfg.seed)?
    } else {
        Vec::new()
    };
    // Rewrite the rows already known so the file always starts with a header.
    let partial = GridSearchReport::from_rows(done.clone()).to_csv();
    write(&csv_path, &partial)?;
    let file = OpenOptions::new()
        .append(true)
        .open(&csv_path)
        .map_err(|e| io_err(&csv_path, e))?;
    let sink = Mutex::new(file);
    let report = grid_search_resume(
        &cfg.search,
        cfg.seed,
        jobs.max(1),
        &done,
        |row| {
            let line = GridSearchReport::from_rows(vec![row.clone()]).to_csv();
            let body = line.split_once('\n').map_or("", |(_, b)| b);
            let mut f = sink.lock().expect("grid-search sink poisoned");
            let _ = f.write_all(body.as_bytes());
        },
        |cell, seed| grid_cell_error(cfg, &splits, cell, seed),
    )?;
    drop(sink);
    write(&csv_path, &report.to_csv())?;
    write(&ctx.out.join("gridsearch.json"), &json(&report.summary()))?;
    let s = report.summary();
    println!(
        "{} rows ({} failed); best {:?}",
        s.rows,
        s.failed,
        s.best.map(|b| (b.cell.grid_size, b.cell.learning_rate, b.cell.epochs, b.val_error))
    );
    Ok(())
}

fn extract(ctx: &Ctx, model: Option<&Path>, edge: &[usize], samples: usize) -> Result<(), ExperimentError> {
    let model_path = model.map_or_else(|| ctx.out.join("model.json"), Path::to_path_buf);
    let Model::Kafcm(m) = Model::from_json(&read(&model_path)?)? else {
        return Err(ExperimentError::Usage("extract needs a kafcm model".into()));
    };
    let (i, j) = match edge {
        [i, j] => (*i, *j),
        _ => return Err(ExperimentError::Usage("--edge takes two node indices".into())),
    };
    let n = kafcm::Dynamics::n_nodes(&m);
    if i >= n || j >= n {
        return Err(ExperimentError::Usage(format!("edge ({i}, {j}) out of range for {n} nodes")));
    }
    if !m.is_present(i, j) {
        return Err(ExperimentError::Usage(format!("edge ({i}, {j}) is masked")));
    }
    let curve = sample_edge(m.edge(i, j), samples, (i, j)).map_err(|e| ExperimentError::Usage(e.to_string()))?;
    let fits = fit_candidates(&curve).map_err(|e| ExperimentError::Usage(e.to_string()))?;
    write(&ctx.out.join(format!("edge_{i}_{j}.csv")), &curve.to_csv())?;
    write(&ctx.out.join(format!("edge_{i}_{j}_fits.json")), &json(&fits))?;
    if let Some(top) = fits.first() {
        println!(
            "top fit: {} {:?} (r2 {:.6})",
            top.form.name(),
            top.coefficients,
            top.r_squared
        );
    }
    Ok(())
}

fn run(ctx: &Ctx) -> Result<(), ExperimentError> {
    let outcome = run_experiment(&ctx.cfg)?;
    for t in &outcome.models {
        let name = t.model.kind_name();
        write(&ctx.out.join(format!("model_{name}.json")), &t.model.to_json())?;
        write(&ctx.out.join(format!("history_{name}.csv")), &history_csv(&t.history))?;
    }
    let table = comparison_table(&outcome.rows);
    write(&ctx.out.join("table.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), ExperimentError> {
    let ctx = Ctx::load(cli)?;
    match &cli.command {
        Command::Generate => generate(&ctx),
        Command::Train { data } => train(&ctx, data.as_deref()),
        Command::Evaluate {
            model,
            data,
            part,
            table,
            label,
        } => evaluate_cmd(&ctx, model.as_deref(), data.as_deref(), *part, table.as_deref(), label.as_deref()),
        Command::Gridsearch { jobs } => gridsearch(&ctx, *jobs),
        Command::Extract { model, edge, samples } => extract(&ctx, model.as_deref(), edge, *samples),
        Command::Run => run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
