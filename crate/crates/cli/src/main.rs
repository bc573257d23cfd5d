use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pilectl::controllers::{
    encode_checkpoint, gradient_check, load_checkpoint, save_checkpoint, ControllerKind, ControllerSpec,
};
use pilectl::dataset::{
    build_dataset, filter_ideal, load_demonstrations, read_dataset, read_demonstration, split, write_dataset,
    write_demonstration, DatasetSpec, Variant,
};
use pilectl::numerics::RngState;
use pilectl::signals::CHANNEL_NAMES;
use pilectl::simulator::{
    generate_demonstrations, success_rate_detailed, ConditionProfile, DemoConfig, Policy, RolloutConfig,
    ScriptedExpert, DEFAULT_MAX_STEPS,
};
use pilectl::training::{
    content_hash, run_experiment_grid, trace_comparison, trace_rows, train_with_validation, ExperimentGrid,
    RunManifest, TableLayout, TrainConfig,
};
use pilectl::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "pilectl", version, about = "Bucket-filling controllers learned from demonstration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted-expert demonstrations in the simulator.
    GenDemos {
        #[arg(long, default_value_t = 72, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        /// Built-in condition name or a profile TOML file.
        #[arg(long, default_value = "summer")]
        condition: String,
        #[arg(long, default_value_t = 500.0)]
        rate_hz: f64,
        /// Fraction of demonstrations that end with a full bucket.
        #[arg(long, default_value_t = 52.0 / 72.0)]
        full_fraction: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Turn a directory of demonstration CSVs into a training set.
    BuildDataset {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a controller on a dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Nnetv2)]
        controller: Kind,
        /// Add the tilt pressure p_t to the controller input.
        #[arg(long)]
        use_pt: bool,
        /// Feed p_l, p_b and the pump angle to the attention module.
        #[arg(long)]
        attention_extended: bool,
        #[arg(long, default_value_t = 150)]
        epochs: usize,
        #[arg(long, default_value_t = 512)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value_t = pilectl::controllers::DROPOUT_P)]
        dropout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hold out this fraction of demonstrations for validation.
        #[arg(long, conflicts_with = "val_dataset")]
        val_fraction: Option<f64>,
        /// Separate validation dataset directory.
        #[arg(long)]
        val_dataset: Option<PathBuf>,
        /// Checkpoint path; the loss curve goes next to it as `<out>.loss.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop success rate of a checkpoint (or `expert`) in the simulator.
    Eval {
        #[arg(long)]
        checkpoint: String,
        #[arg(long, default_value = "summer")]
        condition: String,
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
        /// Per-rollout CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run a grid of train-and-evaluate cells and write the result tables.
    Experiment {
        #[arg(long, required_unless_present = "preset")]
        grid_file: Option<PathBuf>,
        #[arg(long, value_parser = ["table2", "table3", "table4"], conflicts_with = "grid_file")]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trace a checkpoint against a recorded demonstration.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        demo: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare reverse-mode gradients with finite differences.
    Gradcheck {
        #[arg(long, value_enum, default_value_t = KindOrAll::All)]
        controller: KindOrAll,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        inputs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Nnet,
    Nnetv2,
    Annet,
    Dannet,
}

impl From<Kind> for ControllerKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Nnet => ControllerKind::Nnet,
            Kind::Nnetv2 => ControllerKind::NnetV2,
            Kind::Annet => ControllerKind::Annet,
            Kind::Dannet => ControllerKind::Dannet,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindOrAll {
    All,
    Nnet,
    Nnetv2,
    Annet,
    Dannet,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Data(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PILECTL_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(EXIT_CHECK)
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::GenDemos {
            n,
            condition,
            rate_hz,
            full_fraction,
            out,
            seed,
        } => gen_demos(n as usize, &condition, rate_hz, full_fraction, &out, seed),
        Command::BuildDataset { demos, variant, out } => build(&demos, variant, &out),
        Command::Train {
            dataset,
            controller,
            use_pt,
            attention_extended,
            epochs,
            batch_size,
            lr,
            dropout,
            seed,
            val_fraction,
            val_dataset,
            out,
        } => {
            let spec = ControllerSpec::from_sensors(controller.into(), use_pt, attention_extended)?;
            let cfg = TrainConfig {
                epochs,
                batch_size,
                lr,
                dropout_p: dropout,
                seed,
                shuffle: true,
            };
            train(spec, &cfg, &dataset, val_fraction, val_dataset.as_deref(), &out)
        }
        Command::Eval {
            checkpoint,
            condition,
            n,
            seed,
            max_steps,
            log,
        } => eval(&checkpoint, &condition, n, seed, max_steps, log.as_deref()),
        Command::Experiment {
            grid_file,
            preset,
            seed,
            out,
        } => experiment(grid_file.as_deref(), preset.as_deref(), seed, &out),
        Command::Inspect { checkpoint, demo, out } => inspect(&checkpoint, &demo, &out),
        Command::Gradcheck { controller, seed, inputs } => gradcheck(controller, seed, inputs),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn mkdir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn gen_demos(n: usize, condition: &str, rate_hz: f64, full_fraction: f64, out: &Path, seed: u64) -> CliResult {
    let cond = ConditionProfile::resolve(condition)?;
    let cfg = DemoConfig {
        n,
        rate_hz,
        full_fraction,
        ..Default::default()
    };
    println!("seed={seed} n={n} condition={} rate_hz={rate_hz} full_fraction={full_fraction}", cond.name);
    let demos = generate_demonstrations(&cfg, &cond, &mut RngState::new(seed))?;
    mkdir(out)?;
    let mut manifest = RunManifest::new();
    manifest
        .set("seed", seed)
        .set("n", n)
        .set("condition", &cond.name)
        .set("rate_hz", rate_hz)
        .set("full_fraction", full_fraction);
    let ideal = filter_ideal(&demos, DatasetSpec::d1().ideal_fill_threshold).len();
    manifest.set("ideal", ideal);
    for d in &demos {
        let path = out.join(format!("{}.csv", d.id));
        write_demonstration(d, &path)?;
        let bytes = fs::read(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        manifest.hash(format!("{}.csv", d.id), &bytes);
    }
    write(&out.join("corpus_manifest.txt"), manifest.render())?;
    println!("wrote {} demonstrations ({ideal} ideal) to {}", demos.len(), out.display());
    Ok(())
}

fn build(demos_dir: &Path, variant: Variant, out: &Path) -> CliResult {
    let demos = load_demonstrations(demos_dir)?;
    if demos.is_empty() {
        return Err(Failure::Data(format!("no demonstrations in {}", demos_dir.display())));
    }
    let ds = build_dataset(&demos, &DatasetSpec::for_variant(variant))?;
    write_dataset(&ds, out)?;
    println!(
        "{}: {} of {} demonstrations, {} samples -> {}",
        variant.label(),
        ds.demos.len(),
        demos.len(),
        ds.len(),
        out.display()
    );
    Ok(())
}

fn train(
    spec: ControllerSpec,
    cfg: &TrainConfig,
    dataset: &Path,
    val_fraction: Option<f64>,
    val_dataset: Option<&Path>,
    out: &Path,
) -> CliResult {
    cfg.validate()?;
    println!("{} controller={} inputs={}", cfg.summary(), spec.kind, spec.input_dim);
    let ds = read_dataset(dataset)?;
    let (train_set, val_set) = match (val_fraction, val_dataset) {
        (Some(f), _) => {
            let (t, v) = split(&ds, f, &mut RngState::new(cfg.seed).derive(4))?;
            (t, Some(v))
        }
        (None, Some(p)) => (ds, Some(read_dataset(p)?)),
        (None, None) => (ds, None),
    };
    let (params, curve) = train_with_validation(spec, &train_set, val_set.as_ref(), cfg)?;
    save_checkpoint(&params, out)?;
    let loss_path = PathBuf::from(format!("{}.loss.csv", out.display()));
    write(&loss_path, curve.to_csv())?;
    let last = |v: &[f64]| v.last().map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
    println!(
        "train_loss={} val_loss={} checkpoint={} sha256={}",
        last(&curve.train),
        last(&curve.val),
        out.display(),
        content_hash(&encode_checkpoint(&params))
    );
    Ok(())
}

fn eval(checkpoint: &str, condition: &str, n: usize, seed: u64, max_steps: usize, log: Option<&Path>) -> CliResult {
    let cond = ConditionProfile::resolve(condition)?;
    let mut policy: Box<dyn Policy> = if checkpoint == "expert" {
        Box::new(ScriptedExpert::new(Default::default()))
    } else {
        Box::new(load_checkpoint(checkpoint)?)
    };
    let config = RolloutConfig {
        max_steps,
        ..Default::default()
    };
    println!("seed={seed} condition={} n={n} max_steps={max_steps}", cond.name);
    let (rate, results) = success_rate_detailed(policy.as_mut(), &cond, n, config, &RngState::new(seed))?;
    if let Some(path) = log {
        let mut csv = String::from("rollout,success,final_fill,steps,termination\n");
        for (i, r) in results.iter().enumerate() {
            csv.push_str(&format!(
                "{i},{},{},{},{}\n",
                r.success,
                r.final_fill(),
                r.steps,
                r.termination.as_str()
            ));
        }
        write(path, csv)?;
    }
    println!("success_rate={rate:.1}");
    Ok(())
}

fn experiment(grid_file: Option<&Path>, preset: Option<&str>, seed: Option<u64>, out: &Path) -> CliResult {
    let mut grid = match (grid_file, preset) {
        (Some(p), _) => ExperimentGrid::load(p)?,
        (None, Some(name)) => ExperimentGrid::preset(TableLayout::parse(name)?)?,
        (None, None) => return Err(Failure::Usage("need --grid-file or --preset".into())),
    };
    if let Some(s) = seed {
        grid.seed = s;
    }
    println!("seed={} grid={} layout={} {}", grid.seed, grid.name, grid.layout.name(), grid.train.summary());
    let outcome = run_experiment_grid(&grid)?;
    mkdir(out)?;
    let table = out.join(format!("{}.csv", grid.name));
    write(&table, &outcome.table_csv)?;
    write(&out.join(format!("{}_long.csv", grid.name)), &outcome.long_csv)?;
    outcome.manifest.write(out.join("manifest.txt"))?;
    print!("{}", outcome.table_csv);
    Ok(())
}

fn inspect(checkpoint: &Path, demo: &Path, out: &Path) -> CliResult {
    let params = load_checkpoint(checkpoint)?;
    let demo = read_demonstration(demo)?;
    write(out, trace_comparison(&params, &demo)?)?;
    let rows = trace_rows(&params, &demo)?;
    let channels = params.spec.attention_channels()?.unwrap_or_default();
    let masks: Vec<&Vec<f64>> = rows.iter().filter_map(|r| r.mask.as_ref()).collect();
    if !masks.is_empty() {
        let names: Vec<String> = params.spec.input_channels()?.iter().map(|&c| CHANNEL_NAMES[c].to_string()).collect();
        let means: Vec<String> = (0..names.len())
            .map(|i| {
                let m = masks.iter().map(|m| m[i]).sum::<f64>() / masks.len() as f64;
                format!("{}={m:.3}", names[i])
            })
            .collect();
        println!("mean mask ({} attention inputs): {}", channels.len(), means.join(" "));
    }
    println!("{} rows -> {}", rows.len(), out.display());
    Ok(())
}

fn gradcheck(which: KindOrAll, seed: u64, inputs: usize) -> CliResult {
    let kinds = match which {
        KindOrAll::All => ControllerKind::ALL.to_vec(),
        KindOrAll::Nnet => vec![ControllerKind::Nnet],
        KindOrAll::Nnetv2 => vec![ControllerKind::NnetV2],
        KindOrAll::Annet => vec![ControllerKind::Annet],
        KindOrAll::Dannet => vec![ControllerKind::Dannet],
    };
    println!("seed={seed} inputs={inputs} h=1e-6 tolerance=1e-5");
    let mut failed = Vec::new();
    for kind in kinds {
        let spec = ControllerSpec::new(kind, inputs, kind.has_attention().then_some(inputs))?;
        let r = gradient_check(spec, seed, 3, 1e-6)?;
        let ok = r.passed(1e-5);
        println!(
            "{kind}: {} params, max relative error {:.3e} {}",
            r.params_checked,
            r.max_relative_error,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(kind.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("gradient mismatch for {}", failed.join(", "))))
    }
}
