use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use labeldp::budget::{
    budget_table, golden_diff, golden_for, min_budget, success_for_budget, BudgetQuery, GoldenTable,
    DEFAULT_FLIP_PERCENTS, DEFAULT_N_LIST,
};
use labeldp::em::{apply_em, apply_rr, flip_probability, score_distribution, RrParams};
use labeldp::io::{read_labels_path, write_labels_path, Sidecar};
use labeldp::losses::LossSpec;
use labeldp::rng::stream;
use labeldp::trainer::{run_grid, Architecture, ExperimentGrid, Mechanism, Objective, SyntheticSpec};
use labeldp::truncbin::{concentration_check, half_trend_series, scan_monotonicity, ScanGrid};
use labeldp::PrivacyParams;

mod check;

#[derive(Parser)]
#[command(name = "labeldp", version, about = "Label differential privacy toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Release labels through the exponential mechanism.
    Privatize(PrivatizeArgs),
    /// Release labels through randomized response.
    Rr(RrArgs),
    /// Minimum budget for one flip tolerance.
    Budget(BudgetArgs),
    /// Budget tables over sizes and flip tolerances.
    Tables(TablesArgs),
    /// Probability of staying within a flip tolerance at a given budget.
    Success(SuccessArgs),
    /// Monotonicity scan of the truncated binomial.
    Scan(ScanArgs),
    /// Flip-rate distributions of the mechanism for several sizes.
    Degrade(DegradeArgs),
    /// Train and evaluate over a grid of budgets, losses and sizes.
    Experiment(ExperimentArgs),
    /// Run every invariant suite and report as JSON.
    Check(CheckArgs),
}

#[derive(Args)]
struct PrivatizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RrArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Budget; the flip probability is derived from it.
    #[arg(long, conflicts_with = "flip_probability", required_unless_present = "flip_probability")]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long)]
    flip_probability: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long)]
    n: u64,
    /// Tolerated fraction of flipped labels.
    #[arg(long)]
    flip: f64,
    #[arg(long, default_value_t = 0.999)]
    confidence: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
}

#[derive(Args)]
struct TablesArgs {
    /// 0.999 or 0.95.
    #[arg(long, default_value_t = 0.999, conflicts_with = "confidence_raw")]
    confidence: f64,
    /// Any confidence in (0, 1).
    #[arg(long)]
    confidence_raw: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<u64>>,
    /// Flip tolerances in percent.
    #[arg(long, value_delimiter = ',')]
    flips: Option<Vec<u32>>,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Emit CSV instead of a text table.
    #[arg(long, conflicts_with = "json")]
    csv: bool,
    #[arg(long)]
    json: bool,
    /// Compare against the reference table and exit 1 on mismatch.
    #[arg(long)]
    check: bool,
    /// Reference CSV to compare against instead of the embedded one.
    #[arg(long)]
    golden: Option<PathBuf>,
}

#[derive(Args)]
struct SuccessArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.5)]
    flip: f64,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    property: u8,
    #[arg(long, default_value_t = 1)]
    n_min: u64,
    #[arg(long, default_value_t = 200)]
    n_max: u64,
    #[arg(long, value_delimiter = ',')]
    p_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    offsets: Option<Vec<i64>>,
    /// Also write `x,series,value` rows of S(n, ceil(n/2)) over the scanned
    /// range for each p.
    #[arg(long)]
    trend_csv: Option<PathBuf>,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    n_list: Vec<u64>,
    #[arg(long, default_value_t = 100)]
    bins: usize,
    /// Half-width of the concentration window around p.
    #[arg(long, default_value_t = 0.05)]
    window: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Budgets; `inf` trains on clean labels.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<String>>,
    #[arg(long, value_delimiter = ';')]
    losses: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value = "em")]
    mechanism: String,
    #[arg(long, default_value = "ber")]
    objective: String,
    #[arg(long, default_value = "linear")]
    arch: String,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    balance: f64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for results.csv, results.txt and results.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum)]
    fault_inject: Option<check::Fault>,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    /// Bad input or I/O; exit 2.
    Input(String),
    /// A check ran and failed; exit 1.
    Check(String),
}

impl From<labeldp::Error> for Failure {
    fn from(e: labeldp::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        eprintln!("warning: no --seed given, using seed 0");
        0
    })
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn privatize(a: PrivatizeArgs) -> CmdResult {
    if a.epsilon.is_nan() || a.epsilon <= 0.0 {
        return Err(Failure::Input(format!("--epsilon must be > 0, got {}", a.epsilon)));
    }
    let params = PrivacyParams::new(a.epsilon, a.delta)?;
    let seed = seed_or_default(a.seed);
    let file = read_labels_path(&a.input)?;
    let record = apply_em(&file.labels, &params, seed);
    fs::create_dir_all(&a.out)?;
    write_labels_path(&a.out.join("privatized.csv"), &file.ids, &record.output)?;
    write_out(&a.out, "privatized.json", &Sidecar::from(&record).to_json()?)?;
    println!("n={} q={} flip_count={}", record.output.len(), record.score, record.flip_count);
    Ok(())
}

fn rr(a: RrArgs) -> CmdResult {
    let (rr, epsilon) = match (a.epsilon, a.flip_probability) {
        (Some(e), _) => (flip_probability(&PrivacyParams::new(e, a.delta)?), e),
        // implied budget, undefined above one half
        (None, Some(p)) => (RrParams::new(p)?, 2.0 * a.delta * ((1.0 - p) / p).ln()),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let seed = seed_or_default(a.seed);
    let file = read_labels_path(&a.input)?;
    let out = apply_rr(&file.labels, &rr, &mut stream(seed, "rr", 0));
    let flips = out.hamming(&file.labels);
    fs::create_dir_all(&a.out)?;
    write_labels_path(&a.out.join("privatized.csv"), &file.ids, &out)?;
    let sidecar = Sidecar {
        epsilon: if epsilon >= 0.0 { epsilon } else { f64::NAN },
        delta: a.delta,
        seed,
        n: out.len(),
        q: out.len() - flips,
        flip_count: flips,
    };
    write_out(&a.out, "privatized.json", &sidecar.to_json()?)?;
    println!("n={} flip_probability={} flip_count={flips}", out.len(), rr.flip_probability());
    Ok(())
}

fn budget(a: BudgetArgs) -> CmdResult {
    let q = BudgetQuery::new(a.n, a.flip, a.confidence, a.delta)?;
    let r = min_budget(&q);
    println!("{}", serde_json::to_string(&r)?);
    Ok(())
}

fn tables(a: TablesArgs) -> CmdResult {
    let confidence = match a.confidence_raw {
        Some(p) => p,
        None if a.confidence == 0.999 || a.confidence == 0.95 => a.confidence,
        None => {
            return Err(Failure::Input(format!(
                "--confidence must be 0.999 or 0.95 (use --confidence-raw for other values), got {}",
                a.confidence
            )))
        }
    };
    let n_list = a.n_list.unwrap_or_else(|| DEFAULT_N_LIST.to_vec());
    let flips = a.flips.unwrap_or_else(|| DEFAULT_FLIP_PERCENTS.to_vec());
    let table = budget_table(confidence, &n_list, &flips, a.delta)?;
    if a.csv {
        print!("{}", table.to_csv());
    } else if a.json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        println!("minimum epsilon at {}% confidence", confidence * 100.0);
        print!("{}", table.to_text());
    }
    if a.check {
        let text = match &a.golden {
            Some(path) => fs::read_to_string(path)?,
            None => golden_for(confidence)
                .ok_or_else(|| Failure::Input(format!("no reference table for confidence {confidence}")))?
                .to_string(),
        };
        let golden = GoldenTable::parse(&text)?;
        let diff = golden_diff(&table, &golden, 0.001);
        if diff.is_empty() {
            eprintln!("check: all {} filled cells match, empty cells aligned", golden.filled());
        } else {
            for d in &diff {
                eprintln!(
                    "mismatch n={} flip={}%: computed {:?}, reference {:?}",
                    d.n, d.flip_percent, d.computed, d.reference
                );
            }
            return Err(Failure::Check(format!("{} table cells differ", diff.len())));
        }
    }
    Ok(())
}

fn success(a: SuccessArgs) -> CmdResult {
    let params = PrivacyParams::new(a.epsilon, a.delta)?;
    let r = success_for_budget(a.n, &params, a.flip)?;
    println!("{}", serde_json::to_string(&r)?);
    Ok(())
}

fn scan(a: ScanArgs) -> CmdResult {
    let grid = ScanGrid {
        n_min: a.n_min,
        n_max: a.n_max,
        p_grid: a.p_grid.unwrap_or_else(|| ScanGrid::standard().p_grid),
        offsets: a.offsets.unwrap_or_else(|| ScanGrid::standard().offsets),
    };
    let report = scan_monotonicity(a.property, &grid)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = a.trend_csv {
        let mut out = String::from("x,series,value\n");
        for pt in half_trend_series(grid.n_min, grid.n_max, &grid.p_grid) {
            let _ = writeln!(out, "{},{},{:.12}", pt.x, pt.series, pt.value);
        }
        fs::write(path, out)?;
    }
    if report.holds() {
        Ok(())
    } else {
        Err(Failure::Check(format!("property {} has {} violations", a.property, report.violations.len())))
    }
}

fn degrade(a: DegradeArgs) -> CmdResult {
    if a.bins == 0 {
        return Err(Failure::Input("--bins must be >= 1".into()));
    }
    let params = PrivacyParams::new(a.epsilon, a.delta)?;
    let p = flip_probability(&params).flip_probability();
    let mut out = String::from("n,flip_rate_bin,probability\n");
    let mut summary = String::new();
    for &n in &a.n_list {
        let dist = score_distribution(n as usize, &params)?;
        let mut mass = vec![0.0; a.bins];
        for q in 0..=n as usize {
            let flips = (n as usize - q) as u128;
            let b = ((flips * a.bins as u128 / n as u128) as usize).min(a.bins - 1);
            mass[b] += dist.prob(q);
        }
        for (b, m) in mass.iter().enumerate() {
            let centre = (b as f64 + 0.5) / a.bins as f64;
            let _ = writeln!(out, "{n},{centre:.6},{m:.12e}");
        }
        let total: f64 = mass.iter().sum();
        let window = concentration_check(n, p, a.window)?;
        let _ = writeln!(summary, "# n={n} p={p:.6} window={} mass={window:.9} total={total:.12}", a.window);
    }
    print!("{out}{summary}");
    Ok(())
}

fn parse_epsilon(s: &str) -> Result<Option<f64>, Failure> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| Failure::Input(format!("bad epsilon '{s}'")))
}

fn experiment(a: ExperimentArgs) -> CmdResult {
    let seed = seed_or_default(a.seed);
    let mut grid = ExperimentGrid {
        n_list: a.n_list,
        n_test: a.n_test,
        repetitions: a.reps,
        mechanism: a.mechanism.parse::<Mechanism>()?,
        objective: a.objective.parse::<Objective>()?,
        architecture: a.arch.parse::<Architecture>()?,
        learning_rate: a.lr,
        epochs: a.epochs,
        data: SyntheticSpec { d: a.d, separation: a.separation, sigma: a.sigma, balance: a.balance, stratified: true },
        master_seed: seed,
        ..ExperimentGrid::default()
    };
    if let Some(list) = a.epsilons {
        grid.epsilons = list.iter().map(|s| parse_epsilon(s)).collect::<Result<_, _>>()?;
    }
    if let Some(list) = a.losses {
        grid.losses = list.iter().map(|s| s.parse::<LossSpec>()).collect::<Result<_, _>>()?;
    }
    let results = match a.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Failure::Input(e.to_string()))?
            .install(|| run_grid(&grid))?,
        None => run_grid(&grid)?,
    };
    let text = results.to_text();
    match a.out {
        Some(dir) => {
            write_out(&dir, "results.csv", &results.to_csv())?;
            write_out(&dir, "results.txt", &text)?;
            write_out(&dir, "results.json", &(serde_json::to_string_pretty(&results)? + "\n"))?;
            print!("{text}");
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run_check(a: CheckArgs) -> CmdResult {
    let report = check::run(a.fault_inject);
    let json = serde_json::to_string_pretty(&report)? + "\n";
    print!("{json}");
    if let Some(path) = a.report {
        fs::write(path, &json)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check(format!("failing suites: {}", report.failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Privatize(a) => privatize(a),
        Command::Rr(a) => rr(a),
        Command::Budget(a) => budget(a),
        Command::Tables(a) => tables(a),
        Command::Success(a) => success(a),
        Command::Scan(a) => scan(a),
        Command::Degrade(a) => degrade(a),
        Command::Experiment(a) => experiment(a),
        Command::Check(a) => run_check(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
