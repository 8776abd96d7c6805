use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pdfa_stream::eval::{
    self, discover_scenarios, load_scenario, parse_solution, parse_strings, perplexity,
    scenario_paths, true_perplexity, write_scenario, ResultRow, DEFAULT_SMOOTHING,
};
use pdfa_stream::heuristics::{HeuristicConfig, HeuristicKind};
use pdfa_stream::pac::PacParams;
use pdfa_stream::streamer::{metrics_csv, LearnOutput, Learner, Mode, StreamConfig};
use pdfa_stream::synth::{self, DESK_TEST, DESK_TRAIN};
use pdfa_stream::{Alphabet, Pdfa, Trace};

#[derive(Parser)]
#[command(name = "pdfa-stream", version, about = "Learn probabilistic automata from trace streams")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Learn a model from a training file or stdin.
    Learn(LearnArgs),
    /// Score a model against a test set with known probabilities.
    Eval(EvalArgs),
    /// Print sample-size and sketch-size requirements.
    Pac(PacArgs),
    /// Learn and score every scenario of a directory.
    Suite(SuiteArgs),
    /// Write the built-in synthetic scenarios.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct LearnerFlags {
    #[arg(long, default_value = "stream-new")]
    mode: Mode,
    #[arg(long, default_value = "css-minhash")]
    heuristic: HeuristicKind,
    /// Longest stored future.
    #[arg(long = "Fs", default_value_t = 4)]
    future_len: usize,
    /// MinHash signature length.
    #[arg(long = "lm", default_value_t = 2)]
    minhash_len: usize,
    /// k-tails lookahead depth.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long = "batch", default_value_t = 5000)]
    batch_size: usize,
    /// Visits before a node may turn blue.
    #[arg(long = "tS", default_value_t = 25)]
    threshold: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Stop once the hypothesis has this many states.
    #[arg(long = "n", default_value_t = 1000)]
    state_bound: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Subtract this amount from the Hoeffding bound.
    #[arg(long = "narrow-beta")]
    narrow: Option<f64>,
}

impl LearnerFlags {
    fn config(&self) -> StreamConfig {
        let heuristic = HeuristicConfig {
            alpha: self.alpha,
            future_len: self.future_len,
            minhash_len: self.minhash_len,
            k: self.k,
            width: self.width,
            depth: self.depth,
            narrow: self.narrow,
            ..HeuristicConfig::new(self.heuristic)
        };
        StreamConfig {
            batch_size: self.batch_size,
            threshold: self.threshold,
            state_bound: self.state_bound,
            seed: self.seed,
            ..StreamConfig::new(self.mode, heuristic)
        }
    }
}

#[derive(Args)]
struct LearnArgs {
    /// Training strings; `-` reads stdin.
    #[arg(long)]
    train: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Alphabet size for stdin input, when larger than its header says.
    #[arg(long)]
    sigma: Option<u32>,
    #[command(flatten)]
    learner: LearnerFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "dir")]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "dir")]
    test: Option<PathBuf>,
    #[arg(long, required_unless_present = "dir")]
    solution: Option<PathBuf>,
    /// Scenario directory; pairs each scenario with `<models>/<name>/model.json`.
    #[arg(long, conflicts_with_all = ["model", "test", "solution"], requires = "models")]
    dir: Option<PathBuf>,
    #[arg(long)]
    models: Option<PathBuf>,
    /// Results CSV to append to.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    smoothing: f64,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct PacArgs {
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    sigma: u64,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    /// Sketch error bound, default mu / 4.
    #[arg(long)]
    beta: Option<f64>,
    /// Sketch failure probability, default delta.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "Fs", default_value_t = 4)]
    future_len: u64,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SuiteArgs {
    /// Scenario directory.
    #[arg(long, env = "PAUTOMAC_DIR")]
    dir: PathBuf,
    #[arg(long, default_value = "suite-out")]
    out: PathBuf,
    /// Only these scenarios.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    smoothing: f64,
    /// Learning processes run at once; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    learner: LearnerFlags,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DESK_TRAIN)]
    train: usize,
    #[arg(long, default_value_t = DESK_TEST)]
    test: usize,
}

enum Failure {
    Usage(String),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn run_err(e: pdfa_stream::Error) -> Failure {
    Failure::Run(e.into())
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    config: StreamConfig,
    train: PathBuf,
    out: PathBuf,
    traces_used: usize,
    passes: usize,
    states: usize,
    peak_mem_estimate_bytes: usize,
    wall_ms: u64,
    started_unix_ms: u128,
    finished_unix_ms: u128,
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn learn_stdin(sigma: Option<u32>, config: StreamConfig) -> anyhow::Result<LearnOutput> {
    let stdin = io::stdin().lock();
    let mut lines = stdin.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) if line.as_ref().is_ok_and(|l| l.trim().is_empty()) => continue,
            Some((_, line)) => break line?,
            None => bail!("stdin: missing header"),
        }
    };
    let header_sigma: u32 = match header.split_whitespace().collect::<Vec<_>>()[..] {
        [_, size] => size.parse().context("stdin:1: bad alphabet size")?,
        _ => bail!("stdin:1: header must be `<num_strings> <alphabet_size>`"),
    };
    let alphabet = Alphabet::new(header_sigma.max(sigma.unwrap_or(0)));
    let mut learner = Learner::new(alphabet, config)?;
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(str::parse::<u32>)
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("stdin:{}: expected numbers", i + 1))?;
        let Some((&len, syms)) = nums.split_first() else { continue };
        if syms.len() != len as usize {
            bail!("stdin:{}: length field says {len} but {} symbols follow", i + 1, syms.len());
        }
        let trace = Trace::new(alphabet, syms.iter().copied()).with_context(|| format!("stdin:{}", i + 1))?;
        if !learner.push(&trace)? {
            break;
        }
    }
    Ok(learner.finish()?)
}

fn learn_file(path: &Path, config: StreamConfig) -> anyhow::Result<LearnOutput> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = parse_strings(&text, &path.display().to_string())?;
    let alphabet = Alphabet::new(file.inferred_alphabet());
    let traces = file.traces(alphabet)?;
    Ok(pdfa_stream::streamer::run(alphabet, &traces, config)?)
}

fn cmd_learn(args: LearnArgs) -> Result<(), Failure> {
    let config = args.learner.config();
    config.validate().map_err(usage)?;
    let started = unix_ms();
    let clock = Instant::now();
    let out = if args.train.as_os_str() == "-" {
        learn_stdin(args.sigma, config)?
    } else {
        learn_file(&args.train, config)?
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        train: args.train.clone(),
        out: args.out.clone(),
        traces_used: out.traces_used,
        passes: out.passes.len(),
        states: out.hypothesis.num_states(),
        peak_mem_estimate_bytes: out.peak_mem_estimate_bytes,
        wall_ms: clock.elapsed().as_millis() as u64,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
    };
    write_learn_output(&args.out, &out, &manifest)?;
    eprintln!(
        "{} minimization passes over {} traces, {} states",
        out.passes.len(),
        out.traces_used,
        out.hypothesis.num_states()
    );
    Ok(())
}

fn write_learn_output(dir: &Path, out: &LearnOutput, manifest: &RunManifest) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("model.json"), out.hypothesis.to_json()?)?;
    fs::write(dir.join("model.dot"), out.hypothesis.to_dot())?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&out.metrics)?)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

fn eval_one(model: &Path, test: &Path, solution: &Path, eps: f64) -> anyhow::Result<(f64, f64, usize)> {
    let pdfa = Pdfa::load(model).with_context(|| format!("loading {}", model.display()))?;
    let test_text = fs::read_to_string(test).with_context(|| format!("reading {}", test.display()))?;
    let test_file = parse_strings(&test_text, &test.display().to_string())?;
    let sol_text = fs::read_to_string(solution).with_context(|| format!("reading {}", solution.display()))?;
    let probs = parse_solution(&sol_text, &solution.display().to_string())?;
    let empty = parse_strings("0 0", "")?;
    let bundle = eval::bundle(String::new(), empty, test_file, probs)?;
    Ok((
        perplexity(&pdfa, &bundle.test, &bundle.solution, eps),
        true_perplexity(&bundle.solution, eps),
        pdfa.num_states(),
    ))
}

fn append_rows(path: &Path, rows: &[ResultRow]) -> anyhow::Result<()> {
    let mut all = if path.exists() {
        eval::read_csv(&fs::read_to_string(path)?)?
    } else {
        Vec::new()
    };
    all.extend_from_slice(rows);
    fs::write(path, eval::write_csv(&all)?)?;
    Ok(())
}

fn read_manifest(dir: &Path) -> Option<RunManifest> {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).ok()?).ok()
}

/// Result row for a model, filled from the manifest next to it when present.
fn model_row(model: &Path, scenario: String, perplexity: f64, true_perplexity: f64, states: usize) -> ResultRow {
    let manifest = model.parent().and_then(read_manifest);
    let config = manifest.as_ref().map(|m| m.config);
    ResultRow {
        scenario,
        mode: config.map(|c| c.mode.to_string()).unwrap_or_default(),
        heuristic: config.map(|c| c.heuristic.kind.to_string()).unwrap_or_default(),
        f: config.map(|c| c.heuristic.param()).unwrap_or(0),
        perplexity,
        true_perplexity,
        wall_ms: manifest.as_ref().map_or(0, |m| m.wall_ms),
        peak_mem_bytes: manifest.as_ref().map_or(0, |m| m.peak_mem_estimate_bytes),
        states,
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    if !(args.smoothing >= 0.0 && args.smoothing.is_finite()) {
        return Err(usage("smoothing must be a non-negative number"));
    }
    let mut rows = Vec::new();
    let mut jobs = Vec::new();
    if let (Some(dir), Some(models)) = (&args.dir, &args.models) {
        for name in discover_scenarios(dir).map_err(run_err)? {
            let [_, test, solution] = scenario_paths(dir, &name);
            let model = models.join(&name).join("model.json");
            if model.is_file() {
                jobs.push((name, model, test, solution));
            } else {
                eprintln!("skipping {name}: no model at {}", model.display());
            }
        }
        if jobs.is_empty() {
            return Err(Failure::Run(anyhow::anyhow!("no models found under {}", models.display())));
        }
    } else {
        let model = args.model.expect("required by clap");
        let name = args
            .test
            .as_ref()
            .and_then(|t| t.file_name())
            .and_then(|f| f.to_str())
            .and_then(|f| f.split('.').next())
            .unwrap_or("scenario")
            .to_string();
        jobs.push((name, model, args.test.expect("required by clap"), args.solution.expect("required by clap")));
    }
    for (name, model, test, solution) in jobs {
        let (p, floor, states) = eval_one(&model, &test, &solution, args.smoothing)?;
        println!("{name}: perplexity {p:.6} true {floor:.6} ratio {:.4}", p / floor);
        rows.push(model_row(&model, name, p, floor, states));
    }
    if let Some(results) = &args.results {
        append_rows(results, &rows)?;
    }
    Ok(())
}

fn cmd_pac(args: PacArgs) -> Result<(), Failure> {
    let mut params = PacParams::new(args.mu, args.alpha, args.eps, args.delta, args.n, args.sigma);
    if let Some(b) = args.beta {
        params.beta = b;
    }
    if let Some(g) = args.gamma {
        params.gamma = g;
    }
    params.future_len = args.future_len;
    params.validate().map_err(usage)?;
    let report = params.report().map_err(run_err)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    } else {
        println!("{report}");
    }
    Ok(())
}

fn learner_argv(flags: &LearnerFlags) -> Vec<String> {
    let mut v = vec![
        format!("--mode={}", flags.mode),
        format!("--heuristic={}", flags.heuristic),
        format!("--Fs={}", flags.future_len),
        format!("--lm={}", flags.minhash_len),
        format!("--k={}", flags.k),
        format!("--batch={}", flags.batch_size),
        format!("--tS={}", flags.threshold),
        format!("--alpha={}", flags.alpha),
        format!("--n={}", flags.state_bound),
        format!("--width={}", flags.width),
        format!("--depth={}", flags.depth),
        format!("--seed={}", flags.seed),
    ];
    if let Some(b) = flags.narrow {
        v.push(format!("--narrow-beta={b}"));
    }
    v
}

fn cmd_suite(args: SuiteArgs) -> Result<(), Failure> {
    let config = args.learner.config();
    config.validate().map_err(usage)?;
    let mut names = discover_scenarios(&args.dir).map_err(run_err)?;
    if !args.only.is_empty() {
        names.retain(|n| args.only.contains(n));
    }
    if names.is_empty() {
        return Err(Failure::Run(anyhow::anyhow!("no scenarios found in {}", args.dir.display())));
    }
    let exe = std::env::current_exe()?;
    let jobs = args.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let mut rows = Vec::new();
    for chunk in names.chunks(jobs) {
        let mut children = Vec::new();
        for name in chunk {
            let [train, _, _] = scenario_paths(&args.dir, name);
            let out = args.out.join(name);
            let child = Command::new(&exe)
                .arg("learn")
                .arg("--train")
                .arg(&train)
                .arg("--out")
                .arg(&out)
                .args(learner_argv(&args.learner))
                .spawn()?;
            children.push((name, out, child));
        }
        for (name, out, mut child) in children {
            let status = child.wait()?;
            if !status.success() {
                return Err(Failure::Run(anyhow::anyhow!("learning {name} failed: {status}")));
            }
            let bundle = load_scenario(&args.dir, name).map_err(run_err)?;
            let model_path = out.join("model.json");
            let model = Pdfa::load(&model_path).map_err(run_err)?;
            let row = model_row(
                &model_path,
                name.clone(),
                perplexity(&model, &bundle.test, &bundle.solution, args.smoothing),
                true_perplexity(&bundle.solution, args.smoothing),
                model.num_states(),
            );
            println!("{name}: perplexity {:.6} true {:.6} ratio {:.4}", row.perplexity, row.true_perplexity, row.ratio());
            rows.push(row);
        }
    }
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("results.csv"), eval::write_csv(&rows).map_err(run_err)?)?;
    println!("{}", eval::summary(&rows));
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    for (name, params, seed) in synth::desk_suite() {
        let (bundle, _) = synth::scenario(&name, &params, args.train, args.test, seed).map_err(run_err)?;
        write_scenario(&args.out, &bundle).map_err(run_err)?;
        println!("{}", scenario_paths(&args.out, &name)[0].display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Learn(a) => cmd_learn(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Pac(a) => cmd_pac(a),
        Cmd::Suite(a) => cmd_suite(a),
        Cmd::Synth(a) => cmd_synth(a),
    };
    let _ = io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
