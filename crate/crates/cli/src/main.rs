use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rearrange::baselines::nf_build;
use rearrange::buffer::{BufferError, ExperienceBuffer};
use rearrange::config::RunConfig;
use rearrange::graph::{build_graph, TransitionGraph};
use rearrange::harness::{evaluate, generate_buffer, sweep, sweep_csv, Artifacts, Method, SweepAxis, SweepSource};

#[derive(Parser)]
#[command(name = "rearrange-cli", version, about = "Buffer generation, graph building and evaluation for object rearrangement")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    setting: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an experience buffer with the scripted random data policy.
    GenBuffer {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Objects per scene in the buffer.
        #[arg(long)]
        objects: Option<usize>,
        /// Number of episodes.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a transition graph from a buffer.
    BuildGraph {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        buffer: PathBuf,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a method and write a report CSV.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Graph file; not needed for `rand`.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Buffer file; needed for `nf` and for sweeps that rebuild graphs.
        #[arg(long)]
        buffer: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        /// Object counts to evaluate, comma separated.
        #[arg(long)]
        objects: Option<String>,
        /// Episodes per seed.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Sweep one axis: `clusters|buffer_fraction|noise_std|horizon_multiplier=v1,v2,...`.
        #[arg(long)]
        sweep: Option<String>,
        /// Record wall-clock seconds (makes the report non-reproducible).
        #[arg(long)]
        timing: bool,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump graph nodes and edges.
    Inspect {
        #[arg(long)]
        graph: PathBuf,
        /// Machine-readable CSV with a header row.
        #[arg(long)]
        csv: bool,
    },
}

enum CliError {
    Usage(String),
    Io(String),
    Format(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Format(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) => m,
            CliError::Format(m) => m,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn resolve(args: &ConfigArgs, extra: Vec<(String, String)>) -> Result<RunConfig> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| io_err(p, e))?,
        None => String::new(),
    };
    let mut overrides = Vec::new();
    if let Some(v) = &args.variant {
        overrides.push(("variant".to_string(), v.clone()));
    }
    for s in &args.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(v) = &args.setting {
        overrides.push(("setting".to_string(), v.clone()));
    }
    if let Some(s) = args.seed {
        overrides.push(("seed".to_string(), s.to_string()));
    }
    overrides.extend(extra);
    RunConfig::parse(&text, &overrides).map_err(|e| CliError::Usage(e.to_string()))
}

fn read_buffer(path: &Path) -> Result<ExperienceBuffer> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    ExperienceBuffer::read_from(BufReader::new(file)).map_err(|e| match e {
        BufferError::Io(io) => io_err(path, io),
        other => CliError::Format(format!("format error in {}: {other}", path.display())),
    })
}

fn read_graph(path: &Path) -> Result<TransitionGraph> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    TransitionGraph::from_json(&text).map_err(|e| CliError::Format(format!("format error in {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn opt_pair(key: &str, v: Option<impl ToString>) -> Option<(String, String)> {
    v.map(|v| (key.to_string(), v.to_string()))
}

fn gen_buffer(cfg: RunConfig, out: &Path) -> Result<()> {
    let buffer = generate_buffer(&cfg.env, cfg.buffer_episodes, cfg.episode_length, cfg.seed())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let file = File::create(out).map_err(|e| io_err(out, e))?;
    let mut w = BufWriter::new(file);
    buffer.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(out, e))?;
    println!(
        "episodes {} transitions {} seed {}",
        buffer.episodes.len(),
        buffer.transition_count(),
        buffer.seed()
    );
    Ok(())
}

fn build(cfg: RunConfig, buffer_path: &Path, out: &Path) -> Result<()> {
    let buffer = read_buffer(buffer_path)?.prefix_fraction(cfg.buffer_fraction);
    let perception = rearrange::perception::PerceptionConfig::for_env(&buffer.env_config).with_repr(cfg.state_repr);
    let (mut graph, report) =
        build_graph(&buffer, &perception, &cfg.build_config()).map_err(|e| CliError::Format(e.to_string()))?;
    if let Some(p) = graph.provenance.as_mut() {
        p.run_config = Some(cfg.to_text());
    }
    write_file(out, graph.to_json().as_bytes())?;
    println!(
        "nodes {} edges {} transitions {} dropped_self_loops {} skipped_cardinality {}",
        graph.node_count(),
        graph.edge_count(),
        report.transitions,
        report.dropped_self_loops,
        report.skipped_cardinality
    );
    Ok(())
}

fn parse_sweep(s: &str) -> Result<(SweepAxis, Vec<f64>)> {
    let usage = || CliError::Usage(format!("--sweep expects AXIS=v1,v2,..., got `{s}`"));
    let (axis, values) = s.split_once('=').ok_or_else(usage)?;
    let axis: SweepAxis = axis.trim().parse().map_err(|_| usage())?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| usage())?;
    if values.is_empty() {
        return Err(usage());
    }
    Ok((axis, values))
}

fn warn_provenance(cfg: &RunConfig, graph: &TransitionGraph, buffer: Option<&ExperienceBuffer>) {
    if graph.metric != cfg.bind_metric {
        eprintln!(
            "warning: graph binds with {} but the config asks for {}; using the graph's metric",
            graph.metric, cfg.bind_metric
        );
    }
    if let (Some(p), Some(b)) = (&graph.provenance, buffer) {
        if p.buffer_digest != b.digest() {
            eprintln!("warning: graph was built from a different buffer than the one given");
        }
    }
}

struct EvalArgs {
    graph: Option<PathBuf>,
    buffer: Option<PathBuf>,
    sweep: Option<String>,
    timing: bool,
    out: Option<PathBuf>,
}

fn run_evaluate(cfg: RunConfig, a: EvalArgs) -> Result<()> {
    let mut spec = cfg.eval_spec();
    spec.timing = a.timing;
    let sweep_axis = a.sweep.as_deref().map(parse_sweep).transpose()?;
    let buffer = a.buffer.as_deref().map(read_buffer).transpose()?;
    let rebuilding = sweep_axis.as_ref().is_some_and(|(axis, _)| axis.rebuilds_graph());
    let graph = match &a.graph {
        Some(p) => Some(read_graph(p)?),
        None => None,
    };
    if graph.is_none() && spec.method != Method::Rand && !(rebuilding && buffer.is_some()) {
        return Err(CliError::Usage(format!("method {} needs --graph", spec.method)));
    }
    if spec.method == Method::Nf && buffer.is_none() {
        return Err(CliError::Usage("method nf needs --buffer".into()));
    }
    if rebuilding && spec.method != Method::Rand && buffer.is_none() {
        return Err(CliError::Usage("this sweep rebuilds graphs and needs --buffer".into()));
    }
    if let Some(g) = &graph {
        warn_provenance(&cfg, g, buffer.as_ref());
        if g.repr != spec.perception.repr {
            return Err(CliError::Usage(format!(
                "graph holds {} states but the config perceives {}",
                g.repr, spec.perception.repr
            )));
        }
    }
    let fail = |e: rearrange::harness::HarnessError| CliError::Usage(e.to_string());
    let csv = match sweep_axis {
        Some((axis, values)) => {
            let source = SweepSource {
                buffer: buffer.as_ref(),
                graph: graph.as_ref(),
                build: cfg.build_config(),
            };
            sweep_csv(axis, &sweep(&spec, axis, &values, source).map_err(fail)?)
        }
        None => {
            let set_graph = match (spec.method, &graph, &buffer) {
                (Method::Nf, Some(g), Some(b)) => {
                    Some(nf_build(b, &spec.perception, g).map_err(|e| CliError::Format(e.to_string()))?)
                }
                _ => None,
            };
            let artifacts = Artifacts {
                graph: graph.as_ref(),
                set_graph: set_graph.as_ref(),
            };
            evaluate(&spec, artifacts).map_err(fail)?.to_csv()
        }
    };
    match &a.out {
        Some(p) => write_file(p, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn inspect(path: &Path, csv: bool) -> Result<()> {
    let g = read_graph(path)?;
    let mut out = String::new();
    let fmt_loc = |i: usize| match g.node_location(i) {
        Some([x, y]) => (format!("{x:.6}"), format!("{y:.6}")),
        None => (String::new(), String::new()),
    };
    if csv {
        out.push_str("node,x,y,member_count,successors\n");
        for (i, n) in g.nodes.iter().enumerate() {
            let (x, y) = fmt_loc(i);
            let succ: Vec<String> = g.outgoing(i).map(|e| e.to.to_string()).collect();
            out.push_str(&format!("{i},{x},{y},{},{}\n", n.member_count, succ.join(" ")));
        }
    } else {
        out.push_str(&format!(
            "nodes {} edges {} metric {} states {}\n",
            g.node_count(),
            g.edge_count(),
            g.metric,
            g.repr
        ));
        for (i, n) in g.nodes.iter().enumerate() {
            let (x, y) = fmt_loc(i);
            out.push_str(&format!("node {i}: center ({x}, {y}) members {}\n", n.member_count));
        }
        out.push_str("adjacency:\n");
        for i in 0..g.node_count() {
            let succ: Vec<String> = g.outgoing(i).map(|e| e.to.to_string()).collect();
            if !succ.is_empty() {
                out.push_str(&format!("{i} -> {}\n", succ.join(", ")));
            }
        }
    }
    print!("{out}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::GenBuffer {
            cfg,
            objects,
            episodes,
            out,
        } => {
            let extra = [opt_pair("objects", objects), opt_pair("buffer_episodes", episodes)];
            let cfg = resolve(&cfg, extra.into_iter().flatten().collect())?;
            gen_buffer(cfg, &out)
        }
        Command::BuildGraph {
            cfg,
            buffer,
            clusters,
            out,
        } => {
            let cfg = resolve(&cfg, opt_pair("clusters", clusters).into_iter().collect())?;
            build(cfg, &buffer, &out)
        }
        Command::Evaluate {
            cfg,
            graph,
            buffer,
            method,
            objects,
            episodes,
            seeds,
            sweep,
            timing,
            out,
        } => {
            let extra = [
                opt_pair("method", method),
                opt_pair("eval_objects", objects),
                opt_pair("episodes", episodes),
                opt_pair("seeds", seeds),
            ];
            let cfg = resolve(&cfg, extra.into_iter().flatten().collect())?;
            run_evaluate(
                cfg,
                EvalArgs {
                    graph,
                    buffer,
                    sweep,
                    timing,
                    out,
                },
            )
        }
        Command::Inspect { graph, csv } => inspect(&graph, csv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
