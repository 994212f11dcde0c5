//! `halfhop` command-line front end.
//!
//! Every run writes its outputs plus `run.json` (resolved config, tool
//! version, seed, output list) into `--out`. Failures print a single
//! `error: ...` line on stderr and exit with status 1.

use std::error::Error as StdError;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use halfhop::diffusion::{attributed_receptive_field, receptive_field, self_weight_curve};
use halfhop::graph::{degree_view, homophily_ratio, symmetrize};
use halfhop::io::{self, fmt_f64, GraphFiles};
use halfhop::regression::{mse_curve, CurveConfig, LabelEncoding, RiskCurve};
use halfhop::spectral::{spectral_report, MonteCarloConfig};
use halfhop::synth::{grid_graph, sample_latent_graph, split_masks, LatentModel};
use halfhop::{
    build_operator, half_hop_sampled, Graph, HalfHopConfig, Labels, OperatorKind, SlowInit, Variant,
};
use serde::Serialize;

type CliResult<T> = Result<T, Box<dyn StdError + Send + Sync>>;

#[derive(Parser, Debug, Serialize)]
#[command(name = "halfhop", version, about = "Half-Hop graph upsampling and linear message-passing analysis")]
struct Cli {
    /// Output directory (created if missing)
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Base seed for every random draw of the run
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Parse a graph from disk and write it back in canonical form
    Ingest(IngestArgs),
    /// Generate a synthetic graph (latent space model or grid)
    Gen(GenArgs),
    /// Apply the Half-Hop transform to a graph
    Augment(AugmentArgs),
    /// Receptive-field weights of one node and its self-weight per round,
    /// with and without Half-Hop
    Rf(RfArgs),
    /// Test MSE of a ridge readout against the number of diffusion rounds,
    /// with and without Half-Hop (oversmoothing curves)
    Diffuse(DiffuseArgs),
    /// Closed-form covariance / risk predictions for the latent space model,
    /// optionally checked by Monte-Carlo simulation
    Spectra(SpectraArgs),
    /// Node homophily ratio of a labeled graph
    Homophily(HomophilyArgs),
}

#[derive(Args, Debug, Serialize)]
struct GraphArgs {
    /// Edge list, one `src dst [weight]` per line
    #[arg(long)]
    edges: PathBuf,
    /// Feature CSV, one row per node (default: a single column of ones)
    #[arg(long)]
    features: Option<PathBuf>,
    /// Skip the first row of the feature CSV
    #[arg(long)]
    skip_header: bool,
    /// Label CSV, one integer or real per row
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    train_mask: Option<PathBuf>,
    #[arg(long)]
    val_mask: Option<PathBuf>,
    #[arg(long)]
    test_mask: Option<PathBuf>,
    /// Keep repeated directed edges instead of dropping them
    #[arg(long)]
    keep_duplicates: bool,
    /// Treat node ids as arbitrary tokens and number them in order of appearance
    #[arg(long)]
    remap_ids: bool,
    /// Add the reverse of every edge after loading
    #[arg(long)]
    symmetrize: bool,
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    graph: GraphArgs,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    /// Model JSON (overrides the flags below)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Diagonal of the latent covariance
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 1.0, 0.5, 0.25])]
    variances: Vec<f64>,
    /// Label coefficients
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.5, 0.5, 0.5])]
    beta: Vec<f64>,
    /// Constant added to every kernel weight
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Ridge penalty of the risk functional
    #[arg(long = "model-gamma", default_value_t = 0.1)]
    gamma: f64,
}

impl ModelArgs {
    fn resolve(&self) -> CliResult<LatentModel> {
        match &self.model {
            Some(p) => Ok(io::read_json(p)?),
            None => Ok(LatentModel::diagonal(
                &self.variances,
                &self.beta,
                self.epsilon,
                self.gamma,
            )?),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum GenKind {
    /// Dense weighted graph from the latent space model, with a train/test split
    Latent {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        train_frac: f64,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Rectangular grid, both edge directions, one constant feature
    Grid {
        #[arg(long, default_value_t = 15)]
        rows: usize,
        #[arg(long, default_value_t = 15)]
        cols: usize,
    },
}

#[derive(Args, Debug, Serialize)]
struct AugmentArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Slow-node interpolation weight toward the source
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Probability of half-hopping the in-edges of each node
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value = "hh")]
    variant: Variant,
    #[arg(long, default_value = "interpolate")]
    init: SlowInit,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn on(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Args, Debug, Serialize)]
struct RfArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    center: usize,
    /// Rounds of aggregation
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Interpolation weights for the Half-Hop columns
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.5])]
    alpha: Vec<f64>,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    self_loops: OnOff,
    #[arg(long, default_value = "mean")]
    operator: OperatorKind,
}

#[derive(Args, Debug, Serialize)]
struct DiffuseArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 16)]
    k_max: usize,
    /// Ridge penalty
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value = "hh")]
    variant: Variant,
    /// Train fraction when the graph carries no train/test masks
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,
    #[arg(long, default_value = "mean")]
    operator: OperatorKind,
    #[arg(long, value_enum, default_value_t = OnOff::Off)]
    self_loops: OnOff,
    #[arg(long, default_value = "raw")]
    encoding: LabelEncoding,
    /// Append a constant column to the design matrix
    #[arg(long)]
    intercept: bool,
    /// Onset is the first round whose MSE exceeds this multiple of the minimum
    #[arg(long, default_value_t = 1.1)]
    onset_factor: f64,
}

#[derive(Args, Debug, Serialize)]
struct SpectraArgs {
    /// Rounds of aggregation (odd)
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Nodes per simulated graph
    #[arg(long, default_value_t = 3000)]
    n: usize,
    /// Monte-Carlo trials (0 skips simulation)
    #[arg(long, default_value_t = 0)]
    trials: usize,
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug, Serialize)]
struct HomophilyArgs {
    #[command(flatten)]
    graph: GraphArgs,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, contents: &str) -> CliResult<()> {
        io::write_atomic(&self.path(name), contents.as_bytes())?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.text(name, &io::to_json(value))
    }

    fn graph(&mut self, stem: &str, g: &Graph) -> CliResult<()> {
        let files = io::save_graph(&self.dir, stem, g)?;
        let mut names = vec![files.edges];
        names.extend(files.features);
        names.extend(files.labels);
        names.extend(files.masks.into_iter().map(|(_, p)| p));
        for p in names {
            let name = p.file_name().expect("file name").to_string_lossy().into_owned();
            self.written.push(name);
        }
        Ok(())
    }
}

fn load(args: &GraphArgs, out: &mut Outputs) -> CliResult<Graph> {
    let mut masks = Vec::new();
    for (name, p) in [
        ("train", &args.train_mask),
        ("val", &args.val_mask),
        ("test", &args.test_mask),
    ] {
        if let Some(p) = p {
            masks.push((name.to_string(), p.clone()));
        }
    }
    let files = GraphFiles {
        edges: args.edges.clone(),
        features: args.features.clone(),
        labels: args.labels.clone(),
        masks,
        skip_feature_header: args.skip_header,
        keep_duplicates: args.keep_duplicates,
        remap_ids: args.remap_ids,
    };
    let loaded = io::load_graph(&files)?;
    if let Some(ids) = &loaded.id_map {
        out.json("id_map.json", ids)?;
    }
    Ok(if args.symmetrize {
        symmetrize(&loaded.graph)
    } else {
        loaded.graph
    })
}

#[derive(Serialize)]
struct GraphSummary {
    num_nodes: usize,
    num_edges: usize,
    weighted: bool,
    feature_dim: usize,
    labels: Option<&'static str>,
    masks: Vec<(String, usize)>,
    self_loops: usize,
    isolated_nodes: usize,
}

fn summarize(g: &Graph) -> GraphSummary {
    let dv = degree_view(g);
    GraphSummary {
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        weighted: g.is_weighted(),
        feature_dim: g.feature_dim(),
        labels: g.labels().map(|l| match l {
            Labels::Class(_) => "class",
            Labels::Real(_) => "real",
        }),
        masks: g
            .masks()
            .iter()
            .map(|(k, m)| (k.clone(), m.iter().filter(|&&b| b).count()))
            .collect(),
        self_loops: g.edges().iter().filter(|(s, t)| s == t).count(),
        isolated_nodes: dv.undirected_neighbors.iter().filter(|s| s.is_empty()).count(),
    }
}

fn ingest(a: &IngestArgs, out: &mut Outputs) -> CliResult<()> {
    let g = load(&a.graph, out)?;
    out.graph("graph", &g)?;
    out.json("summary.json", &summarize(&g))
}

#[derive(Serialize)]
struct GenSidecar<'a> {
    model: &'a LatentModel,
    n: usize,
    seed: u64,
    train_fraction: f64,
}

fn gen(a: &GenArgs, seed: u64, out: &mut Outputs) -> CliResult<()> {
    match &a.kind {
        GenKind::Latent { n, train_frac, model } => {
            let model = model.resolve()?;
            let sample = sample_latent_graph(&model, *n, seed)?;
            let (train, test) = split_masks(*n, *train_frac, seed)?;
            let g = sample
                .to_graph()?
                .with_mask("train", train)?
                .with_mask("test", test)?;
            out.graph("graph", &g)?;
            out.text("latents.csv", &io::format_features(&sample.latents))?;
            out.json(
                "model.json",
                &GenSidecar {
                    model: &model,
                    n: *n,
                    seed,
                    train_fraction: *train_frac,
                },
            )
        }
        GenKind::Grid { rows, cols } => {
            let g = grid_graph(*rows, *cols)?;
            out.graph("graph", &g)
        }
    }
}

#[derive(Serialize)]
struct AugmentReport<'a> {
    config: &'a HalfHopConfig,
    original_count: usize,
    num_slow_nodes: usize,
    /// `(source, target)` of the edge each slow node replaced, in id order.
    slow_nodes: Vec<(usize, usize)>,
}

fn augment(a: &AugmentArgs, seed: u64, out: &mut Outputs) -> CliResult<()> {
    let g = load(&a.graph, out)?;
    let cfg = HalfHopConfig::new(a.alpha, a.p)
        .with_variant(a.variant)
        .with_init(a.init)
        .with_seed(seed);
    let ag = half_hop_sampled(&g, &cfg)?;
    out.graph("augmented", ag.graph())?;
    out.json(
        "provenance.json",
        &AugmentReport {
            config: &cfg,
            original_count: ag.original_count(),
            num_slow_nodes: ag.num_slow_nodes(),
            slow_nodes: ag.provenance().iter().map(|s| (s.source, s.target)).collect(),
        },
    )
}

fn rf(a: &RfArgs, out: &mut Outputs) -> CliResult<()> {
    let g = load(&a.graph, out)?;
    let loops = a.self_loops.on();
    let op = build_operator(&g, a.operator, loops);
    let base = receptive_field(&op, a.center, a.k)?;
    let mut cols = Vec::with_capacity(a.alpha.len());
    for &alpha in &a.alpha {
        let ag = halfhop::half_hop(&g, &HalfHopConfig::new(alpha, 1.0))?;
        let aug_op = build_operator(ag.graph(), a.operator, loops);
        cols.push(attributed_receptive_field(&ag, &aug_op, a.center, a.k, alpha)?);
    }
    let header: String = a.alpha.iter().map(|al| format!(",hh_{al}")).collect();

    let mut csv = format!("node,baseline{header}\n");
    for v in 0..g.num_nodes() {
        write!(csv, "{v},{}", fmt_f64(base[v]))?;
        for c in &cols {
            write!(csv, ",{}", fmt_f64(c[v]))?;
        }
        csv.push('\n');
    }
    out.text("rf.csv", &csv)?;

    let table = self_weight_curve(&g, a.center, &a.alpha, a.k, loops)?;
    let mut csv = format!("k,baseline{header}\n");
    for k in 0..=table.k_max() {
        write!(csv, "{k},{}", fmt_f64(table.baseline[k]))?;
        for col in &table.halfhop {
            write!(csv, ",{}", fmt_f64(col[k]))?;
        }
        csv.push('\n');
    }
    out.text("self_weight.csv", &csv)
}

#[derive(Serialize)]
struct DiffuseReport<'a> {
    curve: &'a RiskCurve,
    split: &'static str,
    onset_factor: f64,
    onset_baseline: Option<usize>,
    onset_halfhop: Option<usize>,
}

fn diffuse(a: &DiffuseArgs, seed: u64, out: &mut Outputs) -> CliResult<()> {
    let mut g = load(&a.graph, out)?;
    let split = if g.mask("train").is_some() && g.mask("test").is_some() {
        "masks"
    } else {
        let (train, test) = split_masks(g.num_nodes(), a.train_frac, seed)?;
        g = g.with_mask("train", train)?.with_mask("test", test)?;
        "generated"
    };
    let cfg = CurveConfig {
        operator: a.operator,
        self_loops: a.self_loops.on(),
        gamma: a.gamma,
        k_max: a.k_max,
        encoding: a.encoding,
        intercept: a.intercept,
        ..CurveConfig::default()
    };
    let hh = HalfHopConfig::new(a.alpha, 1.0)
        .with_variant(a.variant)
        .with_seed(seed);
    let curve = mse_curve(&g, &hh, &cfg)?;
    let mut csv = String::from("k,baseline_mse,halfhop_mse\n");
    for (i, k) in curve.ks.iter().enumerate() {
        writeln!(
            csv,
            "{k},{},{}",
            fmt_f64(curve.baseline_mse[i]),
            fmt_f64(curve.halfhop_mse[i])
        )?;
    }
    out.text("curve.csv", &csv)?;
    out.json(
        "curve.json",
        &DiffuseReport {
            curve: &curve,
            split,
            onset_factor: a.onset_factor,
            onset_baseline: RiskCurve::onset(&curve.baseline_mse, a.onset_factor),
            onset_halfhop: RiskCurve::onset(&curve.halfhop_mse, a.onset_factor),
        },
    )
}

fn spectra(a: &SpectraArgs, seed: u64, out: &mut Outputs) -> CliResult<()> {
    let model = a.model.resolve()?;
    let mc = (a.trials > 0).then_some(MonteCarloConfig {
        n: a.n,
        trials: a.trials,
        seed,
        train_fraction: a.train_frac,
    });
    let report = spectral_report(&model, a.k, a.alpha, mc.as_ref())?;
    let mut csv = String::from("lambda,baseline,halfhop\n");
    for r in &report.eigen_table.rows {
        writeln!(csv, "{},{},{}", fmt_f64(r.lambda), fmt_f64(r.baseline), fmt_f64(r.halfhop))?;
    }
    out.json("spectral_report.json", &report)?;
    out.text("eigen_table.csv", &csv)
}

#[derive(Serialize)]
struct HomophilyReport {
    homophily: f64,
    num_nodes: usize,
    num_edges: usize,
    /// Nodes without neighbors, left out of the average.
    isolated_nodes: usize,
}

fn homophily(a: &HomophilyArgs, out: &mut Outputs) -> CliResult<()> {
    let g = load(&a.graph, out)?;
    let h = homophily_ratio(&g)?;
    let s = summarize(&g);
    out.json(
        "homophily.json",
        &HomophilyReport {
            homophily: h,
            num_nodes: s.num_nodes,
            num_edges: s.num_edges,
            isolated_nodes: s.isolated_nodes,
        },
    )
}

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a Cli,
    outputs: &'a [String],
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| format!("{}: {e}", cli.out.display()))?;
    let mut out = Outputs {
        dir: cli.out.clone(),
        written: Vec::new(),
    };
    match &cli.command {
        Command::Ingest(a) => ingest(a, &mut out)?,
        Command::Gen(a) => gen(a, cli.seed, &mut out)?,
        Command::Augment(a) => augment(a, cli.seed, &mut out)?,
        Command::Rf(a) => rf(a, &mut out)?,
        Command::Diffuse(a) => diffuse(a, cli.seed, &mut out)?,
        Command::Spectra(a) => spectra(a, cli.seed, &mut out)?,
        Command::Homophily(a) => homophily(a, &mut out)?,
    }
    let record = RunRecord {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cli.seed,
        config: cli,
        outputs: &out.written,
    };
    io::write_json(&out.path("run.json"), &record)?;
    Ok(())
}

fn one_line(e: &(dyn StdError + 'static)) -> String {
    let mut msg = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        src = s.source();
    }
    msg.replace('\n', " ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(e.as_ref()));
            ExitCode::FAILURE
        }
    }
}
