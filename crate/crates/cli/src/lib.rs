//! `depnet` subcommands. Every artifact is rendered by the same core
//! serializers the HTTP service uses, so outputs match its exports byte for
//! byte.

use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use depnet_core::artifacts::{self, FilterOverrides};
use depnet_core::contingency::{edges_from_csv, write_csv_row, CSV_HEADER};
use depnet_core::crf::DEFAULT_KAPPA;
use depnet_core::layout::LayoutParams;
use depnet_core::realign::realign_manual;
use depnet_core::synth;
use depnet_core::{
    marginals, realign_iterate, scan_pairs, AlignmentMatrix, CrfModel, EchoParams, EditAction, EdgeKey, FilterSpec,
    Metagraph, Selection,
};
use depnet_service::Config;

#[derive(Debug, Parser)]
#[command(name = "depnet", version, about = "Conditional-dependency networks over sequence alignments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Alignment to the full pairwise edge table (CSV).
    Scan(ScanArgs),
    /// Edge table or alignment plus thresholds and edits to a graph document.
    Filter(FilterArgs),
    /// Graph plus edge selection to a scoring model.
    Model(ModelArgs),
    /// Model plus candidate sequences to an itemized score report.
    Score(ScoreArgs),
    /// Echo-driven realignment of an alignment.
    Realign(RealignArgs),
    /// Graph to a cylinder scene document.
    Layout(LayoutArgs),
    /// Start the local HTTP service.
    Serve(ServeArgs),
    /// Write a synthetic family with planted structure.
    Demo(DemoArgs),
}

/// Threshold flags, applied over the filter stored in the input (if any).
#[derive(Debug, Default, Args)]
pub struct FilterFlags {
    /// Minimum |standardized residual|.
    #[arg(long)]
    pub min_z: Option<f64>,
    /// Maximum Fisher exact p-value.
    #[arg(long)]
    pub max_p: Option<f64>,
    /// Minimum |raw residual|.
    #[arg(long)]
    pub min_raw: Option<f64>,
    /// both, positive or negative.
    #[arg(long)]
    pub sign: Option<String>,
}

impl FilterFlags {
    fn overrides(&self) -> FilterOverrides {
        FilterOverrides {
            min_z: self.min_z,
            max_p: self.max_p,
            min_raw: self.min_raw,
            sign: self.sign.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Alignment file (plain rows, FASTA or JSON); `-` reads stdin.
    pub alignment: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Unfiltered edge CSV from `scan`.
    #[arg(long, conflicts_with = "alignment", required_unless_present = "alignment")]
    pub edges: Option<PathBuf>,
    /// Alignment to scan instead of reading an edge CSV.
    #[arg(long)]
    pub alignment: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterFlags,
    /// Edge edit `KEY:ACTION` (pin, remove, reset), applied in order.
    #[arg(long = "edit", value_name = "KEY:ACTION")]
    pub edits: Vec<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// visible, pinned, nodes, or comma-separated edge keys.
    #[arg(long, default_value = "visible")]
    pub selection: String,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: f64,
    #[command(flatten)]
    pub filter: FilterFlags,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// FASTA, or one sequence per line optionally preceded by an id.
    #[arg(long)]
    pub sequences: PathBuf,
    /// Id of the sequence reported as 1 in log10-fold mode.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlignmentOut {
    Txt,
    Fasta,
    Json,
}

impl AlignmentOut {
    fn name(self) -> &'static str {
        match self {
            AlignmentOut::Txt => "txt",
            AlignmentOut::Fasta => "fasta",
            AlignmentOut::Json => "json",
        }
    }
}

#[derive(Debug, Args)]
pub struct RealignArgs {
    pub alignment: PathBuf,
    #[arg(long, default_value_t = EchoParams::default().s_max)]
    pub s_max: usize,
    #[arg(long, default_value_t = depnet_service::DEFAULT_MAX_ROUNDS)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = EchoParams::default().member_max_p)]
    pub member_max_p: f64,
    #[arg(long, default_value_t = EchoParams::default().min_echo_mass)]
    pub min_echo_mass: f64,
    /// Per-row shifts (JSON array or one integer per line) applied instead
    /// of automatic echo detection.
    #[arg(long)]
    pub shifts: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterFlags,
    /// Realigned alignment output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "txt")]
    pub out_format: AlignmentOut,
    /// Report output; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[command(flatten)]
    pub filter: FilterFlags,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub height_step: Option<f64>,
    #[arg(long)]
    pub glyph_scale: Option<f64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "DEPNET_BIND", default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, env = "DEPNET_PORT", default_value_t = depnet_service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, env = "DEPNET_MAX_UPLOAD_BYTES", default_value_t = depnet_service::DEFAULT_MAX_UPLOAD_BYTES)]
    pub max_upload_bytes: usize,
    #[arg(long, env = "DEPNET_MAX_EDGES", default_value_t = depnet_service::DEFAULT_MAX_EDGES)]
    pub max_edges: u64,
}

impl ServeArgs {
    pub fn config(&self) -> Config {
        Config {
            bind: self.bind,
            port: self.port,
            max_upload_bytes: self.max_upload_bytes,
            max_edges: self.max_edges,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DemoKind {
    /// Nine columns with two nested stems and a weaker outer pair.
    Nine,
    /// Thirty columns, eight couplings, 40% of rows shifted by 1 to 3.
    Echo,
    /// Two-subfamily protein-like family with a coupled six-residue motif.
    Adk,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(value_enum)]
    pub kind: DemoKind,
    #[arg(long, default_value_t = 200)]
    pub rows: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "txt")]
    pub format: AlignmentOut,
    /// For `echo`, the planted per-row shifts; for `adk`, the variant
    /// sequences as `name SEQUENCE` lines.
    #[arg(long)]
    pub extra: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).context("reading stdin")?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        _ => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn read_alignment(path: &Path) -> Result<AlignmentMatrix> {
    let text = read_text(path)?;
    AlignmentMatrix::parse_auto(&text).with_context(|| format!("parsing alignment {}", path.display()))
}

fn read_graph(path: &Path) -> Result<Metagraph> {
    Metagraph::from_json(&read_text(path)?).with_context(|| format!("parsing graph {}", path.display()))
}

/// `graph` with `flags` applied to its stored filter.
fn refiltered(mut graph: Metagraph, flags: &FilterFlags) -> Result<Metagraph> {
    let o = flags.overrides();
    if !o.is_empty() {
        let spec = o.apply(graph.filter())?;
        graph.set_filter(spec)?;
    }
    Ok(graph)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Scan(a) => scan(&a),
        Command::Filter(a) => filter(&a),
        Command::Model(a) => model(&a),
        Command::Score(a) => score(&a),
        Command::Realign(a) => realign(&a),
        Command::Layout(a) => layout(&a),
        Command::Serve(a) => serve(&a),
        Command::Demo(a) => demo(&a),
    }
}

/// Streams rows as column pairs complete, so the full edge list is never
/// held in memory.
fn scan(a: &ScanArgs) -> Result<()> {
    let m = read_alignment(&a.alignment)?;
    let marg = marginals(&m);
    let sink: Box<dyn Write> = match &a.output {
        Some(p) if p.as_os_str() != "-" => {
            Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        _ => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    writeln!(out, "{CSV_HEADER}")?;
    let mut buf = String::new();
    let mut failure: Option<io::Error> = None;
    scan_pairs(&m, &marg, |pair| {
        if failure.is_some() {
            return;
        }
        buf.clear();
        for e in &pair.edges {
            write_csv_row(&mut buf, e, m.alphabet());
        }
        if let Err(e) = out.write_all(buf.as_bytes()) {
            failure = Some(e);
        }
    });
    if let Some(e) = failure {
        return Err(e).context("writing edge table");
    }
    out.flush()?;
    Ok(())
}

fn filter(a: &FilterArgs) -> Result<()> {
    let mut graph = match (&a.edges, &a.alignment) {
        (Some(p), _) => {
            let csv = edges_from_csv(&read_text(p)?).with_context(|| format!("parsing edges {}", p.display()))?;
            Metagraph::build(csv.edges, csv.marginals)?
        }
        (None, Some(p)) => artifacts::build_graph(&read_alignment(p)?)?,
        (None, None) => bail!("one of --edges or --alignment is required"),
    };
    for edit in &a.edits {
        let (label, action) = edit
            .rsplit_once(':')
            .with_context(|| format!("edit {edit:?} must be KEY:ACTION"))?;
        let key = EdgeKey::parse_label(label, graph.alphabet())?;
        graph.edit_edge(key, EditAction::parse(action)?)?;
    }
    let spec = a.filter.overrides().apply(&FilterSpec::default())?;
    graph.set_filter(spec)?;
    write_text(a.output.as_deref(), &artifacts::graph_json(&graph, &spec))
}

fn parse_selection(s: &str, graph: &Metagraph) -> Result<Selection> {
    let v = match s {
        "visible" | "pinned" | "pinned-only" | "nodes" | "nodes-only" => Value::String(s.to_string()),
        labels => Value::Array(
            labels
                .split(',')
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| Value::String(l.to_string()))
                .collect(),
        ),
    };
    Ok(Selection::from_json(&v, graph.alphabet())?)
}

fn model(a: &ModelArgs) -> Result<()> {
    let graph = refiltered(read_graph(&a.graph)?, &a.filter)?;
    let selection = parse_selection(&a.selection, &graph)?;
    let model = CrfModel::build(&graph, &selection, a.kappa)?;
    write_text(a.output.as_deref(), &artifacts::model_json(&model))
}

fn score(a: &ScoreArgs) -> Result<()> {
    let model = CrfModel::from_json(&read_text(&a.model)?)
        .with_context(|| format!("parsing model {}", a.model.display()))?;
    let seqs = artifacts::parse_sequences(&read_text(&a.sequences)?)?;
    write_text(
        a.output.as_deref(),
        &artifacts::score_json(&model, &seqs, a.reference.as_deref())?,
    )
}

fn parse_shifts(text: &str) -> Result<Vec<i32>> {
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).context("shifts must be a JSON array of integers");
    }
    text.split_whitespace()
        .map(|t| t.parse::<i32>().with_context(|| format!("bad shift {t:?}")))
        .collect()
}

fn realign(a: &RealignArgs) -> Result<()> {
    let m = read_alignment(&a.alignment)?;
    let spec = a.filter.overrides().apply(&FilterSpec::default())?;
    let (out, report) = match &a.shifts {
        Some(p) => realign_manual(&m, &spec, parse_shifts(&read_text(p)?)?, a.s_max)?,
        None => {
            let params = EchoParams {
                s_max: a.s_max,
                member_max_p: a.member_max_p,
                min_echo_mass: a.min_echo_mass,
            };
            realign_iterate(&m, &spec, &params, a.max_rounds)?
        }
    };
    if let Some(p) = &a.output {
        write_text(Some(p), &artifacts::alignment_text(&out, a.out_format.name())?)?;
    }
    write_text(a.report.as_deref(), &artifacts::realign_json(&report, &out))
}

fn layout(a: &LayoutArgs) -> Result<()> {
    let graph = read_graph(&a.graph)?;
    let spec = a.filter.overrides().apply(graph.filter())?;
    let d = LayoutParams::default();
    let params = LayoutParams {
        radius: a.radius.unwrap_or(d.radius),
        height_step: a.height_step.unwrap_or(d.height_step),
        glyph_scale: a.glyph_scale.unwrap_or(d.glyph_scale),
    };
    write_text(a.output.as_deref(), &artifacts::scene_json(&graph, &spec, &params)?)
}

fn serve(a: &ServeArgs) -> Result<()> {
    let config = a.config();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.addr())
            .await
            .with_context(|| format!("binding {}", config.addr()))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        depnet_service::serve_on(listener, config).await?;
        Ok(())
    })
}

fn demo(a: &DemoArgs) -> Result<()> {
    if a.rows < 2 {
        bail!("--rows must be at least 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (matrix, extra) = match a.kind {
        DemoKind::Nine => (synth::demo_nine(&mut rng, a.rows), None),
        DemoKind::Echo => {
            let fam = synth::echo_family(&mut rng, a.rows, 30, &synth::ECHO_PAIRS, 0.9, 0.4, &[1, 2, 3]);
            let truth: String = fam.truth.iter().map(|s| format!("{s}\n")).collect();
            (fam.matrix, Some(truth))
        }
        DemoKind::Adk => {
            let fam = synth::adk_family(&mut rng, a.rows);
            let lines: String = fam.variants.iter().map(|(n, s)| format!("{n} {s}\n")).collect();
            (fam.matrix, Some(lines))
        }
    };
    if let (Some(p), Some(text)) = (&a.extra, extra) {
        write_text(Some(p), &text)?;
    }
    write_text(a.output.as_deref(), &artifacts::alignment_text(&matrix, a.format.name())?)
}
