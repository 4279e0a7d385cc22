//! The `commglyph` command line: generate synthetic traces, classify their
//! rounds, render them to SVG, or serve them to the viewer.

pub mod server;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use commglyph_core::scene::DEFAULT_THRESHOLD_ROWS;
use commglyph_core::service::{parse_range, ModeRequest, SceneQuery, Session};
use commglyph_core::{
    emit_svg, gen_trace, Analysis, Classification, Grouping, Level, Mode, PatternDescriptor, PatternSource,
    RenderConfig, StencilSpec,
};
use serde::Serialize;

/// Overrides the number of visible rows up to which lines are drawn.
pub const THRESHOLD_ENV: &str = "TRACE_GLYPH_THRESHOLD";

#[derive(Debug, Parser)]
#[command(name = "commglyph", version, about = "Communication-pattern glyphs for parallel execution traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic trace for one pattern
    Generate(GenerateArgs),
    /// Print one JSON classification per communication round
    Detect { trace: PathBuf },
    /// Render a trace to SVG
    Render(RenderArgs),
    /// Serve trace metadata and scenes over HTTP
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Offset,
    Ring,
    Exchange,
    Stencil,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// Number of PEs; for stencils it defaults to the product of --dims
    #[arg(long)]
    pub pes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Group size; omit for a continuous pattern
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub timesteps: usize,
    /// Stencil grid, e.g. 4x4x4
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub hops: usize,
    #[arg(long)]
    pub diagonals: bool,
    /// Output file; standard output if omitted
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    Full,
    Partial,
    Glyph,
}

impl From<ModeArg> for ModeRequest {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Auto => ModeRequest::Auto,
            ModeArg::Full => ModeRequest::Fixed(Mode::Full),
            ModeArg::Partial => ModeRequest::Fixed(Mode::Partial),
            ModeArg::Glyph => ModeRequest::Fixed(Mode::Glyph),
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub trace: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    /// Half-open row window A:B
    #[arg(long, value_parser = parse_range::<usize>)]
    pub rows: Option<(usize, usize)>,
    /// Half-open level window C:D
    #[arg(long, value_parser = parse_range::<Level>)]
    pub levels: Option<(Level, Level)>,
    #[arg(long, default_value_t = 960.0)]
    pub width: f64,
    #[arg(long, default_value_t = 600.0)]
    pub height: f64,
    /// Output file; standard output if omitted
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub trace: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory with the built viewer, served at `/`
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or bad input data; exit 1.
    Invalid(String),
    /// Reading or writing failed; exit 2.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parse `argv` and run it, printing diagnostics to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("commglyph: {line}");
            return 1;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("commglyph: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(args) => generate(&args),
        Command::Detect { trace } => detect(&trace),
        Command::Render(args) => render(&args),
        Command::Serve(args) => serve(&args),
    }
}

fn parse_dims(text: &str) -> Result<Vec<usize>, CliError> {
    text.split('x')
        .map(|d| d.trim().parse::<usize>().map_err(|_| invalid(format!("bad stencil dims `{text}`"))))
        .collect()
}

pub fn pattern_source(args: &GenerateArgs) -> Result<PatternSource, CliError> {
    let grouping = args.group_size.map_or(Grouping::Continuous, |g| Grouping::Grouped { group_size: g });
    let pes = || args.pes.ok_or_else(|| invalid("--pes is required for this family"));
    let source = match args.family {
        FamilyArg::Offset => PatternDescriptor::offset(pes()?, args.stride, grouping).into(),
        FamilyArg::Ring => PatternDescriptor::ring(pes()?, args.stride, grouping).into(),
        FamilyArg::Exchange => {
            let d = PatternDescriptor::exchange(pes()?, args.stride);
            if args.group_size.is_some_and(|g| g != 2 * args.stride) {
                return Err(invalid("exchange group size is always twice the stride"));
            }
            d.into()
        }
        FamilyArg::Stencil => {
            let dims =
                parse_dims(args.dims.as_deref().ok_or_else(|| invalid("--dims is required for stencil"))?)?;
            let spec = StencilSpec { dims, hops: args.hops, diagonals: args.diagonals };
            if args.pes.is_some_and(|p| p != spec.num_pes()) {
                return Err(invalid(format!("--pes does not match the {} PEs of the grid", spec.num_pes())));
            }
            spec.into()
        }
    };
    Ok(source)
}

fn write_output(output: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, bytes).map_err(|e| io_error(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let trace = gen_trace(&pattern_source(args)?, args.timesteps).map_err(invalid)?;
    write_output(args.output.as_deref(), trace.to_json().as_bytes())
}

pub fn load(path: &Path) -> Result<Analysis, CliError> {
    let raw = std::fs::read(path).map_err(|e| io_error(path, e))?;
    Analysis::parse(&raw).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// One line of `detect` output: the classification plus where it starts.
#[derive(Serialize)]
struct DetectLine<'a> {
    send_level: Level,
    #[serde(flatten)]
    classification: &'a Classification,
}

pub fn detect_lines(analysis: &Analysis) -> Vec<String> {
    analysis
        .rounds
        .iter()
        .zip(&analysis.classifications)
        .map(|(r, c)| {
            serde_json::to_string(&DetectLine { send_level: r.send_level, classification: c })
                .expect("classification serializes")
        })
        .collect()
}

fn detect(path: &Path) -> Result<(), CliError> {
    let analysis = load(path)?;
    let mut out = String::new();
    for line in detect_lines(&analysis) {
        out.push_str(&line);
        out.push('\n');
    }
    write_output(None, out.as_bytes())
}

/// Row threshold from the environment, or the default.
pub fn threshold_rows() -> Result<usize, CliError> {
    match std::env::var(THRESHOLD_ENV) {
        Err(_) => Ok(DEFAULT_THRESHOLD_ROWS),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 2 => Ok(n),
            _ => Err(invalid(format!("{THRESHOLD_ENV} must be an integer >= 2, got `{v}`"))),
        },
    }
}

fn session(path: &Path) -> Result<Session, CliError> {
    let threshold = threshold_rows()?;
    Ok(Session::new(load(path)?).with_threshold(threshold))
}

fn render(args: &RenderArgs) -> Result<(), CliError> {
    let session = session(&args.trace)?;
    let query = SceneQuery {
        rows: args.rows,
        levels: args.levels,
        width: Some(args.width),
        height: Some(args.height),
        mode: args.mode.into(),
    };
    let scene = session.scene(&query).map_err(|e| invalid(e.message))?;
    write_output(args.output.as_deref(), &emit_svg(&scene, &RenderConfig::default()))
}

fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let session = session(&args.trace)?;
    if let Some(dir) = &args.assets {
        if !dir.is_dir() {
            return Err(CliError::Io(format!("{}: not a directory", dir.display())));
        }
    }
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(format!("runtime: {e}")))?;
    runtime.block_on(async {
        let listener =
            tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::Io(format!("{addr}: {e}")))?;
        eprintln!("commglyph: serving {} on http://{addr}", args.trace.display());
        let app = server::router(session, args.assets.as_deref());
        axum::serve(listener, app).await.map_err(|e| CliError::Io(format!("server: {e}")))
    })
}
