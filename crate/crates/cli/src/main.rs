use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use diacritic_core::campaign::{
    normalized_report, read_records, run_campaign, CampaignConfig, CampaignError, REPORT_FILE,
};
use diacritic_core::render::{self, chunk};
use diacritic_core::sanitize::{detect, sanitize, SanitizeMode, SanitizePolicy};
use diacritic_core::toy::{ToyModel, ToyServer, DEFAULT_CANVAS_WIDTH};

mod serve;

const EXIT_USAGE: u8 = 1;
const EXIT_ADAPTER: u8 = 2;
const EXIT_DATASET: u8 = 3;

#[derive(Parser)]
#[command(name = "diacritic", version, about = "Diacritic-injection attacks on visual text pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an attack campaign described by a JSON config.
    Attack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated budgets, e.g. 0,1,2.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print per-budget results relative to the budget-0 baseline.
    Report {
        /// Campaign output directory.
        dir: PathBuf,
        /// Also write the table to <dir>/report.csv.
        #[arg(long)]
        write: bool,
    },
    /// Strip combining marks from each line of standard input.
    Sanitize {
        #[arg(long, value_enum, default_value_t = Mode::StripOnly)]
        mode: Mode,
        /// Print `count<TAB>line` instead of rewriting.
        #[arg(long)]
        detect: bool,
    },
    /// Render text to bitmaps, one per canvas.
    Render {
        /// Text to render; standard input when absent.
        text: Option<String>,
        #[arg(long, default_value_t = DEFAULT_CANVAS_WIDTH)]
        width: usize,
        #[arg(long, value_enum, default_value_t = Format::Ascii)]
        format: Format,
        /// Directory for image files; required for pbm and pgm.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print how text splits across canvases, as JSON.
    Chunk {
        text: Option<String>,
        #[arg(long, default_value_t = DEFAULT_CANVAS_WIDTH)]
        width: usize,
    },
    /// Serve a toy model over JSON lines on stdio, or HTTP with --http.
    ServeToy {
        #[arg(long)]
        model: ToyModel,
        #[arg(long, default_value_t = DEFAULT_CANVAS_WIDTH)]
        canvas_width: usize,
        /// Listen address, e.g. 127.0.0.1:8080.
        #[arg(long)]
        http: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    StripOnly,
    DecomposeStripRecompose,
}

impl From<Mode> for SanitizeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::StripOnly => SanitizeMode::StripOnly,
            Mode::DecomposeStripRecompose => SanitizeMode::DecomposeStripRecompose,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Ascii,
    Pbm,
    Pgm,
}

/// A failure with the exit code it maps to.
struct Failure(u8, String);

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure(EXIT_USAGE, e.to_string())
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        let code = match e {
            CampaignError::Dataset(_) => EXIT_DATASET,
            CampaignError::Adapter(_) => EXIT_ADAPTER,
            _ => EXIT_USAGE,
        };
        Failure(code, e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn text_or_stdin(text: Option<String>) -> io::Result<String> {
    match text {
        Some(t) => Ok(t),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s.strip_suffix('\n').map(|t| t.strip_suffix('\r').unwrap_or(t)).unwrap_or(&s).to_owned())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Attack {
            config,
            seed,
            budgets,
            out,
        } => attack(&config, seed, budgets, out),
        Command::Report { dir, write } => {
            let records = read_records(&dir)?;
            let table = normalized_report(&records).map_err(|e| Failure(EXIT_USAGE, e.to_string()))?;
            print!("{table}");
            if write {
                std::fs::write(dir.join(REPORT_FILE), &table)?;
            }
            Ok(())
        }
        Command::Sanitize { mode, detect: flag } => {
            let policy = SanitizePolicy::with_mode(mode.into());
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for line in io::stdin().lock().lines() {
                let line = line?;
                if flag {
                    writeln!(out, "{}\t{line}", detect(&line, &policy).count)?;
                } else {
                    writeln!(out, "{}", sanitize(&line, &policy))?;
                }
            }
            Ok(())
        }
        Command::Render {
            text,
            width,
            format,
            out,
        } => render_cmd(&text_or_stdin(text)?, width, format, out.as_deref()),
        Command::Chunk { text, width } => {
            if width < 2 {
                return Err(Failure(EXIT_USAGE, "width must be at least 2".into()));
            }
            let plan = chunk(&text_or_stdin(text)?, width);
            println!("{}", serde_json::to_string_pretty(&plan).expect("plan serializes"));
            Ok(())
        }
        Command::ServeToy {
            model,
            canvas_width,
            http,
        } => {
            let server = ToyServer::new(model).with_canvas_width(canvas_width);
            match http {
                Some(addr) => serve::http(server, &addr),
                None => serve::stdio(&server).map_err(Failure::from),
            }
        }
    }
}

fn attack(config: &Path, seed: Option<u64>, budgets: Option<Vec<usize>>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = CampaignConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(mut b) = budgets {
        b.sort_unstable();
        b.dedup();
        cfg.budgets = b;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    let summary = run_campaign(&cfg)?;
    for a in &summary.aggregates {
        println!(
            "budget {}: {} inputs, {} failed, success rate {}",
            a.budget,
            a.total,
            a.failed,
            a.success_rate.map_or("-".into(), |r| format!("{r:.3}")),
        );
    }
    println!("results in {}", summary.output_dir.display());
    if summary.failed > 0 {
        return Err(Failure(EXIT_ADAPTER, format!("{} attacks failed", summary.failed)));
    }
    Ok(())
}

fn render_cmd(text: &str, width: usize, format: Format, out: Option<&Path>) -> Result<(), Failure> {
    if width < 2 {
        return Err(Failure(EXIT_USAGE, "width must be at least 2".into()));
    }
    let plan = chunk(text, width);
    let canvases = plan
        .chunks
        .iter()
        .map(|c| render::render(c, width))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure(EXIT_USAGE, e.to_string()))?;
    for c in &canvases {
        if !c.substituted().is_empty() {
            log::warn!("no glyph for {:?}; drew a box", c.substituted());
        }
    }
    if format == Format::Ascii {
        let stdout = io::stdout();
        let mut w = stdout.lock();
        for (n, c) in canvases.iter().enumerate() {
            writeln!(w, "canvas {n}: {:?}", c.source_chunk())?;
            for row in c.rows() {
                let line: String = row.iter().map(|&ink| if ink { '#' } else { '.' }).collect();
                writeln!(w, "{line}")?;
            }
        }
        return Ok(());
    }
    let dir = out.ok_or_else(|| Failure(EXIT_USAGE, "--out is required for pbm and pgm".into()))?;
    std::fs::create_dir_all(dir)?;
    for (n, c) in canvases.iter().enumerate() {
        let (ext, bytes) = match format {
            Format::Pbm => ("pbm", c.to_pbm()),
            _ => ("pgm", c.to_pgm()),
        };
        let path = dir.join(format!("canvas_{n:03}.{ext}"));
        std::fs::write(&path, bytes)?;
        println!("{}", path.display());
    }
    Ok(())
}
