//! Simulated device agent.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

use hwime_core::agent::{AgentConfig, AgentServer, DeviceAgent};
use hwime_core::dataset::parse_hws;
use hwime_core::recognizer::{train_templates, ConstantRecognizer, NearestNeighbor, OracleRecognizer, Recognizer};
use hwime_core::trajectory::{Anchor, ResampleConfig};

#[derive(Clone, Copy, ValueEnum)]
enum AnchorArg {
    Kept,
    Raw,
}

#[derive(Parser)]
#[command(name = "hwime-agent", version, about = "Simulated handwriting IME device")]
struct Cli {
    #[arg(long, default_value = "127.0.0.1:7431")]
    listen: String,
    #[arg(long, default_value_t = 0)]
    resample_time_ms: u32,
    #[arg(long, default_value_t = 0.0)]
    resample_distance: f64,
    #[arg(long, value_enum, default_value = "kept")]
    resample_anchor: AnchorArg,
    /// `oracle`, `constant:<text>`, or `nn`.
    #[arg(long, default_value = "nn")]
    recognizer: String,
    /// HWS1 pool to train the nn recognizer from.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    templates_per_label: usize,
    #[arg(long, default_value_t = 180)]
    normalize: u32,
    #[arg(long)]
    oracle_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    #[arg(long, default_value_t = 0)]
    commit_delay_ms: u32,
    /// Line-delimited JSON log of handled samples.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Exit after this many sessions.
    #[arg(long)]
    sessions: Option<usize>,
}

fn recognizer(cli: &Cli) -> Result<Box<dyn Recognizer>> {
    if let Some(text) = cli.recognizer.strip_prefix("constant:") {
        return Ok(Box::new(ConstantRecognizer(text.to_owned())));
    }
    match cli.recognizer.as_str() {
        "oracle" => {
            let path = cli
                .oracle_labels
                .as_ref()
                .context("--recognizer oracle needs --oracle-labels")?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(Box::new(OracleRecognizer::parse(&text)?))
        }
        "nn" => {
            let path = cli.templates.as_ref().context("--recognizer nn needs --templates")?;
            let pool = parse_hws("templates", &fs::read(path)?)?;
            let store = train_templates(&pool, cli.normalize, cli.templates_per_label)?;
            eprintln!("nn: {} templates", store.len());
            Ok(Box::new(NearestNeighbor::new(store, cli.normalize)?))
        }
        other => bail!("unknown recognizer {other:?}"),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = AgentConfig {
        resample: ResampleConfig {
            time_threshold_ms: cli.resample_time_ms,
            distance_threshold: cli.resample_distance,
            anchor: match cli.resample_anchor {
                AnchorArg::Kept => Anchor::Kept,
                AnchorArg::Raw => Anchor::Raw,
            },
        },
        time_scale: cli.time_scale,
        commit_delay_ms: cli.commit_delay_ms,
    };
    let mut agent = DeviceAgent::new(config, recognizer(&cli)?);
    if let Some(path) = &cli.log {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        agent = agent.with_log(Box::new(BufWriter::new(file)));
    }
    let server = AgentServer::bind(&cli.listen).with_context(|| format!("binding {}", cli.listen))?;
    eprintln!("listening on {}", server.local_addr());
    server.serve(&mut agent, cli.sessions)?;
    Ok(())
}
