use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use histostack::pipeline::{
    cmd_evaluate, cmd_map_template, cmd_phantom, cmd_reconstruct, cmd_segment_import, Outcome, PipelineConfig,
};

/// Serial-section reconstruction, template mapping and evaluation.
#[derive(Parser, Debug)]
#[command(name = "histostack", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (also HISTOSTACK_THREADS); 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Validate inputs and print the plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rebuild the back-lit volume and register every stained stack into it.
    Reconstruct {
        #[arg(long)]
        blockface: Option<PathBuf>,
        #[arg(long)]
        backlit: Option<PathBuf>,
        /// Stained-section manifest; repeat once per gene.
        #[arg(long)]
        ish: Vec<PathBuf>,
    },
    /// Register a reconstruction onto a template volume.
    MapTemplate {
        /// Template volume stem.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Directory of a previous reconstruct run.
        #[arg(long)]
        reconstruction: Option<PathBuf>,
    },
    /// Dice, landmark agreement and contrastive loss reports.
    Evaluate {
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        reference_masks: Option<PathBuf>,
        #[arg(long)]
        manual: Option<PathBuf>,
        #[arg(long)]
        auto: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Generate a synthetic study with known ground truth.
    Phantom,
    /// Map externally segmented section masks into reconstruction and template space.
    SegmentImport {
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        reconstruction: Option<PathBuf>,
    },
}

fn build_config(cli: &Cli) -> histostack::Result<PipelineConfig> {
    let mut cfg = match &cli.global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let g = &cli.global;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    } else if let Ok(t) = std::env::var("HISTOSTACK_THREADS") {
        cfg.threads = t
            .parse()
            .map_err(|_| histostack::Error::InvalidParameter(format!("HISTOSTACK_THREADS={t}")))?;
    }
    if let Some(o) = &g.output_dir {
        cfg.output_dir = o.clone();
    }
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    let p = &mut cfg.paths;
    match &cli.command {
        Command::Reconstruct { blockface, backlit, ish } => {
            set(&mut p.blockface, blockface);
            set(&mut p.backlit, backlit);
            if !ish.is_empty() {
                p.ish = ish.clone();
            }
        }
        Command::MapTemplate { template, reconstruction } => {
            set(&mut p.template, template);
            set(&mut p.reconstruction, reconstruction);
        }
        Command::Evaluate {
            masks,
            reference_masks,
            manual,
            auto,
            features,
            temperature,
        } => {
            set(&mut p.masks, masks);
            set(&mut p.reference_masks, reference_masks);
            set(&mut p.manual_landmarks, manual);
            set(&mut p.auto_landmarks, auto);
            set(&mut p.features, features);
            if let Some(t) = temperature {
                cfg.temperature = *t;
            }
        }
        Command::Phantom => {}
        Command::SegmentImport { masks, reconstruction } => {
            set(&mut p.masks, masks);
            set(&mut p.reconstruction, reconstruction);
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> histostack::Result<Outcome> {
    let cfg = build_config(cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| histostack::Error::InvalidParameter(format!("thread pool: {e}")))?;
    let dry = cli.global.dry_run;
    match cli.command {
        Command::Reconstruct { .. } => cmd_reconstruct(&cfg, dry),
        Command::MapTemplate { .. } => cmd_map_template(&cfg, dry),
        Command::Evaluate { .. } => cmd_evaluate(&cfg, dry),
        Command::Phantom => cmd_phantom(&cfg, dry),
        Command::SegmentImport { .. } => cmd_segment_import(&cfg, dry),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for p in &outcome.outputs {
                log::info!("wrote {}", p.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
