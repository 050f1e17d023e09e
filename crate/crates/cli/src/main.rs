use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dereverb::Codec;

mod commands;

/// Blind dereverberation by long-term log-spectral normalization.
#[derive(Debug, Parser)]
#[command(name = "dereverb", version)]
struct Cli {
    /// Worker threads for corpus analysis and batch processing (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize an exponentially decaying noise RIR.
    SynthRir {
        #[arg(long)]
        t60: f64,
        #[arg(long, default_value_t = 16000)]
        fs: u32,
        /// Length in samples (default: twice the T60 span).
        #[arg(long)]
        len: Option<usize>,
        /// Position of the unit direct-path tap.
        #[arg(long, default_value_t = 0)]
        delay: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convolve every file of a manifest with one RIR.
    Convolve {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        rir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Manifest of the outputs (default: <out-dir>/manifest.json).
        #[arg(long)]
        out_manifest: Option<PathBuf>,
        #[arg(long, default_value = "float32")]
        codec: Codec,
    },
    /// Estimate φ from a reverberant and a clean corpus.
    Estimate {
        #[arg(long)]
        reverb_manifest: PathBuf,
        #[arg(long)]
        clean_manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Transform length (default: next power of two above the longest file plus headroom).
        #[arg(long)]
        n_uniform: Option<usize>,
        #[arg(long, default_value_t = dereverb::spectral::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = dereverb::corpus::DEFAULT_HEADROOM_SECS)]
        headroom_sec: f64,
        /// Average windowed frames instead of whole utterances.
        #[arg(long)]
        frame_scale: bool,
        #[arg(long, default_value_t = dereverb::normalize::DEFAULT_FRAME_SECS)]
        frame_sec: f64,
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
    },
    /// Normalize a whole utterance with an utterance-scale φ.
    Apply {
        #[arg(long)]
        phi: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Drop trailing samples below -80 dBFS.
        #[arg(long)]
        trim: bool,
        #[arg(long, default_value = "float32")]
        codec: Codec,
    },
    /// Normalize windowed frames with a frame-scale φ.
    ApplyFramed {
        #[arg(long)]
        phi: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = dereverb::normalize::DEFAULT_FRAME_SECS)]
        frame_sec: f64,
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        /// Frame transform length (default: next power of two above the frame).
        #[arg(long)]
        n_uniform: Option<usize>,
        /// Also overlap-add the frames into <out-dir>/reconstructed.wav.
        #[arg(long)]
        reconstruct: bool,
        #[arg(long, default_value = "float32")]
        codec: Codec,
    },
    /// Compare an estimate with a reference and print a JSON report.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long, requires = "rir")]
        phi: Option<PathBuf>,
        #[arg(long, requires = "phi")]
        rir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Truncate the estimate to the reference length first.
        #[arg(long)]
        crop: bool,
        /// Largest lag searched by the aligned RMSE, in samples.
        #[arg(long, default_value_t = 256)]
        max_lag: usize,
        /// Analysis frame for the log-spectral distance.
        #[arg(long, default_value_t = 0.032)]
        lsd_frame_sec: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
