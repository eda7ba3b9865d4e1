use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use doppler_audit::adapter::{Model, ModelKind, ModelSpec};
use doppler_audit::audit::{run_audit, AuditSetup, Provenance, Thresholds};
use doppler_audit::metrics::{default_alpha_grid, fva, Fva};
use doppler_audit::mocap::{
    load_weights, parse_mocap, MoCapSequence, RadarConfig, RadarConfigFile, WeightTable, DEFAULT_WEIGHTS,
    RADAR_PREFIX,
};
use doppler_audit::reference::{centroid_csv, parse_centroid_csv, reference_centroid};
use doppler_audit::render::render_spectrogram;
use doppler_audit::simulator::{
    oracle_spectrogram, sim_radar_config, simulate_iq, synth_walker, with_radar_marker, NoiseParams, WalkerParams,
};
use doppler_audit::spectral::{centroid_trajectory, parse_spectro, CentroidSeries, Framing, Spectrogram};
use doppler_audit::Error;

/// Physics-consistency auditing for MoCap-to-radar models.
#[derive(Parser)]
#[command(name = "doppler-audit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a walking trial with its radar ground truth.
    Simulate(SimulateArgs),
    /// Compute the kinematic Doppler-centroid reference of a MoCap trial.
    Reference(ReferenceArgs),
    /// Audit a model on a MoCap trial.
    Audit(AuditArgs),
    /// Score a precomputed spectrogram against a precomputed reference trace.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Walking speed (m/s).
    #[arg(long, default_value_t = 1.2)]
    speed: f64,
    /// Walking direction in the horizontal plane (rad).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    heading: f64,
    /// Stride frequency (Hz).
    #[arg(long, default_value_t = 1.8)]
    stride: f64,
    /// Trial length (s).
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Add white noise to the I/Q at this SNR (dB).
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Wrist and ankle swing amplitude (m).
    #[arg(long, default_value_t = 0.15)]
    limb_amp: f64,
    /// Sampling rate of the emitted MoCap (Hz).
    #[arg(long, default_value_t = 250.0)]
    mocap_rate: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    mocap: PathBuf,
    /// TOML with carrier_hz, fs_hz and optional radar_pos.
    #[arg(long)]
    radar_config: Option<PathBuf>,
    /// Segment weight table; defaults to the built-in rule of nines.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct FramingArgs {
    #[arg(long, default_value_t = 256)]
    win: usize,
    #[arg(long, default_value_t = 32)]
    hop: usize,
    #[arg(long, default_value_t = 256)]
    fft: usize,
}

#[derive(Args)]
struct ReferenceArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    framing: FramingArgs,
    /// Output centroid trace (frame,time_s,centroid_hz).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    framing: FramingArgs,
    #[arg(long, value_parser = ["oracle", "constant", "shuffle", "flip", "external"])]
    model: String,
    /// Command template with {input} and {output} placeholders.
    #[arg(long)]
    cmd: Option<String>,
    /// Comma-separated velocity scaling factors.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Ground-truth spectrogram for MAE.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Label thresholds, e.g. fva=0.8,dcs=0.8,mae=6.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write PGM spectrogram images.
    #[arg(long)]
    images: bool,
    /// Seed for the shuffle control.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise added by the built-in simulator (dB SNR).
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Per-invocation timeout for external models (s).
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    ref_centroid: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Reference(a) => reference(a),
        Command::Audit(a) => audit(a),
        Command::Metrics(a) => metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::ModelInvocation { .. }) => 4,
        _ => 3,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)
        .map_err(Error::from)
        .with_context(|| format!("writing {}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl FramingArgs {
    fn framing(&self, fs_hz: f64) -> Result<Framing> {
        let framing = Framing {
            fs_hz,
            win_len: self.win,
            hop: self.hop,
            fft_size: self.fft,
        };
        framing.validate()?;
        Ok(framing)
    }
}

/// Parsed inputs shared by `reference` and `audit`. `seq` is on the radar
/// clock and still carries any radar housing markers.
struct Loaded {
    seq: MoCapSequence,
    cfg: RadarConfig,
    weights: WeightTable,
    weights_digest: String,
    provenance: Provenance,
}

impl InputArgs {
    fn load(&self) -> Result<Loaded> {
        let mocap_text = read(&self.mocap)?;
        let seq = parse_mocap(&mocap_text).with_context(|| format!("parsing {}", self.mocap.display()))?;
        let mut provenance = Provenance {
            mocap: Some(format!("sha256:{}", sha256_hex(mocap_text.as_bytes()))),
            ..Provenance::default()
        };

        let cfg_file = match &self.radar_config {
            Some(path) => {
                let text = read(path)?;
                provenance.radar_config = Some(format!("sha256:{}", sha256_hex(text.as_bytes())));
                RadarConfigFile::parse(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RadarConfigFile::default(),
        };
        let cfg = cfg_file.resolve(&seq)?;

        let seq = seq.resample(cfg.fs_hz)?;
        let body_markers: Vec<String> =
            seq.markers().iter().filter(|m| !m.starts_with(RADAR_PREFIX)).cloned().collect();
        let weights_text = match &self.weights {
            Some(path) => read(path)?,
            None => DEFAULT_WEIGHTS.to_string(),
        };
        let weights_digest = sha256_hex(weights_text.as_bytes());
        provenance.weights = Some(match &self.weights {
            Some(_) => format!("sha256:{weights_digest}"),
            None => "builtin".into(),
        });
        let weights = load_weights(&weights_text, &body_markers)?;
        if !weights.unmapped.is_empty() {
            eprintln!("warning: no weight for markers {}", weights.unmapped.join(", "));
        }
        Ok(Loaded {
            seq,
            cfg,
            weights,
            weights_digest,
            provenance,
        })
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let params = WalkerParams {
        speed_mps: args.speed,
        heading_rad: args.heading,
        stride_hz: args.stride,
        duration_s: args.duration,
        seed: args.seed,
        limb_amp_m: args.limb_amp,
    };
    let walker = synth_walker(&params, args.mocap_rate)?;
    let radar_file = sim_radar_config();
    let body = walker.resample(radar_file.fs_hz)?;
    let cfg = radar_file.resolve(&body)?;
    let weights = load_weights(DEFAULT_WEIGHTS, body.markers())?;
    let noise = NoiseParams {
        snr_db: args.snr_db,
        seed: args.seed,
    };
    let framing = Framing::default();

    let iq = simulate_iq(&body, &cfg, &weights, &noise)?;
    let truth = oracle_spectrogram(&body, &cfg, &weights, &noise, framing)?;

    fs::create_dir_all(&args.out_dir)
        .map_err(Error::from)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let dir = &args.out_dir;
    write(&dir.join("mocap.csv"), with_radar_marker(&walker)?.to_csv())?;
    let mut iq_csv = String::from("t,i,q\n");
    for (n, s) in iq.iter().enumerate() {
        iq_csv.push_str(&format!("{:?},{:?},{:?}\n", n as f64 / cfg.fs_hz, s.re, s.im));
    }
    write(&dir.join("iq.csv"), iq_csv)?;
    write(&dir.join("truth.spectro.csv"), truth.to_csv())?;
    write(&dir.join("radar.toml"), radar_file.to_toml())?;
    write(&dir.join("weights.cfg"), DEFAULT_WEIGHTS)?;
    println!(
        "wrote {} MoCap samples, {} I/Q samples and {} spectrogram frames to {}",
        walker.len(),
        iq.len(),
        truth.n_frames(),
        dir.display()
    );
    Ok(())
}

fn reference(args: ReferenceArgs) -> Result<()> {
    let loaded = args.input.load()?;
    let framing = args.framing.framing(loaded.cfg.fs_hz)?;
    framing.require_frames(loaded.seq.len())?;
    let body = loaded.seq.without_prefix(RADAR_PREFIX)?;
    let series = reference_centroid(&body, &loaded.cfg, &loaded.weights, framing.win_len, framing.hop)?;
    write(&args.out, centroid_csv(&series))?;
    println!("wrote {} reference frames to {}", series.len(), args.out.display());
    Ok(())
}

fn image_range(spec: &Spectrogram) -> (f64, f64) {
    let hi = spec.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - 60.0, hi)
}

fn audit(args: AuditArgs) -> Result<()> {
    let kind: ModelKind = args.model.parse()?;
    let mut spec = match kind {
        ModelKind::External => ModelSpec::external(
            args.cmd
                .clone()
                .ok_or_else(|| Error::Config("--model external requires --cmd".into()))?,
        )?,
        _ if args.cmd.is_some() => {
            return Err(Error::Config("--cmd is only valid with --model external".into()).into())
        }
        _ => ModelSpec::builtin(kind),
    };
    spec.seed = args.seed;
    if let Some(t) = args.timeout {
        spec.timeout_s = t;
    }
    let thresholds = match &args.thresholds {
        Some(text) => Thresholds::parse(text)?,
        None => Thresholds::default(),
    };
    let alphas = args.alphas.clone().unwrap_or_else(default_alpha_grid);
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::Config("alphas must be finite".into()).into());
    }

    let mut loaded = args.input.load()?;
    let framing = args.framing.framing(loaded.cfg.fs_hz)?;
    let truth = match &args.truth {
        Some(path) => {
            let text = read(path)?;
            loaded.provenance.truth = Some(format!("sha256:{}", sha256_hex(text.as_bytes())));
            Some(parse_spectro(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => None,
    };

    let noise = NoiseParams {
        snr_db: args.snr_db,
        seed: args.noise_seed,
    };
    let model = Model::new(spec, loaded.weights.clone(), noise)?;
    let setup = AuditSetup {
        framing,
        alphas,
        thresholds,
        weights_digest: loaded.weights_digest.clone(),
        provenance: loaded.provenance.clone(),
    };
    let outcome = run_audit(&model, &loaded.seq, &loaded.cfg, &loaded.weights, &setup, truth.as_ref())?;

    let dir = &args.out_dir;
    fs::create_dir_all(dir)
        .map_err(Error::from)
        .with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("report.json"), outcome.report.to_json())?;
    write(&dir.join("pred_centroid.csv"), centroid_csv(&outcome.pred_centroid))?;
    write(&dir.join("ref_centroid.csv"), centroid_csv(&outcome.ref_centroid))?;
    if let (Some(p), Some(r)) = (&outcome.rev_pred_centroid, &outcome.rev_ref_centroid) {
        write(&dir.join("rev_pred_centroid.csv"), centroid_csv(p))?;
        write(&dir.join("rev_ref_centroid.csv"), centroid_csv(r))?;
    }
    if args.images {
        write(
            &dir.join("prediction.pgm"),
            render_spectrogram(&outcome.baseline, image_range(&outcome.baseline))?,
        )?;
        if let Some(t) = &truth {
            write(&dir.join("truth.pgm"), render_spectrogram(t, image_range(t))?)?;
        }
    }

    let m = &outcome.report.metrics;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!("model:    {}", args.model);
    println!("frames:   {}", outcome.report.frames);
    println!("MAE (dB): {}", show(m.mae_db));
    println!("FVA:      {:.4}{}", m.fva.value, if m.fva.degenerate { " (degenerate)" } else { "" });
    println!("FVA-rev:  {}", show(m.fva_rev.map(|f| f.value)));
    println!("DCS:      {}", show(m.dcs));
    println!("DCS-sign: {}", show(m.dcs_sign));
    println!("label:    {}", outcome.report.label);
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsOutput {
    frames: usize,
    fva: Fva,
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let pred_text = read(&args.pred)?;
    let pred = parse_spectro(&pred_text).with_context(|| format!("parsing {}", args.pred.display()))?;
    let values = parse_centroid_csv(&read(&args.ref_centroid)?)
        .with_context(|| format!("parsing {}", args.ref_centroid.display()))?;
    let centroid = centroid_trajectory(&pred)?;
    // the trace carries no framing header; it is taken to match the prediction
    let reference = CentroidSeries { values, ..centroid.clone() };
    if reference.len() != centroid.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} frames but the reference trace has {}",
            centroid.len(),
            reference.len()
        ))
        .into());
    }
    let out = MetricsOutput {
        frames: centroid.len(),
        fva: fva(&centroid, &reference)?,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
