//! Command-line front end: dereverberate recordings, train spectral
//! bases, build synthetic test scenes, and score results.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nctfderev::synth::speech_shaped_noise;
use nctfderev::{
    apply_gain_and_synthesize, cepstral_distance, convolve_time, kl_fit, log_spectral_distance,
    magnitude, read_basis, read_wav, run_baseline, run_integrated, run_weighted, stack,
    stft_forward, synthesize_rir, write_basis, write_wav, BasisMode, EngineConfig, MetricReport,
    RirSpec, Signal, Spectrogram, StftConfig,
};
use serde::Serialize;
use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "nctfderev",
    version,
    about = "Blind single-channel speech dereverberation via convolutive spectrogram models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dereverberate a mono WAV file.
    Dereverb(Box<DereverbArgs>),
    /// Train a spectral basis on a directory of clean WAV files.
    TrainBasis(TrainBasisArgs),
    /// Build a synthetic reverberant (and optionally noisy) test scene.
    MakeScene(MakeSceneArgs),
    /// Score processed files against a clean reference.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Convolutive filter with a free clean spectrogram.
    Nctf,
    /// Dictionary-constrained clean spectrogram inside the convolutive cost.
    Integrated,
    /// Blend of convolutive fit and dictionary fit via a weight rho.
    Weighted,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Nctf => "nctf",
            Method::Integrated => "integrated",
            Method::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    /// Learn the basis on the input itself.
    Online,
    /// Fixed low-rank basis from a basis file.
    Lowrank,
    /// Fixed overcomplete basis from a basis file.
    Overcomplete,
}

impl Variant {
    fn basis_mode(self) -> BasisMode {
        match self {
            Variant::Online => BasisMode::Online,
            Variant::Lowrank => BasisMode::FixedLowRank,
            Variant::Overcomplete => BasisMode::FixedOvercomplete,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Variant::Online => "online",
            Variant::Lowrank => "lowrank",
            Variant::Overcomplete => "overcomplete",
        }
    }
}

#[derive(Parser, Debug)]
struct DereverbArgs {
    /// Reverberant input WAV (mono).
    input: PathBuf,
    /// Dereverberated output WAV.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Integrated)]
    method: Method,
    #[arg(long, value_enum, default_value_t = Variant::Online)]
    variant: Variant,
    /// Basis file for the fixed-basis variants.
    #[arg(long)]
    basis: Option<PathBuf>,
    /// Enable frame stacking (T_st = 6; integrated method only).
    #[arg(long)]
    temporal: bool,
    /// Blend weight of the weighted method, in (0, 1).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// STFT frame length in milliseconds (hop is half a frame).
    #[arg(long, default_value_t = 64.0)]
    frame_ms: f64,
    /// Spectrogram exponent: 1 magnitude, 2 power.
    #[arg(long)]
    power: Option<u8>,
    /// Sparsity weight; omitted = automatic data-dependent rule.
    #[arg(long)]
    lambda: Option<f64>,
    /// Activation sharpening exponent.
    #[arg(long)]
    phi_x: Option<f64>,
    /// Filter length in frames.
    #[arg(long)]
    lh: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable the normalization/clamping/sharpening post-steps.
    #[arg(long)]
    pure_mode: bool,
    /// Flat JSON config file mirroring the engine fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter sweep, e.g. `--sweep rho=0.1:0.9:0.1` (weighted method).
    #[arg(long)]
    sweep: Option<String>,
    /// Resynthesize the dictionary product instead of the gain-filtered
    /// signal (integrated method only).
    #[arg(long)]
    direct: bool,
    /// Cost-trace CSV path (default: output path with .csv extension).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Run-metadata JSON path (default: output path with .json extension).
    #[arg(long)]
    manifest_out: Option<PathBuf>,
    /// Sweep CSV path (default: output path with .sweep.csv extension).
    #[arg(long)]
    sweep_out: Option<PathBuf>,
}

#[derive(Parser, Debug)]
struct TrainBasisArgs {
    /// Directory of training WAV files (read in sorted order).
    corpus: PathBuf,
    /// Basis file to write.
    #[arg(short, long)]
    output: PathBuf,
    /// lowrank factorizes the corpus; overcomplete samples raw frames.
    #[arg(long, value_enum)]
    mode: TrainMode,
    /// Number of basis vectors (default 100 lowrank / 3000 overcomplete).
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 64.0)]
    frame_ms: f64,
    #[arg(long, default_value_t = 1)]
    power: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Factorization sweeps for lowrank training.
    #[arg(long, default_value_t = 30)]
    nmf_iters: usize,
    /// Stack frames (T_st = 6) so the basis fits temporal runs.
    #[arg(long)]
    temporal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainMode {
    Lowrank,
    Overcomplete,
}

#[derive(Parser, Debug)]
struct MakeSceneArgs {
    /// Clean speech WAV.
    clean: PathBuf,
    /// Directory for rir.wav, reverberant.wav, noisy.wav and scene.json.
    #[arg(short, long)]
    out_dir: PathBuf,
    /// Reverberation time in seconds.
    #[arg(long, default_value_t = 0.68)]
    t60: f64,
    /// Direct-to-reverberant ratio in dB.
    #[arg(long, default_value_t = 0.0)]
    drr_db: f64,
    /// Add speech-shaped noise at this reverberant-signal-to-noise ratio.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Impulse-response length in milliseconds.
    #[arg(long, default_value_t = 500.0)]
    rir_ms: f64,
}

#[derive(Parser, Debug)]
struct EvaluateArgs {
    /// Clean reference WAV.
    clean: PathBuf,
    /// Unprocessed reverberant WAV; deltas are measured against its row.
    #[arg(long)]
    reverberant: PathBuf,
    /// Processed WAV files to score.
    processed: Vec<PathBuf>,
    /// Metrics CSV to write.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 64.0)]
    frame_ms: f64,
    /// Log floor for the spectral distance, dB below the peak.
    #[arg(long, default_value_t = -60.0)]
    floor_db: f64,
    /// Cepstral coefficients compared (c0 always excluded).
    #[arg(long, default_value_t = 24)]
    cd_order: usize,
}

fn main() -> Result<()> {
    init_threads();
    match Cli::parse().command {
        Command::Dereverb(args) => cmd_dereverb(*args),
        Command::TrainBasis(args) => cmd_train_basis(args),
        Command::MakeScene(args) => cmd_make_scene(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    }
}

/// NCTF_NUM_THREADS caps the worker pool; results are identical at any
/// thread count, this is purely a resource knob.
fn init_threads() {
    if let Some(n) = std::env::var("NCTF_NUM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let mut p = path.to_path_buf();
    p.set_extension(ext);
    p
}

/// Merge a flat JSON object over the current config; unknown keys are
/// rejected so typos fail loudly. Returns which keys the file set.
fn overlay_config_file(
    base: &EngineConfig,
    path: &Path,
) -> Result<(EngineConfig, BTreeSet<String>)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let overlay: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let serde_json::Value::Object(overlay) = overlay else {
        bail!("config file {} must be a flat JSON object", path.display());
    };
    let mut merged = serde_json::to_value(base)?;
    let fields = merged.as_object_mut().expect("config serializes to an object");
    let mut keys = BTreeSet::new();
    for (k, v) in overlay {
        if !fields.contains_key(&k) {
            bail!("unknown config key `{k}` in {}", path.display());
        }
        fields.insert(k.clone(), v);
        keys.insert(k);
    }
    Ok((serde_json::from_value(merged.clone())
        .with_context(|| format!("applying {}", path.display()))?, keys))
}

fn resolve_config(args: &DereverbArgs) -> Result<EngineConfig> {
    let mut cfg = EngineConfig::for_basis_mode(args.variant.basis_mode());
    let mut file_keys = BTreeSet::new();
    if let Some(path) = &args.config {
        let (merged, keys) = overlay_config_file(&cfg, path)?;
        cfg = merged;
        file_keys = keys;
    }
    if let Some(r) = args.rho {
        cfg.rho = r;
    }
    if let Some(it) = args.iterations {
        cfg.iterations = it;
    } else if args.method == Method::Weighted && !file_keys.contains("iterations") {
        cfg.iterations = 70;
    }
    if let Some(p) = args.power {
        cfg.power_p = p;
    }
    if let Some(l) = args.lambda {
        cfg.lambda = Some(l);
    }
    if let Some(phi) = args.phi_x {
        cfg.phi_x = phi;
    }
    if let Some(lh) = args.lh {
        cfg.lh = lh;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.pure_mode {
        cfg.pure_mode = true;
    }
    if args.temporal {
        if args.method != Method::Integrated {
            bail!("--temporal requires --method integrated");
        }
        if !file_keys.contains("t_st") {
            cfg.t_st = 6;
        }
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    version: &'static str,
    command: &'static str,
    input: String,
    output: String,
    method: &'static str,
    variant: &'static str,
    temporal: bool,
    direct: bool,
    frame_ms: f64,
    basis: Option<String>,
    report: String,
    sweep: Option<String>,
    config: &'a EngineConfig,
}

fn write_json<P: AsRef<Path>, T: Serialize>(value: &T, path: P) -> Result<()> {
    let file = File::create(path.as_ref())
        .with_context(|| format!("creating {}", path.as_ref().display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

fn cmd_dereverb(args: DereverbArgs) -> Result<()> {
    let mut config = resolve_config(&args)?;
    let signal = read_wav(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let stft_cfg = StftConfig::from_frame_ms(args.frame_ms, signal.sample_rate_hz, config.power_p)?;
    let complex = stft_forward(&signal, &stft_cfg)?;
    let y = magnitude(&complex);

    let basis = if config.basis_mode.is_fixed() {
        let path = args.basis.as_ref().ok_or_else(|| {
            anyhow!(
                "--variant {} needs --basis <file>",
                args.variant.as_str()
            )
        })?;
        let w = read_basis(path).with_context(|| format!("reading basis {}", path.display()))?;
        // The file is the authority on the number of basis vectors.
        config.rank = w.ncols();
        Some(w)
    } else {
        if args.basis.is_some() {
            bail!("--basis only applies to the lowrank/overcomplete variants");
        }
        None
    };
    if args.direct && args.method != Method::Integrated {
        bail!("--direct is only available for --method integrated");
    }

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| with_extension(&args.output, "csv"));
    let sweep_path = args
        .sweep_out
        .clone()
        .unwrap_or_else(|| with_extension(&args.output, "sweep.csv"));
    if let Some(sweep) = &args.sweep {
        run_sweep(sweep, &sweep_path, args.method, &config, &y, basis.as_ref())?;
    }

    let (gain, report) = match args.method {
        Method::Nctf => {
            let run = run_baseline(&y, &config)?;
            (run.gain, run.report)
        }
        Method::Integrated => {
            let run = run_integrated(&y, &config, basis.as_ref())?;
            if args.direct {
                let estimate = run.direct_estimate();
                let gain = ndarray::Zip::from(&estimate)
                    .and(&y.values)
                    .map_collect(|&e, &yv| e / (yv + config.eps));
                (gain, run.report)
            } else {
                (run.gain, run.report)
            }
        }
        Method::Weighted => {
            let run = run_weighted(&y, &config, basis.as_ref())?;
            (run.gain, run.report)
        }
    };

    let output = apply_gain_and_synthesize(&complex, &gain, config.power_p, signal.sample_rate_hz)?;
    write_wav(&output, &args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    report.write_csv(BufWriter::new(File::create(&report_path)?))?;

    let manifest_path = args
        .manifest_out
        .clone()
        .unwrap_or_else(|| with_extension(&args.output, "json"));
    write_json(
        &RunMetadata {
            version: env!("CARGO_PKG_VERSION"),
            command: "dereverb",
            input: args.input.display().to_string(),
            output: args.output.display().to_string(),
            method: args.method.as_str(),
            variant: args.variant.as_str(),
            temporal: args.temporal,
            direct: args.direct,
            frame_ms: args.frame_ms,
            basis: args.basis.as_ref().map(|p| p.display().to_string()),
            report: report_path.display().to_string(),
            sweep: args.sweep.clone(),
            config: &config,
        },
        &manifest_path,
    )?;

    println!(
        "{} -> {} [{} / {}] {} sweeps, final KL {:.6e}",
        args.input.display(),
        args.output.display(),
        args.method.as_str(),
        args.variant.as_str(),
        report.iterations_run,
        report.final_kl
    );
    Ok(())
}

fn parse_sweep(spec: &str) -> Result<(String, Vec<f64>)> {
    let (field, range) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("sweep must look like rho=0.1:0.9:0.1"))?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        bail!("sweep range must be start:end:step");
    }
    let start: f64 = parts[0].parse()?;
    let end: f64 = parts[1].parse()?;
    let step: f64 = parts[2].parse()?;
    if !(step > 0.0) || end < start {
        bail!("sweep needs step > 0 and end ≥ start");
    }
    let mut values = Vec::new();
    let mut v = start;
    while v <= end + 1e-9 {
        // Round away accumulated float drift so 0.1 steps stay exact.
        values.push((v * 1e9).round() / 1e9);
        v += step;
    }
    Ok((field.to_string(), values))
}

fn run_sweep(
    spec: &str,
    out: &Path,
    method: Method,
    config: &EngineConfig,
    y: &Spectrogram,
    basis: Option<&ndarray::Array2<f64>>,
) -> Result<()> {
    let (field, values) = parse_sweep(spec)?;
    if field != "rho" {
        bail!("only rho sweeps are supported, got `{field}`");
    }
    if method != Method::Weighted {
        bail!("--sweep rho=... requires --method weighted");
    }
    let mut csv = String::from("rho,final_cost,final_kl\n");
    for &v in &values {
        let mut cfg = config.clone();
        cfg.rho = v;
        let run = run_weighted(y, &cfg, basis)?;
        let total = run.report.rows.last().map(|r| r.total).unwrap_or(f64::NAN);
        csv.push_str(&format!("{},{},{}\n", v, total, run.report.final_kl));
    }
    fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    println!("sweep over {} values of rho -> {}", values.len(), out.display());
    Ok(())
}

fn cmd_train_basis(args: TrainBasisArgs) -> Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(&args.corpus)
        .with_context(|| format!("reading corpus dir {}", args.corpus.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("wav"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no WAV files found in {}", args.corpus.display());
    }

    let t_st = if args.temporal { 6 } else { 1 };
    let mut specs = Vec::with_capacity(files.len());
    let mut rate = None;
    for path in &files {
        let sig = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
        match rate {
            None => rate = Some(sig.sample_rate_hz),
            Some(r) => sig.expect_rate(r)?,
        }
        let cfg = StftConfig::from_frame_ms(args.frame_ms, sig.sample_rate_hz, args.power)?;
        let spec = magnitude(&stft_forward(&sig, &cfg)?);
        if t_st > 1 {
            let stacked = stack(&spec, t_st)?;
            specs.push(Spectrogram {
                values: stacked.values,
                power_p: args.power,
            });
        } else {
            specs.push(spec);
        }
    }

    let rank = args.rank.unwrap_or(match args.mode {
        TrainMode::Lowrank => 100,
        TrainMode::Overcomplete => 3000,
    });
    let w = match args.mode {
        TrainMode::Lowrank => {
            nctfderev::nmf::train_basis_offline(&specs, rank, args.nmf_iters, args.seed)?
        }
        TrainMode::Overcomplete => {
            nctfderev::nmf::sample_overcomplete_basis(&specs, rank, args.seed)?
        }
    };
    write_basis(&w, &args.output)
        .with_context(|| format!("writing basis {}", args.output.display()))?;
    println!(
        "trained {}x{} basis from {} file(s) -> {}",
        w.nrows(),
        w.ncols(),
        files.len(),
        args.output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SceneMetadata {
    version: &'static str,
    command: &'static str,
    clean: String,
    t60: f64,
    drr_db: f64,
    snr_db: Option<f64>,
    seed: u64,
    rir_ms: f64,
    level_scale: f64,
}

fn cmd_make_scene(args: MakeSceneArgs) -> Result<()> {
    let clean = read_wav(&args.clean)
        .with_context(|| format!("reading {}", args.clean.display()))?;
    fs::create_dir_all(&args.out_dir)?;
    let fs_hz = clean.sample_rate_hz;
    let length = (args.rir_ms * 1e-3 * fs_hz as f64).round() as usize;
    let rir = synthesize_rir(&RirSpec {
        t60: args.t60,
        drr_db: args.drr_db,
        length,
        seed: args.seed,
        sample_rate_hz: fs_hz,
    })?;
    let mut reverberant = convolve_time(&clean, &rir)?;

    // Leave headroom so adding noise cannot clip the 16-bit output.
    let peak = reverberant.peak();
    let level_scale = if peak > 0.5 { 0.5 / peak } else { 1.0 };
    for v in &mut reverberant.samples {
        *v *= level_scale;
    }

    write_wav(&rir, args.out_dir.join("rir.wav"))?;
    write_wav(&reverberant, args.out_dir.join("reverberant.wav"))?;

    if let Some(snr_db) = args.snr_db {
        let noise = speech_shaped_noise(&clean, args.seed.wrapping_add(1), reverberant.len())?;
        let e_rev: f64 = reverberant.samples.iter().map(|v| v * v).sum();
        let e_noise: f64 = noise.samples.iter().map(|v| v * v).sum();
        if e_noise == 0.0 || e_rev == 0.0 {
            bail!("cannot set an SNR on silent signals");
        }
        let g = (e_rev / (e_noise * 10f64.powf(snr_db / 10.0))).sqrt();
        let samples = reverberant
            .samples
            .iter()
            .zip(&noise.samples)
            .map(|(&r, &n)| r + g * n)
            .collect();
        let noisy = Signal::new(samples, fs_hz);
        if noisy.peak() > 0.999 {
            eprintln!("warning: noisy mix clips; measured SNR will be off");
        }
        write_wav(&noisy, args.out_dir.join("noisy.wav"))?;
    }

    write_json(
        &SceneMetadata {
            version: env!("CARGO_PKG_VERSION"),
            command: "make-scene",
            clean: args.clean.display().to_string(),
            t60: args.t60,
            drr_db: args.drr_db,
            snr_db: args.snr_db,
            seed: args.seed,
            rir_ms: args.rir_ms,
            level_scale,
        },
        args.out_dir.join("scene.json"),
    )?;
    println!(
        "scene in {} (t60 {} s, drr {} dB{})",
        args.out_dir.display(),
        args.t60,
        args.drr_db,
        args.snr_db
            .map(|s| format!(", snr {s} dB"))
            .unwrap_or_default()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let clean = read_wav(&args.clean)
        .with_context(|| format!("reading {}", args.clean.display()))?;
    let mut entries: Vec<(String, String, Signal)> = Vec::new();
    let reverberant = read_wav(&args.reverberant)
        .with_context(|| format!("reading {}", args.reverberant.display()))?;
    reverberant.expect_rate(clean.sample_rate_hz)?;
    entries.push((
        args.reverberant.display().to_string(),
        "reverberant".to_string(),
        reverberant,
    ));
    for path in &args.processed {
        let sig = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
        sig.expect_rate(clean.sample_rate_hz)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        entries.push((path.display().to_string(), label, sig));
    }

    let min_len = entries
        .iter()
        .map(|(_, _, s)| s.len())
        .chain([clean.len()])
        .min()
        .unwrap_or(0);
    let clean_trim = Signal::new(clean.samples[..min_len].to_vec(), clean.sample_rate_hz);
    let stft_cfg = StftConfig::from_frame_ms(args.frame_ms, clean.sample_rate_hz, 1)?;
    let clean_spec = magnitude(&stft_forward(&clean_trim, &stft_cfg)?);
    let clean_rms = clean_trim.rms();

    let mut rows = Vec::new();
    for (file, label, sig) in &entries {
        let mut trimmed: Vec<f64> = sig.samples[..min_len].to_vec();
        // Level-align to the reference so the scores reflect spectral
        // shape, not broadband gain.
        let rms = (trimmed.iter().map(|v| v * v).sum::<f64>() / trimmed.len() as f64).sqrt();
        if rms > 0.0 && clean_rms > 0.0 {
            let g = clean_rms / rms;
            for v in &mut trimmed {
                *v *= g;
            }
        }
        let aligned = Signal::new(trimmed, clean.sample_rate_hz);
        let spec = magnitude(&stft_forward(&aligned, &stft_cfg)?);
        rows.push(MetricReport {
            file: file.clone(),
            method: label.clone(),
            kl_fit: kl_fit(&clean_spec, &spec),
            lsd_db: log_spectral_distance(&clean_spec, &spec, args.floor_db)?,
            cd: cepstral_distance(&clean_trim, &aligned, args.cd_order)?,
        });
    }

    let base = rows[0].clone();
    let mut csv = format!("{},delta_kl_fit,delta_lsd_db,delta_cd\n", MetricReport::csv_header());
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.csv_row(),
            r.kl_fit - base.kl_fit,
            r.lsd_db - base.lsd_db,
            r.cd - base.cd
        ));
        println!(
            "{:<14} kl_fit {:8.4}  lsd {:7.3} dB  cd {:7.3}",
            r.method, r.kl_fit, r.lsd_db, r.cd
        );
    }
    fs::write(&args.output, csv)
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(())
}
