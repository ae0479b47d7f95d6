//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 processing error.
//! Tabular output is CSV with a header row.

use std::ffi::OsString;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio_io::{measured_snr_db, mix_at_snr, read_wav, write_wav, AudioBuffer, AudioError};
use crate::config::{ConfigError, EnhanceConfig};
use crate::enhancer::{EnhanceError, Enhancer};
use crate::framing::split_frames;
use crate::metrics::{snrseg_improvement, wss, MetricError};
use crate::pwpt::{analyze, WaveletFilters};
use crate::shrink::{apply_shrink, mu_law, semisoft, DEFAULT_MU};
use crate::stats::{aic_index, ModelKind, StatsError};
use crate::teager::te_operator;
use crate::threshold::{lambda_erlang, lambda_gaussian, lambda_student, DEFAULT_CHI2};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PROCESSING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pwp-enhance", version, about = "Wavelet packet speech enhancement and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enhance noisy recordings (16-bit PCM WAV). Pairs of --in/--out run concurrently.
    Enhance(EnhanceArgs),
    /// Add noise to a clean recording at a given global SNR.
    Mix(MixArgs),
    /// Score an enhanced file. CSV columns: file,snr_db,snrseg_improvement,wss
    Eval(EvalArgs),
    /// Per-subband AIC of model fits to Teager energies.
    /// CSV columns: subband,AIC_erlang2,AIC_gaussian,AIC_studentt
    Fit(FitArgs),
    /// Thresholds versus SNR for unit signal power.
    /// CSV columns: snr_db,lambda_erlang,lambda_student,lambda_gaussian
    ThresholdCurve(ThresholdCurveArgs),
    /// Input/output curves of the shrinkage rules. CSV columns: y,semisoft,mu_law,custom
    ShrinkCurve(ShrinkCurveArgs),
    /// Magnitude STFT (256-point Hann, 50% overlap). CSV columns: time_s, then one per bin in Hz
    Spectrogram(SpectrogramArgs),
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    /// Noisy input file; repeat for several files.
    #[arg(long = "in", value_name = "WAV")]
    inputs: Vec<PathBuf>,
    /// Output file; one per --in, in the same order.
    #[arg(long = "out", value_name = "WAV")]
    outputs: Vec<PathBuf>,
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Noise-only recording used as the exact noise estimate.
    #[arg(long, value_name = "WAV")]
    noise_oracle: Option<PathBuf>,
    /// Print the effective configuration to stdout.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Args)]
struct MixArgs {
    #[arg(long, value_name = "WAV")]
    clean: PathBuf,
    #[arg(long, value_name = "WAV")]
    noise: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: f64,
    #[arg(long, value_name = "WAV")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "WAV")]
    clean: PathBuf,
    #[arg(long, value_name = "WAV")]
    noisy: PathBuf,
    #[arg(long, value_name = "WAV")]
    enhanced: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long = "in", value_name = "WAV")]
    input: PathBuf,
    /// Configuration supplying the frame length and tree.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ThresholdCurveArgs {
    #[arg(long, default_value_t = -15.0, allow_hyphen_values = true)]
    min_db: f64,
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    max_db: f64,
    #[arg(long, default_value_t = 1.0)]
    step_db: f64,
    #[arg(long, default_value_t = DEFAULT_CHI2)]
    chi2: f64,
    /// Write to a file instead of stdout.
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ShrinkCurveArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_MU)]
    mu: f64,
    /// Half-width of the input range.
    #[arg(long, default_value_t = 3.0)]
    range: f64,
    #[arg(long, default_value_t = 601)]
    points: usize,
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpectrogramArgs {
    #[arg(long = "in", value_name = "WAV")]
    input: PathBuf,
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

/// A failure carrying its exit class.
#[derive(Debug)]
struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, msg: msg.into() }
    }
    fn io(msg: impl Into<String>) -> Self {
        Self { code: EXIT_IO, msg: msg.into() }
    }
    fn processing(msg: impl Into<String>) -> Self {
        Self { code: EXIT_PROCESSING, msg: msg.into() }
    }
}

impl From<AudioError> for Failure {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::SampleRateMismatch(..)
            | AudioError::NoiseTooShort { .. }
            | AudioError::ZeroPower(_)
            | AudioError::NonFinite(_) => Failure::processing(e.to_string()),
            _ => Failure::io(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::io(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

impl From<EnhanceError> for Failure {
    fn from(e: EnhanceError) -> Self {
        match e {
            EnhanceError::Config(c) => c.into(),
            other => Failure::processing(other.to_string()),
        }
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        Failure::processing(e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        Failure::processing(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::io(e.to_string())
    }
}

/// Runs the CLI with the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI against the given writers; `args[0]` is the program name.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Enhance(a) => cmd_enhance(a, out),
        Command::Mix(a) => cmd_mix(a),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::ThresholdCurve(a) => with_output(a.out.clone(), out, |w| threshold_curve(&a, w)),
        Command::ShrinkCurve(a) => with_output(a.out.clone(), out, |w| shrink_curve(&a, w)),
        Command::Spectrogram(a) => cmd_spectrogram(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(format!("cannot create {}: {e}", path.display())))
}

fn with_output(
    path: Option<PathBuf>,
    stdout: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> Result<(), Failure>,
) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut w = create(&p)?;
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => body(stdout),
    }
}

fn load_config(path: Option<&Path>) -> Result<EnhanceConfig, Failure> {
    Ok(match path {
        Some(p) => EnhanceConfig::load(p)?,
        None => EnhanceConfig::default(),
    })
}

fn cmd_enhance(a: EnhanceArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = load_config(a.config.as_deref())?;
    if a.dump_config {
        write!(out, "{}", cfg.to_config_string())?;
    }
    if a.inputs.len() != a.outputs.len() {
        return Err(Failure::usage(format!(
            "{} --in files but {} --out files",
            a.inputs.len(),
            a.outputs.len()
        )));
    }
    if a.inputs.is_empty() {
        return if a.dump_config {
            Ok(())
        } else {
            Err(Failure::usage("enhance needs at least one --in/--out pair"))
        };
    }
    let noise = a.noise_oracle.as_deref().map(read_wav).transpose()?;
    let base = Enhancer::new(cfg)?;
    let base = match &noise {
        Some(n) => base.with_noise_oracle(n)?,
        None => base,
    };
    let results: Vec<Result<(), Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = a
            .inputs
            .iter()
            .zip(&a.outputs)
            .map(|(input, output)| {
                let mut enhancer = base.clone();
                scope.spawn(move || -> Result<(), Failure> {
                    let noisy = read_wav(input)?;
                    let enhanced = enhancer.process(&noisy)?;
                    write_wav(&enhanced, output)?;
                    log::info!("{} -> {}", input.display(), output.display());
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Failure::processing("worker panicked"))))
            .collect()
    });
    // report the worst failure class, keeping the first message of that class
    let mut worst: Option<Failure> = None;
    for r in results {
        if let Err(f) = r {
            if worst.as_ref().is_none_or(|w| f.code > w.code) {
                worst = Some(f);
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn cmd_mix(a: MixArgs) -> Result<(), Failure> {
    let clean = read_wav(&a.clean)?;
    let noise = read_wav(&a.noise)?;
    let mixed = mix_at_snr(&clean, &noise, a.snr_db)?;
    let peak = mixed.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        log::warn!("mixture peaks at {peak:.3}; samples beyond full scale will clip");
    }
    write_wav(&mixed, &a.out)?;
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let clean = read_wav(&a.clean)?;
    let noisy = read_wav(&a.noisy)?;
    let enhanced = read_wav(&a.enhanced)?;
    let improvement = snrseg_improvement(&clean, &noisy, &enhanced)?;
    let distance = wss(&clean, &enhanced)?;
    let snr = measured_snr_db(&clean.samples, &noisy.samples);
    writeln!(out, "file,snr_db,snrseg_improvement,wss")?;
    writeln!(
        out,
        "{},{},{},{}",
        csv_field(&a.enhanced.display().to_string()),
        snr,
        improvement,
        distance
    )?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_fit(a: FitArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = load_config(a.config.as_deref())?;
    let audio = read_wav(&a.input)?;
    let filters = WaveletFilters::db10();
    let stack = split_frames(&audio.samples, cfg.frame_len).map_err(|e| Failure::processing(e.to_string()))?;
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); cfg.tree.len()];
    for frame in &stack.frames {
        let sb = analyze(frame, &cfg.tree, &filters).map_err(|e| Failure::processing(e.to_string()))?;
        for (k, t) in te_operator(&sb).values.into_iter().enumerate() {
            pooled[k].extend(t);
        }
    }
    writeln!(out, "subband,AIC_erlang2,AIC_gaussian,AIC_studentt")?;
    for (k, data) in pooled.iter().enumerate() {
        let mut row = k.to_string();
        for kind in ModelKind::ALL {
            let aic = match aic_index(data, kind) {
                Ok(fit) => fit.aic,
                Err(StatsError::DegenerateData) => f64::NAN,
                Err(e) => return Err(e.into()),
            };
            row.push_str(&format!(",{aic}"));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Rows of the threshold comparison for unit signal power: `sigma_n2 = 1 / gamma`.
fn threshold_curve(a: &ThresholdCurveArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let ordered = a.min_db.is_finite() && a.max_db.is_finite() && a.min_db <= a.max_db;
    if !ordered || a.step_db.is_nan() || a.step_db <= 0.0 {
        return Err(Failure::usage("need finite --min-db <= --max-db and a positive --step-db"));
    }
    writeln!(out, "snr_db,lambda_erlang,lambda_student,lambda_gaussian")?;
    let steps = ((a.max_db - a.min_db) / a.step_db + 1e-9).floor() as usize;
    for i in 0..=steps {
        let snr_db = a.min_db + i as f64 * a.step_db;
        let gamma = 10f64.powf(snr_db / 10.0);
        let sigma_n2 = 1.0 / gamma;
        let proc = |e: crate::threshold::ThresholdError| Failure::processing(e.to_string());
        writeln!(
            out,
            "{},{},{},{}",
            snr_db,
            lambda_erlang(sigma_n2, gamma).map_err(proc)?,
            lambda_student(sigma_n2, gamma, a.chi2).map_err(proc)?,
            lambda_gaussian(sigma_n2, gamma).map_err(proc)?
        )?;
    }
    Ok(())
}

fn shrink_curve(a: &ShrinkCurveArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.points < 2 || a.range.is_nan() || a.range <= 0.0 {
        return Err(Failure::usage("need --points >= 2 and a positive --range"));
    }
    let l1 = a.lambda1;
    let l2 = 2.0 * l1;
    apply_shrink(0.0, l1, l2, a.alpha, a.mu).map_err(|e| Failure::usage(e.to_string()))?;
    writeln!(out, "y,semisoft,mu_law,custom")?;
    for i in 0..a.points {
        let y = -a.range + 2.0 * a.range * i as f64 / (a.points - 1) as f64;
        let custom = apply_shrink(y, l1, l2, a.alpha, a.mu).map_err(|e| Failure::processing(e.to_string()))?;
        writeln!(out, "{},{},{},{}", y, semisoft(y, l1, l2), mu_law(y, l1, a.mu), custom)?;
    }
    Ok(())
}

/// Frame length of the spectrogram.
pub const STFT_LEN: usize = 256;

/// Magnitude STFT rows (one per frame), `STFT_LEN / 2 + 1` bins each.
pub fn stft_magnitude(samples: &[f64]) -> Vec<Vec<f64>> {
    let n = STFT_LEN;
    let hop = n / 2;
    let window: Vec<f64> = (1..=n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n as f64 + 1.0)).cos()))
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let frames = if samples.len() <= n { 1 } else { (samples.len() - n).div_ceil(hop) + 1 };
    (0..frames)
        .map(|f| {
            let mut buf: Vec<Complex<f64>> = (0..n)
                .map(|i| Complex::new(window[i] * samples.get(f * hop + i).copied().unwrap_or(0.0), 0.0))
                .collect();
            fft.process(&mut buf);
            buf[..=n / 2].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

fn cmd_spectrogram(a: SpectrogramArgs) -> Result<(), Failure> {
    let audio: AudioBuffer = read_wav(&a.input)?;
    let rows = stft_magnitude(&audio.samples);
    let fs = audio.sample_rate_hz as f64;
    let mut w = create(&a.out)?;
    let mut header = String::from("time_s");
    for b in 0..=STFT_LEN / 2 {
        header.push_str(&format!(",{}", b as f64 * fs / STFT_LEN as f64));
    }
    writeln!(w, "{header}")?;
    for (f, row) in rows.iter().enumerate() {
        let mut line = format!("{}", (f * STFT_LEN / 2) as f64 / fs);
        for v in row {
            line.push_str(&format!(",{v}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("pwp-enhance").chain(args.iter().copied());
        let code = run_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn threshold_curve_unit_row() {
        let (code, out, _) = run_capture(&["threshold-curve"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "snr_db,lambda_erlang,lambda_student,lambda_gaussian");
        assert_eq!(lines.len(), 32);
        let row: Vec<f64> = lines[16].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row[0], 0.0);
        assert!((row[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn shrink_curve_matches_apply_shrink_bitwise() {
        let (code, out, _) = run_capture(&["shrink-curve", "--points", "101"]);
        assert_eq!(code, 0);
        for line in out.lines().skip(1) {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            let direct = apply_shrink(v[0], 1.0, 2.0, 0.5, 0.9).unwrap();
            assert_eq!(v[3].to_bits(), direct.to_bits());
            assert_eq!(v[1].to_bits(), semisoft(v[0], 1.0, 2.0).to_bits());
        }
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run_capture(&[]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["threshold-curve", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["threshold-curve", "--step-db", "0"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["shrink-curve", "--alpha", "2"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["enhance", "--in", "a.wav"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_input_is_io_error() {
        let (code, _, err) = run_capture(&["spectrogram", "--in", "/nonexistent/x.wav", "--out", "/tmp/x.csv"]);
        assert_eq!(code, EXIT_IO);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn dump_config_round_trips() {
        let (code, out, _) = run_capture(&["enhance", "--dump-config"]);
        assert_eq!(code, 0);
        assert_eq!(EnhanceConfig::parse(&out, None).unwrap(), EnhanceConfig::default());
    }

    #[test]
    fn stft_shape_and_peak() {
        let x: Vec<f64> = (0..2048).map(|i| (2.0 * PI * 1000.0 * i as f64 / 8000.0).sin()).collect();
        let rows = stft_magnitude(&x);
        assert_eq!(rows.len(), 15);
        for row in &rows {
            assert_eq!(row.len(), 129);
            let peak = row.iter().enumerate().fold(0, |a, (j, v)| if *v > row[a] { j } else { a });
            assert_eq!(peak, 32);
        }
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a.wav"), "a.wav");
        assert_eq!(csv_field("a,b.wav"), "\"a,b.wav\"");
        assert_eq!(csv_field("a\"b"), "\"a\"\"b\"");
    }
}
