use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bac_core::bac::{compose_omega, composition_matrix, stacked_rows, BacError};
use bac_core::calibrate::{
    optimize_stage1, parse_calibration, write_calibration, Calibration, CalibrationConfig,
};
use bac_core::estimator::integrate_master;
use bac_core::gyro_model::ImuExtrinsics;
use bac_core::harness::{
    emit_reports, generate_synthetic_suite, load_reports, load_track, parse_gt_csv, parse_gyro_csv,
    run_pipeline, save_track, HarnessError, Method, PipelineConfig, SuiteConfig, GT_FILE,
    GYRO_FILE,
};
use bac_core::so3::{exp_map, hat, log_map, vee};
use bac_core::{Rotation, Vec3};

const CALIBRATION_DIR: &str = "calibration";
const CALIBRATION_FILE: &str = "calibration.txt";
const FAILURES_FILE: &str = "failures.csv";

#[derive(Parser, Debug)]
#[command(
    name = "bac",
    version,
    about = "Multi-gyroscope open-loop orientation estimation with best axes composition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic suite: a calibration track and experiment tracks.
    Simulate(SimulateArgs),
    /// Run Stage I on `<DATA>/calibration` and write the calibration file.
    Calibrate(CalibrateArgs),
    /// Run Stages II and III on every `<DATA>/track_*` and write reports.
    Run(RunArgs),
    /// Regenerate reports from the per-track tables of an earlier run.
    Report(ReportArgs),
    /// Run a quick numerical self-test.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    imus: usize,
    #[arg(long, default_value_t = 44)]
    tracks: usize,
    #[arg(long, default_value_t = 10.0)]
    aided_secs: f64,
    #[arg(long, default_value_t = 5.0)]
    open_secs: f64,
    /// Output suite directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Suite directory holding `calibration/`.
    data: PathBuf,
    /// Calibration file to write; defaults to `<DATA>/calibration.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Suite directory holding `track_*` directories.
    data: PathBuf,
    /// Calibration file; defaults to `<DATA>/calibration.txt`, computed when absent.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, default_value_t = bac_core::bac::DEFAULT_WINDOW_P)]
    window_p: usize,
    #[arg(long, default_value_t = 10.0)]
    aided_secs: f64,
    #[arg(long, default_value_t = 5.0)]
    open_secs: f64,
    /// Comma-separated methods: imuN, AVE, BAC, BAC-k. Defaults to all singles, AVE, BAC and BAC-2.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Report directory; defaults to `<DATA>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Report directory of an earlier run.
    data: PathBuf,
    /// Output directory; defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Harness(HarnessError),
    Check(usize),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Harness(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Harness(e) if e.is_numerical() => 3,
            Failure::Harness(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

fn track_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("track_{id:03}"))
}

fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let cfg = SuiteConfig {
        imus: a.imus,
        tracks: a.tracks,
        aided_secs: a.aided_secs,
        open_secs: a.open_secs,
        ..Default::default()
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let suite = generate_synthetic_suite(&cfg, a.seed)?;
    save_track(&suite.calibration, &a.out.join(CALIBRATION_DIR))?;
    for t in &suite.tracks {
        save_track(t, &track_dir(&a.out, t.track_id))?;
    }
    println!(
        "wrote {} tracks and a calibration track to {}",
        suite.tracks.len(),
        a.out.display()
    );
    Ok(())
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.into(),
        message: e.to_string(),
    })
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.into(),
        message: e.to_string(),
    })
}

fn calibrate_suite(data: &Path) -> Result<Calibration, HarnessError> {
    let dir = data.join(CALIBRATION_DIR);
    let gyro_path = dir.join(GYRO_FILE);
    let gt_path = dir.join(GT_FILE);
    let gyro = parse_gyro_csv(&gyro_path, &read(&gyro_path)?)?;
    let gt = parse_gt_csv(&gt_path, &read(&gt_path)?)?;
    Ok(optimize_stage1(&gyro, &gt, &CalibrationConfig::default())?.summary())
}

fn load_calibration(path: &Path) -> Result<Calibration, HarnessError> {
    parse_calibration(&read(path)?).map_err(|e| HarnessError::Schema {
        path: path.into(),
        message: e.to_string(),
    })
}

fn calibrate(a: &CalibrateArgs) -> Result<(), Failure> {
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.data.join(CALIBRATION_FILE));
    let cal = calibrate_suite(&a.data)?;
    write(&out, &write_calibration(&cal))?;
    println!(
        "calibrated {} IMUs, cost {:.6e}, written to {}",
        cal.imus.len(),
        cal.cost,
        out.display()
    );
    Ok(())
}

fn track_dirs(data: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let entries = std::fs::read_dir(data).map_err(|e| HarnessError::Io {
        path: data.into(),
        message: e.to_string(),
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("track_"))
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn csv_field(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn run(a: &RunArgs) -> Result<(), Failure> {
    let mut tracks = Vec::new();
    for dir in track_dirs(&a.data)? {
        tracks.push(load_track(&dir, a.aided_secs, a.open_secs)?);
    }
    if tracks.is_empty() {
        return Err(HarnessError::InvalidTrack(format!(
            "no track_* directories in {}",
            a.data.display()
        ))
        .into());
    }
    let imus = tracks[0].imu_count();
    let mut cfg = PipelineConfig::new(imus);
    cfg.window_p = a.window_p;
    if let Some(names) = &a.methods {
        cfg.methods = names
            .iter()
            .map(|n| {
                Method::parse(n, imus)
                    .ok_or_else(|| Failure::Usage(format!("unknown method `{n}` for {imus} IMUs")))
            })
            .collect::<Result<_, _>>()?;
    }
    let cal_path = a
        .calibration
        .clone()
        .unwrap_or_else(|| a.data.join(CALIBRATION_FILE));
    let cal = if cal_path.exists() {
        load_calibration(&cal_path)?
    } else if a.calibration.is_some() {
        return Err(HarnessError::Io {
            path: cal_path,
            message: "calibration file not found".into(),
        }
        .into());
    } else {
        let cal = calibrate_suite(&a.data)?;
        write(&cal_path, &write_calibration(&cal))?;
        cal
    };

    let output = run_pipeline(&tracks, &cal, &cfg)?;
    let out = a.out.clone().unwrap_or_else(|| a.data.join("report"));
    if output.outcomes.is_empty() {
        if let Some(f) = output.failures.first() {
            return Err(f.error.clone().into());
        }
    }
    let paths = emit_reports(&output.reports, &output.usage, &out)?;
    let mut failures = String::from("track_id,error\n");
    for f in &output.failures {
        failures += &format!("{},{}\n", f.track_id, csv_field(&f.error.to_string()));
        eprintln!("track {}: {}", f.track_id, f.error);
    }
    write(&out.join(FAILURES_FILE), &failures)?;
    print!("{}", read(&paths.summary)?);
    Ok(())
}

fn report(a: &ReportArgs) -> Result<(), Failure> {
    let (reports, usage) = load_reports(&a.data)?;
    let out = a.out.clone().unwrap_or_else(|| a.data.clone());
    let paths = emit_reports(&reports, &usage, &out)?;
    print!("{}", read(&paths.summary)?);
    Ok(())
}

fn random_vector(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-radius..radius))
}

fn check(a: &CheckArgs) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut results: Vec<(&str, f64, f64)> = Vec::new();

    let mut hat_vee = 0.0f64;
    let mut exp_log = 0.0f64;
    for _ in 0..1000 {
        let v = random_vector(&mut rng, 1.7);
        hat_vee = hat_vee.max((vee(&hat(&v)).map_err(HarnessError::from)? - v).norm());
        exp_log = exp_log.max((log_map(&exp_map(&v)) - v).norm());
    }
    results.push(("hat/vee inverse", hat_vee, 0.0));
    results.push(("exp/log round trip", exp_log, 1e-9));

    let omega = Vec3::new(0.3, -0.2, 0.5);
    let dt = 1.0 / 342.0;
    let rates: Vec<(f64, Vec3)> = (0..=342).map(|k| (k as f64 * dt, omega)).collect();
    let r = integrate_master(&Rotation::identity(), &rates).map_err(HarnessError::from)?;
    let closed = exp_map(&(omega * (342.0 * dt)));
    let integ = r
        .rotations()
        .last()
        .map_or(f64::INFINITY, |e| e.angle_to(&closed));
    results.push(("constant-rate integration", integ, 1e-12));

    let mut compose = 0.0f64;
    let mut checked = 0;
    while checked < 100 {
        let exts: Vec<ImuExtrinsics> = (0..3)
            .map(|_| ImuExtrinsics {
                r_master_imu: exp_map(&random_vector(&mut rng, 3.0)),
            })
            .collect();
        let chosen = [
            rng.random_range(0..3),
            rng.random_range(0..3),
            rng.random_range(0..3),
        ];
        let a_mat = match composition_matrix(&chosen, &exts) {
            Ok(m) => m,
            Err(BacError::CoplanarAxes { .. }) => continue,
            Err(e) => return Err(HarnessError::from(e).into()),
        };
        let w = random_vector(&mut rng, 2.0);
        let rows = stacked_rows(&chosen, &exts).map_err(HarnessError::from)?;
        compose = compose.max((compose_omega(&a_mat, &(rows * w)) - w).norm());
        checked += 1;
    }
    results.push(("axis composition round trip", compose, 1e-12));

    let mut failed = 0;
    for (name, value, tol) in &results {
        let ok = *value <= *tol;
        failed += usize::from(!ok);
        println!(
            "{} {name}: {value:.3e} (limit {tol:.0e})",
            if ok { "ok  " } else { "FAIL" }
        );
    }
    if failed > 0 {
        return Err(Failure::Check(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Harness(e) => eprintln!("error: {e}"),
                Failure::Check(n) => eprintln!("error: {n} self-test checks failed"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
