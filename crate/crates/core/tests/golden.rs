//! Byte-level comparison of calibration and report files against frozen copies.
//!
//! Set `BAC_UPDATE_GOLDEN=1` to rewrite the frozen copies after an intended change.

use std::path::{Path, PathBuf};

use bac_core::calibrate::{optimize_stage1, write_calibration, CalibrationConfig};
use bac_core::harness::{
    emit_reports, generate_synthetic_suite, run_pipeline, PipelineConfig, SuiteConfig, ERRORS_FILE,
    PER_TRACK_FILE, SELECTIONS_FILE, SUMMARY_FILE, USAGE_FILE,
};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
}

#[test]
fn fixed_seed_outputs_match_golden_files() {
    let cfg = SuiteConfig {
        imus: 2,
        tracks: 2,
        aided_secs: 4.0,
        open_secs: 2.0,
        ..Default::default()
    };
    let suite = generate_synthetic_suite(&cfg, 11).unwrap();
    let calibration = optimize_stage1(
        &suite.calibration.gyro,
        &suite.calibration.gt,
        &CalibrationConfig::default(),
    )
    .unwrap()
    .summary();
    let mut pc = PipelineConfig::new(cfg.imus);
    pc.stage2.max_epochs = 200;
    let out = run_pipeline(&suite.tracks, &calibration, &pc).unwrap();
    assert!(out.failures.is_empty());

    let tmp = tempfile::tempdir().unwrap();
    emit_reports(&out.reports, &out.usage, tmp.path()).unwrap();
    std::fs::write(
        tmp.path().join("calibration.txt"),
        write_calibration(&calibration),
    )
    .unwrap();

    let golden = golden_dir();
    let update = std::env::var_os("BAC_UPDATE_GOLDEN").is_some();
    for name in [
        "calibration.txt",
        ERRORS_FILE,
        PER_TRACK_FILE,
        SELECTIONS_FILE,
        SUMMARY_FILE,
        USAGE_FILE,
    ] {
        let produced = std::fs::read(tmp.path().join(name)).unwrap();
        let frozen = golden.join(name);
        if update {
            std::fs::create_dir_all(&golden).unwrap();
            std::fs::write(&frozen, &produced).unwrap();
            continue;
        }
        let expected =
            std::fs::read(&frozen).unwrap_or_else(|e| panic!("{}: {e}", frozen.display()));
        assert!(
            produced == expected,
            "{name} differs from {}",
            frozen.display()
        );
    }
}
