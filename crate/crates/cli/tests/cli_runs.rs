use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;
use ttslab::io::embedded_hash;
use ttslab_cli::config::validate_text;
use ttslab_cli::exec::{execute, load, Outcome, RunOptions};
use ttslab_cli::report::{render_dir, render_files};
use ttslab_cli::{parse_config, CheckStatus, CliError};

const MINIMAL: &str = r#"
model = "scalar-coupled"
[timescale]
a = 0.1
epsilon = 0.1
horizon = 1000
"#;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_into(cfg_text: &str, dir: &Path) -> ttslab_cli::RunReport {
    let cfg = parse_config(cfg_text).unwrap();
    execute(
        &cfg,
        &RunOptions {
            out_dir: Some(dir.to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap()
}

fn run_file(name: &str, dir: &Path) -> ttslab_cli::RunReport {
    let cfg = load(&config_path(name)).unwrap();
    execute(
        &cfg,
        &RunOptions {
            out_dir: Some(dir.to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap()
}

fn plot_series(dir: &Path) -> Vec<(String, String, String)> {
    let text = std::fs::read_to_string(dir.join("plot.csv")).unwrap();
    text.lines()
        .skip(2)
        .map(|l| {
            let mut it = l.splitn(3, ',');
            (
                it.next().unwrap().to_string(),
                it.next().unwrap().to_string(),
                it.next().unwrap().to_string(),
            )
        })
        .collect()
}

fn has_series(rows: &[(String, String, String)], name: &str) -> usize {
    rows.iter().filter(|r| r.0 == name).count()
}

fn ttslab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ttslab"))
}

#[test]
fn minimal_config_fills_defaults_and_echoes_b() {
    let echo = validate_text(MINIMAL).unwrap();
    assert!(echo.contains("\nb = 0.01\n"), "{echo}");
    assert!(echo.contains("mode = \"sgd\""));
    assert!(echo.contains("replicas = 1"));
    assert!(echo.contains("config_hash = "));
    let cfg = parse_config(MINIMAL).unwrap();
    let tcfg = cfg.timescale_config(None).unwrap();
    assert_eq!(tcfg.effective_stride(), 1);
    assert_eq!(tcfg.noise.sigma, 0.0);
}

#[test]
fn epsilon_outside_unit_interval_is_rejected() {
    let err = parse_config(&MINIMAL.replace("epsilon = 0.1", "epsilon = 1.5")).unwrap_err();
    assert!(matches!(&err, CliError::Config(m) if m.contains("0 < ε < 1")), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn misspelled_keys_fail_fast() {
    for bad in [
        MINIMAL.replace("horizon", "horizn"),
        format!("{MINIMAL}noise = {{ kind = \"gaussian-iid\", sigmaa = 0.1 }}\n"),
        format!("replica = 4\n{MINIMAL}"),
        format!("{MINIMAL}[detectors.segment]\nr_high = 5.0\n"),
    ] {
        assert!(matches!(parse_config(&bad), Err(CliError::Config(_))), "{bad}");
    }
    let sweep = format!("mode = \"sweep\"\n{MINIMAL}[sweep.grid]\nalpah = [0.1]\n");
    let err = parse_config(&sweep).unwrap_err();
    assert!(err.to_string().contains("alpah"));
}

#[test]
fn sweep_echo_lists_every_cell() {
    let text = format!("mode = \"sweep\"\nseed = 9\n{MINIMAL}[sweep.grid]\na = [0.01, 0.02]\nsigma = [0.1, 0.2]\n");
    let echo = validate_text(&text).unwrap();
    assert!(echo.contains("# plan: 4 runs"), "{echo}");
    assert_eq!(echo.matches("# cell ").count(), 4);
    assert!(echo.contains("# cell 3: a=0.02 sigma=0.2 seed="));
}

#[test]
fn noiseless_scalar_run_descends_without_events() {
    let dir = TempDir::new().unwrap();
    let rep = run_file("quickstart.toml", dir.path());
    assert_eq!(rep.exit_code(), 0);
    let Outcome::Sgd { trajectory, events, .. } = &rep.outcome else {
        panic!("wrong outcome");
    };
    assert!(trajectory.losses().windows(2).all(|w| w[1] <= w[0]));
    assert!(events.is_empty());
    let monotone = rep.checks.iter().find(|c| c.name == "monotone-loss").unwrap();
    assert_eq!(monotone.status, CheckStatus::Pass);
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("PASS  monotone-loss"));
    assert!(report.contains("phenomena: none"));
    assert!(report.contains("exit_code: 0"));

    let rows = plot_series(dir.path());
    assert_eq!(has_series(&rows, "loss"), 1000);
    for ev in ["plateau_span", "ascent_span", "spike", "valley_transition"] {
        assert_eq!(has_series(&rows, ev), 0);
    }
}

#[test]
fn compare_reports_windowed_deviation_under_bound() {
    let dir = TempDir::new().unwrap();
    let rep = run_file("compare_quadratic.toml", dir.path());
    assert_eq!(rep.exit_code(), 0);
    let text = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert_eq!(text.lines().nth(1), Some("window,t0,t1,sup_deviation"));
    let Outcome::Compare { windows } = &rep.outcome else {
        panic!("wrong outcome");
    };
    // horizon 4000 at a = 0.05 spans t = 200 in windows of 50
    assert_eq!(windows.len(), 3);
    assert!(windows.last().unwrap().sup_deviation <= 0.5);

    let tight = std::fs::read_to_string(config_path("compare_quadratic.toml"))
        .unwrap()
        .replace("bound = 0.5", "bound = 1e-9");
    let dir2 = TempDir::new().unwrap();
    assert_eq!(run_into(&tight, dir2.path()).exit_code(), 3);
}

#[test]
fn grokking_demo_plots_loss_regimes_and_plateau() {
    let dir = TempDir::new().unwrap();
    let rep = run_file("grokking.toml", dir.path());
    assert_eq!(rep.exit_code(), 0);
    let rows = plot_series(dir.path());
    assert!(has_series(&rows, "loss") > 0);
    assert!(has_series(&rows, "segment_boundary") >= 4);
    assert_eq!(has_series(&rows, "plateau_span"), 2);
}

#[test]
fn catapult_demo_plots_a_spike() {
    let dir = TempDir::new().unwrap();
    let rep = run_file("catapult.toml", dir.path());
    assert_eq!(rep.exit_code(), 0);
    assert!(has_series(&plot_series(dir.path()), "spike") >= 1);
}

#[test]
fn sweep_fits_square_root_jitter_law() {
    let dir = TempDir::new().unwrap();
    let rep = run_file("jitter_sweep.toml", dir.path());
    assert_eq!(rep.exit_code(), 0);
    let Outcome::Sweep { cells, jitter_fit } = &rep.outcome else {
        panic!("wrong outcome");
    };
    assert_eq!(cells.len(), 4);
    let slope = jitter_fit.unwrap().slope;
    assert!((0.4..=0.6).contains(&slope), "{slope}");
    for c in cells {
        assert!(dir
            .path()
            .join(format!("cells/cell_{:03}/ensemble.csv", c.cell.index))
            .is_file());
    }
    let fits = std::fs::read_to_string(dir.path().join("fits.csv")).unwrap();
    assert!(fits.contains("log_jitter_rms_vs_log_a,"));
}

#[test]
fn reruns_are_byte_identical() {
    let (d1, d2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let text = std::fs::read_to_string(config_path("catapult.toml")).unwrap();
    let r1 = run_into(&text, d1.path());
    let r2 = run_into(&text, d2.path());
    assert_eq!(r1.artifacts, r2.artifacts);
    for name in r1
        .artifacts
        .iter()
        .filter(|a| a.ends_with(".csv") || a.ends_with(".toml"))
    {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let strip = |d: &Path| -> String {
        std::fs::read_to_string(d.join("report.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("wall_time_seconds"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(d1.path()), strip(d2.path()));
}

#[test]
fn artifacts_embed_the_config_hash() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(config_path("grokking.toml")).unwrap();
    let rep = run_into(&text, dir.path());
    assert_eq!(rep.config_hash, parse_config(&text).unwrap().hash());
    for name in rep.artifacts.iter().filter(|a| a.ends_with(".csv")) {
        let body = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(embedded_hash(&body), Some(rep.config_hash.as_str()), "{name}");
    }
    // a different seed is a different configuration
    let other = parse_config(&text.replace("seed = 3", "seed = 4")).unwrap();
    assert_ne!(other.hash(), rep.config_hash);

    // tampering with one artifact is detected when re-rendering
    let seg = dir.path().join("segments.csv");
    let body = std::fs::read_to_string(&seg).unwrap();
    std::fs::write(&seg, body.replacen(&rep.config_hash, &"0".repeat(64), 1)).unwrap();
    let err = render_dir(dir.path()).unwrap_err();
    assert!(err.to_string().contains("differs"), "{err}");
}

#[test]
fn rendering_needs_artifacts() {
    let dir = TempDir::new().unwrap();
    let err = render_files(dir.path(), &[]).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn seed_override_changes_noisy_runs_only_through_the_seed() {
    let text = std::fs::read_to_string(config_path("catapult.toml")).unwrap();
    let cfg = parse_config(&text).unwrap();
    let (d1, d2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let opts = |d: &TempDir, seed| RunOptions {
        out_dir: Some(d.path().to_path_buf()),
        seed,
        strict: false,
    };
    let r1 = execute(&cfg, &opts(&d1, Some(99))).unwrap();
    let r2 = execute(
        &parse_config(&text.replace("seed = 1", "seed = 99")).unwrap(),
        &opts(&d2, None),
    )
    .unwrap();
    assert_eq!(r1.seed, 99);
    assert_eq!(r1.config_hash, r2.config_hash);
    assert_eq!(
        std::fs::read(d1.path().join("trajectory.csv")).unwrap(),
        std::fs::read(d2.path().join("trajectory.csv")).unwrap()
    );
}

#[test]
fn strict_promotes_failed_informational_checks() {
    // one coordinate cannot reach the target; that check is informational
    let text = r#"
mode = "dominance"
[dominance]
p_max = 1
eps_target = 0.001
space = { base = { kind = "unit-interval" }, n = 4 }
function = { kind = "linear", coords = [0, 1], weights = [1.0, 1.0] }
budget = { n_outer = 256, n_inner = 16 }
"#;
    let cfg = parse_config(text).unwrap();
    let d = TempDir::new().unwrap();
    let lax = execute(
        &cfg,
        &RunOptions {
            out_dir: Some(d.path().to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(lax.exit_code(), 0);
    let strict = execute(
        &cfg,
        &RunOptions {
            out_dir: Some(d.path().to_path_buf()),
            strict: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(strict.exit_code(), 3);
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let ok = write("ok.toml", MINIMAL);
    let out = ttslab().arg("validate").arg(&ok).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("b = 0.01"));

    let bad = write("bad.toml", &MINIMAL.replace("epsilon = 0.1", "epsilon = 1.5"));
    let out = ttslab().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0 < ε < 1"));

    // a·κ = 5 with constant curvature: the fast block blows up
    let blowup = write(
        "blowup.toml",
        "[model]\nname = \"pinched-valley\"\nparams = { kappa = 50.0 }\n[timescale]\na = 0.1\nepsilon = 0.1\nhorizon = 5000\n[init]\nx = [1.0]\n",
    );
    let run_dir = dir.path().join("blowup");
    let out = ttslab()
        .arg("run")
        .arg(&blowup)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(std::fs::read_to_string(run_dir.join("report.txt"))
        .unwrap()
        .contains("status: diverged"));

    let run_dir = dir.path().join("ok");
    let out = ttslab()
        .args(["run", "--workers", "1"])
        .arg(&ok)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    std::fs::remove_file(run_dir.join("plot.csv")).unwrap();
    let out = ttslab().arg("report").arg(&run_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(run_dir.join("plot.csv").is_file());

    let out = ttslab().arg("report").arg(dir.path().join("missing")).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    let out = ttslab()
        .arg("run")
        .arg(dir.path().join("missing.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}
