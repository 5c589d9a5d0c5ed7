use std::process::Command;

use ncim_core::metrics::Algorithm;
use ncim_sim::config::{Experiment, SimConfig, SweepParam, SweepSpec};
use ncim_sim::experiment::{run_experiment, write_csv, Row};

const HEADER: &str = "experiment,algorithm,sweep_param,sweep_value,trials,nmse_db_mean,ader_mean,ber_total_mean,avg_iterations,cm,ec,master_seed";

fn small(trials: usize) -> Experiment {
    Experiment {
        name: "small".into(),
        sweep: SweepSpec {
            param: SweepParam::L,
            values: vec![12.0, 16.0],
        },
        params: SimConfig {
            devices: 20,
            active: 2,
            antennas: 2,
            snr_db: 20.0,
            algorithms: vec![Algorithm::StfJabid, Algorithm::Somp],
            trials,
            extended_trials: 0,
            ..Default::default()
        },
    }
}

fn csv_bytes(rows: &[Row]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(rows, &mut out).unwrap();
    out
}

#[test]
fn one_row_per_point_and_algorithm() {
    let rows = run_experiment(&small(3)).unwrap();
    assert_eq!(rows.len(), 4);
    let text = String::from_utf8(csv_bytes(&rows)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    assert_eq!(lines.count(), 4);
    for r in &rows {
        assert_eq!(r.trials, 3);
        assert!((0.0..=1.0).contains(&r.ader_mean));
        assert!((0.0..=1.0).contains(&r.ber_total_mean));
        assert!(r.cm > 0.0);
    }
    assert_eq!(rows[0].algorithm, "stf_jabid");
    assert_eq!(rows[1].algorithm, "somp");
    assert_eq!(rows[2].sweep_value, 16.0);
}

#[test]
fn thread_count_does_not_change_output() {
    let exp = small(6);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| csv_bytes(&run_experiment(&exp).unwrap()))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn low_error_points_get_extra_trials() {
    let mut exp = small(2);
    exp.params.extended_trials = 5;
    exp.params.extend_below_ber = 1.01;
    let rows = run_experiment(&exp).unwrap();
    assert!(rows.iter().all(|r| r.trials == 5));
}

#[test]
fn invalid_points_are_rejected_before_running() {
    let mut exp = small(1);
    exp.params.active = 30;
    let err = run_experiment(&exp).unwrap_err().to_string();
    assert!(err.contains("Ka"), "{err}");
    let mut exp = small(1);
    exp.sweep.values = vec![16.0, 12.0];
    assert!(run_experiment(&exp).is_err());
}

#[test]
fn toml_rejects_unknown_keys() {
    let ok =
        "name = \"x\"\n[sweep]\nparam = \"snr_db\"\nvalues = [0, 5]\n[params]\nK = 10\nKa = 1\n";
    let exp = Experiment::from_toml(ok).unwrap();
    assert_eq!(exp.params.devices, 10);
    assert_eq!(exp.sweep.param, SweepParam::SnrDb);
    assert!(Experiment::from_toml(&ok.replace("Ka = 1", "Kb = 1")).is_err());
    assert!(Experiment::from_toml(&ok.replace("snr_db", "bandwidth")).is_err());
}

fn ncim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ncim"))
}

#[test]
fn cli_writes_identical_csvs_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(
        &cfg,
        "name = \"tiny\"\n[sweep]\nparam = \"L\"\nvalues = [16]\n[params]\nK = 20\nKa = 2\nM = 2\ntrials = 4\nextended_trials = 0\nalgorithms = [\"stf_jabid\", \"somp\"]\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = ncim()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads, "--seed", "7"])
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        outputs.push(std::fs::read(out.join("tiny.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text
        .lines()
        .all(|l| l.ends_with(",7") || l.starts_with("experiment")));
}

#[test]
fn cli_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--preset", "fig10"],
        vec!["run", "--preset", "fig5", "--algorithms", "nope"],
        vec![
            "run",
            "--preset",
            "fig5",
            "--algorithms",
            "gmmv_amp",
            "--trials",
            "1",
        ],
        vec!["run"],
    ] {
        let out = ncim()
            .args(&args)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}
