//! End-to-end checks of the command-line contract: exit codes, input
//! validation, defaults, and the seed fallback.

mod common;

use std::path::Path;
use std::process::{Command, Output};
use trust_pomdp::cli::{EXIT_CONFIG, EXIT_DATA, EXIT_LIKELIHOOD};
use trust_pomdp::model::{
    trial_log_to_string, write_params_file, write_trial_log, Complexity, EnvConfig, Experience,
    HumanAction, ModelParams, RobotAction, TrialRecord,
};
use trust_pomdp::solver::PolicyFile;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trust-pomdp"))
        .current_dir(dir)
        .env_remove("TRUST_POMDP_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_reference(dir: &Path) {
    write_params_file(
        dir.join("params.json"),
        &ModelParams::reference(),
        &EnvConfig::reference(),
    )
    .unwrap();
}

#[test]
fn simulate_defaults_produce_the_study_protocol() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    let out = bin(
        dir.path(),
        &["simulate", "--params", "params.json", "--seed", "1", "--out", "log.jsonl"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    assert_eq!(body.lines().count(), 33 * 71);
    assert!(dir.path().join("log.jsonl.manifest.json").exists());
}

#[test]
fn simulate_zero_trials_writes_an_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    let out = bin(
        dir.path(),
        &[
            "simulate",
            "--params", "params.json",
            "--trials", "0",
            "--episodes", "3",
            "--seed", "2",
            "--out", "log.jsonl",
        ],
    );
    assert!(out.status.success());
    let body = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    assert!(body.is_empty());
}

#[test]
fn malformed_params_fail_with_config_code_and_location() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("params.json"), "{\"initial_trust_high\": }").unwrap();
    let out = bin(
        dir.path(),
        &["simulate", "--params", "params.json", "--out", "log.jsonl"],
    );
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line") || stderr.contains("column"), "{stderr}");
}

#[test]
fn invalid_probability_is_refused_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let reference = ModelParams::reference();
    let broken = ModelParams::new(
        1.2,
        |t, e, c, a| reference.trust_transition(t, e, c, a),
        |t, c, a| reference.observation(t, c, a),
    );
    write_params_file(dir.path().join("params.json"), &broken, &EnvConfig::reference()).unwrap();
    let out = bin(
        dir.path(),
        &["solve", "--params", "params.json", "--out", "policy.json"],
    );
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial_trust_high"));
    assert!(!dir.path().join("policy.json").exists());
}

#[test]
fn unknown_policy_spec_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    let out = bin(
        dir.path(),
        &[
            "evaluate",
            "--params", "params.json",
            "--policy-a", "bogus",
            "--policy-b", "always-auto",
            "--out", "report.json",
        ],
    );
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn fit_on_all_assist_data_reports_missing_contexts() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    let out = bin(
        dir.path(),
        &[
            "simulate",
            "--params", "params.json",
            "--policy", "always-assist",
            "--episodes", "4",
            "--trials", "20",
            "--seed", "3",
            "--out", "assist.jsonl",
        ],
    );
    assert!(out.status.success());
    let out = bin(
        dir.path(),
        &[
            "fit",
            "--log", "assist.jsonl",
            "--restarts", "1",
            "--max-iters", "10",
            "--seed", "1",
            "--out", "fitted.json",
        ],
    );
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("a=auto"), "{stderr}");
    // diagnostics are still written so the flags can be inspected
    assert!(dir.path().join("fitted.json.diagnostics.json").exists());
}

#[test]
fn filter_reports_zero_likelihood_with_location() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    // an impossible record: reliance during assistance
    let rec = TrialRecord {
        episode_id: 4,
        t: 2,
        complexity: Complexity::High,
        robot_action: RobotAction::SeekAssistance,
        human_action: HumanAction::Rely,
        experience: Experience::Reliable,
        reward: 1,
    };
    std::fs::write(
        dir.path().join("log.jsonl"),
        trial_log_to_string(&[vec![rec]]),
    )
    .unwrap();
    let out = bin(
        dir.path(),
        &["filter", "--params", "params.json", "--log", "log.jsonl", "--out", "beliefs.csv"],
    );
    assert_eq!(out.status.code(), Some(EXIT_LIKELIHOOD));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("episode 4") && stderr.contains("trial 2"), "{stderr}");
}

#[test]
fn solve_summary_names_the_threshold_shape() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    let out = bin(
        dir.path(),
        &["solve", "--params", "params.json", "--grid-bins", "101", "--out", "policy.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("C=low: autonomous for all beliefs"), "{stdout}");
    assert!(stdout.contains("C=high: autonomous for beliefs >= 0.7"), "{stdout}");

    let body = std::fs::read_to_string(dir.path().join("policy.json")).unwrap();
    let file: PolicyFile = serde_json::from_str(&body).unwrap();
    let policy = file.into_policy().unwrap();
    let threshold = policy.threshold(Complexity::High).unwrap();
    assert!((0.68..=0.78).contains(&threshold));
}

#[test]
fn filter_emits_one_row_per_time_point() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    let out = bin(
        dir.path(),
        &[
            "simulate",
            "--params", "params.json",
            "--episodes", "2",
            "--trials", "5",
            "--seed", "4",
            "--out", "log.jsonl",
        ],
    );
    assert!(out.status.success());
    let out = bin(
        dir.path(),
        &["filter", "--params", "params.json", "--log", "log.jsonl", "--out", "beliefs.csv"],
    );
    assert!(out.status.success());
    let body = std::fs::read_to_string(dir.path().join("beliefs.csv")).unwrap();
    // header + 2 episodes * (5 trials + prior)
    assert_eq!(body.lines().count(), 1 + 2 * 6);
    assert!(body.lines().next().unwrap().contains("episode_id,t,belief"));
    // the prior rows carry the initial trust probability
    assert!(body.lines().any(|l| l.starts_with("0,0,0.82")));
}

#[test]
fn filter_survey_column_uses_the_inverse_mapping() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    std::fs::write(
        dir.path().join("fit.json"),
        "{\"amplitude\":0.8849,\"slope\":1.184,\"center\":2.932,\"rss\":0.0,\"flat\":false}",
    )
    .unwrap();
    let records: Vec<TrialRecord> = (0..3)
        .map(|t| TrialRecord {
            episode_id: 0,
            t,
            complexity: Complexity::Low,
            robot_action: RobotAction::SeekAssistance,
            human_action: HumanAction::Interrupt,
            experience: Experience::Faulty,
            reward: 1,
        })
        .collect();
    write_trial_log(dir.path().join("log.jsonl"), &[records]).unwrap();
    let out = bin(
        dir.path(),
        &[
            "filter",
            "--params", "params.json",
            "--log", "log.jsonl",
            "--survey-map", "fit.json",
            "--out", "beliefs.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(dir.path().join("beliefs.csv")).unwrap();
    assert!(body.lines().next().unwrap().ends_with(",survey"));
    // belief stays at 0.82 under assistance in low complexity; the survey
    // score is the logistic inverse of 0.82
    let expected = 2.932 - (0.8849f64 / 0.82 - 1.0).ln() / 1.184;
    let line = body.lines().nth(1).unwrap();
    let survey: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
    assert!((survey - expected).abs() < 1e-9, "{line}");
}

#[test]
fn seed_env_var_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    let with_flag = bin(
        dir.path(),
        &[
            "simulate",
            "--params", "params.json",
            "--episodes", "2",
            "--trials", "8",
            "--seed", "99",
            "--out", "a.jsonl",
        ],
    );
    assert!(with_flag.status.success());
    let with_env = Command::new(env!("CARGO_BIN_EXE_trust-pomdp"))
        .current_dir(dir.path())
        .env("TRUST_POMDP_SEED", "99")
        .args([
            "simulate",
            "--params", "params.json",
            "--episodes", "2",
            "--trials", "8",
            "--out", "b.jsonl",
        ])
        .output()
        .unwrap();
    assert!(with_env.status.success());
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn evaluate_writes_report_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    let out = bin(
        dir.path(),
        &[
            "evaluate",
            "--params", "params.json",
            "--policy-a", "always-assist",
            "--policy-b", "always-auto",
            "--participants", "10",
            "--trials", "6",
            "--seed", "5",
            "--out", "report.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("t = ") && stdout.contains("p = "), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["n_participants"], 10);
    // every all-assist episode scores exactly +6
    assert_eq!(report["median_a"], 6.0);
    let samples = std::fs::read_to_string(dir.path().join("report.json.samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 20);
}

#[test]
fn uncertainty_emits_the_literal_column_on_request() {
    let dir = tempfile::tempdir().unwrap();
    write_reference(dir.path());
    let out = bin(
        dir.path(),
        &[
            "simulate",
            "--params", "params.json",
            "--episodes", "3",
            "--trials", "30",
            "--seed", "6",
            "--out", "log.jsonl",
        ],
    );
    assert!(out.status.success());
    let out = bin(
        dir.path(),
        &[
            "uncertainty",
            "--params", "params.json",
            "--log", "log.jsonl",
            "--allow-pseudo",
            "--literal-formula",
            "--out", "unc.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(dir.path().join("unc.csv")).unwrap();
    let header = body.lines().next().unwrap();
    assert!(header.starts_with("parameter,estimate,std_error,identifiable"));
    assert!(header.ends_with("literal_std_error"));
    // one row per stored probability
    assert_eq!(body.lines().count(), 1 + trust_pomdp::model::N_PARAMS);
}
