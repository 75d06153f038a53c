use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn phcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phcs")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, name: &str, seed: &str, extra: &[&str]) -> Output {
    let out = dir.join(name);
    let mut args = vec!["--seed", seed, "generate", "--out", path(&out)];
    args.extend_from_slice(extra);
    phcs(&args)
}

const CELL: [&str; 12] =
    ["--n", "30", "--m", "15", "--scheme", "(0^14,15)", "--t-max", "0.21", "--alpha", "0.5", "--beta", "1.5"];

#[test]
fn generate_writes_sample_with_case_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = generate(dir.path(), "s.csv", "1", &CELL);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(text.lines().any(|l| l == "# case=I" || l == "# case=II"));
    assert!(text.contains("index,failure_time,removals_applied"));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert!(manifest["version"].is_string());
}

#[test]
fn generate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate(dir.path(), "a.csv", "99", &CELL).status.success());
    assert!(generate(dir.path(), "b.csv", "99", &CELL).status.success());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_seed_is_drawn_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let mut args = vec!["generate", "--out", path(&out)];
    args.extend_from_slice(&CELL);
    assert!(phcs(&args).status.success());
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.csv.manifest.json")).unwrap()).unwrap();
    assert!(manifest["seed"].is_u64());
}

#[test]
fn unbalanced_scheme_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = CELL;
    bad[5] = "(0^14,14)";
    let o = generate(dir.path(), "s.csv", "1", &bad);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scheme balance"));
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn json_errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let mut args = vec!["--json-errors", "--seed", "1", "generate", "--out", path(&out)];
    let mut bad = CELL;
    bad[5] = "(0^14,14)";
    args.extend_from_slice(&bad);
    let o = phcs(&args);
    assert_eq!(o.status.code(), Some(2));
    let body: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(body["error"]["exit_code"], 2);
    assert_eq!(body["error"]["kind"], "SchemeBalance");
}

fn fit(data: &Path, method: &str, extra: &[&str]) -> Value {
    let mut args = vec!["--seed", "3", "fit", "--data", path(data), "--method", method];
    args.extend_from_slice(extra);
    let o = phcs(&args);
    assert!(o.status.success(), "{method}: {}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn complete_sample_nr_and_em_agree() {
    let dir = tempfile::tempdir().unwrap();
    let o = generate(
        dir.path(),
        "c.csv",
        "11",
        &["--n", "40", "--m", "40", "--scheme", "0^40", "--t-max", "1e9", "--alpha", "1", "--beta", "1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let data = dir.path().join("c.csv");
    let nr = fit(&data, "nr", &[]);
    let em = fit(&data, "em", &[]);
    for k in ["alpha", "beta"] {
        let (a, b) = (nr["estimate"][k].as_f64().unwrap(), em["estimate"][k].as_f64().unwrap());
        assert!((a - b).abs() < 1e-4, "{k}: nr {a} em {b}");
    }
    assert_eq!(nr["sample"]["case"], "I");
}

#[test]
fn every_method_returns_versioned_json() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate(dir.path(), "s.csv", "5", &CELL).status.success());
    let data = dir.path().join("s.csv");
    for method in ["nr", "em", "sem", "tk", "mcmc", "spt"] {
        let r = fit(&data, method, &["--mcmc-total", "1500", "--mcmc-burn", "500"]);
        assert_eq!(r["schema_version"], 1);
        assert_eq!(r["method"], method);
        assert!(r["estimate"]["alpha"].as_f64().unwrap() > 0.0);
        let kind = &r["intervals"]["kind"];
        match method {
            "nr" | "em" | "sem" => assert_eq!(kind, "asymptotic"),
            "mcmc" => assert_eq!(kind, "hpd"),
            _ => assert!(r["intervals"].is_null()),
        }
    }
}

#[test]
fn mcmc_chain_export_has_post_burn_rows() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate(dir.path(), "s.csv", "5", &CELL).status.success());
    let chain = dir.path().join("chain.csv");
    let out = dir.path().join("r.json");
    let o = phcs(&[
        "--seed", "3", "fit", "--data", path(&dir.path().join("s.csv")), "--method", "mcmc",
        "--mcmc-total", "1200", "--mcmc-burn", "200", "--chain-out", path(&chain), "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&chain).unwrap();
    assert_eq!(text.lines().count(), 1 + 1000);
    assert!(text.lines().nth(1).unwrap().starts_with("201,"));
    assert!(dir.path().join("r.json.manifest.json").exists());
}

#[test]
fn informative_prior_needs_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate(dir.path(), "s.csv", "5", &CELL).status.success());
    let o = phcs(&["fit", "--data", path(&dir.path().join("s.csv")), "--method", "tk", "--prior", "informative"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimator_failures_name_the_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    std::fs::write(
        &data,
        "# phcs-sample v1\n# n=5\n# m=3\n# t_max=1\n# case=II\n# r_t=4\nindex,failure_time,removals_applied\n1,0.5,0\n",
    )
    .unwrap();
    let o = phcs(&["fit", "--data", path(&data), "--method", "nr"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).starts_with("error: nr:"), "{}", stderr(&o));
}

#[test]
fn censor_applies_scheme_to_raw_data() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    let values: String = (1..=20).map(|i| format!("{}\n", 1.0 + 0.1 * i as f64)).collect();
    std::fs::write(&raw, format!("# test data\n{values}")).unwrap();
    let out = dir.path().join("s.csv");
    let o = phcs(&[
        "--seed", "2", "censor", "--data", path(&raw), "--shift", "1", "--m", "10", "--scheme",
        "(0^{m-1},n-m)", "--t-max", "5", "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# case=I\n"));
    assert!(text.contains("\n1,0.1"));
}

fn small_config(dir: &Path, reps: &str) -> std::path::PathBuf {
    let cfg = dir.join("grid.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 77\nreplications = {reps}\n[truth]\nalpha = 0.5\nbeta = 1.5\n[mcmc]\nn_total = 600\nn_burn = 100\n\
             [[cell]]\nname = \"small\"\nn = 20\nm = 10\nt_max = 0.5\nscheme = \"(0^{{m-1}},n-m)\"\n\
             estimators = [\"nr\", \"em\", \"tk:flat:sel\", \"mcmc:flat:sel\", \"spt:nr\"]\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn simulate_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "12");
    let run = |workers: &str, out: &str| {
        let o = phcs(&[
            "simulate", "--config", path(&cfg), "--workers", workers, "--out-dir", path(&dir.path().join(out)),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("small.csv")).unwrap()
    };
    assert_eq!(run("1", "w1"), run("8", "w8"));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("w1/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 77);
    assert_eq!(manifest["discards"][0]["replications"], 12);
}

#[test]
fn simulate_rejects_zero_replications() {
    let dir = tempfile::tempdir().unwrap();
    let o = phcs(&["simulate", "--config", "table1_cell1", "--reps", "0", "--out-dir", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replications"));

    let cfg = small_config(dir.path(), "0");
    let o = phcs(&["simulate", "--config", path(&cfg), "--out-dir", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replications"));
}

#[test]
fn simulate_reports_unknown_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\nreplicates = 3\n[truth]\nalpha = 1\nbeta = 1\n").unwrap();
    let o = phcs(&["simulate", "--config", path(&cfg), "--out-dir", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicates"), "{}", stderr(&o));
}

#[test]
fn hyperparameters_are_a_comma_list() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate(dir.path(), "s.csv", "5", &CELL).status.success());
    let data = dir.path().join("s.csv");
    let r = fit(&data, "tk", &["--prior", "informative", "--hyper", "43.77,83.45,24.24,15.47", "--loss", "gel=-0.5"]);
    assert!(r["estimate"]["beta"].as_f64().unwrap() > 0.0);
    let o = phcs(&["fit", "--data", path(&data), "--method", "tk", "--prior", "informative", "--hyper", "1,2,3"]);
    assert_eq!(o.status.code(), Some(2));
}
