use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn smlmc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smlmc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"
model = "diffusion"
eps = [0.05]
n_real = 2
methods = ["mlmc", "mc", "mlmc+kde", "smlmc+kde"]
strata = [4]
work_model = "deterministic"

[mesh]
l_star = 3

[reference]
compare = false
"#;

#[test]
fn dry_run_lists_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "model = \"diffusion\"\neps = [0.01]\nn_real = 2\nmethods = [\"mlmc\", \"mc\"]\n",
    )
    .unwrap();
    let out = smlmc(&["run", "--config", "c.toml", "--dry-run"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines,
        [
            "model,eps,run,seed,method",
            "diffusion,0.01,0,2024,mlmc",
            "diffusion,0.01,0,2024,mc",
            "diffusion,0.01,1,2025,mlmc",
            "diffusion,0.01,1,2025,mc",
        ]
    );
    assert!(!dir.path().join("out").exists());
}

#[test]
fn run_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = smlmc(&["run", "--config", "c.toml", "--out", out, "--plot-data"], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = dir.path().join("a");
    let reports = fs::read_dir(a.join("runs")).unwrap().count();
    assert_eq!(reports, 2 * 4);
    let table = fs::read_to_string(a.join("cost_table.csv")).unwrap();
    assert!(table.starts_with("eps,method,cost,saving_vs_mc,saving_vs_mlmc\n"));
    assert_eq!(table.lines().count(), 1 + 4);
    assert!(!table.contains('\r'));
    for file in ["cost_table.csv", "plot_data.csv", "cdf/smlmc+kde-r4_eps0.05_run001.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(dir.path().join("b").join(file)).unwrap(), "{file}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("runs/mc_eps0.05_run000.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "completed");
    assert_eq!(report["seed"], 2024);
}

#[test]
fn seed_override_changes_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let out = smlmc(&["run", "--preset", "burgers", "--seed", "7", "--dry-run"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("burgers,0.01,0,7,mlmc"));
    // 3 tolerances, 50 runs, 4 unstratified + 2 x 2 stratified methods
    assert_eq!(text.lines().count(), 1 + 3 * 50 * 8);
}

#[test]
fn invalid_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "model = \"diffusion\"\nepsilon = [0.01]\n").unwrap();
    let out = smlmc(&["run", "--config", "c.toml", "--dry-run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn inspect_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = smlmc(&["inspect", "giles-poly", "--degree", "3", "--points", "5"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    let coeffs: Vec<f64> = text
        .lines()
        .next()
        .unwrap()
        .trim_start_matches("# coefficients (ascending powers): ")
        .split(' ')
        .map(|c| c.parse().unwrap())
        .collect();
    for (c, e) in coeffs.iter().zip([0.5, -1.125, 0.0, 0.625, 0.0]) {
        assert!((c - e).abs() < 1e-12);
    }
    assert_eq!(text.lines().count(), 2 + 5);

    let out = smlmc(&["inspect", "strata", "--preset", "burgers", "--strata", "8"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    let probs: f64 = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((probs - 1.0).abs() < 1e-12);

    let out = smlmc(
        &["inspect", "solver-field", "--model", "burgers", "--input", "1.0", "--cells", "64"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2 + 64);
}
