//! End-to-end acceptance: the fitness→success trend on the shipped
//! front-grasp scenario and the gated trajectory report on the shipped
//! pouring scenario, both driven through the CLI binary.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ikseed() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ikseed"))
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("spawn ikseed");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Copies a shipped scenario into `dir`, pointing its robot/map paths at
/// the shipped model and freshly built maps.
fn patch_scenario(name: &str, dir: &Path, maps: &[(&str, &Path)]) -> PathBuf {
    let root = repo_root();
    let mut value: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root.join("scenarios").join(name)).unwrap(),
    )
    .unwrap();
    value["robot"] = serde_json::json!(root
        .join("models/seednoid_like.json")
        .display()
        .to_string());
    for (arm, path) in maps {
        value["maps"][arm] = serde_json::json!(path.display().to_string());
    }
    let out = dir.join(name);
    std::fs::write(&out, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    out
}

fn build_map(arm: &str, out: &Path) {
    run_ok(ikseed()
        .arg("build-map")
        .arg("--model")
        .arg(repo_root().join("models/seednoid_like.json"))
        .arg("--arm")
        .arg(arm)
        .arg("--interval")
        .arg("0.157")
        .arg("--out")
        .arg(out));
}

#[derive(Debug)]
struct ReportRow {
    label: String,
    total_ratio: f64,
}

fn read_report(dir: &Path) -> (Vec<ReportRow>, Option<f64>, serde_json::Value) {
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let rows = value["reports"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| ReportRow {
            label: r["label"].as_str().unwrap().to_string(),
            total_ratio: r["total_ratio"].as_f64().unwrap(),
        })
        .collect();
    let spearman = value["trend"]["spearman"].as_f64();
    (rows, spearman, value)
}

/// 9: seeds snapshotted at an early, a mid and the best generation must
/// show a non-negative best-vs-early gap and a positive fitness/success
/// rank correlation under the ±7 cm / ±5° perturbation protocol, with the
/// whole pipeline finishing inside 30 minutes.
#[test]
fn criterion_09_fitness_success_trend() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let map_path = tmp.path().join("right_arm.rmap");
    build_map("right", &map_path);
    let scenario = patch_scenario("front_grasp.json", tmp.path(), &[("right", &map_path)]);

    let run_dir = tmp.path().join("run");
    run_ok(ikseed()
        .arg("gen-seed")
        .arg("--scenario")
        .arg(&scenario)
        .arg("--out")
        .arg(&run_dir)
        .arg("--snapshot")
        .arg("1")
        .arg("--snapshot")
        .arg("25")
        .arg("--snapshot")
        .arg("100"));

    let eval_dir = tmp.path().join("eval");
    let seeds = format!(
        "{},{},{},{}",
        run_dir.join("seed_gen1.json").display(),
        run_dir.join("seed_gen25.json").display(),
        run_dir.join("seed_gen100.json").display(),
        run_dir.join("seed_best.json").display(),
    );
    run_ok(ikseed()
        .arg("evaluate")
        .arg("--scenario")
        .arg(&scenario)
        .arg("--seeds")
        .arg(&seeds)
        .arg("--trials")
        .arg("100")
        .arg("--pos-range")
        .arg("0.07")
        .arg("--ori-range")
        .arg("0.08726646259971647") // 5°
        .arg("--rng-seed")
        .arg("5")
        .arg("--out")
        .arg(&eval_dir));

    let (rows, spearman, _) = read_report(&eval_dir);
    let ratio = |label: &str| {
        rows.iter()
            .find(|r| r.label == label)
            .unwrap_or_else(|| panic!("report for {label}"))
            .total_ratio
    };
    let early = ratio("gen1");
    let best = ratio("best");
    assert!(
        best >= early,
        "(a) best-generation ratio {best} must be ≥ early-generation ratio {early}"
    );
    let rho = spearman.expect("≥ 3 distinct snapshots give a defined rank correlation");
    assert!(rho > 0.0, "(b) Spearman must be positive, got {rho}");
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 1800,
        "(c) pipeline took {elapsed:?}, budget is 30 minutes"
    );
    println!(
        "ACCEPTANCE 9 PASS: early {:.1}% ≤ best {:.1}%, spearman {rho:.2}, wall {elapsed:?}",
        early * 100.0,
        best * 100.0
    );
}

/// 10: the 13-via-point dual-arm trajectory with seeds at {0,4,8,12} —
/// per-step denominators equal the prior step's numerators (gating), and
/// the zero-perturbation control passes every step with the best seeds.
#[test]
fn criterion_10_trajectory_gating() {
    let tmp = tempfile::tempdir().unwrap();
    let left = tmp.path().join("left_arm.rmap");
    let right = tmp.path().join("right_arm.rmap");
    build_map("left", &left);
    build_map("right", &right);
    let scenario = patch_scenario(
        "pouring.json",
        tmp.path(),
        &[("left", &left), ("right", &right)],
    );

    let run_dir = tmp.path().join("run");
    run_ok(ikseed()
        .arg("gen-seed")
        .arg("--scenario")
        .arg(&scenario)
        .arg("--out")
        .arg(&run_dir)
        .arg("--snapshot")
        .arg("1"));

    // Seeds land on the via-points the scenario marks as goals.
    let best: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("seed_best.json")).unwrap(),
    )
    .unwrap();
    let seeded: Vec<u64> = best["goals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["via_index"].as_u64().unwrap())
        .collect();
    assert_eq!(seeded, vec![0, 4, 8, 12]);

    // Zero-perturbation control: the best seed set must clear all 13 steps
    // in every trial.
    let ctrl_dir = tmp.path().join("ctrl");
    run_ok(ikseed()
        .arg("evaluate")
        .arg("--scenario")
        .arg(&scenario)
        .arg("--seeds")
        .arg(run_dir.join("seed_best.json"))
        .arg("--trials")
        .arg("20")
        .arg("--pos-range")
        .arg("0")
        .arg("--ori-range")
        .arg("0")
        .arg("--rng-seed")
        .arg("1")
        .arg("--out")
        .arg(&ctrl_dir));
    let (_, _, ctrl) = read_report(&ctrl_dir);
    let steps = ctrl["reports"][0]["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 13);
    for step in steps {
        assert_eq!(
            step["attempts"], step["successes"],
            "zero-perturbation control must pass step {}",
            step["via_index"]
        );
        assert_eq!(step["attempts"].as_u64().unwrap(), 20);
    }

    // Perturbed run (±3 cm position, the pouring protocol): gated
    // denominators.
    let eval_dir = tmp.path().join("eval");
    run_ok(ikseed()
        .arg("evaluate")
        .arg("--scenario")
        .arg(&scenario)
        .arg("--seeds")
        .arg(format!(
            "{},{}",
            run_dir.join("seed_gen1.json").display(),
            run_dir.join("seed_best.json").display()
        ))
        .arg("--trials")
        .arg("100")
        .arg("--pos-range")
        .arg("0.03")
        .arg("--ori-range")
        .arg("0")
        .arg("--rng-seed")
        .arg("2")
        .arg("--out")
        .arg(&eval_dir));
    let (_, _, value) = read_report(&eval_dir);
    for report in value["reports"].as_array().unwrap() {
        let steps = report["steps"].as_array().unwrap();
        assert_eq!(steps[0]["attempts"].as_u64().unwrap(), 100);
        for pair in steps.windows(2) {
            assert_eq!(
                pair[1]["attempts"], pair[0]["successes"],
                "step denominators must equal the prior step's numerators"
            );
        }
        let total: u64 = steps.iter().map(|s| s["attempts"].as_u64().unwrap()).sum();
        assert_eq!(total, report["total_attempts"].as_u64().unwrap());
    }
    println!("ACCEPTANCE 10 PASS: gated 13-step report; zero-perturbation control 100%");
}
