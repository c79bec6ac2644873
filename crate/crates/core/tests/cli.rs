use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};

const SMALL: &str = r#"
seed = 3
hidden_dims = [16, 16]
teacher_steps = 150
teacher_batch = 64
distill_steps = 20
batch = 32
trajectory_steps = 4
r_warmup = 5
eval_every = 10
eval_samples = 256
eval_projections = 32
sample_count = 64
noise_probes = 16
noise_steps = 8
baseline_steps = 8
ablate_seeds = [0, 1]
"#;

struct Lab {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn lab() -> Lab {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("run.toml");
    std::fs::write(&config, SMALL).unwrap();
    Lab { _dir: dir, root, config }
}

impl Lab {
    fn run(&self, args: &[&str]) -> std::process::Output {
        Command::new(env!("CARGO_BIN_EXE_cmlab"))
            .args(args)
            .arg("--config")
            .arg(&self.config)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    fn out(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_runs_end_to_end() {
    let lab = lab();
    let out = lab.out("run");
    lab.ok(&["train-teacher", "--out", &out]);
    let dir = PathBuf::from(&out);
    assert!(dir.join("teacher.params").exists());
    assert!(dir.join("teacher.toml").exists());
    assert!(dir.join("teacher_loss.csv").exists());

    lab.ok(&["distill", "--out", &out, "--mode", "tbcm", "--dump-trajectories"]);
    let (header, rows) = csv_rows(&dir.join("metrics_tbcm.csv"));
    assert_eq!(header.join(","), cmlab::distill::METRICS_HEADER);
    assert_eq!(rows.len(), 20);
    let (traj_header, traj_rows) = csv_rows(&dir.join("trajectories_tbcm.csv"));
    assert_eq!(traj_header.join(","), "prompt,condition,step,t,x0,x1,v0,v1,keep");
    assert_eq!(traj_rows.len(), 32);
    let m = manifest(&dir.join("manifest_distill_tbcm.json"));
    assert_eq!(m["counters"]["data_encoder_calls"], 0);
    assert_eq!(m["counters"]["optimizer_samples"], 640);
    assert_eq!(m["counters"]["cond_embeds"], 160);

    lab.ok(&["distill", "--out", &out, "--mode", "scm"]);
    let m = manifest(&dir.join("manifest_distill_scm.json"));
    assert_eq!(m["counters"]["data_encoder_calls"], 640);
    assert_eq!(m["counters"]["cond_embeds"], 640);

    lab.ok(&["sample", "--out", &out, "--steps", "4"]);
    let (header, rows) = csv_rows(&dir.join("samples_4step.csv"));
    assert_eq!(header.join(","), "sample_id,x,y,condition");
    assert_eq!(rows.len(), 64);
    let m = manifest(&dir.join("manifest_sample_4step.json"));
    assert_eq!(m["nfe_per_sample"], 4);
    lab.ok(&["sample", "--out", &out]);
    assert_eq!(manifest(&dir.join("manifest_sample_1step.json"))["nfe_per_sample"], 1);

    lab.ok(&["analyze-noise", "--out", &out]);
    let (header, rows) = csv_rows(&dir.join("noise_curve.csv"));
    assert_eq!(header.join(","), "t,backward_similarity,forward_similarity");
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0][1], "1.0");
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() >= 1.0 - 1e-12));

    lab.ok(&["eval", "--out", &out, "--mode", "tbcm"]);
    let (header, rows) = csv_rows(&dir.join("eval_tbcm.csv"));
    assert_eq!(header.join(","), "run_id,steps,metric,value");
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn eval_does_not_touch_checkpoints() {
    let lab = lab();
    let out = lab.out("ro");
    lab.ok(&["distill", "--out", &out]);
    let dir = PathBuf::from(&out);
    let files = ["teacher.params", "teacher.toml", "student_tbcm.params", "student_tbcm.toml"];
    let before: Vec<_> = files.iter().map(|f| digest(&dir.join(f))).collect();
    lab.ok(&["eval", "--out", &out]);
    lab.ok(&["sample", "--out", &out, "--steps", "2"]);
    let after: Vec<_> = files.iter().map(|f| digest(&dir.join(f))).collect();
    assert_eq!(before, after);
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let lab = lab();
    let (a, b, c) = (lab.out("a"), lab.out("b"), lab.out("c"));
    lab.ok(&["distill", "--out", &a]);
    lab.ok(&["distill", "--out", &b]);
    lab.ok(&["distill", "--out", &c, "--seed", "4"]);
    for f in ["teacher.params", "student_tbcm.params", "metrics_tbcm.csv", "teacher_loss.csv"] {
        assert_eq!(digest(&Path::new(&a).join(f)), digest(&Path::new(&b).join(f)), "{f}");
    }
    assert_ne!(
        digest(&Path::new(&a).join("student_tbcm.params")),
        digest(&Path::new(&c).join("student_tbcm.params"))
    );
}

#[test]
fn ablate_writes_runs_and_summary() {
    let lab = lab();
    let out = lab.out("abl");
    lab.ok(&["ablate", "--out", &out, "--grid", "mode"]);
    let dir = PathBuf::from(&out);
    let (_, runs) = csv_rows(&dir.join("ablation_mode_runs.csv"));
    assert_eq!(runs.len(), 4);
    let (_, summary) = csv_rows(&dir.join("ablation_mode_summary.csv"));
    assert_eq!(summary.len(), 2);
}

#[test]
fn bad_invocations_exit_with_usage_code() {
    let lab = lab();
    let missing = Command::new(env!("CARGO_BIN_EXE_cmlab"))
        .args(["eval", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let unknown = Command::new(env!("CARGO_BIN_EXE_cmlab")).arg("frobnicate").output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));
    let out = lab.out("bad");
    assert_eq!(lab.run(&["distill", "--out", &out, "--mode", "gan"]).status.code(), Some(2));
    assert_eq!(lab.run(&["ablate", "--out", &out, "--grid", "colour"]).status.code(), Some(2));
    std::fs::write(&lab.config, "bogus_key = 1\n").unwrap();
    assert_eq!(lab.run(&["train-teacher", "--out", &out]).status.code(), Some(2));
    let no_student = lab_with_teacher_only();
    assert_eq!(no_student.0.status.code(), Some(1));
}

fn lab_with_teacher_only() -> (std::process::Output, Lab) {
    let lab = lab();
    let out = lab.out("t");
    lab.ok(&["train-teacher", "--out", &out]);
    (lab.run(&["sample", "--out", &out]), lab)
}
