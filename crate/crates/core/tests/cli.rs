//! End-to-end runs of the `kernel-spectra` binary on small MNIST subsets.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kernel_spectra::cli::{self, ExperimentConfig};
use kernel_spectra::container::Container;
use kernel_spectra::embed::Embedding;
use kernel_spectra::Exec;

fn mnist_dir() -> PathBuf {
    std::env::var_os("KSPECTRA_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| "/root/data/mnist".into())
}

fn dataset_section(per_class: usize) -> String {
    format!(
        "[dataset]\nname = \"mnist\"\npath = \"{}\"\nclasses = [0, 1]\nper_class = {per_class}\ntest_per_class = 20\n",
        mnist_dir().display()
    )
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernel-spectra"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn error(o: &Output) -> serde_json::Value {
    assert!(!o.status.success());
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gram_outputs_are_normalized_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.toml", &format!("seed = 2\n{}", dataset_section(25)));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run("gram", &cfg, &a, &["--threads", "1"]));
    ok(&run("gram", &cfg, &b, &["--threads", "4"]));

    let proj = std::fs::read_to_string(a.join("projections.csv")).unwrap();
    let mut lines = proj.lines();
    assert_eq!(lines.next().unwrap(), "index,eigenvalue,projection,cumulative");
    let last: f64 = lines.last().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((last - 1.0).abs() <= 1e-10);
    let measures = json(&a.join("measures.json"));
    assert!(measures["generalization_measure"].as_f64().unwrap() > 0.0);
    assert!((measures["trace"].as_f64().unwrap() - 25.0).abs() < 1e-9);

    for f in ["spectrum.csv", "projections.csv", "measures.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_with_zero_steps_and_manifest_echo() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("seed = 4\n{}[train]\nwidth = 32\nsteps = 0\n", dataset_section(10));
    let cfg = write_config(dir.path(), "t.toml", &body);
    let out = dir.path().join("o");
    ok(&run("train", &cfg, &out, &["--seed", "9"]));
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = traj.lines().collect();
    assert_eq!(lines[0], "step,train_loss,test_loss,test_accuracy");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,"));

    let manifest = json(&out.join("manifest.json"));
    let mut expected = ExperimentConfig::from_toml(&body).unwrap();
    expected.seed = 9;
    assert_eq!(manifest["config"], serde_json::to_value(&expected).unwrap());
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["status"], "ok");
    for key in ["seed", "dataset", "embedding", "gram", "train"] {
        assert!(manifest["config"].get(key).is_some(), "{key}");
    }
    assert!(json(&out.join("timing.json"))["wall_seconds"].as_f64().is_some());
}

#[test]
fn divergence_is_recorded_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{}[train]\nwidth = 16\ninit_scale = 1.0\neta = 1e200\nsteps = 50\nrecord_every = 1\n", dataset_section(10));
    let cfg = write_config(dir.path(), "d.toml", &body);
    let out = dir.path().join("o");
    let e = error(&run("train", &cfg, &out, &[]));
    assert_eq!(e["error"]["kind"], "divergence");
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "diverged");
    assert!(manifest["failing_step"].as_u64().is_some());
}

#[test]
fn compare_rows_and_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{}[train]\nwidth = 16\neta = 1e-2\nsteps = 5\n\
         [[compare]]\nkind = \"rff\"\ngamma = 1.0\ndim = 64\n\
         [[compare]]\nkind = \"rff\"\ngamma = 1.0\ndim = 64\n\
         [[compare]]\nkind = \"nystrom\"\nkernel = {{ type = \"gaussian\", gamma = 1.0 }}\ndim = 500\n",
        dataset_section(15)
    );
    let cfg = write_config(dir.path(), "c.toml", &body);
    let out = dir.path().join("o");
    ok(&run("compare", &cfg, &out, &[]));
    let table = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    let strip = |r: &str| r.split_once(',').unwrap().1.to_owned();
    assert_eq!(strip(rows[1]), strip(rows[2]));
    assert!(rows[3].contains(",failed,"), "{}", rows[3]);

    let ranking = json(&out.join("ranking.json"));
    assert_eq!(ranking["by_generalization_measure"].as_array().unwrap().len(), 2);
    assert_eq!(ranking["failed"][0]["index"], 2);
    assert_eq!(ranking["failed"][0]["kind"], "size");
}

#[test]
fn compare_needs_two_entries() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{}[[compare]]\nkind = \"identity\"\n", dataset_section(5));
    let cfg = write_config(dir.path(), "c.toml", &body);
    let e = error(&run("compare", &cfg, &dir.path().join("o"), &[]));
    assert_eq!(e["error"]["kind"], "precondition");
}

#[test]
fn bad_inputs_exit_nonzero_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &format!("{}colour = 3\n", dataset_section(5)));
    assert_eq!(error(&run("gram", &cfg, &dir.path().join("o"), &[]))["error"]["kind"], "config");

    let missing = dir.path().join("nope.toml");
    assert_eq!(error(&run("gram", &missing, &dir.path().join("o"), &[]))["error"]["kind"], "io");

    let cfg = write_config(
        dir.path(),
        "neg.toml",
        &format!("{}[embedding]\nkind = \"rff\"\ngamma = -1.0\ndim = 8\n", dataset_section(5)),
    );
    assert_eq!(error(&run("gram", &cfg, &dir.path().join("o"), &[]))["error"]["kind"], "config");

    let o = Command::new(env!("CARGO_BIN_EXE_kernel-spectra")).arg("gram").output().unwrap();
    assert_eq!(error(&o)["error"]["kind"], "usage");
}

#[test]
fn embed_container_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("seed = 6\n{}[embedding]\nkind = \"rff\"\ngamma = 1.0\ndim = 1024\n", dataset_section(10));
    let cfg_path = write_config(dir.path(), "e.toml", &body);
    let out = dir.path().join("o");
    ok(&run("embed", &cfg_path, &out, &[]));
    let container = Container::read(out.join("embedding.bin")).unwrap();
    assert_eq!(container.parameter_count(), 1024 * 784 + 1024);
    assert_eq!(json(&out.join("embedding.json"))["parameter_count"], 1024 * 784 + 1024);

    let cfg = ExperimentConfig::from_toml(&body).unwrap();
    let task = cli::load_task(&cfg.dataset, cfg.seed).unwrap();
    let built = cli::prepare(&cfg.embedding, &task, &cfg.dataset, cfg.seed, Exec::Parallel).unwrap();
    let loaded = Embedding::load(out.join("embedding.bin")).unwrap();
    let rows = task.train.features().view();
    assert_eq!(
        built.embedding.apply_rows(rows, Exec::Parallel).unwrap(),
        loaded.apply_rows(rows, Exec::Parallel).unwrap()
    );
}

#[test]
fn pretrained_containers_feed_training() {
    let dir = tempfile::tempdir().unwrap();
    let mut losses = Vec::new();
    for epochs in [0, 5] {
        let body = format!(
            "seed = 1\n{}[embedding]\nkind = \"neural\"\nsource = \"same_half\"\nhidden1 = 32\nhidden2 = 16\neta = 5e-3\nepochs = {epochs}\ninit_scale = 0.05\n",
            dataset_section(20)
        );
        let out = dir.path().join(format!("e{epochs}"));
        ok(&run("embed", &write_config(dir.path(), "n.toml", &body), &out, &[]));
        let summary = json(&out.join("embedding.json"));
        assert_eq!(summary["pretrain"]["epochs"], epochs);
        assert_eq!(summary["pretrain"]["rows"], 20);

        let body = format!(
            "{}[embedding]\nkind = \"file\"\npath = \"{}\"\n[train]\nwidth = 16\nsteps = 3\n",
            dataset_section(20),
            out.join("embedding.bin").display()
        );
        let tout = dir.path().join(format!("t{epochs}"));
        ok(&run("train", &write_config(dir.path(), "f.toml", &body), &tout, &[]));
        losses.push(json(&tout.join("manifest.json"))["final"]["train_loss"].as_f64().unwrap());
    }
    assert!(losses.iter().all(|l| l.is_finite()));

    let body = format!(
        "{}[embedding]\nkind = \"file\"\npath = \"{}\"\n",
        dataset_section(5),
        dir.path().join("missing.bin").display()
    );
    let e = error(&run("gram", &write_config(dir.path(), "m.toml", &body), &dir.path().join("x"), &[]));
    assert_eq!(e["error"]["kind"], "io");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 4);
}
