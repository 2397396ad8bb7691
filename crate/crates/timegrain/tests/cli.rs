//! Integration coverage for the command layer: the analyze outputs, the
//! config error paths and their exit codes, and loading delimited files
//! through a full command run.

use std::path::PathBuf;

use timegrain::cli::{cmd_analyze, run, Command};
use timegrain::config::RunConfig;
use timegrain::error::Error;

fn analyze_config(dir: &std::path::Path, n_datasets: usize) -> RunConfig {
    let mut toml = format!("seed = 3\nout_dir = \"{}\"\n", dir.join("out").display());
    let bands = [(40.0, 1.2), (6.0, 0.8)];
    for i in 0..n_datasets {
        toml.push_str(&format!(
            r#"
[[datasets]]
[datasets.synthetic]
name = "class{i}"
channels = 2
len = 512
components = [{{ period = {}, amplitude = {} }}]
noise_sigma = 0.05
granularity = [0, 0, 15, 0, 0]
"#,
            bands[i % 2].0,
            bands[i % 2].1
        ));
    }
    toml::from_str::<RunConfig>(&toml).unwrap().resolve()
}

#[test]
fn analyze_writes_grids_and_distance_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = analyze_config(dir.path(), 2);
    cfg.write_resolved().unwrap();
    cmd_analyze(&cfg).unwrap();
    // two datasets x two modes -> 4 grid files, plus one matrix per mode
    for name in [
        "density_class0_amplitude.tsv",
        "density_class1_amplitude.tsv",
        "density_class0_phase.tsv",
        "density_class1_phase.tsv",
    ] {
        let path = cfg.out_dir.join(name);
        assert!(path.exists(), "missing {name}");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# label\t"));
        assert!(text.contains("# bandwidth\t"));
    }
    for mode in ["amplitude", "phase"] {
        let text =
            std::fs::read_to_string(cfg.out_dir.join(format!("distance_matrix_{mode}.tsv")))
                .unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 3); // header + 2 rows
        // diagonal is zero, off-diagonal strictly positive
        let row1: Vec<&str> = rows[1].split('\t').collect();
        assert_eq!(row1[1].parse::<f64>().unwrap(), 0.0);
        assert!(row1[2].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn analyze_single_dataset_gives_zero_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = analyze_config(dir.path(), 1);
    cfg.write_resolved().unwrap();
    cmd_analyze(&cfg).unwrap();
    let text = std::fs::read_to_string(cfg.out_dir.join("distance_matrix_amplitude.tsv"))
        .unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].split('\t').nth(1).unwrap().parse::<f64>().unwrap(), 0.0);
}

#[test]
fn analyze_without_datasets_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let toml = format!("seed = 1\nout_dir = \"{}\"\n", dir.path().join("o").display());
    let cfg: RunConfig = toml::from_str(&toml).unwrap();
    let err = cmd_analyze(&cfg.resolve()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn unknown_config_key_maps_to_usage_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = 1\nsurprise_key = true\n").unwrap();
    let err = run(Command::Pretrain, &path, None, None).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn missing_checkpoint_is_reported_before_running_a_task() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        format!(
            r#"
seed = 1
out_dir = "{}"
[[datasets]]
[datasets.synthetic]
channels = 1
len = 256
components = [{{ period = 32.0, amplitude = 1.0 }}]
"#,
            dir.path().join("out").display()
        ),
    )
    .unwrap();
    let err = run(Command::Forecast, &path, None, None).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("checkpoint"), "{err}");
}

#[test]
fn resume_continues_from_the_saved_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("first");
    let out2 = dir.path().join("resumed");
    let base = format!(
        r#"
seed = 9
out_dir = "{}"
RESUME
[model]
d_model = 16
n_layers = 1
patch_len = 4
n_heads = 2
d_fk = 8
max_pos = 64
max_span = 16

[train]
max_steps = 20
epochs = 20
window_len = 32
window_stride = 16

[[datasets]]
[datasets.synthetic]
channels = 1
len = 1024
components = [{{ period = 32.0, amplitude = 1.0 }}]
noise_sigma = 0.1
"#,
        out1.display()
    );
    let p1 = dir.path().join("first.toml");
    std::fs::write(&p1, base.replace("RESUME\n", "")).unwrap();
    run(Command::Pretrain, &p1, None, None).unwrap();
    let report1 = std::fs::read_to_string(out1.join("training_summary.tsv")).unwrap();
    let final1: f64 = report1
        .lines()
        .find(|l| l.starts_with("final_val_loss"))
        .and_then(|l| l.split('\t').nth(1))
        .unwrap()
        .parse()
        .unwrap();

    let p2 = dir.path().join("resumed.toml");
    let resumed_cfg = base
        .replace(&out1.display().to_string(), &out2.display().to_string())
        .replace(
            "RESUME\n",
            &format!("resume = \"{}\"\n", out1.join("checkpoint.json").display()),
        );
    std::fs::write(&p2, resumed_cfg).unwrap();
    run(Command::Pretrain, &p2, None, None).unwrap();
    let report2 = std::fs::read_to_string(out2.join("training_summary.tsv")).unwrap();
    let initial2: f64 = report2
        .lines()
        .find(|l| l.starts_with("initial_val_loss"))
        .and_then(|l| l.split('\t').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    // the resumed run starts where the first one ended, not from scratch
    assert!(
        (initial2 - final1).abs() / final1.max(1e-9) < 1e-6,
        "resumed initial {initial2} vs previous final {final1}"
    );
}

#[test]
fn exit_code_taxonomy() {
    assert_eq!(Error::Config("x".into()).exit_code(), 1);
    assert_eq!(Error::Incompatible("x".into()).exit_code(), 1);
    assert_eq!(Error::Data("x".into()).exit_code(), 2);
    assert_eq!(Error::Numeric("x".into()).exit_code(), 3);
    assert_eq!(Error::Dimension("x".into()).exit_code(), 3);
}

#[test]
fn delimited_file_flows_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    // hourly two-channel file with header
    let mut csv = String::from("date,load,temp\n");
    for i in 0..256 {
        csv.push_str(&format!(
            "{},{},{}\n",
            i * 3_600_000,
            (i as f64 * 0.3).sin() + 0.01 * (i as f64 * 1.7).cos(),
            (i as f64 * 0.11).cos()
        ));
    }
    let data_path: PathBuf = dir.path().join("hourly.csv");
    std::fs::write(&data_path, csv).unwrap();
    let toml = format!(
        r#"
seed = 2
out_dir = "{}"
[[datasets]]
path = "{}"
has_timestamp = true
"#,
        dir.path().join("out").display(),
        data_path.display()
    );
    let cfg: RunConfig = toml::from_str(&toml).unwrap();
    let cfg = cfg.resolve();
    cfg.write_resolved().unwrap();
    cmd_analyze(&cfg).unwrap();
    assert!(cfg.out_dir.join("density_hourly_amplitude.tsv").exists());
}
