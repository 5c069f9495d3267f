use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedqk::cli::{cmd_eval, cmd_fed_sim, cmd_gen_synth, cmd_train, run_grid, ExperimentConfig};

const TINY: &str = "\
data.synthetic.classes = 3
data.synthetic.windows_per_class = 6
data.synthetic.window = 12
model.conv_filters = 3
model.conv_width = 3
model.recurrent_layers = 1
model.hidden = 4
model.landmarks = 3
model.dropout = 0.1
fed.clients = 2
fed.local_epochs = 1
fed.rounds = 2
fed.batch_size = 4
optim.lr = 0.01
train.epochs = 2
";

fn tiny_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig::from_text(TINY).unwrap().with("output.dir", out.to_str().unwrap()).unwrap()
}

fn fedqk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedqk")).args(args).output().unwrap()
}

#[test]
fn fed_sim_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    cmd_fed_sim(&cfg).unwrap();
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "round,accuracy,precision,recall,f1,train_loss,seconds");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
    assert!(dir.path().join("final.fqkc").exists());
    let resolved = fs::read_to_string(dir.path().join("config.resolved")).unwrap();
    assert!(resolved.contains("fed.rounds = 2"));

    // eval scores the checkpoint it just wrote
    let report = cmd_eval(&cfg).unwrap();
    assert!((0.0..=1.0).contains(&report.f1));

    // rerunning reproduces the CSV byte for byte
    cmd_fed_sim(&cfg).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("metrics.csv")).unwrap(), csv);
}

#[test]
fn centralized_train_writes_one_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let records = cmd_train(&tiny_config(dir.path())).unwrap();
    assert_eq!(records.len(), 2);
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn grid_rows_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let report = run_grid(&cfg, &[2], &[1]).unwrap();
    assert!(report.failures.is_empty());
    let text = String::from_utf8(report.csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "clients,epochs,round,accuracy,precision,recall,f1");
    assert_eq!(text.lines().count(), 1 + 2);
}

#[test]
fn grid_records_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    // 18 windows cannot feed 1000 clients
    let report = run_grid(&cfg, &[1000, 2], &[1]).unwrap();
    assert_eq!(report.failures.len(), 1);
    let text = String::from_utf8(report.csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows[0], "1000,1,,,,,");
    assert_eq!(rows.len(), 1 + 2);
}

#[test]
fn gen_synth_cache_feeds_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let path = cmd_gen_synth(&cfg).unwrap();
    let cached = cfg
        .with("data.path", path.to_str().unwrap())
        .unwrap()
        .with("data.source", "cache")
        .unwrap();
    let a = cmd_fed_sim(&cfg).unwrap();
    let b = cmd_fed_sim(&cached).unwrap();
    assert_eq!(a.params, b.params);
}

#[test]
fn binary_kernel_check_passes() {
    let out = fedqk(&["kernel-check"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("max deviation"));
}

#[test]
fn binary_count_params_classical_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "model.cell = classical\nmodel.recurrent_layers = 1\nmodel.hidden = 64\nmodel.conv_filters = 64\n").unwrap();
    let out = fedqk(&["count-params", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success());
    let recurrent = stdout.lines().find(|l| l.starts_with("recurrent")).unwrap();
    assert!(recurrent.ends_with("33,024"), "{stdout}");
}

#[test]
fn binary_fed_sim_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let out_dir = dir.path().join("run");
    let out = fedqk(&["fed-sim", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let resolved = fs::read_to_string(out_dir.join("config.resolved")).unwrap();
    assert!(resolved.lines().any(|l| l == "seed = 4"));
}

#[test]
fn binary_rejects_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "fed.clinets = 3\n").unwrap();
    let out = fedqk(&["fed-sim", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fed.clinets"));
}

#[test]
fn binary_tcp_matches_fed_sim() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap();
    let sim_dir = dir.path().join("sim");
    let tcp_dir = dir.path().join("tcp");
    assert!(fedqk(&["fed-sim", "--config", cfg, "--out", sim_dir.to_str().unwrap()]).status.success());

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let server = Command::new(env!("CARGO_BIN_EXE_fedqk"))
        .args(["fed-server", "--config", cfg, "--listen", &addr, "--out", tcp_dir.to_str().unwrap()])
        .spawn()
        .unwrap();
    let clients: Vec<_> = (0..2)
        .map(|k| {
            Command::new(env!("CARGO_BIN_EXE_fedqk"))
                .args(["fed-client", "--config", cfg, "--connect", &addr, "--client-id", &k.to_string()])
                .spawn()
                .unwrap()
        })
        .collect();
    for mut c in clients {
        assert!(c.wait().unwrap().success());
    }
    assert!(server.wait_with_output().unwrap().status.success());
    assert_eq!(
        fs::read(sim_dir.join("metrics.csv")).unwrap(),
        fs::read(tcp_dir.join("metrics.csv")).unwrap()
    );
}
