use std::path::Path;
use std::process::{Command, Output};

fn dexo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dexo")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const HONEST: &str = "schema = \"dexo-scenario/1\"\nn = 5\nt = 3\nf = 2\nm = 2\n";

#[test]
fn run_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "honest.toml", HONEST);
    let out = dexo(&["run", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("contract calls 26"), "{stdout}");
    for f in ["trace.txt", "gas.csv", "summary.txt"] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
    let gas = std::fs::read_to_string(dir.path().join("o/gas.csv")).unwrap();
    assert!(gas.starts_with("block,caller,function,gas_units,cumulative_gas\n"));

    let replay = dexo(&["replay", "o/trace.txt"], dir.path());
    assert_eq!(replay.status.code(), Some(0));
}

#[test]
fn withheld_keys_summary_shows_refund() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "w.toml", &format!("{HONEST}adversary = \"WITHHOLD_KEYS\"\n"));
    let out = dexo(&["run", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("consumer refunds 200"), "{stdout}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "n = 5\nt = 5\nf = 1\nm = 1\n");
    assert_eq!(dexo(&["run", &bad], dir.path()).status.code(), Some(2));
    let unknown = write(dir.path(), "u.toml", &format!("{HONEST}colour = 3\n"));
    assert_eq!(dexo(&["run", &unknown], dir.path()).status.code(), Some(2));
    let script = write(dir.path(), "s.toml", &format!("{HONEST}adversary = \"NOPE\"\n"));
    assert_eq!(dexo(&["run", &script], dir.path()).status.code(), Some(2));
    assert_eq!(dexo(&["run", "missing.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn tampered_trace_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "honest.toml", HONEST);
    assert_eq!(dexo(&["run", &cfg, "--out", "o"], dir.path()).status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("o/trace.txt")).unwrap();
    let edited = text.replacen("calls 26", "calls 27", 1);
    assert_ne!(edited, text);
    let p = write(dir.path(), "edited.txt", &edited);
    assert_eq!(dexo(&["replay", &p], dir.path()).status.code(), Some(3));
}

#[test]
fn sweep_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "base.toml", HONEST);
    let out = dexo(&["sweep", &cfg, "--axis", "m", "--values", "1..3", "--out", "r.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);

    let cmp = dexo(&["compare", "r.csv"], dir.path());
    assert_eq!(cmp.status.code(), Some(0));
    let table = String::from_utf8(cmp.stdout).unwrap();
    let header = table.lines().next().unwrap();
    assert!(header.contains("gas_chainlink_pricefeed") && header.contains("crossover"), "{header}");
    assert_eq!(table.lines().count(), 4);

    let rule = dexo(&["sweep", &cfg, "--axis", "n", "--values", "5,9", "--t-rule", "two-thirds"], dir.path());
    assert_eq!(rule.status.code(), Some(0));
    let text = String::from_utf8(rule.stdout).unwrap();
    assert!(text.contains("n=9 t=6 f=3"), "{text}");

    let bad_axis = dexo(&["sweep", &cfg, "--axis", "q", "--values", "1"], dir.path());
    assert_eq!(bad_axis.status.code(), Some(2));
}

#[test]
fn shipped_scenarios_run_clean() {
    let dir = tempfile::tempdir().unwrap();
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut count = 0;
    for entry in std::fs::read_dir(shipped).unwrap() {
        let path = entry.unwrap().path();
        let out = dexo(&["run", path.to_str().unwrap(), "--out", "o"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        count += 1;
    }
    assert_eq!(count, 5);
}
