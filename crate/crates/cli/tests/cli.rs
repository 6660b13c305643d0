use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn run(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simregress"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SIMREGRESS_STORE")
        .env_remove("SIMREGRESS_REGISTRY")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["compare", "9999", ".", "."]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("9999"));
    let o = run(tmp.path(), &["compare", "199", "missing", "missing"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn threshold_and_window_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let refs = fixtures().join("benchmark/model199");
    let (a, b) = (refs.join("helios_a"), refs.join("rheticus_a"));
    let args = |extra: &[&str]| -> Vec<String> {
        let mut v = vec!["compare".into(), "199".into(), b.display().to_string(), a.display().to_string()];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let strict: Vec<String> = args(&["--thr", "1e-6"]);
    let o = run(tmp.path(), &strict.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).starts_with("FAIL (nb lines compared: 53/53)\n"));
    assert!(text(&o).contains("more violations"));
    let narrow = args(&["--window", "30000:36000", "--extract-dir", "out"]);
    fs::create_dir(tmp.path().join("out")).unwrap();
    let o = run(tmp.path(), &narrow.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(text(&o).starts_with("OK  (nb lines compared: 11/11)\n"), "{}", text(&o));
    assert!(text(&o).contains("plot 'out/f1' u 1:2 ls 1, 'out/f2' u 1:2 ls 4"));
    assert!(tmp.path().join("out/f2").is_file());
}

#[test]
fn store_then_list() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("MYDIR_302");
    let o = run(tmp.path(), &["simulate", "--out", "MYDIR_302", "--seed", "4"]);
    assert!(o.status.success());
    assert!(run_dir.join("macroscopic_vars.dat").is_file());
    let o = run(tmp.path(), &["store", "MYDIR_302", "model302/testbox_a"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("benchmark/model302/testbox_a/README.txt").is_file());
    let o = run(tmp.path(), &["store", "MYDIR_302", "model302/testbox_a"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(tmp.path(), &["list"]);
    assert_eq!(text(&o), "model302/testbox_a  ( - )\n");
}

#[test]
fn scale_report_both_formats() {
    let root = fixtures().join("scaling");
    let runs = [
        "12,1,4,3,pathological:rheticus_12",
        "24,2,4,6:rheticus_24",
        "48,4,4,12:rheticus_48",
        "96,8,8,12:rheticus_96",
        "192,16,16,12:rheticus_192",
    ];
    let mut args = vec!["scale-report", "--log", "out_loop3", "--iter", "1"];
    args.extend(runs);
    let o = run(&root, &args);
    let table = text(&o);
    assert!(table.contains("facto                   265.80     67.20     41.50     22.70     14.50\n"), "{table}");
    assert!(table.contains("\nfacto                     1.00      3.96      6.40     11.71     18.33\n"), "{table}");
    args.push("--machine");
    args.push("--exclude-pathological");
    let o = run(&root, &args);
    let machine = text(&o);
    assert!(machine.starts_with("row rheticus_12 rheticus_24 rheticus_48 rheticus_96 rheticus_192\n"));
    assert!(machine.contains("\nspeedup:ITER - 1 "));
    let o = run(&root, &["scale-report", "--log", "out_loop3", "--iter", "4", "1,1,1,1:rheticus_12", "2,1,1,2:rheticus_24"]);
    assert_eq!(o.status.code(), Some(2));
}
