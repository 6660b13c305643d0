use std::path::{Path, PathBuf};

use simregress::timers::{scaling_report, RunConfig, ScalingTable};

fn runs(mark_first: bool) -> Vec<(RunConfig, PathBuf)> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scaling");
    let first = if mark_first { ",pathological" } else { "" };
    [
        (format!("12,1,4,3{first}"), "rheticus_12"),
        ("24,2,4,6".into(), "rheticus_24"),
        ("48,4,4,12".into(), "rheticus_48"),
        ("96,8,8,12".into(), "rheticus_96"),
        ("192,16,16,12".into(), "rheticus_192"),
    ]
    .into_iter()
    .map(|(c, d)| (c.parse().unwrap(), root.join(d)))
    .collect()
}

fn table(iteration: usize, mark_first: bool) -> ScalingTable {
    scaling_report(&runs(mark_first), "out_loop3", iteration).unwrap()
}

#[test]
fn first_iteration_with_factorisation() {
    let t = table(1, false);
    assert_eq!(t.row("facto").unwrap(), &[265.8, 67.2, 41.5, 22.7, 14.5]);
    assert_eq!(t.row("construct_matrix").unwrap(), &[14.74, 7.53, 4.13, 2.08, 1.47]);
    let s = t.speedup("facto", false);
    assert_eq!(s[0], Some(1.0));
    assert!((s[4].unwrap() - 18.33).abs() < 0.01);
    assert!(t.iteration_violations(1e-6).is_empty());
}

#[test]
fn third_iteration_without_factorisation() {
    let t = table(3, false);
    assert_eq!(t.row("ITER").unwrap(), &[29.9, 14.8, 10.2, 5.97, 3.58]);
    assert_eq!(t.row("facto").unwrap(), &[0.0; 5]);
    assert_eq!(t.row("analysis").unwrap(), &[0.0; 5]);
    assert_eq!(t.speedup("facto", false), vec![Some(1.0), None, None, None, None]);
    let s = t.speedup("ITER", false);
    assert!((s[4].unwrap() - 8.35).abs() < 0.01);
    assert!(t.iteration_violations(1e-6).is_empty());
}

#[test]
fn pathological_column_leaves_the_baseline() {
    let t = table(1, true);
    assert!(t.configs[0].pathological);
    assert_eq!(t.baseline(true), Some(1));
    let eff = t.efficiency("ITER", true);
    assert_eq!(eff[0], None);
    assert_eq!(eff[1], Some(1.0));
    // 83.4 / 22.5 over an 8x core increase
    assert!((eff[4].unwrap() - 83.4 / 22.5 / 8.0).abs() < 1e-12);
    // with the baseline kept, efficiency above one reveals the swapping run
    assert!(t.efficiency("ITER", false)[1].unwrap() > 1.0);
}

#[test]
fn identical_runs_have_unit_speedup() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scaling/rheticus_48");
    let c: RunConfig = "48,4,4,12".parse().unwrap();
    let t = scaling_report(&[(c, root.clone()), (c, root)], "out_loop3", 2).unwrap();
    for k in ["construct_matrix", "gmres/solve", "ITER"] {
        assert_eq!(t.speedup(k, false), vec![Some(1.0), Some(1.0)], "{k}");
    }
}
