use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use simregress::benchstore::{
    list_references, load_machine_metadata, store_reference, BenchStoreError, MachineMetadata,
};
use simregress::toysim::{write_run, ToyConfig};

fn names(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

#[test]
fn stores_only_the_reduced_file_set() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("MYDIR_302");
    write_run(&ToyConfig::default(), &run).unwrap();
    for extra in ["out_loop2", "out_loop3", "jorek_restart.h5", "launch_script.sh", "out_loop2.old", "README.txt"] {
        fs::write(run.join(extra), "x").unwrap();
    }
    fs::create_dir(run.join("out_loop9")).unwrap();
    let store = tmp.path().join("benchmark");
    let entry = store_reference(&store, &run, 302, "testbox_a").unwrap();
    assert_eq!(entry.path, store.join("model302/testbox_a"));
    let expected: BTreeSet<String> = ["README.txt", "macroscopic_vars.dat", "out_loop1", "out_loop2", "out_loop3"]
        .into_iter()
        .map(String::from)
        .collect();
    assert_eq!(names(&entry.path), expected);
    assert_eq!(entry.files.iter().cloned().collect::<BTreeSet<_>>(), expected);
    assert_eq!(
        fs::read(run.join("macroscopic_vars.dat")).unwrap(),
        fs::read(entry.path.join("macroscopic_vars.dat")).unwrap()
    );
    // the run's own README is not carried over: the template replaces it
    assert_eq!(load_machine_metadata(&entry.path).unwrap(), MachineMetadata::default());

    assert!(matches!(
        store_reference(&store, &run, 302, "testbox_a"),
        Err(BenchStoreError::DestinationExists(_))
    ));
    let listed = list_references(&store, Some(302)).unwrap();
    assert_eq!(listed.len(), 1);
    assert_eq!(listed[0].files, entry.files);
}

#[test]
fn run_without_macroscopic_file_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("out_loop1"), "").unwrap();
    let store = tmp.path().join("store");
    assert!(matches!(
        store_reference(&store, tmp.path(), 199, "x_a"),
        Err(BenchStoreError::MissingMacroscopicFile(_))
    ));
    assert!(!store.join("model199/x_a").exists());
}

#[test]
fn readme_fixtures_load_verbatim() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/benchmark/model199");
    let fourmi = load_machine_metadata(&root.join("fourmi_a")).unwrap();
    assert_eq!(fourmi.processor, "Intel(R) Xeon(R) CPU X5550 @ 2.67GHz");
    assert_eq!(fourmi.comment, "openmpi");
    assert_eq!(fourmi.network, "Infiniband QDR : 40Gb/s");
    let rheticus = load_machine_metadata(&root.join("rheticus_a")).unwrap();
    assert_eq!(rheticus.mpi_library, "mvapich2-1.7");
    assert_eq!(rheticus.cores_per_node, "12");
    for dir in ["fourmi_a", "rheticus_a"] {
        let text = fs::read_to_string(root.join(dir).join("README.txt")).unwrap();
        assert_eq!(MachineMetadata::parse_readme(&text).0.render_readme(), text);
    }
    assert!(matches!(
        load_machine_metadata(&root),
        Err(BenchStoreError::MissingReadme(_))
    ));
}

#[test]
fn listing_is_sorted_and_filtered() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("benchmark");
    for (label, seed) in [("rheticus_a", 2), ("helios_a", 1)] {
        let run = tmp.path().join(label);
        write_run(&ToyConfig { seed, ..ToyConfig::default() }, &run).unwrap();
        store_reference(&store, &run, 199, label).unwrap();
    }
    let all = list_references(&store, None).unwrap();
    let labels: Vec<_> = all.iter().map(|e| e.label.as_str()).collect();
    assert_eq!(labels, ["helios_a", "rheticus_a"]);
    assert!(list_references(&store, Some(302)).unwrap().is_empty());
    assert!(matches!(
        list_references(&tmp.path().join("nowhere"), None),
        Err(BenchStoreError::MissingStoreRoot(_))
    ));
}
