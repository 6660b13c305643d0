//! Reference-run database: `<root>/model<id>/<label>/` directories holding
//! the macroscopic file, the run logs and a `README.txt` describing the
//! machine.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const README_FILE: &str = "README.txt";
pub const MACROSCOPIC_FILE: &str = "macroscopic_vars.dat";
pub const DEFAULT_STORE_ROOT: &str = "benchmark";
pub const UNSET: &str = "-";

#[derive(Debug, Error)]
pub enum BenchStoreError {
    #[error("destination {} already exists", .0.display())]
    DestinationExists(PathBuf),
    #[error("{} has no {MACROSCOPIC_FILE}", .0.display())]
    MissingMacroscopicFile(PathBuf),
    #[error("{} has no {README_FILE}", .0.display())]
    MissingReadme(PathBuf),
    #[error("store root {} does not exist", .0.display())]
    MissingStoreRoot(PathBuf),
    #[error("invalid reference label `{0}`")]
    InvalidLabel(String),
    #[error("I/O failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BenchStoreError + '_ {
    move |source| BenchStoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineMetadata {
    pub machine: String,
    pub location: String,
    pub processor: String,
    pub cores_per_node: String,
    pub author: String,
    pub comment: String,
    pub fortran_compiler: String,
    pub code_revision: String,
    pub code_option: String,
    pub solver_compiler: String,
    pub solver_revision: String,
    pub solver_option: String,
    pub mpi_library: String,
    pub blas_library: String,
    pub network: String,
    pub other: String,
}

impl Default for MachineMetadata {
    fn default() -> Self {
        let u = || UNSET.to_string();
        MachineMetadata {
            machine: u(),
            location: u(),
            processor: u(),
            cores_per_node: u(),
            author: u(),
            comment: u(),
            fortran_compiler: u(),
            code_revision: u(),
            code_option: u(),
            solver_compiler: u(),
            solver_revision: u(),
            solver_option: u(),
            mpi_library: u(),
            blas_library: u(),
            network: u(),
            other: u(),
        }
    }
}

/// README keys in file order. The first six are padded to 10 columns, the
/// rest to 22.
pub const README_KEYS: [&str; 16] = [
    "Machine",
    "Location",
    "Processor",
    "Cores/node",
    "Author",
    "Comment",
    "Jorek fortran compiler",
    "Jorek SVN revision",
    "Jorek specific option",
    "Pastix compiler",
    "Pastix SVN revision",
    "Pastix specific option",
    "MPI library",
    "BLAS library",
    "Network",
    "Other info",
];

const SHORT_KEYS: usize = 6;

impl MachineMetadata {
    fn fields(&self) -> [&String; 16] {
        [
            &self.machine,
            &self.location,
            &self.processor,
            &self.cores_per_node,
            &self.author,
            &self.comment,
            &self.fortran_compiler,
            &self.code_revision,
            &self.code_option,
            &self.solver_compiler,
            &self.solver_revision,
            &self.solver_option,
            &self.mpi_library,
            &self.blas_library,
            &self.network,
            &self.other,
        ]
    }

    fn fields_mut(&mut self) -> [&mut String; 16] {
        [
            &mut self.machine,
            &mut self.location,
            &mut self.processor,
            &mut self.cores_per_node,
            &mut self.author,
            &mut self.comment,
            &mut self.fortran_compiler,
            &mut self.code_revision,
            &mut self.code_option,
            &mut self.solver_compiler,
            &mut self.solver_revision,
            &mut self.solver_option,
            &mut self.mpi_library,
            &mut self.blas_library,
            &mut self.network,
            &mut self.other,
        ]
    }

    /// Value for a README key, e.g. `"Cores/node"`.
    pub fn get(&self, key: &str) -> Option<&str> {
        let i = README_KEYS.iter().position(|k| *k == key)?;
        Some(self.fields()[i].as_str())
    }

    /// Parses `Key : value` lines. The split is on the first colon, so
    /// values may contain colons. Returns the metadata and one warning per
    /// line that was ignored.
    pub fn parse_readme(text: &str) -> (MachineMetadata, Vec<String>) {
        let mut meta = MachineMetadata::default();
        let mut warnings = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once(':') else {
                warnings.push(format!("line {}: no `Key : value` pair", no + 1));
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            match README_KEYS.iter().position(|k| *k == key) {
                Some(i) => {
                    *meta.fields_mut()[i] = if value.is_empty() { UNSET.to_string() } else { value.to_string() };
                }
                None => warnings.push(format!("line {}: unknown key `{key}`", no + 1)),
            }
        }
        (meta, warnings)
    }

    pub fn render_readme(&self) -> String {
        let mut out = String::new();
        for (i, (key, value)) in README_KEYS.iter().zip(self.fields()).enumerate() {
            let width = if i < SHORT_KEYS { 10 } else { 22 };
            let _ = writeln!(out, "{key:<width$} : {value}");
        }
        out
    }
}

/// Reads `<dir>/README.txt`.
pub fn load_machine_metadata(dir: &Path) -> Result<MachineMetadata, BenchStoreError> {
    load_machine_metadata_with_warnings(dir).map(|(m, _)| m)
}

pub fn load_machine_metadata_with_warnings(dir: &Path) -> Result<(MachineMetadata, Vec<String>), BenchStoreError> {
    let path = dir.join(README_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(MachineMetadata::parse_readme(&text)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(BenchStoreError::MissingReadme(dir.to_path_buf())),
        Err(e) => Err(io_err(&path)(e)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEntry {
    pub model_id: u32,
    pub label: String,
    pub path: PathBuf,
    pub metadata: MachineMetadata,
    /// Kept file names, sorted.
    pub files: Vec<String>,
}

/// True for the files a stored reference keeps.
pub fn is_kept_file(name: &str) -> bool {
    name == MACROSCOPIC_FILE
        || name == README_FILE
        || name
            .strip_prefix("out_loop")
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// Parses `model<id>/<label>`.
pub fn parse_destination(dest: &str) -> Result<(u32, String), BenchStoreError> {
    let bad = || BenchStoreError::InvalidLabel(dest.to_string());
    let (model, label) = dest.trim_end_matches('/').split_once('/').ok_or_else(bad)?;
    let id = model.strip_prefix("model").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
    validate_label(label)?;
    Ok((id, label.to_string()))
}

fn validate_label(label: &str) -> Result<(), BenchStoreError> {
    if label.is_empty() || label.contains('/') || label == "." || label == ".." {
        return Err(BenchStoreError::InvalidLabel(label.to_string()));
    }
    Ok(())
}

fn sorted_names(dir: &Path) -> Result<Vec<String>, BenchStoreError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if let Ok(name) = entry.file_name().into_string() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Copies the reduced file set of `run_dir` into `<root>/model<id>/<label>`
/// and writes a blank README template. Creating the destination directory
/// is the lock: a second store to the same label fails.
pub fn store_reference(
    root: &Path,
    run_dir: &Path,
    model_id: u32,
    label: &str,
) -> Result<ReferenceEntry, BenchStoreError> {
    validate_label(label)?;
    if !run_dir.join(MACROSCOPIC_FILE).is_file() {
        return Err(BenchStoreError::MissingMacroscopicFile(run_dir.to_path_buf()));
    }
    let model_dir = root.join(format!("model{model_id}"));
    fs::create_dir_all(&model_dir).map_err(io_err(&model_dir))?;
    let dest = model_dir.join(label);
    match fs::create_dir(&dest) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => return Err(BenchStoreError::DestinationExists(dest)),
        Err(e) => return Err(io_err(&dest)(e)),
    }

    let mut files = Vec::new();
    for name in sorted_names(run_dir)? {
        if name == README_FILE || !is_kept_file(&name) {
            continue;
        }
        let src = run_dir.join(&name);
        if !src.is_file() {
            continue;
        }
        fs::copy(&src, dest.join(&name)).map_err(io_err(&src))?;
        files.push(name);
    }
    let metadata = MachineMetadata::default();
    let readme = dest.join(README_FILE);
    fs::write(&readme, metadata.render_readme()).map_err(io_err(&readme))?;
    files.push(README_FILE.to_string());
    files.sort();

    Ok(ReferenceEntry {
        model_id,
        label: label.to_string(),
        path: dest,
        metadata,
        files,
    })
}

/// Loads one stored reference.
pub fn load_reference(root: &Path, model_id: u32, label: &str) -> Result<ReferenceEntry, BenchStoreError> {
    let path = root.join(format!("model{model_id}")).join(label);
    let files: Vec<String> = sorted_names(&path)?.into_iter().filter(|n| is_kept_file(n)).collect();
    let metadata = load_machine_metadata(&path).unwrap_or_default();
    Ok(ReferenceEntry {
        model_id,
        label: label.to_string(),
        path,
        metadata,
        files,
    })
}

/// All stored references, sorted by model id then label.
pub fn list_references(root: &Path, model: Option<u32>) -> Result<Vec<ReferenceEntry>, BenchStoreError> {
    if !root.is_dir() {
        return Err(BenchStoreError::MissingStoreRoot(root.to_path_buf()));
    }
    let mut models: Vec<u32> = sorted_names(root)?
        .iter()
        .filter_map(|n| n.strip_prefix("model")?.parse().ok())
        .filter(|id| model.is_none_or(|m| m == *id))
        .collect();
    models.sort_unstable();
    let mut out = Vec::new();
    for id in models {
        let dir = root.join(format!("model{id}"));
        if !dir.is_dir() {
            continue;
        }
        for label in sorted_names(&dir)? {
            let path = dir.join(&label);
            if path.join(MACROSCOPIC_FILE).is_file() {
                out.push(load_reference(root, id, &label)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOURMI: &str = "\
Machine    : PLAFRIM/fourmi
Location   : Bordeaux - France
Processor  : Intel(R) Xeon(R) CPU X5550 @ 2.67GHz
Cores/node : 8
Author     : Latu
Comment    : openmpi
Jorek fortran compiler : ifort 11.1
Jorek SVN revision     : 666
Jorek specific option  : -
Pastix compiler        : icc 11.1
Pastix SVN revision    : 3564
Pastix specific option : -
MPI library            : openmpi/1.4.4
BLAS library           : GotoBLAS2
Network                : Infiniband QDR : 40Gb/s
Other info             : -
";

    #[test]
    fn readme_round_trip() {
        let (meta, warnings) = MachineMetadata::parse_readme(FOURMI);
        assert!(warnings.is_empty());
        assert_eq!(meta.processor, "Intel(R) Xeon(R) CPU X5550 @ 2.67GHz");
        assert_eq!(meta.comment, "openmpi");
        assert_eq!(meta.network, "Infiniband QDR : 40Gb/s");
        assert_eq!(meta.get("Cores/node"), Some("8"));
        assert_eq!(meta.render_readme(), FOURMI);
    }

    #[test]
    fn template_is_all_unset() {
        let template = MachineMetadata::default().render_readme();
        assert_eq!(template.lines().count(), 16);
        let (meta, _) = MachineMetadata::parse_readme(&template);
        assert_eq!(meta, MachineMetadata::default());
        assert_eq!(MachineMetadata::parse_readme("").0, MachineMetadata::default());
    }

    #[test]
    fn tolerant_parsing_with_warnings() {
        let (meta, warnings) = MachineMetadata::parse_readme("  Comment:bullxmpi + FUNNELED  \nColour : blue\nnonsense\n");
        assert_eq!(meta.comment, "bullxmpi + FUNNELED");
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn kept_files() {
        for name in ["macroscopic_vars.dat", "README.txt", "out_loop1", "out_loop12"] {
            assert!(is_kept_file(name), "{name}");
        }
        for name in ["out_loop", "out_loop1.bak", "jorek_restart.h5", "launch_script.sh"] {
            assert!(!is_kept_file(name), "{name}");
        }
    }

    #[test]
    fn destination_parsing() {
        assert_eq!(parse_destination("model302/testbox_a").unwrap(), (302, "testbox_a".to_string()));
        for bad in ["302/testbox_a", "model302", "model302/", "modelx/a", "model302/a/b"] {
            assert!(parse_destination(bad).is_err(), "{bad}");
        }
    }
}
