use std::path::{Path, PathBuf};

use super::{Scenario, ScenarioError};

/// Scenario files shipped with the tool.
const BUILTIN: &[(u32, &str)] = &[
    (199, include_str!("../../registry/model199.scn")),
    (302, include_str!("../../registry/model302.scn")),
    (303, include_str!("../../registry/model303.scn")),
];

pub const BUILTIN_MODELS: [u32; 3] = [199, 302, 303];

/// Where scenarios are looked up by model id: an optional directory of
/// `model<id>.scn` files, then the built-in set.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    pub dir: Option<PathBuf>,
}

impl Registry {
    pub fn builtin() -> Self {
        Registry { dir: None }
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Registry {
            dir: Some(dir.into()),
        }
    }

    /// Registry from the `SIMREGRESS_REGISTRY` environment variable, if set.
    pub fn from_env() -> Self {
        match std::env::var_os("SIMREGRESS_REGISTRY") {
            Some(dir) if !dir.is_empty() => Registry::with_dir(dir),
            _ => Registry::builtin(),
        }
    }

    pub fn load(&self, model_id: u32) -> Result<Scenario, ScenarioError> {
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("model{model_id}.scn"));
            if path.is_file() {
                return check_model(Scenario::from_file(&path)?, model_id);
            }
        }
        let text = BUILTIN
            .iter()
            .find(|(id, _)| *id == model_id)
            .map(|(_, text)| *text)
            .ok_or(ScenarioError::UnknownModel(model_id))?;
        check_model(Scenario::parse(text)?, model_id)
    }

    /// Registered model ids, sorted.
    pub fn models(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = BUILTIN_MODELS.to_vec();
        if let Some(dir) = &self.dir {
            if let Ok(entries) = std::fs::read_dir(dir) {
                for entry in entries.flatten() {
                    let name = entry.file_name();
                    let id = name
                        .to_str()
                        .and_then(|n| n.strip_prefix("model"))
                        .and_then(|n| n.strip_suffix(".scn"))
                        .and_then(|n| n.parse().ok());
                    if let Some(id) = id {
                        ids.push(id);
                    }
                }
            }
        }
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn check_model(s: Scenario, expected: u32) -> Result<Scenario, ScenarioError> {
    if s.model_id != expected {
        return Err(ScenarioError::InvalidScenarioFile(format!(
            "file for model {expected} declares model {}",
            s.model_id
        )));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Model(u32),
    File(PathBuf),
}

impl ScenarioSource {
    /// A bare integer names a registered model; anything else is a path.
    pub fn parse(arg: &str) -> Self {
        match arg.parse() {
            Ok(id) => ScenarioSource::Model(id),
            Err(_) => ScenarioSource::File(PathBuf::from(arg)),
        }
    }
}

pub fn load_scenario(source: &ScenarioSource, registry: &Registry) -> Result<Scenario, ScenarioError> {
    match source {
        ScenarioSource::Model(id) => registry.load(*id),
        ScenarioSource::File(path) => Scenario::from_file(Path::new(path)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_models_load() {
        let reg = Registry::builtin();
        for id in BUILTIN_MODELS {
            let s = reg.load(id).unwrap();
            assert_eq!(s.model_id, id);
        }
        assert_eq!(reg.models(), vec![199, 302, 303]);
    }

    #[test]
    fn model_302_has_xpoint_and_three_harmonics() {
        let s = load_scenario(&ScenarioSource::Model(302), &Registry::builtin()).unwrap();
        assert!(s.xpoint());
        assert_eq!(s.base_n_tor().unwrap(), 3);
    }

    #[test]
    fn unknown_model() {
        assert!(matches!(
            Registry::builtin().load(9999),
            Err(ScenarioError::UnknownModel(9999))
        ));
    }

    #[test]
    fn directory_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        let text = include_str!("../../registry/model199.scn").replace("thr = 0.01", "thr = 0.05");
        std::fs::write(dir.path().join("model199.scn"), text).unwrap();
        std::fs::write(
            dir.path().join("model500.scn"),
            include_str!("../../registry/model199.scn").replace("model = 199", "model = 500"),
        )
        .unwrap();
        let reg = Registry::with_dir(dir.path());
        assert_eq!(reg.load(199).unwrap().metric_defaults.thr, 0.05);
        assert_eq!(reg.load(500).unwrap().model_id, 500);
        assert_eq!(reg.load(302).unwrap().model_id, 302);
        assert_eq!(reg.models(), vec![199, 302, 303, 500]);
    }

    #[test]
    fn source_parsing() {
        assert_eq!(ScenarioSource::parse("199"), ScenarioSource::Model(199));
        assert_eq!(
            ScenarioSource::parse("my/model.scn"),
            ScenarioSource::File(PathBuf::from("my/model.scn"))
        );
    }
}
