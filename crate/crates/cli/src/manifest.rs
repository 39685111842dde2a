use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Record of one CLI invocation. `argv` alone is enough to rerun it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<String>,
    pub parameters: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub exit_status: i32,
    pub stats: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    pub fn stat(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.stats.insert(key.to_string(), value.into());
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }

    pub fn read(path: &Path) -> std::io::Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_a_file() {
        let mut m = RunManifest {
            command: "solve".into(),
            argv: vec!["t48".into(), "solve".into(), "--k".into(), "3".into()],
            inputs: vec!["board.txt".into()],
            ..Default::default()
        };
        m.param("k", 3);
        m.stat("nodes_expanded", 85u64);
        m.stat("elapsed_ms", 0.25);
        m.exit_status = 1;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
    }
}
