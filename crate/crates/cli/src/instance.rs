use std::fs;
use std::path::Path;

use bellman_lqr::lqr_core::{Gain, SystemInstance};
use serde::Deserialize;

use crate::error::CliError;

/// On-disk instance. Every field except `k0` is required.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    pub m: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub k0: Option<Vec<f64>>,
}

impl InstanceFile {
    pub fn system(&self) -> Result<SystemInstance, CliError> {
        SystemInstance::from_row_major(self.n, self.m, &self.a, &self.b, &self.q, &self.r)
            .map_err(CliError::input)
    }

    pub fn k0(&self) -> Result<Option<Gain>, CliError> {
        self.k0
            .as_ref()
            .map(|e| Gain::from_row_major(self.m, self.n, e).map_err(CliError::input))
            .transpose()
    }
}

pub fn load(path: &Path) -> Result<(InstanceFile, SystemInstance), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let file: InstanceFile = serde_json::from_str(&text)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let sys = file.system()?;
    Ok((file, sys))
}

/// Comma-separated row-major entries, e.g. `"0.5,-1"`.
pub fn parse_entries(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::parse(format!("invalid number {:?}", s.trim())))
        })
        .collect()
}

pub fn parse_gain(text: &str, sys: &SystemInstance) -> Result<Gain, CliError> {
    Gain::from_row_major(sys.m(), sys.n(), &parse_entries(text)?).map_err(CliError::input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries() {
        assert_eq!(parse_entries("0, -1.5,2e-3").unwrap(), vec![0.0, -1.5, 2e-3]);
        assert!(parse_entries("1,,2").is_err());
        assert!(parse_entries("x").is_err());
    }

    #[test]
    fn missing_fields_are_errors() {
        let text = r#"{"n":1,"m":1,"a":[-1],"b":[1],"q":[1]}"#;
        assert!(serde_json::from_str::<InstanceFile>(text).is_err());
        let full = r#"{"n":1,"m":1,"a":[-1],"b":[1],"q":[1],"r":[1]}"#;
        let file: InstanceFile = serde_json::from_str(full).unwrap();
        assert!(file.system().is_ok());
        assert!(file.k0().unwrap().is_none());
    }

    #[test]
    fn wrong_lengths_are_input_errors() {
        let text = r#"{"n":2,"m":1,"a":[-1,0,0],"b":[1,1],"q":[1,0,0,1],"r":[1]}"#;
        let file: InstanceFile = serde_json::from_str(text).unwrap();
        assert_eq!(file.system().unwrap_err().code, 2);
    }
}
