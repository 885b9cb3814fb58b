use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Connectivity;

/// Localization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    /// Upper limit on the number of concepts; pre-clustering stops just above it.
    pub n_max: usize,
    pub adjacency_connectivity: Connectivity,
    pub max_post_iters: usize,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            n_max: 10,
            adjacency_connectivity: Connectivity::Eight,
            max_post_iters: 32,
        }
    }
}

impl LocalizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::arg("n_max must be at least 1"));
        }
        if self.max_post_iters == 0 {
            return Err(Error::arg("max_post_iters must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_uses_defaults() {
        let c: LocalizeConfig =
            serde_json::from_str(r#"{"n_max": 4, "adjacency_connectivity": 4}"#).unwrap();
        assert_eq!(c.n_max, 4);
        assert_eq!(c.adjacency_connectivity, Connectivity::Four);
        assert_eq!(c.max_post_iters, 32);
        assert!(serde_json::from_str::<LocalizeConfig>(r#"{"nmax": 4}"#).is_err());
    }

    #[test]
    fn zero_limits_rejected() {
        assert!(LocalizeConfig {
            n_max: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LocalizeConfig {
            max_post_iters: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
