//! Run configuration loading. The config file is a TOML document
//! mapping onto [`LoopConfig`] (with the nested `[algorithm]` table);
//! unknown keys are hard errors so typos cannot silently fall back to
//! defaults.

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::LoopConfig;

pub fn parse_config(text: &str) -> Result<LoopConfig> {
    let config: LoopConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<LoopConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config, LoopConfig::default());
    }

    #[test]
    fn partial_override() {
        let config = parse_config("max_generations = 10\nseed = 7\n[algorithm]\nlearning_rate = 0.5\n").unwrap();
        assert_eq!(config.max_generations, 10);
        assert_eq!(config.seed, 7);
        assert_eq!(config.algorithm.learning_rate, 0.5);
        assert_eq!(config.plateau_window, LoopConfig::default().plateau_window);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            parse_config("max_generatons = 10\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config("[algorithm]\nlearning_rte = 0.1\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_value_rejected() {
        assert!(parse_config("[algorithm]\ngamma = 1.5\n").is_err());
    }
}
