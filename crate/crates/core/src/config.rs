//! `key=value` configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Tolerance around a course's service window for accepting validations.
    pub schedule_match_window_s: u32,
    /// Upper bound on the running time of one course.
    pub max_course_duration_s: u32,
    pub reject_log_path: Option<PathBuf>,
    pub walk_radius_m: f64,
    pub rng_seed: u64,
    /// Minimum number of contributing covered courses for a fraud-rate entry.
    pub min_courses: usize,
    /// Keep fraud rates separate per travel direction.
    pub direction_specific_rates: bool,
    pub variogram_bins: usize,
    pub variogram_max_dist_fraction: f64,
    /// Cells per side of the fraud-map raster.
    pub grid_resolution: usize,
    pub holdout_fraction: f64,
    pub sweep_repeats: usize,
    pub sweep_step: usize,
    /// Minimum share of covered courses a line needs for a coverage sweep.
    pub sweep_min_coverage: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schedule_match_window_s: 300,
            max_course_duration_s: 7_200,
            reject_log_path: None,
            walk_radius_m: 800.0,
            rng_seed: 42,
            min_courses: 1,
            direction_specific_rates: false,
            variogram_bins: 12,
            variogram_max_dist_fraction: 0.5,
            grid_resolution: 200,
            holdout_fraction: 0.3,
            sweep_repeats: 300,
            sweep_step: 1,
            sweep_min_coverage: 0.9,
        }
    }
}

pub(crate) fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        line,
        key: key.to_owned(),
        value: value.to_owned(),
    })
}

/// Non-empty `key=value` lines of a config text as `(line, key, value)`,
/// with `#` comments stripped.
pub(crate) fn key_values(text: &str) -> Result<Vec<(usize, &str, &str)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: raw.to_owned(),
            });
        };
        out.push((line, key.trim(), value.trim()));
    }
    Ok(out)
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse_str(&text)
    }

    /// Parses `key=value` lines over the defaults. Blank lines and `#`
    /// comments are ignored.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (line, key, value) in key_values(text)? {
            match key {
                "schedule_match_window_s" => cfg.schedule_match_window_s = parse(line, key, value)?,
                "max_course_duration_s" => cfg.max_course_duration_s = parse(line, key, value)?,
                "reject_log_path" => cfg.reject_log_path = Some(PathBuf::from(value)),
                "walk_radius_m" => cfg.walk_radius_m = parse(line, key, value)?,
                "rng_seed" => cfg.rng_seed = parse(line, key, value)?,
                "min_courses" => cfg.min_courses = parse(line, key, value)?,
                "direction_specific_rates" => {
                    cfg.direction_specific_rates = parse(line, key, value)?
                }
                "variogram_bins" => cfg.variogram_bins = parse(line, key, value)?,
                "variogram_max_dist_fraction" => {
                    cfg.variogram_max_dist_fraction = parse(line, key, value)?
                }
                "grid_resolution" => cfg.grid_resolution = parse(line, key, value)?,
                "holdout_fraction" => cfg.holdout_fraction = parse(line, key, value)?,
                "sweep_repeats" => cfg.sweep_repeats = parse(line, key, value)?,
                "sweep_step" => cfg.sweep_step = parse(line, key, value)?,
                "sweep_min_coverage" => cfg.sweep_min_coverage = parse(line, key, value)?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_owned(),
                    })
                }
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = Config::default();
        assert_eq!(c.schedule_match_window_s, 300);
        assert_eq!(c.walk_radius_m, 800.0);
        assert_eq!(c.rng_seed, 42);
        assert_eq!(c.variogram_bins, 12);
        assert_eq!(c.variogram_max_dist_fraction, 0.5);
        assert_eq!(c.min_courses, 1);
    }

    #[test]
    fn parses_overrides_and_comments() {
        let c = Config::parse_str(
            "# comment\nwalk_radius_m = 500\n\nrng_seed=7 # trailing\nreject_log_path=/tmp/rejects.csv\n",
        )
        .unwrap();
        assert_eq!(c.walk_radius_m, 500.0);
        assert_eq!(c.rng_seed, 7);
        assert_eq!(c.reject_log_path, Some(PathBuf::from("/tmp/rejects.csv")));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(
            Config::parse_str("nope=1"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            Config::parse_str("rng_seed"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            Config::parse_str("min_courses=-3"),
            Err(ConfigError::InvalidValue { .. })
        ));
    }
}
