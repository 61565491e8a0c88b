//! Plain-text `key=value` run configuration.
//!
//! One flat namespace covers model, training, data, and synthesis settings;
//! unknown keys are rejected so typos cannot silently fall back to defaults.
//! Command-line flags override file values.

use std::path::Path;

use thiserror::Error;

use crate::event::DEFAULT_WINDOW_US;
use crate::msf::MsfHyper;
use crate::synth::SynthSpec;
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected key=value")]
    Malformed { line: usize },
}

/// Merged run configuration with published defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // Model.
    pub d: usize,
    pub t_sim: usize,
    pub omega: usize,
    pub omega_tim: usize,
    pub dilations: [usize; 3],
    pub alpha: f64,
    pub sigma: f64,
    pub tau: f64,
    pub v_th: f64,
    pub beta: f64,
    // Training.
    pub k: usize,
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub seed: u64,
    /// Checkpoint every N epochs; 0 saves only the final model.
    pub save_every: usize,
    // Data.
    pub frames_per_clip: usize,
    pub window_us: u64,
    pub sensor_width: u16,
    pub sensor_height: u16,
    // Synthesis.
    pub n_train: usize,
    pub n_test: usize,
    pub clips_min: usize,
    pub clips_max: usize,
    pub anomaly_fraction: f64,
    pub span_min: usize,
    pub span_max: usize,
    pub base_rate: f64,
    pub anomaly_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hyper = MsfHyper::default();
        let train = TrainConfig::new(0, 7);
        let synth = SynthSpec::default();
        Self {
            d: hyper.d,
            t_sim: hyper.t_sim,
            omega: hyper.omega,
            omega_tim: hyper.omega_tim,
            dilations: hyper.dilations,
            alpha: hyper.alpha,
            sigma: hyper.sigma,
            tau: hyper.tau,
            v_th: hyper.v_th,
            beta: hyper.beta,
            k: train.k,
            lambda: train.lambda,
            lr: train.lr,
            weight_decay: train.weight_decay,
            batch: train.batch,
            seed: synth.seed,
            save_every: 0,
            frames_per_clip: crate::synth::FRAMES_PER_CLIP,
            window_us: DEFAULT_WINDOW_US,
            sensor_width: 32,
            sensor_height: 32,
            n_train: synth.n_train,
            n_test: synth.n_test,
            clips_min: synth.clips_min,
            clips_max: synth.clips_max,
            anomaly_fraction: synth.anomaly_fraction,
            span_min: synth.span_min,
            span_max: synth.span_max,
            base_rate: synth.base_rate,
            anomaly_rate: synth.anomaly_rate,
        }
    }
}

impl RunConfig {
    /// Applies `key=value` lines; `#` starts a comment, blank lines are
    /// skipped, later lines win.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped
                .split_once('=')
                .ok_or(ConfigError::Malformed { line })?;
            let key = key.trim();
            let value = value.trim();
            self.set(key, value, line)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(
            key: &str,
            value: &str,
            line: usize,
        ) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
                reason: e.to_string(),
            })
        }
        match key {
            "d" => self.d = parse(key, value, line)?,
            "t_sim" => self.t_sim = parse(key, value, line)?,
            "omega" => self.omega = parse(key, value, line)?,
            "omega_tim" => self.omega_tim = parse(key, value, line)?,
            "dilations" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        value: value.to_string(),
                        reason: "expected three comma-separated integers".into(),
                    });
                }
                for (slot, part) in self.dilations.iter_mut().zip(parts) {
                    *slot = parse(key, part, line)?;
                }
            }
            "alpha" => self.alpha = parse(key, value, line)?,
            "sigma" => self.sigma = parse(key, value, line)?,
            "tau" => self.tau = parse(key, value, line)?,
            "v_th" => self.v_th = parse(key, value, line)?,
            "beta" => self.beta = parse(key, value, line)?,
            "k" => self.k = parse(key, value, line)?,
            "lambda" => self.lambda = parse(key, value, line)?,
            "lr" => self.lr = parse(key, value, line)?,
            "weight_decay" => self.weight_decay = parse(key, value, line)?,
            "batch" => self.batch = parse(key, value, line)?,
            "seed" => self.seed = parse(key, value, line)?,
            "save_every" => self.save_every = parse(key, value, line)?,
            "frames_per_clip" => self.frames_per_clip = parse(key, value, line)?,
            "window_us" => self.window_us = parse(key, value, line)?,
            "sensor_width" => self.sensor_width = parse(key, value, line)?,
            "sensor_height" => self.sensor_height = parse(key, value, line)?,
            "n_train" => self.n_train = parse(key, value, line)?,
            "n_test" => self.n_test = parse(key, value, line)?,
            "clips_min" => self.clips_min = parse(key, value, line)?,
            "clips_max" => self.clips_max = parse(key, value, line)?,
            "anomaly_fraction" => self.anomaly_fraction = parse(key, value, line)?,
            "span_min" => self.span_min = parse(key, value, line)?,
            "span_max" => self.span_max = parse(key, value, line)?,
            "base_rate" => self.base_rate = parse(key, value, line)?,
            "anomaly_rate" => self.anomaly_rate = parse(key, value, line)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn msf_hyper(&self) -> MsfHyper {
        MsfHyper {
            d: self.d,
            t_sim: self.t_sim,
            omega: self.omega,
            dilations: self.dilations,
            omega_tim: self.omega_tim,
            alpha: self.alpha,
            sigma: self.sigma,
            tau: self.tau,
            v_th: self.v_th,
            beta: self.beta,
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            n_train: self.n_train,
            n_test: self.n_test,
            clips_min: self.clips_min,
            clips_max: self.clips_max,
            d: self.d,
            t_sim: self.t_sim,
            anomaly_fraction: self.anomaly_fraction,
            span_min: self.span_min,
            span_max: self.span_max,
            base_rate: self.base_rate,
            anomaly_rate: self.anomaly_rate,
            seed: self.seed,
        }
    }

    pub fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            k: self.k,
            lambda: self.lambda,
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch: self.batch,
            epochs,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.lambda, 20.0);
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.weight_decay, 5e-4);
        assert_eq!(cfg.batch, 60);
        assert_eq!(cfg.sigma, 1.0);
        assert_eq!(cfg.tau, 0.625);
        assert_eq!(cfg.alpha, 0.6);
        assert_eq!(cfg.window_us, 533_328);
        assert_eq!(cfg.frames_per_clip, 16);
    }

    #[test]
    fn applies_overrides_and_comments() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\ntau = 0.5\ndilations = 1, 3, 9\nseed=99\n")
            .unwrap();
        assert_eq!(cfg.tau, 0.5);
        assert_eq!(cfg.dilations, [1, 3, 9]);
        assert_eq!(cfg.seed, 99);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("tau=0.5\nbogus=1\n").unwrap_err();
        assert!(matches!(
            err,
            ConfigError::UnknownKey { line: 2, ref key } if key == "bogus"
        ));
    }

    #[test]
    fn bad_values_and_missing_equals_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.apply_text("tau=soon"),
            Err(ConfigError::BadValue { line: 1, .. })
        ));
        assert!(matches!(
            cfg.apply_text("tau 0.5"),
            Err(ConfigError::Malformed { line: 1 })
        ));
        assert!(matches!(
            cfg.apply_text("dilations=1,2"),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
