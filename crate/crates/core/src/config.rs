//! Pipeline configuration and its flat `key=value` text form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IpTreatment {
    Drop,
    PrefixOneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NumericTreatment {
    AsIs,
    Log1p,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClusteringFeatures {
    All,
    ManualSubset,
    Pca,
    AeBottleneck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceMode {
    RawEuclidean,
    NormalizedEuclidean,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let norm: String = s
                    .chars()
                    .filter(|c| c.is_ascii_alphanumeric())
                    .collect::<String>()
                    .to_ascii_lowercase();
                $(
                    let want: String = $text.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
                    if norm == want {
                        return Ok($ty::$variant);
                    }
                )+
                Err(Error::Config(format!(
                    "unknown {} value '{}'", stringify!($ty), s
                )))
            }
        }
    };
}

text_enum!(IpTreatment { Drop => "drop", PrefixOneHot => "prefix-one-hot" });
text_enum!(NumericTreatment { AsIs => "as-is", Log1p => "log1p" });
text_enum!(ClusteringFeatures {
    All => "all",
    ManualSubset => "manual-subset",
    Pca => "pca",
    AeBottleneck => "ae-bottleneck",
});
text_enum!(DistanceMode {
    RawEuclidean => "raw-euclidean",
    NormalizedEuclidean => "normalized-euclidean",
});

/// Every tunable of the two-step pipeline. Defaults reproduce the
/// best-performing configuration of the original grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub epochs_max: usize,
    pub delta_min: f64,
    pub patience_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub pctl_frequent: f64,
    pub pctl_known: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub ip_treatment: IpTreatment,
    pub numeric_treatment: NumericTreatment,
    pub clustering_features: ClusteringFeatures,
    pub distance_mode: DistanceMode,
    /// `None` classifies with the per-cluster percentile thresholds.
    pub global_tanh_threshold: Option<f64>,
    pub sanitize_min_port_count: usize,
    /// Cap on the rows used to evaluate silhouette during k selection;
    /// larger inputs are subsampled under the pipeline seed.
    pub silhouette_sample_size: usize,
    pub rng_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            epochs_max: 200,
            delta_min: 0.00001,
            patience_max: 5,
            batch_size: 64,
            learning_rate: 0.001,
            pctl_frequent: 60.0,
            pctl_known: 100.0,
            k_min: 2,
            k_max: 20,
            ip_treatment: IpTreatment::Drop,
            numeric_treatment: NumericTreatment::Log1p,
            clustering_features: ClusteringFeatures::All,
            distance_mode: DistanceMode::RawEuclidean,
            global_tanh_threshold: Some(0.75),
            sanitize_min_port_count: 10,
            silhouette_sample_size: 10_000,
            rng_seed: 42,
        }
    }
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "epochs_max",
        "delta_min",
        "patience_max",
        "batch_size",
        "learning_rate",
        "pctl_frequent",
        "pctl_known",
        "k_min",
        "k_max",
        "ip_treatment",
        "numeric_treatment",
        "clustering_features",
        "distance_mode",
        "global_tanh_threshold",
        "sanitize_min_port_count",
        "silhouette_sample_size",
        "rng_seed",
    ];

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.epochs_max == 0 {
            return fail("epochs_max must be positive".into());
        }
        if self.delta_min.is_nan() || self.delta_min <= 0.0 {
            return fail(format!("delta_min must be positive, got {}", self.delta_min));
        }
        if self.patience_max == 0 {
            return fail("patience_max must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.pctl_frequent > 0.0 && self.pctl_frequent < 100.0) {
            return fail(format!("pctl_frequent must lie in (0,100), got {}", self.pctl_frequent));
        }
        if !(self.pctl_known > 0.0 && self.pctl_known <= 100.0) {
            return fail(format!("pctl_known must lie in (0,100], got {}", self.pctl_known));
        }
        if self.k_min < 2 {
            return fail(format!("k_min must be at least 2, got {}", self.k_min));
        }
        if self.k_min > self.k_max {
            return fail(format!("k_min {} exceeds k_max {}", self.k_min, self.k_max));
        }
        if let Some(t) = self.global_tanh_threshold {
            if !(t > 0.0 && t < 1.0) {
                return fail(format!("global_tanh_threshold must lie in (0,1), got {t}"));
            }
        }
        if self.silhouette_sample_size < 2 {
            return fail("silhouette_sample_size must be at least 2".into());
        }
        Ok(())
    }

    /// Sets one field from its textual form. `global_tanh_threshold` accepts
    /// `none` to select per-cluster thresholds.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
        }
        let value = value.trim();
        match key.trim() {
            "epochs_max" => self.epochs_max = num(key, value)?,
            "delta_min" => self.delta_min = num(key, value)?,
            "patience_max" => self.patience_max = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "pctl_frequent" => self.pctl_frequent = num(key, value)?,
            "pctl_known" => self.pctl_known = num(key, value)?,
            "k_min" => self.k_min = num(key, value)?,
            "k_max" => self.k_max = num(key, value)?,
            "ip_treatment" => self.ip_treatment = value.parse()?,
            "numeric_treatment" => self.numeric_treatment = value.parse()?,
            "clustering_features" => self.clustering_features = value.parse()?,
            "distance_mode" => self.distance_mode = value.parse()?,
            "global_tanh_threshold" => {
                self.global_tanh_threshold = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "sanitize_min_port_count" => self.sanitize_min_port_count = num(key, value)?,
            "silhouette_sample_size" => self.silhouette_sample_size = num(key, value)?,
            "rng_seed" | "seed" => self.rng_seed = num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses flat `key=value` lines; `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let tanh = self
            .global_tanh_threshold
            .map_or_else(|| "none".to_string(), |t| t.to_string());
        let values = [
            self.epochs_max.to_string(),
            self.delta_min.to_string(),
            self.patience_max.to_string(),
            self.batch_size.to_string(),
            self.learning_rate.to_string(),
            self.pctl_frequent.to_string(),
            self.pctl_known.to_string(),
            self.k_min.to_string(),
            self.k_max.to_string(),
            self.ip_treatment.to_string(),
            self.numeric_treatment.to_string(),
            self.clustering_features.to_string(),
            self.distance_mode.to_string(),
            tanh,
            self.sanitize_min_port_count.to_string(),
            self.silhouette_sample_size.to_string(),
            self.rng_seed.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.ip_treatment, IpTreatment::Drop);
        assert_eq!(c.numeric_treatment, NumericTreatment::Log1p);
        assert_eq!(c.pctl_frequent, 60.0);
        assert_eq!(c.global_tanh_threshold, Some(0.75));
    }

    #[test]
    fn kv_round_trip() {
        let mut c = PipelineConfig::default();
        c.clustering_features = ClusteringFeatures::AeBottleneck;
        c.distance_mode = DistanceMode::NormalizedEuclidean;
        c.global_tanh_threshold = None;
        c.rng_seed = 7;
        let back = PipelineConfig::from_kv_str(&c.to_kv_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_bounds() {
        let mut c = PipelineConfig::default();
        c.k_min = 1;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.k_min = 5;
        c.k_max = 4;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.pctl_frequent = 100.0;
        assert!(c.validate().is_err());
        assert!(PipelineConfig::from_kv_str("bogus=1").is_err());
        assert!(PipelineConfig::from_kv_str("k_min").is_err());
    }

    #[test]
    fn enum_parsing_is_lenient() {
        assert_eq!("PCA".parse::<ClusteringFeatures>().unwrap(), ClusteringFeatures::Pca);
        assert_eq!("prefix_one_hot".parse::<IpTreatment>().unwrap(), IpTreatment::PrefixOneHot);
        assert!("euclid".parse::<DistanceMode>().is_err());
    }
}
