//! Flat `key=value` spec files for fields, bound parameters, simulation
//! configs, and perturbations. One assignment per line, `#` starts a
//! comment, vectors are comma-separated. Unknown and duplicate keys are
//! rejected so typos fail loudly instead of silently using a default.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;
use wtq_core::bounds::{DensityModel, LipschitzParams};
use wtq_core::flow::{EnvelopeKind, Integrator, LinearField, Perturbation, SimConfig};

#[derive(Debug, Error)]
pub enum KvError {
    #[error("line {line}: expected key=value")]
    BadLine { line: usize },
    #[error("duplicate key `{key}`")]
    DuplicateKey { key: String },
    #[error("unknown key `{key}` (expected one of: {allowed})")]
    UnknownKey { key: String, allowed: &'static str },
    #[error("missing key `{key}`")]
    MissingKey { key: &'static str },
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key `{key}`: {why}")]
    Semantic { key: &'static str, why: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct KvMap {
    map: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(KvError::BadLine { line: i + 1 })?;
            let key = key.trim().to_string();
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(KvError::DuplicateKey { key });
            }
        }
        Ok(KvMap { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KvError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn ensure_only(&self, allowed: &'static str) -> Result<(), KvError> {
        let allowed_set: Vec<&str> = allowed.split(", ").collect();
        for key in self.map.keys() {
            if !allowed_set.contains(&key.as_str()) {
                return Err(KvError::UnknownKey {
                    key: key.clone(),
                    allowed,
                });
            }
        }
        Ok(())
    }

    fn raw(&self, key: &'static str) -> Result<&str, KvError> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or(KvError::MissingKey { key })
    }

    pub fn get_str(&self, key: &'static str) -> Result<&str, KvError> {
        self.raw(key)
    }

    pub fn get_str_or(&self, key: &'static str, default: &'static str) -> &str {
        self.map.get(key).map(String::as_str).unwrap_or(default)
    }

    pub fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn get_f64(&self, key: &'static str) -> Result<f64, KvError> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| KvError::BadValue {
            key: key.into(),
            value: v.into(),
            expected: "a real number",
        })
    }

    pub fn get_f64_or(&self, key: &'static str, default: f64) -> Result<f64, KvError> {
        if self.has(key) {
            self.get_f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn get_u64(&self, key: &'static str) -> Result<u64, KvError> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| KvError::BadValue {
            key: key.into(),
            value: v.into(),
            expected: "an unsigned integer",
        })
    }

    pub fn get_f64_list(&self, key: &'static str) -> Result<Vec<f64>, KvError> {
        let v = self.raw(key)?;
        v.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| KvError::BadValue {
                    key: key.into(),
                    value: v.into(),
                    expected: "a comma-separated list of reals",
                })
            })
            .collect()
    }
}

/// Field file: `d`, row-major `a` (d*d entries), offset `c` (d entries).
pub fn load_field(path: impl AsRef<Path>) -> Result<LinearField, KvError> {
    let kv = KvMap::load(path)?;
    kv.ensure_only("d, a, c")?;
    let d = kv.get_u64("d")? as usize;
    let a = kv.get_f64_list("a")?;
    let c = kv.get_f64_list("c")?;
    LinearField::new(d, a, c).map_err(|e| KvError::Semantic {
        key: "a",
        why: e.to_string(),
    })
}

/// Bound-parameter file: the Lipschitz constants plus the uniform range `r`.
pub fn load_params(path: impl AsRef<Path>) -> Result<(LipschitzParams, f64), KvError> {
    let kv = KvMap::load(path)?;
    kv.ensure_only("l_x, l_theta_inf, l_theta_2, l_phi, p, t, r")?;
    let params = LipschitzParams {
        l_x: kv.get_f64("l_x")?,
        l_theta_inf: kv.get_f64("l_theta_inf")?,
        l_theta_2: kv.get_f64("l_theta_2")?,
        l_phi: kv.get_f64("l_phi")?,
        param_count: kv.get_u64("p")?,
        terminal_time: kv.get_f64("t")?,
    };
    params.validate().map_err(|e| KvError::Semantic {
        key: "p",
        why: e.to_string(),
    })?;
    let r = kv.get_f64("r")?;
    if !(r >= 0.0) {
        return Err(KvError::Semantic {
            key: "r",
            why: "must be >= 0".into(),
        });
    }
    Ok((params, r))
}

/// Density spec string: `gaussian:<sigma>`, `laplace:<beta>`, or
/// `empirical:<alpha>`.
pub fn parse_density(spec: &str) -> Result<DensityModel, KvError> {
    let bad = || KvError::BadValue {
        key: "density".into(),
        value: spec.into(),
        expected: "gaussian:<sigma>, laplace:<beta>, or empirical:<alpha>",
    };
    let (kind, value) = spec.split_once(':').ok_or_else(bad)?;
    let x: f64 = value.trim().parse().map_err(|_| bad())?;
    if !(x > 0.0) {
        return Err(KvError::Semantic {
            key: "density",
            why: "parameter must be > 0".into(),
        });
    }
    match kind.trim() {
        "gaussian" => Ok(DensityModel::Gaussian { sigma: x }),
        "laplace" => Ok(DensityModel::Laplace { beta: x }),
        "empirical" => Ok(DensityModel::Empirical { alpha: x }),
        _ => Err(bad()),
    }
}

/// Simulation config file: `t`, `step`, `integrator` (euler|rk4),
/// `n_samples`, `d`, and `seed` unless a CLI override is supplied.
pub fn load_sim_config(
    path: impl AsRef<Path>,
    seed_override: Option<u64>,
) -> Result<SimConfig, KvError> {
    let kv = KvMap::load(path)?;
    kv.ensure_only("t, step, integrator, n_samples, seed, d")?;
    let integrator = match kv.get_str_or("integrator", "rk4") {
        "euler" => Integrator::Euler,
        "rk4" => Integrator::Rk4,
        other => {
            return Err(KvError::BadValue {
                key: "integrator".into(),
                value: other.into(),
                expected: "euler or rk4",
            })
        }
    };
    let seed = match seed_override {
        Some(s) => s,
        None if kv.has("seed") => kv.get_u64("seed")?,
        None => {
            return Err(KvError::Semantic {
                key: "seed",
                why: "randomized commands need a seed (config key or --seed)".into(),
            })
        }
    };
    let config = SimConfig {
        terminal_time: kv.get_f64("t")?,
        step: kv.get_f64("step")?,
        integrator,
        n_samples: kv.get_u64("n_samples")? as usize,
        seed,
        dim: kv.get_u64("d")? as usize,
    };
    config.validate().map_err(|e| KvError::Semantic {
        key: "step",
        why: e.to_string(),
    })?;
    Ok(config)
}

/// Perturbation file: `kind` (offset|matrix|random) with its payload
/// (`delta`, `e`, or `variance`), plus optional `envelope`
/// (uniform|ot-mean) and `l_theta` scaling.
pub fn load_perturb(path: impl AsRef<Path>) -> Result<(Perturbation, EnvelopeKind, f64), KvError> {
    let kv = KvMap::load(path)?;
    kv.ensure_only("kind, delta, e, variance, envelope, l_theta")?;
    let perturbation = match kv.get_str("kind")? {
        "offset" => Perturbation::Offset {
            delta: kv.get_f64_list("delta")?,
        },
        "matrix" => Perturbation::Matrix {
            e: kv.get_f64_list("e")?,
        },
        "random" => Perturbation::RandomOffset {
            variance: kv.get_f64("variance")?,
        },
        other => {
            return Err(KvError::BadValue {
                key: "kind".into(),
                value: other.into(),
                expected: "offset, matrix, or random",
            })
        }
    };
    let envelope = match kv.get_str_or("envelope", "uniform") {
        "uniform" => EnvelopeKind::Uniform,
        "ot-mean" => EnvelopeKind::OtMean,
        other => {
            return Err(KvError::BadValue {
                key: "envelope".into(),
                value: other.into(),
                expected: "uniform or ot-mean",
            })
        }
    };
    let l_theta = kv.get_f64_or("l_theta", 1.0)?;
    if !(l_theta >= 0.0) {
        return Err(KvError::Semantic {
            key: "l_theta",
            why: "must be >= 0".into(),
        });
    }
    Ok((perturbation, envelope, l_theta))
}

/// Inclusive bit range like `2..8` (or a single `4`).
pub fn parse_bits_range(spec: &str) -> Result<Vec<u8>, KvError> {
    let bad = || KvError::BadValue {
        key: "bits-range".into(),
        value: spec.into(),
        expected: "a..b with 1 <= a <= b <= 16",
    };
    let (lo, hi) = match spec.split_once("..") {
        Some((a, b)) => (
            a.trim().parse::<u8>().map_err(|_| bad())?,
            b.trim().parse::<u8>().map_err(|_| bad())?,
        ),
        None => {
            let b = spec.trim().parse::<u8>().map_err(|_| bad())?;
            (b, b)
        }
    };
    if lo < 1 || hi > 16 || lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KvMap::parse("# header\n a = 1.5 \nb=2,3,4 # trailing\n\n").unwrap();
        assert_eq!(kv.get_f64("a").unwrap(), 1.5);
        assert_eq!(kv.get_f64_list("b").unwrap(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(matches!(
            KvMap::parse("a=1\na=2"),
            Err(KvError::DuplicateKey { .. })
        ));
        assert!(matches!(
            KvMap::parse("nonsense"),
            Err(KvError::BadLine { line: 1 })
        ));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let kv = KvMap::parse("d=1\na=0\nc=0\nzz=3").unwrap();
        assert!(matches!(
            kv.ensure_only("d, a, c"),
            Err(KvError::UnknownKey { .. })
        ));
    }

    #[test]
    fn density_specs() {
        assert!(matches!(
            parse_density("gaussian:1.0").unwrap(),
            DensityModel::Gaussian { .. }
        ));
        assert!(matches!(
            parse_density("laplace:0.5").unwrap(),
            DensityModel::Laplace { .. }
        ));
        assert!(matches!(
            parse_density("empirical:3.19").unwrap(),
            DensityModel::Empirical { .. }
        ));
        assert!(parse_density("cauchy:1").is_err());
        assert!(parse_density("gaussian:-1").is_err());
    }

    #[test]
    fn bits_ranges() {
        assert_eq!(parse_bits_range("2..4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_bits_range("7").unwrap(), vec![7]);
        assert!(parse_bits_range("0..4").is_err());
        assert!(parse_bits_range("5..3").is_err());
        assert!(parse_bits_range("2..17").is_err());
    }

    #[test]
    fn sim_config_requires_seed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg");
        std::fs::write(&p, "t=1\nstep=0.1\nintegrator=rk4\nn_samples=4\nd=2\n").unwrap();
        assert!(matches!(
            load_sim_config(&p, None),
            Err(KvError::Semantic { key: "seed", .. })
        ));
        let cfg = load_sim_config(&p, Some(9)).unwrap();
        assert_eq!(cfg.seed, 9);
    }
}
