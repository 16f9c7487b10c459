//! Model dimensions and sampling counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_d_h() -> usize {
    256
}
fn default_d_z() -> usize {
    128
}
fn default_mlp_hidden() -> usize {
    256
}
fn default_q() -> usize {
    3
}
fn default_k() -> usize {
    10
}
fn default_t() -> usize {
    6
}

/// Dimensions of the anticipation network.
///
/// `d_f`/`d_c` come from the data; everything else defaults to the base
/// configuration (hidden 256, goal 128, MLP hidden 256, Q=3, K=10, six
/// observed steps at 3 fps over 2 s).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input feature dimension.
    pub d_f: usize,
    /// Recurrent hidden dimension.
    #[serde(default = "default_d_h")]
    pub d_h: usize,
    /// Latent goal dimension.
    #[serde(default = "default_d_z")]
    pub d_z: usize,
    /// Number of action classes.
    pub d_c: usize,
    /// Hidden width of every two-layer network.
    #[serde(default = "default_mlp_hidden")]
    pub mlp_hidden: usize,
    /// Goal samples drawn per video.
    #[serde(default = "default_q")]
    pub q: usize,
    /// Action candidates sampled per goal.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Observed sequence length.
    #[serde(default = "default_t")]
    pub t: usize,
}

impl ModelConfig {
    pub fn new(d_f: usize, d_c: usize) -> Self {
        ModelConfig {
            d_f,
            d_h: default_d_h(),
            d_z: default_d_z(),
            d_c,
            mlp_hidden: default_mlp_hidden(),
            q: default_q(),
            k: default_k(),
            t: default_t(),
        }
    }

    /// Small dimensions for gradient checks and fast tests.
    pub fn tiny(d_f: usize, d_c: usize) -> Self {
        ModelConfig {
            d_f,
            d_h: 8,
            d_z: 4,
            d_c,
            mlp_hidden: 8,
            q: 2,
            k: 3,
            t: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_f", self.d_f),
            ("d_h", self.d_h),
            ("d_z", self.d_z),
            ("d_c", self.d_c),
            ("mlp_hidden", self.mlp_hidden),
            ("Q", self.q),
            ("K", self.k),
            ("T", self.t),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_base_configuration() {
        let c = ModelConfig::new(1024, 125);
        assert_eq!((c.d_h, c.d_z, c.mlp_hidden), (256, 128, 256));
        assert_eq!((c.q, c.k, c.t), (3, 10, 6));
    }

    #[test]
    fn zero_dimension_is_rejected() {
        let mut c = ModelConfig::new(16, 8);
        c.q = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ModelConfig = serde_json::from_str(r#"{"d_f": 16, "d_c": 8}"#).unwrap();
        assert_eq!(c.d_h, 256);
        assert_eq!(c.k, 10);
    }
}
