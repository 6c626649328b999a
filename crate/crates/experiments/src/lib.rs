//! Experiment harness: false-positive/negative sweeps, detection-rate
//! studies, post-selection filtering and the constant-period baseline.
//!
//! Every experiment returns an [`ExperimentResult`] whose rows carry a value,
//! twice its standard error and the sample count.

pub mod config;
pub mod detection;
pub mod detector;
pub mod filtering;
pub mod result;
pub mod stats;
pub mod sweeps;

pub use config::Mode;
pub use result::{ExperimentResult, Manifest, Row};

#[derive(Debug, thiserror::Error)]
pub enum ExpError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] csmqc::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExpError {
    /// Process exit code: 1 for configuration problems, 2 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Numerical(csmqc::Error::InvalidParameter(_))
            | ExpError::Numerical(csmqc::Error::InvalidPauli(_))
            | ExpError::Numerical(csmqc::Error::NonUnitAxis(_))
            | ExpError::Numerical(csmqc::Error::Json(_))
            | ExpError::Numerical(csmqc::Error::Io(_)) => 1,
            ExpError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExpError>;

/// Independent generator for a labelled unit of work. Streams depend only on
/// the seed and the labels, never on scheduling.
pub fn substream(seed: u64, keys: &[u64]) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // splitmix64 fold of the labels
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &k in keys {
        h ^= k.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    rng.set_stream(h);
    rng
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ExpError::Config(msg.into()))
}
