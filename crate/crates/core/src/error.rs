use std::path::PathBuf;

use thiserror::Error;

use crate::types::GaussianKind;

#[derive(Debug, Error)]
pub enum GmmapError {
    #[error("gaussian has no evidence (xi = {0})")]
    EmptyGaussian(f64),

    #[error("cannot fuse a {0:?} gaussian with a {1:?} gaussian")]
    KindMismatch(GaussianKind, GaussianKind),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("image is {got_w}x{got_h} but the camera expects {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("id {0} is already stored in the index")]
    DuplicateId(u64),

    #[error("id {0} is not stored in the index")]
    MissingId(u64),

    #[error("free basis recovers negative evidence ({xi}) in subregion {subregion}")]
    InconsistentBasis { xi: f64, subregion: usize },

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("{path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error("malformed map file: {0}")]
    MapFormat(String),

    #[error("unsupported map file version {0}")]
    UnsupportedVersion(u32),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("unknown config key `{key}` on line {line}")]
    UnknownConfigKey { key: String, line: usize },

    #[error("scene file line {line}: {reason}")]
    Scene { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
}

pub type Result<T> = std::result::Result<T, GmmapError>;

pub(crate) fn invalid_param(name: &str, reason: impl Into<String>) -> GmmapError {
    GmmapError::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
