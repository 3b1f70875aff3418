use thiserror::Error;

/// Crate-wide error type. Every fallible operation returns one of these
/// variants; messages carry enough context to identify the offending input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate quaternion (norm {norm:.3e} below 1e-12)")]
    DegenerateQuaternion { norm: f64 },

    #[error("field of view out of range: {value} rad (must lie in (0, pi))")]
    FovOutOfRange { value: f64 },

    #[error("nonpositive focal length: {value}")]
    NonPositiveFocal { value: f64 },

    #[error("nonpositive depth on {count} masked pixel(s)")]
    NonPositiveDepth { count: usize },

    #[error("empty mask: at least one valid pixel is required")]
    EmptyMask,

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("rank-deficient alignment: {0}")]
    RankDeficientAlignment(String),

    #[error("degenerate similarity: {0}")]
    DegenerateSimilarity(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty point cloud: {0}")]
    EmptyCloud(String),

    #[error("NaN cell in metric table at method '{method}', metric '{metric}'")]
    NanCell { method: String, metric: String },

    #[error("gradient check could not find a kink-free instance after {attempts} resamples")]
    KinkAdjacent { attempts: usize },

    #[error("unknown recipe '{0}' (builtins: vggt, ours)")]
    UnknownRecipe(String),

    #[error("unknown architecture profile '{0}' (builtins: vggt518, vggt1036, carve1036)")]
    UnknownProfile(String),

    #[error("unsupported version '{found}' (this reader handles version \"1\")")]
    UnsupportedVersion { found: String },

    #[error("manifest error in {path}: {reason}")]
    Manifest { path: String, reason: String },

    #[error("tensor file {path}: {reason}")]
    TensorFile { path: String, reason: String },

    #[error("refusing to overwrite {path} (pass force to allow)")]
    RefusingOverwrite { path: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
