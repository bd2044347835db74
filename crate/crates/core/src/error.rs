use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({re}, {im}) is not strictly inside the unit disk")]
    OutsideDisk { re: f64, im: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("log-modulus is -inf: the evaluation point is a zero of the product")]
    AtZero,

    #[error("delta adaptation exhausted: delta fell to {0:e} with the scaling estimate still violated")]
    DeltaExhausted(f64),

    #[error("bad square Q({level},{index}) reached the depth limit")]
    BadAtDepthLimit { level: u32, index: u64 },

    #[error("region below bad square Q({level},{index}) reached the depth limit without a good square")]
    RegionAtDepthLimit { level: u32, index: u64 },

    #[error("component {0} is multiply connected; harmonic measure needs a simply connected interior")]
    MultiplyConnected(usize),

    #[error("source ({re}, {im}) is not interior to component {component}")]
    SourceNotInterior { component: usize, re: f64, im: f64 },

    #[error("point is at hyperbolic distance {distance} from the contour interiors, {required} required")]
    NotAdmissible { distance: f64, required: f64 },

    #[error("arc {component}:{index} belongs to no arc class")]
    OrphanArc { component: usize, index: usize },

    #[error("malformed polyline: {0}")]
    Polyline(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
