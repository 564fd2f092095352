use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("friction curve: {0}")]
    FrictionCurve(String),

    #[error("scene parse error at line {line}: {message}")]
    SceneParse { line: usize, message: String },

    #[error("scene validation failed for `{id}`: {message}")]
    SceneInvalid { id: String, message: String },

    #[error("point ({x}, {y}) lies outside the scene bounds")]
    OutOfBounds { x: f64, y: f64 },

    #[error("unknown element `{0}`")]
    UnknownElement(String),

    #[error("unknown vehicle `{0}`")]
    UnknownVehicle(String),

    #[error("state `{state}` is not valid for element `{id}` of kind {kind}")]
    InvalidElementState { id: String, kind: String, state: String },

    #[error("simulation fault: non-finite {quantity}")]
    SimFault { quantity: String },

    #[error("projection undefined: point lies on the camera plane")]
    ProjectionUndefined,

    #[error("recorder: {0}")]
    Recorder(String),

    #[error("record parse error at line {line}: {message}")]
    RecordParse { line: usize, message: String },

    #[error("behavior rule `{0}` is invalid: {1}")]
    InvalidRule(String, String),

    #[error("environment: {0}")]
    Env(String),

    #[error("waypoint path is empty")]
    EmptyPath,
}
