use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("controller synthesis failed: {0}")]
    Synthesis(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("collision at t = {time:.2} s: gap behind vehicle {vehicle} closed")]
    Collision { time: f64, vehicle: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
