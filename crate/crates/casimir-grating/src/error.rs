use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("accuracy error: {0}")]
    Accuracy(String),
    #[error("contact: local separation {h_nm:.3} nm is not positive at x = {x_nm:.2} nm, y = {y_nm:.2} nm")]
    Contact { h_nm: f64, x_nm: f64, y_nm: f64 },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
