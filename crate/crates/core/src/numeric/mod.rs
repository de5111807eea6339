//! Differentiable tensor core: the recording tape, parameter storage and
//! initialisation, the Adam optimizer, a central-difference gradient checker
//! and the checkpoint format.

mod adam;
mod checkpoint;
mod gradcheck;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{init_params, Init, Param, ParamSpec, ParamStore, Precision, ShapePlan};
pub use tape::{log_softmax_rows, softmax_rows, Gradients, Matrix, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum NumericError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<(usize, usize)>,
    },

    #[error("unknown parameter {0}")]
    MissingParam(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
