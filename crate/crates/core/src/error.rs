use thiserror::Error;

use crate::GlobalId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty scene")]
    EmptyScene,
    #[error("label out of range: {label} >= {num_classes}")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("duplicate global id {0}")]
    DuplicateGlobalId(GlobalId),
    #[error("unknown global id {0}")]
    UnknownGlobalId(GlobalId),
    #[error("instance {0} mixes ground-truth labels")]
    InstanceNotHomogeneous(u32),
    #[error("color component out of range on point {0}")]
    ColorOutOfRange(GlobalId),
    #[error("malformed {format} data: {msg}")]
    Malformed { format: &'static str, msg: String },
    #[error("history not full")]
    HistoryNotFull,
    #[error("no reliable votes")]
    NoReliableVotes,
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    fn malformed(format: &'static str, msg: impl Into<String>) -> Self {
        Error::Malformed {
            format,
            msg: msg.into(),
        }
    }

    pub(crate) fn pnts(msg: impl Into<String>) -> Self {
        Error::malformed("PNTS", msg)
    }

    pub(crate) fn lbls(msg: impl Into<String>) -> Self {
        Error::malformed("LBLS", msg)
    }

    pub(crate) fn ckpt(msg: impl Into<String>) -> Self {
        Error::malformed("checkpoint", msg)
    }
}
