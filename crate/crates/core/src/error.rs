use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("inconsistent shares: {0}")]
    InconsistentShares(String),
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("round desync: expected round {expected}, got {got} from party {from}")]
    RoundDesync { expected: u32, got: u32, from: usize },
    #[error("counter desync: counter {0} already consumed")]
    CounterDesync(u64),
    #[error("mask pool exhausted")]
    MaskExhausted,
    #[error("mask {0} already consumed")]
    MaskReuse(usize),
    #[error("point is not on the curve")]
    OffCurve,
    #[error("nonce reused for this key")]
    NonceReuse,
    #[error("network model is singular: {0}")]
    SingularNetwork(String),
    #[error("unknown peer {0}")]
    UnknownPeer(String),
    #[error("key missing: {0}")]
    KeyMissing(String),
    #[error("identity already registered")]
    DuplicateIdentity,
    #[error("identity not registered")]
    UnregisteredIdentity,
    #[error("signature invalid for user {0}")]
    SignatureInvalid(usize),
    #[error("schnorr batch verification failed")]
    SchnorrBatchFailed,
    #[error("decryption failed for user {0}")]
    DecryptFailed(usize),
    #[error("market has no participants")]
    EmptyMarket,
    #[error("opened identity has no registered recipient")]
    UnknownRecipient,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("peer unreachable: {0}")]
    PeerUnreachable(String),
    #[error("timeout in phase {0}")]
    Timeout(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
