use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rooms {0} and {1} overlap")]
    RoomsOverlap(usize, usize),
    #[error("panel {panel} does not fit on wall {wall}")]
    PanelOffWall { panel: usize, wall: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid STAR-RIS coefficients: {0}")]
    InvalidBeams(String),
    #[error("UE {ue} is not a member of cluster {cluster} at AP {ap}")]
    NotInCluster { ap: usize, cluster: usize, ue: usize },
    #[error("cannot form {clusters} clusters from {ues} UEs")]
    TooFewUes { clusters: usize, ues: usize },
    #[error("argument must be strictly positive: {0}")]
    NonPositive(&'static str),
    #[error("training diverged: {0}")]
    Diverged(String),
}
