//! Sample measures, fiberwise partitions and leaf partitions, the exact
//! conditional information calculus on finite skew products, and the
//! unstable metric entropy estimators.

pub mod entropy;
pub mod finite;
pub mod partition;
pub mod sampler;

pub use entropy::{
    bowen_ball_entropy, entropy_gap, partition_entropy_rate, smb_trace, EntropyEstimate,
    EntropyGap, EntropyMethod, SmbTrace, TraceRow,
};
pub use finite::{
    conditional_information, information_identities, FiniteSkewSpace, IdentityCheck,
    IdentityReport, Partition, IDENTITY_TOL,
};
pub use partition::{build_partition_pair, GridPartition, PartitionPair};
pub use sampler::{MeasureKind, MeasureSample, MeasureSampler, PERIODIC_TOL};
