//! Update-consistent replicated objects.
//!
//! Objects are specified sequentially ([`adt`]). Replicas ([`replica`])
//! keep every update they have seen, tagged with a Lamport timestamp
//! ([`clock`]), and expose the replay of those updates in timestamp order,
//! so all replicas that saw the same updates agree on a state that some
//! sequential execution of all updates produces. [`simnet`] drives replicas
//! through partitions, crashes and message loss and records a [`history`],
//! which the history checkers classify as eventually consistent, update
//! consistent, or neither.

pub mod adt;
pub mod cli;
pub mod clock;
pub mod history;
pub mod replica;
pub mod simnet;

pub use adt::{Adt, ObjectId, Op, QueryOp, State, UpdateOp, Value};
pub use clock::{Comparator, LamportClock, ProcessId, Timestamp};
pub use history::{check_ec, check_uc, History, UcVerdict};
pub use replica::{Replica, ReplicaMode, SyncDigest, UpdateRecord};
pub use simnet::{simulate, Scenario, SimConfig, SimOutcome};
