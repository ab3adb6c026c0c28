//! Discrete-event simulation of application arrivals, placements and
//! completions on a heterogeneous fleet.

mod clock;
mod env;
mod episode;
mod workload;

pub use clock::{Event, EventKind, SimClock};
pub use env::{replay_utilization, resource_check, AssignOutcome, AssignmentRecord, EnvConfig, SimEnv};
pub use episode::{
    ActorBuffer, ActorRecord, Decision, DecisionRecord, EpisodeLog, EpisodeRunner, Feedback, FixedServer,
    RandomScheduler, RoundRobin, Scheduler, UserBuffer, UserRecord,
};
pub use workload::{
    generate_workload, AppArrival, ArrivalProcess, CountSpan, Span, WorkloadProfile, WorkloadStream,
};
