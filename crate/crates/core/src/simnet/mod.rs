//! Deterministic discrete-event network substrate.

mod latency;
mod log;
mod queue;
mod workload;

pub use latency::{DelayDist, LatencyModel, LinkOverride};
pub use log::{build_ballots_from_log, build_timestamps_from_log, Reception, ReceptionLog};
pub use queue::{Event, EventQueue, Micros, SimError};
pub use workload::{client_message_id, generate_clients, ClientSend, ClientWorkload, Dissemination};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent generator for one purpose (`stream`) of a seeded run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
