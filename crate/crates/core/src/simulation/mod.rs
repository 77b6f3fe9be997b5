//! Monte Carlo detection sessions and a MAP eavesdropper on the public record.
//!
//! Event `i` of a session draws all its randomness from a ChaCha8 stream
//! keyed by the seed and numbered `i`, so results do not depend on how the
//! work is split across threads.

mod attack;
mod session;

pub use attack::{attack_report, eve_map_attack, plug_in_mutual_information, AttackOutcome};
pub use session::{
    detector_counts, event_rng, publish, read_events, read_public, simulate_session, simulate_session_with,
    write_events, write_public, Background, EventRecord, PublicRecord, SessionOptions,
};
