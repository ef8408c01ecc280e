//! Single-threaded network simulator with a virtual clock.  Messages within
//! one round travel in parallel; the clock advances by the slowest arrival.
//! Latency draws come from a dedicated RNG stream so the model never
//! perturbs protocol bytes, only simulated wall time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::fault::LatencyModel;
use crate::transcript::{MessageRecord, Party, Phase, Transcript};

/// Frame overhead added to every recorded message: 4-byte length prefix plus
/// the type byte, matching the wire protocol.
pub const FRAME_OVERHEAD: usize = 5;

pub struct Simulator {
    clock_ms: u64,
    latency: LatencyModel,
    latency_rng: ChaCha20Rng,
    transcript: Transcript,
    round: Vec<u64>,
}

impl Simulator {
    pub fn new(seed: u64, latency: LatencyModel) -> Self {
        let mut latency_rng = ChaCha20Rng::seed_from_u64(seed);
        // dedicated stream: protocol randomness uses the default stream
        latency_rng.set_stream(0x1a7e);
        Simulator {
            clock_ms: 0,
            latency,
            latency_rng,
            transcript: Transcript::new(),
            round: Vec::new(),
        }
    }

    fn draw_latency(&mut self) -> u64 {
        let jitter = if self.latency.jitter_ms == 0 {
            0
        } else {
            self.latency_rng.gen_range(0..=self.latency.jitter_ms)
        };
        self.latency.fixed_ms + jitter
    }

    /// Record one message in the current round.
    pub fn send(&mut self, sender: Party, receiver: Party, phase: Phase, payload_bytes: usize) {
        let latency = self.draw_latency();
        self.round.push(latency);
        self.transcript.record(MessageRecord {
            time_ms: self.clock_ms,
            sender,
            receiver,
            phase,
            bytes: payload_bytes + FRAME_OVERHEAD,
        });
    }

    /// Close the round: the clock advances by the slowest in-flight message.
    pub fn end_round(&mut self) {
        if let Some(max) = self.round.iter().max() {
            self.clock_ms += max;
        }
        self.round.clear();
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn into_transcript(self) -> (Transcript, u64) {
        (self.transcript, self.clock_ms)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}
