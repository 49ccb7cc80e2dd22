//! Keyed, counter-addressed random streams.
//!
//! Every random decision in a run draws from a stream identified by
//! `(master_seed, domain, entity)`. The value at position `counter` of a
//! stream is a pure function of those four numbers, so draws made in one
//! domain (for example by the app model) can never shift the values seen by
//! another domain (epidemic or schedule draws). Streams are backed by
//! ChaCha8 keyed with the 256-bit tuple
//! `(master_seed, domain tag, entity, "cocoaabm")`.
//!
//! Draw accounting, in units of `counter`:
//!
//! | operation        | counter advance |
//! |------------------|-----------------|
//! | `next_u64`       | 1               |
//! | `next_uniform`   | 1               |
//! | `next_bernoulli` | 1               |
//! | `next_gaussian`  | 2 (Box–Muller, cosine branch only) |
//! | `next_index(n)`  | 1               |

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which part of the model a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    Init,
    Schedule,
    Epidemic,
    Hospital,
    App,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Init => 0x494e_4954,
            Domain::Schedule => 0x5343_4844,
            Domain::Epidemic => 0x4550_4944,
            Domain::Hospital => 0x484f_5350,
            Domain::App => 0x4150_5020,
        }
    }
}

/// Entity id used for population-wide streams. Agent `k` uses entity `k + 1`.
pub const GLOBAL_ENTITY: u64 = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RngError {
    #[error("probability {0} out of [0,1]")]
    Probability(f64),
    #[error("standard deviation {0} is negative or not finite")]
    StdDev(f64),
    #[error("cannot draw an index from an empty range")]
    EmptyRange,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    domain: Domain,
    entity_id: u64,
    counter: u64,
    inner: ChaCha8Rng,
}

/// Create the stream for `(master_seed, domain, entity_id)` positioned at
/// counter 0.
pub fn derive_stream(master_seed: u64, domain: Domain, entity_id: u64) -> RngStream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.tag().to_le_bytes());
    key[16..24].copy_from_slice(&entity_id.to_le_bytes());
    key[24..32].copy_from_slice(b"cocoaabm");
    RngStream {
        master_seed,
        domain,
        entity_id,
        counter: 0,
        inner: ChaCha8Rng::from_seed(key),
    }
}

impl RngStream {
    /// Stream owned by agent `agent_id` in `domain`.
    pub fn for_agent(master_seed: u64, domain: Domain, agent_id: usize) -> Self {
        derive_stream(master_seed, domain, agent_id as u64 + 1)
    }

    /// Population-wide stream for `domain`.
    pub fn global(master_seed: u64, domain: Domain) -> Self {
        derive_stream(master_seed, domain, GLOBAL_ENTITY)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn entity_id(&self) -> u64 {
        self.entity_id
    }

    /// Number of 64-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    fn word(&mut self) -> u64 {
        self.counter += 1;
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        (self.word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `next_uniform() < p`. Always consumes exactly one word.
    pub fn next_bernoulli(&mut self, p: f64) -> Result<bool, RngError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(RngError::Probability(p));
        }
        Ok(self.next_uniform() < p)
    }

    /// Box–Muller transform on two uniforms; only the cosine variate is
    /// returned so every call consumes exactly two words.
    pub fn next_gaussian(&mut self, mean: f64, std: f64) -> Result<f64, RngError> {
        if !(std >= 0.0 && std.is_finite()) {
            return Err(RngError::StdDev(std));
        }
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        Ok(mean + std * radius * (std::f64::consts::TAU * u2).cos())
    }

    /// Uniform index in `0..n` as `floor(u * n)`.
    pub fn next_index(&mut self, n: usize) -> Result<usize, RngError> {
        if n == 0 {
            return Err(RngError::EmptyRange);
        }
        let idx = (self.next_uniform() * n as f64) as usize;
        Ok(idx.min(n - 1))
    }

    /// Uniform real in `[lo, hi]` (degenerate ranges return `lo`).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.word() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.word().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
