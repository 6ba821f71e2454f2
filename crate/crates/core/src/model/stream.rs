//! Counter-based splittable random streams.
//!
//! A [`StreamKey`] is a seed plus a short integer path. Every key maps to its
//! own ChaCha8 key (256 bits derived from the seed and path by a SplitMix64
//! chain), so the sample sequence of a key depends on nothing but the key
//! itself: not on which worker draws it, nor on the order keys are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// Maximum path depth of a key.
pub const MAX_PATH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    path: [u64; MAX_PATH],
    depth: u8,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        Self { seed, path: [0; MAX_PATH], depth: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path[..self.depth as usize]
    }

    /// Extends the path by one index.
    ///
    /// # Panics
    /// If the key is already [`MAX_PATH`] deep.
    #[inline]
    pub fn child(&self, index: u64) -> Self {
        let d = self.depth as usize;
        assert!(d < MAX_PATH, "stream key path deeper than {MAX_PATH}");
        let mut next = *self;
        next.path[d] = index;
        next.depth += 1;
        next
    }

    /// Key for a sibling experiment (a fresh replication) derived from this one.
    pub fn reseeded(&self, salt: u64) -> Self {
        let mut state = self.seed ^ salt.rotate_left(17);
        Self::root(splitmix64(&mut state) ^ salt)
    }

    fn key_material(&self) -> [u8; 32] {
        let mut state = self.seed;
        // Absorb depth then each index; the depth prefix keeps [] and [0] apart.
        let mut acc = splitmix64(&mut state) ^ u64::from(self.depth);
        for &p in self.path() {
            state ^= acc;
            acc = splitmix64(&mut state) ^ p;
            state = state.wrapping_add(acc.rotate_left(23));
            acc = splitmix64(&mut state);
        }
        state ^= acc;
        let mut out = [0u8; 32];
        for chunk in out.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        out
    }

    /// Fresh generator positioned at the start of this key's stream.
    #[inline]
    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.key_material())
    }
}

/// Serialized form: `{ "seed": .., "path": [..] }`.
#[derive(Serialize, Deserialize)]
struct KeyRepr {
    seed: u64,
    path: Vec<u64>,
}

impl Serialize for StreamKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        KeyRepr { seed: self.seed, path: self.path().to_vec() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StreamKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = KeyRepr::deserialize(d)?;
        if repr.path.len() > MAX_PATH {
            return Err(serde::de::Error::custom(format!("stream path deeper than {MAX_PATH}")));
        }
        Ok(repr.path.iter().fold(StreamKey::root(repr.seed), |k, &p| k.child(p)))
    }
}
