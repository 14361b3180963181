//! Counter-based random streams.
//!
//! Every shot gets its own ChaCha8 stream addressed by a setting id and the
//! shot index, so results do not depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per shot; a shot consumes far fewer.
const WORDS_PER_SHOT_LOG2: u32 = 16;

#[derive(Debug, Clone)]
pub struct StreamFactory {
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { key }
    }

    pub fn stream(&self, setting_id: u64, shot_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(setting_id);
        rng.set_word_pos((shot_index as u128) << WORDS_PER_SHOT_LOG2);
        rng
    }
}

/// Stream id for an analyzer setting, derived from the bit patterns of the
/// angles so it needs no index into a grid.
pub fn setting_id(beta: f64, delta: f64) -> u64 {
    let mut state = beta.to_bits() ^ delta.to_bits().rotate_left(29);
    splitmix64(&mut state)
}

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
