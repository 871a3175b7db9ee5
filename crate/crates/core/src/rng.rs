use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one path or sample: the seed picks the key, the index
/// picks an independent ChaCha stream, so output never depends on which
/// thread produced it.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
