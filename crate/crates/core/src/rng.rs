use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent, platform-stable stream seed from a base seed and
/// a list of labels (writer id, category, purpose).
pub(crate) fn stream_seed(seed: u64, parts: &[&str]) -> u64 {
    // FNV-1a over the labels, separated so ("ab","c") != ("a","bc").
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    splitmix64(seed ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn stream(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_separated() {
        assert_ne!(stream_seed(1, &["ab", "c"]), stream_seed(1, &["a", "bc"]));
        assert_eq!(
            stream_seed(1, &["W1", "S_05"]),
            stream_seed(1, &["W1", "S_05"])
        );
        assert_ne!(stream_seed(1, &["W1"]), stream_seed(2, &["W1"]));
    }
}
