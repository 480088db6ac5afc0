//! Byte-level havoc mutation, the unstructured baseline.

use rand::Rng;

const INTERESTING: [u8; 10] = [0, 1, 0x7f, 0x80, 0xff, b' ', b'\n', b'%', b'0', b'i'];
const MAX_LEN: usize = 4096;

/// Applies 1..=8 random byte edits (bit flips, interesting bytes, random
/// overwrites, insertions, deletions, block duplication) to `base`.
pub fn havoc<R: Rng>(rng: &mut R, base: &[u8]) -> Vec<u8> {
    let mut out = base.to_vec();
    let n = 1 << rng.gen_range(0..=3);
    for _ in 0..n {
        if out.is_empty() {
            let len = rng.gen_range(1..=16);
            out.extend((0..len).map(|_| rng.gen::<u8>()));
            continue;
        }
        let i = rng.gen_range(0..out.len());
        match rng.gen_range(0..7) {
            0 => out[i] ^= 1 << rng.gen_range(0..8),
            1 => out[i] = INTERESTING[rng.gen_range(0..INTERESTING.len())],
            2 => out[i] = rng.gen(),
            3 => out[i] = out[i].wrapping_add(rng.gen_range(1..=35)),
            4 if out.len() < MAX_LEN => {
                let b = rng.gen();
                out.insert(i, b);
            }
            5 => {
                let len = rng.gen_range(1..=(out.len() - i).min(16));
                out.drain(i..i + len);
            }
            _ if out.len() < MAX_LEN => {
                let len = rng.gen_range(1..=(out.len() - i).min(32));
                let chunk = out[i..i + len].to_vec();
                let at = rng.gen_range(0..=out.len());
                out.splice(at..at, chunk);
            }
            _ => out[i] = rng.gen(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grows_from_empty_and_changes_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(!havoc(&mut rng, b"").is_empty());
        let base = b"define void @f() {\nE:\n  ret void\n}\n";
        let changed = (0..100).filter(|_| havoc(&mut rng, base) != base).count();
        assert!(changed > 90);
    }

    #[test]
    fn length_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut buf = vec![b'a'; 100];
        for _ in 0..5000 {
            buf = havoc(&mut rng, &buf);
        }
        assert!(buf.len() <= MAX_LEN + 64);
    }
}
