//! Synthetic byte-classification task for the toy trainer.
//!
//! Each sequence belongs to one of four classes; most bytes are drawn from
//! the class's quarter of the byte range, the rest are uniform noise. The
//! label is read out of the class logits (vocabulary entries 0..4) at the
//! final position.

use rand::Rng;

pub const NUM_CLASSES: usize = 4;

#[derive(Clone, Debug)]
pub struct ClassSample {
    pub tokens: Vec<u8>,
    pub label: usize,
}

pub fn gen_classification_data<R: Rng + ?Sized>(
    count: usize,
    seq_len: usize,
    rng: &mut R,
) -> Vec<ClassSample> {
    (0..count)
        .map(|_| {
            let label = rng.random_range(0..NUM_CLASSES);
            let base = (label * 64) as u8;
            let tokens = (0..seq_len)
                .map(|_| {
                    if rng.random_range(0.0..1.0) < 0.85 {
                        base + rng.random_range(0..64u8)
                    } else {
                        rng.random_range(0..=255u8)
                    }
                })
                .collect();
            ClassSample { tokens, label }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn samples_have_requested_shape() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let data = gen_classification_data(32, 12, &mut rng);
        assert_eq!(data.len(), 32);
        assert!(data.iter().all(|s| s.tokens.len() == 12 && s.label < NUM_CLASSES));
        // classes are class-signal dominated
        let s = &data[0];
        let in_band = s
            .tokens
            .iter()
            .filter(|&&t| (t as usize) / 64 == s.label)
            .count();
        assert!(in_band * 2 > s.tokens.len());
    }
}
