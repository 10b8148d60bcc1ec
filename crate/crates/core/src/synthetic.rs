//! Seeded synthetic datasets with known structure.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Conversation, Label};
use crate::model::NUM_CLASSES;
use crate::sparse::FeatureVector;

/// Letters used for filler words. None of the marker letters (h, w, u, g, y)
/// appear, so a marker trigram can only come from an inserted marker.
const FILLER: &[u8] = b"bcdefiklmnoprst";

/// Character trigram that decides each emotion label.
pub const MARKERS: [(Label, &str); 3] = [(Label::Happy, "hah"), (Label::Sad, "wuw"), (Label::Angry, "gyg")];

fn filler_word(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| *FILLER.choose(rng).unwrap() as char).collect()
}

/// Conversations of random filler words where exactly one word of one random
/// turn carries a 3-letter insert: the label's marker for emotions, a random
/// filler trigram for Others. Labels cycle uniformly over the four classes.
pub fn planted_corpus(n: usize, seed: u64) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = Label::ALL[rng.random_range(0..4)];
            let mut turns: [Vec<String>; 3] = std::array::from_fn(|_| {
                let words = rng.random_range(3..=8);
                (0..words)
                    .map(|_| {
                        let len = rng.random_range(3..=7);
                        filler_word(&mut rng, len)
                    })
                    .collect()
            });
            let insert = match MARKERS.iter().find(|(l, _)| *l == label) {
                Some((_, m)) => m.to_string(),
                None => filler_word(&mut rng, 3),
            };
            let t = rng.random_range(0..3);
            let w = rng.random_range(0..turns[t].len());
            let word = &mut turns[t][w];
            let at = rng.random_range(0..=word.len());
            word.insert_str(at, &insert);
            let text: [String; 3] = turns.map(|ws| ws.join(" "));
            Conversation {
                id: format!("s{i:05}"),
                turns: text,
                label: Some(label),
            }
        })
        .collect()
}

/// Two uniform features in (0, 1); the label is Happy when both lie on the same
/// side of 0.5 and Sad otherwise.
pub fn xor_dataset(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random_range(0.01..0.99);
        let b: f64 = rng.random_range(0.01..0.99);
        rows.push(FeatureVector::from_dense(&[a, b]).unwrap());
        labels.push(if (a > 0.5) == (b > 0.5) { Label::Happy } else { Label::Sad });
    }
    (rows, labels)
}

fn normalize(mut p: [f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    p
}

/// Probability rows where the Happy column is over-confident on Others rows.
///
/// Emotion rows give their class a clear lead; Others rows put 0.30–0.55 on
/// Happy, which beats every other emotion, so the argmax rule turns all of them
/// into Happy false positives.
pub fn overconfident_probas(n: usize, seed: u64) -> (Vec<[f64; NUM_CLASSES]>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probas = Vec::with_capacity(n);
    let mut golds = Vec::with_capacity(n);
    for i in 0..n {
        let gold = Label::ALL[i % 4];
        let p = if gold == Label::Others {
            let happy = rng.random_range(0.30..0.55);
            let sad = rng.random_range(0.0..0.1);
            let angry = rng.random_range(0.0..0.1);
            [happy, sad, angry, 1.0 - happy - sad - angry]
        } else {
            let lead = rng.random_range(0.5..0.9);
            let mut rest: [f64; NUM_CLASSES] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            rest[gold.index()] = 0.0;
            let rest = normalize(rest);
            let mut p = rest.map(|v| v * (1.0 - lead));
            p[gold.index()] = lead;
            p
        };
        probas.push(p);
        golds.push(gold);
    }
    (probas, golds)
}
