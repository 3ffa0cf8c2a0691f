//! Synthetic documents built from several "aspects" (small event
//! descriptions), one of which is the main aspect that the reference summary
//! describes and that most reader comments talk about.

use super::{default_stopwords, label_comments, Example};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Aspects per document, main aspect included.
    pub aspects_per_doc: usize,
    /// Inclusive range of aspect-free filler sentences per document.
    pub filler_sentences: (usize, usize),
    /// Inclusive range of comments per document.
    pub comments_per_doc: (usize, usize),
    /// Inclusive range of comment lengths in tokens.
    pub comment_len: (usize, usize),
    /// Fraction of each document's comments that are noise.
    pub noise_fraction: f64,
    /// Probability that a noise comment names a distractor aspect.
    pub noise_mentions_distractor: f64,
    pub entity_pool: usize,
    pub place_pool: usize,
    pub verb_pool: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            aspects_per_doc: 4,
            filler_sentences: (1, 3),
            comments_per_doc: (7, 11),
            comment_len: (12, 21),
            noise_fraction: 0.2,
            noise_mentions_distractor: 0.5,
            entity_pool: 300,
            place_pool: 60,
            verb_pool: 30,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.aspects_per_doc == 0 {
            return Err(Error::Config("aspects_per_doc must be positive".into()));
        }
        if self.aspects_per_doc < 2 {
            return Err(Error::Config(
                "aspects_per_doc must leave room for at least one distractor".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction)
            || !(0.0..=1.0).contains(&self.noise_mentions_distractor)
        {
            return Err(Error::Config("fractions must lie in [0, 1]".into()));
        }
        let ranges = [self.filler_sentences, self.comments_per_doc, self.comment_len];
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return Err(Error::Config("range with min > max".into()));
        }
        if self.comment_len.0 < 3 {
            return Err(Error::Config("comments need at least 3 tokens".into()));
        }
        if self.entity_pool < 2 * self.aspects_per_doc
            || self.place_pool < self.aspects_per_doc
            || self.verb_pool == 0
        {
            return Err(Error::Config("lexicon pools too small for aspects_per_doc".into()));
        }
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Deterministic pseudo-word: alternating consonant/vowel syllables.
fn syllables(mut index: usize, min_syllables: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut word = String::new();
    let mut count = 0;
    while count < min_syllables || index > 0 {
        let s = index % base;
        index /= base;
        word.push(CONSONANTS[s / VOWELS.len()] as char);
        word.push(VOWELS[s % VOWELS.len()] as char);
        count += 1;
    }
    word
}

struct Lexicon {
    entities: Vec<String>,
    places: Vec<String>,
    verbs_past: Vec<String>,
    verbs_present: Vec<String>,
}

impl Lexicon {
    fn new(config: &SyntheticConfig) -> Self {
        // A prime stride scatters consecutive indices across syllable space;
        // it is coprime to both moduli so the maps stay injective.
        let scatter = |i: usize, modulus: usize| (i * 7919 + 11) % modulus;
        let entities = (0..config.entity_pool)
            .map(|i| syllables(scatter(i, 343_000) + 343_000 * (i / 343_000), 3))
            .collect();
        let places = (0..config.place_pool)
            .map(|i| format!("{}ia", syllables(scatter(i, 4900) + 4900 * (i / 4900), 2)))
            .collect();
        let stems: Vec<String> = (0..config.verb_pool)
            .map(|i| format!("{}n", syllables(scatter(i, 4900) + 4900 * (i / 4900), 2)))
            .collect();
        Self {
            entities,
            places,
            verbs_past: stems.iter().map(|s| format!("{s}ed")).collect(),
            verbs_present: stems.iter().map(|s| format!("{s}s")).collect(),
        }
    }
}

#[derive(Clone, Debug)]
struct Aspect {
    subject: String,
    object: String,
    place: String,
    amount: String,
    verb: usize,
}

const DAYS: &[&str] = &["monday", "tuesday", "wednesday", "thursday", "friday"];

const FILLERS: &[&str] = &[
    "the market remained calm throughout the whole day .",
    "analysts expect further details to emerge later this month .",
    "the weather in the region was unusually warm for the season .",
    "several local newspapers covered the story on their front pages .",
    "no further comment was given at the press conference .",
    "observers noted that similar events happened last year as well .",
    "the announcement came shortly after the quarterly report .",
    "many residents followed the updates closely online .",
];

/// Words used by on-topic comments.
const OPINION_WORDS: &[&str] = &[
    "wow", "great", "deal", "really", "think", "wise", "choice", "money", "lot", "love", "news",
    "finally", "interesting", "believe", "good", "much", "huge", "risky", "smart", "move", "hope",
    "works", "well", "future", "bright", "doubt", "expensive", "bet", "agree", "totally", "seems",
    "amazing", "the", "is", "a", "this", "!", "?", ",",
];

/// Words used by noise comments.
const CHATTER_WORDS: &[&str] = &[
    "lol", "first", "follow", "me", "click", "link", "bio", "haha", "whatever", "bored", "anyone",
    "here", "again", "today", "subscribe", "check", "channel", "free", "gift", "omg", "same",
    "every", "time", "nobody", "cares", "lmao", "ok", "the", "is", "a", "!", "?", ",",
];

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len() as u32) as usize]
}

fn range<R: Rng>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    lo + rng.gen_range(0..=(hi - lo) as u32) as usize
}

fn words(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

fn aspect_sentence<R: Rng>(rng: &mut R, a: &Aspect, lex: &Lexicon) -> Vec<String> {
    let vp = lex.verbs_past[a.verb].as_str();
    let day = pick(rng, DAYS);
    let (s, o, p, n) = (a.subject.as_str(), a.object.as_str(), a.place.as_str(), a.amount.as_str());
    let template: Vec<&str> = match rng.gen_range(0..4u32) {
        0 => vec![s, vp, n, "million", "into", o, "in", p, ",", "according", "to", "sources", "."],
        1 => vec!["in", p, ",", s, vp, o, "with", n, "million", "on", day, "."],
        2 => vec!["officials", "said", s, vp, n, "million", "for", o, "near", p, "last", "week", "."],
        _ => vec![s, "reportedly", vp, o, "in", p, "for", n, "million", "dollars", "on", day, "."],
    };
    template.into_iter().map(str::to_string).collect()
}

fn summary_for(a: &Aspect, lex: &Lexicon) -> Vec<String> {
    [
        a.subject.as_str(),
        lex.verbs_present[a.verb].as_str(),
        a.amount.as_str(),
        "million",
        "dollars",
        "into",
        a.object.as_str(),
        "in",
        a.place.as_str(),
        ",",
        "sources",
        "said",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Filler words with `mentions` inserted at random positions.
fn comment<R: Rng>(rng: &mut R, len: usize, pool: &[&str], mentions: &[&str]) -> Vec<String> {
    let mut toks: Vec<String> = (0..len.saturating_sub(mentions.len()).max(1))
        .map(|_| pick(rng, pool).to_string())
        .collect();
    for m in mentions {
        let at = rng.gen_range(0..=toks.len() as u32) as usize;
        toks.insert(at, m.to_string());
    }
    toks
}

fn sample_distinct<R: Rng>(rng: &mut R, pool: usize, n: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, pool, n).into_vec()
}

fn make_example<R: Rng>(rng: &mut R, config: &SyntheticConfig, lex: &Lexicon) -> Example {
    let k = config.aspects_per_doc;
    let ents = sample_distinct(rng, lex.entities.len(), 2 * k);
    let places = sample_distinct(rng, lex.places.len(), k);
    let amounts = sample_distinct(rng, 998, k);
    let aspects: Vec<Aspect> = (0..k)
        .map(|i| Aspect {
            subject: lex.entities[ents[2 * i]].clone(),
            object: lex.entities[ents[2 * i + 1]].clone(),
            place: lex.places[places[i]].clone(),
            amount: (amounts[i] + 2).to_string(),
            verb: rng.gen_range(0..lex.verbs_past.len() as u32) as usize,
        })
        .collect();
    let main = rng.gen_range(0..k as u32) as usize;

    let mut sentences: Vec<Vec<String>> = aspects
        .iter()
        .map(|a| aspect_sentence(rng, a, lex))
        .collect();
    for _ in 0..range(rng, config.filler_sentences) {
        sentences.push(words(pick(rng, FILLERS)));
    }
    sentences.shuffle(rng);
    let document = sentences.concat();

    let n_comments = range(rng, config.comments_per_doc);
    let n_noise = (config.noise_fraction * n_comments as f64).round() as usize;
    let mut is_noise: Vec<bool> = (0..n_comments).map(|i| i < n_noise).collect();
    is_noise.shuffle(rng);
    let m = &aspects[main];
    let comments = is_noise
        .iter()
        .map(|&noise| {
            let len = range(rng, config.comment_len);
            if noise {
                let mut mentions = Vec::new();
                if k > 1 && rng.gen_bool(config.noise_mentions_distractor) {
                    let mut d = rng.gen_range(0..(k - 1) as u32) as usize;
                    if d >= main {
                        d += 1;
                    }
                    let a = &aspects[d];
                    let which = [&a.subject, &a.object, &a.place];
                    mentions.push(which[rng.gen_range(0..3u32) as usize].as_str());
                }
                comment(rng, len, CHATTER_WORDS, &mentions)
            } else {
                let mut choices = [m.subject.as_str(), m.object.as_str(), m.place.as_str()];
                choices.shuffle(rng);
                let n_mentions = 1 + usize::from(rng.gen_bool(0.5));
                comment(rng, len, OPINION_WORDS, &choices[..n_mentions])
            }
        })
        .collect();

    Example {
        document,
        comments,
        summary: summary_for(m, lex),
        comment_labels: None,
    }
}

/// Generates `n_examples` labelled examples. Output depends only on
/// `(seed, config)`.
pub fn make_synthetic_corpus(
    seed: u64,
    n_examples: usize,
    config: &SyntheticConfig,
) -> Result<Vec<Example>> {
    config.validate()?;
    let lex = Lexicon::new(config);
    let stopwords = default_stopwords();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_examples)
        .map(|_| {
            let ex = make_example(&mut rng, config, &lex);
            let labels = label_comments(&ex.summary, &ex.comments, &stopwords);
            Example {
                comment_labels: Some(labels),
                ..ex
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{sha256_hex, to_jsonl};

    #[test]
    fn deterministic_for_seed() {
        let a = make_synthetic_corpus(42, 100, &SyntheticConfig::default()).unwrap();
        let b = make_synthetic_corpus(42, 100, &SyntheticConfig::default()).unwrap();
        assert_eq!(to_jsonl(&a).unwrap(), to_jsonl(&b).unwrap());
        let c = make_synthetic_corpus(43, 100, &SyntheticConfig::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn serialized_hash_is_pinned() {
        let a = make_synthetic_corpus(7, 20, &SyntheticConfig::default()).unwrap();
        let hash = sha256_hex(&to_jsonl(&a).unwrap());
        assert_eq!(hash, PINNED_HASH, "generator output changed");
    }

    const PINNED_HASH: &str = "5083d31bc327e146ba35bbbe596efdf28017ac65979b8a9087c87fd8057d93e6";

    #[test]
    fn mean_document_length_near_target() {
        let corpus = make_synthetic_corpus(1, 1000, &SyntheticConfig::default()).unwrap();
        let mean = corpus.iter().map(|e| e.document.len()).sum::<usize>() as f64 / 1000.0;
        assert!((mean - 67.0).abs() <= 10.0, "mean document length {mean}");
    }

    #[test]
    fn noise_free_corpus_is_all_helpful() {
        let config = SyntheticConfig {
            noise_fraction: 0.0,
            ..Default::default()
        };
        let corpus = make_synthetic_corpus(3, 200, &config).unwrap();
        for ex in &corpus {
            assert!(ex.comment_labels.as_ref().unwrap().iter().all(|&l| l == 1));
        }
    }

    #[test]
    fn noise_comments_are_labelled_unhelpful() {
        let config = SyntheticConfig {
            noise_fraction: 1.0,
            ..Default::default()
        };
        let corpus = make_synthetic_corpus(3, 200, &config).unwrap();
        for ex in &corpus {
            assert!(ex.comment_labels.as_ref().unwrap().iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn summary_is_about_one_document_aspect() {
        let corpus = make_synthetic_corpus(5, 50, &SyntheticConfig::default()).unwrap();
        for ex in &corpus {
            ex.validate().unwrap();
            // subject, amount, object, and place are copied from the document
            for idx in [0, 2, 6, 8] {
                assert!(ex.document.contains(&ex.summary[idx]));
            }
        }
    }

    #[test]
    fn zero_aspects_is_a_config_error() {
        let config = SyntheticConfig {
            aspects_per_doc: 0,
            ..Default::default()
        };
        assert!(matches!(make_synthetic_corpus(1, 1, &config), Err(Error::Config(_))));
    }

    #[test]
    fn lexicon_categories_are_disjoint() {
        let lex = Lexicon::new(&SyntheticConfig::default());
        let mut all: Vec<&String> = lex
            .entities
            .iter()
            .chain(&lex.places)
            .chain(&lex.verbs_past)
            .chain(&lex.verbs_present)
            .collect();
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
        let fixed: Vec<&str> = FILLERS
            .iter()
            .flat_map(|s| s.split(' '))
            .chain(OPINION_WORDS.iter().copied())
            .chain(CHATTER_WORDS.iter().copied())
            .chain(DAYS.iter().copied())
            .collect();
        assert!(all.iter().all(|w| !fixed.contains(&w.as_str())));
    }
}
