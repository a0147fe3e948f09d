//! Utterance featurization: bag of words, averaged word embeddings, and
//! assembly of the fixed-width observation vector.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

const STRIP: &[char] = &['.', ',', '!', '?', ';', ':'];

/// Lowercases, drops `.,!?;:` and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(STRIP, " ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Dense token index, insertion ordered and frozen once built.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// One entry per distinct token of the given utterances, in order of first
    /// appearance.
    pub fn build<'a>(utterances: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Vocabulary::default();
        for u in utterances {
            for tok in tokenize(u) {
                vocab.insert(tok);
            }
        }
        vocab
    }

    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut vocab = Vocabulary::default();
        for t in tokens {
            vocab.insert(t);
        }
        vocab
    }

    fn insert(&mut self, tok: String) {
        if !self.index.contains_key(&tok) {
            self.index.insert(tok.clone(), self.tokens.len());
            self.tokens.push(tok);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Binary presence vector; unknown tokens are ignored.
    pub fn bow_vector(&self, utterance: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for tok in tokenize(utterance) {
            if let Some(i) = self.index_of(&tok) {
                v[i] = 1.0;
            }
        }
        v
    }

    /// One token per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for t in &self.tokens {
            writeln!(out, "{t}").expect("writing to a Vec cannot fail");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_tokens(
            text.lines().filter(|l| !l.is_empty()).map(str::to_string),
        ))
    }
}

/// Read-only word vectors of one shared dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Builds a table from in-memory entries. Later duplicates win.
    pub fn from_entries(
        dimension: usize,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self> {
        let mut vectors = HashMap::new();
        for (word, v) in entries {
            if v.len() != dimension {
                return Err(Error::Dimension {
                    what: "embedding vector",
                    expected: dimension,
                    actual: v.len(),
                });
            }
            vectors.insert(word, v);
        }
        Ok(EmbeddingTable { dimension, vectors })
    }

    /// Text format: one word per line followed by its space-separated
    /// components. A leading `count dimension` header line, as written by
    /// word2vec, is skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }

    pub fn read(reader: impl BufRead, name: &str) -> Result<Self> {
        let mut dimension = None;
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(name, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if line_no == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok())
            {
                continue;
            }
            let word = fields[0].to_string();
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(name, line_no, format!("bad number: {e}")))?;
            match dimension {
                None => dimension = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::parse(
                        name,
                        line_no,
                        format!("expected {d} values, found {}", values.len()),
                    ))
                }
                Some(_) => {}
            }
            if values.is_empty() {
                return Err(Error::parse(name, line_no, "word has no vector"));
            }
            if vectors.insert(word.clone(), values).is_some() {
                warn!("{name}:{line_no}: duplicate embedding for {word:?}; keeping the later one");
            }
        }
        Ok(EmbeddingTable {
            dimension: dimension.unwrap_or(0),
            vectors,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Mean of the vectors of in-table tokens; zero when there are none.
    pub fn utterance_embedding(&self, utterance: &str) -> Vec<f64> {
        let mut sum = vec![0.0; self.dimension];
        let mut n = 0usize;
        for tok in tokenize(utterance) {
            if let Some(v) = self.vectors.get(&tok) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                n += 1;
            }
        }
        if n > 0 {
            sum.iter_mut().for_each(|s| *s /= n as f64);
        }
        sum
    }
}

/// Segment widths of the observation, in concatenation order. A disabled
/// segment has width 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ObservationLayout {
    pub bow: usize,
    pub embedding: usize,
    pub context: usize,
    pub api: usize,
}

impl ObservationLayout {
    pub fn obs_size(&self) -> usize {
        self.bow + self.embedding + self.context + self.api
    }
}

/// The concatenated per-turn network observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn assemble_observation(
    bow: &[f64],
    embedding: &[f64],
    context: &[f64],
    api_features: &[f64],
    layout: &ObservationLayout,
) -> Result<Observation> {
    for (what, expected, actual) in [
        ("bag-of-words segment", layout.bow, bow.len()),
        ("embedding segment", layout.embedding, embedding.len()),
        ("context segment", layout.context, context.len()),
        ("api segment", layout.api, api_features.len()),
    ] {
        if expected != actual {
            return Err(Error::Dimension {
                what,
                expected,
                actual,
            });
        }
    }
    let mut v = Vec::with_capacity(layout.obs_size());
    v.extend_from_slice(bow);
    v.extend_from_slice(embedding);
    v.extend_from_slice(context);
    v.extend_from_slice(api_features);
    Ok(Observation(v))
}

/// Text-derived observation segments. Either part may be absent.
#[derive(Debug, Clone, Default)]
pub struct Featurizer {
    pub vocab: Option<Vocabulary>,
    pub embeddings: Option<EmbeddingTable>,
}

impl Featurizer {
    pub fn none() -> Self {
        Featurizer::default()
    }

    pub fn bow_len(&self) -> usize {
        self.vocab.as_ref().map_or(0, Vocabulary::len)
    }

    pub fn embedding_len(&self) -> usize {
        self.embeddings.as_ref().map_or(0, EmbeddingTable::dimension)
    }

    pub fn layout(&self, context: usize, api: usize) -> ObservationLayout {
        ObservationLayout {
            bow: self.bow_len(),
            embedding: self.embedding_len(),
            context,
            api,
        }
    }

    pub fn bow(&self, utterance: &str) -> Vec<f64> {
        self.vocab
            .as_ref()
            .map_or_else(Vec::new, |v| v.bow_vector(utterance))
    }

    pub fn embedding(&self, utterance: &str) -> Vec<f64> {
        self.embeddings
            .as_ref()
            .map_or_else(Vec::new, |t| t.utterance_embedding(utterance))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn abc() -> Vocabulary {
        Vocabulary::build(["a b", "b c"])
    }

    #[test]
    fn tokenizer_lowercases_and_strips_punctuation() {
        assert_eq!(
            tokenize("Hello, World! i'd like: Rome."),
            vec!["hello", "world", "i'd", "like", "rome"]
        );
        assert!(tokenize("  ").is_empty());
    }

    #[test]
    fn vocabulary_is_insertion_ordered() {
        let v = abc();
        assert_eq!(v.tokens(), &["a", "b", "c"]);
        assert_eq!(v.len(), 3);
        assert_eq!(v, abc());
    }

    #[test]
    fn bow_is_binary_presence() {
        let v = abc();
        assert_eq!(v.bow_vector("a c a"), vec![1.0, 0.0, 1.0]);
        assert_eq!(v.bow_vector("x y"), vec![0.0; 3]);
        assert_eq!(v.bow_vector(""), vec![0.0; 3]);
    }

    #[test]
    fn vocabulary_persists_one_token_per_line() {
        let dir = std::env::temp_dir().join(format!("hcn-vocab-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("vocab.txt");
        abc().save(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a\nb\nc\n");
        assert_eq!(Vocabulary::load(&path).unwrap(), abc());
    }

    #[test]
    fn embedding_file_parsing() {
        let t = EmbeddingTable::read("cat 1 0 0.5\ndog 0 1 -0.5\n".as_bytes(), "mem").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dimension(), 3);

        let t = EmbeddingTable::read("a 1 0\na 0 1\n".as_bytes(), "mem").unwrap();
        assert_eq!(t.get("a"), Some(&[0.0, 1.0][..]));

        let err = EmbeddingTable::read("a 1 0\nb 1 0 0\n".as_bytes(), "mem").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }

        let t = EmbeddingTable::read("2 2\na 1 0\nb 0 1\n".as_bytes(), "mem").unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn utterance_embedding_averages_known_words() {
        let t = EmbeddingTable::read("x 1 0\ny 0 1\n".as_bytes(), "mem").unwrap();
        assert_eq!(t.utterance_embedding("x y"), vec![0.5, 0.5]);
        assert_eq!(t.utterance_embedding("x"), vec![1.0, 0.0]);
        assert_eq!(t.utterance_embedding("zzz"), vec![0.0, 0.0]);
    }

    #[test]
    fn observation_sizes_for_known_configurations() {
        let task5 = ObservationLayout {
            bow: 85,
            embedding: 300,
            context: 4,
            api: 0,
        };
        assert_eq!(task5.obs_size(), 389);
        let task6 = ObservationLayout {
            bow: 523,
            embedding: 300,
            context: 14,
            api: 0,
        };
        assert_eq!(task6.obs_size(), 837);
        let dialer = ObservationLayout {
            context: 17,
            ..Default::default()
        };
        let obs = assemble_observation(&[], &[], &[0.0; 17], &[], &dialer).unwrap();
        assert_eq!(obs.len(), 17);
        assert!(assemble_observation(&[1.0], &[], &[0.0; 17], &[], &dialer).is_err());
    }

    proptest! {
        #[test]
        fn bow_depends_only_on_token_set(words in prop::collection::vec("[a-e]", 0..8)) {
            let v = Vocabulary::build(["a b c d"]);
            let text = words.join(" ");
            let mut dedup = words.clone();
            dedup.sort();
            dedup.dedup();
            let b = v.bow_vector(&text);
            prop_assert_eq!(&b, &v.bow_vector(&dedup.join(" ")));
            prop_assert!(b.iter().all(|&x| x == 0.0 || x == 1.0));
        }

        #[test]
        fn corrupting_a_segment_touches_only_its_offsets(
            seg in 0usize..4,
            value in -5.0f64..5.0,
        ) {
            let layout = ObservationLayout { bow: 3, embedding: 2, context: 4, api: 1 };
            let parts: [Vec<f64>; 4] = [vec![0.0; 3], vec![0.0; 2], vec![0.0; 4], vec![0.0; 1]];
            let base = assemble_observation(&parts[0], &parts[1], &parts[2], &parts[3], &layout).unwrap();
            let mut changed = parts.clone();
            changed[seg][0] = value + 10.0;
            let obs = assemble_observation(&changed[0], &changed[1], &changed[2], &changed[3], &layout).unwrap();
            let offsets = [0, 3, 5, 9];
            let lens = [3, 2, 4, 1];
            for i in 0..obs.len() {
                let inside = i >= offsets[seg] && i < offsets[seg] + lens[seg];
                if !inside { prop_assert_eq!(obs.as_slice()[i], base.as_slice()[i]); }
            }
            prop_assert_ne!(obs.as_slice()[offsets[seg]], base.as_slice()[offsets[seg]]);
        }
    }
}
