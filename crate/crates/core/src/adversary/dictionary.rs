use rand::Rng;

use crate::{Error, Result};

const DEFAULT_WORDS: &str = include_str!("../../data/default_dictionary.txt");

/// Ordered, duplicate-free list of password candidates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dictionary {
    words: Vec<Vec<u8>>,
    true_index: Option<usize>,
}

impl Dictionary {
    /// Keeps the first occurrence of every word.
    pub fn new(words: Vec<Vec<u8>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let words: Vec<Vec<u8>> = words.into_iter().filter(|w| seen.insert(w.clone())).collect();
        if words.is_empty() {
            return Err(Error::InvalidDictionary("dictionary is empty"));
        }
        Ok(Dictionary {
            words,
            true_index: None,
        })
    }

    /// One word per line; blank lines and lines starting with `#` are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        Dictionary::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.as_bytes().to_vec())
                .collect(),
        )
    }

    /// The bundled 64-word list.
    pub fn default_fixture() -> Self {
        Dictionary::from_text(DEFAULT_WORDS).expect("bundled dictionary is valid")
    }

    /// `size` distinct random lowercase words.
    pub fn random<R: Rng>(rng: &mut R, size: usize) -> Result<Self> {
        let mut words = std::collections::BTreeSet::new();
        while words.len() < size {
            let len = rng.gen_range(5..=10);
            words.insert((0..len).map(|_| rng.gen_range(b'a'..=b'z')).collect::<Vec<u8>>());
        }
        Dictionary::new(words.into_iter().collect())
    }

    /// Marks the user's real password. `None` if it is not in the list.
    pub fn with_true_password(mut self, password: &[u8]) -> Self {
        self.true_index = self.words.iter().position(|w| w == password);
        self
    }

    /// Marks the word at `index` as the real password.
    pub fn with_true_index(mut self, index: usize) -> Result<Self> {
        if index >= self.words.len() {
            return Err(Error::InvalidDictionary("true index out of range"));
        }
        self.true_index = Some(index);
        Ok(self)
    }

    pub fn words(&self) -> &[Vec<u8>] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&[u8]> {
        self.words.get(index).map(Vec::as_slice)
    }

    pub fn true_index(&self) -> Option<usize> {
        self.true_index
    }

    pub fn true_password(&self) -> Option<&[u8]> {
        self.true_index.and_then(|i| self.get(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn fixture_has_64_distinct_words() {
        assert_eq!(Dictionary::default_fixture().len(), 64);
    }

    #[test]
    fn duplicates_are_dropped_in_order() {
        let d = Dictionary::from_text("b\na\n\n# comment\nb\nc\n").unwrap();
        assert_eq!(d.words(), &[b"b".to_vec(), b"a".to_vec(), b"c".to_vec()]);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(Dictionary::from_text("\n# only a comment\n").is_err());
    }

    #[test]
    fn true_password_lookup() {
        let d = Dictionary::default_fixture().with_true_password(b"falcon");
        assert_eq!(d.true_password(), Some(&b"falcon"[..]));
        assert_eq!(Dictionary::default_fixture().with_true_password(b"zzz").true_index(), None);
        assert!(Dictionary::default_fixture().with_true_index(64).is_err());
    }

    #[test]
    fn random_dictionaries_have_requested_size() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        assert_eq!(Dictionary::random(&mut rng, 64).unwrap().len(), 64);
    }
}
