//! Dictionary parsing and keyword simplification.
//!
//! A dictionary file holds one entry per line: plain words, `stem*` prefix
//! wildcards, or multi-word phrases. Each compiled [`Lexicon`] carries a
//! replacement token of the shape `<[a-z_]+>`; simplifying a document
//! replaces every matched span with the owning lexicon's token.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::corpus::{Corpus, Example};
use crate::error::LexiconError;

/// One compiled dictionary entry. Surfaces are lowercase and never contain `*`;
/// the wildcard is consumed into the entry kind at parse time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DictionaryEntry {
    /// Exact single-word match.
    Literal(String),
    /// Matches any word beginning with the stem (`bull*` stores `bull`).
    PrefixWildcard(String),
    /// Exact multi-word match, stored as its words.
    Phrase(Vec<String>),
}

/// A named dictionary compiled for matching, with its replacement token.
#[derive(Debug, Clone)]
pub struct Lexicon {
    name: String,
    token: String,
    entries: Vec<DictionaryEntry>,
    literals: HashSet<String>,
    stems: HashSet<String>,
    // Phrases indexed by first word, longest first.
    phrases: HashMap<String, Vec<Vec<String>>>,
}

impl Lexicon {
    /// Parses raw dictionary file contents into a compiled lexicon.
    ///
    /// One entry per line; blank lines and lines starting with `#` are
    /// skipped; entries are lowercased and duplicates dropped silently.
    /// A trailing `*` makes a prefix wildcard, internal whitespace makes
    /// a phrase.
    pub fn parse(text: &str, token: &str, name: &str) -> Result<Self, LexiconError> {
        if !is_valid_token(token) {
            return Err(LexiconError::InvalidToken {
                token: token.to_string(),
            });
        }
        let mut entries = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            entries.insert(parse_entry(line, idx + 1)?);
        }
        Ok(Self::from_entries(
            name.to_string(),
            token.to_string(),
            entries,
        ))
    }

    fn from_entries(name: String, token: String, entries: BTreeSet<DictionaryEntry>) -> Self {
        let mut literals = HashSet::new();
        let mut stems = HashSet::new();
        let mut phrases: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for entry in &entries {
            match entry {
                DictionaryEntry::Literal(w) => {
                    literals.insert(w.clone());
                }
                DictionaryEntry::PrefixWildcard(s) => {
                    stems.insert(s.clone());
                }
                DictionaryEntry::Phrase(words) => {
                    phrases
                        .entry(words[0].clone())
                        .or_default()
                        .push(words.clone());
                }
            }
        }
        for cands in phrases.values_mut() {
            cands.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
        Self {
            name,
            token,
            entries: entries.into_iter().collect(),
            literals,
            stems,
            phrases,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn token(&self) -> &str {
        &self.token
    }

    pub fn entries(&self) -> &[DictionaryEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Length in tokens of the longest entry matching at `pos`, if any.
    fn match_at(&self, tokens: &[String], pos: usize) -> Option<usize> {
        let word = &tokens[pos];
        if let Some(cands) = self.phrases.get(word) {
            for phrase in cands {
                if tokens[pos..].len() >= phrase.len()
                    && tokens[pos..pos + phrase.len()].iter().eq(phrase.iter())
                {
                    return Some(phrase.len());
                }
            }
        }
        if self.literals.contains(word) || self.matches_stem(word) {
            return Some(1);
        }
        None
    }

    fn matches_stem(&self, word: &str) -> bool {
        if self.stems.is_empty() {
            return false;
        }
        // A stem matches iff it is a prefix of the word; enumerate the
        // word's prefixes and probe the set.
        word.char_indices()
            .map(|(i, c)| i + c.len_utf8())
            .any(|end| self.stems.contains(&word[..end]))
    }
}

/// An ordered collection of lexicons. Declaration order is the match
/// priority used to break ties between equal-length matches.
#[derive(Debug, Clone, Default)]
pub struct LexiconSet {
    lexicons: Vec<Lexicon>,
}

impl LexiconSet {
    /// Builds a set, rejecting duplicate lexicon names. Replacement tokens
    /// may repeat across lexicons.
    pub fn new(lexicons: Vec<Lexicon>) -> Result<Self, LexiconError> {
        let mut seen = HashSet::new();
        for lex in &lexicons {
            if !seen.insert(lex.name.clone()) {
                return Err(LexiconError::DuplicateLexiconName {
                    name: lex.name.clone(),
                });
            }
        }
        Ok(Self { lexicons })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn lexicons(&self) -> &[Lexicon] {
        &self.lexicons
    }

    pub fn is_empty(&self) -> bool {
        self.lexicons.is_empty()
    }
}

/// A lowercase word-token sequence; the unit the matcher and encoder consume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    tokens: Vec<String>,
}

impl TokenizedDoc {
    /// Wraps pre-made tokens, enforcing that none is empty or contains
    /// whitespace.
    pub fn new(tokens: Vec<String>) -> Result<Self, LexiconError> {
        for tok in &tokens {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(LexiconError::InvalidDocToken { token: tok.clone() });
            }
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Re-joins the tokens with single spaces for display or file output.
    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Lowercases, splits on whitespace, and strips leading/trailing
/// punctuation from each token; tokens emptied by stripping are dropped.
/// Apostrophes and other punctuation inside a word are kept.
///
/// Words already in replacement-token form (`<like_this>`) pass through
/// unchanged, so keyword-simplified text survives re-tokenization.
pub fn tokenize(text: &str) -> TokenizedDoc {
    let tokens = text
        .split_whitespace()
        .map(|raw| {
            let lower = raw.to_lowercase();
            if is_valid_token(&lower) {
                lower
            } else {
                lower
                    .trim_matches(|c: char| !c.is_alphanumeric())
                    .to_string()
            }
        })
        .filter(|t| !t.is_empty())
        .collect();
    TokenizedDoc { tokens }
}

/// Replaces every dictionary match in `doc` with the owning lexicon's token.
///
/// Scans left to right in a single pass. At each position the longest match
/// across all lexicons wins (a phrase consuming more tokens beats any
/// single-word match); equal-length matches go to the earliest lexicon in
/// the set. Emitted replacement tokens are never re-matched.
pub fn keyword_simplify(doc: &TokenizedDoc, lexicons: &LexiconSet) -> TokenizedDoc {
    let tokens = &doc.tokens;
    let mut out = Vec::with_capacity(tokens.len());
    let mut pos = 0;
    while pos < tokens.len() {
        let mut best: Option<(usize, usize)> = None; // (match length, lexicon index)
        for (idx, lex) in lexicons.lexicons.iter().enumerate() {
            if let Some(len) = lex.match_at(tokens, pos) {
                let better = match best {
                    Some((best_len, _)) => len > best_len,
                    None => true,
                };
                if better {
                    best = Some((len, idx));
                }
            }
        }
        match best {
            Some((len, idx)) => {
                out.push(lexicons.lexicons[idx].token.clone());
                pos += len;
            }
            None => {
                out.push(tokens[pos].clone());
                pos += 1;
            }
        }
    }
    TokenizedDoc { tokens: out }
}

/// Applies [`keyword_simplify`] to each document, preserving order.
pub fn simplify_docs(docs: &[TokenizedDoc], lexicons: &LexiconSet) -> Vec<TokenizedDoc> {
    docs.iter().map(|d| keyword_simplify(d, lexicons)).collect()
}

/// Simplifies every example's text, keeping ids and labels. The output text
/// is the simplified token sequence re-joined with single spaces.
pub fn simplify_corpus(corpus: &Corpus, lexicons: &LexiconSet) -> Corpus {
    let examples = corpus
        .examples()
        .iter()
        .map(|ex| Example {
            id: ex.id.clone(),
            text: keyword_simplify(&tokenize(&ex.text), lexicons).join(),
            label: ex.label,
        })
        .collect();
    Corpus::from_examples_unchecked(examples)
}

fn is_valid_token(token: &str) -> bool {
    let Some(inner) = token.strip_prefix('<').and_then(|t| t.strip_suffix('>')) else {
        return false;
    };
    !inner.is_empty() && inner.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

// Entry words get the same edge-punctuation trim as document tokens;
// otherwise an entry like "rest." could never match anything.
fn trim_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
}

fn parse_entry(line: &str, line_no: usize) -> Result<DictionaryEntry, LexiconError> {
    let lower = line.to_lowercase();
    if lower == "*" {
        return Err(LexiconError::BareWildcard { line: line_no });
    }
    if lower.split_whitespace().nth(1).is_some() {
        if lower.contains('*') {
            return Err(LexiconError::WildcardInPhrase {
                line: line_no,
                entry: lower,
            });
        }
        let words: Vec<String> = lower.split_whitespace().map(trim_word).collect();
        if words.iter().any(String::is_empty) {
            return Err(LexiconError::EmptyEntry {
                line: line_no,
                entry: lower,
            });
        }
        return Ok(DictionaryEntry::Phrase(words));
    }
    if let Some(stem) = lower.strip_suffix('*') {
        if stem.contains('*') {
            return Err(LexiconError::StrayWildcard {
                line: line_no,
                entry: lower,
            });
        }
        let stem = trim_word(stem);
        if stem.is_empty() {
            return Err(LexiconError::EmptyEntry {
                line: line_no,
                entry: lower,
            });
        }
        return Ok(DictionaryEntry::PrefixWildcard(stem));
    }
    if lower.contains('*') {
        return Err(LexiconError::StrayWildcard {
            line: line_no,
            entry: lower,
        });
    }
    let word = trim_word(&lower);
    if word.is_empty() {
        return Err(LexiconError::EmptyEntry {
            line: line_no,
            entry: lower,
        });
    }
    Ok(DictionaryEntry::Literal(word))
}
