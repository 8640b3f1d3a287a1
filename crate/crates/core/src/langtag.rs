//! Response-language categorisation: plain English, romanized code-mixed
//! text, or text containing a native Indic (or other non-Latin) script.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::format_rate;
use crate::model::Verdict;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

const BUNDLED_ENGLISH: &str = include_str!("../data/english.txt");
const BUNDLED_TECHNICAL: &str = include_str!("../data/technical.txt");

#[derive(Debug, Error, PartialEq)]
pub enum LangTagError {
    #[error("empty text")]
    EmptyText,
    #[error("lexicon {path}: {message}")]
    Lexicon { path: PathBuf, message: String },
    #[error("threshold must be within [0, 1], got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    English,
    MixedRomanized,
    NativeScript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Script {
    Latin,
    Devanagari,
    Bengali,
    Gurmukhi,
    Gujarati,
    Oriya,
    Tamil,
    Telugu,
    Kannada,
    Malayalam,
    Arabic,
    Other,
}

/// Script of a letter, or `None` for digits, punctuation, whitespace and marks
/// outside the known blocks.
pub fn script_of(c: char) -> Option<Script> {
    let script = match c as u32 {
        0x0900..=0x097F | 0xA8E0..=0xA8FF => Script::Devanagari,
        0x0980..=0x09FF => Script::Bengali,
        0x0A00..=0x0A7F => Script::Gurmukhi,
        0x0A80..=0x0AFF => Script::Gujarati,
        0x0B00..=0x0B7F => Script::Oriya,
        0x0B80..=0x0BFF => Script::Tamil,
        0x0C00..=0x0C7F => Script::Telugu,
        0x0C80..=0x0CFF => Script::Kannada,
        0x0D00..=0x0D7F => Script::Malayalam,
        0x0600..=0x06FF | 0x0750..=0x077F | 0x08A0..=0x08FF | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF => Script::Arabic,
        _ if c.is_ascii_alphabetic() => return Some(Script::Latin),
        0x00C0..=0x024F | 0x1E00..=0x1EFF if c.is_alphabetic() => return Some(Script::Latin),
        _ if c.is_alphabetic() => return Some(Script::Other),
        _ => return None,
    };
    // Indic digits and danda punctuation carry no letters.
    (!c.is_numeric() && !matches!(c, '\u{0964}' | '\u{0965}')).then_some(script)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageTag {
    pub category: Category,
    pub script_histogram: BTreeMap<Script, u32>,
    /// Share of countable Latin tokens found in the lexicon. Only meaningful
    /// for Latin-only text; 1.0 when no token was countable.
    pub english_token_ratio: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    words: HashSet<String>,
}

impl Lexicon {
    pub fn from_lists<'a>(lists: impl IntoIterator<Item = &'a str>) -> Self {
        let words = lists
            .into_iter()
            .flat_map(str::lines)
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self { words }
    }

    /// The bundled general English list plus the technical whitelist.
    pub fn bundled() -> Arc<Lexicon> {
        static BUNDLED: OnceLock<Arc<Lexicon>> = OnceLock::new();
        BUNDLED.get_or_init(|| Arc::new(Lexicon::from_lists([BUNDLED_ENGLISH, BUNDLED_TECHNICAL]))).clone()
    }

    pub fn from_files(english: &Path, technical: &Path) -> Result<Self, LangTagError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|e| LangTagError::Lexicon { path: p.to_owned(), message: e.to_string() })
        };
        Ok(Self::from_lists([read(english)?.as_str(), read(technical)?.as_str()]))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Case-insensitive lookup that also accepts common inflections of a
    /// listed word ("reverses", "counted", "checking").
    pub fn contains(&self, token: &str) -> bool {
        let t = token.to_lowercase();
        let t = t.strip_suffix("'s").unwrap_or(&t);
        if self.words.contains(t) {
            return true;
        }
        let stems = [
            t.strip_suffix('s').map(str::to_owned),
            t.strip_suffix("es").map(str::to_owned),
            t.strip_suffix("ies").map(|s| format!("{s}y")),
            t.strip_suffix("ed").map(str::to_owned),
            t.strip_suffix('d').map(str::to_owned),
            t.strip_suffix("ing").map(str::to_owned),
            t.strip_suffix("ing").map(|s| format!("{s}e")),
            t.strip_suffix("ly").map(str::to_owned),
            t.strip_suffix("er").map(str::to_owned),
        ];
        stems.into_iter().flatten().any(|s| s.len() > 1 && self.words.contains(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LangTagConfig {
    pub english_lexicon: Option<PathBuf>,
    pub technical_lexicon: Option<PathBuf>,
    pub threshold: f64,
}

impl Default for LangTagConfig {
    fn default() -> Self {
        Self { english_lexicon: None, technical_lexicon: None, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone)]
pub struct Classifier {
    lexicon: Arc<Lexicon>,
    threshold: f64,
}

impl Default for Classifier {
    fn default() -> Self {
        Self { lexicon: Lexicon::bundled(), threshold: DEFAULT_THRESHOLD }
    }
}

impl Classifier {
    pub fn new(lexicon: Arc<Lexicon>, threshold: f64) -> Result<Self, LangTagError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(LangTagError::InvalidThreshold(threshold));
        }
        Ok(Self { lexicon, threshold })
    }

    /// Builds a classifier from config. A missing path falls back to the
    /// bundled list for that file.
    pub fn from_config(cfg: &LangTagConfig) -> Result<Self, LangTagError> {
        let lexicon = match (&cfg.english_lexicon, &cfg.technical_lexicon) {
            (None, None) => Lexicon::bundled(),
            (english, technical) => {
                let read = |p: &Option<PathBuf>, fallback: &'static str| match p {
                    Some(p) => fs::read_to_string(p)
                        .map_err(|e| LangTagError::Lexicon { path: p.clone(), message: e.to_string() }),
                    None => Ok(fallback.to_owned()),
                };
                let (e, t) = (read(english, BUNDLED_ENGLISH)?, read(technical, BUNDLED_TECHNICAL)?);
                Arc::new(Lexicon::from_lists([e.as_str(), t.as_str()]))
            }
        };
        Self::new(lexicon, cfg.threshold)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn classify(&self, text: &str) -> Result<LanguageTag, LangTagError> {
        if text.trim().is_empty() {
            return Err(LangTagError::EmptyText);
        }
        let mut script_histogram = BTreeMap::new();
        for s in text.chars().filter_map(script_of) {
            *script_histogram.entry(s).or_insert(0) += 1;
        }
        let tokens = countable_tokens(text);
        let known = tokens.iter().filter(|t| self.lexicon.contains(t)).count();
        let english_token_ratio = if tokens.is_empty() { 1.0 } else { known as f64 / tokens.len() as f64 };
        let category = if script_histogram.keys().any(|s| *s != Script::Latin) {
            Category::NativeScript
        } else if english_token_ratio >= self.threshold {
            Category::English
        } else {
            Category::MixedRomanized
        };
        Ok(LanguageTag { category, script_histogram, english_token_ratio })
    }
}

pub fn classify(text: &str) -> Result<LanguageTag, LangTagError> {
    Classifier::default().classify(text)
}

/// Latin-script word tokens that count towards the English ratio. Chunks
/// containing digits or underscores look like identifiers or numbers and are
/// skipped, as are single letters.
fn countable_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .filter(|chunk| !chunk.chars().any(|c| c.is_numeric() || c == '_'))
        .flat_map(|chunk| chunk.split(|c: char| !(c.is_alphabetic() || c == '\'')))
        .map(|t| t.trim_matches('\''))
        .filter(|t| t.chars().count() > 1 && t.chars().all(|c| script_of(c) == Some(Script::Latin) || c == '\''))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryStats {
    pub n: u64,
    pub n_correct: u64,
}

impl CategoryStats {
    pub fn rate(&self) -> Option<f64> {
        (self.n > 0).then(|| self.n_correct as f64 / self.n as f64)
    }

    pub fn rate_text(&self) -> String {
        format_rate(self.n_correct, self.n)
    }

    fn add(&mut self, correct: bool) {
        self.n += 1;
        self.n_correct += u64::from(correct);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryReport {
    pub english: CategoryStats,
    pub mixed_romanized: CategoryStats,
    pub native_script: CategoryStats,
    /// Mixed and native responses together.
    pub mother_tongue: CategoryStats,
}

impl CategoryReport {
    pub fn get(&self, c: Category) -> CategoryStats {
        match c {
            Category::English => self.english,
            Category::MixedRomanized => self.mixed_romanized,
            Category::NativeScript => self.native_script,
        }
    }
}

impl fmt::Display for CategoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("English", self.english),
            ("MixedRomanized", self.mixed_romanized),
            ("NativeScript", self.native_script),
            ("MotherTongue (merged)", self.mother_tongue),
        ];
        for (name, s) in rows {
            writeln!(f, "{name}: {}/{} ({})", s.n_correct, s.n, s.rate_text())?;
        }
        Ok(())
    }
}

pub fn aggregate_by_category<'a>(attempts: impl IntoIterator<Item = (Category, &'a Verdict)>) -> CategoryReport {
    let mut r = CategoryReport::default();
    for (category, verdict) in attempts {
        let ok = verdict.is_correct();
        match category {
            Category::English => r.english.add(ok),
            Category::MixedRomanized => {
                r.mixed_romanized.add(ok);
                r.mother_tongue.add(ok);
            }
            Category::NativeScript => {
                r.native_script.add(ok);
                r.mother_tongue.add(ok);
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VerdictKind;
    use proptest::prelude::*;

    #[test]
    fn english_sentence() {
        let tag = classify("a function that reverses the input string").unwrap();
        assert_eq!(tag.category, Category::English);
        assert_eq!(tag.english_token_ratio, 1.0);
        assert_eq!(tag.script_histogram.keys().collect::<Vec<_>>(), vec![&Script::Latin]);
    }

    #[test]
    fn hindi_english_mix() {
        let tag = classify("Ek list me kitni bar 0 ata hai wo count krne wala function").unwrap();
        assert_eq!(tag.category, Category::MixedRomanized);
        assert!(tag.english_token_ratio < 0.6, "{}", tag.english_token_ratio);
    }

    #[test]
    fn kannada_english_mix() {
        let tag = classify("s1 mathu s2 anagrams antha check maduvantha function").unwrap();
        assert_eq!(tag.category, Category::MixedRomanized);
        assert!(tag.english_token_ratio < 0.6, "{}", tag.english_token_ratio);
    }

    #[test]
    fn native_script_wins_over_english_tokens() {
        let tag = classify("return the list जिसमें सभी even numbers हों").unwrap();
        assert_eq!(tag.category, Category::NativeScript);
        assert!(tag.script_histogram[&Script::Devanagari] > 0);
        assert!(tag.script_histogram[&Script::Latin] > 0);
        for (text, script) in [
            ("ಸ್ಟ್ರಿಂಗ್ ಅನ್ನು ತಿರುಗಿಸು", Script::Kannada),
            ("ஒரு பட்டியல்", Script::Tamil),
            ("ਸੂਚੀ", Script::Gurmukhi),
            ("યાદી", Script::Gujarati),
            ("ତାଲିକା", Script::Oriya),
            ("తిరగవేయి", Script::Telugu),
            ("তালিকা", Script::Bengali),
            ("فہرست", Script::Arabic),
        ] {
            let tag = classify(text).unwrap();
            assert_eq!(tag.category, Category::NativeScript, "{text}");
            assert!(tag.script_histogram.contains_key(&script), "{text}");
        }
    }

    #[test]
    fn indic_digits_and_danda_are_not_letters() {
        assert_eq!(script_of('०'), None);
        assert_eq!(script_of('।'), None);
        assert_eq!(classify("count 0 to ९").unwrap().category, Category::English);
    }

    #[test]
    fn identifiers_and_numbers_are_ignored() {
        let tag = classify("return arr_1 if n2 > 0 else x").unwrap();
        assert_eq!(tag.english_token_ratio, 1.0);
        assert_eq!(classify("42 + 7").unwrap().category, Category::English);
    }

    #[test]
    fn case_insensitive() {
        let a = classify("A FUNCTION THAT REVERSES THE INPUT STRING").unwrap();
        let b = classify("a function that reverses the input string").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_text() {
        assert_eq!(classify("   ").unwrap_err(), LangTagError::EmptyText);
    }

    #[test]
    fn threshold_is_configurable() {
        let lenient = Classifier::new(Lexicon::bundled(), 0.3).unwrap();
        let text = "Ek list me kitni bar 0 ata hai wo count krne wala function";
        assert_eq!(lenient.classify(text).unwrap().category, Category::English);
        assert!(Classifier::new(Lexicon::bundled(), 1.5).is_err());
    }

    #[test]
    fn lexicon_files_override_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let (e, t) = (dir.path().join("e.txt"), dir.path().join("t.txt"));
        fs::write(&e, "ata\nhai\n").unwrap();
        fs::write(&t, "# comment\nfunction\n").unwrap();
        let cfg = LangTagConfig { english_lexicon: Some(e), technical_lexicon: Some(t), threshold: 0.8 };
        let c = Classifier::from_config(&cfg).unwrap();
        assert_eq!(c.classify("ata hai function").unwrap().category, Category::English);
        assert_eq!(c.classify("the list").unwrap().category, Category::MixedRomanized);
        let missing = LangTagConfig { english_lexicon: Some("/nonexistent".into()), ..Default::default() };
        assert!(matches!(Classifier::from_config(&missing), Err(LangTagError::Lexicon { .. })));
    }

    #[test]
    fn aggregation() {
        assert_eq!(aggregate_by_category([]), CategoryReport::default());
        assert_eq!(CategoryReport::default().english.rate_text(), "N/A");
        let ok = Verdict::correct();
        let r = aggregate_by_category([(Category::English, &ok)]);
        assert_eq!(r.english.rate_text(), "100%");
        let bad = Verdict::other(VerdictKind::ExtractionError, "x");
        let r = aggregate_by_category([
            (Category::MixedRomanized, &ok),
            (Category::NativeScript, &bad),
            (Category::English, &bad),
        ]);
        assert_eq!(r.mother_tongue, CategoryStats { n: 2, n_correct: 1 });
        assert_eq!(r.english.rate_text(), "0.0%");
    }

    proptest! {
        #[test]
        fn non_latin_letter_is_never_english(prefix in "[a-z ]{0,20}", c in prop::char::range('\u{0900}', '\u{0D7F}')) {
            let text = format!("{prefix}{c}");
            let tag = classify(&text).unwrap();
            let has_letter = script_of(c).is_some();
            prop_assert_eq!(tag.category == Category::NativeScript, has_letter);
        }

        #[test]
        fn merged_is_sum(cats in prop::collection::vec((0u8..3, any::<bool>()), 0..40)) {
            let verdicts = [Verdict::correct(), Verdict::other(VerdictKind::Timeout, "t")];
            let items = cats.iter().map(|(c, ok)| {
                let cat = [Category::English, Category::MixedRomanized, Category::NativeScript][*c as usize];
                (cat, &verdicts[usize::from(!ok)])
            });
            let r = aggregate_by_category(items);
            prop_assert_eq!(r.mother_tongue.n, r.mixed_romanized.n + r.native_script.n);
            prop_assert_eq!(r.mother_tongue.n_correct, r.mixed_romanized.n_correct + r.native_script.n_correct);
        }
    }
}
