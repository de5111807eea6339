//! Noun identification for word-embedding edges.

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tagger {
    /// Alphabetic tokens outside a closed-class word list count as nouns.
    #[default]
    Heuristic,
    /// Per-token POS annotations from the dataset; NOUN and PROPN count.
    External,
}

/// Determiners, pronouns, prepositions, conjunctions, auxiliaries and modals,
/// plus frequent adverbs, adjectives and verb forms. Sorted for binary search.
const CLOSED_CLASS: &[&str] = &[
    "a", "about", "above", "across", "after", "again", "against", "ago", "all", "almost", "along",
    "already", "also", "although", "always", "am", "among", "an", "and", "another", "any", "anyone",
    "anything", "are", "around", "as", "asked", "at", "away", "back", "be", "became", "because",
    "become", "been", "before", "began", "behind", "being", "below", "best", "better", "between",
    "big", "both", "brought", "but", "by", "came", "can", "cannot", "come", "could", "did", "do",
    "does", "doing", "done", "down", "during", "each", "early", "either", "else", "enough", "even",
    "ever", "every", "everyone", "everything", "far", "few", "fled", "for", "found", "from", "gave",
    "get", "gets", "getting", "give", "given", "go", "goes", "going", "gone", "good", "got", "great",
    "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "high", "him", "himself",
    "his", "how", "however", "i", "if", "in", "including", "inside", "into", "is", "it", "its",
    "itself", "just", "keep", "kept", "killed", "knew", "know", "known", "large", "last", "late",
    "later", "least", "left", "less", "let", "like", "little", "long", "made", "make", "makes",
    "many", "may", "me", "might", "mine", "more", "most", "much", "must", "my", "myself", "near",
    "nearly", "neither", "never", "new", "next", "no", "nobody", "none", "nor", "not", "nothing",
    "now", "of", "off", "often", "old", "on", "once", "one", "only", "onto", "or", "other",
    "others", "our", "ours", "ourselves", "out", "outside", "over", "own", "past", "per", "perhaps",
    "put", "quite", "rather", "really", "recently", "said", "same", "saw", "say", "says", "see",
    "seen", "several", "shall", "she", "should", "show", "showed", "shown", "since", "small", "so",
    "some", "someone", "something", "sometimes", "soon", "still", "such", "take", "taken", "than",
    "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they",
    "thing", "this", "those", "though", "through", "throughout", "thus", "to", "today", "together",
    "told", "too", "took", "toward", "towards", "two", "under", "unless", "until", "up", "upon",
    "us", "use", "used", "very", "via", "was", "we", "well", "went", "were", "what", "whatever",
    "when", "where", "whether", "which", "while", "who", "whom", "whose", "why", "will", "with",
    "within", "without", "would", "yes", "yet", "you", "your", "yours", "yourself",
];

pub fn is_closed_class(token: &str) -> bool {
    CLOSED_CLASS.binary_search(&token).is_ok()
}

/// Indices of the tokens in `sentence` that qualify as nouns.
pub fn noun_candidates(sentence: &Sentence, tagger: Tagger) -> Result<Vec<usize>> {
    match tagger {
        Tagger::Heuristic => Ok(sentence
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.chars().all(char::is_alphabetic) && !is_closed_class(t))
            .map(|(i, _)| i)
            .collect()),
        Tagger::External => {
            let tags = sentence
                .pos
                .as_ref()
                .ok_or_else(|| Error::Data("external tagger selected but sentence has no POS tags".into()))?;
            if tags.len() != sentence.tokens.len() {
                return Err(Error::Data(format!(
                    "{} POS tags for a {}-token sentence",
                    tags.len(),
                    sentence.tokens.len()
                )));
            }
            Ok(tags
                .iter()
                .enumerate()
                .filter(|(_, t)| matches!(t.as_str(), "NOUN" | "PROPN"))
                .map(|(i, _)| i)
                .collect())
        }
    }
}
