use std::collections::BTreeSet;

/// Prefix attached to tokens inside a negation scope.
pub const NEGATION_PREFIX: &str = "NOT_";

const CONTRACTION: &str = "n't";
const SENTENCE_END: [char; 4] = ['.', '!', '?', ';'];

/// Lowercasing unigram tokenizer with negation marking.
///
/// A negation trigger opens a scope in which every following token is
/// emitted as `NOT_<token>`; the scope closes at the next `.`, `!`, `?`
/// or `;`. Trigger words are emitted themselves, unprefixed. A word ending
/// in `n't` is split: the stem is emitted and the `n't` part acts as a
/// trigger without producing a token. All other punctuation is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    triggers: BTreeSet<String>,
    contraction_trigger: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::with_triggers(["not", "no", "never"], true)
    }
}

impl Tokenizer {
    pub fn with_triggers<I, S>(triggers: I, contraction_trigger: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Tokenizer {
            triggers: triggers.into_iter().map(|t| t.as_ref().to_lowercase()).collect(),
            contraction_trigger,
        }
    }

    pub fn triggers(&self) -> impl Iterator<Item = &str> {
        self.triggers.iter().map(String::as_str)
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut negated = false;
        let mut word = String::new();

        for ch in text.chars().flat_map(char::to_lowercase) {
            let ch = if ch == '\u{2019}' { '\'' } else { ch };
            if ch.is_alphanumeric() || ch == '\'' {
                word.push(ch);
                continue;
            }
            self.flush(&mut word, &mut negated, &mut out);
            if SENTENCE_END.contains(&ch) {
                negated = false;
            }
        }
        self.flush(&mut word, &mut negated, &mut out);
        out
    }

    fn flush(&self, word: &mut String, negated: &mut bool, out: &mut Vec<String>) {
        let raw = std::mem::take(word);
        let token = raw.trim_matches('\'');
        if token.is_empty() {
            return;
        }

        if self.contraction_trigger && token.ends_with(CONTRACTION) {
            let stem = &token[..token.len() - CONTRACTION.len()];
            let stem = match stem {
                "ca" => "can",
                "wo" => "will",
                "sha" => "shall",
                s => s,
            };
            if !stem.is_empty() {
                emit(stem, *negated, out);
            }
            *negated = true;
            return;
        }

        if self.triggers.contains(token) {
            out.push(token.to_string());
            *negated = true;
            return;
        }

        emit(token, *negated, out);
    }
}

fn emit(token: &str, negated: bool, out: &mut Vec<String>) {
    if negated {
        out.push(format!("{NEGATION_PREFIX}{token}"));
    } else {
        out.push(token.to_string());
    }
}

/// Tokenizes with the default trigger list.
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}
