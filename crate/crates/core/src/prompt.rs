//! Generation prompt assembly and code extraction from completions.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const LANGUAGE_PLACEHOLDER: &str = "[SPECIFIED LANGUAGE]";
pub const RESPONSE_PLACEHOLDER: &str = "[EXPERT RESPONSE]";

/// The default generation prompt. Exported verbatim by `eipl --print-template`.
pub const DEFAULT_TEMPLATE: &str = "Generate a Python function called `foo' that accomplishes the given task using the following instructions written in [SPECIFIED LANGUAGE]: [EXPERT RESPONSE]. The code should be returned in the following format:
def foo(<parameters here>):
    <code>

Note: The function should always return a value rather than print the result. Additionally, generate only the code and no additional test cases or explanatory text.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("response text is empty")]
    EmptyResponse,
    #[error("language name is empty")]
    EmptyLanguage,
    #[error("malformed template: {0}")]
    MalformedTemplate(String),
    #[error("reading template: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionError {
    #[error("completion is empty")]
    Empty,
    #[error("no definition of `foo` found")]
    MissingFunction,
}

/// A prompt body with exactly one language and one response placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    body: String,
    language_at: usize,
    response_at: usize,
}

fn locate_once(body: &str, needle: &str) -> Result<usize, PromptError> {
    let mut hits = body.match_indices(needle).map(|(i, _)| i);
    match (hits.next(), hits.next()) {
        (Some(i), None) => Ok(i),
        (None, _) => Err(PromptError::MalformedTemplate(format!("missing {needle}"))),
        (Some(_), Some(_)) => Err(PromptError::MalformedTemplate(format!("duplicate {needle}"))),
    }
}

impl PromptTemplate {
    pub fn new(body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let language_at = locate_once(&body, LANGUAGE_PLACEHOLDER)?;
        let response_at = locate_once(&body, RESPONSE_PLACEHOLDER)?;
        Ok(Self { body, language_at, response_at })
    }

    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let body = fs::read_to_string(path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        Self::new(body)
    }

    pub fn body(&self) -> &str {
        &self.body
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("default template is well formed")
    }
}

/// Substitutes both placeholders in a single pass, so placeholder-looking
/// text inside the substituted values is never expanded again.
pub fn build_prompt(template: &PromptTemplate, language_name: &str, response_text: &str) -> Result<String, PromptError> {
    if response_text.trim().is_empty() {
        return Err(PromptError::EmptyResponse);
    }
    if language_name.trim().is_empty() {
        return Err(PromptError::EmptyLanguage);
    }
    let mut slots = [
        (template.language_at, LANGUAGE_PLACEHOLDER.len(), language_name),
        (template.response_at, RESPONSE_PLACEHOLDER.len(), response_text),
    ];
    slots.sort_by_key(|s| s.0);

    let body = &template.body;
    let mut out = String::with_capacity(body.len() + language_name.len() + response_text.len());
    let mut cursor = 0;
    for (at, len, text) in slots {
        out.push_str(&body[cursor..at]);
        out.push_str(text);
        cursor = at + len;
    }
    out.push_str(&body[cursor..]);
    Ok(out)
}

/// Does this line start a definition of `foo`?
fn defines_foo(line: &str) -> bool {
    let line = line.trim_start();
    let line = line.strip_prefix("async").map_or(line, str::trim_start);
    let Some(rest) = line.strip_prefix("def") else {
        return false;
    };
    if !rest.starts_with(char::is_whitespace) {
        return false;
    }
    let Some(rest) = rest.trim_start().strip_prefix("foo") else {
        return false;
    };
    rest.trim_start().starts_with('(')
}

pub fn contains_foo_definition(source: &str) -> bool {
    source.lines().any(defines_foo)
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Bodies of all ```-fenced blocks. An unterminated final fence runs to the end.
fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        match current.as_mut() {
            None if is_fence(line) => current = Some(Vec::new()),
            None => {}
            Some(_) if is_fence(line) => blocks.push(current.take().unwrap().join("\n")),
            Some(body) => body.push(line),
        }
    }
    if let Some(body) = current {
        blocks.push(body.join("\n"));
    }
    blocks
}

/// Pulls candidate source out of a raw completion.
pub fn extract_code(raw_completion: &str) -> Result<String, ExtractionError> {
    if raw_completion.trim().is_empty() {
        return Err(ExtractionError::Empty);
    }
    let has_fence = raw_completion.lines().any(is_fence);
    let candidate = if has_fence {
        fenced_blocks(raw_completion)
            .into_iter()
            .find(|b| contains_foo_definition(b))
            .ok_or(ExtractionError::MissingFunction)?
    } else {
        raw_completion.to_owned()
    };
    let candidate = candidate.trim();
    if !contains_foo_definition(candidate) {
        return Err(ExtractionError::MissingFunction);
    }
    Ok(candidate.to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hindi_prompt_fragments() {
        let p = build_prompt(&PromptTemplate::default(), "Hindi", "ek string ko ulta karo").unwrap();
        assert!(p.starts_with("Generate a Python function called"));
        assert!(p.contains("written in Hindi: ek string ko ulta karo"));
    }

    #[test]
    fn english_single_occurrence() {
        let p = build_prompt(&PromptTemplate::default(), "English", "X").unwrap();
        assert!(p.contains("written in English: X"));
        assert_eq!(p.matches('X').count(), 1);
    }

    #[test]
    fn empty_response_rejected() {
        let t = PromptTemplate::default();
        assert_eq!(build_prompt(&t, "Tamil", ""), Err(PromptError::EmptyResponse));
        assert_eq!(build_prompt(&t, "Tamil", " \n\t"), Err(PromptError::EmptyResponse));
        assert_eq!(build_prompt(&t, " ", "x"), Err(PromptError::EmptyLanguage));
    }

    #[test]
    fn malformed_templates() {
        assert!(matches!(PromptTemplate::new("no slots"), Err(PromptError::MalformedTemplate(_))));
        let dup = "[SPECIFIED LANGUAGE] [EXPERT RESPONSE] [EXPERT RESPONSE]";
        assert!(matches!(PromptTemplate::new(dup), Err(PromptError::MalformedTemplate(_))));
        let swapped = PromptTemplate::new("R=[EXPERT RESPONSE] L=[SPECIFIED LANGUAGE]").unwrap();
        assert_eq!(build_prompt(&swapped, "Odia", "r").unwrap(), "R=r L=Odia");
    }

    #[test]
    fn placeholder_text_in_response_is_not_expanded() {
        let p = build_prompt(&PromptTemplate::default(), "[EXPERT RESPONSE]", "[SPECIFIED LANGUAGE]").unwrap();
        assert!(p.contains("written in [EXPERT RESPONSE]: [SPECIFIED LANGUAGE]."));
    }

    #[test]
    fn single_fence() {
        let raw = "```\ndef foo(s):\n    return s[::-1]\n```";
        assert_eq!(extract_code(raw).unwrap(), "def foo(s):\n    return s[::-1]");
    }

    #[test]
    fn prose_is_stripped() {
        let raw = "Here is the code:\n```python\ndef foo(x):\n    return x\n```\nHope this helps!";
        assert_eq!(extract_code(raw).unwrap(), "def foo(x):\n    return x");
    }

    #[test]
    fn refusal_has_no_function() {
        assert_eq!(extract_code("I cannot help with that."), Err(ExtractionError::MissingFunction));
        assert_eq!(extract_code("  \n "), Err(ExtractionError::Empty));
    }

    #[test]
    fn first_block_defining_foo_wins() {
        let raw = "```\nprint(1)\n```\n```py\ndef foo(a):\n    return 1\n```\n```\ndef foo(a):\n    return 2\n```";
        assert_eq!(extract_code(raw).unwrap(), "def foo(a):\n    return 1");
    }

    #[test]
    fn unfenced_and_unterminated() {
        assert_eq!(extract_code("\n def foo():\n    return 0\n\n").unwrap(), "def foo():\n    return 0");
        assert_eq!(extract_code("  ```python\ndef foo(): return 3").unwrap(), "def foo(): return 3");
        assert_eq!(extract_code("```\nx = 1\n```\ndef foo(): pass"), Err(ExtractionError::MissingFunction));
        assert!(!contains_foo_definition("def food(x): pass"));
        assert!(!contains_foo_definition("define foo(x)"));
        assert!(contains_foo_definition("async def  foo (x): pass"));
    }

    proptest! {
        #[test]
        fn prompt_length_law(lang in "\\PC{1,12}", resp in "\\PC{1,60}") {
            prop_assume!(!lang.trim().is_empty() && !resp.trim().is_empty());
            let t = PromptTemplate::default();
            let p = build_prompt(&t, &lang, &resp).unwrap();
            let expected = DEFAULT_TEMPLATE.len() - LANGUAGE_PLACEHOLDER.len() - RESPONSE_PLACEHOLDER.len()
                + lang.len() + resp.len();
            prop_assert_eq!(p.len(), expected);
        }

        #[test]
        fn extraction_is_idempotent(
            prose in "[a-zA-Z .!]{0,20}",
            body in "[a-z_ ()+\\[\\]:]{0,20}",
            tag in proptest::option::of("[a-z]{1,6}"),
            fenced in any::<bool>(),
        ) {
            let code = format!("def foo(x):\n    return {body}");
            let raw = if fenced {
                format!("{prose}\n```{}\n{code}\n```\n{prose}", tag.unwrap_or_default())
            } else {
                code
            };
            if let Ok(once) = extract_code(&raw) {
                prop_assert_eq!(extract_code(&once).unwrap(), once);
            }
        }
    }
}
