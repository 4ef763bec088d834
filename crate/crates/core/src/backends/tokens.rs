//! Reasoning/answer token accounting.

const OPEN: &str = "<think>";
const CLOSE: &str = "</think>";

/// Fallback tokenizer: number of whitespace-separated tokens.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Splits `text` at a single think-delimited prefix.
///
/// Accepts `<think>r</think>a` and the bare `r</think>a` form that
/// R1-style models emit when the opening tag lives in the chat template.
/// Returns `None` unless there is exactly one closing tag and any opening
/// tag sits at the very start.
pub fn split_think(text: &str) -> Option<(&str, &str)> {
    if text.matches(CLOSE).count() != 1 {
        return None;
    }
    let (head, answer) = text.split_once(CLOSE)?;
    let trimmed = head.trim_start();
    let reasoning = match trimmed.matches(OPEN).count() {
        0 => head,
        1 if trimmed.starts_with(OPEN) => &trimmed[OPEN.len()..],
        _ => return None,
    };
    Some((reasoning, answer))
}

/// Usage block reported by a provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProviderUsage {
    pub completion_tokens: u64,
    pub reasoning_tokens: Option<u64>,
}

/// Returns `(reasoning_tokens, answer_tokens)` for a completion.
///
/// Precedence: provider-reported split, then a think-prefix split scaled
/// to the provider total, then everything counted as answer tokens. With
/// no usage at all the whitespace tokenizer counts each segment.
pub fn split_tokens(text: &str, usage: Option<ProviderUsage>) -> (u64, u64) {
    let usage = usage.filter(|u| u.completion_tokens > 0 || text.trim().is_empty());
    match usage {
        Some(ProviderUsage {
            completion_tokens: total,
            reasoning_tokens: Some(r),
        }) => {
            let r = r.min(total);
            (r, total - r)
        }
        Some(ProviderUsage {
            completion_tokens: total,
            reasoning_tokens: None,
        }) => match split_think(text) {
            Some((r, a)) => {
                let (rw, aw) = (whitespace_tokens(r), whitespace_tokens(a));
                if rw + aw == 0 {
                    return (0, total);
                }
                let reasoning = ((total as f64) * (rw as f64) / ((rw + aw) as f64)).round() as u64;
                (reasoning, total - reasoning)
            }
            None => (0, total),
        },
        None => match split_think(text) {
            Some((r, a)) => (whitespace_tokens(r), whitespace_tokens(a)),
            None => (0, whitespace_tokens(text)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn think_prefix_with_fallback_tokenizer() {
        assert_eq!(
            split_tokens("<think>a b c</think> final answer", None),
            (3, 2)
        );
        assert_eq!(split_tokens("<think>abc</think> final", None), (1, 1));
    }

    #[test]
    fn bare_closing_tag() {
        assert_eq!(split_think("x y</think>z"), Some(("x y", "z")));
    }

    #[test]
    fn no_think_means_all_answer() {
        assert_eq!(split_tokens("one two three", None), (0, 3));
        assert_eq!(split_tokens("a </think> b </think> c", None), (0, 5));
        assert_eq!(split_think("pre <think>r</think>a"), None);
    }

    #[test]
    fn provider_split_wins() {
        let u = ProviderUsage {
            completion_tokens: 100,
            reasoning_tokens: Some(70),
        };
        assert_eq!(split_tokens("<think>a</think>b", Some(u)), (70, 30));
        let over = ProviderUsage {
            completion_tokens: 10,
            reasoning_tokens: Some(70),
        };
        assert_eq!(split_tokens("x", Some(over)), (10, 0));
    }

    #[test]
    fn provider_total_scaled_by_think_split() {
        let u = ProviderUsage {
            completion_tokens: 50,
            reasoning_tokens: None,
        };
        assert_eq!(split_tokens("<think>a b c</think> d e", Some(u)), (30, 20));
        assert_eq!(split_tokens("no tags here", Some(u)), (0, 50));
    }

    #[test]
    fn zero_provider_total_with_text_falls_back() {
        let u = ProviderUsage {
            completion_tokens: 0,
            reasoning_tokens: None,
        };
        assert_eq!(split_tokens("two words", Some(u)), (0, 2));
    }

    proptest! {
        #[test]
        fn split_preserves_provider_total(text in "[a-z <>/]{0,80}", total in 1u64..10_000, r in prop::option::of(0u64..20_000)) {
            let (a, b) = split_tokens(&text, Some(ProviderUsage { completion_tokens: total, reasoning_tokens: r }));
            prop_assert_eq!(a + b, total);
        }

        #[test]
        fn fallback_counts_every_word_once(words in prop::collection::vec("[a-z]{1,6}", 0..20), cut in 0usize..20) {
            let cut = cut.min(words.len());
            let text = format!("<think>{}</think> {}", words[..cut].join(" "), words[cut..].join(" "));
            let (r, a) = split_tokens(&text, None);
            prop_assert_eq!(r + a, words.len() as u64);
        }
    }
}
