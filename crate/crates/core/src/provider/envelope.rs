//! Extraction of labeled fields (`ANSWER:`, `VERDICT:` ...) from model output.
//!
//! Models decorate envelopes with markdown, so a line counts as labeled when,
//! after stripping leading `*`, `#`, `-`, `>` and whitespace, it starts with the
//! label (case-insensitive) followed by an optional number and a colon.

fn strip_decoration(line: &str) -> &str {
    line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '-' | '>' | '_' | '`'))
}

fn clean_value(v: &str) -> String {
    v.trim()
        .trim_matches(|c: char| matches!(c, '*' | '_' | '`'))
        .trim()
        .to_string()
}

/// If `line` is labeled with `label`, returns the text after the colon.
fn labeled<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let s = strip_decoration(line);
    if s.len() < label.len() || !s.is_char_boundary(label.len()) || !s[..label.len()].eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = s[label.len()..].trim_start_matches(['*', '_']);
    let rest = rest.trim_start();
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_digit());
    let rest = rest.trim_start_matches(['*', '_']).trim_start();
    rest.strip_prefix(':')
}

/// The first labeled value, if any.
pub fn field_first(text: &str, label: &str) -> Option<String> {
    text.lines().find_map(|l| labeled(l, label)).map(clean_value)
}

/// The last labeled value, if any. Reasoning that precedes a final envelope is ignored.
pub fn field_last(text: &str, label: &str) -> Option<String> {
    text.lines().rev().find_map(|l| labeled(l, label)).map(clean_value)
}

/// Everything after the last `label:` marker, spanning later lines, up to the next
/// line labeled with one of `stop_labels`.
pub fn block_last(text: &str, label: &str, stop_labels: &[&str]) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines.iter().rposition(|l| labeled(l, label).is_some())?;
    let mut out = vec![labeled(lines[start], label).unwrap_or_default().trim().to_string()];
    for line in &lines[start + 1..] {
        if stop_labels.iter().any(|s| labeled(line, s).is_some()) {
            break;
        }
        out.push(line.trim_end().to_string());
    }
    Some(clean_value(&out.join("\n")))
}

pub fn first_nonempty_line(text: &str) -> Option<String> {
    text.lines().map(str::trim).find(|l| !l.is_empty()).map(clean_value)
}

/// Labeled value, falling back to the first non-empty line.
pub fn lenient(text: &str, label: &str) -> Option<String> {
    field_first(text, label)
        .or_else(|| first_nonempty_line(text))
        .filter(|s| !s.is_empty())
}

/// Labeled value, falling back to the whole trimmed response.
pub fn lenient_block(text: &str, label: &str) -> Option<String> {
    block_last(text, label, &[])
        .or_else(|| Some(clean_value(text)))
        .filter(|s| !s.is_empty())
}

fn numbered_item(line: &str) -> Option<&str> {
    let s = line.trim_start();
    let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &s[digits..];
        return rest.strip_prefix(['.', ')', ':']).map(str::trim);
    }
    s.strip_prefix(['-', '*', '•']).map(str::trim)
}

/// Items of a list reply: `LABEL n:` lines, else numbered or bulleted lines,
/// else bare lines ending in `?`.
pub fn list_items(text: &str, label: &str) -> Vec<String> {
    let labeled_items: Vec<String> = text
        .lines()
        .filter_map(|l| labeled(l, label))
        .map(clean_value)
        .filter(|s| !s.is_empty())
        .collect();
    if !labeled_items.is_empty() {
        return labeled_items;
    }
    let numbered: Vec<String> = text
        .lines()
        .filter_map(numbered_item)
        .map(clean_value)
        .filter(|s| !s.is_empty())
        .collect();
    if !numbered.is_empty() {
        return numbered;
    }
    text.lines()
        .map(str::trim)
        .filter(|l| l.ends_with('?'))
        .map(clean_value)
        .collect()
}

/// Case-insensitive `true`/`false` from the first word of a value.
pub fn parse_bool(value: &str) -> Option<bool> {
    let word = value
        .split(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | '!' | ';'))
        .find(|w| !w.is_empty())?;
    match word.to_ascii_lowercase().as_str() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    }
}

/// First word of a value with surrounding punctuation removed.
pub fn first_word(value: &str) -> Option<String> {
    value
        .split_whitespace()
        .next()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '-').to_string())
        .filter(|w| !w.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_labeled_field_with_decoration() {
        assert_eq!(field_first("**ANSWER:** 42", "answer").as_deref(), Some("42"));
        assert_eq!(field_first("  - Route: web", "ROUTE").as_deref(), Some("web"));
        assert_eq!(field_first("no label", "ANSWER"), None);
    }

    #[test]
    fn last_occurrence_wins() {
        let t = "VERDICT: supported\nthinking...\nVERDICT: refuted";
        assert_eq!(field_last(t, "VERDICT").as_deref(), Some("refuted"));
        assert_eq!(field_first(t, "VERDICT").as_deref(), Some("supported"));
    }

    #[test]
    fn numbered_labels_parse() {
        let t = "QUESTION 1: a?\nQUESTION 2: b?\nnoise";
        assert_eq!(list_items(t, "QUESTION"), vec!["a?", "b?"]);
    }

    #[test]
    fn list_falls_back_to_numbering_then_question_marks() {
        assert_eq!(
            list_items("Here:\n1. a?\n2) b?\n- c", "QUESTION"),
            vec!["a?", "b?", "c"]
        );
        assert_eq!(list_items("intro\nwhy?\nnot this", "QUESTION"), vec!["why?"]);
        assert!(list_items("", "QUESTION").is_empty());
    }

    #[test]
    fn block_spans_lines_until_stop() {
        let t = "VERDICT: refuted\nEXPLANATION: line one\nline two\nDISCREPANCY: x";
        assert_eq!(
            block_last(t, "EXPLANATION", &["DISCREPANCY"]).as_deref(),
            Some("line one\nline two")
        );
    }

    #[test]
    fn lenient_uses_first_line() {
        assert_eq!(lenient("\n\n  hello  \nworld", "ANSWER").as_deref(), Some("hello"));
        assert_eq!(lenient("   ", "ANSWER"), None);
    }

    #[test]
    fn bool_parsing() {
        assert_eq!(parse_bool("True"), Some(true));
        assert_eq!(parse_bool("false."), Some(false));
        assert_eq!(parse_bool("maybe"), None);
    }

    #[test]
    fn label_must_be_followed_by_colon() {
        assert_eq!(field_first("ANSWERS are here", "ANSWER"), None);
        assert_eq!(field_first("ANSWER here: x", "ANSWER"), None);
    }
}
