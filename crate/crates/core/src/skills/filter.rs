//! Rule-based pedagogical sentence filter.
//!
//! A sentence is kept when it carries a learning-outcome cue (an outcome
//! phrase, or an outcome verb in leading or infinitive position) and shows
//! no administrative boilerplate signal. Section headers are dropped.

use super::embed::tokenize;

const OUTCOME_PHRASES: &[&str] = &[
    "students will",
    "student will",
    "you will",
    "able to",
    "learn to",
    "learn how",
    "by the end of",
    "upon completion",
    "upon successful completion",
    "gain experience",
    "gain proficiency",
    "develop an understanding",
];

const OUTCOME_VERBS: &[&str] = &[
    "analyze", "apply", "assess", "build", "calculate", "classify", "collaborate",
    "communicate", "compare", "compose", "compute", "configure", "construct", "create",
    "debug", "define", "demonstrate", "deploy", "derive", "describe", "design", "develop",
    "differentiate", "document", "estimate", "evaluate", "explain", "formulate", "identify",
    "implement", "interpret", "maintain", "manage", "mine", "model", "optimize", "perform",
    "plan", "program", "prove", "query", "reason", "recognize", "select", "simulate", "solve",
    "summarize", "test", "train", "understand", "use", "validate", "verify", "visualize",
    "write",
];

const BOILERPLATE: &[&str] = &[
    "office hour",
    "office:",
    "email",
    "e-mail",
    "@",
    "phone",
    "room ",
    "late submission",
    "late work",
    "late policy",
    "attendance",
    "grading",
    "grade breakdown",
    "textbook",
    "required text",
    "prerequisite",
    "academic integrity",
    "academic honesty",
    "plagiarism",
    "disabilit",
    "accommodation",
    "http://",
    "https://",
    "www.",
    "midterm",
    "final exam",
    "instructor:",
    "teaching assistant",
    "copyright",
    "subject to change",
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
];

/// Keeps only learning-outcome sentences.
pub fn filter_pedagogical<S: AsRef<str>>(sentences: &[S]) -> Vec<String> {
    sentences
        .iter()
        .map(|s| s.as_ref().trim())
        .filter(|s| is_pedagogical(s))
        .map(str::to_string)
        .collect()
}

pub fn is_pedagogical(sentence: &str) -> bool {
    let s = strip_bullet(sentence.trim());
    if s.is_empty() || is_header(s) {
        return false;
    }
    let lower = s.to_lowercase();
    if BOILERPLATE.iter().any(|b| lower.contains(b)) || has_clock_time(&lower) {
        return false;
    }
    if OUTCOME_PHRASES.iter().any(|p| lower.contains(p)) {
        return true;
    }
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    if words.first().is_some_and(|w| is_outcome_verb(w)) {
        return true;
    }
    words
        .windows(2)
        .any(|w| w[0] == "to" && is_outcome_verb(w[1]))
}

fn is_outcome_verb(word: &str) -> bool {
    OUTCOME_VERBS.contains(&word)
        || word
            .strip_suffix('s')
            .is_some_and(|stem| OUTCOME_VERBS.contains(&stem))
}

fn strip_bullet(s: &str) -> &str {
    s.trim_start_matches(|c: char| matches!(c, '-' | '*' | '•' | '·') || c.is_whitespace())
}

fn is_header(s: &str) -> bool {
    s.ends_with(':') || tokenize(s).len() < 3 && !s.ends_with('.')
}

// "2pm", "2:30 pm", "10am"
fn has_clock_time(lower: &str) -> bool {
    let bytes = lower.as_bytes();
    for (i, _) in lower.match_indices(['a', 'p']) {
        if bytes.get(i + 1) != Some(&b'm') {
            continue;
        }
        if bytes.get(i + 2).is_some_and(|b| b.is_ascii_alphanumeric()) {
            continue;
        }
        let mut j = i;
        while j > 0 && bytes[j - 1] == b' ' {
            j -= 1;
        }
        if j > 0 && bytes[j - 1].is_ascii_digit() {
            return true;
        }
    }
    false
}

/// Splits free text into sentences on line breaks and terminal punctuation.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut current = String::new();
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            current.push(c);
            if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
                push_trimmed(&mut out, &current);
                current.clear();
            }
        }
        push_trimmed(&mut out, &current);
    }
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_sentence_is_kept() {
        assert!(is_pedagogical("Students will implement sorting algorithms."));
        assert!(is_pedagogical("Design relational database schemas."));
        assert!(is_pedagogical("Learn to reason about program correctness."));
    }

    #[test]
    fn boilerplate_is_dropped() {
        assert!(!is_pedagogical("Office hours: Tuesdays 2–4pm."));
        assert!(!is_pedagogical("Students will submit work by email."));
        assert!(!is_pedagogical("Lectures meet at 10 am in the main hall to discuss."));
        assert!(!is_pedagogical("Course Objectives:"));
        assert!(!is_pedagogical("Week 3"));
    }

    #[test]
    fn splits_on_terminators_and_lines() {
        let s = split_sentences("Intro.  Students will design APIs! Why?\n- Implement a parser\n\nv1.2 rocks");
        assert_eq!(
            s,
            vec!["Intro.", "Students will design APIs!", "Why?", "- Implement a parser", "v1.2 rocks"]
        );
    }
}
