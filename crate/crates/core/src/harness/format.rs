//! Line-oriented dataset files.
//!
//! A statement line is `<id> <tokens>`; a question line is
//! `<id> <tokens ending in ?>\t<answer>\t<supporting ids>`. Ids start at 1
//! and restart at 1 for every story. Stream files hold one story per line;
//! the parallel `.seg` file repeats the words with `|` after each segment.

use std::fs;
use std::path::Path;

use crate::error::{MemnnError, Result};
use crate::simulator::{Question, QuestionKind, SpanKind, Story, StreamStory};

pub fn serialize_stories(stories: &[Story]) -> String {
    let mut out = String::new();
    for s in stories {
        let mut id = 0usize;
        let mut line_of = Vec::with_capacity(s.statements.len());
        let mut qi = 0;
        let mut questions_upto = |pos: usize, id: &mut usize, line_of: &[usize], out: &mut String| {
            while qi < s.questions.len() && s.questions[qi].position <= pos {
                let q = &s.questions[qi];
                *id += 1;
                let sup: Vec<String> = q.supports.iter().map(|&i| line_of[i].to_string()).collect();
                out.push_str(&format!("{} {}\t{}\t{}\n", id, q.tokens.join(" "), q.answer, sup.join(" ")));
                qi += 1;
            }
        };
        questions_upto(0, &mut id, &line_of, &mut out);
        for (i, st) in s.statements.iter().enumerate() {
            id += 1;
            line_of.push(id);
            out.push_str(&format!("{} {}\n", id, st.join(" ")));
            questions_upto(i + 1, &mut id, &line_of, &mut out);
        }
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> MemnnError {
    MemnnError::Parse { line, msg: msg.into() }
}

pub fn parse_stories(text: &str) -> Result<Vec<Story>> {
    let mut stories: Vec<Story> = Vec::new();
    // line id -> statement index, for the current story
    let mut statement_at: Vec<Option<usize>> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let ln = n + 1;
        if raw.trim().is_empty() {
            return Err(parse_err(ln, "blank line"));
        }
        let (id_str, rest) = raw.split_once(' ').ok_or_else(|| parse_err(ln, "missing id"))?;
        let id: usize = id_str.parse().map_err(|_| parse_err(ln, format!("bad id {id_str:?}")))?;
        if id == 1 {
            stories.push(Story::default());
            statement_at.clear();
        } else if id != statement_at.len() + 1 || stories.is_empty() {
            return Err(parse_err(ln, format!("expected id {} or 1, got {id}", statement_at.len() + 1)));
        }
        let story = stories.last_mut().unwrap();
        let fields: Vec<&str> = rest.split('\t').collect();
        match fields.as_slice() {
            [text] => {
                let tokens: Vec<String> = text.split(' ').map(String::from).collect();
                if tokens.iter().any(String::is_empty) {
                    return Err(parse_err(ln, "empty token"));
                }
                statement_at.push(Some(story.statements.len()));
                story.statements.push(tokens);
            }
            [text, answer, sup] => {
                let tokens: Vec<String> = text.split(' ').map(String::from).collect();
                if tokens.last().map(String::as_str) != Some("?") || tokens.iter().any(String::is_empty) {
                    return Err(parse_err(ln, "question must be tokens ending in ?"));
                }
                if answer.is_empty() || answer.contains(' ') {
                    return Err(parse_err(ln, "answer must be one word"));
                }
                let mut supports = Vec::new();
                for s in sup.split(' ') {
                    let sid: usize = s.parse().map_err(|_| parse_err(ln, format!("bad support id {s:?}")))?;
                    if sid == 0 || sid > statement_at.len() {
                        return Err(parse_err(ln, format!("support id {sid} outside story")));
                    }
                    let idx = statement_at[sid - 1].ok_or_else(|| parse_err(ln, format!("support id {sid} is a question")))?;
                    supports.push(idx);
                }
                statement_at.push(None);
                story.questions.push(Question {
                    kind: QuestionKind::infer(&tokens),
                    tokens,
                    answer: answer.to_string(),
                    supports,
                    position: story.statements.len(),
                    difficulty: None,
                    answer_sentence: None,
                });
            }
            _ => return Err(parse_err(ln, "expected 1 or 3 tab-separated fields")),
        }
    }
    Ok(stories)
}

pub fn write_stories(path: impl AsRef<Path>, stories: &[Story]) -> Result<()> {
    Ok(fs::write(path, serialize_stories(stories))?)
}

pub fn read_stories(path: impl AsRef<Path>) -> Result<Vec<Story>> {
    parse_stories(&fs::read_to_string(path)?)
}

/// `.stream` and `.seg` contents for a list of streams.
pub fn serialize_streams(streams: &[StreamStory]) -> (String, String) {
    let mut stream = String::new();
    let mut seg = String::new();
    for s in streams {
        stream.push_str(&s.words.join(" "));
        stream.push('\n');
        let b = s.boundaries();
        let mut parts = Vec::with_capacity(s.words.len() * 2);
        for (w, &end) in s.words.iter().zip(&b) {
            parts.push(w.as_str());
            if end {
                parts.push("|");
            }
        }
        seg.push_str(&parts.join(" "));
        seg.push('\n');
    }
    (stream, seg)
}

/// Words and boundary flags of one `.seg` line.
pub fn parse_seg_line(line: &str) -> Result<(Vec<String>, Vec<bool>)> {
    let mut words = Vec::new();
    let mut ends: Vec<bool> = Vec::new();
    for t in line.split_whitespace() {
        if t == "|" {
            match ends.last_mut() {
                Some(e) if !*e => *e = true,
                _ => return Err(parse_err(0, "misplaced boundary marker")),
            }
        } else {
            words.push(t.to_string());
            ends.push(false);
        }
    }
    Ok((words, ends))
}

/// Gold spans of a stream line pair, statements and questions told apart
/// by a closing "?".
pub fn spans_from_seg(words: &[String], ends: &[bool]) -> Vec<(usize, usize, SpanKind)> {
    let mut out = Vec::new();
    let (mut start, mut ns, mut nq) = (0, 0, 0);
    for (i, &e) in ends.iter().enumerate() {
        if e {
            let kind = if words[i] == "?" {
                nq += 1;
                SpanKind::Question(nq - 1)
            } else {
                ns += 1;
                SpanKind::Statement(ns - 1)
            };
            out.push((start, i + 1, kind));
            start = i + 1;
        }
    }
    out
}

pub fn write_streams(stem: impl AsRef<Path>, streams: &[StreamStory]) -> Result<()> {
    let stem = stem.as_ref();
    let (a, b) = serialize_streams(streams);
    fs::write(stem.with_extension("stream"), a)?;
    fs::write(stem.with_extension("seg"), b)?;
    Ok(())
}
