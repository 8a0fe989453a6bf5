//! Line-at-a-time interactive session over a trained model.

use std::io::{BufRead, Write};

use crate::error::Result;
use crate::features::tokenize;
use crate::model::MemNN;

pub struct Session<'a> {
    model: &'a MemNN,
    memory: Vec<Vec<String>>,
}

impl<'a> Session<'a> {
    pub fn new(model: &'a MemNN) -> Self {
        Session { model, memory: Vec::new() }
    }

    pub fn memory(&self) -> &[Vec<String>] {
        &self.memory
    }

    /// Handle one input line and return the reply, if any. Questions end in
    /// "?"; anything else is a statement. `:reset` empties memory.
    pub fn handle(&mut self, line: &str) -> Option<String> {
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        if line == ":reset" {
            self.memory.clear();
            return Some("memory cleared".into());
        }
        let tokens: Vec<String> = tokenize(line).into_iter().filter(|t| t != ".").collect();
        if tokens.is_empty() {
            return None;
        }
        if tokens.last().map(String::as_str) == Some("?") {
            Some(match self.model.answer(&self.memory, &tokens, None) {
                Ok(a) => {
                    let sup: Vec<String> = a
                        .supports
                        .iter()
                        .map(|&i| format!("[{}] {}", i + 1, self.memory[i].join(" ")))
                        .collect();
                    format!("{}\n  supports: {}", a.word, sup.join(" | "))
                }
                Err(e) => format!("error: {e}"),
            })
        } else {
            self.memory.push(tokens);
            None
        }
    }
}

pub fn run<R: BufRead, W: Write>(model: &MemNN, input: R, mut out: W) -> Result<()> {
    let mut session = Session::new(model);
    for line in input.lines() {
        if let Some(reply) = session.handle(&line?) {
            writeln!(out, "{reply}")?;
        }
    }
    Ok(())
}
