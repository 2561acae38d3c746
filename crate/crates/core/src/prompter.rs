// SPDX-License-Identifier: Apache-2.0

//! Human-in-the-loop answer sources: unmapped layers and debug manuals.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("prompter aborted: {0}")]
pub struct PrompterAborted(pub String);

pub trait Prompter {
    /// Asks one question and returns the answer line.
    fn ask(&mut self, question: &str) -> Result<String, PrompterAborted>;

    /// Number of questions asked so far.
    fn asked(&self) -> usize;
}

/// Answers from a newline-delimited file, one answer per question. A
/// literal `\n` inside an answer is expanded to a newline.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPrompter {
    answers: VecDeque<String>,
    questions: Vec<String>,
}

impl ScriptedPrompter {
    pub fn new<I, S>(answers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            answers: answers.into_iter().map(Into::into).collect(),
            questions: Vec::new(),
        }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::new(
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.replace("\\n", "\n")),
        ))
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }
}

impl Prompter for ScriptedPrompter {
    fn ask(&mut self, question: &str) -> Result<String, PrompterAborted> {
        self.questions.push(question.to_string());
        self.answers
            .pop_front()
            .ok_or_else(|| PrompterAborted("scripted answers exhausted".into()))
    }

    fn asked(&self) -> usize {
        self.questions.len()
    }
}

/// Interactive terminal prompter. `quit` or end of input aborts.
pub struct TerminalPrompter<R, W> {
    input: R,
    output: W,
    asked: usize,
}

impl TerminalPrompter<std::io::StdinLock<'static>, std::io::Stderr> {
    pub fn stdio() -> Self {
        Self::new(std::io::stdin().lock(), std::io::stderr())
    }
}

impl<R: BufRead, W: Write> TerminalPrompter<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self {
            input,
            output,
            asked: 0,
        }
    }
}

impl<R: BufRead, W: Write> Prompter for TerminalPrompter<R, W> {
    fn ask(&mut self, question: &str) -> Result<String, PrompterAborted> {
        self.asked += 1;
        let _ = writeln!(self.output, "{question}");
        let _ = write!(self.output, "> ");
        let _ = self.output.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) => Err(PrompterAborted("end of input".into())),
            Ok(_) if line.trim() == "quit" => Err(PrompterAborted("user quit".into())),
            Ok(_) => Ok(line.trim_end_matches(['\r', '\n']).replace("\\n", "\n")),
            Err(e) => Err(PrompterAborted(e.to_string())),
        }
    }

    fn asked(&self) -> usize {
        self.asked
    }
}
