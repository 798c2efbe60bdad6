//! LaTeX token sequences: emission from trees and tokenization of strings.
//!
//! Both directions produce the same canonical form: one token per command,
//! character, brace or script marker, with every script argument braced.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relations::RelationLabel;
use crate::tree::{Bsrt, TreeError};

pub const FRAC: &str = "\\frac";

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(tokens.into_iter().map(Into::into).collect())
    }

    pub fn push(&mut self, token: impl Into<String>) {
        self.0.push(token.into());
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Balanced braces, and every `^`/`_` followed by `{`.
    pub fn is_well_formed(&self) -> bool {
        let mut depth = 0i64;
        for (i, t) in self.0.iter().enumerate() {
            match t.as_str() {
                "{" => depth += 1,
                "}" => {
                    depth -= 1;
                    if depth < 0 {
                        return false;
                    }
                }
                "^" | "_" if self.0.get(i + 1).map(String::as_str) != Some("{") => return false,
                _ => {}
            }
        }
        depth == 0
    }

    /// Renders the tokens as a LaTeX string. A space separates a letter
    /// command from a following letter; everything else is concatenated.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut prev_letter_command = false;
        for t in &self.0 {
            if prev_letter_command && t.starts_with(|c: char| c.is_ascii_alphabetic()) {
                out.push(' ');
            }
            out.push_str(t);
            prev_letter_command = is_letter_command(t);
        }
        out
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn is_letter_command(t: &str) -> bool {
    t.len() > 1 && t.starts_with('\\') && t[1..].chars().all(|c| c.is_ascii_alphabetic())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("node {id}: {reason}")]
    Contract { id: usize, reason: String },
}

/// Serializes a tree depth-first: a node's own token (or `\frac{..}{..}`,
/// or `label{..}` for a container), then `^{..}`, `_{..}`, then its `Right`
/// successors.
pub fn emit_latex(tree: &Bsrt) -> Result<TokenSequence, EmitError> {
    tree.validate()?;
    let mut out = TokenSequence::new();
    emit_node(tree, tree.root, &mut out)?;
    Ok(out)
}

fn emit_group(tree: &Bsrt, ids: &[usize], out: &mut TokenSequence) -> Result<(), EmitError> {
    out.push("{");
    for &id in ids {
        emit_node(tree, id, out)?;
    }
    out.push("}");
    Ok(())
}

fn emit_node(tree: &Bsrt, id: usize, out: &mut TokenSequence) -> Result<(), EmitError> {
    let above = tree.children(id, RelationLabel::Above);
    let below = tree.children(id, RelationLabel::Below);
    let inside = tree.children(id, RelationLabel::Inside);

    match (above.is_empty(), below.is_empty()) {
        (true, true) => {
            out.push(tree.node(id).symbol.label.clone());
            if !inside.is_empty() {
                emit_group(tree, &inside, out)?;
            }
        }
        (false, false) => {
            if !inside.is_empty() {
                return Err(EmitError::Contract {
                    id,
                    reason: "fraction bar with Inside children".into(),
                });
            }
            out.push(FRAC);
            emit_group(tree, &above, out)?;
            emit_group(tree, &below, out)?;
        }
        _ => {
            return Err(EmitError::Contract {
                id,
                reason: "Above and Below slots must both be filled".into(),
            })
        }
    }

    let sup = tree.children(id, RelationLabel::Superscript);
    if !sup.is_empty() {
        out.push("^");
        emit_group(tree, &sup, out)?;
    }
    let sub = tree.children(id, RelationLabel::Subscript);
    if !sub.is_empty() {
        out.push("_");
        emit_group(tree, &sub, out)?;
    }
    for next in tree.children(id, RelationLabel::Right) {
        emit_node(tree, next, out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizeError {
    #[error("unbalanced brace at byte {position}")]
    UnbalancedBrace { position: usize },
    #[error("unknown command {command} at byte {position}")]
    UnknownCommand { command: String, position: usize },
    #[error("script marker at byte {position} has no argument")]
    MissingScriptArgument { position: usize },
    #[error("\\left/\\right at byte {position} has no delimiter")]
    MissingDelimiter { position: usize },
}

/// LaTeX tokenizer over a fixed command set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    pub commands: BTreeSet<String>,
    /// Commands rewritten before lookup, e.g. `\dfrac` to `\frac`.
    pub aliases: BTreeMap<String, String>,
}

const SPACING_COMMANDS: [&str; 6] = ["\\,", "\\;", "\\:", "\\!", "\\ ", "\\quad"];

impl Default for Tokenizer {
    fn default() -> Self {
        let commands = [
            "\\frac", "\\sqrt", "\\times", "\\div", "\\pm", "\\mp", "\\cdot", "\\cdots", "\\ldots",
            "\\alpha", "\\beta", "\\gamma", "\\delta", "\\theta", "\\pi", "\\lambda", "\\mu",
            "\\sigma", "\\phi", "\\omega", "\\infty", "\\leq", "\\geq", "\\neq", "\\approx",
            "\\angle", "\\triangle", "\\circ", "\\prime", "\\sin", "\\cos", "\\tan", "\\log",
            "\\ln", "\\lim", "\\sum", "\\int", "\\{", "\\}", "\\%",
        ];
        let aliases = [
            ("\\dfrac", "\\frac"),
            ("\\tfrac", "\\frac"),
            ("\\le", "\\leq"),
            ("\\ge", "\\geq"),
            ("\\ne", "\\neq"),
        ];
        Self {
            commands: commands.iter().map(|c| c.to_string()).collect(),
            aliases: aliases
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_whitespace(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    /// Reads a command after its backslash: a run of letters, or one other character.
    fn command(&mut self) -> String {
        let start = self.pos;
        self.bump();
        if self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
            while self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                self.bump();
            }
        } else {
            self.bump();
        }
        self.text[start..self.pos].to_string()
    }
}

impl Tokenizer {
    pub fn tokenize(&self, s: &str) -> Result<TokenSequence, TokenizeError> {
        let mut cur = Cursor { text: s, pos: 0 };
        let mut out = TokenSequence::new();
        let mut open: Vec<usize> = Vec::new();

        loop {
            cur.skip_whitespace();
            let start = cur.pos;
            let Some(c) = cur.peek() else { break };
            match c {
                '{' => {
                    cur.bump();
                    open.push(start);
                    out.push("{");
                }
                '}' => {
                    cur.bump();
                    if open.pop().is_none() {
                        return Err(TokenizeError::UnbalancedBrace { position: start });
                    }
                    out.push("}");
                }
                '^' | '_' => {
                    cur.bump();
                    out.push(c.to_string());
                    cur.skip_whitespace();
                    match cur.peek() {
                        Some('{') => {}
                        None | Some('}') | Some('^') | Some('_') => {
                            return Err(TokenizeError::MissingScriptArgument { position: start })
                        }
                        Some(_) => {
                            let arg_start = cur.pos;
                            let arg = self.single_token(&mut cur)?;
                            match arg {
                                Some(tok) => {
                                    out.push("{");
                                    out.push(tok);
                                    out.push("}");
                                }
                                None => {
                                    return Err(TokenizeError::MissingScriptArgument {
                                        position: arg_start,
                                    })
                                }
                            }
                        }
                    }
                }
                _ => {
                    if let Some(tok) = self.single_token(&mut cur)? {
                        out.push(tok);
                    }
                }
            }
        }
        if let Some(&position) = open.last() {
            return Err(TokenizeError::UnbalancedBrace { position });
        }
        Ok(out)
    }

    /// One non-brace token at the cursor; `None` for spacing commands and
    /// `\left.`-style empty delimiters.
    fn single_token(&self, cur: &mut Cursor<'_>) -> Result<Option<String>, TokenizeError> {
        let start = cur.pos;
        let c = cur.peek().expect("caller checked for input");
        if c != '\\' {
            cur.bump();
            return Ok(Some(c.to_string()));
        }
        let command = cur.command();
        if SPACING_COMMANDS.contains(&command.as_str()) {
            return Ok(None);
        }
        if command == "\\left" || command == "\\right" {
            cur.skip_whitespace();
            return match cur.peek() {
                None => Err(TokenizeError::MissingDelimiter { position: start }),
                Some('.') => {
                    cur.bump();
                    Ok(None)
                }
                Some('\\') => {
                    let delim_start = cur.pos;
                    let delim = cur.command();
                    self.resolve(delim, delim_start).map(Some)
                }
                Some(d) => {
                    cur.bump();
                    Ok(Some(d.to_string()))
                }
            };
        }
        self.resolve(command, start).map(Some)
    }

    fn resolve(&self, command: String, position: usize) -> Result<String, TokenizeError> {
        let command = self.aliases.get(&command).cloned().unwrap_or(command);
        if self.commands.contains(&command) {
            Ok(command)
        } else {
            Err(TokenizeError::UnknownCommand { command, position })
        }
    }
}

/// Tokenizes with the default command set.
pub fn tokenize_latex(s: &str) -> Result<TokenSequence, TokenizeError> {
    Tokenizer::default().tokenize(s)
}
