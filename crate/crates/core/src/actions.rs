//! Free-form model text to discrete action.
//!
//! Each pattern is a short phrase. A pattern matches when all of its words
//! occur in the text, in any order, with at most [`MAX_FILLER_WORDS`]
//! non-keyword words between consecutive pattern words. Words belonging to
//! any pattern in the ruleset are keywords and never count as filler, which
//! keeps "turn right then left" from reading as "turn ... left".
//!
//! When several patterns match, the one starting earliest in the text wins;
//! ties at the same word go to STOP, then FORWARD, TURN_LEFT, TURN_RIGHT.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_FILLER_WORDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Stop];

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "FORWARD",
            Action::TurnLeft => "TURN_LEFT",
            Action::TurnRight => "TURN_RIGHT",
            Action::Stop => "STOP",
        }
    }

    /// Lower rank wins offset ties.
    fn priority(self) -> u8 {
        match self {
            Action::Stop => 0,
            Action::Forward => 1,
            Action::TurnLeft => 2,
            Action::TurnRight => 3,
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, Action::TurnLeft | Action::TurnRight)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = RulesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s) || a.name().replace('_', "-").eq_ignore_ascii_case(s))
            .ok_or_else(|| RulesError::UnknownAction(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RulesError {
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("pattern {0:?} contains no words")]
    EmptyPattern(String),
    #[error("pattern {0:?} repeats a word")]
    RepeatedWord(String),
    #[error("pattern {pattern:?} appears under both {first} and {second}")]
    Duplicate {
        pattern: String,
        first: Action,
        second: Action,
    },
    #[error("{0} has fewer than two patterns")]
    TooFewPatterns(Action),
    #[error("rules file: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("no action phrase found in {text:?}")]
pub struct NoMatch {
    pub text: String,
}

/// Normalized words of `text` with their byte offsets.
fn tokenize(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            out.push((s, normalize(&text[s..i])));
        }
    }
    if let Some(s) = start {
        out.push((s, normalize(&text[s..])));
    }
    out
}

// Round-tripping through uppercase folds characters like the long s that
// only meet their ASCII form on the way up.
fn normalize(word: &str) -> String {
    word.to_uppercase().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pattern {
    phrase: String,
    words: Vec<String>,
}

/// Per-action ordered phrase lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternRuleset {
    patterns: Vec<(Action, Pattern)>,
    keywords: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    #[serde(rename = "FORWARD")]
    forward: Vec<String>,
    #[serde(rename = "TURN_LEFT")]
    turn_left: Vec<String>,
    #[serde(rename = "TURN_RIGHT")]
    turn_right: Vec<String>,
    #[serde(rename = "STOP")]
    stop: Vec<String>,
}

/// Default synonym lists. The first two (three for STOP) phrases of each
/// list are the canonical ones; the rest are a curated extension.
pub const DEFAULT_RULES: [(Action, &[&str]); 4] = [
    (
        Action::Forward,
        &[
            "move forward",
            "proceed",
            "go forward",
            "go straight",
            "move straight",
            "move ahead",
            "advance",
            "walk forward",
            "head forward",
            "keep going",
            "continue forward",
            "continue straight",
        ],
    ),
    (
        Action::TurnLeft,
        &[
            "turn left",
            "rotate left",
            "veer left",
            "go left",
            "pivot left",
            "spin left",
            "bear left",
            "head left",
            "swing left",
        ],
    ),
    (
        Action::TurnRight,
        &[
            "turn right",
            "rotate right",
            "veer right",
            "go right",
            "pivot right",
            "spin right",
            "bear right",
            "head right",
            "swing right",
        ],
    ),
    (
        Action::Stop,
        &[
            "stop",
            "halt",
            "wait",
            "stay",
            "stand still",
            "remain still",
            "arrived",
            "destination reached",
            "goal reached",
            "finish",
        ],
    ),
];

impl PatternRuleset {
    pub fn new<S: AsRef<str>>(rules: &[(Action, Vec<S>)]) -> Result<Self, RulesError> {
        let mut patterns: Vec<(Action, Pattern)> = Vec::new();
        for &(action, ref phrases) in rules {
            for phrase in phrases {
                let phrase = phrase.as_ref().to_string();
                let words: Vec<String> = tokenize(&phrase).into_iter().map(|(_, w)| w).collect();
                if words.is_empty() {
                    return Err(RulesError::EmptyPattern(phrase));
                }
                if words.iter().collect::<BTreeSet<_>>().len() != words.len() {
                    return Err(RulesError::RepeatedWord(phrase));
                }
                if let Some((other, _)) = patterns.iter().find(|(_, p)| p.words == words) {
                    return Err(RulesError::Duplicate {
                        pattern: phrase,
                        first: *other,
                        second: action,
                    });
                }
                patterns.push((action, Pattern { phrase, words }));
            }
        }
        for action in Action::ALL {
            if patterns.iter().filter(|(a, _)| *a == action).count() < 2 {
                return Err(RulesError::TooFewPatterns(action));
            }
        }
        let keywords = patterns.iter().flat_map(|(_, p)| p.words.iter().cloned()).collect();
        Ok(Self { patterns, keywords })
    }

    pub fn phrases(&self, action: Action) -> impl Iterator<Item = &str> {
        self.patterns
            .iter()
            .filter(move |(a, _)| *a == action)
            .map(|(_, p)| p.phrase.as_str())
    }

    pub fn contains(&self, action: Action, phrase: &str) -> bool {
        self.phrases(action).any(|p| p == phrase)
    }

    fn to_file(&self) -> RulesFile {
        let list = |a| self.phrases(a).map(str::to_string).collect();
        RulesFile {
            forward: list(Action::Forward),
            turn_left: list(Action::TurnLeft),
            turn_right: list(Action::TurnRight),
            stop: list(Action::Stop),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("rules serialize")
    }

    pub fn from_json(json: &str) -> Result<Self, RulesError> {
        let f: RulesFile = serde_json::from_str(json).map_err(|e| RulesError::Json(e.to_string()))?;
        Self::new(&[
            (Action::Forward, f.forward),
            (Action::TurnLeft, f.turn_left),
            (Action::TurnRight, f.turn_right),
            (Action::Stop, f.stop),
        ])
    }

    /// Earliest-starting match, if any.
    pub fn find(&self, text: &str) -> Option<ActionMatch> {
        let words = tokenize(text);
        let mut best: Option<(usize, Action, &Pattern)> = None;
        for (action, pattern) in &self.patterns {
            let Some(start) = (0..words.len()).find(|&i| self.matches_at(&words, i, pattern)) else {
                continue;
            };
            let better = match best {
                None => true,
                Some((s, a, _)) => start < s || (start == s && action.priority() < a.priority()),
            };
            if better {
                best = Some((start, *action, pattern));
            }
        }
        best.map(|(i, action, p)| ActionMatch {
            action,
            offset: words[i].0,
            pattern: p.phrase.clone(),
        })
    }

    fn matches_at(&self, words: &[(usize, String)], start: usize, pattern: &Pattern) -> bool {
        let Some(first) = pattern.words.iter().position(|w| *w == words[start].1) else {
            return false;
        };
        let mut remaining: Vec<&String> = pattern.words.iter().collect();
        remaining.remove(first);
        let mut filler = 0;
        for (_, w) in &words[start + 1..] {
            if remaining.is_empty() {
                break;
            }
            if let Some(k) = remaining.iter().position(|r| *r == w) {
                remaining.remove(k);
                filler = 0;
            } else if self.keywords.contains(w) {
                return false;
            } else {
                filler += 1;
                if filler > MAX_FILLER_WORDS {
                    return false;
                }
            }
        }
        remaining.is_empty()
    }
}

impl Default for PatternRuleset {
    fn default() -> Self {
        default_ruleset()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMatch {
    pub action: Action,
    /// Byte offset of the first matched word.
    pub offset: usize,
    pub pattern: String,
}

pub fn default_ruleset() -> PatternRuleset {
    let rules: Vec<(Action, Vec<&str>)> = DEFAULT_RULES.iter().map(|(a, p)| (*a, p.to_vec())).collect();
    PatternRuleset::new(&rules).expect("default ruleset is valid")
}

pub fn parse_action(text: &str, rules: &PatternRuleset) -> Result<Action, NoMatch> {
    rules
        .find(text)
        .map(|m| m.action)
        .ok_or_else(|| NoMatch { text: text.to_string() })
}
