//! Synthetic tasks with verifiable rewards, over one shared character vocabulary.

pub mod countdown;
pub mod sudoku;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

pub const MASK: TokenId = 0;
pub const PAD: TokenId = 1;
const SYMBOLS: &str = "0123456789abcdefgh+-*/()=|>";

/// `<mask>`, `<pad>`, digits, the letters `a`-`h`, and `+ - * / ( ) = | >`.
pub fn task_vocabulary() -> Vocabulary {
    let mut tokens = vec!["<mask>".to_string(), "<pad>".to_string()];
    tokens.extend(SYMBOLS.chars().map(String::from));
    Vocabulary::new(tokens, MASK, PAD).expect("static vocabulary is valid")
}

/// Token id of a vocabulary character.
pub fn char_token(c: char) -> Option<TokenId> {
    SYMBOLS.find(c).map(|i| i + 2)
}

pub fn token_char(t: TokenId) -> Option<char> {
    t.checked_sub(2).and_then(|i| SYMBOLS.chars().nth(i))
}

/// Encodes `text` and pads it to `len`; `None` if it does not fit or uses foreign characters.
pub fn encode_padded(text: &str, len: usize) -> Option<Vec<TokenId>> {
    let mut out: Vec<TokenId> = text.chars().map(char_token).collect::<Option<_>>()?;
    if out.len() > len {
        return None;
    }
    out.resize(len, PAD);
    Some(out)
}

/// Inverse of [`encode_padded`]: the text before the padding. `None` if a non-pad token
/// follows padding or a sentinel is mixed into the text.
pub fn decode_padded(tokens: &[TokenId]) -> Option<String> {
    let end = tokens.iter().position(|&t| t == PAD).unwrap_or(tokens.len());
    if tokens[end..].iter().any(|&t| t != PAD) {
        return None;
    }
    tokens[..end].iter().map(|&t| token_char(t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Copy,
    Sort,
    Sudoku4,
    Countdown,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Copy => "copy",
            TaskKind::Sort => "sort",
            TaskKind::Sudoku4 => "sudoku4",
            TaskKind::Countdown => "countdown",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "sort" => Ok(TaskKind::Sort),
            "sudoku4" => Ok(TaskKind::Sudoku4),
            "countdown" => Ok(TaskKind::Countdown),
            other => Err(Error::config(format!("unknown task '{other}' (expected copy, sort, sudoku4 or countdown)"))),
        }
    }
}

/// Task kind plus its difficulty knobs. Knobs that do not apply to the kind are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Completion length `L`.
    pub length: usize,
    /// Copy/sort: payload symbols.
    pub payload_len: usize,
    /// Copy/sort: payload alphabet size, drawn from `a`.. (copy) or `1`.. (sort).
    pub alphabet: usize,
    /// Sudoku: filled cells in the puzzle.
    pub givens: usize,
    /// Countdown: numbers to combine.
    pub operands: usize,
    pub max_operand: u64,
    pub max_target: u64,
    /// Reward 1 for a correct completion and 0 otherwise, with no partial credit.
    pub binary_reward: bool,
}

impl TaskSpec {
    /// Defaults per kind, with their matching `(L, N, b)`.
    pub fn default_for(kind: TaskKind) -> (Self, usize, usize) {
        let base = TaskSpec {
            kind,
            length: 16,
            payload_len: 16,
            alphabet: 4,
            givens: 12,
            operands: 3,
            max_operand: 9,
            max_target: 99,
            binary_reward: false,
        };
        match kind {
            TaskKind::Copy | TaskKind::Sort | TaskKind::Sudoku4 => (base, 8, 8),
            TaskKind::Countdown => (TaskSpec { length: 12, ..base }, 6, 6),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            TaskKind::Copy | TaskKind::Sort => {
                if self.payload_len == 0 || self.payload_len > self.length {
                    return Err(Error::config(format!(
                        "payload_len must lie in 1..={} (the completion length), got {}",
                        self.length, self.payload_len
                    )));
                }
                let max = if self.kind == TaskKind::Copy { 8 } else { 9 };
                if !(1..=max).contains(&self.alphabet) {
                    return Err(Error::config(format!("alphabet must lie in 1..={max}, got {}", self.alphabet)));
                }
            }
            TaskKind::Sudoku4 => {
                if self.length != 16 {
                    return Err(Error::config(format!("sudoku4 completions have length 16, got {}", self.length)));
                }
                if !(4..=16).contains(&self.givens) {
                    return Err(Error::config(format!("givens must lie in 4..=16, got {}", self.givens)));
                }
            }
            TaskKind::Countdown => {
                if !(2..=4).contains(&self.operands) {
                    return Err(Error::config(format!("operands must lie in 2..=4, got {}", self.operands)));
                }
                if !(1..=9).contains(&self.max_operand) {
                    return Err(Error::config(format!("max_operand must lie in 1..=9, got {}", self.max_operand)));
                }
                // worst case: every number but the first is wrapped with one operator
                let longest = 4 * self.operands - 5;
                if self.length < longest {
                    return Err(Error::config(format!(
                        "length {} cannot hold a {}-operand expression ({} characters)",
                        self.length, self.operands, longest
                    )));
                }
            }
        }
        Ok(())
    }
}

/// What an instance asks for; enough to re-derive the verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum InstanceData {
    Sequence { payload: Vec<TokenId>, answer: Vec<TokenId> },
    Sudoku { puzzle: Vec<u8>, solution: Vec<u8> },
    Countdown { numbers: Vec<u64>, target: u64, solution: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub seed: u64,
    pub prompt: Vec<TokenId>,
    pub length: usize,
    pub binary_reward: bool,
    pub data: InstanceData,
}

/// Draws an instance seed from `rng` and generates from it.
pub fn sample_instance<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> Result<TaskInstance> {
    instance_from_seed(spec, rng.gen())
}

/// Deterministic instance for `seed`.
pub fn instance_from_seed(spec: &TaskSpec, seed: u64) -> Result<TaskInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (prompt, data) = match spec.kind {
        TaskKind::Copy | TaskKind::Sort => {
            let first = if spec.kind == TaskKind::Copy { 'a' } else { '1' };
            let base = char_token(first).unwrap();
            let payload: Vec<TokenId> = (0..spec.payload_len).map(|_| base + rng.gen_range(0..spec.alphabet)).collect();
            let mut answer = payload.clone();
            if spec.kind == TaskKind::Sort {
                answer.sort_unstable();
            }
            answer.resize(spec.length, PAD);
            let mut prompt = payload.clone();
            prompt.push(char_token('>').unwrap());
            (prompt, InstanceData::Sequence { payload, answer })
        }
        TaskKind::Sudoku4 => {
            let (puzzle, solution) = sudoku::generate(&mut rng, spec.givens);
            let prompt = puzzle.iter().map(|&d| char_token((b'0' + d) as char).unwrap()).collect();
            (prompt, InstanceData::Sudoku { puzzle: puzzle.to_vec(), solution: solution.to_vec() })
        }
        TaskKind::Countdown => {
            let (numbers, target, solution) =
                countdown::generate(&mut rng, spec.operands, spec.max_operand, spec.max_target, spec.length);
            let mut text = numbers.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("|");
            text.push('=');
            text.push_str(&target.to_string());
            let prompt = text.chars().map(|c| char_token(c).unwrap()).collect();
            (prompt, InstanceData::Countdown { numbers, target, solution })
        }
    };
    let inst = TaskInstance { kind: spec.kind, seed, prompt, length: spec.length, binary_reward: spec.binary_reward, data };
    debug_assert_eq!(inst.reward(&inst.solution()), 1.0);
    Ok(inst)
}

impl TaskInstance {
    /// A completion of length `L` with reward 1.
    pub fn solution(&self) -> Vec<TokenId> {
        match &self.data {
            InstanceData::Sequence { answer, .. } => answer.clone(),
            InstanceData::Sudoku { solution, .. } => encode_grid(solution),
            InstanceData::Countdown { solution, .. } => encode_padded(solution, self.length).expect("fits by construction"),
        }
    }

    /// Leaf reward in `[0, 1]`. Total over every token sequence.
    pub fn reward(&self, completion: &[TokenId]) -> f64 {
        let r = match &self.data {
            InstanceData::Sequence { answer, .. } => {
                if completion.len() != answer.len() {
                    return 0.0;
                }
                let hits = completion.iter().zip(answer).filter(|(a, b)| a == b).count();
                hits as f64 / answer.len() as f64
            }
            InstanceData::Sudoku { puzzle, .. } => match decode_grid(completion) {
                None => 0.0,
                Some(g) => {
                    let kept = puzzle.iter().zip(&g).all(|(&p, &d)| p == 0 || p == d);
                    if kept && sudoku::is_solved(&g) {
                        1.0
                    } else {
                        0.1
                    }
                }
            },
            InstanceData::Countdown { numbers, target, .. } => match decode_padded(completion) {
                Some(text) if countdown::parse(&text).is_some() => {
                    if countdown::solves(&text, numbers, *target) {
                        1.0
                    } else {
                        0.1
                    }
                }
                _ => 0.0,
            },
        };
        if self.binary_reward && r < 1.0 {
            0.0
        } else {
            r
        }
    }

    pub fn render_prompt(&self) -> String {
        render(&self.prompt)
    }
}

/// Characters for tokens; sentinels as `_` (mask) and `~` (pad).
pub fn render(tokens: &[TokenId]) -> String {
    tokens
        .iter()
        .map(|&t| match t {
            MASK => '_',
            PAD => '~',
            t => token_char(t).unwrap_or('?'),
        })
        .collect()
}

pub fn encode_grid(grid: &[u8]) -> Vec<TokenId> {
    grid.iter().map(|&d| char_token((b'0' + d) as char).expect("digit")).collect()
}

/// A grid of sixteen digits 1-4, or `None`.
pub fn decode_grid(tokens: &[TokenId]) -> Option<sudoku::Grid> {
    if tokens.len() != 16 {
        return None;
    }
    let mut g = [0u8; 16];
    for (cell, &t) in g.iter_mut().zip(tokens) {
        let d = token_char(t)?.to_digit(10)? as u8;
        if !(1..=4).contains(&d) {
            return None;
        }
        *cell = d;
    }
    Some(g)
}

/// One JSON instance per line.
pub fn write_instances<W: Write>(instances: &[TaskInstance], mut out: W) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_instances<R: BufRead>(input: R) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
