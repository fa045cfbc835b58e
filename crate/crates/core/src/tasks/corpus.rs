//! Text corpora as token ids, and contiguous-stream batching for language
//! models.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{SeqInput, Target};

use super::TaskError;

/// Reserved symbol for out-of-vocabulary words.
pub const UNK: &str = "<unk>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Char,
    Word,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Char => "char",
            Granularity::Word => "word",
        })
    }
}

impl FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "char" | "character" => Ok(Granularity::Char),
            "word" => Ok(Granularity::Word),
            other => Err(format!("unknown granularity `{other}` (expected char or word)")),
        }
    }
}

/// Symbol table. Ids are positions in `symbols`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub granularity: Granularity,
    pub symbols: Vec<String>,
    /// Id that unknown words map to (word granularity only).
    pub unk: Option<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(granularity: Granularity, symbols: Vec<String>, unk: Option<usize>) -> Self {
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocabulary {
            granularity,
            symbols,
            unk,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        if self.index.is_empty() && !self.symbols.is_empty() {
            return self.symbols.iter().position(|s| s == symbol);
        }
        self.index.get(symbol).copied()
    }

    fn tokens(granularity: Granularity, text: &str) -> Vec<String> {
        match granularity {
            Granularity::Char => text.chars().map(String::from).collect(),
            Granularity::Word => text.split_whitespace().map(str::to_owned).collect(),
        }
    }

    /// Ids of `text`. Unknown symbols map to the unknown id, or are an error
    /// when there is none.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>, String> {
        Self::tokens(self.granularity, text)
            .iter()
            .map(|t| {
                self.id(t)
                    .or(self.unk)
                    .ok_or_else(|| format!("symbol {t:?} is not in the vocabulary"))
            })
            .collect()
    }

    /// Characters are concatenated, words joined by single spaces.
    pub fn decode(&self, ids: &[usize]) -> String {
        let parts = ids.iter().map(|&i| self.symbols[i].as_str());
        match self.granularity {
            Granularity::Char => parts.collect(),
            Granularity::Word => parts.collect::<Vec<_>>().join(" "),
        }
    }

    /// Characters: every character of any split, in code point order.
    /// Words: training words by descending count then lexicographically,
    /// followed by [`UNK`] unless the training text already contains it.
    pub fn build(granularity: Granularity, train: &str, others: &[&str]) -> Vocabulary {
        match granularity {
            Granularity::Char => {
                let set: BTreeSet<char> = std::iter::once(train).chain(others.iter().copied()).flat_map(str::chars).collect();
                Vocabulary::new(granularity, set.into_iter().map(String::from).collect(), None)
            }
            Granularity::Word => {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for w in train.split_whitespace() {
                    *counts.entry(w).or_default() += 1;
                }
                let mut words: Vec<(&str, usize)> = counts.into_iter().collect();
                words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
                let mut symbols: Vec<String> = words.into_iter().map(|(w, _)| w.to_owned()).collect();
                let unk = match symbols.iter().position(|s| s == UNK) {
                    Some(i) => i,
                    None => {
                        symbols.push(UNK.to_owned());
                        symbols.len() - 1
                    }
                };
                Vocabulary::new(granularity, symbols, Some(unk))
            }
        }
    }
}

/// Three tokenised splits over a shared vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub vocab: Vocabulary,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl CorpusSplit {
    pub fn from_texts(granularity: Granularity, train: &str, valid: &str, test: &str) -> Result<CorpusSplit, String> {
        let vocab = Vocabulary::build(granularity, train, &[valid, test]);
        Ok(CorpusSplit {
            train: vocab.encode(train)?,
            valid: vocab.encode(valid)?,
            test: vocab.encode(test)?,
            vocab,
        })
    }
}

/// Reads three UTF-8 files and tokenises them; the vocabulary for words is
/// built from the training split only.
pub fn load_text_corpus(train: &Path, valid: &Path, test: &Path, granularity: Granularity) -> Result<CorpusSplit, TaskError> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| TaskError::io(p, e));
    let (tr, va, te) = (read(train)?, read(valid)?, read(test)?);
    if Vocabulary::tokens(granularity, &tr).is_empty() {
        return Err(TaskError::EmptyCorpus(train.into()));
    }
    // Encoding cannot fail: characters cover all splits and words have `<unk>`.
    Ok(CorpusSplit::from_texts(granularity, &tr, &va, &te).expect("vocabulary covers every split"))
}

/// A token sequence cut into `batch` contiguous streams.
#[derive(Clone, Debug, PartialEq)]
pub struct LmStream {
    pub streams: Vec<Vec<usize>>,
    pub bptt: usize,
}

/// One truncated-BPTT window across all streams.
#[derive(Clone, Debug, PartialEq)]
pub struct LmWindow {
    pub start: usize,
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

impl LmWindow {
    pub fn to_batch(&self) -> (Vec<SeqInput>, Vec<Target>) {
        (
            self.inputs.iter().cloned().map(SeqInput::Tokens).collect(),
            self.targets.iter().cloned().map(Target::Sequence).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LmStream {
    pub fn stream_len(&self) -> usize {
        self.streams.first().map_or(0, Vec::len)
    }

    /// Start offsets of successive windows.
    pub fn starts(&self) -> impl Iterator<Item = usize> {
        (0..self.stream_len().saturating_sub(1)).step_by(self.bptt)
    }

    pub fn window_count(&self) -> usize {
        self.starts().count()
    }

    /// Window starting at `start`: up to `bptt` inputs with next-token
    /// targets; the last window of a pass may be shorter.
    pub fn window(&self, start: usize) -> LmWindow {
        let end = (start + self.bptt).min(self.stream_len() - 1);
        LmWindow {
            start,
            inputs: self.streams.iter().map(|s| s[start..end].to_vec()).collect(),
            targets: self.streams.iter().map(|s| s[start + 1..end + 1].to_vec()).collect(),
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = LmWindow> + '_ {
        self.starts().map(|s| self.window(s))
    }
}

/// Splits `tokens` into `batch` contiguous streams of `⌊len/batch⌋` tokens,
/// dropping the remainder.
pub fn batchify(tokens: &[usize], batch: usize, bptt: usize) -> Result<LmStream, TaskError> {
    let needed = batch * (bptt + 1);
    if batch == 0 || bptt == 0 || tokens.len() < needed {
        return Err(TaskError::CorpusTooShort {
            len: tokens.len(),
            batch,
            bptt,
            needed,
        });
    }
    let per = tokens.len() / batch;
    Ok(LmStream {
        streams: tokens.chunks_exact(per).take(batch).map(<[usize]>::to_vec).collect(),
        bptt,
    })
}
