use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";

/// Dense code index. Slots 0 and 1 are reserved for padding and unknown codes;
/// real codes follow in descending count order (ties by code).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeVocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    pub min_count: u64,
}

impl CodeVocab {
    pub fn from_parts(tokens: Vec<String>, counts: Vec<u64>, min_count: u64) -> Result<Self> {
        if tokens.len() != counts.len() || tokens.len() < 2 {
            return Err(Error::Malformed("vocabulary needs aligned tokens and counts".into()));
        }
        if tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Malformed("vocabulary must start with <PAD>, <UNK>".into()));
        }
        let index = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i))
            .collect::<HashMap<_, _>>();
        if index.len() != tokens.len() - 2 {
            return Err(Error::Malformed("duplicate vocabulary token".into()));
        }
        Ok(CodeVocab {
            tokens,
            counts,
            index,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Index of a known code, `None` for codes that fell below `min_count` or
    /// were never seen.
    pub fn get(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn index_of(&self, code: &str) -> usize {
        self.get(code).unwrap_or(UNK)
    }

    pub fn encode<S: AsRef<str>>(&self, codes: &[S]) -> Vec<usize> {
        codes.iter().map(|c| self.index_of(c.as_ref())).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "code,count")?;
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            writeln!(out, "{t},{c}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let (t, c) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::Malformed(format!("vocab line {}", i + 1)))?;
            tokens.push(t.to_string());
            counts.push(
                c.trim()
                    .parse()
                    .map_err(|_| Error::Malformed(format!("vocab count on line {}", i + 1)))?,
            );
        }
        CodeVocab::from_parts(tokens, counts, 1)
    }
}

pub fn build_vocab<S: AsRef<str>>(sequences: &[Vec<S>], min_count: u64) -> Result<CodeVocab> {
    if min_count < 1 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for seq in sequences {
        for code in seq {
            *counts.entry(code.as_ref()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut kept: Vec<(&str, u64)> = Vec::new();
    let mut unk = 0u64;
    for (code, n) in counts {
        if n >= min_count {
            kept.push((code, n));
        } else {
            unk += n;
        }
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    let mut freq = vec![0, unk];
    for (code, n) in kept {
        tokens.push(code.to_string());
        freq.push(n);
    }
    CodeVocab::from_parts(tokens, freq, min_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(counts: &[(&str, usize)]) -> Vec<Vec<String>> {
        vec![counts
            .iter()
            .flat_map(|(c, n)| std::iter::repeat_n(c.to_string(), *n))
            .collect()]
    }

    #[test]
    fn threshold_maps_rare_codes_to_unk() {
        let v = build_vocab(&corpus(&[("a", 5), ("b", 1)]), 2).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.get("a"), Some(2));
        assert_eq!(v.index_of("b"), UNK);
        assert_eq!(v.counts()[UNK], 1);
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let v = build_vocab(&corpus(&[("a", 5), ("b", 1)]), 1).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.tokens()[2..], ["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn reserved_slots() {
        let v = build_vocab(&corpus(&[("x", 9)]), 1).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.token(PAD), PAD_TOKEN);
        assert_eq!(v.token(UNK), UNK_TOKEN);
        assert_eq!(v.get(PAD_TOKEN), None);
    }

    #[test]
    fn empty_corpus_and_zero_threshold_fail() {
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert!(matches!(build_vocab(&empty, 1), Err(Error::EmptyCorpus)));
        assert!(build_vocab(&corpus(&[("x", 1)]), 0).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let v = build_vocab(&corpus(&[("a", 5), ("b", 3), ("c", 1)]), 2).unwrap();
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let back = CodeVocab::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.tokens(), v.tokens());
        assert_eq!(back.counts(), v.counts());
    }
}
