//! Minimal CoNLL-U reader and writer.
//!
//! Documents are delimited by `# newdoc id = <id>` comments. Only FORM,
//! UPOS, HEAD and DEPREL are kept; multiword-token ranges (`1-2`) and empty
//! nodes (`1.1`) are skipped.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepToken {
    pub form: String,
    pub upos: String,
    /// 0 for the root, otherwise the 1-based index of the head token.
    pub head: usize,
    pub deprel: String,
}

impl DepToken {
    pub fn new(form: &str, upos: &str, head: usize, deprel: &str) -> Self {
        DepToken {
            form: form.into(),
            upos: upos.into(),
            head,
            deprel: deprel.into(),
        }
    }
}

/// A sentence whose head indices are known to form a single-rooted tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSentence {
    tokens: Vec<DepToken>,
}

impl ParsedSentence {
    /// Validates the tree; `name` is used in error messages.
    pub fn new(tokens: Vec<DepToken>, name: &str) -> Result<Self> {
        let bad = |reason: String| Error::MalformedTree {
            sentence: name.to_string(),
            reason,
        };
        if tokens.is_empty() {
            return Err(bad("sentence has no tokens".into()));
        }
        let n = tokens.len();
        if let Some(t) = tokens.iter().find(|t| t.head > n) {
            return Err(bad(format!("head {} out of range 0..={n}", t.head)));
        }
        let roots = tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(bad(format!("expected exactly one root, found {roots}")));
        }
        for start in 1..=n {
            let mut cur = start;
            let mut steps = 0;
            while cur != 0 {
                cur = tokens[cur - 1].head;
                steps += 1;
                if steps > n {
                    return Err(bad(format!("cycle through token {start}")));
                }
            }
        }
        Ok(ParsedSentence { tokens })
    }

    pub fn tokens(&self) -> &[DepToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Builds a sentence from head indices alone (tags `X`, relation `dep`).
    pub fn from_heads(heads: &[usize]) -> Result<Self> {
        let tokens = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let rel = if h == 0 { "root" } else { "dep" };
                DepToken::new(&format!("w{}", i + 1), "X", h, rel)
            })
            .collect();
        ParsedSentence::new(tokens, "heads")
    }
}

pub type ParseMap = BTreeMap<String, Vec<ParsedSentence>>;

pub fn read_conllu(path: &Path) -> Result<ParseMap> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&s).map_err(|e| match e {
        Error::MalformedRecord { line, reason, .. } => Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason,
        },
        other => other,
    })
}

pub fn parse_conllu(input: &str) -> Result<ParseMap> {
    let mut docs = ParseMap::new();
    let mut current: Option<String> = None;
    let mut sent_id: Option<String> = None;
    let mut tokens: Vec<DepToken> = Vec::new();
    let mut sent_line = 0;

    let malformed = |line: usize, reason: String| Error::MalformedRecord {
        path: "<conllu>".into(),
        line,
        reason,
    };

    let finish = |docs: &mut ParseMap,
                  current: &Option<String>,
                  sent_id: &mut Option<String>,
                  tokens: &mut Vec<DepToken>,
                  line: usize|
     -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let Some(doc) = current else {
            return Err(Error::MalformedRecord {
                path: "<conllu>".into(),
                line,
                reason: "sentence before any `# newdoc id` comment".into(),
            });
        };
        let sentences = docs.get_mut(doc).expect("doc registered on newdoc");
        let name = match sent_id.take() {
            Some(id) => id,
            None => format!("{doc} sentence {}", sentences.len() + 1),
        };
        sentences.push(ParsedSentence::new(std::mem::take(tokens), &name)?);
        Ok(())
    };

    for (n, raw) in input.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut docs, &current, &mut sent_id, &mut tokens, sent_line)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("newdoc") {
                finish(&mut docs, &current, &mut sent_id, &mut tokens, sent_line)?;
                let id = rest
                    .trim()
                    .strip_prefix("id")
                    .and_then(|r| r.trim().strip_prefix('='))
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| malformed(line_no, "`# newdoc` without an id".into()))?;
                if docs.contains_key(id) {
                    return Err(Error::DuplicateId(id.to_string()));
                }
                docs.insert(id.to_string(), Vec::new());
                current = Some(id.to_string());
            } else if let Some(rest) = comment.strip_prefix("sent_id") {
                if let Some(v) = rest.trim().strip_prefix('=') {
                    sent_id = Some(v.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(malformed(
                line_no,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad token id `{}`", cols[0])))?;
        if tokens.is_empty() {
            sent_line = line_no;
        }
        if id != tokens.len() + 1 {
            return Err(malformed(
                line_no,
                format!(
                    "token id {id} out of sequence (expected {})",
                    tokens.len() + 1
                ),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad head `{}`", cols[6])))?;
        tokens.push(DepToken::new(cols[1], cols[3], head, cols[7]));
    }
    finish(&mut docs, &current, &mut sent_id, &mut tokens, sent_line)?;
    Ok(docs)
}

/// Serializes documents in the given order. Unused columns are `_`.
pub fn to_conllu<'a, I>(docs: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a [ParsedSentence])>,
{
    let mut out = String::new();
    for (id, sents) in docs {
        let _ = writeln!(out, "# newdoc id = {id}");
        for (si, s) in sents.iter().enumerate() {
            let _ = writeln!(out, "# sent_id = {id}-{}", si + 1);
            for (i, t) in s.tokens().iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                    i + 1,
                    t.form,
                    t.upos,
                    t.head,
                    t.deprel
                );
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_and_cyclic_heads() {
        let s = ParsedSentence::from_heads(&[2, 0, 2]).unwrap();
        assert_eq!(s.tokens()[1].head, 0);
        let err = ParsedSentence::from_heads(&[2, 1]).unwrap_err();
        assert!(matches!(err, Error::MalformedTree { .. }), "{err}");
        assert!(ParsedSentence::from_heads(&[0, 0]).is_err());
        assert!(ParsedSentence::from_heads(&[0, 5]).is_err());
    }

    #[test]
    fn skips_ranges_and_empty_nodes() {
        let src = "# newdoc id = d1\n1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\tdo\tAUX\t_\t_\t0\troot\t_\t_\n2\tn't\tnot\tPART\t_\t_\t1\tadvmod\t_\t_\n2.1\tx\t_\tX\t_\t_\t_\t_\t_\t_\n\n";
        let m = parse_conllu(src).unwrap();
        assert_eq!(m["d1"][0].len(), 2);
        assert_eq!(m["d1"][0].tokens()[1].deprel, "advmod");
    }

    #[test]
    fn errors_name_the_problem() {
        let no_doc = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n\n";
        assert!(matches!(
            parse_conllu(no_doc),
            Err(Error::MalformedRecord { .. })
        ));
        let cyclic = "# newdoc id = d\n# sent_id = s9\n1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n";
        match parse_conllu(cyclic) {
            Err(Error::MalformedTree { sentence, .. }) => assert_eq!(sentence, "s9"),
            other => panic!("unexpected {other:?}"),
        }
        let short = "# newdoc id = d\n1\ta\tX\n";
        assert!(parse_conllu(short).is_err());
    }

    #[test]
    fn writer_output_reads_back() {
        let s1 = ParsedSentence::from_heads(&[2, 0, 2]).unwrap();
        let s2 = ParsedSentence::from_heads(&[0]).unwrap();
        let text = to_conllu([
            ("a", &[s1.clone(), s2.clone()][..]),
            ("b", &[s2.clone()][..]),
        ]);
        let m = parse_conllu(&text).unwrap();
        assert_eq!(m["a"], vec![s1, s2.clone()]);
        assert_eq!(m["b"], vec![s2]);
    }
}
