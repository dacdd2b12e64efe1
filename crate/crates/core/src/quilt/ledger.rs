//! Sequential composition accountant.
//!
//! Releases that all search the same quilt sets compose to
//! `K * max_k epsilon_k`. The ledger pins those sets at creation and
//! refuses any plan computed over different ones. On disk it is an
//! append-only JSON-lines file; every line carries the SHA-256 of the
//! previous line's hash and its own record, so edits are detected.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{admits, MarkovQuilt};
use crate::error::{Error, Result};
use crate::plan::{MechanismId, NoisePlan};

const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerHeader {
    #[serde(rename = "T")]
    pub chain_length: usize,
    pub ell: usize,
    /// Identifies the quilt-set construction and its parameters.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub query: String,
    pub mechanism: MechanismId,
    pub epsilon: f64,
    /// Winning quilt per protected node.
    pub active: Vec<MarkovQuilt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Header(LedgerHeader),
    Entry(LedgerEntry),
}

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    prev: String,
    hash: String,
    record: Record,
}

fn chain_hash(prev: &str, record: &Record) -> String {
    let body = serde_json::to_string(record).expect("ledger record serializes");
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(body.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionLedger {
    header: LedgerHeader,
    entries: Vec<LedgerEntry>,
    /// Hash of every line so far, header first.
    hashes: Vec<String>,
}

impl CompositionLedger {
    pub fn new(chain_length: usize, ell: usize) -> Result<Self> {
        if chain_length == 0 || ell == 0 {
            return Err(Error::InvalidParameter("ledger needs T >= 1 and ell >= 1".into()));
        }
        let header = LedgerHeader {
            chain_length,
            ell,
            fingerprint: Self::fingerprint(chain_length, ell),
        };
        let hash = chain_hash(GENESIS, &Record::Header(header.clone()));
        Ok(Self {
            header,
            entries: Vec::new(),
            hashes: vec![hash],
        })
    }

    /// Digest naming the quilt sets used for every node.
    pub fn fingerprint(chain_length: usize, ell: usize) -> String {
        let mut h = Sha256::new();
        h.update(format!("chain-quilt-sets/v1;T={chain_length};ell={ell}").as_bytes());
        hex::encode(h.finalize())
    }

    pub fn header(&self) -> &LedgerHeader {
        &self.header
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// `K * max_k epsilon_k`, zero for an empty ledger.
    pub fn total(&self) -> f64 {
        let max = self.entries.iter().map(|e| e.epsilon).fold(0.0, f64::max);
        self.entries.len() as f64 * max
    }

    fn check(&self, plan: &NoisePlan) -> Result<()> {
        if !matches!(
            plan.mechanism,
            MechanismId::MqmExact | MechanismId::MqmApprox | MechanismId::MqmApproxFast
        ) {
            return Err(Error::CompositionVoid(format!(
                "{} plans carry no quilt sets",
                plan.mechanism.as_str()
            )));
        }
        let (t, ell) = (self.header.chain_length, self.header.ell);
        if plan.chain_length != Some(t) || plan.ell != Some(ell) {
            return Err(Error::CompositionVoid(format!(
                "plan searched quilt sets for T={:?}, ell={:?}; ledger is fixed at T={t}, ell={ell}",
                plan.chain_length, plan.ell
            )));
        }
        if plan.per_node.is_empty() {
            return Err(Error::CompositionVoid("plan records no active quilts".into()));
        }
        for r in &plan.per_node {
            if r.quilt.node != r.node || !admits(r.node, t, ell, r.quilt.shape) {
                return Err(Error::CompositionVoid(format!(
                    "active quilt {} lies outside the fixed quilt set",
                    r.quilt
                )));
            }
        }
        Ok(())
    }

    /// Records one release and returns the new total.
    pub fn compose(&mut self, query: &str, plan: &NoisePlan) -> Result<f64> {
        self.check(plan)?;
        let entry = LedgerEntry {
            query: query.to_string(),
            mechanism: plan.mechanism,
            epsilon: plan.epsilon,
            active: plan.per_node.iter().map(|r| r.quilt).collect(),
        };
        let prev = self.hashes.last().expect("header hash").clone();
        self.hashes.push(chain_hash(&prev, &Record::Entry(entry.clone())));
        self.entries.push(entry);
        Ok(self.total())
    }

    fn line(&self, idx: usize) -> String {
        let record = if idx == 0 {
            Record::Header(self.header.clone())
        } else {
            Record::Entry(self.entries[idx - 1].clone())
        };
        let prev = if idx == 0 { GENESIS } else { &self.hashes[idx - 1] };
        serde_json::to_string(&Line {
            prev: prev.to_string(),
            hash: self.hashes[idx].clone(),
            record,
        })
        .expect("ledger line serializes")
    }

    pub fn to_jsonl(&self) -> String {
        (0..self.hashes.len()).map(|i| self.line(i) + "\n").collect()
    }

    /// Parses and verifies a ledger. Line numbers in errors are 1-based.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut ledger: Option<Self> = None;
        let mut prev = GENESIS.to_string();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let tampered = |reason: String| Error::LedgerTampered {
                line: line_no,
                reason,
            };
            let line: Line = serde_json::from_str(raw).map_err(|e| tampered(e.to_string()))?;
            if line.prev != prev {
                return Err(tampered("previous-hash link broken".into()));
            }
            if chain_hash(&prev, &line.record) != line.hash {
                return Err(tampered("record does not match its hash".into()));
            }
            match (line.record, ledger.as_mut()) {
                (Record::Header(h), None) => {
                    if h.fingerprint != Self::fingerprint(h.chain_length, h.ell) {
                        return Err(tampered("header fingerprint mismatch".into()));
                    }
                    ledger = Some(Self {
                        header: h,
                        entries: Vec::new(),
                        hashes: vec![line.hash.clone()],
                    });
                }
                (Record::Entry(e), Some(l)) => {
                    l.entries.push(e);
                    l.hashes.push(line.hash.clone());
                }
                (Record::Header(_), Some(_)) => return Err(tampered("second header".into())),
                (Record::Entry(_), None) => return Err(tampered("entry before header".into())),
            }
            prev = line.hash;
        }
        ledger.ok_or_else(|| Error::Empty("ledger has no header".into()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Writes a fresh ledger; refuses to overwrite an existing file.
    pub fn create(path: &Path, chain_length: usize, ell: usize) -> Result<Self> {
        let ledger = Self::new(chain_length, ell)?;
        let mut f = OpenOptions::new().write(true).create_new(true).open(path)?;
        f.write_all(ledger.to_jsonl().as_bytes())?;
        Ok(ledger)
    }

    /// Verifies the file, composes, and appends exactly one line.
    pub fn append(path: &Path, query: &str, plan: &NoisePlan) -> Result<Self> {
        let mut ledger = Self::load(path)?;
        ledger.compose(query, plan)?;
        let line = ledger.line(ledger.hashes.len() - 1);
        let mut f = OpenOptions::new().append(true).open(path)?;
        writeln!(f, "{line}")?;
        Ok(ledger)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::NodeRecord;
    use crate::quilt::{minimal_quilt_set, QuiltShape};

    fn plan(eps: f64, len: usize, ell: usize) -> NoisePlan {
        let mut p = NoisePlan::new(MechanismId::MqmExact, eps, 1.0, 1.0);
        p.chain_length = Some(len);
        p.ell = Some(ell);
        p.per_node = (1..=len)
            .map(|i| NodeRecord {
                node: i,
                quilt: minimal_quilt_set(i, len, ell)[0],
                influence: 0.0,
                score: 1.0,
                theta: None,
            })
            .collect();
        p
    }

    #[test]
    fn totals() {
        let mut l = CompositionLedger::new(3, 3).unwrap();
        for _ in 0..3 {
            l.compose("q", &plan(1.0, 3, 3)).unwrap();
        }
        assert_eq!(l.total(), 3.0);

        let mut l = CompositionLedger::new(3, 3).unwrap();
        for eps in [0.5, 1.0, 0.2] {
            l.compose("q", &plan(eps, 3, 3)).unwrap();
        }
        assert_eq!(l.total(), 3.0);
    }

    #[test]
    fn mismatched_sets_rejected() {
        let mut l = CompositionLedger::new(3, 3).unwrap();
        l.compose("q", &plan(1.0, 3, 3)).unwrap();
        assert!(matches!(l.compose("q", &plan(1.0, 3, 2)), Err(Error::CompositionVoid(_))));
        assert!(matches!(l.compose("q", &plan(1.0, 4, 3)), Err(Error::CompositionVoid(_))));
        let mut bad = plan(1.0, 3, 3);
        bad.per_node[1].quilt.shape = QuiltShape::Pair { a: 1, b: 5 };
        assert!(matches!(l.compose("q", &bad), Err(Error::CompositionVoid(_))));
        let mut group = plan(1.0, 3, 3);
        group.mechanism = MechanismId::GroupDp;
        assert!(l.compose("q", &group).is_err());
        assert_eq!(l.entries().len(), 1);
    }

    #[test]
    fn jsonl_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        CompositionLedger::create(&path, 3, 3).unwrap();
        assert!(CompositionLedger::create(&path, 3, 3).is_err());
        CompositionLedger::append(&path, "a", &plan(0.5, 3, 3)).unwrap();
        let l = CompositionLedger::append(&path, "b", &plan(1.0, 3, 3)).unwrap();
        assert_eq!(l.total(), 2.0);
        assert_eq!(CompositionLedger::load(&path).unwrap(), l);

        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        let forged = text.replacen("\"epsilon\":0.5", "\"epsilon\":0.1", 1);
        std::fs::write(&path, &forged).unwrap();
        match CompositionLedger::append(&path, "c", &plan(1.0, 3, 3)) {
            Err(Error::LedgerTampered { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected tamper error, got {other:?}"),
        }
        // Dropping a line breaks the link too.
        let lines: Vec<&str> = text.lines().collect();
        let dropped = format!("{}\n{}\n", lines[0], lines[2]);
        assert!(matches!(
            CompositionLedger::from_jsonl(&dropped),
            Err(Error::LedgerTampered { line: 2, .. })
        ));
    }
}
