//! Challenge handling.
//!
//! Evidence is submitted as plaintext records. The contract re-encrypts each
//! record under the key the node revealed, at the record's leaf offset, and
//! checks every chunk against the node's registered Merkle root. A node is
//! therefore only accountable for the bytes it committed to.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{gas, Account, Cid, ContractState, Ledger, LedgerError, LedgerResult, SessionStatus};
use crate::crypto::cipher::apply_keystream_at;
use crate::crypto::{merkle, reconstruct, MerkleError, MerkleProof, SecretShare, CHUNK_SIZE};
use crate::encoding::{self, RecordSpan};

/// One share together with the proof that node `node_index` committed to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareEvidence {
    pub node_index: u32,
    /// Padded plaintext record.
    pub record: Vec<u8>,
    pub first_leaf: usize,
    pub proofs: Vec<MerkleProof>,
}

impl ShareEvidence {
    /// Builds evidence for the record at `span` of a node's blob.
    pub fn build(node_index: u32, plaintext: &[u8], ciphertext: &[u8], span: RecordSpan) -> Result<Self, MerkleError> {
        let chunks = merkle::chunk_bytes(ciphertext);
        let proofs = (span.first_leaf..span.first_leaf + span.leaf_count)
            .map(|leaf| merkle::merkle_prove(&chunks, leaf))
            .collect::<Result<Vec<_>, _>>()?;
        let range = span.byte_range();
        let record = plaintext.get(range.clone()).map(<[u8]>::to_vec).ok_or(MerkleError::IndexOutOfRange {
            index: range.end,
            count: plaintext.len(),
        })?;
        Ok(Self { node_index, record, first_leaf: span.first_leaf, proofs })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChallengeOutcome {
    Refunded { nodes: Vec<u32>, amount: u64 },
    Rejected { reason: String },
}

impl ChallengeOutcome {
    pub fn is_refund(&self) -> bool {
        matches!(self, Self::Refunded { .. })
    }
}

fn verify_evidence(st: &ContractState, caller: &Account, height: u64, ev: &ShareEvidence) -> LedgerResult<SecretShare> {
    let j = ev.node_index;
    let rec = st.buyers.get(caller).ok_or_else(|| LedgerError::NotBuyer(caller.clone()))?;
    let sess = rec.sessions.get(&j).ok_or_else(|| LedgerError::InvalidEvidence(format!("no session for node {j}")))?;
    match sess.status {
        SessionStatus::KeyOut if !st.window_open(sess, height) => return Err(LedgerError::WindowClosed(j)),
        SessionStatus::Settled | SessionStatus::Refunded => return Err(LedgerError::WindowClosed(j)),
        _ => {}
    }
    let key = st
        .key_revealed
        .get(&j)
        .ok_or_else(|| LedgerError::InvalidEvidence(format!("key of node {j} not revealed")))?;
    let root = st.delta.get(&j).ok_or(LedgerError::NotInitialized)?;
    if ev.record.is_empty() || !ev.record.len().is_multiple_of(CHUNK_SIZE) || ev.record.len() / CHUNK_SIZE != ev.proofs.len() {
        return Err(LedgerError::InvalidEvidence(format!("record of node {j} does not match its proofs")));
    }
    let ciphertext = apply_keystream_at(key, &st.tid, ev.first_leaf as u64, &ev.record);
    for (i, (chunk, proof)) in ciphertext.chunks(CHUNK_SIZE).zip(&ev.proofs).enumerate() {
        if proof.leaf_index != ev.first_leaf + i || !merkle::merkle_verify(root, chunk, proof) {
            return Err(LedgerError::BadMerkleProof(j));
        }
    }
    encoding::decode_record(&ev.record, j)
        .map(|r| r.share)
        .map_err(|e| LedgerError::InvalidEvidence(format!("record of node {j}: {e}")))
}

fn verify_set(
    st: &ContractState,
    caller: &Account,
    height: u64,
    evidence: &[ShareEvidence],
) -> LedgerResult<Vec<SecretShare>> {
    let mut nodes = BTreeSet::new();
    let mut out = Vec::with_capacity(evidence.len());
    for ev in evidence {
        if !nodes.insert(ev.node_index) {
            return Err(LedgerError::InvalidEvidence(format!("node {} submitted twice", ev.node_index)));
        }
        out.push(verify_evidence(st, caller, height, ev)?);
    }
    Ok(out)
}

fn distinct_x(shares: &[SecretShare]) -> bool {
    let xs: BTreeSet<u8> = shares.iter().map(|s| s.x).collect();
    xs.len() == shares.len()
}

fn one_provider(groups: &[&[SecretShare]]) -> LedgerResult<u32> {
    let mut providers = groups.iter().flat_map(|g| g.iter().map(|s| s.provider_index));
    let first = providers.next().ok_or_else(|| LedgerError::InvalidEvidence("no shares".into()))?;
    if providers.any(|p| p != first) {
        return Err(LedgerError::InvalidEvidence("shares belong to different providers".into()));
    }
    Ok(first)
}

impl Ledger {
    fn require_open_window(&self, caller: &Account, cid: Cid) -> LedgerResult<()> {
        let st = self.state(cid)?;
        let rec = st.buyers.get(caller).ok_or_else(|| LedgerError::NotBuyer(caller.clone()))?;
        if rec.sessions.values().any(|s| st.window_open(s, self.block_height)) {
            Ok(())
        } else {
            Err(LedgerError::WindowClosed(0))
        }
    }

    fn refund_deposits(&mut self, cid: Cid, caller: &Account, nodes: &[u32]) -> (Vec<u32>, u64) {
        let mut refunded = Vec::new();
        let mut amount = 0;
        for &j in nodes {
            let status = self.contracts[&cid].buyers[caller].sessions.get(&j).map(|s| (s.status, s.deposit));
            if let Some((SessionStatus::Accepted | SessionStatus::KeyOut, deposit)) = status {
                if deposit > 0 {
                    amount += self.refund_session(cid, caller, j);
                    refunded.push(j);
                }
            }
        }
        (refunded, amount)
    }

    /// Case 1: two different consistent `(t + 1)`-sets reconstruct the same
    /// datum, and that datum violates the published description. Refunds every
    /// open deposit of the caller.
    pub fn challenge_case1(
        &mut self,
        caller: &Account,
        cid: Cid,
        shares1: &[ShareEvidence],
        shares2: &[ShareEvidence],
    ) -> LedgerResult<ChallengeOutcome> {
        let height = self.block_height;
        let result = (|| {
            self.require_open_window(caller, cid)?;
            let st = self.state(cid)?;
            let (t, n) = (st.desc.t, st.n());
            if shares1.len() != t + 1 || shares2.len() != t + 1 {
                return Err(LedgerError::InvalidEvidence(format!("case 1 needs two sets of {} shares", t + 1)));
            }
            let s1 = verify_set(st, caller, height, shares1)?;
            let s2 = verify_set(st, caller, height, shares2)?;
            one_provider(&[&s1, &s2])?;
            if !distinct_x(&s1) || !distinct_x(&s2) {
                return Err(LedgerError::InvalidEvidence("duplicate x-coordinate".into()));
            }
            let nodes1: BTreeSet<u32> = shares1.iter().map(|e| e.node_index).collect();
            let nodes2: BTreeSet<u32> = shares2.iter().map(|e| e.node_index).collect();
            if nodes1 == nodes2 {
                return Err(LedgerError::InvalidEvidence("share sets are identical".into()));
            }
            let verdict = match (reconstruct(t, n, &s1), reconstruct(t, n, &s2)) {
                (Ok(d1), Ok(d2)) if d1 == d2 => {
                    if st.desc.phi2(d1.as_bytes()) {
                        Err("reconstructed data matches the description".to_string())
                    } else {
                        Ok(())
                    }
                }
                (Ok(_), Ok(_)) => Err("share sets reconstruct different data".to_string()),
                _ => Err("shares inconsistent".to_string()),
            };
            Ok(verdict)
        })();
        let result = result.map(|verdict| match verdict {
            Ok(()) => {
                let nodes: Vec<u32> = self.contracts[&cid].buyers[caller].sessions.keys().copied().collect();
                let (nodes, amount) = self.refund_deposits(cid, caller, &nodes);
                ChallengeOutcome::Refunded { nodes, amount }
            }
            Err(reason) => ChallengeOutcome::Rejected { reason },
        });
        let gas = self.schedule.challenge(shares1.len() + shares2.len());
        self.finish(caller, Some(cid), gas::FN_CHALLENGE, gas, true, result)
    }

    /// Case 2: `reference` (t - 1 shares) together with `witnesses` (at least
    /// two) form a consistent set fixing the original datum. Every bad share
    /// that changes the reconstruction when combined with the references has
    /// its node's deposit refunded.
    pub fn challenge_case2(
        &mut self,
        caller: &Account,
        cid: Cid,
        bad: &[ShareEvidence],
        reference: &[ShareEvidence],
        witnesses: &[ShareEvidence],
    ) -> LedgerResult<ChallengeOutcome> {
        let height = self.block_height;
        let result = (|| {
            self.require_open_window(caller, cid)?;
            let st = self.state(cid)?;
            let (t, n) = (st.desc.t, st.n());
            if bad.is_empty() || reference.len() + 1 != t || witnesses.len() < 2 {
                return Err(LedgerError::InvalidEvidence(format!(
                    "case 2 needs bad shares, {} references and at least 2 witnesses",
                    t - 1
                )));
            }
            let mut base_ev = reference.to_vec();
            base_ev.extend_from_slice(witnesses);
            let base = verify_set(st, caller, height, &base_ev)?;
            let bad_shares = verify_set(st, caller, height, bad)?;
            one_provider(&[&base, &bad_shares])?;
            if !distinct_x(&base) {
                return Err(LedgerError::InvalidEvidence("duplicate x-coordinate".into()));
            }
            let base_nodes: BTreeSet<u32> = base_ev.iter().map(|e| e.node_index).collect();
            let refs = &base[..reference.len()];
            let d_orig = match reconstruct(t, n, &base) {
                Ok(d) => d,
                Err(_) => return Ok(Err("reference set inconsistent".to_string())),
            };
            let mut guilty = Vec::new();
            for (ev, b) in bad.iter().zip(&bad_shares) {
                if base_nodes.contains(&ev.node_index) {
                    return Err(LedgerError::InvalidEvidence(format!("node {} is both bad and reference", ev.node_index)));
                }
                if refs.iter().any(|r| r.x == b.x) {
                    return Err(LedgerError::InvalidEvidence("duplicate x-coordinate".into()));
                }
                let mut set = refs.to_vec();
                set.push(b.clone());
                if reconstruct(t, n, &set).map_or(true, |d| d != d_orig) {
                    guilty.push(ev.node_index);
                }
            }
            Ok(Ok(guilty))
        })();
        let result = result.map(|verdict| match verdict {
            Ok(guilty) => {
                let (nodes, amount) = self.refund_deposits(cid, caller, &guilty);
                let st = self.contracts.get_mut(&cid).expect("checked");
                st.flagged_nodes.extend(guilty.iter().copied());
                if nodes.is_empty() {
                    ChallengeOutcome::Rejected {
                        reason: if guilty.is_empty() {
                            "every share agrees with the reference set".to_string()
                        } else {
                            "no open deposit for the accused nodes".to_string()
                        },
                    }
                } else {
                    ChallengeOutcome::Refunded { nodes, amount }
                }
            }
            Err(reason) => ChallengeOutcome::Rejected { reason },
        });
        let gas = self.schedule.challenge(bad.len() + reference.len() + witnesses.len());
        self.finish(caller, Some(cid), gas::FN_CHALLENGE, gas, true, result)
    }
}
