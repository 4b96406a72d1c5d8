//! In-process ledger hosting the exchange contract.
//!
//! Every contract call goes through [`Ledger`], which applies it atomically,
//! appends a gas entry on success and records the attempt in the call log.
//! Failed calls leave the state untouched and are not charged.

pub mod contract;
pub mod dispute;
pub mod gas;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, Commitment, KeyMaterial, MerkleRoot};
pub use contract::{BuyerRecord, Cid, ContractState, DataDescription, Session, SessionStatus};
pub use dispute::{ChallengeOutcome, ShareEvidence};
pub use gas::{GasEntry, GasSchedule};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Account(pub String);

impl Account {
    pub fn node(j: u32) -> Self {
        Self(format!("node:{j}"))
    }

    pub fn provider(i: u32) -> Self {
        Self(format!("provider:{i}"))
    }

    pub fn consumer() -> Self {
        Self("consumer".into())
    }

    pub fn server() -> Self {
        Self("server".into())
    }
}

impl std::fmt::Display for Account {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown contract {0}")]
    UnknownContract(Cid),
    #[error("caller {0} is not authorized")]
    UnauthorizedCaller(Account),
    #[error("node {0} already initialized")]
    DoubleInitialize(u32),
    #[error("not every seller node has initialized")]
    NotInitialized,
    #[error("buyer {0} already queried")]
    AlreadyQueried(Account),
    #[error("payment {got} does not equal the per-node price {expected}")]
    WrongPayment { expected: u64, got: u64 },
    #[error("no queried session for node {0}")]
    NotQueried(u32),
    #[error("insufficient balance: need {need}, have {have}")]
    InsufficientBalance { need: u64, have: u64 },
    #[error("key does not open commitment of node {0}")]
    BadKey(u32),
    #[error("no accepted buyer for node {0}")]
    NoAcceptedBuyer(u32),
    #[error("unknown read path {0}")]
    UnknownPath(String),
    #[error("caller {0} is not a buyer")]
    NotBuyer(Account),
    #[error("sessions still awaiting a key: {0:?}")]
    PendingDispute(Vec<u32>),
    #[error("already finalized")]
    AlreadyFinalized,
    #[error("dispute window closed for node {0}")]
    WindowClosed(u32),
    #[error("merkle proof rejected for node {0}")]
    BadMerkleProof(u32),
    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),
}

pub type LedgerResult<T> = Result<T, LedgerError>;

/// One attempted contract interaction, successful or not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: u64,
    pub block: u64,
    pub caller: Account,
    pub cid: Option<Cid>,
    pub function: String,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadValue {
    Status(Option<SessionStatus>),
    Key(Option<KeyMaterial>),
    Delta(Option<MerkleRoot>),
    Commitment(Option<Commitment>),
    Price(u64),
}

/// Payout or refund performed by the contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub block: u64,
    pub cid: Cid,
    pub to: Account,
    pub amount: u64,
    pub node: u32,
    pub refund: bool,
}

#[derive(Debug, Clone)]
pub struct Ledger {
    contracts: BTreeMap<Cid, ContractState>,
    block_height: u64,
    gas_log: Vec<GasEntry>,
    calls: Vec<CallRecord>,
    transfers: Vec<Transfer>,
    balances: BTreeMap<Account, u64>,
    schedule: GasSchedule,
    next_cid: u64,
    genesis_supply: u64,
}

impl Ledger {
    /// A ledger whose entire currency supply is minted here.
    pub fn new(genesis: BTreeMap<Account, u64>) -> Self {
        let genesis_supply = genesis.values().sum();
        Self {
            contracts: BTreeMap::new(),
            block_height: 0,
            gas_log: Vec::new(),
            calls: Vec::new(),
            transfers: Vec::new(),
            balances: genesis,
            schedule: GasSchedule::default(),
            next_cid: 1,
            genesis_supply,
        }
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    pub fn block_height(&self) -> u64 {
        self.block_height
    }

    pub fn gas_log(&self) -> &[GasEntry] {
        &self.gas_log
    }

    pub fn calls(&self) -> &[CallRecord] {
        &self.calls
    }

    pub fn transfers(&self) -> &[Transfer] {
        &self.transfers
    }

    pub fn total_gas(&self) -> u64 {
        self.gas_log.iter().map(|e| e.gas_units).sum()
    }

    /// Contract calls made so far, excluding contract creation.
    pub fn contract_call_count(&self) -> usize {
        self.calls.iter().filter(|c| c.function != gas::FN_DEPLOY).count()
    }

    pub fn balance(&self, account: &Account) -> u64 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn balances(&self) -> &BTreeMap<Account, u64> {
        &self.balances
    }

    pub fn total_escrow(&self) -> u64 {
        self.contracts.values().map(|c| c.escrow).sum()
    }

    /// Balances plus escrow; constant over the ledger's lifetime.
    pub fn total_currency(&self) -> u64 {
        self.balances.values().sum::<u64>() + self.total_escrow()
    }

    pub fn genesis_supply(&self) -> u64 {
        self.genesis_supply
    }

    /// Read-only view of contract storage for off-chain observers.
    pub fn contract(&self, cid: Cid) -> Option<&ContractState> {
        self.contracts.get(&cid)
    }

    pub fn gas_csv(&self) -> String {
        gas::gas_csv(&self.gas_log)
    }

    fn finish<T>(
        &mut self,
        caller: &Account,
        cid: Option<Cid>,
        function: &str,
        gas: u64,
        estimated: bool,
        result: LedgerResult<T>,
    ) -> LedgerResult<T> {
        let seq = self.calls.len() as u64;
        self.calls.push(CallRecord {
            seq,
            block: self.block_height,
            caller: caller.clone(),
            cid,
            function: function.to_string(),
            ok: result.is_ok(),
            error: result.as_ref().err().map(|e| e.to_string()),
        });
        if result.is_ok() {
            self.gas_log.push(GasEntry {
                block: self.block_height,
                caller: caller.clone(),
                function: function.to_string(),
                gas_units: gas,
                estimated,
            });
        }
        result
    }

    fn state_mut(&mut self, cid: Cid) -> LedgerResult<&mut ContractState> {
        self.contracts.get_mut(&cid).ok_or(LedgerError::UnknownContract(cid))
    }

    fn state(&self, cid: Cid) -> LedgerResult<&ContractState> {
        self.contracts.get(&cid).ok_or(LedgerError::UnknownContract(cid))
    }

    fn credit(&mut self, cid: Cid, to: &Account, amount: u64, node: u32, refund: bool) {
        *self.balances.entry(to.clone()).or_insert(0) += amount;
        self.transfers.push(Transfer { block: self.block_height, cid, to: to.clone(), amount, node, refund });
    }

    pub fn create_contract(
        &mut self,
        deployer: &Account,
        seller_nodes: Vec<Account>,
        data_sources: Vec<Account>,
        price: u64,
        desc: DataDescription,
    ) -> LedgerResult<Cid> {
        let result = (|| {
            if seller_nodes.is_empty() {
                return Err(LedgerError::InvalidParams("no seller nodes".into()));
            }
            if data_sources.is_empty() {
                return Err(LedgerError::InvalidParams("no data sources".into()));
            }
            if price == 0 || price < seller_nodes.len() as u64 {
                return Err(LedgerError::InvalidParams(format!("price {price} below one unit per node")));
            }
            if desc.value_min > desc.value_max {
                return Err(LedgerError::InvalidParams("empty value range".into()));
            }
            let mut sorted = seller_nodes.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != seller_nodes.len() {
                return Err(LedgerError::InvalidParams("duplicate seller node".into()));
            }
            Ok(())
        })();
        let result = result.map(|()| {
            let cid = Cid(self.next_cid);
            self.next_cid += 1;
            let tid = crypto::hash(&[b"dexo-listing", &cid.0.to_be_bytes(), deployer.0.as_bytes()]);
            self.contracts.insert(
                cid,
                ContractState {
                    cid,
                    deployer: deployer.clone(),
                    seller_nodes,
                    data_sources,
                    price,
                    desc,
                    tid,
                    delta: BTreeMap::new(),
                    commitment: BTreeMap::new(),
                    buyers: BTreeMap::new(),
                    key_revealed: BTreeMap::new(),
                    flagged_nodes: Default::default(),
                    escrow: 0,
                    node_fee_bps: 0,
                },
            );
            cid
        });
        let cid = result.as_ref().ok().copied();
        let gas = self.schedule.deployment;
        self.finish(deployer, cid, gas::FN_DEPLOY, gas, false, result)
    }

    /// Sets the facilitation fee kept by seller nodes on settlement. Deployer
    /// only, before any buyer exists.
    pub fn set_node_fee(&mut self, caller: &Account, cid: Cid, bps: u32) -> LedgerResult<()> {
        let st = self.state_mut(cid)?;
        if &st.deployer != caller || !st.buyers.is_empty() || bps > 10_000 {
            return Err(LedgerError::UnauthorizedCaller(caller.clone()));
        }
        st.node_fee_bps = bps;
        Ok(())
    }

    pub fn initialize(&mut self, caller: &Account, cid: Cid, delta: MerkleRoot, com: Commitment) -> LedgerResult<()> {
        let result = (|| {
            let st = self.state_mut(cid)?;
            let j = st.node_index(caller).ok_or_else(|| LedgerError::UnauthorizedCaller(caller.clone()))?;
            if st.delta.contains_key(&j) {
                return Err(LedgerError::DoubleInitialize(j));
            }
            st.delta.insert(j, delta);
            st.commitment.insert(j, com);
            Ok(())
        })();
        let gas = self.schedule.initialize;
        self.finish(caller, Some(cid), gas::FN_INITIALIZE, gas, false, result)
    }

    /// Merged query: one call opens a session with every node.
    pub fn query(&mut self, caller: &Account, cid: Cid, buyer_descriptor: &str) -> LedgerResult<()> {
        let result = (|| {
            let st = self.state_mut(cid)?;
            if !st.fully_initialized() {
                return Err(LedgerError::NotInitialized);
            }
            if st.buyers.contains_key(caller) {
                return Err(LedgerError::AlreadyQueried(caller.clone()));
            }
            let sessions = (1..=st.n() as u32)
                .map(|j| (j, Session { status: SessionStatus::Queried, deposit: 0, accepted_at: None, key_out_at: None }))
                .collect();
            st.buyers.insert(
                caller.clone(),
                BuyerRecord {
                    account: caller.clone(),
                    descriptor: buyer_descriptor.to_string(),
                    sessions,
                    no_complain_called: false,
                },
            );
            Ok(())
        })();
        let gas = self.schedule.query;
        self.finish(caller, Some(cid), gas::FN_QUERY, gas, true, result)
    }

    /// Unmerged query: opens the session with a single node.
    pub fn query_node(&mut self, caller: &Account, cid: Cid, buyer_descriptor: &str, node: u32) -> LedgerResult<()> {
        let result = (|| {
            let st = self.state_mut(cid)?;
            if !st.delta.contains_key(&node) {
                return Err(LedgerError::NotInitialized);
            }
            let rec = st.buyers.entry(caller.clone()).or_insert_with(|| BuyerRecord {
                account: caller.clone(),
                descriptor: buyer_descriptor.to_string(),
                sessions: BTreeMap::new(),
                no_complain_called: false,
            });
            if rec.sessions.contains_key(&node) {
                return Err(LedgerError::AlreadyQueried(caller.clone()));
            }
            rec.sessions
                .insert(node, Session { status: SessionStatus::Queried, deposit: 0, accepted_at: None, key_out_at: None });
            Ok(())
        })();
        let gas = self.schedule.query;
        self.finish(caller, Some(cid), gas::FN_QUERY, gas, true, result)
    }

    pub fn accept(&mut self, caller: &Account, cid: Cid, node: u32, payment: u64) -> LedgerResult<()> {
        let height = self.block_height;
        let have = self.balance(caller);
        let result = (|| {
            let st = self.state_mut(cid)?;
            let expected = st.price_per_node();
            let rec = st.buyers.get_mut(caller).ok_or(LedgerError::NotQueried(node))?;
            let sess = rec.sessions.get_mut(&node).ok_or(LedgerError::NotQueried(node))?;
            if sess.status != SessionStatus::Queried {
                return Err(LedgerError::NotQueried(node));
            }
            if payment != expected {
                return Err(LedgerError::WrongPayment { expected, got: payment });
            }
            if have < payment {
                return Err(LedgerError::InsufficientBalance { need: payment, have });
            }
            sess.status = SessionStatus::Accepted;
            sess.deposit = payment;
            sess.accepted_at = Some(height);
            st.escrow += payment;
            Ok(())
        })();
        if result.is_ok() {
            *self.balances.get_mut(caller).expect("balance checked") -= payment;
        }
        let gas = self.schedule.accept;
        self.finish(caller, Some(cid), gas::FN_ACCEPT, gas, false, result)
    }

    /// Opens the caller's commitment. The key is recorded for every node that
    /// committed to the same value, and every accepted session of those nodes
    /// moves to `KEY_OUT`.
    pub fn reveal_key(&mut self, caller: &Account, cid: Cid, key: KeyMaterial) -> LedgerResult<()> {
        let height = self.block_height;
        let result = (|| {
            let st = self.state_mut(cid)?;
            let j = st.node_index(caller).ok_or_else(|| LedgerError::UnauthorizedCaller(caller.clone()))?;
            let com = *st.commitment.get(&j).ok_or(LedgerError::NotInitialized)?;
            let has_accepted = st.buyers.values().any(|b| b.status(j) == Some(SessionStatus::Accepted));
            if !has_accepted {
                return Err(LedgerError::NoAcceptedBuyer(j));
            }
            if !crypto::open(&key, &com) {
                return Err(LedgerError::BadKey(j));
            }
            let opened: Vec<u32> = st.commitment.iter().filter(|(_, c)| **c == com).map(|(&i, _)| i).collect();
            for &i in &opened {
                st.key_revealed.insert(i, key);
            }
            for rec in st.buyers.values_mut() {
                for &i in &opened {
                    if let Some(sess) = rec.sessions.get_mut(&i) {
                        if sess.status == SessionStatus::Accepted {
                            sess.status = SessionStatus::KeyOut;
                            sess.key_out_at = Some(height);
                        }
                    }
                }
            }
            Ok(())
        })();
        let gas = self.schedule.reveal_key;
        self.finish(caller, Some(cid), gas::FN_REVEAL_KEY, gas, false, result)
    }

    /// Metered storage read. `key_revealed.<j>` is charged as a key check;
    /// every other path is free.
    pub fn read(&mut self, caller: &Account, cid: Cid, path: &str) -> LedgerResult<ReadValue> {
        let is_key = path.starts_with("key_revealed.");
        let result = self.state(cid).and_then(|st| resolve_path(st, path));
        let (function, gas) = if is_key { (gas::FN_CHECK_KEY, self.schedule.check_key) } else { (gas::FN_READ, 0) };
        self.finish(caller, Some(cid), function, gas, false, result)
    }

    pub fn no_complain(&mut self, caller: &Account, cid: Cid) -> LedgerResult<()> {
        let result = (|| {
            let st = self.state(cid)?;
            let rec = st.buyers.get(caller).ok_or_else(|| LedgerError::NotBuyer(caller.clone()))?;
            if rec.no_complain_called {
                return Err(LedgerError::AlreadyFinalized);
            }
            let pending: Vec<u32> = rec
                .sessions
                .iter()
                .filter(|(_, s)| matches!(s.status, SessionStatus::Accepted | SessionStatus::Disputed))
                .map(|(&j, _)| j)
                .collect();
            if !pending.is_empty() {
                return Err(LedgerError::PendingDispute(pending));
            }
            let to_settle: Vec<u32> =
                rec.sessions.iter().filter(|(_, s)| s.status == SessionStatus::KeyOut).map(|(&j, _)| j).collect();
            Ok(to_settle)
        })();
        let m = self.state(cid).map(|s| s.data_sources.len()).unwrap_or(0);
        let result = result.map(|to_settle| {
            for j in to_settle {
                self.settle_session(cid, caller, j);
            }
            self.state_mut(cid).expect("checked").buyers.get_mut(caller).expect("checked").no_complain_called = true;
        });
        let gas = self.schedule.no_complain(m);
        self.finish(caller, Some(cid), gas::FN_NO_COMPLAIN, gas, false, result)
    }

    fn settle_session(&mut self, cid: Cid, buyer: &Account, node: u32) {
        let st = self.contracts.get_mut(&cid).expect("contract exists");
        let sess = st.buyers.get_mut(buyer).and_then(|b| b.sessions.get_mut(&node)).expect("session exists");
        debug_assert_eq!(sess.status, SessionStatus::KeyOut);
        let deposit = std::mem::take(&mut sess.deposit);
        sess.status = SessionStatus::Settled;
        st.escrow -= deposit;
        let split = st.settlement_split(node, deposit);
        for (to, amount) in split {
            self.credit(cid, &to, amount, node, false);
        }
    }

    fn refund_session(&mut self, cid: Cid, buyer: &Account, node: u32) -> u64 {
        let st = self.contracts.get_mut(&cid).expect("contract exists");
        let sess = st.buyers.get_mut(buyer).and_then(|b| b.sessions.get_mut(&node)).expect("session exists");
        let deposit = std::mem::take(&mut sess.deposit);
        sess.status = SessionStatus::Refunded;
        st.escrow -= deposit;
        if deposit > 0 {
            self.credit(cid, buyer, deposit, node, true);
        }
        deposit
    }

    pub fn advance_block(&mut self, count: u64) {
        self.block_height += count;
    }

    /// Refunds accepted sessions whose key never came and settles key-out
    /// sessions whose dispute window has passed.
    pub fn settle_timeouts(&mut self, cid: Cid) {
        let height = self.block_height;
        let Some(st) = self.contracts.get(&cid) else {
            return;
        };
        let timeout = st.desc.timeout_blocks;
        let mut refunds = Vec::new();
        let mut settles = Vec::new();
        for (acct, rec) in &st.buyers {
            for (&j, s) in &rec.sessions {
                match s.status {
                    SessionStatus::Accepted if s.accepted_at.is_some_and(|a| height >= a + timeout) => {
                        refunds.push((acct.clone(), j))
                    }
                    SessionStatus::KeyOut if s.key_out_at.is_some_and(|k| height >= k + timeout) => {
                        settles.push((acct.clone(), j))
                    }
                    _ => {}
                }
            }
        }
        for (acct, j) in refunds {
            self.refund_session(cid, &acct, j);
        }
        for (acct, j) in settles {
            self.settle_session(cid, &acct, j);
        }
    }

    pub fn settle_all_timeouts(&mut self) {
        let cids: Vec<Cid> = self.contracts.keys().copied().collect();
        for cid in cids {
            self.settle_timeouts(cid);
        }
    }
}

fn resolve_path(st: &ContractState, path: &str) -> LedgerResult<ReadValue> {
    let unknown = || LedgerError::UnknownPath(path.to_string());
    let node_arg = |s: &str| -> LedgerResult<u32> {
        let j: u32 = s.parse().map_err(|_| unknown())?;
        if j == 0 || j as usize > st.n() {
            return Err(unknown());
        }
        Ok(j)
    };
    let parts: Vec<&str> = path.split('.').collect();
    match parts.as_slice() {
        ["price"] => Ok(ReadValue::Price(st.price)),
        ["key_revealed", j] => Ok(ReadValue::Key(st.key_revealed.get(&node_arg(j)?).copied())),
        ["delta", j] => Ok(ReadValue::Delta(st.delta.get(&node_arg(j)?).copied())),
        ["commitment", j] => Ok(ReadValue::Commitment(st.commitment.get(&node_arg(j)?).copied())),
        ["buyer_status", acct, j] => {
            let j = node_arg(j)?;
            let status = st.buyers.get(&Account(acct.to_string())).and_then(|b| b.status(j));
            Ok(ReadValue::Status(status))
        }
        _ => Err(unknown()),
    }
}
