//! Messages exchanged over the simulated authenticated channels.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crypto::{Digest32, KeyMaterial};
use crate::ledger::Account;
use crate::tee_sim::AttestationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ParticipantId {
    Server,
    Device(u32),
    Node(u32),
    Consumer,
}

impl std::fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Server => f.write_str("server"),
            Self::Device(i) => write!(f, "device:{i}"),
            Self::Node(j) => write!(f, "node:{j}"),
            Self::Consumer => f.write_str("consumer"),
        }
    }
}

impl std::str::FromStr for ParticipantId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let index = |v: &str| v.parse::<u32>().ok().filter(|&i| i > 0);
        match s.split_once(':') {
            None if s == "server" => Ok(Self::Server),
            None if s == "consumer" => Ok(Self::Consumer),
            Some(("device", v)) => index(v).map(Self::Device).ok_or_else(|| format!("bad participant {s:?}")),
            Some(("node", v)) => index(v).map(Self::Node).ok_or_else(|| format!("bad participant {s:?}")),
            _ => Err(format!("bad participant {s:?}")),
        }
    }
}

impl TryFrom<String> for ParticipantId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<ParticipantId> for String {
    fn from(p: ParticipantId) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    /// Server asks a device to produce its signed shares.
    Solicit,
    DeviceOutput { provider: u32, reports: Vec<AttestationReport> },
    /// Every provider's share destined to one node.
    DataShares { reports: Vec<AttestationReport> },
    GroupKey { key: KeyMaterial },
    NoticeBuy { buyer: Account },
    EncryptedShares { node: u32, z: Vec<u8> },
    NoticeAccept { buyer: Account },
    NoticeKey { node: u32 },
    /// Collusion channel: plaintext shares and optionally a node key.
    Leak { node: u32, reports: Vec<AttestationReport>, key: Option<KeyMaterial> },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Solicit => "Solicit",
            Self::DeviceOutput { .. } => "DeviceOutput",
            Self::DataShares { .. } => "DataShares",
            Self::GroupKey { .. } => "GroupKey",
            Self::NoticeBuy { .. } => "NoticeBuy",
            Self::EncryptedShares { .. } => "EncryptedShares",
            Self::NoticeAccept { .. } => "NoticeAccept",
            Self::NoticeKey { .. } => "NoticeKey",
            Self::Leak { .. } => "Leak",
        }
    }

    /// Hash of a canonical byte encoding of the payload.
    pub fn payload_hash(&self) -> Digest32 {
        let mut h = Sha256::new();
        h.update(self.kind().as_bytes());
        let reports = |h: &mut Sha256, reports: &[AttestationReport]| {
            h.update((reports.len() as u32).to_be_bytes());
            for r in reports {
                h.update(crate::encoding::encode_record(r));
                h.update(r.share.node_index.to_be_bytes());
            }
        };
        match self {
            Self::Solicit => {}
            Self::DeviceOutput { provider, reports: rs } => {
                h.update(provider.to_be_bytes());
                reports(&mut h, rs);
            }
            Self::DataShares { reports: rs } => reports(&mut h, rs),
            Self::GroupKey { key } => h.update(key.0),
            Self::NoticeBuy { buyer } | Self::NoticeAccept { buyer } => h.update(buyer.0.as_bytes()),
            Self::EncryptedShares { node, z } => {
                h.update(node.to_be_bytes());
                h.update(z);
            }
            Self::NoticeKey { node } => h.update(node.to_be_bytes()),
            Self::Leak { node, reports: rs, key } => {
                h.update(node.to_be_bytes());
                reports(&mut h, rs);
                if let Some(k) = key {
                    h.update(k.0);
                }
            }
        }
        h.finalize().into()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub seq: u64,
    pub sent_block: u64,
    pub from: ParticipantId,
    pub to: ParticipantId,
    pub msg: Message,
}
