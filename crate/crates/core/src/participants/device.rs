//! Host side of a data provider's device.

use super::behavior::{Action, Behavior};
use super::messages::{Message, ParticipantId};
use super::Ctx;
use crate::crypto::SecretShare;
use crate::tee_sim::Eid;

#[derive(Debug)]
pub struct Device {
    pub index: u32,
    pub eid: Eid,
    pub raw: Vec<u8>,
    pub behavior: Behavior,
    /// Shares exactly as the TEE issued them.
    pub issued: Vec<SecretShare>,
    pub error: Option<String>,
}

impl Device {
    pub fn new(index: u32, eid: Eid, raw: Vec<u8>, behavior: Behavior) -> Self {
        Self { index, eid, raw, behavior, issued: Vec::new(), error: None }
    }

    pub fn handle(&mut self, ctx: &mut Ctx<'_>, from: ParticipantId, msg: Message) {
        if from != ParticipantId::Server || !matches!(msg, Message::Solicit) {
            return;
        }
        if self.behavior.has("Solicit", |a| *a == Action::Drop) {
            return;
        }
        if self.behavior.has("Solicit", |a| *a == Action::TamperTee) {
            ctx.tee.set_tampered(self.eid, true).expect("own instance exists");
        }
        let p = ctx.params;
        match ctx.tee.resume_gendata(self.eid, self.index, p.n, p.t, &self.raw, &p.rule) {
            Ok(out) => {
                self.issued = out.shares;
                ctx.send(ParticipantId::Server, Message::DeviceOutput { provider: self.index, reports: out.reports });
            }
            Err(e) => self.error = Some(e.to_string()),
        }
    }
}
