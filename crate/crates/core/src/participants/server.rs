//! P-DApp server: solicits devices and relays share `j` of every provider to
//! node `j`.

use std::collections::BTreeMap;

use super::behavior::{Action, Behavior};
use super::messages::{Message, ParticipantId};
use super::Ctx;
use crate::tee_sim::AttestationReport;

#[derive(Debug)]
pub struct Server {
    pub behavior: Behavior,
    outputs: BTreeMap<u32, Vec<AttestationReport>>,
    /// Shares the server holds after forwarding; only collusion fills it.
    pub retained: Vec<AttestationReport>,
    pub forwarded: bool,
}

impl Server {
    pub fn new(behavior: Behavior) -> Self {
        Self { behavior, outputs: BTreeMap::new(), retained: Vec::new(), forwarded: false }
    }

    pub fn start(&mut self, ctx: &mut Ctx<'_>) {
        for i in 1..=ctx.params.m as u32 {
            ctx.send(ParticipantId::Device(i), Message::Solicit);
        }
    }

    pub fn handle(&mut self, ctx: &mut Ctx<'_>, from: ParticipantId, msg: Message) {
        match msg {
            Message::DeviceOutput { provider, reports } => {
                if from != ParticipantId::Device(provider) || self.forwarded {
                    return;
                }
                self.outputs.insert(provider, reports);
                if self.outputs.len() == ctx.params.m {
                    self.forward(ctx);
                }
            }
            Message::Leak { reports, .. } => self.retained.extend(reports),
            _ => {}
        }
    }

    fn forward(&mut self, ctx: &mut Ctx<'_>) {
        self.forwarded = true;
        let n = ctx.params.n as u32;
        let mut per_node: BTreeMap<u32, Vec<AttestationReport>> = (1..=n).map(|j| (j, Vec::new())).collect();
        for reports in std::mem::take(&mut self.outputs).into_values() {
            for r in reports {
                per_node.entry(r.share.node_index).or_default().push(r);
            }
        }
        if self.behavior.has("DeviceOutput", |a| *a == Action::Drop) {
            return;
        }
        for action in self.behavior.on("DeviceOutput") {
            if let Action::PermuteShares { provider, a, b } = *action {
                let pos = |list: &Vec<AttestationReport>| list.iter().position(|r| r.share.provider_index == provider);
                let (Some(ia), Some(ib)) = (per_node.get(&a).and_then(pos), per_node.get(&b).and_then(pos)) else {
                    continue;
                };
                let ra = per_node.get(&a).unwrap()[ia].clone();
                let rb = per_node.get(&b).unwrap()[ib].clone();
                per_node.get_mut(&a).unwrap()[ia] = rb;
                per_node.get_mut(&b).unwrap()[ib] = ra;
            }
        }
        for (j, reports) in per_node {
            if j >= 1 && j <= n {
                ctx.send(ParticipantId::Node(j), Message::DataShares { reports });
            }
        }
    }
}
