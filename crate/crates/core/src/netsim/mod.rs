//! Deterministic scenario runner with a scripted adversary.

pub mod adversary;
pub mod monitor;
pub mod scheduler;
pub mod trace;

use std::fmt::Write as _;

pub use adversary::{random_case, script_by_name, standard_scripts, AdversaryScript};
pub use monitor::{Monitor, MonitorReport, Violation};
pub use scheduler::SeededScheduler;
pub use trace::{Trace, TraceError};

use crate::config::{AdversarySpec, ConfigError, ScenarioConfig};
use crate::participants::world::SetupError;
use crate::participants::{ExchangeOutcome, World};

pub struct RunResult {
    pub trace: Trace,
    pub outcome: ExchangeOutcome,
    pub monitor: MonitorReport,
    pub world: World,
}

/// Resolves the scenario's `adversary` key to a script.
pub fn resolve_script(config: &ScenarioConfig) -> Result<AdversaryScript, ConfigError> {
    match &config.adversary {
        AdversarySpec::Named(name) => {
            script_by_name(name, config).ok_or_else(|| ConfigError::UnknownScript(name.clone()))
        }
        AdversarySpec::Inline(script) => Ok(script.clone()),
    }
}

/// Runs stages 0 through 3 to termination.
pub fn run_scenario(config: &ScenarioConfig, script: &AdversaryScript) -> Result<RunResult, SetupError> {
    let config = script.effective_config(config);
    config.validate()?;
    script.validate(&config)?;
    let mut world = World::setup(&config, &script.behaviors())?;
    let mut scheduler = SeededScheduler::new(config.seed);
    let mut monitor = Monitor::new(script);
    world.run(&mut scheduler, &mut monitor);
    let report = monitor.finish(&world);
    let trace = Trace {
        config,
        script: script.clone(),
        events: world.events.clone(),
        final_state: final_state(&world),
        coalition: report.max_coalition.clone(),
    };
    Ok(RunResult { trace, outcome: world.outcome(), monitor: report, world })
}

fn final_state(world: &World) -> String {
    let mut s = world.ledger.contract(world.cid).map(|c| c.dump()).unwrap_or_default();
    for (acct, bal) in world.ledger.balances() {
        let _ = writeln!(s, "balance {acct} {bal}");
    }
    let _ = writeln!(s, "gas_total {}", world.ledger.total_gas());
    let _ = writeln!(s, "calls {}", world.ledger.contract_call_count());
    let _ = writeln!(
        s,
        "consumer reconstructed={} sessions={} gave_up={}",
        world.consumer.reconstructed.len(),
        world.consumer.accepted.len(),
        world.consumer.gave_up
    );
    s
}

/// Re-executes a trace from its recorded inputs and compares the rendering
/// byte for byte.
pub fn replay(trace: &Trace) -> bool {
    replay_text(&trace.render()).unwrap_or(false)
}

pub fn replay_text(text: &str) -> Result<bool, TraceError> {
    let (config, script) = Trace::parse_inputs(text)?;
    let rerun = run_scenario(&config, &script).map_err(|e| TraceError::Config(e.to_string()))?;
    Ok(rerun.trace.render() == text)
}
