use std::time::Duration;

use anyhow::Result;
use togglebench_core::world::{
    format_rate, run_suite, AgentAdapter, AlwaysToggleAgent, HttpAgent, OptimalAgent,
    SubprocessAgent, SuiteConfig, TaskRegistry,
};

use crate::output::OutDir;
use crate::{EvalDynamicArgs, Scripted};

pub fn run(a: EvalDynamicArgs) -> Result<()> {
    let registry = TaskRegistry::default();
    let tasks = registry.select(&a.tasks)?;
    let config = SuiteConfig {
        budget: a.budget,
        seed: a.seed,
        dialect: a.dialect,
    };
    let out = OutDir::create(&a.out_dir)?;
    let mut agent: Box<dyn AgentAdapter> = match (&a.agent.agent_cmd, &a.agent.agent_url, a.agent.scripted) {
        (Some(cmd), _, _) => Box::new(SubprocessAgent::spawn(cmd)?),
        (_, Some(url), _) => Box::new(HttpAgent::new(url, Duration::from_secs(a.agent_timeout_secs))?),
        (_, _, Some(Scripted::Optimal)) => Box::new(OptimalAgent::new()),
        (_, _, Some(Scripted::AlwaysToggle)) => Box::new(AlwaysToggleAgent::new()),
        _ => unreachable!("clap requires one agent source"),
    };
    let report = run_suite(agent.as_mut(), &tasks, &config, None)?;
    report.write(out.root())?;

    let width = report
        .episodes
        .iter()
        .map(|e| e.task_id.len())
        .max()
        .unwrap_or(0);
    for e in &report.episodes {
        println!(
            "{:<width$}  {:>4}  {:>2} steps  {}",
            e.task_id,
            e.success_ratio,
            e.steps_taken,
            serde_json::to_value(e.termination)?
                .as_str()
                .unwrap_or_default()
        );
    }
    println!("{}  {}", report.agent, format_rate(report.successes(), report.episodes.len()));
    Ok(())
}
