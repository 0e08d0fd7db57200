use anyhow::Result;
use togglebench_core::builder::Sample;
use togglebench_core::jsonl;
use togglebench_core::star::{
    examples_from_episode, examples_from_samples, export_training, index_toggle_steps, refine_file,
    ChainTemplates, Episode, ToggleStepAnnotation, ToggleSteps,
};

use crate::output::{ensure_distinct, OutDir};
use crate::StarArgs;

pub fn run(a: StarArgs) -> Result<()> {
    let templates = match &a.templates {
        Some(p) => ChainTemplates::load(p)?,
        None => ChainTemplates::default(),
    };
    let out = OutDir::create(&a.out_dir)?;

    if let Some(input) = &a.input {
        let samples: Vec<Sample> = jsonl::read(input)?;
        let examples = examples_from_samples(&samples, &templates, a.dialect, a.history_mode)?;
        let path = out.path("star_samples.jsonl");
        ensure_distinct(input, &path)?;
        let n = export_training(&examples, a.dialect, &path)?;
        println!("samples   {n} conversations -> {}", path.display());
    }

    if let Some(episodes) = &a.episodes {
        let steps: ToggleSteps = match &a.toggle_steps {
            Some(p) => index_toggle_steps(jsonl::read::<ToggleStepAnnotation>(p)?),
            None => ToggleSteps::new(),
        };
        let refined = out.path("episodes_refined.jsonl");
        ensure_distinct(episodes, &refined)?;
        refine_file(episodes, &refined, &steps, &templates)?;
        let eps: Vec<Episode> = jsonl::read(&refined)?;
        let mut examples = Vec::new();
        for ep in &eps {
            examples.extend(examples_from_episode(ep, a.dialect, a.history_mode)?);
        }
        let path = out.path("star_episodes.jsonl");
        let n = export_training(&examples, a.dialect, &path)?;
        println!(
            "episodes  {} read, {} with toggle steps, {n} conversations -> {}",
            eps.len(),
            steps.len(),
            path.display()
        );
    }
    Ok(())
}
