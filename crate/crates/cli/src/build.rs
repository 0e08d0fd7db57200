use anyhow::{bail, Result};
use serde_json::json;
use togglebench_core::annotation::ToggleQuadruplet;
use togglebench_core::builder::{expand_all, split_dataset, Phrasing, TemplateSet};
use togglebench_core::jsonl;

use crate::output::{ensure_distinct, OutDir};
use crate::BuildArgs;

pub fn run(a: BuildArgs) -> Result<()> {
    if !(a.ratio > 0.0 && a.ratio < 1.0) {
        bail!("--ratio must lie in (0, 1), got {}", a.ratio);
    }
    let templates = match &a.templates {
        Some(p) => TemplateSet::load(p)?,
        None => TemplateSet::default(),
    };
    let quads: Vec<ToggleQuadruplet> = jsonl::read(&a.input)?;
    let phrasing = if a.paraphrase {
        Phrasing::Paraphrase { seed: a.seed }
    } else {
        Phrasing::Default
    };
    let expansion = expand_all(&quads, &templates, phrasing);
    let split = split_dataset(&expansion.samples, a.seed, a.ratio)?;
    let (train, test) = split.assign(&expansion.samples);

    let out = OutDir::create(&a.out_dir)?;
    for name in ["samples.jsonl", "train.jsonl", "test.jsonl"] {
        ensure_distinct(&a.input, &out.path(name))?;
    }
    out.jsonl("samples.jsonl", &expansion.samples)?;
    out.jsonl("train.jsonl", train.iter().copied())?;
    out.jsonl("test.jsonl", test.iter().copied())?;
    out.json("split.json", &split)?;
    let rejected: Vec<_> = expansion
        .rejected
        .iter()
        .map(|(q, e)| json!({"screen_id": q.screen_id, "box": q.bbox, "error": e.to_string()}))
        .collect();
    out.jsonl("rejected.jsonl", &rejected)?;

    println!("quadruplets  {}", quads.len());
    println!("rejected     {}", rejected.len());
    println!("samples      {}", expansion.samples.len());
    println!(
        "train        {} samples, {} screens",
        train.len(),
        split.train_ids.len()
    );
    println!(
        "test         {} samples, {} screens",
        test.len(),
        split.test_ids.len()
    );
    Ok(())
}
