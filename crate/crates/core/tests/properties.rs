use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use togglebench_core::action::{
    normalize_point, Action, ActionGrammar, ActionType, BBox, Dialect, Direction, Point, ScreenDims,
};
use togglebench_core::annotation::{
    run_pipeline, AnnotationTask, PipelineConfig, ResumeMode, RetryPolicy, ScreenRecord,
    ScriptedAnnotator, ScriptedReply, ToggleQuadruplet,
};
use togglebench_core::builder::{expand_quadruplet, Phrasing, TemplateSet};
use togglebench_core::domain::{Polarity, ToggleState};
use togglebench_core::matching::{GroundTruthStep, MatchConfig};
use togglebench_core::metrics::{
    eval_agentic, eval_state_control, ScoredSample, ScoredStep, ScoredTrajectory,
};
use togglebench_core::star::{
    examples_from_episode, index_toggle_steps, refine_line, synth_chain, verify_round_trip,
    ChainTemplates, Episode, EpisodeStep, HistoryMode, ToggleStepAnnotation,
};
use togglebench_core::world::tasks::TaskInstance;
use togglebench_core::world::{
    run_episode, AgentAdapter, AgentError, AgentRequest, OptimalAgent, SuiteConfig, TaskRegistry,
    Termination, World, APPS, DEFAULT_BUDGET,
};

fn pt(x: u32, y: u32) -> Point {
    Point::new(x, y).unwrap()
}

fn bx(a: u32, b: u32, c: u32, d: u32) -> BBox {
    BBox::new(a, b, c, d).unwrap()
}

// ------------------------------------------------------------ geometry

proptest! {
    #[test]
    fn normalize_monotone(w in 1u32..4000, h in 1u32..4000, x in 0.0f64..4000.0, dx in 0.0f64..500.0, y in 0.0f64..4000.0) {
        let dims = ScreenDims::new(w, h);
        let a = normalize_point(x, y, dims).unwrap().point;
        let b = normalize_point(x + dx, y, dims).unwrap().point;
        prop_assert!(a.x() <= b.x());
        prop_assert_eq!(a.y(), b.y());
    }

    #[test]
    fn normalize_identity_on_unit_screen(x in 0u32..=1000, y in 0u32..=1000) {
        let n = normalize_point(x as f64, y as f64, ScreenDims::new(1000, 1000)).unwrap();
        prop_assert_eq!(n.point, pt(x, y));
        prop_assert!(!n.clamped);
    }
}

// ------------------------------------------------------------ metrics

fn arb_pred() -> impl Strategy<Value = Option<Action>> {
    prop_oneof![
        Just(None),
        Just(Some(Action::completed())),
        (0u32..=1000, 0u32..=1000).prop_map(|(x, y)| Some(Action::click(pt(x, y)))),
        Just(Some(Action::scroll(Direction::Down))),
    ]
}

fn arb_sample() -> impl Strategy<Value = ScoredSample> {
    (any::<bool>(), 0u32..900, 0u32..900, 1u32..100, arb_pred(), any::<bool>()).prop_map(
        |(positive, x, y, s, pred, loose)| {
            let b = bx(x, y, x + s, y + s);
            let (polarity, label) = if positive {
                (Polarity::Positive, Action::click(b.center()))
            } else {
                (Polarity::Negative, Action::completed())
            };
            let cfg = if loose {
                MatchConfig::agentic()
            } else {
                MatchConfig::state_control()
            };
            ScoredSample::score(polarity, GroundTruthStep::new(label, vec![b]), pred, b.center(), &cfg)
                .unwrap()
        },
    )
}

fn arb_trajectory() -> impl Strategy<Value = ScoredTrajectory> {
    let step = (0u32..=1000, 0u32..=1000, arb_pred(), any::<bool>()).prop_map(|(x, y, pred, click)| {
        let gt = if click {
            Action::click(pt(x, y))
        } else {
            Action::completed()
        };
        ScoredStep::score("s", GroundTruthStep::new(gt, vec![]), pred, &MatchConfig::agentic())
    });
    ("[a-z]{1,4}", prop::collection::vec(step, 1..6))
        .prop_map(|(id, steps)| ScoredTrajectory { episode_id: id, steps })
}

proptest! {
    #[test]
    fn state_metrics_bounded_and_permutation_invariant(
        (samples, shuffled) in prop::collection::vec(arb_sample(), 1..60)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    ) {
        let a = eval_state_control(&samples).unwrap();
        let b = eval_state_control(&shuffled).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.identities_hold());
        for (_, r) in a.rows() {
            prop_assert!(r.hits <= r.total);
            if let Some(v) = r.value() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn agentic_metrics_bounded_and_permutation_invariant(
        (ts, shuffled) in prop::collection::vec(arb_trajectory(), 1..10)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    ) {
        let a = eval_agentic(&ts).unwrap();
        prop_assert_eq!(a, eval_agentic(&shuffled).unwrap());
        for (_, r) in a.rows() {
            prop_assert!(r.hits <= r.total);
        }
        prop_assert!(a.tsr.hits <= a.tsr.total && a.amr.hits <= a.tmr.hits);
    }
}

// ------------------------------------------------------------ annotation

#[derive(Debug, Clone)]
struct Verdicts {
    yes: [bool; 2],
    state: [bool; 2],
    feature: [usize; 2],
    /// Annotator B fails identification on this unit.
    fails: bool,
}

const FEATURES: [&str; 4] = ["Wi-Fi", "wi-fi ", "Bluetooth", "Dark  theme"];

fn arb_verdicts() -> impl Strategy<Value = Verdicts> {
    (any::<[bool; 2]>(), any::<[bool; 2]>(), [0usize..4, 0usize..4], prop::bool::weighted(0.1)).prop_map(
        |(yes, state, feature, fails)| Verdicts {
            yes,
            state,
            feature,
            fails,
        },
    )
}

fn unit_box(i: usize) -> BBox {
    let i = i as u32;
    bx(700, 10 + 60 * i, 900, 50 + 60 * i)
}

/// One record per entry of `screens`, one unit per verdict.
fn setup(screens: &[Vec<Verdicts>]) -> (Vec<ScreenRecord>, ScriptedAnnotator, ScriptedAnnotator) {
    let (mut a, mut b) = (ScriptedAnnotator::new("a"), ScriptedAnnotator::new("b"));
    let mut records = Vec::new();
    for (s, units) in screens.iter().enumerate() {
        let id = format!("s{s}");
        for (i, v) in units.iter().enumerate() {
            let u = unit_box(i);
            let st = |on: bool| if on { "on" } else { "off" };
            a = a
                .identify(&id, u, v.yes[0])
                .state_feature(&id, u, st(v.state[0]), FEATURES[v.feature[0]]);
            b = b
                .identify(&id, u, v.yes[1])
                .state_feature(&id, u, st(v.state[1]), FEATURES[v.feature[1]]);
            if v.fails {
                b = b.replies(
                    AnnotationTask::ToggleIdentification,
                    &id,
                    u,
                    vec![ScriptedReply::Fail {
                        error: "boom".into(),
                    }],
                );
            }
        }
        records.push(ScreenRecord {
            screen_id: id.clone(),
            image_ref: format!("{id}.png"),
            screen_dims: ScreenDims::new(1080, 2400),
            original_boxes: (0..units.len()).map(unit_box).collect(),
            parsed_boxes: Vec::new(),
            source_dataset: String::new(),
            source_instruction: String::new(),
        });
    }
    (records, a, b)
}

fn config() -> PipelineConfig {
    PipelineConfig {
        retry: RetryPolicy::immediate(2),
        fail_fast: false,
        workers: 2,
        ..PipelineConfig::default()
    }
}

fn arb_screens() -> impl Strategy<Value = Vec<Vec<Verdicts>>> {
    prop::collection::vec(prop::collection::vec(arb_verdicts(), 1..6), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn annotation_conservation_and_determinism(screens in arb_screens()) {
        let (records, a, b) = setup(&screens);
        let out = run_pipeline(&records, &a, &b, &config(), None, ResumeMode::Fresh).unwrap();
        let audit = &out.audit;
        prop_assert!(out.complete);
        prop_assert_eq!(audit.units, screens.iter().map(Vec::len).sum::<usize>());
        prop_assert_eq!(audit.units, audit.retained + audit.dropped_total() + audit.errored);
        prop_assert_eq!(audit.errored, screens.iter().flatten().filter(|v| v.fails).count());
        prop_assert_eq!(out.units.len(), audit.units);

        let (records2, a2, b2) = setup(&screens);
        let again = run_pipeline(&records2, &a2, &b2, &config(), None, ResumeMode::Fresh).unwrap();
        prop_assert_eq!(&out.quadruplets, &again.quadruplets);
        prop_assert_eq!(&out.units, &again.units);
    }

    #[test]
    fn flipping_a_yes_never_adds_retained(screens in arb_screens(), pick in any::<prop::sample::Index>(), who in 0usize..2) {
        let (records, a, b) = setup(&screens);
        let base = run_pipeline(&records, &a, &b, &config(), None, ResumeMode::Fresh).unwrap();
        let mut flipped = screens.clone();
        let all: Vec<(usize, usize)> = flipped
            .iter()
            .enumerate()
            .flat_map(|(s, u)| (0..u.len()).map(move |i| (s, i)))
            .collect();
        let (s, i) = all[pick.index(all.len())];
        flipped[s][i].yes[who] = false;
        let (records, a, b) = setup(&flipped);
        let after = run_pipeline(&records, &a, &b, &config(), None, ResumeMode::Fresh).unwrap();
        for q in &after.quadruplets {
            prop_assert!(base.quadruplets.contains(q), "new retained quadruplet {:?}", q);
        }
    }

    #[test]
    fn resumption_equivalence(screens in arb_screens(), chunk in 1usize..5) {
        let (records, a, b) = setup(&screens);
        let full = run_pipeline(&records, &a, &b, &config(), None, ResumeMode::Fresh).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("c.jsonl");
        let mut mode = ResumeMode::Fresh;
        let cfg = PipelineConfig { max_new_units: Some(chunk), ..config() };
        let resumed = loop {
            let out = run_pipeline(&records, &a, &b, &cfg, Some(&ckpt), mode).unwrap();
            prop_assert!(out.audit.is_conserved());
            if out.complete {
                break out;
            }
            mode = ResumeMode::Resume;
        };
        prop_assert_eq!(full.quadruplets, resumed.quadruplets);
        prop_assert_eq!(full.units, resumed.units);
        prop_assert_eq!(full.audit, resumed.audit);
    }
}

// ------------------------------------------------------------ star

fn arb_quad() -> impl Strategy<Value = ToggleQuadruplet> {
    (0u32..800, 0u32..900, any::<bool>(), "[A-Za-z][A-Za-z -]{0,12}").prop_map(|(x, y, on, f)| {
        ToggleQuadruplet {
            screen_id: "s".into(),
            image_ref: "s.png".into(),
            bbox: bx(x, y, x + 100, y + 50),
            state: if on { ToggleState::On } else { ToggleState::Off },
            feature: f,
        }
    })
}

fn arb_step_action() -> impl Strategy<Value = Action> {
    prop_oneof![
        (0u32..=1000, 0u32..=1000).prop_map(|(x, y)| Action::click(pt(x, y))),
        Just(Action::completed()),
        prop::sample::select(Direction::ALL.to_vec()).prop_map(Action::scroll),
        "[a-z ]{1,10}".prop_map(Action::type_text),
        "[A-Z][a-z]{1,8}".prop_map(Action::open_app),
    ]
}

fn arb_episode() -> impl Strategy<Value = Episode> {
    prop::collection::vec(arb_step_action(), 1..6).prop_map(|actions| Episode {
        episode_id: "ep".into(),
        steps: actions
            .into_iter()
            .enumerate()
            .map(|(i, action)| EpisodeStep {
                step_id: i.to_string(),
                instruction: format!("step {i}"),
                image_ref: format!("{i}.png"),
                reasoning: "original".into(),
                action,
                extra: Default::default(),
            })
            .collect(),
        extra: Default::default(),
    })
}

proptest! {
    #[test]
    fn decision_soundness(q in arb_quad(), paraphrase in any::<Option<u64>>()) {
        let phrasing = paraphrase.map_or(Phrasing::Default, |seed| Phrasing::Paraphrase { seed });
        let t = ChainTemplates::default();
        for s in expand_quadruplet(&q, &TemplateSet::default(), phrasing).unwrap() {
            let c = synth_chain(&s, &t).unwrap();
            prop_assert_eq!(
                s.toggle_state == s.desired_state(),
                c.final_action.action_type() == ActionType::Completed
            );
        }
    }

    #[test]
    fn refinement_is_idempotent(mut ep in arb_episode(), pick in any::<prop::sample::Index>(), on in any::<bool>(), done in any::<bool>()) {
        let i = pick.index(ep.steps.len());
        ep.steps[i].action = if done { Action::completed() } else { Action::click(pt(500, 500)) };
        let step = &ep.steps[i];
        let steps = index_toggle_steps(vec![ToggleStepAnnotation {
            episode_id: ep.episode_id.clone(),
            step_id: step.step_id.clone(),
            state: Some(if on { ToggleState::On } else { ToggleState::Off }),
            feature: Some("Wi-Fi".into()),
            desired: Some(match (on, done) {
                (true, true) | (false, false) => ToggleState::On,
                _ => ToggleState::Off,
            }),
        }]);
        let t = ChainTemplates::default();
        let line = serde_json::to_string(&ep).unwrap();
        let once = refine_line(&line, &steps, &t).unwrap();
        let twice = refine_line(&once, &steps, &t).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn episode_export_round_trips(ep in arb_episode(), mode in prop::sample::select(vec![HistoryMode::TextChain, HistoryMode::ScreenshotChain, HistoryMode::None])) {
        for d in Dialect::ALL {
            let ex = examples_from_episode(&ep, d, mode).unwrap();
            prop_assert!(verify_round_trip(&ex, d).is_ok());
            for e in &ex {
                prop_assert_eq!(&d.parse(&e.action_text).unwrap(), &e.action);
            }
        }
    }
}

// ------------------------------------------------------------ world

/// Clicks, app switches, key presses and junk, from a seeded stream.
struct RandomAgent {
    rng: ChaCha8Rng,
}

impl AgentAdapter for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, req: &AgentRequest) -> Result<String, AgentError> {
        let action = random_action(&mut self.rng, &req.observation.widgets);
        match action {
            Some(a) => Ok(req
                .dialect
                .format(&a)
                .unwrap_or_else(|_| "COMPLETED".into())),
            None => Ok("???".into()),
        }
    }
}

fn random_action(rng: &mut ChaCha8Rng, widgets: &[togglebench_core::world::Widget]) -> Option<Action> {
    Some(match rng.random_range(0..10) {
        0..=4 if !widgets.is_empty() => {
            Action::click(widgets[rng.random_range(0..widgets.len())].bbox.center())
        }
        5 => Action::click(pt(rng.random_range(0..=1000), rng.random_range(0..=1000))),
        6 => Action::open_app(APPS[rng.random_range(0..APPS.len())].0),
        7 => Action::press(Some(if rng.random_bool(0.5) { "back" } else { "home" })),
        8 if rng.random_bool(0.2) => Action::completed(),
        8 => return None,
        _ => Action::scroll(Direction::Down),
    })
}

fn check_fidelity(world: &World, state: &togglebench_core::world::WorldState) -> Result<(), TestCaseError> {
    let obs = world.observe(state, "");
    for key in world.toggle_keys() {
        let (screen, bbox) = world.locate_toggle(key).unwrap();
        if screen == state.current_screen {
            let w = obs.widgets.iter().find(|w| w.bbox == bbox).unwrap();
            prop_assert_eq!(w.state.map(|s| s.is_on()), state.toggle(key));
        }
    }
    let mut boxes: Vec<BBox> = obs.widgets.iter().map(|w| w.bbox).collect();
    boxes.sort_by_key(|b| (b.y_min(), b.x_min()));
    for pair in boxes.windows(2) {
        prop_assert!(!pair[0].overlaps(&pair[1]), "widgets overlap on {}", obs.screen_id);
    }
    Ok(())
}

fn instance(task: usize, seed: u64) -> TaskInstance {
    let r = TaskRegistry::default();
    let t = &r.tasks()[task % r.tasks().len()];
    t.instantiate(&World::new(), seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn toggle_click_is_an_involution(task in 0usize..20, seed in any::<u64>(), k in any::<prop::sample::Index>()) {
        let world = World::new();
        let inst = instance(task, seed);
        let keys = world.toggle_keys();
        let key = keys[k.index(keys.len())];
        let (screen, bbox) = world.locate_toggle(key).unwrap();
        let mut state = inst.initial.clone();
        state.current_screen = screen.to_string();
        let before = state.toggles.clone();
        world.step(&mut state, &Action::click(bbox.center()));
        prop_assert_ne!(&state.toggles, &before);
        world.step(&mut state, &Action::click(bbox.center()));
        prop_assert_eq!(state.toggles, before);
    }

    #[test]
    fn observations_mirror_state(task in 0usize..20, seed in any::<u64>(), walk in any::<u64>()) {
        let world = World::new();
        let mut state = instance(task, seed).initial;
        let mut rng = ChaCha8Rng::seed_from_u64(walk);
        check_fidelity(&world, &state)?;
        for _ in 0..40 {
            let widgets = world.observe(&state, "").widgets;
            if let Some(a) = random_action(&mut rng, &widgets) {
                world.step(&mut state, &a);
            }
            check_fidelity(&world, &state)?;
        }
    }

    #[test]
    fn episodes_are_deterministic_and_bounded(task in 0usize..20, seed in any::<u64>(), agent_seed in any::<u64>(), budget in 1u32..=DEFAULT_BUDGET, d in 0usize..3) {
        let world = World::new();
        let inst = instance(task, seed);
        let cfg = SuiteConfig { budget, seed, dialect: Dialect::ALL[d] };
        let run = || {
            let mut agent = RandomAgent { rng: ChaCha8Rng::seed_from_u64(agent_seed) };
            run_episode(&world, &mut agent, &inst, &cfg, None).unwrap()
        };
        let a = run();
        prop_assert_eq!(&a, &run());
        prop_assert!(a.steps_taken <= budget);
        prop_assert!(a.transcript.len() as u32 <= budget);
        if a.termination == Termination::BudgetExhausted {
            prop_assert_eq!(a.steps_taken, budget);
        }
        prop_assert!((0.0..=1.0).contains(&a.success_ratio));
    }

    #[test]
    fn verify_tasks_punish_toggling(seed in any::<u64>(), v in 0usize..4) {
        let registry = TaskRegistry::default();
        let verify: Vec<_> = registry.tasks().iter().filter(|t| t.verify).collect();
        let world = World::new();
        let inst = verify[v].instantiate(&world, seed);
        let cfg = SuiteConfig { seed, ..SuiteConfig::default() };

        let opt = run_episode(&world, &mut OptimalAgent::new(), &inst, &cfg, None).unwrap();
        prop_assert_eq!(opt.success_ratio, 1.0);
        prop_assert_eq!(&opt.final_state.toggles, &inst.initial.toggles);
        let located: Vec<(&str, BBox)> = inst
            .goals
            .iter()
            .filter_map(|g| match g {
                togglebench_core::world::Goal::Toggle { key, .. } => world.locate_toggle(key),
                _ => None,
            })
            .collect();
        for e in &opt.transcript {
            if let Some(p) = e.action.as_ref().and_then(Action::point) {
                let hit = located
                    .iter()
                    .any(|(s, b)| *s == e.observation.screen_id && b.contains(p));
                prop_assert!(!hit, "optimal clicked a target toggle");
            }
        }

        // clicking the target once (net change) always fails the task
        let mut state = inst.initial.clone();
        for (screen, b) in &located {
            state.current_screen = screen.to_string();
            world.step(&mut state, &Action::click(b.center()));
        }
        let (ratio, _) = togglebench_core::world::suite::score_episode(&inst.goals, &state);
        prop_assert_eq!(ratio, 0.0);
    }
}

#[test]
fn verify_tasks_start_in_desired_state() {
    let registry = TaskRegistry::default();
    let world = World::new();
    let verify: Vec<_> = registry.tasks().iter().filter(|t| t.verify).collect();
    assert_eq!(verify.len(), 4);
    for t in verify {
        for seed in 0..10 {
            let inst = t.instantiate(&world, seed);
            assert!(inst.goals.iter().all(|g| g.satisfied(&inst.initial)), "{}", t.task_id);
        }
    }
}
