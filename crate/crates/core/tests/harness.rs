use hacl::harness::checkpoint::{decode, encode};
use hacl::harness::report::comparison_rows;
use hacl::harness::sweep::compare;
use hacl::harness::{run_experiment, sweep, Experiment, ExperimentConfig, Method, SweepOptions};
use hacl::sampler::SchedulerKind;
use hacl::Error;
use proptest::prelude::*;

fn tiny(extra: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::parse(extra).unwrap();
    c.grid_bins = [6, 4, 6];
    c.predictor.hidden = 6;
    c.predictor.embed = 3;
    c.predictor.window = 5;
    c
}

#[test]
fn comparing_a_method_with_itself_gives_identical_rows() {
    let c = tiny("run.budget = 40\nrun.seeds = 0, 1, 2\nsweep.methods = ucb");
    let a = sweep(&c, &SweepOptions::default()).unwrap();
    let b = sweep(&c, &SweepOptions::default()).unwrap();
    assert_eq!(compare(&a).unwrap(), compare(&b).unwrap());
}

#[test]
fn comparison_has_one_row_per_method_and_metric() {
    let c = tiny("run.budget = 30\nrun.seeds = 0, 1\nsweep.methods = ha_greedy+recurrent, uniform, fixed_grid");
    let runs = sweep(&c, &SweepOptions::default()).unwrap();
    let rows = compare(&runs).unwrap();
    assert_eq!(rows.len(), 3 * 8);
    let summaries: Vec<_> = runs.iter().map(|r| r.summary.clone()).collect();
    assert_eq!(rows, comparison_rows(&summaries));
}

#[test]
fn every_scheduler_runs_on_both_environments() {
    for env in ["frontier", "drifting_bandit"] {
        for kind in SchedulerKind::ALL {
            let predictor = if kind.uses_predictor() { "feedforward" } else { "none" };
            let c = tiny(&format!(
                "run.budget = 30\nenv.kind = {env}\nsampler.kind = {}\npredictor.kind = {predictor}",
                kind.as_str()
            ));
            let (s, recs) = run_experiment(&c, 1).unwrap();
            assert_eq!(recs.len(), 30, "{env} {}", kind.as_str());
            assert!(s.cumulative_regret >= 0.0);
            assert_eq!(s.final_v_cap.is_some(), env == "frontier");
        }
    }
}

#[test]
fn scheduler_without_its_predictor_is_a_config_error() {
    let err = ExperimentConfig::parse("sampler.kind = ha_greedy\npredictor.kind = none").unwrap_err();
    assert!(matches!(err, Error::Config { .. }), "{err}");
}

#[test]
fn fixed_grid_visits_active_bins_round_robin() {
    let c = tiny("run.budget = 50\nsampler.kind = fixed_grid\npredictor.kind = none\nrange.expand = false");
    let exp = Experiment::new(c.clone(), 0).unwrap();
    let active = exp.active().to_vec();
    let (_, recs) = run_experiment(&c, 0).unwrap();
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.bin, active[i % active.len()].0);
    }
}

#[test]
fn predictor_choice_changes_the_selections() {
    // Same seed, different predictor: selections diverge once training starts.
    let rec = tiny("run.budget = 60");
    let ff = rec.with_method(Method::parse("ha_greedy+feedforward").unwrap());
    let (_, a) = run_experiment(&rec, 3).unwrap();
    let (_, b) = run_experiment(&ff, 3).unwrap();
    assert_ne!(
        a.iter().map(|r| r.bin).collect::<Vec<_>>(),
        b.iter().map(|r| r.bin).collect::<Vec<_>>()
    );
}

fn checkpoint_bytes() -> Vec<u8> {
    let mut exp = Experiment::new(tiny("run.budget = 20"), 4).unwrap();
    for _ in 0..7 {
        exp.step().unwrap();
    }
    encode(&exp, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corrupted_checkpoints_never_load(pos in 0usize..4096, flip in 1u8..=255) {
        let mut bytes = checkpoint_bytes();
        let i = pos % bytes.len();
        bytes[i] ^= flip;
        prop_assert!(decode(&bytes).is_err());
    }

    #[test]
    fn truncated_checkpoints_never_load(cut in 0usize..4096) {
        let bytes = checkpoint_bytes();
        let cut = cut % bytes.len();
        prop_assert!(decode(&bytes[..cut]).is_err());
    }

    #[test]
    fn config_text_round_trips(
        budget in 1u64..100_000,
        alpha in 0.0f64..=1.0,
        kappa in 1e-3f64..2.0,
        lr in 1e-6f64..1.0,
        window in 1usize..200,
        seeds in proptest::collection::vec(0u64..1000, 1..6),
        kind in prop::sample::select(vec!["ha_greedy", "ucb", "thompson", "uniform", "fixed_grid"]),
    ) {
        let mut c = ExperimentConfig::default();
        c.budget = budget;
        c.scheduler.utility.alpha = alpha;
        c.scheduler.utility.kappa = kappa;
        c.predictor.learning_rate = lr;
        c.success.window = window;
        c.seeds = seeds;
        c.scheduler.kind = SchedulerKind::parse(kind).unwrap();
        prop_assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }
}

#[test]
fn shipped_configs_parse_and_default_cfg_matches_defaults() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = ExperimentConfig::from_file(&dir.join("default.cfg")).unwrap();
    assert_eq!(default, ExperimentConfig::default());
    for name in ["frontier_sweep.cfg", "bandit_sweep.cfg"] {
        let c = ExperimentConfig::from_file(&dir.join(name)).unwrap();
        assert!(!c.methods.is_empty(), "{name}");
    }
}
