use std::collections::BTreeSet;
use std::fs;

use skillstream::config::RunConfig;
use skillstream::engine::{run_base_stage, run_lifelong_step, skill_usage, Variant};
use skillstream::persist::{save_state, skill_bytes};
use skillstream::pipeline::{cmd_eval, cmd_metrics, cmd_run, execute, RunError};
use skillstream::report::cmd_report;
use skillstream::synth::{generate, SuiteSpec};
use skillstream::trajectory::Stage;

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.generate.demos_per_task = 4;
    cfg.segmentation.window = 3;
    cfg.eval.episodes = 2;
    cfg
}

fn small_spec() -> SuiteSpec {
    SuiteSpec {
        demos_per_task: 4,
        ..SuiteSpec::default()
    }
}

#[test]
fn same_seed_same_state() {
    let cfg = small_config();
    let g = generate(&small_spec(), 3).unwrap();
    let a = execute(&g.suite, &g.world, &cfg, false).unwrap();
    let b = execute(&g.suite, &g.world, &cfg, false).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.reports, b.reports);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_state(&a.state, da.path()).unwrap();
    save_state(&b.state, db.path()).unwrap();
    for (k, policy) in &a.state.library {
        assert_eq!(skill_bytes(policy), skill_bytes(&b.state.library[k]));
    }
    let read = |d: &std::path::Path| fs::read(d.join("state").join("clustering.json")).unwrap();
    assert_eq!(read(da.path()), read(db.path()));
}

#[test]
fn overly_strict_threshold_gives_every_segment_its_own_skill() {
    let mut cfg = small_config();
    cfg.clustering.sil_threshold = 1.5;
    // one skill per segment needs a head wider than the default
    cfg.policy.k_max = 1024;
    let g = generate(&small_spec(), 1).unwrap();
    let out = execute(&g.suite, &g.world, &cfg, false).unwrap();
    for pair in out.reports.windows(2) {
        let growth = pair[1].k_c - pair[0].k_c;
        assert_eq!(growth, pair[1].segments.len());
        assert_eq!(pair[1].new_skills.len(), growth);
    }
}

#[test]
fn library_and_mask_only_widen() {
    let cfg = small_config();
    let g = generate(&small_spec(), 2).unwrap();
    let engine = cfg.engine();
    let (mut state, _) = run_base_stage(&g.suite, &engine).unwrap();
    for task in g.suite.tasks.iter().filter(|t| t.stage == Stage::Lifelong) {
        let (k_prev, mask_prev) = (state.k_c(), state.meta.k_c);
        let ids_prev: Vec<usize> = state.library.keys().copied().collect();
        run_lifelong_step(&mut state, &g.suite, task, &engine).unwrap();
        assert!(state.k_c() >= k_prev);
        assert!(state.meta.k_c >= mask_prev);
        assert_eq!(state.meta.k_c, state.k_c());
        let ids: Vec<usize> = state.library.keys().copied().collect();
        assert_eq!(ids, (0..state.k_c()).collect::<Vec<_>>());
        assert_eq!(&ids[..ids_prev.len()], &ids_prev[..]);
    }
}

#[test]
fn untouched_skills_keep_their_bytes() {
    let cfg = small_config();
    let g = generate(&small_spec(), 4).unwrap();
    let engine = cfg.engine();
    let (mut state, _) = run_base_stage(&g.suite, &engine).unwrap();
    let mut checked = 0;
    for task in g.suite.tasks.iter().filter(|t| t.stage == Stage::Lifelong) {
        let before: Vec<(usize, (Vec<u8>, Vec<u8>))> =
            state.library.iter().map(|(k, p)| (*k, skill_bytes(p))).collect();
        let report = run_lifelong_step(&mut state, &g.suite, task, &engine).unwrap();
        let touched: BTreeSet<usize> = report.touched_skills.iter().copied().collect();
        for (k, bytes) in before {
            if touched.contains(&k) {
                assert_ne!(skill_bytes(&state.library[&k]), bytes, "skill {k} was trained");
            } else {
                assert_eq!(skill_bytes(&state.library[&k]), bytes, "skill {k} changed");
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn ablations_shape_the_library() {
    let g = generate(&small_spec(), 5).unwrap();
    let mut cfg = small_config();
    cfg.variant = Variant::Monolithic;
    let mono = execute(&g.suite, &g.world, &cfg, false).unwrap();
    assert!(mono.reports.iter().all(|r| r.k_c == 1));

    cfg.variant = Variant::FrozenLibrary;
    let frozen = execute(&g.suite, &g.world, &cfg, false).unwrap();
    let k0 = frozen.reports[0].k_c;
    assert!(frozen.reports.iter().all(|r| r.k_c == k0));

    cfg.variant = Variant::NoReplay;
    let bare = execute(&g.suite, &g.world, &cfg, false).unwrap();
    assert_eq!(bare.state.buffer.frame_count(), 0);
}

#[test]
fn run_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.out = dir.path().join("run");
    let summary = cmd_run(&cfg).unwrap();
    let out = &cfg.out;
    for name in ["config.json", "matrix.json", "metrics.json", "log.jsonl", "segments.jsonl"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    assert!(summary.matrix.is_complete());
    let m = summary.matrix.m;
    let cells: usize = summary.matrix.r.iter().map(Vec::len).sum();
    assert_eq!(cells, m * (m + 1) / 2);
    assert!(summary.matrix.r.iter().flatten().all(|v| (0.0..=1.0).contains(&v.unwrap())));

    assert_eq!(cmd_metrics(out, false).unwrap(), summary.metrics);

    let files = cmd_report(out, true).unwrap();
    assert_eq!(files.len(), 4);
    let usage = fs::read_to_string(out.join("report").join("skill_usage.csv")).unwrap();
    let expected: usize = skill_usage(&summary.reports).values().map(BTreeSet::len).sum();
    assert_eq!(usage.lines().count() - 1, expected);

    let rates = cmd_eval(out, Some(2), 1).unwrap();
    assert_eq!(rates.len(), m);
    let last_row: Vec<f64> = summary.matrix.r[m - 1].iter().map(|v| v.unwrap()).collect();
    assert_eq!(rates.iter().map(|r| r.1).collect::<Vec<_>>(), last_row);
}

#[test]
fn missing_suite_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.suite = Some(dir.path().join("nowhere").join("suite.json"));
    cfg.out = dir.path().join("run");
    let err = cmd_run(&cfg).err().expect("run must fail");
    assert!(matches!(err, RunError::Data(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn report_needs_a_finished_run() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cmd_report(dir.path(), false).is_err());
    assert_eq!(RunError::from(cmd_report(dir.path(), false).unwrap_err()).exit_code(), 2);
}
