use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::eval::perplexity;
use crate::heuristics::HeuristicKind;
use crate::synth::{sample_traces, shifted_two_state_source, test_set, two_state_source};

fn css(future_len: usize) -> HeuristicConfig {
    HeuristicConfig {
        future_len,
        ..HeuristicConfig::new(HeuristicKind::Css)
    }
}

fn config(mode: Mode, batch_size: usize) -> StreamConfig {
    StreamConfig {
        batch_size,
        threshold: 20,
        ..StreamConfig::new(mode, css(2))
    }
}

fn stationary(n: usize, seed: u64) -> Vec<Trace> {
    sample_traces(&two_state_source(), n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn alphabet() -> Alphabet {
    Alphabet::new(2)
}

#[test]
fn empty_stream_gives_root_only_model() {
    for mode in Mode::ALL {
        let out = run(alphabet(), &[], config(mode, 10)).unwrap();
        assert_eq!(out.hypothesis, Pdfa::root_only(alphabet()));
        assert_eq!(out.passes.len(), 1);
    }
}

#[test]
fn pass_count_follows_batches() {
    let traces = stationary(2_500, 1);
    for (b, expect) in [(1_000, 3), (500, 6), (10_000, 1)] {
        for mode in [Mode::StreamOld, Mode::StreamNew] {
            let out = run(alphabet(), &traces, config(mode, b)).unwrap();
            assert_eq!(out.passes.len(), expect, "B={b} {mode}");
            assert_eq!(out.metrics.len(), expect);
        }
    }
    let out = run(alphabet(), &traces, config(Mode::Batch, 100)).unwrap();
    assert_eq!(out.passes.len(), 1);
}

#[test]
fn runs_are_deterministic() {
    let traces = stationary(3_000, 2);
    for mode in Mode::ALL {
        let a = run(alphabet(), &traces, config(mode, 700)).unwrap();
        let b = run(alphabet(), &traces, config(mode, 700)).unwrap();
        assert_eq!(a.tree_hash, b.tree_hash);
        assert_eq!(a.hypothesis, b.hypothesis);
        assert_eq!(a.passes, b.passes);
    }
}

#[test]
fn stream_new_leaves_tree_untouched() {
    let mut l = Learner::new(alphabet(), config(Mode::StreamNew, usize::MAX)).unwrap();
    for t in stationary(2_000, 3) {
        l.push(&t).unwrap();
        if l.tree().len() > 4 && l.traces_used % 500 == 0 {
            let h = l.tree().state_hash();
            l.minimize().unwrap();
            assert_eq!(l.tree().state_hash(), h);
            assert_eq!(l.tree().applied_count(), 0);
        }
    }
}

#[test]
fn replay_queue_is_previous_pass() {
    let mut l = Learner::new(alphabet(), config(Mode::StreamNew, usize::MAX)).unwrap();
    let traces = stationary(3_000, 4);
    let mut last_len = 0;
    for chunk in traces.chunks(1_000) {
        for t in chunk {
            l.push(t).unwrap();
        }
        let stats = l.minimize().unwrap();
        assert_eq!(stats.replay_queue, last_len);
        let applied = stats.replayed + stats.recovered + stats.greedy_steps;
        last_len = l.replay_queue().count();
        assert_eq!(last_len, applied);
    }
}

#[test]
fn first_pass_matches_old_stream() {
    let traces = stationary(1_500, 5);
    let new = run(alphabet(), &traces, config(Mode::StreamNew, 5_000)).unwrap();
    let old = run(alphabet(), &traces, config(Mode::StreamOld, 5_000)).unwrap();
    assert_eq!(new.hypothesis, old.hypothesis);
}

#[test]
fn single_batch_old_stream_equals_batch_on_full_tree() {
    let traces = stationary(1_500, 6);
    let mut cfg = config(Mode::StreamOld, 5_000);
    cfg.full_tree = true;
    let old = run(alphabet(), &traces, cfg).unwrap();
    let batch = run(alphabet(), &traces, config(Mode::Batch, 5_000)).unwrap();
    assert_eq!(old.hypothesis, batch.hypothesis);
}

#[test]
fn stationary_source_learns_two_states() {
    let traces = stationary(20_000, 7);
    let out = run(alphabet(), &traces, config(Mode::StreamNew, 2_000)).unwrap();
    let last = out.hypothesis.num_states();
    assert_eq!(last, 2, "{:?}", out.metrics);
    out.hypothesis.check_normalized().unwrap();
}

#[test]
fn replay_mostly_succeeds_on_stationary_source() {
    let traces = stationary(20_000, 8);
    let out = run(alphabet(), &traces, config(Mode::StreamNew, 2_000)).unwrap();
    let (queued, replayed) = out.passes[2..]
        .iter()
        .fold((0, 0), |acc, p| (acc.0 + p.replay_queue, acc.1 + p.replayed));
    assert!(queued > 0);
    assert!(replayed as f64 >= 0.9 * queued as f64, "{replayed}/{queued}");
}

#[test]
fn distribution_shift_discards_refinements() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut traces = sample_traces(&two_state_source(), 4_000, &mut rng);
    traces.extend(sample_traces(&shifted_two_state_source(), 8_000, &mut rng));
    let out = run(alphabet(), &traces, config(Mode::StreamNew, 2_000)).unwrap();
    let discarded: usize = out.passes.iter().map(|p| p.discarded_consistency).sum();
    assert!(discarded >= 1, "{:?}", out.passes);
}

#[test]
fn old_stream_red_count_never_drops() {
    let traces = stationary(10_000, 10);
    let out = run(alphabet(), &traces, config(Mode::StreamOld, 1_000)).unwrap();
    for w in out.metrics.windows(2) {
        assert!(w[1].red >= w[0].red);
    }
}

#[test]
fn greedy_steps_bounded_by_nodes() {
    let traces = stationary(6_000, 11);
    let out = run(alphabet(), &traces, config(Mode::StreamNew, 1_000)).unwrap();
    for (p, m) in out.passes.iter().zip(&out.metrics) {
        assert!(p.greedy_steps + p.replayed + p.recovered <= m.nodes);
    }
}

#[test]
fn state_bound_stops_learning() {
    let traces = stationary(10_000, 12);
    let mut cfg = config(Mode::StreamNew, 1_000);
    cfg.state_bound = 2;
    let out = run(alphabet(), &traces, cfg).unwrap();
    assert!(out.traces_used < traces.len());
    assert!(out.hypothesis.num_states() >= 2);
}

#[test]
fn misleading_first_batch_hurts_old_stream_more() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let truth = two_state_source();
    let mut traces = sample_traces(&shifted_two_state_source(), 3_000, &mut rng);
    traces.extend(sample_traces(&truth, 27_000, &mut rng));
    let (test, solution) = test_set(&truth, 500, &mut rng);
    let score = |mode| {
        let out = run(alphabet(), &traces, config(mode, 3_000)).unwrap();
        perplexity(&out.hypothesis, &test, &solution, 1e-9)
    };
    let (old, new) = (score(Mode::StreamOld), score(Mode::StreamNew));
    assert!(new < old, "new {new} old {old}");
}

#[test]
fn rejects_foreign_traces() {
    let mut l = Learner::new(alphabet(), config(Mode::StreamNew, 10)).unwrap();
    let t = Trace::new(Alphabet::new(3), [2]).unwrap();
    assert!(l.push(&t).is_err());
}

#[test]
fn metrics_csv_has_header_and_rows() {
    let traces = stationary(2_000, 14);
    let out = run(alphabet(), &traces, config(Mode::StreamNew, 1_000)).unwrap();
    let csv = metrics_csv(&out.metrics).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), BatchMetrics::CSV_HEADER);
    assert_eq!(lines.count(), 3);
}
