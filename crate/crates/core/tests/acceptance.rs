use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;

use pdfa_stream::eval::{discover_scenarios, load_scenario, run_scenario, ResultRow, ScenarioBundle};
use pdfa_stream::heuristics::{
    css_cellwise_consistency, css_consistency, HeuristicConfig, HeuristicKind,
};
use pdfa_stream::pac::f_m0;
use pdfa_stream::sketch::{hash::mix64, CountMinSketch, RowHashes, SketchContext, SketchLayout, SketchStack};
use pdfa_stream::streamer::{self, Mode, StreamConfig};
use pdfa_stream::synth::{self, SynthParams, DESK_TEST, DESK_TRAIN};
use pdfa_stream::tree::{GrowthPolicy, PrefixTree, TreeConfig};
use pdfa_stream::{Alphabet, Symbol, Trace};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cms_error_bound() -> Outcome {
    let (w, d) = (272, 5);
    let m = 10_000u64;
    let beta = std::f64::consts::E / w as f64;
    let universe = 2_000u64;
    let zipf = Zipf::new(universe, 1.1).unwrap();
    let (mut queries, mut over) = (0u64, 0u64);
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cms = CountMinSketch::new(Arc::new(RowHashes::new(w, d, seed)));
        let mut truth: HashMap<u64, u64> = HashMap::new();
        for _ in 0..m {
            let key = mix64(zipf.sample(&mut rng) as u64);
            cms.store(key);
            *truth.entry(key).or_default() += 1;
        }
        for rank in 1..=universe {
            let key = mix64(rank);
            let exact = truth.get(&key).copied().unwrap_or(0);
            queries += 1;
            if cms.retrieve(key) as f64 > exact as f64 + beta * m as f64 {
                over += 1;
            }
        }
    }
    let frac = over as f64 / queries as f64;
    outcome(frac <= 0.03, format!("{over}/{queries} queries over the bound, fraction {frac:.5} (limit 0.03)"))
}

fn random_tree(rng: &mut impl Rng) -> PrefixTree {
    let sigma = rng.gen_range(2..5);
    let alphabet = Alphabet::new(sigma);
    let mut t = PrefixTree::new(TreeConfig {
        alphabet,
        threshold: rng.gen_range(1..4),
        growth: GrowthPolicy::Unbounded,
        sketches: Some(SketchLayout::new(32, 2, rng.gen_range(1..4))),
        seed: rng.gen(),
    })
    .unwrap();
    let limit = rng.gen_range(10..=500);
    // a trace of length < 8 adds at most 8 nodes
    for _ in 0..2000 {
        if t.len() + 8 > limit {
            break;
        }
        let len = rng.gen_range(0..8);
        let raw: Vec<u32> = (0..len).map(|_| rng.gen_range(0..sigma)).collect();
        t.ingest(&Trace::new(alphabet, raw).unwrap());
    }
    t
}

fn merge_undo_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut same, mut refinements, mut max_nodes) = (0, 0, 0);
    let episodes = 1000;
    for _ in 0..episodes {
        let mut t = random_tree(&mut rng);
        max_nodes = max_nodes.max(t.len());
        let h0 = t.state_hash();
        let mut applied = Vec::new();
        for _ in 0..rng.gen_range(1..60) {
            let blues = t.blue_nodes();
            if blues.is_empty() {
                break;
            }
            let blue = blues[rng.gen_range(0..blues.len())];
            let r = if rng.gen_bool(0.6) {
                let reds = t.red_nodes();
                t.merge(reds[rng.gen_range(0..reds.len())], blue)
            } else {
                t.promote(blue)
            };
            applied.push(r.unwrap());
        }
        refinements += applied.len();
        let ok = applied.iter().rev().all(|r| t.undo(r).is_ok());
        if ok && t.state_hash() == h0 && t.applied_count() == 0 {
            same += 1;
        }
    }
    outcome(
        same == episodes,
        format!("{same}/{episodes} episodes restored, {refinements} refinements, trees up to {max_nodes} nodes"),
    )
}

fn fill(ctx: &mut SketchContext, traces: &[Trace]) -> SketchStack {
    let mut stack = ctx.new_stack();
    for t in traces {
        let s = t.symbols();
        ctx.record(&mut stack, s, s.len() == 1);
    }
    stack
}

fn false_reject_rate() -> Outcome {
    let params = SynthParams { states: 8, alphabet: 4, ..SynthParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = synth::random_pdfa(&params, &mut rng).unwrap();
    let n = 1000;
    let trials = 1000;
    let mut rejected = 0;
    for i in 0..trials {
        let a = synth::sample_traces(&model, n, &mut rng);
        let b = synth::sample_traces(&model, n, &mut rng);
        let mut ctx = SketchContext::new(SketchLayout::new(128, 4, 3), i).unwrap();
        let (sa, sb) = (fill(&mut ctx, &a), fill(&mut ctx, &b));
        if !css_consistency(&sa, n as u64, &sb, n as u64, &ctx, 0.05, 0.0).consistent {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / trials as f64;
    outcome(rate <= 0.13, format!("{rejected}/{trials} identical pairs rejected, rate {rate:.3} (limit 0.13)"))
}

fn scenarios() -> Vec<ScenarioBundle> {
    if let Some(dir) = std::env::var_os("PAUTOMAC_DIR").map(PathBuf::from) {
        let names = discover_scenarios(&dir).expect("PAUTOMAC_DIR is readable");
        return names
            .iter()
            .map(|n| load_scenario(&dir, n).expect("scenario loads"))
            .collect();
    }
    synth::desk_suite()
        .into_iter()
        .map(|(name, params, seed)| synth::scenario(&name, &params, DESK_TRAIN, DESK_TEST, seed).unwrap().0)
        .collect()
}

fn heuristic(kind: HeuristicKind, future_len: usize) -> HeuristicConfig {
    HeuristicConfig { future_len, ..HeuristicConfig::new(kind) }
}

fn stream(mode: Mode, h: HeuristicConfig) -> StreamConfig {
    StreamConfig { batch_size: 5000, threshold: 25, ..StreamConfig::new(mode, h) }
}

struct SuiteRun {
    batch_css: Vec<ResultRow>,
    minhash: [Vec<ResultRow>; 3],
    ktails: [Vec<ResultRow>; 2],
    symbols: Vec<usize>,
}

fn run_suite(bundles: &[ScenarioBundle]) -> SuiteRun {
    let css3 = heuristic(HeuristicKind::Css, 3);
    let mut minhash = heuristic(HeuristicKind::CssMinhash, 4);
    minhash.minhash_len = 2;
    let mut ktails = HeuristicConfig::new(HeuristicKind::AlergiaKtails);
    ktails.k = 3;
    let mut run = SuiteRun {
        batch_css: Vec::new(),
        minhash: Default::default(),
        ktails: Default::default(),
        symbols: Vec::new(),
    };
    let go = |b: &ScenarioBundle, c: StreamConfig| {
        let row = run_scenario(b, c, 1e-9).unwrap().0;
        println!(
            "  {:<6} {:<10} {:<14} F={} ratio={:.4} states={} mem={}B {}ms",
            row.scenario, row.mode, row.heuristic, row.f, row.ratio(), row.states, row.peak_mem_bytes, row.wall_ms
        );
        row
    };
    for b in bundles {
        run.symbols.push(b.train.iter().map(|t| t.body().len()).sum());
        run.batch_css.push(go(b, stream(Mode::Batch, css3)));
        for (i, mode) in Mode::ALL.into_iter().enumerate() {
            run.minhash[i].push(go(b, stream(mode, minhash)));
        }
        run.ktails[0].push(go(b, stream(Mode::StreamOld, ktails)));
        run.ktails[1].push(go(b, stream(Mode::StreamNew, ktails)));
    }
    run
}

fn mode_index(mode: Mode) -> usize {
    Mode::ALL.iter().position(|&m| m == mode).unwrap()
}

fn batch_quality(run: &SuiteRun) -> Outcome {
    let ratios: Vec<f64> = run.batch_css.iter().map(ResultRow::ratio).collect();
    let good = ratios.iter().filter(|&&r| r <= 1.5).count();
    let need = (4 * ratios.len()).div_ceil(5);
    outcome(
        ratios.len() >= 5 && good >= need,
        format!("{good}/{} scenarios within 1.5x of true perplexity, ratios {}", ratios.len(), fmt_list(&ratios)),
    )
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn streaming_order(run: &SuiteRun) -> Outcome {
    let old = mean(run.minhash[mode_index(Mode::StreamOld)].iter().map(|r| r.perplexity));
    let new = mean(run.minhash[mode_index(Mode::StreamNew)].iter().map(|r| r.perplexity));
    let wins = run.ktails[1]
        .iter()
        .zip(&run.ktails[0])
        .filter(|(n, o)| n.perplexity < o.perplexity)
        .count();
    let total = run.ktails[0].len();
    outcome(
        new <= old && 2 * wins > total,
        format!("css-minhash mean perplexity new {new:.4} vs old {old:.4}; k-tails new better on {wins}/{total}"),
    )
}

fn memory_trend(run: &SuiteRun) -> Outcome {
    let batch = &run.minhash[mode_index(Mode::Batch)];
    let new = &run.minhash[mode_index(Mode::StreamNew)];
    let mut checked = 0;
    let mut ok = true;
    let mut ratios = Vec::new();
    for ((b, n), &syms) in batch.iter().zip(new).zip(&run.symbols) {
        if syms <= 100_000 {
            continue;
        }
        checked += 1;
        let r = n.peak_mem_bytes as f64 / b.peak_mem_bytes as f64;
        ratios.push(r);
        ok &= r <= 0.25;
    }
    outcome(
        ok && checked > 0,
        format!("{checked} scenarios above 1e5 symbols, stream-new/batch memory {}", fmt_list(&ratios)),
    )
}

fn f_shape() -> Outcome {
    let mut grid: Vec<u64> = (1..=10_000).collect();
    let mut m = 10_000f64;
    while m < 1e7 {
        m *= 1.01;
        grid.push((m as u64).min(10_000_000));
    }
    grid.dedup();
    let mut failures = Vec::new();
    for mu in [0.1, 0.3, 0.5, 0.9] {
        for alpha in [0.05, 0.2] {
            let f: Vec<f64> = grid.iter().map(|&m| f_m0(m as f64, mu, alpha)).collect();
            let peak = (0..f.len()).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
            let interior = peak > 0 && peak + 1 < f.len();
            let rising = f[..=peak].windows(2).all(|w| w[1] >= w[0]);
            let falling = f[peak..].windows(2).all(|w| w[1] < w[0]);
            let tail = *f.last().unwrap();
            if !(interior && rising && falling && tail < 1e-6) {
                failures.push(format!(
                    "mu={mu} alpha={alpha}: interior={interior} rising={rising} falling={falling} f(1e7)={tail:.3e}"
                ));
            }
        }
    }
    let pass = failures.is_empty();
    let detail = if pass {
        "all 8 curves peak once and fall below 1e-6 by m=1e7".to_string()
    } else {
        failures.join("; ")
    };
    outcome(pass, detail)
}

type Dist = Vec<(Vec<u32>, f64)>;

fn random_dist(rng: &mut impl Rng, support: &[Vec<u32>]) -> Vec<f64> {
    let w: Vec<f64> = support.iter().map(|_| rng.gen::<f64>().powi(3)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Largest gap between the two distributions over any prefix, final marker included.
fn prefix_distance(support: &[Vec<u32>], p: &[f64], q: &[f64], sigma: u32) -> f64 {
    let mut diff: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for (s, (a, b)) in support.iter().zip(p.iter().zip(q)) {
        let mut full = s.clone();
        full.push(sigma);
        for k in 1..=full.len() {
            *diff.entry(full[..k].to_vec()).or_default() += a - b;
        }
    }
    diff.values().fold(0.0, |m, d| m.max(d.abs()))
}

fn distinguishable_pairs(count: usize) -> (u32, Vec<(Dist, Dist)>) {
    let sigma = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pairs = Vec::new();
    while pairs.len() < count {
        let support: Vec<Vec<u32>> = (0..40)
            .map(|_| (0..rng.gen_range(0..5)).map(|_| rng.gen_range(0..sigma)).collect())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let p = random_dist(&mut rng, &support);
        let r = random_dist(&mut rng, &support);
        let lambda = rng.gen_range(0.2..1.0);
        let q: Vec<f64> = p.iter().zip(&r).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
        if prefix_distance(&support, &p, &q, sigma) >= 0.2 {
            let zip = |v: &[f64]| support.iter().cloned().zip(v.iter().copied()).collect();
            pairs.push((zip(&p), zip(&q)));
        }
    }
    (sigma, pairs)
}

fn sample_stack(ctx: &mut SketchContext, dist: &Dist, sigma: u32, m: usize, rng: &mut impl Rng) -> SketchStack {
    let alphabet = Alphabet::new(sigma);
    let index = WeightedIndex::new(dist.iter().map(|d| d.1)).unwrap();
    let mut counts = vec![0u64; dist.len()];
    for _ in 0..m {
        counts[index.sample(rng)] += 1;
    }
    let mut stack = ctx.new_stack();
    for ((s, _), &c) in dist.iter().zip(&counts) {
        if c > 0 {
            let t = Trace::new(alphabet, s.iter().copied()).unwrap();
            let syms = t.symbols();
            ctx.record_n(&mut stack, syms, syms.len() == 1, c);
        }
    }
    stack
}

fn cellwise_convergence() -> Outcome {
    let (sigma, pairs) = distinguishable_pairs(100);
    let layout = SketchLayout::new(128, 4, 3);
    let agreement = |m: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
        pairs
            .iter()
            .enumerate()
            .filter(|(i, (p, q))| {
                let mut ctx = SketchContext::new(layout, *i as u64).unwrap();
                let a = sample_stack(&mut ctx, p, sigma, m, &mut rng);
                let b = sample_stack(&mut ctx, q, sigma, m, &mut rng);
                let n = m as u64;
                let full = css_consistency(&a, n, &b, n, &ctx, 0.05, 0.0);
                let cell = css_cellwise_consistency(&a, n, &b, n, &layout, 0.05, 0.0).unwrap();
                full.consistent == cell.consistent
            })
            .count()
    };
    let (small, large) = (agreement(10_000), agreement(100_000));
    outcome(
        large >= 90 && large >= small,
        format!("agreement {small}/100 at m=1e4, {large}/100 at m=1e5"),
    )
}

fn replay_efficiency() -> Outcome {
    let (name, params, seed) = synth::desk_suite().remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = synth::random_pdfa(&params, &mut rng).unwrap();
    let traces = synth::sample_traces(&model, 10 * 5000, &mut rng);
    let mut h = heuristic(HeuristicKind::CssMinhash, 4);
    h.minhash_len = 2;
    let out = streamer::run(model.alphabet, &traces, stream(Mode::StreamNew, h)).unwrap();
    let rates: Vec<f64> = out.passes[2..10]
        .iter()
        .map(|p| p.replayed as f64 / p.replay_queue.max(1) as f64)
        .collect();
    let avg = mean(rates.iter().copied());
    outcome(avg >= 0.9, format!("source {name}, replay rate per batch 3..10 {} mean {avg:.3}", fmt_list(&rates)))
}

/// Exact-count layered test on plain maps.
fn exact_css(t1: &[Trace], t2: &[Trace], future_len: usize, alpha: f64) -> (bool, usize) {
    let prefixes = |ts: &[Trace], k: usize| {
        let mut m: BTreeMap<Vec<Symbol>, u64> = BTreeMap::new();
        for t in ts {
            let s = t.symbols();
            *m.entry(s[..k.min(s.len())].to_vec()).or_default() += 1;
        }
        m
    };
    let (n1, n2) = (t1.len() as f64, t2.len() as f64);
    let bound = (0.5 * (2.0 / alpha).ln()).sqrt() * (n1.powf(-0.5) + n2.powf(-0.5));
    for k in 1..=future_len {
        let (m1, m2) = (prefixes(t1, k), prefixes(t2, k));
        for key in m1.keys().chain(m2.keys()).collect::<BTreeSet<_>>() {
            let f1 = *m1.get(key).unwrap_or(&0) as f64 / n1;
            let f2 = *m2.get(key).unwrap_or(&0) as f64 / n2;
            if (f1 - f2).abs() >= bound {
                return (false, k);
            }
        }
    }
    (true, future_len)
}

fn random_traces(rng: &mut impl Rng, sigma: u32, n: usize, bias: f64) -> Vec<Trace> {
    let alphabet = Alphabet::new(sigma);
    (0..n)
        .map(|_| {
            let mut raw = Vec::new();
            while raw.len() < 8 && rng.gen_bool(0.7) {
                raw.push(if rng.gen_bool(bias) { 0 } else { rng.gen_range(1..sigma) });
            }
            Trace::new(alphabet, raw).unwrap()
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pairs = 500;
    let (mut agree, mut rejects) = (0, 0);
    for i in 0..pairs {
        let sigma = rng.gen_range(2..5);
        let future_len = rng.gen_range(1..5);
        let (n, bias) = (rng.gen_range(20..1500), rng.gen_range(0.2..0.8));
        let t1 = random_traces(&mut rng, sigma, n, bias);
        let (n, bias) = (rng.gen_range(20..1500), rng.gen_range(0.2..0.8));
        let t2 = random_traces(&mut rng, sigma, n, bias);
        let mut probe = SketchContext::new(SketchLayout::new(8, 1, future_len), i).unwrap();
        fill(&mut probe, &t1);
        fill(&mut probe, &t2);
        let keys = (0..future_len).map(|l| probe.registries().layer(l).len()).max().unwrap();
        let mut ctx = SketchContext::new(SketchLayout::new(4 * keys, 4, future_len), i).unwrap();
        let (a, b) = (fill(&mut ctx, &t1), fill(&mut ctx, &t2));
        let v = css_consistency(&a, t1.len() as u64, &b, t2.len() as u64, &ctx, 0.05, 0.0);
        let exact = exact_css(&t1, &t2, future_len, 0.05);
        if (v.consistent, v.layers_evaluated) == exact {
            agree += 1;
        }
        if !exact.0 {
            rejects += 1;
        }
    }
    outcome(
        agree == pairs,
        format!("{agree}/{pairs} verdicts match exact counts ({rejects} exact rejects)"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id, name, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!("  [{id}] {} in {:.1}s", if o.pass { "pass" } else { "fail" }, start.elapsed().as_secs_f64());
        results.push((id, name, o, start.elapsed().as_secs_f64()));
    };
    timed(1, "sketch error bound", &cms_error_bound);
    timed(2, "merge/undo identity", &merge_undo_identity);
    timed(3, "hoeffding false-reject rate", &false_reject_rate);
    let start = Instant::now();
    let bundles = scenarios();
    println!("scenario runs:");
    let suite = run_suite(&bundles);
    let suite_secs = start.elapsed().as_secs_f64();
    timed(4, "batch quality", &|| batch_quality(&suite));
    timed(5, "streaming order", &|| streaming_order(&suite));
    timed(6, "memory trend", &|| memory_trend(&suite));
    timed(7, "f(m0) shape", &f_shape);
    timed(8, "cell-wise convergence", &cellwise_convergence);
    timed(9, "replay efficiency", &replay_efficiency);
    timed(10, "oracle equivalence", &oracle_equivalence);
    println!("scenario suite took {suite_secs:.1}s");
    let mut failed = 0;
    for (id, name, o, secs) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} {id:>2} {name}: {} [{secs:.1}s]", o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
