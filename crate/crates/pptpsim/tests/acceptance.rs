//! Acceptance suite. Each test exercises one criterion end to end and
//! prints a single PASS line (visible with `--nocapture`); a failure panics
//! with the offending values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use pptp::consumer::{self, BanditState, PathId, PathStats};
use pptp::crypto::Keypair;
use pptp::ledger::{Ledger, Verdict};
use pptp::payments::{accept_payment, make_payment, open_channel, ChannelBook, ChannelError};
use pptp::pricing::{detect_conflict, PriceBook};
use pptp::types::{FaceId, NodeId, PerfMetric, Tokens, Window};
use pptpsim::sim::{Sim, SimConfig};
use pptpsim::{parse_scenario, RunOutput};

fn pass(criterion: u32, name: &str, detail: &str) {
    println!("[acceptance] criterion {criterion} ({name}): PASS — {detail}");
}

fn build_and_run(text: &str, seed: Option<u64>, ticks: Option<u64>) -> (Sim, RunOutput) {
    let scenario = parse_scenario(text).expect("scenario parses");
    let cfg = SimConfig::resolve(&scenario.run, seed, ticks);
    let mut sim = Sim::build(&scenario, cfg).expect("scenario builds");
    let output = sim.run();
    (sim, output)
}

const FIGURE4: &str = include_str!("../../../scenarios/figure4.scn");

fn figure4_drained() -> String {
    // Stop the demand early so every packet and payment drains before
    // settlement.
    FIGURE4.replace(
        "demand  c prefix=/video/movie1 rate=0.2 model=delay probes=1",
        "demand  c prefix=/video/movie1 rate=0.2 model=delay probes=1 until=800",
    )
}

/// Criterion 1: the worked five-hop example, exactly. Hop prices
/// (1u, 3u, 4u, 2u) plus producer 3u; the probe prices the path at 13u; per
/// delivered packet the envelope shrinks 13-12-9-5-3 and node revenues are
/// (1, 3, 4, 2, 3). Integer arithmetic, zero tolerance, under a second.
#[test]
fn criterion_1_figure4_reproduction() {
    let started = Instant::now();
    let (sim, output) = build_and_run(&figure4_drained(), None, None);

    let n = sim.counter("interests_sent");
    assert!(n > 100, "expected a substantial packet count, got {n}");
    assert_eq!(sim.counter("data_delivered"), n, "nothing lost or stranded");
    assert_eq!(sim.counter("content_lost"), 0);

    // Probe priced the path at 13u.
    let paths = sim.discovered_paths("c");
    assert_eq!(paths.len(), 1);
    assert_eq!(paths[0].total_cost, Tokens::new(13));

    // Revenues: N times (1, 3, 4, 2) for the routers, 3N for the producer.
    for (node, price) in [("r1", 1), ("r2", 3), ("r3", 4), ("r4", 2), ("p", 3)] {
        assert_eq!(
            sim.node_revenue(node),
            Tokens::new(price * n),
            "revenue of {node}"
        );
    }
    assert_eq!(sim.consumer_spent("c"), Tokens::new(13 * n));

    // Envelope splits 13 -> 12 -> 9 -> 5 -> 3, read back from the settled
    // channel balances (receiving side started at deposit 0).
    let expect: BTreeMap<(&str, &str), u64> = [
        (("c", "r1"), 13),
        (("r1", "r2"), 12),
        (("r2", "r3"), 9),
        (("r3", "r4"), 5),
        (("r4", "p"), 3),
    ]
    .into_iter()
    .collect();
    for ch in &output.summary.channels {
        let key = (ch.party_a.as_str(), ch.party_b.as_str());
        let per_packet = expect[&key];
        assert_eq!(ch.final_b.amount(), per_packet * n, "transfer on {key:?}");
    }
    assert!(output.summary.conservation.ok);

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 1.0,
        "figure-4 run took {elapsed:?}, budget is 1s"
    );
    pass(
        1,
        "figure-4 reproduction",
        &format!("N={n} packets, splits 13-12-9-5-3 exact, {elapsed:?}"),
    );
}

/// Criterion 2: the log cost-performance objective. U(v, v) = 0; orderings
/// match the v/c ratio oracle exactly; the exploitation argmax is invariant
/// under the log base.
#[test]
fn criterion_2_utility_suite() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xACC2);

    for _ in 0..100 {
        let v: u64 = rng.gen_range(1..1_000_000);
        let u = consumer::utility(v as f64, Tokens::new(v), 1.0);
        assert!(u.abs() <= 1e-9, "utility({v},{v}) = {u}");
    }

    for _ in 0..1000 {
        let v1: u64 = rng.gen_range(1..1_000_000);
        let c1: u64 = rng.gen_range(1..1_000_000);
        let v2: u64 = rng.gen_range(1..1_000_000);
        let c2: u64 = rng.gen_range(1..1_000_000);
        let u1 = consumer::utility(v1 as f64, Tokens::new(c1), 1.0);
        let u2 = consumer::utility(v2 as f64, Tokens::new(c2), 1.0);
        let oracle = (v1 as i128 * c2 as i128 - v2 as i128 * c1 as i128).signum() as i32;
        let observed = if u1 > u2 {
            1
        } else if u1 < u2 {
            -1
        } else {
            0
        };
        assert_eq!(observed, oracle, "v1={v1} c1={c1} v2={v2} c2={c2}");
    }

    // Argmax invariance under base change, over random arm sets.
    for _ in 0..300 {
        let n = rng.gen_range(2..7);
        let ratios: Vec<f64> = (0..n)
            .map(|_| {
                let v: u64 = rng.gen_range(1..1_000_000);
                let c: u64 = rng.gen_range(1..1_000_000);
                v as f64 / c as f64
            })
            .collect();
        let pick = |log: &dyn Fn(f64) -> f64| -> PathId {
            let mut bandit = BanditState::new(f64::MIN_POSITIVE, 200.0);
            for (i, r) in ratios.iter().enumerate() {
                let stats = PathStats {
                    ewma_u: Some(log(*r)),
                    pulls: 1,
                    ..PathStats::default()
                };
                bandit.arms.insert(PathId(i as u64), stats);
            }
            let mut pick_rng = ChaCha20Rng::seed_from_u64(1);
            consumer::select_path(&mut bandit, &mut pick_rng).unwrap()
        };
        let ln_choice = pick(&|x| x.ln());
        assert_eq!(ln_choice, pick(&|x| x.log2()));
        assert_eq!(ln_choice, pick(&|x| x.log10()));
    }
    pass(
        2,
        "eq-1 utility suite",
        "U(v,v)=0 x100, 1000 sign tests exact, argmax base-invariant x300",
    );
}

/// Builds a scenario with k disjoint chains of distinct lengths between one
/// consumer and one producer.
fn disjoint_paths_scenario(k: usize) -> (String, Vec<(String, String)>) {
    let mut text = String::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    let _ = writeln!(text, "node c role=consumer balance=1000000 deposit=0");
    let _ = writeln!(text, "node p role=producer balance=0 deposit=50");
    let mut links = String::new();
    let mut prices = String::new();
    let mut channels = String::new();
    for chain in 0..k {
        let mut prev = "c".to_string();
        for hop in 0..=chain {
            let router = format!("r{chain}_{hop}");
            let _ = writeln!(text, "node {router} role=router balance=500000 deposit=50");
            let _ = writeln!(links, "link {prev} {router} latency=1 bw=50 loss=0.0");
            let _ = writeln!(channels, "channel {prev} {router} dep_a=100000 dep_b=0");
            edges.push((prev.clone(), router.clone()));
            prev = router;
        }
        let _ = writeln!(links, "link {prev} p latency=1 bw=50 loss=0.0");
        let _ = writeln!(prices, "price {prev} {prev}-p price=2 window=0:100000");
        // Interior hops priced toward the producer side.
        for hop in (0..chain).rev() {
            let near = format!("r{chain}_{hop}");
            let far = format!("r{chain}_{}", hop + 1);
            let _ = writeln!(prices, "price {near} {near}-{far} price=1 window=0:100000");
        }
        let _ = writeln!(channels, "channel {prev} p dep_a=100000 dep_b=0");
        edges.push((prev, "p".to_string()));
    }
    let _ = writeln!(text, "{links}{prices}");
    let _ = writeln!(text, "content p prefix=/content/x price=3");
    let _ = writeln!(
        text,
        "demand c prefix=/content/x rate=0.2 model=delay probes={k} until=300"
    );
    let _ = writeln!(text, "{channels}");
    let _ = writeln!(text, "run ticks=400 seed=11");
    (text, edges)
}

/// All simple c-to-p paths with router-only transit.
fn enumerate_paths(edges: &[(String, String)]) -> BTreeSet<Vec<String>> {
    let mut adjacency: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (a, b) in edges {
        adjacency.entry(a.clone()).or_default().push(b.clone());
        adjacency.entry(b.clone()).or_default().push(a.clone());
    }
    fn dfs(
        adjacency: &BTreeMap<String, Vec<String>>,
        stack: &mut Vec<String>,
        found: &mut BTreeSet<Vec<String>>,
    ) {
        let current = stack.last().unwrap().clone();
        if current == "p" {
            found.insert(stack.clone());
            return;
        }
        let Some(neighbors) = adjacency.get(&current) else {
            return;
        };
        for next in neighbors {
            if stack.contains(next) || next == "c" {
                continue;
            }
            stack.push(next.clone());
            dfs(adjacency, stack, found);
            stack.pop();
        }
    }
    let mut found = BTreeSet::new();
    dfs(&adjacency, &mut vec!["c".to_string()], &mut found);
    found
}

/// Criterion 3: on topologies with k disjoint paths, k probes discover
/// exactly k distinct priced paths whose tags replay to real node
/// sequences, checked against brute-force enumeration.
#[test]
fn criterion_3_path_discovery() {
    let started = Instant::now();
    for k in 1..=4 {
        let (text, edges) = disjoint_paths_scenario(k);
        let (sim, output) = build_and_run(&text, None, None);
        assert_eq!(
            sim.counter("paths_registered"),
            k as u64,
            "k={k}: registered paths"
        );
        let oracle = enumerate_paths(&edges);
        assert_eq!(oracle.len(), k, "k={k}: oracle path count");

        let paths = sim.discovered_paths("c");
        assert_eq!(paths.len(), k, "k={k}: distinct PricedPaths");
        let mut seen = BTreeSet::new();
        for path in &paths {
            assert!(seen.insert(path.path_id), "k={k}: duplicate path id");
            let mut sequence = vec!["c".to_string()];
            sequence.extend(path.route().iter().map(|n| n.to_string()));
            assert!(
                oracle.contains(&sequence),
                "k={k}: tag sequence {sequence:?} is not a simple path"
            );
        }

        // Replay evidence: every router's keep equals its price times the
        // packets its chain carried, so directed Interests really walked
        // the advertised sequences.
        let per_path_sent: BTreeMap<PathId, u64> = output
            .summary
            .counters
            .get("interests_sent")
            .map(|_| {
                paths
                    .iter()
                    .map(|p| {
                        let sent: u64 = output
                            .csv
                            .lines()
                            .skip(1)
                            .filter(|l| l.split(',').nth(2) == Some(&p.path_id.to_string()))
                            .map(|l| l.split(',').nth(3).unwrap().parse::<u64>().unwrap())
                            .sum();
                        (p.path_id, sent)
                    })
                    .collect()
            })
            .unwrap_or_default();
        for path in &paths {
            let sent = per_path_sent[&path.path_id];
            assert!(sent > 0, "k={k}: every discovered path carried traffic");
            for item in &path.items {
                let who = item.core.advertiser.as_str();
                if who == "p" {
                    continue;
                }
                // Each router appears on exactly one disjoint chain.
                let expected: u64 = item.core.price.amount() * sent;
                assert_eq!(
                    sim.node_revenue(who),
                    Tokens::new(expected),
                    "k={k}: revenue of {who}"
                );
            }
        }
        assert!(output.summary.conservation.ok);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5s");
    pass(
        3,
        "path discovery",
        &format!("k=1..4 disjoint paths discovered and replayed, {elapsed:?}"),
    );
}

/// Criterion 4: 200 randomized honest pricing runs yield zero punishments;
/// every injected equivocation yields exactly one Punished verdict with the
/// full deposit burned.
#[test]
fn criterion_4_conflict_punishment() {
    // Honest half: random schedules, random advertisements, every pair
    // submitted.
    let mut rng = ChaCha20Rng::seed_from_u64(0xACC4);
    for run in 0..200u64 {
        let router = NodeId::new("r");
        let keys = Keypair::for_node(run, &router);
        let watcher = NodeId::new("w");
        let mut ledger = Ledger::new();
        ledger
            .register(&router, keys.public(), Tokens::new(100), Tokens::new(50))
            .unwrap();
        let mut book = PriceBook::new(router.clone());
        for _ in 0..rng.gen_range(1..8) {
            let face = FaceId(rng.gen_range(0..3));
            let price = Tokens::new(rng.gen_range(0..5));
            let start = rng.gen_range(0..400);
            let window = Window::new(start, start + rng.gen_range(0..200));
            let _ = book.set_price(face, price, window, PerfMetric::new(1, 1));
        }
        let snapshots: Vec<(FaceId, u64, u64)> = book
            .entries()
            .iter()
            .map(|e| (e.face, e.window.not_before, e.window.not_after))
            .collect();
        for (face, lo, hi) in snapshots {
            let _ = book.advertise(face, lo, &keys);
            let _ = book.advertise(face, rng.gen_range(lo..=hi), &keys);
        }
        let issued = book.issued().to_vec();
        for (i, a) in issued.iter().enumerate() {
            for b in issued.iter().skip(i + 1) {
                assert!(!detect_conflict(a, b, &ledger));
                let verdict = ledger.submit_conflict((a, b), &watcher);
                assert!(
                    matches!(verdict, Verdict::Rejected(_)),
                    "honest pair punished in run {run}: {verdict:?}"
                );
            }
        }
        assert_eq!(ledger.burned(), Tokens::ZERO);
        assert!(!ledger.is_flagged(&router));
    }

    // Injection half: two independent routers equivocate; each burns its
    // whole deposit exactly once. A duplicate proof is rejected.
    let text = "\
node c  role=consumer balance=100000 deposit=0
node r1 role=router   balance=50000  deposit=80
node r2 role=router   balance=50000  deposit=60
node p  role=producer balance=0      deposit=50
link c  r1 latency=1 bw=50 loss=0.0
link c  r2 latency=1 bw=50 loss=0.0
link r1 p  latency=1 bw=50 loss=0.0
link r2 p  latency=1 bw=50 loss=0.0
price r1 r1-p price=2 window=0:100000
price r2 r2-p price=3 window=0:100000
content p prefix=/content/x price=1
demand  c prefix=/content/x rate=0.1 model=delay probes=2 until=700
channel c  r1 dep_a=30000 dep_b=0
channel c  r2 dep_a=30000 dep_b=0
channel r1 p  dep_a=10000 dep_b=0
channel r2 p  dep_a=10000 dep_b=0
fault equivocate r1 r1-p price=9 window=100:300 at=150
fault equivocate r2 r2-p price=7 window=200:400 at=250
fault equivocate r1 r1-p price=8 window=350:500 at=400
run ticks=1000 seed=5
";
    let (sim, output) = build_and_run(text, None, None);
    assert_eq!(sim.counter("faults_injected"), 3);
    assert_eq!(sim.counter("verdict.punished"), 2, "one per equivocator");
    assert_eq!(sim.counter("verdict.rejected"), 1, "duplicate proof");
    let punished: Vec<_> = output
        .summary
        .disputes
        .iter()
        .filter(|d| d.verdict.starts_with("punished"))
        .collect();
    assert_eq!(punished.len(), 2);
    for node in &output.summary.nodes {
        match node.id.as_str() {
            "r1" => {
                assert!(node.flagged);
                assert_eq!(node.deposit_remaining, Tokens::ZERO);
            }
            "r2" => {
                assert!(node.flagged);
                assert_eq!(node.deposit_remaining, Tokens::ZERO);
            }
            _ => assert!(!node.flagged),
        }
    }
    assert_eq!(output.summary.conservation.burned, Tokens::new(80 + 60));
    assert!(output.summary.conservation.ok);
    pass(
        4,
        "conflict punishment",
        "200 honest runs clean; 2 injected equivocations, 2 burns, duplicate rejected",
    );
}

/// Criterion 5: randomized payment sequences, ten thousand accepted
/// commitments: conservation, non-negativity and strict seq monotonicity at
/// every step; every replay rejected.
#[test]
fn criterion_5_channel_safety() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xACC5);
    let a = NodeId::new("a");
    let b = NodeId::new("b");
    let ka = Keypair::for_node(1, &a);
    let kb = Keypair::for_node(1, &b);
    let mut accepted_total = 0u64;

    while accepted_total < 10_000 {
        let mut ledger = Ledger::new();
        ledger
            .register(&a, ka.public(), Tokens::new(1_000_000), Tokens::ZERO)
            .unwrap();
        ledger
            .register(&b, kb.public(), Tokens::new(1_000_000), Tokens::ZERO)
            .unwrap();
        let mut book = ChannelBook::new();
        let dep_a = rng.gen_range(0..10_000);
        let dep_b = rng.gen_range(0..10_000);
        let id = open_channel(
            &mut ledger,
            &mut book,
            &a,
            &b,
            Tokens::new(dep_a),
            Tokens::new(dep_b),
        )
        .unwrap();
        let total = dep_a + dep_b;

        for _ in 0..rng.gen_range(50..400) {
            let payer_is_a = rng.gen::<bool>();
            let amount = rng.gen_range(0..2_000);
            let (payer, payer_keys, acceptor, acceptor_keys) = if payer_is_a {
                (&a, &ka, &b, &kb)
            } else {
                (&b, &kb, &a, &ka)
            };
            let seq_before = book.get(id).unwrap().seq;
            let tx = {
                let ch = book.get(id).unwrap();
                match make_payment(ch, payer_keys, payer, Tokens::new(amount)) {
                    Ok(tx) => tx,
                    Err(ChannelError::InsufficientChannelBalance) => continue,
                    Err(e) => panic!("unexpected: {e}"),
                }
            };
            {
                let ch = book.get_mut(id).unwrap();
                accept_payment(ch, &tx, acceptor_keys, acceptor, &ledger).unwrap();
                accepted_total += 1;
                assert_eq!(ch.seq, seq_before + 1, "strict monotonicity");
                assert_eq!(ch.balance_a.amount() + ch.balance_b.amount(), total);
                // Tokens are unsigned: non-negativity holds by type; the
                // checked arithmetic above would have caught underflow.
            }
            // Every replay is rejected.
            let ch = book.get_mut(id).unwrap();
            assert_eq!(
                accept_payment(ch, &tx, acceptor_keys, acceptor, &ledger),
                Err(ChannelError::StaleSeq)
            );
        }
        assert!(ledger.conservation_holds());
    }
    pass(
        5,
        "channel safety",
        &format!("{accepted_total} accepted commitments, all invariants exact, replays rejected"),
    );
}

/// Deterministic random scenario generator used by criteria 6 and 8.
fn random_scenario(index: u64) -> String {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5EED ^ index);
    let n_routers = rng.gen_range(2..=5usize);
    let mut text = String::new();
    let _ = writeln!(text, "node c role=consumer balance=800000 deposit=10");
    let _ = writeln!(text, "node p role=producer balance=800000 deposit=100");
    for i in 0..n_routers {
        let _ = writeln!(text, "node r{i} role=router balance=800000 deposit=100");
    }
    // Spine plus random extra router-router links.
    let mut edges: Vec<(String, String)> = Vec::new();
    let spine: Vec<String> = std::iter::once("c".to_string())
        .chain((0..n_routers).map(|i| format!("r{i}")))
        .chain(std::iter::once("p".to_string()))
        .collect();
    for w in spine.windows(2) {
        edges.push((w[0].clone(), w[1].clone()));
    }
    for i in 0..n_routers {
        for j in (i + 1)..n_routers {
            if j > i + 1 && rng.gen::<f64>() < 0.3 {
                edges.push((format!("r{i}"), format!("r{j}")));
            }
        }
    }
    if n_routers >= 2 && rng.gen::<f64>() < 0.5 {
        // A second consumer attachment point makes multipath likely.
        edges.push(("c".to_string(), format!("r{}", rng.gen_range(1..n_routers))));
    }
    for (a, b) in &edges {
        let latency = rng.gen_range(1..=4);
        let bw = rng.gen_range(5..=20);
        let loss = if rng.gen::<f64>() < 0.4 {
            (rng.gen_range(0..80) as f64) / 1000.0
        } else {
            0.0
        };
        let _ = writeln!(text, "link {a} {b} latency={latency} bw={bw} loss={loss}");
    }
    // Every router prices all of its links.
    let mut first_price: Option<(String, String, u64)> = None;
    for (a, b) in &edges {
        for (node, peer) in [(a, b), (b, a)] {
            if node.starts_with('r') {
                let price = rng.gen_range(0..=5u64);
                let _ = writeln!(
                    text,
                    "price {node} {node}-{peer} price={price} window=0:1000000"
                );
                if first_price.is_none() && price != 9 {
                    first_price = Some((node.clone(), peer.clone(), price));
                }
            }
        }
    }
    let _ = writeln!(
        text,
        "content p prefix=/content/x price={}",
        rng.gen_range(0..=5)
    );
    let model = if rng.gen::<bool>() {
        "delay"
    } else {
        "throughput"
    };
    let rate = (rng.gen_range(5..=20) as f64) / 100.0;
    let probes = rng.gen_range(2..=4);
    let _ = writeln!(
        text,
        "demand c prefix=/content/x rate={rate} model={model} probes={probes}"
    );
    for (a, b) in &edges {
        let _ = writeln!(text, "channel {a} {b} dep_a=50000 dep_b=50000");
    }
    // Roughly a quarter of the scenarios inject an equivocation.
    if index % 4 == 0 {
        if let Some((node, peer, _)) = first_price {
            let _ = writeln!(
                text,
                "fault equivocate {node} {node}-{peer} price=9 window=100:200 at=150"
            );
        }
    }
    let _ = writeln!(text, "run ticks=300 seed={index}");
    text
}

/// Criterion 6: over 50 random seeded scenarios, tokens minted equal final
/// balances plus unburned deposits plus burned, exactly, with no escrow
/// left after settlement.
#[test]
fn criterion_6_token_conservation() {
    for index in 0..50u64 {
        let text = random_scenario(index);
        let (_, output) = build_and_run(&text, None, None);
        let c = &output.summary.conservation;
        assert!(c.ok, "scenario {index}: conservation flag");
        assert_eq!(c.escrow_remaining, Tokens::ZERO, "scenario {index}: escrow");
        let recomputed = c
            .final_balances
            .checked_add(c.deposits_unburned)
            .and_then(|t| t.checked_add(c.burned))
            .unwrap();
        assert_eq!(recomputed, c.minted, "scenario {index}: exact equation");
        if text.contains("fault equivocate") {
            assert!(
                output
                    .summary
                    .disputes
                    .iter()
                    .any(|d| d.verdict.starts_with("punished")),
                "scenario {index}: injected fault was punished"
            );
        }
    }
    pass(
        6,
        "whole-system conservation",
        "50 random scenarios: minted = balances + deposits + burned, escrow drained",
    );
}

/// Criterion 7: stationary two-path bandit with utility gap 0.5 and the
/// default schedule. Over 100 seeds the better path dominates rounds
/// 801..1000 with mean frequency at least 0.9.
#[test]
fn criterion_7_bandit_convergence() {
    let started = Instant::now();
    const SEEDS: u64 = 100;
    const ROUNDS: u64 = 1000;
    let mut tail_best = 0u64;
    let mut tail_total = 0u64;
    for seed in 0..SEEDS {
        let mut bandit = BanditState::new(0.2, 200.0);
        // Equal priors; the gap (1.5 vs 1.0) must be discovered.
        for id in [1u64, 2] {
            bandit.arms.insert(PathId(id), PathStats::default());
        }
        let truth = |id: PathId| if id == PathId(1) { 1.5 } else { 1.0 };
        let mut rng = ChaCha20Rng::seed_from_u64(0xACC7 ^ seed);
        for round in 0..ROUNDS {
            let chosen = consumer::select_path(&mut bandit, &mut rng).unwrap();
            consumer::update_estimate(&mut bandit, chosen, truth(chosen), 0.3).unwrap();
            if round >= 800 {
                tail_total += 1;
                if chosen == PathId(1) {
                    tail_best += 1;
                }
            }
        }
    }
    let frequency = tail_best as f64 / tail_total as f64;
    assert!(
        frequency >= 0.9,
        "mean tail selection frequency {frequency:.4} < 0.9"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30s");
    pass(
        7,
        "bandit convergence",
        &format!("tail frequency {frequency:.4} over 100 seeds, {elapsed:?}"),
    );
}

/// Criterion 8: the same scenario and seed produce byte-identical CSV and
/// summary outputs, including under loss, faults and multipath exploration.
#[test]
fn criterion_8_determinism() {
    let cases = [
        figure4_drained(),
        include_str!("../../../scenarios/equivocation.scn").to_string(),
        random_scenario(3),
        random_scenario(8),
    ];
    for (i, text) in cases.iter().enumerate() {
        let (_, first) = build_and_run(text, Some(99), None);
        let (_, second) = build_and_run(text, Some(99), None);
        assert_eq!(first.csv, second.csv, "case {i}: CSV bytes");
        assert_eq!(
            first.summary_text, second.summary_text,
            "case {i}: summary bytes"
        );
        assert!(!first.csv.is_empty());
    }
    pass(
        8,
        "determinism",
        "4 scenarios x 2 runs: byte-identical CSV and summary",
    );
}
