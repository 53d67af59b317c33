use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;

use fairfactory::adversary::{AdversaryConfig, ForgePolicy, Strategy};
use fairfactory::factory::{pipeline_round, ClusterConfig, Mode, RoundInputs, RuleConfig, SeedPolicy, Stage};
use fairfactory::ids::{MessageId, NodeId};
use fairfactory::ordering::BallotReading;
use fairfactory::scenario::Scenario;
use fairfactory::simnet::{build_ballots_from_log, ClientWorkload, LatencyModel};

fn scenario(n: usize, f: usize, mode: Mode, rule: RuleConfig) -> Scenario {
    let mut s = Scenario::new(n, f, mode, rule);
    s.duration = 3.0;
    s.seed = 11;
    s
}

fn all_rules() -> [RuleConfig; 4] {
    [
        RuleConfig::fifo_voting(1.0),
        RuleConfig::RankedPairs,
        RuleConfig::FifoTimestamping,
        RuleConfig::Random { seed: SeedPolicy::Contributions },
    ]
}

#[test]
fn honest_logs_agree_and_cover_every_message() {
    for rule in all_rules() {
        for mode in [Mode::Original, Mode::Optimized] {
            let mut s = scenario(4, 1, mode, rule);
            s.workload.count = Some(300);
            let run = s.run().unwrap();
            let out = &run.sim.output;
            let logs: Vec<_> = out.honest.iter().map(|h| &out.decision_logs[h]).collect();
            for pair in logs.windows(2) {
                assert_eq!(pair[0].first_conflict(pair[1]), None, "{} {mode:?}", rule.name());
                assert_eq!(pair[0].len(), pair[1].len());
            }
            // Every sent message is committed exactly once, and nothing else is.
            let mut seen = BTreeMap::new();
            for d in out.decisions().entries() {
                for m in d.output.flatten() {
                    *seen.entry(m).or_insert(0) += 1;
                }
            }
            let sent: BTreeSet<MessageId> = out.log.sends().keys().copied().collect();
            assert_eq!(seen.keys().copied().collect::<BTreeSet<_>>(), sent, "{} {mode:?}", rule.name());
            assert!(seen.values().all(|&c| c == 1));
            assert_eq!(run.summary().committed, 300);
        }
    }
}

#[test]
fn modes_commit_the_same_output_for_the_same_inputs() {
    let receptions: Vec<_> = (0..6u64)
        .flat_map(|k| (0..4u32).map(move |n| (NodeId(n), MessageId::numbered(k), 1_000 * (k + n as u64 * (k % 3)))))
        .collect();
    let inputs = RoundInputs { receptions, start_us: 50_000 };
    for rule in all_rules() {
        let outputs: Vec<_> = [Mode::Original, Mode::Optimized]
            .into_iter()
            .map(|mode| {
                let mut cfg = ClusterConfig::new(4, 1, mode, rule);
                cfg.latency = LatencyModel::uniform_ms(1, 10);
                pipeline_round(cfg, &inputs).unwrap().committed.unwrap().output
            })
            .collect();
        assert_eq!(outputs[0], outputs[1], "{}", rule.name());
        assert_eq!(outputs[0].len(), 6);
    }
}

#[test]
fn single_message_round_takes_the_stage_sum() {
    let (d, c) = (5_000u64, 100_000u64);
    let inputs =
        RoundInputs { receptions: (0..4).map(|n| (NodeId(n), MessageId::numbered(1), 0)).collect(), start_us: 0 };
    // The certificate lands one hop before every node has applied the commit.
    for (mode, certified) in [(Mode::Original, 3 * d + 2 * c), (Mode::Optimized, 2 * d + c)] {
        let mut cfg = ClusterConfig::new(4, 1, mode, RuleConfig::fifo_voting(1.0));
        cfg.latency = LatencyModel::fixed_us(d);
        cfg.ordering_delay_us = c;
        let trace = pipeline_round(cfg, &inputs).unwrap();
        assert_eq!(trace.commit_time(), Some(certified), "{mode:?}");
        assert_eq!(trace.last(Stage::Applied), Some(certified + d), "{mode:?}");
    }
}

#[test]
fn optimized_mode_is_faster_at_equal_throughput() {
    let mut means = Vec::new();
    for mode in [Mode::Original, Mode::Optimized] {
        let mut s = scenario(7, 2, mode, RuleConfig::fifo_voting(1.0));
        s.duration = 10.0;
        let run = s.run().unwrap();
        assert!(run.sim.perf.accounting_holds(), "{mode:?}");
        means.push((run.sim.perf.mean_latency_us.unwrap(), run.sim.perf.throughput));
    }
    let (orig, opt) = (means[0], means[1]);
    assert!(opt.0 < 0.7 * orig.0, "optimized {} ms vs original {} ms", opt.0 / 1e3, orig.0 / 1e3);
    assert!((opt.1 - orig.1).abs() / orig.1 < 0.1);
}

#[test]
fn latency_accounting_is_an_exact_identity() {
    let run = scenario(4, 1, Mode::Optimized, RuleConfig::FifoTimestamping).run().unwrap();
    let perf = &run.sim.perf;
    assert!(perf.accounting_holds());
    for acc in perf.accounts.values() {
        // Only the pool wait may be negative: a message can reach a view after its round began.
        let st = acc.stages();
        assert!(st[0] >= 0 && st[2..].iter().all(|&s| s >= 0));
        assert_eq!(acc.stages().iter().sum::<i64>(), acc.latency_us() as i64);
        assert!(acc.first_arrival_us >= acc.sent_us);
    }
}

#[test]
fn ballots_follow_the_reception_log() {
    let mut s = scenario(4, 1, Mode::Optimized, RuleConfig::fifo_voting(1.0));
    s.latency = LatencyModel::uniform_ms(2, 9);
    let run = s.run().unwrap();
    let log = &run.sim.output.log;
    for entry in log.entries() {
        let sent = log.sent(&entry.message).unwrap();
        assert!(entry.arrival_us >= sent + 2_000 && entry.arrival_us <= sent + 9_000);
    }
    for node in log.nodes() {
        let ballot = build_ballots_from_log(log, node);
        let times: Vec<_> = ballot.order().iter().map(|m| log.arrival(node, m).unwrap()).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn sub_bound_network_admits_violations() {
    let mut s =
        Scenario::new(3, 1, Mode::Optimized, RuleConfig::FifoVoting { gamma: 1.0, reading: BallotReading::Pairwise });
    s.duration = 5.0;
    s.seed = 7;
    s.workload = ClientWorkload { rate: 300.0, ..ClientWorkload::default() };
    s.adversary = AdversaryConfig::honest().with(NodeId(2), Strategy::BallotForge { policy: ForgePolicy::Reverse });
    assert!(s.fault_bound_warning().is_some());
    let run = s.run().unwrap();
    assert!(!run.violations.is_empty());
    assert_eq!(run.summary().divergences, 0);
}

fn fairsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairsim"))
}

#[test]
fn cli_run_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = scenario(4, 1, Mode::Optimized, RuleConfig::fifo_voting(1.0));
    s.duration = 1.0;
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, s.to_json()).unwrap();
    let out = dir.path().join("run");
    let status = fairsim().args(["run", "--scenario"]).arg(&path).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    for f in ["decisions.csv", "reception_log.csv", "trace.csv", "violations.csv", "perf.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let audit = fairsim().args(["audit", "--gamma", "1", "--artifacts"]).arg(&out).output().unwrap();
    assert_eq!(audit.status.code(), Some(0));

    // Swap the first and last committed messages and the audit must object.
    let csv = std::fs::read_to_string(out.join("decisions.csv")).unwrap();
    let mut rows: Vec<Vec<String>> = csv.lines().map(|l| l.split(',').map(str::to_string).collect()).collect();
    let last = rows.len() - 1;
    let (first_id, last_id) = (rows[1][3].clone(), rows[last][3].clone());
    rows[1][3] = last_id;
    rows[last][3] = first_id;
    let tampered: String = rows.iter().map(|r| r.join(",") + "\n").collect();
    std::fs::write(out.join("decisions.csv"), tampered).unwrap();
    let audit = fairsim().args(["audit", "--gamma", "1", "--artifacts"]).arg(&out).output().unwrap();
    assert_eq!(audit.status.code(), Some(1), "{}", String::from_utf8_lossy(&audit.stderr));
}

#[test]
fn cli_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"nodes": 4, "faults": 1, "rule": {"kind": "fifo_voting", "gamma": 1.0}, "mode": "optimized", "node_count": 4}"#).unwrap();
    let out = fairsim().args(["run", "--scenario"]).arg(&path).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("node_count"));
}
