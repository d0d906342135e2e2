use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn netrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netrecon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = netrecon(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn sample_covers_a_four_vertex_path() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("path.edges");
    let attrs = dir.path().join("attrs.txt");
    write(&net, "0 1\n1 2\n2 3\n");
    write(&attrs, "0 1\n1 2\n2 3\n3 4\n");
    let out = dir.path().join("s");
    ok(&["sample", "--network", p(&net), "--attributes", p(&attrs), "--respondents", "4", "--seed", "11", "--out", p(&out)]);
    let forest = fs::read_to_string(out.join("forest.txt")).unwrap();
    let respondents: Vec<&str> = forest.lines().filter(|l| l.split_whitespace().nth(2) == Some("R")).collect();
    assert_eq!(respondents.len(), 4);
    let truth = fs::read_to_string(out.join("truth.txt")).unwrap();
    let mut covered: Vec<usize> = forest
        .lines()
        .zip(truth.lines())
        .filter(|(f, _)| f.split_whitespace().nth(2) == Some("R"))
        .map(|(_, t)| t.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    covered.sort_unstable();
    assert_eq!(covered, vec![0, 1, 2, 3]);
}

#[test]
fn reconstruct_to_occurrence_count_keeps_every_occurrence() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.edges");
    let attrs = dir.path().join("attrs.txt");
    write(&net, "0 1\n0 2\n1 2\n2 3\n3 4\n4 5\n");
    write(&attrs, "0 1\n1 1\n2 2\n3 2\n4 3\n5 3\n");
    let s = dir.path().join("s");
    ok(&["sample", "--network", p(&net), "--attributes", p(&attrs), "--respondents", "3", "--seed", "2", "--out", p(&s)]);
    let occurrences = fs::read_to_string(s.join("forest.txt")).unwrap().lines().count();
    let r = dir.path().join("r");
    ok(&[
        "reconstruct",
        "--forest",
        p(&s.join("forest.txt")),
        "--attributes",
        p(&attrs),
        "--n-t",
        &occurrences.to_string(),
        "--out",
        p(&r),
    ]);
    let prov = fs::read_to_string(r.join("provenance.txt")).unwrap();
    let pairs: Vec<(usize, usize)> = prov
        .lines()
        .map(|l| {
            let mut it = l.split_whitespace().map(|t| t.parse::<usize>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert_eq!(pairs.len(), occurrences);
    assert!(pairs.iter().all(|(g, o)| g == o));
    assert_eq!(fs::read_to_string(r.join("coalesce_log.csv")).unwrap().lines().count(), 1);
}

#[test]
fn metrics_on_hand_built_merge_log() {
    // occurrences: 2, 2', 23, 23', 31, 31', 27, 28'
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.txt");
    let log = dir.path().join("log.csv");
    write(&truth, "0 2\n1 2\n2 23\n3 23\n4 31\n5 31\n6 27\n7 28\n");
    write(
        &log,
        "event,members_a,members_b,probability\n0,0,1,0.5\n1,2,3,0.5\n2,4,5,1\n3,6,7,0.25\n",
    );
    let out = ok(&["metrics", "--truth", p(&truth), "--log", p(&log)]);
    assert_eq!(out, "metric,value\ncoalescing_precision,0.75\n");
}

#[test]
fn missing_input_names_the_path() {
    let out = netrecon(&["communities", "--network", "/nonexistent/net.edges", "--out", "/tmp/x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/net.edges"));
}

#[test]
fn malformed_input_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("bad.edges");
    write(&net, "0 1\n1 two\n");
    let out = netrecon(&["communities", "--network", p(&net), "--out", p(&dir.path().join("x"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.edges") && err.contains("line 2"), "{err}");
}

const SMALL: &str = "\
n = 300
k_avg = 8
k_max = 16
c_min = 10
c_max = 30
g = 30, n
method = rpm, hpm
repetitions = 2
ensemble = 3
sir_runs = 10
budgets = 0.02
";

#[test]
fn run_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    write(&cfg, SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(&["run", "--config", p(&cfg), "--out", p(&a), "--seed", "5", "--jobs", "1"]);
    ok(&["run", "--config", p(&cfg), "--out", p(&b), "--seed", "5", "--jobs", "4"]);
    ok(&["run", "--config", p(&cfg), "--out", p(&c), "--seed", "6", "--stage", "precision"]);
    for family in ["precision", "community", "rank", "epidemic"] {
        let x = fs::read(a.join(format!("{family}.csv"))).unwrap();
        let y = fs::read(b.join(format!("{family}.csv"))).unwrap();
        assert_eq!(x, y, "{family}");
    }
    let header = fs::read_to_string(a.join("precision.csv")).unwrap();
    assert!(header.starts_with("point,repetition,source,n,mu,g,distribution,assortative,method,f,c,nt,nt_rule,"));
    assert_eq!(header.lines().count(), 1 + 4 * 2);
    assert!(!c.join("community.csv").exists());
    assert_ne!(fs::read(a.join("precision.csv")).unwrap(), fs::read(c.join("precision.csv")).unwrap());
}

fn key_values(path: &Path) -> HashMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[test]
fn stages_replayed_from_artifacts_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    write(&cfg, &format!("{SMALL}artifacts = true\n"));
    let out = dir.path().join("out");
    ok(&["run", "--config", p(&cfg), "--out", p(&out), "--stage", "precision"]);
    let table = fs::read_to_string(out.join("precision.csv")).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "coalescing_precision").unwrap();
    for (row, line) in table.lines().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let (point, rep) = (cells[0], cells[1]);
        let art = out.join("artifacts").join(format!("p{point}_r{rep}"));
        let seeds = key_values(&art.join("seeds.txt"));
        let replay = dir.path().join(format!("replay{row}"));
        let mut args = vec![
            "sample".to_string(),
            "--network".into(),
            p(&art.join("network.edges")).into(),
            "--attributes".into(),
            p(&art.join("attributes.txt")).into(),
            "--g".into(),
            seeds["g"].clone(),
            "--method".into(),
            seeds["method"].clone(),
            "--f".into(),
            seeds["f"].clone(),
            "--c".into(),
            seeds["c"].clone(),
            "--seed".into(),
            seeds["sample"].clone(),
            "--out".into(),
            p(&replay).into(),
        ];
        match (seeds.get("true_size"), seeds.get("respondents")) {
            (Some(t), _) => args.extend(["--true-size".to_string(), t.clone()]),
            (None, Some(r)) => args.extend(["--respondents".to_string(), r.clone()]),
            _ => panic!("sample size missing"),
        }
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        for f in ["forest.txt", "truth.txt"] {
            assert_eq!(fs::read(art.join(f)).unwrap(), fs::read(replay.join(f)).unwrap(), "{f}");
        }
        ok(&[
            "reconstruct",
            "--forest",
            p(&replay.join("forest.txt")),
            "--attributes",
            p(&art.join("attributes.txt")),
            "--g",
            &seeds["g"],
            "--n-t",
            &seeds["n_t"],
            "--seed",
            &seeds["reconstruct"],
            "--out",
            p(&replay),
        ]);
        for f in ["provenance.txt", "coalesce_log.csv", "reconstructed.edges"] {
            assert_eq!(fs::read(art.join(f)).unwrap(), fs::read(replay.join(f)).unwrap(), "{f}");
        }
        let metrics = ok(&[
            "metrics",
            "--truth",
            p(&replay.join("truth.txt")),
            "--log",
            p(&replay.join("coalesce_log.csv")),
        ]);
        let value = metrics.lines().nth(1).unwrap().split(',').nth(1).unwrap();
        assert_eq!(value, cells[col]);
    }
}

#[test]
fn generate_then_epidemic_with_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.cfg");
    write(&cfg, "n = 300\nk_avg = 8\nk_max = 16\nc_min = 10\nc_max = 30\n");
    let gen = dir.path().join("gen");
    let summary = ok(&["generate", "--config", p(&cfg), "--mu", "0.2", "--g", "n", "--out", p(&gen)]);
    assert!(summary.starts_with("n=300 "));
    let attrs = fs::read_to_string(gen.join("attributes.txt")).unwrap();
    assert_eq!(attrs.lines().count(), 300);
    let net = gen.join("network.edges");
    let out = ok(&["epidemic", "--network", p(&net), "--strategy", "underlying-top:degree", "--budget", "15", "--runs", "20"]);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "underlying-top:degree");
    assert_eq!(row[1], "15");
    let beta0 = ok(&["epidemic", "--network", p(&net), "--beta", "0", "--runs", "5"]);
    assert_eq!(beta0.lines().nth(1).unwrap(), "none,0,1,0,5");
    let refused = netrecon(&["epidemic", "--network", p(&net), "--strategy", "reconstructed-top:degree", "--budget", "3"]);
    assert!(!refused.status.success());
}
