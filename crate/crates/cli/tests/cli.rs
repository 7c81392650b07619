use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn glop(args: &[&str]) -> Output {
    glop_env(args, &[])
}

fn glop_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_glop"));
    c.args(args);
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn read_lines(p: &Path) -> Vec<Value> {
    lines(&std::fs::read_to_string(p).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dist(a: &Value, b: &Value) -> f64 {
    let (ax, ay) = (a["x"].as_f64().unwrap(), a["y"].as_f64().unwrap());
    let (bx, by) = (b["x"].as_f64().unwrap(), b["y"].as_f64().unwrap());
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

fn closed(coords: &[Value], order: &[Value]) -> f64 {
    let o: Vec<usize> = order.iter().map(|v| v.as_u64().unwrap() as usize).collect();
    (0..o.len()).map(|k| dist(&coords[o[k]], &coords[o[(k + 1) % o.len()]])).sum()
}

#[test]
fn tsp_round_trip_recomputes_objectives() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tsp.jsonl");
    let sols = dir.path().join("sol.jsonl");
    ok(&glop(&["generate", "--problem", "tsp", "--n", "60", "--count", "3", "--seed", "4", "--out", s(&data)]));
    let recs = lines(&ok(&glop(&[
        "solve-tsp", "--input", s(&data), "--rs", "20,10", "--iters", "5,5", "--solutions", s(&sols),
    ])));
    assert_eq!(recs.len(), 3);
    let insts = read_lines(&data);
    for (sol, inst) in read_lines(&sols).iter().zip(&insts) {
        let coords = inst["coords"].as_array().unwrap();
        let tour = sol["solution"]["tour"].as_array().unwrap();
        assert_eq!(tour.len(), 60);
        let len = closed(coords, tour);
        assert!((len - sol["objective"].as_f64().unwrap()).abs() < 1e-9);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pctsp.jsonl");
    ok(&glop(&["generate", "--problem", "pctsp", "--n", "100", "--count", "4", "--out", s(&data)]));
    let run = |threads: &str| -> Vec<(String, f64)> {
        let out = glop_env(&["solve-pctsp", "--input", s(&data), "--mode", "sample", "--seed", "9"], &[("GLOP_THREADS", threads)]);
        lines(&ok(&out)).iter().map(|r| (r["id"].as_str().unwrap().to_string(), r["objective"].as_f64().unwrap())).collect()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tsp.jsonl");
    ok(&glop(&["generate", "--problem", "tsp", "--n", "12", "--out", s(&data)]));
    assert_eq!(glop(&["solve-cvrp", "--input", s(&data)]).status.code(), Some(3));
    assert_eq!(glop(&["solve-tsp", "--input", s(&data), "--preset", "nope"]).status.code(), Some(3));
    assert_eq!(glop(&["solve-tsp", "--input", s(&data), "--rs", "20"]).status.code(), Some(3));
    assert_eq!(glop_env(&["solve-tsp", "--input", s(&data)], &[("GLOP_THREADS", "0")]).status.code(), Some(3));
    assert_eq!(glop(&["no-such-command"]).status.code(), Some(3));

    // a customer heavier than the vehicle cannot be served
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        r#"{"kind":"cvrp","coords":[{"x":0.5,"y":0.5},{"x":0.1,"y":0.1}],"depot":0,"demands":[0,5],"capacity":3}"#,
    )
    .unwrap();
    assert_eq!(glop(&["solve-cvrp", "--input", s(&bad)]).status.code(), Some(2));
}

#[test]
fn oracle_solvers_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("small.jsonl");
    ok(&glop(&["generate", "--problem", "tsp", "--n", "8", "--count", "5", "--seed", "2", "--out", s(&data)]));
    let dp = lines(&ok(&glop(&["oracle", "--input", s(&data), "--solver", "dp"])));
    let bf = lines(&ok(&glop(&["oracle", "--input", s(&data), "--solver", "bf"])));
    assert_eq!(dp, bf);
    let cyc = lines(&ok(&glop(&["oracle", "--input", s(&data), "--mode", "cycle"])));
    for (c, p) in cyc.iter().zip(&dp) {
        // an optimal tour is never shorter than the optimal open path between two of its nodes
        assert!(c["length"].as_f64().unwrap() >= p["length"].as_f64().unwrap() - 1e-12);
    }
}

#[test]
fn trained_checkpoints_plug_into_solvers() {
    let dir = tempfile::tempdir().unwrap();
    let rev = dir.path().join("rev10.json");
    let hist = dir.path().join("hist.jsonl");
    ok(&glop(&[
        "train-reviser", "--n", "10", "--steps-per-epoch", "3", "--batch", "4", "--out", s(&rev), "--history", s(&hist),
    ]));
    assert_eq!(read_lines(&hist).len(), 3);
    let data = dir.path().join("tsp.jsonl");
    ok(&glop(&["generate", "--problem", "tsp", "--n", "40", "--count", "2", "--out", s(&data)]));
    let neural = format!("neural:{}", rev.display());
    let recs = lines(&ok(&glop(&["solve-tsp", "--input", s(&data), "--rs", "10", "--iters", "3", "--reviser", &neural])));
    assert_eq!(recs.len(), 2);

    let part = dir.path().join("cvrp.json");
    ok(&glop(&[
        "train-partition", "--problem", "cvrp", "--n", "20", "--steps", "2", "--batch", "2", "--samples", "2", "--out",
        s(&part), "--history", s(&hist),
    ]));
    let cv = dir.path().join("cvrp.jsonl");
    ok(&glop(&["generate", "--problem", "cvrp", "--n", "25", "--count", "2", "--out", s(&cv)]));
    let recs = lines(&ok(&glop(&["solve-cvrp", "--input", s(&cv), "--model", s(&part)])));
    assert_eq!(recs.len(), 2);
    // a CVRP model cannot drive PCTSP
    let pc = dir.path().join("pctsp.jsonl");
    ok(&glop(&["generate", "--problem", "pctsp", "--n", "100", "--out", s(&pc)]));
    assert_eq!(glop(&["solve-pctsp", "--input", s(&pc), "--model", s(&part)]).status.code(), Some(3));
}

#[test]
fn stability_and_bench_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tsp.jsonl");
    let refs = dir.path().join("refs.txt");
    let report = dir.path().join("report.json");
    ok(&glop(&["generate", "--problem", "tsp", "--n", "30", "--count", "3", "--out", s(&data)]));
    std::fs::write(&refs, "4.0\n4.0\n4.0\n").unwrap();
    ok(&glop(&["bench", "--input", s(&data), "--reference", s(&refs), "--report", s(&report)]));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for row in rep["rows"].as_array().unwrap() {
        let gap = row["objective"].as_f64().unwrap() / 4.0 - 1.0;
        assert!((row["gap"].as_f64().unwrap() - gap).abs() < 1e-12);
    }

    let runs = lines(&ok(&glop(&["stability", "--input", s(&data), "--runs", "3"])));
    assert_eq!(runs.len(), 3);
    for r in &runs {
        let mut objs: Vec<f64> = r["objectives"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        objs.sort_by(f64::total_cmp);
        assert_eq!(r["quartiles"]["min"].as_f64().unwrap(), objs[0]);
        assert_eq!(r["quartiles"]["max"].as_f64().unwrap(), objs[2]);
    }
    assert_eq!(glop(&["stability", "--input", s(&data), "--runs", "1"]).status.code(), Some(3));
}
