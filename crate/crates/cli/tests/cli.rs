use obpderand::obp::Obp;
use obpderand::reconstruct::ReconConfig;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let d = std::env::temp_dir().join(format!("obpderand-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        Scratch(d)
    }
    fn file(&self, name: &str, body: &str) -> PathBuf {
        let p = self.0.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }
    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obpderand")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn prob_of_and() {
    let d = Scratch::new("prob");
    let f = d.file("and2.json", &Obp::and_all(2).to_json());
    let o = run(&["obp", "prob", "--file", s(&f)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "1/4");

    let amp = d.path("amp.json");
    assert!(run(&["obp", "amplify", "--file", s(&f), "--d", "3", "--out", s(&amp)]).status.success());
    let o = run(&["obp", "prob", "--file", s(&amp)]);
    assert_eq!(stdout(&o).trim(), "5/32");
}

#[test]
fn gen_is_reproducible() {
    let d = Scratch::new("gen");
    let (a, b) = (d.path("a.json"), d.path("b.json"));
    for p in [&a, &b] {
        assert!(run(&["obp", "gen", "--n", "6", "--w", "3", "--seed", "9", "--out", s(p)]).status.success());
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    let prog = Obp::from_json(std::str::from_utf8(&x).unwrap()).unwrap();
    assert_eq!((prog.len(), prog.width()), (6, 3));
}

#[test]
fn eval_runs_the_program() {
    let d = Scratch::new("eval");
    let f = d.file("and2.json", &Obp::and_all(2).to_json());
    let eval = |x: &str| obpderand::rational::parse(stdout(&run(&["obp", "eval", "--file", s(&f), "--x", x])).trim()).unwrap();
    assert_eq!(eval("11"), obpderand::rational::int(1));
    assert_eq!(eval("10"), obpderand::rational::int(0));
}

#[test]
fn verify_enumerate_and_zeros() {
    let d = Scratch::new("verify");
    let g = d.path("g.json");
    run(&["obp", "gen", "--n", "5", "--w", "3", "--seed", "2", "--out", s(&g)]);
    let prog = Obp::from_json(&std::fs::read_to_string(&g).unwrap()).unwrap();

    let report = d.path("r.json");
    let o = run(&["--json-out", s(&report), "verify", "--obp", s(&g), "--prg", "enumerate"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["kind"], "certified");
    assert_eq!(v["estimate"], obpderand::rational::format(&prog.expectation()));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved, v);

    let and = d.file("and.json", &Obp::and_all(4).to_json());
    let o = run(&["verify", "--obp", s(&and), "--prg", "zeros"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["kind"], "predictor");
}

#[test]
fn hard_zero_table_refutes() {
    let d = Scratch::new("hard");
    let g = d.path("g.json");
    run(&["obp", "gen", "--n", "4", "--w", "3", "--seed", "5", "--out", s(&g)]);
    let z = d.file("z.txt", "00000000");
    let o = run(&["verify", "--obp", s(&g), "--hard", s(&z)]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    let (first, rest) = out.split_once('\n').unwrap();
    assert_eq!(first, obpderand::verifier::REFUTER_MESSAGE);
    let v: Value = serde_json::from_str(rest).unwrap();
    assert_eq!(v["kind"], "refuter");
    assert!(v["constants"].is_object());
}

#[test]
fn malformed_inputs_exit_one() {
    let d = Scratch::new("bad");
    let bad = d.file("bad.json", "{\"n\": 2}");
    let o = run(&["obp", "prob", "--file", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let t = d.file("t.txt", "0120");
    let g = d.file("g.json", &Obp::and_all(2).to_json());
    assert_eq!(run(&["verify", "--obp", s(&g), "--hard", s(&t)]).status.code(), Some(1));
    assert_eq!(run(&["--cap", "2^x", "obp", "prob", "--file", s(&g)]).status.code(), Some(1));
    assert_eq!(run(&["verify", "--obp", s(&g), "--prg", "nope"]).status.code(), Some(1));
}

#[test]
fn univ_default_registry() {
    let d = Scratch::new("univ");
    let g = d.path("g.json");
    run(&["obp", "gen", "--n", "4", "--w", "3", "--seed", "5", "--out", s(&g)]);
    let prog = Obp::from_json(&std::fs::read_to_string(&g).unwrap()).unwrap();
    let want = obpderand::rational::format(&prog.expectation());
    for reg in ["default", "sabotaged"] {
        let o = run(&["univ", "run", "--obp", s(&g), "--registry", reg]);
        assert!(o.status.success(), "{reg}");
        let v = json(&o);
        let got = obpderand::rational::parse(v["report"]["value"].as_str().unwrap()).unwrap();
        let bound = obpderand::rational::parse(v["report"]["bound"].as_str().unwrap()).unwrap();
        let truth = obpderand::rational::parse(&want).unwrap();
        assert!(obpderand::rational::abs(&(got - truth)) <= bound, "{reg}");
    }
}

#[test]
fn bbtest_sample_exhaustive() {
    let d = Scratch::new("bb");
    let g = d.path("g.json");
    run(&["obp", "gen", "--n", "4", "--w", "2", "--seed", "1", "--out", s(&g)]);
    let prog = Obp::from_json(&std::fs::read_to_string(&g).unwrap()).unwrap();
    let o = run(&["bbtest", "sample", "--obp", s(&g), "--eps", "1/5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let est = v["estimate"].as_str().or(v["report"]["estimate"].as_str()).unwrap();
    let est = obpderand::rational::parse(est).unwrap();
    assert!(obpderand::rational::abs(&(est - prog.expectation())) <= obpderand::rational::q(1, 5));
}

#[test]
fn recon_rm_honours_constants_ledger() {
    let d = Scratch::new("recon");
    let t = d.file("t.txt", "0110100110010110");
    let mut cfg = serde_json::to_value(ReconConfig::default()).unwrap();
    cfg["gl_bias_q"] = 12.into();
    let ledger = d.file("ledger.json", &cfg.to_string());
    let out = d.path("e.json");
    let o = run(&["--constants-ledger", s(&ledger), "recon", "rm", "--f", s(&t), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["constants"]["gl_bias_q"], 12);
    assert_eq!(v["report"]["score"], "1/1");
    assert!(out.exists());

    let broken = d.file("broken.json", "[1,2");
    let o = run(&["--constants-ledger", s(&broken), "recon", "rm", "--f", s(&t), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}
