use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use obpderand::bbtest::{self, ExhaustiveSuffixes, ExplicitStrings, HittingSet, OracleObp, SampleSource, SeededSamples};
use obpderand::combinat;
use obpderand::evaluator::Evaluator;
use obpderand::obp::Obp;
use obpderand::prg::{self, AllZeros, EnumerationCap, Enumerate, HardFunction, ListGen, NwGen, Prg, SmallBias};
use obpderand::rational::{self, Q};
use obpderand::reconstruct::{self, ReconConfig, RmParams, SamplerPlan};
use obpderand::table::TruthTable;
use obpderand::universal::{self, ConstantEstimator, ReferenceEstimator, Registry, UnivConfig};
use obpderand::verifier::{self, NextBitVerdict, Outcome, PipelineConfig, REFUTER_MESSAGE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "obpderand", version, about = "Derandomization toolkit for ordered branching programs")]
struct Cli {
    /// Largest number of seeds any enumeration may visit (`2^k` or a plain number).
    #[arg(long, global = true, default_value = "2^22")]
    cap: String,
    /// JSON file overriding the reconstruction constants.
    #[arg(long, global = true)]
    constants_ledger: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long, global = true)]
    json_out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create and inspect programs.
    #[command(subcommand)]
    Obp(ObpCmd),
    /// Test a generator against a program, or run the estimate-or-refute pipeline with --hard.
    Verify(VerifyArgs),
    /// Reconstruction runs.
    #[command(subcommand)]
    Recon(ReconCmd),
    /// Universal derandomizer.
    #[command(subcommand)]
    Univ(UnivCmd),
    /// Black-box sampler.
    #[command(subcommand)]
    Bbtest(BbCmd),
}

#[derive(Subcommand)]
enum ObpCmd {
    /// Random program of length n and width w.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        w: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label reached on an input given as a 0/1 string.
    Eval {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        x: String,
    },
    /// Exact acceptance probability.
    Prob {
        #[arg(long)]
        file: PathBuf,
    },
    /// Majority of d runs.
    Amplify {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Append identity layers.
    Pad {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        w: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    obp: PathBuf,
    /// enumerate | zeros | smallbias:K,Q | list:FILE | nw:FILE[,S]
    #[arg(long, default_value = "enumerate")]
    prg: String,
    /// Per-layer budget (rational, e.g. 1/16); defaults to 1/(4n).
    #[arg(long)]
    eps: Option<String>,
    /// Truth table of f; runs the estimate-or-refute pipeline instead.
    #[arg(long)]
    hard: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReconCmd {
    /// Generator for f, a perfect next-bit predictor, and the whole chain.
    Full {
        #[arg(long)]
        f: PathBuf,
        /// Only `perfect` is available.
        #[arg(long, default_value = "perfect")]
        predictor: String,
        /// Output length of the generator.
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Extra universe bits for the NW design.
        #[arg(long, default_value_t = 2)]
        extra: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decoder step against a corrupted encoding of f.
    Rm {
        #[arg(long)]
        f: PathBuf,
        #[arg(long, default_value_t = 4)]
        field_k: u32,
        #[arg(long, default_value_t = 2)]
        h_bits: usize,
        /// Fraction of corrupted inputs.
        #[arg(long, default_value_t = 0.005)]
        corrupt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum UnivCmd {
    Run {
        #[arg(long)]
        obp: PathBuf,
        /// default | sabotaged
        #[arg(long, default_value = "default")]
        registry: String,
        /// Size parameter; defaults to max(length, width, 2).
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Subcommand)]
enum BbCmd {
    Sample {
        #[arg(long)]
        obp: PathBuf,
        /// enumerate | file:PATH | smallbias:K,Q
        #[arg(long, default_value = "enumerate")]
        hsg: String,
        /// exhaustive | seeded:COUNT,T,SEED | file:PATH,W,T
        #[arg(long, default_value = "exhaustive")]
        samples: String,
        #[arg(long, default_value = "0.2")]
        eps: String,
        /// Width bound for the class report; defaults to the file's width.
        #[arg(long)]
        w: Option<usize>,
    },
}

/// Result of a command: the JSON report and the exit status.
struct Report {
    json: Value,
    code: u8,
    /// Printed before the JSON.
    preamble: Option<String>,
    /// Plain text instead of JSON on stdout.
    text: Option<String>,
}

impl Report {
    fn ok(json: Value) -> Self {
        Report { json, code: 0, preamble: None, text: None }
    }
}

fn parse_cap(s: &str) -> Result<EnumerationCap> {
    let s = s.trim();
    let v = if let Some(e) = s.strip_prefix("2^") {
        let e: u32 = e.parse().context("cap exponent")?;
        1u64.checked_shl(e).ok_or_else(|| anyhow!("cap 2^{e} too large"))?
    } else {
        s.parse().context("cap")?
    };
    Ok(EnumerationCap(v))
}

fn parse_q(s: &str) -> Result<Q> {
    if let Some(q) = rational::parse(s) {
        return Ok(q);
    }
    let f: f64 = s.parse().with_context(|| format!("bad number {s:?}"))?;
    Q::from_float(f).ok_or_else(|| anyhow!("bad number {s:?}"))
}

fn read_obp(path: &Path) -> Result<Obp> {
    let s = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Obp::from_json(&s).with_context(|| format!("parsing {}", path.display()))
}

/// A truth table written as `2^m` characters `0`/`1` (whitespace ignored).
fn read_table(path: &Path) -> Result<HardFunction> {
    let s = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let bits: Vec<bool> = s
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(anyhow!("unexpected character {c:?} in truth table")),
        })
        .collect::<Result<_>>()?;
    if !bits.len().is_power_of_two() {
        bail!("truth table has {} entries, not a power of two", bits.len());
    }
    let m = bits.len().trailing_zeros() as usize;
    Ok(HardFunction::new(TruthTable::from_bits(m, &bits), path.display().to_string())?)
}

fn read_strings(path: &Path) -> Result<Vec<Vec<bool>>> {
    let s = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| obpderand::bits::parse(l).ok_or_else(|| anyhow!("bad bit string {l:?}")))
        .collect()
}

fn write_out(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn emit_file_or_text(out: &Option<PathBuf>, contents: String, summary: Value) -> Result<Report> {
    match out {
        Some(p) => {
            write_out(p, &contents)?;
            Ok(Report::ok(summary))
        }
        None => Ok(Report { json: summary, code: 0, preamble: None, text: Some(contents) }),
    }
}

fn build_prg(desc: &str, n: usize, cap: EnumerationCap) -> Result<Box<dyn Prg>> {
    let (kind, arg) = desc.split_once(':').unwrap_or((desc, ""));
    Ok(match kind {
        "enumerate" => Box::new(Enumerate { n }),
        "zeros" => Box::new(AllZeros { n }),
        "smallbias" => {
            let (k, q) = arg.split_once(',').ok_or_else(|| anyhow!("smallbias:K,Q"))?;
            let (k, q): (usize, u32) = (k.parse()?, q.parse()?);
            if k != n {
                bail!("smallbias emits {k} bits, program reads {n}");
            }
            Box::new(SmallBias::new(k, q))
        }
        "list" => {
            let strings = read_strings(Path::new(arg))?;
            let packed = strings.iter().map(|s| obpderand::bits::pack(s)).collect();
            Box::new(ListGen::new(n, packed)?)
        }
        "nw" => {
            let (file, s) = arg.split_once(',').unwrap_or((arg, ""));
            let f = read_table(Path::new(file))?;
            let size = f.m;
            let s = if s.is_empty() { size + 1 } else { s.parse()? };
            cap.check("nw seeds", s)?;
            let design = combinat::build_design_sized(s, size, n)?;
            Box::new(NwGen::new(design, f.table.clone())?)
        }
        other => bail!("unknown generator {other:?}"),
    })
}

fn recon_config(cli: &Cli, cap: EnumerationCap) -> Result<ReconConfig> {
    let mut cfg = match &cli.constants_ledger {
        Some(p) => {
            let s = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&s).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ReconConfig::default(),
    };
    cfg.cap = cap;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Report> {
    let cap = parse_cap(&cli.cap)?;
    match &cli.cmd {
        Cmd::Obp(c) => cmd_obp(c),
        Cmd::Verify(a) => cmd_verify(a, cap, recon_config(cli, cap)?),
        Cmd::Recon(c) => cmd_recon(c, cap, recon_config(cli, cap)?),
        Cmd::Univ(UnivCmd::Run { obp, registry, n }) => {
            let b = read_obp(obp)?;
            let n = n.unwrap_or(b.len().max(b.width()).max(2));
            let reg = match registry.as_str() {
                "default" => Registry::new().with(ReferenceEstimator::default()),
                "sabotaged" => Registry::new().with(ConstantEstimator(rational::int(0))).with(ReferenceEstimator::default()),
                other => bail!("unknown registry {other:?}"),
            };
            let rep = universal::univ_derand(n, &b, &reg, &UnivConfig::default())?;
            Ok(Report::ok(json!({ "command": "univ run", "registry": reg.names(), "report": rep })))
        }
        Cmd::Bbtest(BbCmd::Sample { obp, hsg, samples, eps, w }) => {
            let b = read_obp(obp)?;
            let n = b.len();
            let width = w.unwrap_or(b.width());
            let eps = parse_q(eps)?;
            let h = match hsg.split_once(':').unwrap_or((hsg, "")) {
                ("enumerate", _) => HittingSet::enumerate(n),
                ("file", path) => {
                    let packed = read_strings(Path::new(path))?.iter().map(|s| obpderand::bits::pack(s)).collect();
                    HittingSet::from_list(n, packed, eps.clone())
                }
                (_, _) => {
                    let g = build_prg(hsg, n, cap)?;
                    HittingSet::from_prg(g.as_ref(), eps.clone(), cap)?
                }
            };
            let src: Box<dyn SampleSource> = match samples.split_once(':').unwrap_or((samples, "")) {
                ("exhaustive", _) => Box::new(ExhaustiveSuffixes),
                ("seeded", args) => {
                    let v: Vec<u64> = args.split(',').map(str::parse).collect::<std::result::Result<_, _>>().context("seeded:COUNT,T,SEED")?;
                    let [count, t, seed] = v[..] else { bail!("seeded:COUNT,T,SEED") };
                    Box::new(SeededSamples { count, t: t as usize, seed })
                }
                ("file", args) => {
                    let parts: Vec<&str> = args.split(',').collect();
                    let [path, w2, t] = parts[..] else { bail!("file:PATH,W,T") };
                    Box::new(ExplicitStrings::new(read_strings(Path::new(path))?, n, w2.parse()?, t.parse()?)?)
                }
                (other, _) => bail!("unknown sample source {other:?}"),
            };
            // the program is reachable only through the oracle from here on
            let oracle = OracleObp::hide(b);
            let rep = bbtest::bb_sampler(&oracle, &h, src.as_ref(), &eps, width)?;
            Ok(Report::ok(json!({ "command": "bbtest sample", "hsg": h.provenance, "report": rep })))
        }
    }
}

fn cmd_obp(c: &ObpCmd) -> Result<Report> {
    match c {
        ObpCmd::Gen { n, w, seed, out } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let b = Obp::random(&mut rng, *n, *w);
            let summary = json!({ "command": "obp gen", "n": n, "w": w, "seed": seed, "rng": "chacha8" });
            emit_file_or_text(out, b.to_json_pretty(), summary)
        }
        ObpCmd::Eval { file, x } => {
            let b = read_obp(file)?;
            let bits = obpderand::bits::parse(x).ok_or_else(|| anyhow!("bad input {x:?}"))?;
            let v = rational::format(b.eval(&bits)?);
            Ok(Report { json: json!({ "command": "obp eval", "value": v }), code: 0, preamble: None, text: Some(v) })
        }
        ObpCmd::Prob { file } => {
            let v = rational::format(&read_obp(file)?.expectation());
            Ok(Report { json: json!({ "command": "obp prob", "value": v }), code: 0, preamble: None, text: Some(v) })
        }
        ObpCmd::Amplify { file, d, out } => {
            let a = read_obp(file)?.majority_amplify(*d)?;
            let summary = json!({ "command": "obp amplify", "d": d, "prob": rational::format(&a.expectation()) });
            emit_file_or_text(out, a.to_json_pretty(), summary)
        }
        ObpCmd::Pad { file, n, w, out } => {
            let b = read_obp(file)?;
            let p = b.pad(*n, w.unwrap_or(b.width()))?;
            emit_file_or_text(out, p.to_json_pretty(), json!({ "command": "obp pad", "n": n }))
        }
    }
}

fn cmd_verify(a: &VerifyArgs, cap: EnumerationCap, recon: ReconConfig) -> Result<Report> {
    let b = read_obp(&a.obp)?;
    if let Some(path) = &a.hard {
        let f = read_table(path)?;
        let ledger = recon.ledger();
        let cfg = PipelineConfig { cap, recon, ..Default::default() };
        let out = verifier::certified_estimate_or_refuter(&b, &f, &cfg)?;
        let mut json = out.to_json();
        json["constants"] = ledger;
        return Ok(match out {
            Outcome::Estimate { .. } => Report::ok(json),
            Outcome::Refuter { evaluator, .. } => {
                json["evaluator"] = serde_json::from_str(&evaluator.to_json())?;
                Report { json, code: 2, preamble: Some(REFUTER_MESSAGE.to_string()), text: None }
            }
        });
    }
    let g = build_prg(&a.prg, b.len(), cap)?;
    let eps = match &a.eps {
        Some(e) => parse_q(e)?,
        None => rational::q(1, 4 * b.len().max(1) as i64),
    };
    let v = verifier::test_fools(&b, g.as_ref(), &eps, cap)?;
    let code = match v {
        NextBitVerdict::Certified { .. } => 0,
        NextBitVerdict::Predictor { .. } => 2,
    };
    let mut json = v.to_json();
    json["prg"] = json!(g.provenance());
    Ok(Report { json, code, preamble: None, text: None })
}

fn cmd_recon(c: &ReconCmd, cap: EnumerationCap, cfg: ReconConfig) -> Result<Report> {
    match c {
        ReconCmd::Full { f, predictor, n, extra, out } => {
            if predictor != "perfect" {
                bail!("unknown predictor {predictor:?}");
            }
            let f = read_table(f)?;
            let mut p = prg::IwParams::desk(f.m, *n);
            p.nw_s = p.m3() + extra;
            let gen = prg::assemble_iw_generator(&f, &p, cap)?;
            let pred = reconstruct::perfect_next_bit_predictor(&gen, cap)?.ok_or_else(|| anyhow!("no bit of the generator is a function of its prefix"))?;
            let r = reconstruct::full_reconstruction(&gen, &pred, &cfg)?;
            let summary = json!({
                "command": "recon full", "predictor_bit": pred.bit, "size": r.evaluator.size().to_string(),
                "budget": r.budget, "size_exponent": r.size_exponent(f.m), "stages": r.reports, "constants": r.ledger,
                "generator": gen.stages
            });
            finish_evaluator(out, &r.evaluator, summary)
        }
        ReconCmd::Rm { f, field_k, h_bits, corrupt, seed, out } => {
            let f = read_table(f)?;
            let ell = f.m / h_bits;
            if ell * h_bits != f.m {
                bail!("h_bits must divide m = {}", f.m);
            }
            let rm = RmParams::new(*field_k, *h_bits, ell)?;
            let mut g = rm.encode(&f.table);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let flips = (g.rows() as f64 * corrupt).round() as usize;
            let mut picked = std::collections::BTreeSet::new();
            while picked.len() < flips {
                picked.insert(rng.gen_range(0..g.rows()));
            }
            for &x in &picked {
                g.set(x, g.get(x) ^ 1);
            }
            let b = Arc::new(Evaluator::table(Arc::new(g)));
            let plan = SamplerPlan { ..cfg.rm };
            let r = reconstruct::rm_recon(&rm, &f.table, b, &plan, cap)?;
            let summary = json!({ "command": "recon rm", "corrupted": flips, "report": r.report, "constants": cfg.ledger() });
            finish_evaluator(out, &r.evaluator, summary)
        }
    }
}

fn finish_evaluator(out: &Option<PathBuf>, e: &Evaluator, mut summary: Value) -> Result<Report> {
    if let Some(p) = out {
        write_out(p, &e.to_json())?;
        summary["evaluator_file"] = json!(p.display().to_string());
    }
    Ok(Report::ok(summary))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(rep) => {
            let body = serde_json::to_string_pretty(&rep.json).expect("serializable");
            if let Some(p) = &cli.json_out {
                if let Err(e) = write_out(p, &body) {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(1);
                }
            }
            // a closed pipe downstream is not an error
            let mut out = std::io::stdout().lock();
            if let Some(pre) = &rep.preamble {
                let _ = writeln!(out, "{pre}");
            }
            let _ = writeln!(out, "{}", rep.text.as_deref().unwrap_or(&body));
            ExitCode::from(rep.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
