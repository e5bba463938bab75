use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mclt::analysis::{self, ReleaseCurve};
use mclt::codec::{self, DecoderState, EncodedPacket, SourceBlock};
use mclt::distributions::{self, DegreeDistribution, DistKind, SolitonParams};
use mclt::harness::{self, ExperimentSpec};
use mclt::mc_session::{uniform_channels, SchemeKind, Session, StopRule};
use mclt::rng::derive_seed;
use mclt::smallk_opt;

#[derive(Parser)]
#[command(name = "mclt", version, about = "LT and multi-configuration LT fountain codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a degree distribution as `degree,pmf,cdf`.
    Dist(DistArgs),
    /// Encode a file into packet files.
    Encode(EncodeArgs),
    /// Reassemble a file from a packet directory.
    Decode(DecodeArgs),
    /// Closed-form analytics.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Single decoding sessions.
    #[command(subcommand)]
    Session(SessionCmd),
    /// Exact small-k distribution optimization.
    Optimize(OptimizeArgs),
    /// Monte-Carlo experiments.
    #[command(subcommand)]
    Sim(SimCmd),
}

#[derive(Args, Clone)]
struct SolitonArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    c: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
}

impl SolitonArgs {
    fn params(&self) -> Result<SolitonParams> {
        Ok(SolitonParams::new(self.k, self.c, self.delta)?)
    }
}

#[derive(Args)]
struct DistArgs {
    #[arg(long)]
    kind: DistKind,
    #[command(flatten)]
    soliton: SolitonArgs,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    soliton: SolitonArgs,
    #[arg(long, default_value = "robust")]
    dist: DistKind,
    #[arg(long)]
    packets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    config_id: u8,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Release probabilities `degree,L,q`, one block per degree.
    Release {
        #[command(flatten)]
        soliton: SolitonArgs,
        /// Aggregate over this distribution instead of listing raw degrees.
        #[arg(long)]
        dist: Option<DistKind>,
        /// Comma-separated degrees (ignored with --dist).
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20")]
        degrees: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Utility-degree pmf `i,pmf` for a degree-d symbol at u unsolved.
    Utility {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        u: usize,
    },
    /// Largest u at which degree d+1 dominates d, per d.
    Domination {
        #[arg(long)]
        k: usize,
    },
    /// Phase-one release identity residuals `L,lhs,rhs,residual`.
    Identity {
        #[command(flatten)]
        soliton: SolitonArgs,
        /// Number of received symbols; defaults to k.
        #[arg(long)]
        symbols: Option<f64>,
    },
}

#[derive(Subcommand)]
enum SessionCmd {
    Run {
        #[command(flatten)]
        soliton: SolitonArgs,
        #[arg(long, default_value = "starter+closer")]
        scheme: SchemeKind,
        #[arg(long, default_value_t = 0.0)]
        erasure: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop after this many received symbols; defaults to 5k.
        #[arg(long)]
        max_received: Option<usize>,
        #[arg(long, default_value = "json")]
        report: String,
    },
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    configs: u8,
    /// Solved-symbol count at which the second configuration takes over.
    #[arg(long)]
    switch_after: Option<usize>,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimCmd {
    Run(SimArgs),
}

#[derive(Args)]
struct SimArgs {
    /// Plain-text `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    erasure: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    file_len: u64,
    k: usize,
    symbol_size: usize,
    dist: String,
    c: f64,
    delta: f64,
    config_id: u8,
    packets: usize,
    seed: u64,
}

const MANIFEST: &str = "manifest.json";

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_dist(a: DistArgs) -> Result<()> {
    let dist = a.kind.build(&a.soliton.params()?)?;
    emit(a.out.as_deref(), &distributions::to_csv(&dist))
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let params = a.soliton.params()?;
    let dist = a.dist.build(&params)?;
    let block = SourceBlock::from_bytes(&bytes, params.k)?;
    fs::create_dir_all(&a.out)?;
    for i in 0..a.packets {
        let packet = codec::encode(&block, &dist, a.config_id, derive_seed(a.seed, i as u64))?;
        fs::write(a.out.join(format!("packet_{i:06}.bin")), packet.to_bytes())?;
    }
    let manifest = Manifest {
        file_len: bytes.len() as u64,
        k: params.k,
        symbol_size: block.symbol_size(),
        dist: a.dist.name().to_string(),
        c: params.c,
        delta: params.delta,
        config_id: a.config_id,
        packets: a.packets,
        seed: a.seed,
    };
    fs::write(a.out.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    eprintln!("wrote {} packets of {} bytes to {}", a.packets, block.symbol_size(), a.out.display());
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    let manifest: Manifest = serde_json::from_str(
        &fs::read_to_string(a.input.join(MANIFEST)).context("reading manifest.json")?,
    )?;
    let params = SolitonParams::new(manifest.k, manifest.c, manifest.delta)?;
    let dist: DegreeDistribution = manifest.dist.parse::<DistKind>()?.build(&params)?;
    let mut files: Vec<PathBuf> = fs::read_dir(&a.input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    files.sort();
    let mut state = DecoderState::new(manifest.k, manifest.symbol_size);
    let mut rejected = 0;
    for f in &files {
        let packet = match EncodedPacket::from_bytes(&fs::read(f)?) {
            Ok(p) if p.payload.len() == manifest.symbol_size => p,
            Ok(_) | Err(_) => {
                rejected += 1;
                continue;
            }
        };
        state.ingest_packet(&packet, &dist)?;
        if state.is_complete() {
            break;
        }
    }
    if rejected > 0 {
        eprintln!("skipped {rejected} malformed packet files");
    }
    let Some(data) = state.data() else {
        bail!(
            "decoding incomplete: {} of {} symbols unsolved after {} packets",
            state.unsolved(),
            manifest.k,
            state.received()
        );
    };
    fs::write(&a.out, &data[..manifest.file_len as usize])?;
    eprintln!("decoded from {} packets", state.received());
    Ok(())
}

fn cmd_analyze(cmd: AnalyzeCmd) -> Result<()> {
    match cmd {
        AnalyzeCmd::Release { soliton, dist, degrees, out } => {
            let text = match dist {
                Some(kind) => {
                    let dist = kind.build(&soliton.params()?)?;
                    let mut s = String::from("L,r\n");
                    for l in 1..=soliton.k {
                        s.push_str(&format!("{l},{}\n", analysis::aggregate_release(&dist, l)?));
                    }
                    s
                }
                None => ReleaseCurve::new(soliton.k, &degrees)?.to_csv(),
            };
            emit(out.as_deref(), &text)
        }
        AnalyzeCmd::Utility { k, d, u } => {
            let pmf = analysis::utility_degree_pmf(d, u, k)?;
            let mut s = String::from("i,pmf\n");
            for i in pmf.lo..=pmf.hi() {
                s.push_str(&format!("{i},{}\n", pmf.pmf(i)));
            }
            emit(None, &s)
        }
        AnalyzeCmd::Domination { k } => {
            let mut s = String::from("degree,u_threshold\n");
            for d in 1..k {
                s.push_str(&format!("{d},{}\n", analysis::domination_threshold(d, k)));
            }
            emit(None, &s)
        }
        AnalyzeCmd::Identity { soliton, symbols } => {
            let params = soliton.params()?;
            let checks = analysis::phase1_identity_sweep(&params, symbols.unwrap_or(params.k as f64))?;
            let mut s = String::from("L,lhs,rhs,residual\n");
            for c in checks {
                s.push_str(&format!("{},{},{},{}\n", c.l, c.lhs, c.rhs, c.residual));
            }
            emit(None, &s)
        }
    }
}

fn cmd_session(cmd: SessionCmd) -> Result<()> {
    let SessionCmd::Run { soliton, scheme, erasure, seed, max_received, report } = cmd;
    if report != "json" {
        bail!("unsupported report format '{report}'");
    }
    let params = soliton.params()?;
    let scheme = scheme.build(&params)?;
    let channels = uniform_channels(&scheme, erasure, derive_seed(seed, 0xe7a5))?;
    let mut session = Session::new(&scheme, None, channels, seed)?;
    let cap = max_received.unwrap_or(harness::CAP_FACTOR * params.k);
    session.run(StopRule::received(cap), |_, _| {});
    println!("{}", serde_json::to_string_pretty(&session.report())?);
    Ok(())
}

fn cmd_optimize(a: OptimizeArgs) -> Result<()> {
    let switch = match a.configs {
        1 => None,
        2 => Some(a.switch_after.unwrap_or_else(|| smallk_opt::default_switch_solved(a.k))),
        n => bail!("--configs must be 1 or 2, got {n}"),
    };
    let settings = smallk_opt::OptimizerSettings {
        restarts: a.restarts,
        ..Default::default()
    };
    let result = smallk_opt::optimize_with(a.k, switch, settings)?;
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&result)? + "\n"))
}

fn cmd_sim(cmd: SimCmd) -> Result<()> {
    let SimCmd::Run(a) = cmd;
    let mut pairs = match &a.config {
        Some(p) => harness::parse_config(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => BTreeMap::new(),
    };
    let flags = [
        ("scheme", a.scheme.clone()),
        ("k", a.k.map(|v| v.to_string())),
        ("c", a.c.map(|v| v.to_string())),
        ("delta", a.delta.map(|v| v.to_string())),
        ("trials", a.trials.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("grid", a.grid.clone()),
        ("erasure", a.erasure.map(|v| v.to_string())),
        ("out", a.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            pairs.insert(key.to_string(), v);
        }
    }
    let out = PathBuf::from(pairs.remove("out").unwrap_or_else(|| "results".into()));
    let spec = ExperimentSpec::from_pairs(&pairs)?;
    let result = harness::run_experiment(&spec)?;
    harness::write_outputs(&result, &out)?;
    println!(
        "{}: mean overhead {:.4} ± {:.4} over {} trials ({} capped) -> {}",
        result.label(),
        result.mean_overhead.mean,
        result.mean_overhead.stderr,
        spec.trials,
        result.capped,
        out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Dist(a) => cmd_dist(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Analyze(c) => cmd_analyze(c),
        Command::Session(c) => cmd_session(c),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Sim(c) => cmd_sim(c),
    }
}
