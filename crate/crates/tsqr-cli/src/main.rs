//! Command-line front end for the tsqr library.
//!
//! Subcommands: `factor` (one factorization with verification and optional
//! bundle/Q output), `bench` (strong-scaling sweeps to CSV), `compare-trees`
//! (pairwise R agreement across trees), `tree validate` (check a schedule
//! file). Exit codes: 0 success, 1 verification failure, 2 usage/IO error.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;
use tsqr::tree::{binary_tree, comm_stats, flat_tree, parse_tree, ReductionTree};
use tsqr::{
    apply_q, gen_matrix, io, tsqr_factor, verify_factorization, ApplyDirection, DenseMatrix,
    GenMode, QrVariant, TsqrOptions,
};

#[derive(Parser)]
#[command(
    name = "tsqr",
    version,
    about = "Tall-skinny QR over simulated reduction trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factor a matrix, print a verification summary, optionally write a
    /// factorization bundle and the explicit Q.
    Factor(FactorArgs),
    /// Strong-scaling sweep over process counts and trees; emits CSV.
    Bench(BenchArgs),
    /// Factor the same matrix under several trees and report pairwise
    /// sign-normalized R differences.
    CompareTrees(CompareTreesArgs),
    /// Reduction-tree utilities.
    #[command(subcommand)]
    Tree(TreeCommand),
}

#[derive(Subcommand)]
enum TreeCommand {
    /// Parse a tree file and check every structural invariant.
    Validate { file: PathBuf },
}

#[derive(Args)]
struct MatrixSource {
    /// Read the input matrix from a TSM1 file.
    #[arg(long, value_name = "FILE", conflicts_with = "gen")]
    r#in: Option<PathBuf>,
    /// Generate the input: `m,n[,seed[,mode]]` with mode `standard-normal`
    /// or `geometric-cond(<kappa>)`. Seed defaults to $TSQR_SEED or 1.
    #[arg(long, value_name = "SPEC")]
    gen: Option<String>,
}

#[derive(Args)]
struct FactorArgs {
    #[command(flatten)]
    source: MatrixSource,
    /// Number of simulated ranks.
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Reduction tree: `binary`, `flat`, or `file:<path>`.
    #[arg(long, default_value = "binary")]
    tree: String,
    /// Local QR variant: `unblocked` or `recursive[:threshold]`.
    #[arg(long, default_value = "unblocked")]
    variant: String,
    /// Worker threads (results are thread-count invariant).
    #[arg(long)]
    threads: Option<usize>,
    /// Write the factorization bundle into this directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also form the thin Q and write it as q.tsm1 (requires --out).
    #[arg(long)]
    form_q: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    /// Comma-separated process counts, e.g. `1,2,4,8`.
    #[arg(long, value_name = "LIST")]
    p_list: String,
    /// Comma-separated tree specs, e.g. `binary,flat`.
    #[arg(long, value_name = "LIST", default_value = "binary")]
    tree_list: String,
    /// Repetitions per (p, tree) pair.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Output CSV path.
    #[arg(long, value_name = "FILE")]
    csv: PathBuf,
    #[arg(long, default_value = "unblocked")]
    variant: String,
    #[arg(long)]
    threads: Option<usize>,
    /// Generator seed (defaults to $TSQR_SEED or 1).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareTreesArgs {
    #[command(flatten)]
    source: MatrixSource,
    #[arg(long)]
    p: usize,
    /// Comma-separated tree specs, e.g. `binary,flat,file:fig1.tree`.
    #[arg(long, value_name = "LIST")]
    trees: String,
    #[arg(long, default_value = "unblocked")]
    variant: String,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Factor(args) => cmd_factor(args),
        Command::Bench(args) => cmd_bench(args),
        Command::CompareTrees(args) => cmd_compare_trees(args),
        Command::Tree(TreeCommand::Validate { file }) => cmd_tree_validate(file),
    };
    match outcome {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn default_seed() -> u64 {
    std::env::var("TSQR_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1)
}

fn parse_gen_spec(spec: &str) -> Result<(usize, usize, u64, GenMode), String> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() < 2 || parts.len() > 4 {
        return Err(format!("--gen expects `m,n[,seed[,mode]]`, got `{spec}`"));
    }
    let m: usize = parts[0]
        .parse()
        .map_err(|_| format!("bad m in --gen: `{}`", parts[0]))?;
    let n: usize = parts[1]
        .parse()
        .map_err(|_| format!("bad n in --gen: `{}`", parts[1]))?;
    let seed: u64 = match parts.get(2) {
        Some(s) => s.parse().map_err(|_| format!("bad seed in --gen: `{s}`"))?,
        None => default_seed(),
    };
    let mode = match parts.get(3) {
        None => GenMode::StandardNormal,
        Some(&"standard-normal") => GenMode::StandardNormal,
        Some(s) => {
            let kappa = s
                .strip_prefix("geometric-cond(")
                .and_then(|t| t.strip_suffix(')'))
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| {
                    format!("bad mode `{s}`; use standard-normal or geometric-cond(<kappa>)")
                })?;
            GenMode::GeometricCond(kappa)
        }
    };
    Ok((m, n, seed, mode))
}

fn load_matrix(source: &MatrixSource) -> Result<DenseMatrix, String> {
    match (&source.r#in, &source.gen) {
        (Some(path), None) => io::read_dense(path).map_err(|e| e.to_string()),
        (None, Some(spec)) => {
            let (m, n, seed, mode) = parse_gen_spec(spec)?;
            gen_matrix(m, n, seed, mode).map_err(|e| e.to_string())
        }
        (None, None) => Err("one of --in or --gen is required".into()),
        (Some(_), Some(_)) => Err("--in and --gen are mutually exclusive".into()),
    }
}

fn parse_variant(s: &str) -> Result<QrVariant, String> {
    match s {
        "unblocked" => Ok(QrVariant::Unblocked),
        "recursive" => Ok(QrVariant::recursive_default()),
        other => other
            .strip_prefix("recursive:")
            .and_then(|t| t.parse().ok())
            .map(|threshold| QrVariant::Recursive { threshold })
            .ok_or_else(|| format!("bad --variant `{other}`; use unblocked or recursive[:k]")),
    }
}

fn build_tree(spec: &str, p: usize) -> Result<ReductionTree, String> {
    let tree = match spec {
        "binary" => binary_tree(p),
        "flat" => flat_tree(p),
        other => match other.strip_prefix("file:") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read tree file {path}: {e}"))?;
                parse_tree(&text)
            }
            None => {
                return Err(format!(
                    "bad tree spec `{other}`; use binary, flat, or file:<path>"
                ))
            }
        },
    }
    .map_err(|e| e.to_string())?;
    if tree.p() != p {
        return Err(format!("tree is for p = {} but --p is {p}", tree.p()));
    }
    Ok(tree)
}

fn make_opts(variant: &str, threads: Option<usize>) -> Result<TsqrOptions, String> {
    let threads =
        threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(TsqrOptions {
        variant: parse_variant(variant)?,
        threads,
    })
}

fn cmd_factor(args: FactorArgs) -> Result<ExitCode, String> {
    if args.form_q && args.out.is_none() {
        return Err("--form-q requires --out".into());
    }
    let a = load_matrix(&args.source)?;
    let tree = build_tree(&args.tree, args.p)?;
    let opts = make_opts(&args.variant, args.threads)?;
    let fact = tsqr_factor(&a, &tree, &opts).map_err(|e| e.to_string())?;
    let report = verify_factorization(&a, &fact).map_err(|e| e.to_string())?;

    println!(
        "factor: m={} n={} p={} tree={} variant={} threads={}",
        fact.m, fact.n, fact.p, args.tree, args.variant, opts.threads
    );
    let stats = report.tree_stats;
    println!(
        "comms:  rounds={} messages={} words={} critical_path={}",
        stats.rounds, stats.messages, stats.words, stats.critical_path
    );
    let verdict = |ok: bool| if ok { "ok" } else { "FLAGGED" };
    println!(
        "verify: backward_error={:.3e} [{}]",
        report.backward_error,
        verdict(report.backward_error_ok)
    );
    println!(
        "verify: orthogonality={:.3e} [{}]",
        report.orthogonality,
        verdict(report.orthogonality_ok)
    );
    println!(
        "verify: r_vs_reference={:.3e} [{}]",
        report.r_vs_reference,
        verdict(report.r_vs_reference_ok)
    );

    if let Some(dir) = &args.out {
        io::save_bundle(dir, &fact).map_err(|e| e.to_string())?;
        println!("wrote bundle to {}", dir.display());
        if args.form_q {
            let q = apply_q(&fact, &DenseMatrix::identity(fact.n), ApplyDirection::Q)
                .map_err(|e| e.to_string())?;
            let q_path = dir.join("q.tsm1");
            io::write_dense(&q_path, &q).map_err(|e| e.to_string())?;
            println!("wrote Q to {}", q_path.display());
        }
    }

    Ok(if report.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

struct BenchRow {
    p: usize,
    tree: String,
    rep: usize,
    wall_time_s: f64,
    flops_counted: u64,
    flops_model: u64,
    messages: usize,
    rounds: usize,
    words: usize,
    backward_error: f64,
    r_vs_reference: f64,
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, String> {
    let p_list: Vec<usize> = args
        .p_list
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("bad p `{s}`")))
        .collect::<Result<_, _>>()?;
    let tree_list: Vec<String> = args
        .tree_list
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    for &p in &p_list {
        if args.m < p * args.n {
            return Err(format!(
                "p = {p} needs m >= p*n = {}, but m = {}",
                p * args.n,
                args.m
            ));
        }
    }
    let opts = make_opts(&args.variant, args.threads)?;
    let seed = args.seed.unwrap_or_else(default_seed);
    let a = gen_matrix(args.m, args.n, seed, GenMode::StandardNormal).map_err(|e| e.to_string())?;
    let flops_model = 2 * (args.m as u64) * (args.n as u64) * (args.n as u64);

    // One reference R for the whole sweep; the matrix never changes.
    let reference = tsqr::householder_qr(&a, opts.variant).map_err(|e| e.to_string())?;
    let (reference_r, _) = reference.r.sign_normalize();
    drop(reference);

    let mut rows: Vec<BenchRow> = Vec::new();
    for tree_name in &tree_list {
        for &p in &p_list {
            let tree = build_tree(tree_name, p)?;
            for rep in 0..args.reps.max(1) {
                let start = Instant::now();
                let (fact, flops_counted) = tsqr::flops::counted(|| tsqr_factor(&a, &tree, &opts));
                let wall_time_s = start.elapsed().as_secs_f64();
                let fact = fact.map_err(|e| e.to_string())?;

                let q = tsqr::form_q(&fact).map_err(|e| e.to_string())?;
                let backward_error =
                    tsqr::backward_error(&a, &q, &fact.r).map_err(|e| e.to_string())?;
                let (r_norm, _) = fact.r.sign_normalize();
                let r_vs_reference = r_norm.max_abs_diff(&reference_r);
                let stats = comm_stats(&tree, args.n, false);
                rows.push(BenchRow {
                    p,
                    tree: tree_name.clone(),
                    rep,
                    wall_time_s,
                    flops_counted,
                    flops_model,
                    messages: stats.messages,
                    rounds: stats.rounds,
                    words: stats.words,
                    backward_error,
                    r_vs_reference,
                });
            }
        }
    }

    let mut csv = String::from(
        "m,n,p,tree,rep,wall_time_s,flops_counted,flops_model,messages,rounds,words,backward_error,r_vs_reference\n",
    );
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{:.6},{},{},{},{},{},{:.6e},{:.6e}\n",
            args.m,
            args.n,
            row.p,
            row.tree,
            row.rep,
            row.wall_time_s,
            row.flops_counted,
            row.flops_model,
            row.messages,
            row.rounds,
            row.words,
            row.backward_error,
            row.r_vs_reference,
        ));
    }
    std::fs::write(&args.csv, csv)
        .map_err(|e| format!("cannot write {}: {e}", args.csv.display()))?;

    println!(
        "bench: m={} n={} seed={} threads={}",
        args.m, args.n, seed, opts.threads
    );
    for tree_name in &tree_list {
        for &p in &p_list {
            let mut times: Vec<f64> = rows
                .iter()
                .filter(|r| r.p == p && &r.tree == tree_name)
                .map(|r| r.wall_time_s)
                .collect();
            times.sort_by(f64::total_cmp);
            let min = times.first().copied().unwrap_or(f64::NAN);
            let median = times[times.len() / 2];
            println!(
                "  tree={tree_name} p={p}: min={min:.4}s median={median:.4}s mflops/s/rank={:.1}",
                flops_model as f64 / (min * p as f64) / 1e6
            );
        }
    }
    println!("wrote {}", args.csv.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare_trees(args: CompareTreesArgs) -> Result<ExitCode, String> {
    let a = load_matrix(&args.source)?;
    let opts = make_opts(&args.variant, args.threads)?;
    let specs: Vec<String> = args
        .trees
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if specs.len() < 2 {
        return Err("--trees needs at least two entries".into());
    }
    let n = a.cols();
    let tol = 200.0 * n as f64 * f64::EPSILON * a.frobenius_norm();

    let mut normalized = Vec::new();
    for spec in &specs {
        let tree = build_tree(spec, args.p)?;
        let fact = tsqr_factor(&a, &tree, &opts).map_err(|e| e.to_string())?;
        let (r, _) = fact.r.sign_normalize();
        normalized.push(r);
    }

    println!(
        "compare-trees: m={} n={} p={} tolerance={tol:.3e}",
        a.rows(),
        n,
        args.p
    );
    let mut all_pass = true;
    for i in 0..specs.len() {
        for j in i + 1..specs.len() {
            let delta = normalized[i].max_abs_diff(&normalized[j]);
            let pass = delta <= tol;
            all_pass &= pass;
            println!(
                "  {:<12} vs {:<12} max|dR| = {delta:.3e} [{}]",
                specs[i],
                specs[j],
                if pass { "pass" } else { "FAIL" }
            );
        }
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_tree_validate(file: PathBuf) -> Result<ExitCode, String> {
    let text = std::fs::read_to_string(&file)
        .map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    match parse_tree(&text) {
        Ok(tree) => {
            println!(
                "valid: p={} root={} rounds={} messages={}",
                tree.p(),
                tree.root(),
                tree.num_rounds(),
                tree.num_merges()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(tsqr::Error::TreeInvalid(msg)) => {
            println!("invalid: {msg}");
            Ok(ExitCode::from(1))
        }
        Err(other) => Err(other.to_string()),
    }
}
