use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;

use bitlsh::index::default_delta;
use bitlsh::io::{self as dsio, Dataset};
use bitlsh::stats::{Suite, CSV_HEADER};
use bitlsh::{derive_params, query_hp, Answer, BitVector, LshIndex, QueryOutcome};

use crate::Outcome;

const PARAMS_HEADER: &str = "n,d,r,eps,c,p,t,L,q_near,delta_fail";
const QUERY_HEADER: &str =
    "query_id,kind,witness_id,distance,candidates_scanned,tables_probed,wall_micros";
const BENCH_HEADER: &str =
    "repeat,n,t,L,queries,found,mean_candidates_scanned,mean_tables_probed,mean_wall_micros";

/// Minimum trials for `verify`; fewer leave the standard error meaningless.
const MIN_VERIFY_TRIALS: u64 = 100;

fn read_input(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    if path.as_os_str() == "-" {
        io::stdin().read_to_end(&mut bytes)?;
    } else {
        bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(bytes)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.as_os_str() == "-" {
        let mut out = io::stdout().lock();
        out.write_all(bytes)?;
        out.flush()?;
    } else {
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = read_input(path)?;
    dsio::read_any_from(bytes.as_slice())
        .with_context(|| format!("loading dataset {}", path.display()))
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Near radius; other points are kept beyond max(r, plant).
    #[arg(long)]
    r: usize,
    /// Distance of the planted neighbor from the query.
    #[arg(long)]
    plant: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset output path (binary format).
    #[arg(long)]
    out: PathBuf,
    /// Query output path (text format). Defaults to `<out>.query`.
    #[arg(long)]
    query_out: Option<PathBuf>,
}

pub fn gen(args: GenArgs) -> Result<Outcome> {
    if args.plant > args.d {
        bail!("--plant {} exceeds --d {}", args.plant, args.d);
    }
    let query_out = match args.query_out {
        Some(p) => p,
        None if args.out.as_os_str() == "-" => bail!("--query-out is required when --out is -"),
        None => {
            let mut name = args.out.clone().into_os_string();
            name.push(".query");
            PathBuf::from(name)
        }
    };
    let inst = dsio::gen_planted(args.n, args.d, args.r, args.plant, args.seed)?;
    write_output(&args.out, &dsio::encode_bin(&inst.dataset))?;
    write_output(&query_out, format!("{}\n", inst.query).as_bytes())?;
    if args.out.as_os_str() != "-" {
        println!("{}", inst.planted_id);
    } else {
        eprintln!("planted id {}", inst.planted_id);
    }
    Ok(Outcome::Ok)
}

#[derive(Args)]
pub struct BuildArgs {
    /// Dataset path (binary or text, `-` for stdin).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    eps: f64,
    /// Target failure probability; defaults to 1/n.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Snapshot output path.
    #[arg(long)]
    out: PathBuf,
}

/// Derives parameters and writes a snapshot. Prints one CSV row with columns
/// `n,d,r,eps,c,p,t,L,q_near,delta_fail` to stdout.
pub fn build(args: BuildArgs) -> Result<Outcome> {
    let ds = read_dataset(&args.input)?;
    let delta = args.delta.unwrap_or_else(|| default_delta(ds.len()));
    let params = derive_params(ds.len(), ds.dim(), args.r, args.eps, delta)?;
    let ix = LshIndex::build(ds.into_vectors(), params, args.seed)?;
    write_output(&args.out, &ix.snapshot())?;
    let p = ix.params();
    let mut out = io::stdout().lock();
    writeln!(out, "{PARAMS_HEADER}")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        p.n, p.d, p.r, p.eps, p.c, p.p, p.t, p.l, p.q_near, p.delta_fail
    )?;
    Ok(Outcome::Ok)
}

#[derive(Args)]
#[command(
    after_help = "Output columns: query_id,kind,witness_id,distance,candidates_scanned,tables_probed,wall_micros\n\
kind is one of found, none, error. witness_id and distance are empty unless kind is found."
)]
pub struct QueryArgs {
    /// Snapshot written by `build`.
    #[arg(long)]
    index: PathBuf,
    /// Query vectors (binary or text, `-` for stdin). Text lines are parsed one by one.
    #[arg(long)]
    queries: PathBuf,
    /// Abort a scan after budget x L candidates and retry on the next index.
    #[arg(long)]
    budget: Option<f64>,
    /// Number of independently built indexes to query in turn.
    #[arg(long, default_value_t = 1)]
    bank: usize,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

/// One query per entry; text lines that fail to parse become `Err` rows.
fn read_queries(path: &Path) -> Result<Vec<Result<BitVector, String>>> {
    let bytes = read_input(path)?;
    if bytes.starts_with(dsio::BIN_MAGIC) {
        let ds = dsio::decode_bin(&bytes)?;
        return Ok(ds.into_vectors().into_iter().map(Ok).collect());
    }
    let text = String::from_utf8_lossy(&bytes);
    Ok(text
        .lines()
        .map(|line| BitVector::parse(line).map_err(|e| e.to_string()))
        .collect())
}

/// Seed of the `i`th extra index in a query bank.
fn bank_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

fn outcome_row(id: usize, out: &QueryOutcome, micros: u128) -> String {
    let (kind, witness, dist) = match out.answer {
        Answer::Found { id, distance } => ("found", id.to_string(), distance.to_string()),
        Answer::NoneWithinR => ("none", String::new(), String::new()),
    };
    format!(
        "{id},{kind},{witness},{dist},{},{},{micros}",
        out.candidates_scanned, out.tables_probed
    )
}

pub fn query(args: QueryArgs) -> Result<Outcome> {
    if args.bank == 0 {
        bail!("--bank must be at least 1");
    }
    if let Some(b) = args.budget {
        if !(b.is_finite() && b > 0.0) {
            bail!("--budget must be positive, got {b}");
        }
    }
    let bytes = read_input(&args.index)?;
    let first = LshIndex::restore(&bytes).context("loading index snapshot")?;
    let mut bank = vec![first];
    for i in 1..args.bank {
        let base = &bank[0];
        let ix = LshIndex::build(
            base.points().to_vec(),
            base.params().clone(),
            bank_seed(base.seed(), i),
        )?;
        bank.push(ix);
    }
    let budgeted = args.bank > 1 || args.budget.is_some();
    let budget = args.budget.unwrap_or(2.0);

    let mut csv = String::new();
    csv.push_str(QUERY_HEADER);
    csv.push('\n');
    for (id, q) in read_queries(&args.queries)?.into_iter().enumerate() {
        let start = Instant::now();
        let result = q.map_err(anyhow::Error::msg).and_then(|q| {
            if budgeted {
                Ok(query_hp(&bank, &q, budget)?)
            } else {
                Ok(bank[0].query(&q)?)
            }
        });
        let micros = start.elapsed().as_micros();
        match result {
            Ok(out) => csv.push_str(&outcome_row(id, &out, micros)),
            Err(e) => {
                eprintln!("query {id}: {e:#}");
                csv.push_str(&format!("{id},error,,,,,{micros}"));
            }
        }
        csv.push('\n');
    }
    write_output(&args.out, csv.as_bytes())?;
    Ok(Outcome::Ok)
}

#[derive(Args)]
#[command(
    after_help = "Output columns: quantity,trials,empirical,theoretical,stderr,z\n\
Exit status 0 when the estimate is within 3 standard errors of theory, 2 otherwise."
)]
pub struct VerifyArgs {
    /// One of lemma1, lemma2a, lemma2b.
    #[arg(long)]
    suite: String,
    /// Monte Carlo trials (at least 100); defaults per suite.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn verify(args: VerifyArgs) -> Result<Outcome> {
    let Some(suite) = Suite::parse(&args.suite) else {
        bail!(
            "unknown suite {:?}; expected lemma1, lemma2a or lemma2b",
            args.suite
        );
    };
    let trials = args.trials.unwrap_or(suite.default_trials());
    if trials < MIN_VERIFY_TRIALS {
        bail!("--trials must be at least {MIN_VERIFY_TRIALS}, got {trials}");
    }
    let report = suite.run(trials, args.seed)?;
    println!("{CSV_HEADER}");
    println!("{}", report.csv_row());
    eprintln!("{report}");
    Ok(if report.passes(3.0) {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

#[derive(Args)]
#[command(
    after_help = "Output columns: repeat,n,t,L,queries,found,mean_candidates_scanned,mean_tables_probed,mean_wall_micros\n\
One block of rows per repeat; prefixes are n/4, n/2 and n of the dataset."
)]
pub struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

/// Distinct prefix sizes n/4, n/2, n (at least 1 each).
fn prefix_sizes(n: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = [n / 4, n / 2, n].into_iter().map(|s| s.max(1)).collect();
    sizes.dedup();
    sizes
}

pub fn bench(args: BenchArgs) -> Result<Outcome> {
    let ds = read_dataset(&args.input)?;
    let queries = read_dataset(&args.queries)?;
    if queries.dim() != ds.dim() {
        bail!(
            "queries have dimension {}, dataset has {}",
            queries.dim(),
            ds.dim()
        );
    }
    if args.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let mut csv = String::new();
    csv.push_str(BENCH_HEADER);
    csv.push('\n');
    for repeat in 0..args.repeats {
        for n in prefix_sizes(ds.len()) {
            let prefix = ds.prefix(n)?;
            let params = derive_params(n, ds.dim(), args.r, args.eps, default_delta(n))?;
            let ix = LshIndex::build(prefix.into_vectors(), params, args.seed)?;
            let (mut found, mut cands, mut probes, mut micros) = (0u64, 0u64, 0u64, 0u128);
            for q in queries.vectors() {
                let start = Instant::now();
                let out = ix.query(q)?;
                micros += start.elapsed().as_micros();
                found += out.is_found() as u64;
                cands += out.candidates_scanned;
                probes += out.tables_probed;
            }
            let m = queries.len() as f64;
            let p = ix.params();
            csv.push_str(&format!(
                "{repeat},{n},{},{},{},{found},{},{},{}\n",
                p.t,
                p.l,
                queries.len(),
                cands as f64 / m,
                probes as f64 / m,
                micros as f64 / m
            ));
        }
    }
    write_output(&args.out, csv.as_bytes())?;
    Ok(Outcome::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes() {
        assert_eq!(prefix_sizes(1), vec![1]);
        assert_eq!(prefix_sizes(2), vec![1, 2]);
        assert_eq!(prefix_sizes(8192), vec![2048, 4096, 8192]);
    }
}
