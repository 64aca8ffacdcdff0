use std::io::{self, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corgw::diagrams::{self, TangencyProfile};
use corgw::lattice::oracle_local_invariant;
use corgw::polynomial::{polynomial_fit, Chamber, DiagramTemplate};
use corgw::qseries::{factorization_check, invariant_series};
use corgw::sigma::{local_invariant, local_mass};
use corgw::torsion::{json_number, GroupAlgebraElement, TorsionPoint};
use corgw::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "corgw", version, about = "Correlated Gromov-Witten invariants of P1-bundles over an elliptic curve")]
struct Cli {
    /// Worker threads (falls back to CORGW_THREADS, then all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    /// Force JSON output.
    #[arg(long, global = true, conflicts_with = "table")]
    json: bool,

    /// Force table output.
    #[arg(long, global = true)]
    table: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Local correlated invariant of a floor of class a with n ends.
    Local {
        #[arg(long)]
        a: u64,
        #[arg(long)]
        w1: u64,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        delta: u64,
        /// Translate by the torsion point (u,v) of level delta.
        #[arg(long, value_name = "U,V")]
        shift: Option<String>,
    },
    /// Compare the sublattice oracle with the closed form on a grid.
    OracleVerify {
        #[arg(long)]
        a_max: u64,
        #[arg(long)]
        delta_max: u64,
    },
    /// Enumerate floor diagrams, count them, or sum their multiplicities.
    Diagrams {
        #[arg(long)]
        g: u64,
        #[arg(long)]
        a: u64,
        #[arg(long, allow_hyphen_values = true)]
        profile: String,
        #[arg(long, default_value_t = 1)]
        delta: u64,
        #[command(flatten)]
        mode: DiagramMode,
    },
    /// Generating series in q as CSV.
    Series {
        #[arg(long)]
        g: u64,
        #[arg(long, allow_hyphen_values = true)]
        profile: String,
        #[arg(long, default_value_t = 1)]
        delta: u64,
        /// Truncation order.
        #[arg(long = "terms", short = 'N')]
        terms: usize,
        /// Also check the factorization into divisor-sum series; exit 3 on mismatch.
        #[arg(long)]
        check_factorization: bool,
    },
    /// Fit the contribution of a template by polynomials in the end weights.
    Polyfit {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        delta: u64,
        /// Residue class `m:r` imposed on every fit variable.
        #[arg(long, default_value = "1:0")]
        chamber: String,
        /// Fit profiles, separated by `;`.
        #[arg(long, allow_hyphen_values = true)]
        samples: Option<String>,
        /// Held-out profiles, separated by `;`.
        #[arg(long, allow_hyphen_values = true)]
        holdout: Option<String>,
        /// Fit values of w for the profile (w,-w).
        #[arg(long, value_delimiter = ',')]
        w: Vec<i64>,
        /// Held-out values of w for the profile (w,-w).
        #[arg(long, value_delimiter = ',')]
        holdout_w: Vec<i64>,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct DiagramMode {
    /// One JSON diagram per line.
    #[arg(long)]
    list: bool,
    /// Number of diagrams (the default).
    #[arg(long)]
    count: bool,
    /// Sum of correlated multiplicities at level delta.
    #[arg(long)]
    sum: bool,
}

enum Failure {
    Usage(String),
    Verification(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Consistency(_) => Failure::Internal(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

type Out<'a> = &'a mut dyn Write;

fn element_table(out: Out, x: &GroupAlgebraElement) -> io::Result<()> {
    writeln!(out, "delta {}", x.delta())?;
    writeln!(out, "{:>4} {:>4} {:>5}  coefficient", "u", "v", "order")?;
    for (p, c) in x.terms() {
        let (u, v) = p.coords();
        writeln!(out, "{u:>4} {v:>4} {:>5}  {c}", p.order())?;
    }
    writeln!(out, "mass {}", x.total_mass())
}

fn element_json(x: &GroupAlgebraElement) -> serde_json::Value {
    let mass = x.total_mass();
    let mut v = x.to_json_value();
    v["mass"] = json!({"num": json_number(mass.numer()), "den": json_number(mass.denom())});
    v
}

fn parse_shift(s: &str, delta: u64) -> Result<TorsionPoint, Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || Failure::Usage(format!("--shift expects u,v, got {s:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let u = parts[0].trim().parse::<u64>().map_err(|_| bad())?;
    let v = parts[1].trim().parse::<u64>().map_err(|_| bad())?;
    Ok(TorsionPoint::new(delta, u, v)?)
}

fn parse_profiles(s: &Option<String>, w: &[i64]) -> Result<Vec<TangencyProfile>, Failure> {
    let mut out = Vec::new();
    if let Some(s) = s {
        for part in s.split(';').filter(|p| !p.trim().is_empty()) {
            out.push(part.parse::<TangencyProfile>()?);
        }
    }
    for &x in w {
        out.push(TangencyProfile::new(vec![x, -x])?);
    }
    Ok(out)
}

fn run(cli: Cli, out: Out) -> Result<(), Failure> {
    let json = cli.json || (!cli.table && !io::stdout().is_terminal());
    match cli.command {
        Command::Local { a, w1, n, delta, shift } => {
            let shift = shift.map(|s| parse_shift(&s, delta)).transpose()?;
            let x = local_invariant(a, w1, n, delta, shift)?;
            if x.total_mass() != local_mass(a, w1, n)?.into() {
                return Err(Failure::Internal("mass of the local invariant is wrong".into()));
            }
            if json {
                writeln!(out, "{}", element_json(&x))?;
            } else {
                element_table(out, &x)?;
            }
        }
        Command::OracleVerify { a_max, delta_max } => {
            if a_max == 0 || delta_max == 0 {
                return Err(Failure::Usage("--a-max and --delta-max must be positive".into()));
            }
            let mut cases = 0u64;
            let mut mismatches = Vec::new();
            for a in 1..=a_max {
                for delta in 1..=delta_max {
                    for w1 in [delta, 2 * delta] {
                        for n in [2u32, 3] {
                            cases += 1;
                            if oracle_local_invariant(a, w1, n, delta)? != local_invariant(a, w1, n, delta, None)? {
                                mismatches.push(json!({"a": a, "delta": delta, "w1": w1, "n": n}));
                            }
                        }
                    }
                }
            }
            let pass = mismatches.is_empty();
            if json {
                writeln!(out, "{}", json!({"cases": cases, "pass": pass, "mismatches": mismatches}))?;
            } else {
                writeln!(out, "{cases} cases, {} mismatches: {}", mismatches.len(), if pass { "PASS" } else { "FAIL" })?;
                for m in &mismatches {
                    writeln!(out, "mismatch {m}")?;
                }
            }
            if !pass {
                return Err(Failure::Verification(format!("{} oracle mismatches", mismatches.len())));
            }
        }
        Command::Diagrams { g, a, profile, delta, mode } => {
            let p: TangencyProfile = profile.parse()?;
            p.check_delta(delta)?;
            if mode.list {
                for d in diagrams::enumerate(g, a, &p)? {
                    writeln!(out, "{}", d.to_json())?;
                }
            } else if mode.sum {
                let x = diagrams::invariant(g, a, &p, delta)?;
                if json {
                    writeln!(out, "{}", element_json(&x))?;
                } else {
                    element_table(out, &x)?;
                }
            } else {
                let n = diagrams::enumerate(g, a, &p)?.len();
                if json {
                    writeln!(out, "{}", json!({"count": n}))?;
                } else {
                    writeln!(out, "{n}")?;
                }
            }
        }
        Command::Series { g, profile, delta, terms, check_factorization } => {
            let p: TangencyProfile = profile.parse()?;
            p.check_delta(delta)?;
            let s = invariant_series(g, &p, delta, terms)?;
            write!(out, "{}", s.to_csv())?;
            if check_factorization {
                let r = factorization_check(g, &p, delta, terms)?;
                eprintln!(
                    "factorization over {} templates: {}",
                    r.templates.len(),
                    if r.passed() { "PASS" } else { "FAIL" }
                );
                if !r.passed() {
                    return Err(Failure::Verification(format!("series differ at a = {:?}", r.mismatches)));
                }
            }
        }
        Command::Polyfit { template, delta, chamber, samples, holdout, w, holdout_w } => {
            let text = std::fs::read_to_string(&template)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", template.display())))?;
            let t = DiagramTemplate::from_json(&text)?;
            let g = t.genus();
            if g < 1 {
                return Err(Failure::Usage(format!("template has genus {g}")));
            }
            t.check(g as u64)?;
            let chamber: Chamber = chamber.parse()?;
            let fit = parse_profiles(&samples, &w)?;
            let held = parse_profiles(&holdout, &holdout_w)?;
            if fit.is_empty() {
                return Err(Failure::Usage("no fit samples given".into()));
            }
            let r = polynomial_fit(&t, delta, chamber, &fit, &held)?;
            writeln!(out, "{}", r.to_json())?;
            if let Some(f) = r.failure {
                return Err(Failure::Verification(f));
            }
        }
    }
    Ok(())
}

fn threads(cli: &Cli) -> Result<Option<usize>, Failure> {
    if let Some(k) = cli.threads {
        return Ok(Some(k as usize));
    }
    match std::env::var("CORGW_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Some(k)),
            _ => Err(Failure::Usage(format!("CORGW_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads(&cli).and_then(|k| {
        if let Some(k) = k {
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .map_err(|e| Failure::Internal(e.to_string()))?;
        }
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        let r = run(cli, &mut lock);
        lock.flush()?;
        r
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}
