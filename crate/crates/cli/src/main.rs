//! `camix`: permutivity, Mixing Algorithm, measures, simulation and census.
//!
//! Exit status is 0 when the check passes, 2 for a negative verdict and 1 for
//! any operational error.

use std::error::Error;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use camix_core::engine::Stepper;
use camix_core::measure::Joint;
use camix_core::{
    check_k_mixing, detect_translates, minimal_apex_set, mixing_algorithm, parse_rule_with_warnings,
    preimage_census, write_pgm, ApexSet, Boxed, Budget, Cylinder, LocalRule, MaRule, MaTrace, Mode, Point, Symbol,
    TorusConfig, Window,
};
use clap::{Parser, Subcommand, ValueEnum};

type Res<T> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "camix", version, about = "Multidimensional cellular automata: permutivity and mixing checks")]
struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    porcelain: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Largest number of assignments an enumeration may visit.
    #[arg(long, global = true, default_value_t = Budget::default().0)]
    budget: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MixMode {
    Exact,
    Sampled,
}

#[derive(Subcommand)]
enum Command {
    /// Offsets at which the rule is permutive.
    Permutive {
        rule: PathBuf,
        /// Test every offset by enumeration, even for linear rules.
        #[arg(long)]
        brute_force: bool,
    },
    /// Run the Mixing Algorithm on an apex set, or on a rule's permutive extreme points.
    Ma {
        #[arg(long, conflicts_with = "rule", requires = "vertex")]
        apex: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        vertex: Option<Point>,
        #[arg(long)]
        rule: Option<PathBuf>,
    },
    /// Compare joint cylinder measures against the product of marginals.
    Mix {
        rule: PathBuf,
        /// Cylinder `(c1,..,cd)=s;...`; repeat for C_0, C_1, ...
        #[arg(long = "cyl", required = true, allow_hyphen_values = true)]
        cylinders: Vec<Cylinder>,
        /// Gaps `n1,..,nk`; repeat or separate rows with `;`.
        #[arg(long, required = true)]
        gaps: Vec<String>,
        #[arg(long, value_enum, default_value = "exact")]
        mode: MixMode,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Escape direction; rows with a gap at most n0 become informational.
        #[arg(long, allow_hyphen_values = true)]
        direction: Option<Point>,
    },
    /// Iterate the global map on a torus.
    Sim {
        rule: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        sides: Point,
        /// Motif in configuration format, pasted at `--at`.
        #[arg(long)]
        seed_pattern: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        at: Option<Point>,
        /// Start from a uniform random configuration with this seed.
        #[arg(long)]
        random_seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        steps: u64,
        /// Write a PGM frame every this many steps (0 disables).
        #[arg(long, default_value_t = 0)]
        pgm_every: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report translates of the motif.
        #[arg(long, requires = "seed_pattern")]
        detect_motif: bool,
        /// Steps at which to look for translates (default: the last).
        #[arg(long, value_delimiter = ',')]
        detect_at: Vec<u64>,
    },
    /// Preimage counts of every pattern on a window.
    Census {
        rule: PathBuf,
        /// Box `(lo):(hi)`.
        #[arg(long, allow_hyphen_values = true)]
        window: Boxed,
        /// Report only this pattern, symbols in window order separated by commas.
        #[arg(long, value_delimiter = ',')]
        pattern: Vec<Symbol>,
    },
}

/// Result of a subcommand: printed text and whether the check passed.
struct Outcome {
    text: String,
    pass: bool,
}

fn load_rule(path: &Path) -> Res<LocalRule> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (rule, warnings) = parse_rule_with_warnings(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    for w in warnings {
        eprintln!("warning: {}:{}: {}", path.display(), w.line, w.message);
    }
    Ok(rule)
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

fn cmd_permutive(rule: &LocalRule, brute: bool, budget: Budget, porcelain: bool) -> Res<Outcome> {
    let offsets = if brute {
        rule.permutive_offsets_brute_force(budget)?
    } else {
        rule.permutive_offsets(budget)?
    };
    let nbhd = ApexSet::new(rule.neighborhood().offsets().iter().cloned())?;
    let extreme = minimal_apex_set(&nbhd)?;
    let mut text = String::new();
    if porcelain {
        for o in &offsets {
            let kind = if extreme.contains(o) { "extreme" } else { "interior" };
            writeln!(text, "{o} {kind}")?;
        }
    } else {
        writeln!(text, "m={} d={} |D|={}", rule.m(), rule.dim(), rule.neighborhood().len())?;
        writeln!(text, "permutive at: {}", if offsets.is_empty() { "none".into() } else { join(&offsets, " ") })?;
        writeln!(text, "extreme points: {}", join(extreme.iter(), " "))?;
        let corner: Vec<&Point> = offsets.iter().filter(|o| extreme.contains(o)).collect();
        writeln!(text, "permutive extreme points: {}", if corner.is_empty() { "none".into() } else { join(corner, " ") })?;
    }
    Ok(Outcome { text, pass: !offsets.is_empty() })
}

fn ma_line(v: &Point, t: &MaTrace) -> String {
    match t.depth() {
        Some(d) => {
            let path: Vec<String> = t
                .accepting_path()
                .iter()
                .map(|s| match (s.rule, s.axis) {
                    (MaRule::Fail, _) | (_, None) => s.rule.to_string(),
                    (r, Some(j)) => format!("{r}:j={}", j + 1),
                })
                .collect();
            format!("{v} accepted {d} {}", path.join(">"))
        }
        None => format!("{v} rejected"),
    }
}

fn cmd_ma(apex: Option<PathBuf>, vertex: Option<Point>, rule: Option<PathBuf>, budget: Budget, porcelain: bool) -> Res<Outcome> {
    let runs: Vec<(ApexSet, Point)> = match (apex, rule) {
        (Some(path), None) => {
            let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let c = ApexSet::parse(&text)?;
            vec![(c, vertex.ok_or("--vertex is required with --apex")?)]
        }
        (None, Some(path)) => {
            let r = load_rule(&path)?;
            let c = minimal_apex_set(&ApexSet::new(r.neighborhood().offsets().iter().cloned())?)?;
            let vs: Vec<Point> = match vertex {
                Some(v) => vec![v],
                None => r.permutive_offsets(budget)?.into_iter().filter(|o| c.contains(o)).collect(),
            };
            if vs.is_empty() {
                let text = if porcelain { String::new() } else { "no permutive extreme point\n".into() };
                return Ok(Outcome { text, pass: false });
            }
            vs.into_iter().map(|v| (c.clone(), v)).collect()
        }
        _ => return Err("give either --apex with --vertex, or --rule".into()),
    };
    let mut text = String::new();
    let mut pass = false;
    for (c, v) in runs {
        let t = mixing_algorithm(&c, &v)?;
        pass |= t.accepted();
        if porcelain {
            writeln!(text, "{}", ma_line(&v, &t))?;
        } else {
            writeln!(text, "C = {c}, v = {v}")?;
            writeln!(text, "{t}")?;
        }
    }
    Ok(Outcome { text, pass })
}

fn parse_rows(gaps: &[String]) -> Res<Vec<Vec<u64>>> {
    let mut rows = Vec::new();
    for g in gaps {
        for row in g.split(';').map(str::trim).filter(|r| !r.is_empty()) {
            let r: Result<Vec<u64>, _> = row.split(',').map(|x| x.trim().parse::<u64>()).collect();
            rows.push(r.map_err(|_| format!("bad gap row {row:?}"))?);
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn cmd_mix(
    rule: &LocalRule,
    cylinders: &[Cylinder],
    gaps: &[String],
    mode: MixMode,
    trials: u64,
    seed: u64,
    direction: Option<Point>,
    budget: Budget,
    porcelain: bool,
) -> Res<Outcome> {
    let rows = parse_rows(gaps)?;
    let mode = match mode {
        MixMode::Exact => Mode::Exact,
        MixMode::Sampled => Mode::Sampled { trials, seed },
    };
    let report = check_k_mixing(rule, cylinders, &rows, &mode, direction.as_ref(), budget)?;
    let mut text = if porcelain { report.porcelain() } else { format!("{report}\n") };
    if !porcelain && cylinders.len() == 1 {
        for row in &report.rows {
            if let Joint::Exact(e) = row.joint {
                let state = if e.is_zero() { "empty" } else { "nonempty" };
                writeln!(text, "lag {}: preimage of {} is {state}", row.lags[0], cylinders[0])?;
            }
        }
    }
    Ok(Outcome { text, pass: report.holds() })
}

#[allow(clippy::too_many_arguments)]
fn cmd_sim(
    rule: &LocalRule,
    sides: &Point,
    seed_pattern: Option<PathBuf>,
    at: Option<Point>,
    random_seed: Option<u64>,
    steps: u64,
    pgm_every: u64,
    out: Option<PathBuf>,
    detect_motif: bool,
    detect_at: Vec<u64>,
    porcelain: bool,
) -> Res<Outcome> {
    if sides.coords().iter().any(|&s| s < 1) {
        return Err("torus sides must be positive".into());
    }
    let sides: Vec<usize> = sides.coords().iter().map(|&s| s as usize).collect();
    let m = rule.m();
    let mut cfg = match random_seed {
        Some(s) => TorusConfig::random(m, &sides, s, 0)?,
        None => TorusConfig::zeros(m, &sides)?,
    };
    let at = at.unwrap_or_else(|| Point::origin(sides.len()));
    let motif = match &seed_pattern {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mc = TorusConfig::from_text(&text, m)?;
            let b = Boxed::with_sides(Point::origin(mc.dim()), mc.sides()).ok_or("empty motif")?;
            let w = Window::new(b, mc.cells().to_vec())?;
            cfg.paste(&w, &at)?;
            Some(w)
        }
        None => None,
    };
    if let Some(dir) = &out {
        fs::create_dir_all(dir)?;
    }
    let detect_at = if detect_at.is_empty() { vec![steps] } else { detect_at };
    let stepper = Stepper::new(rule, &sides)?;
    let mut next = cfg.clone();
    let mut text = String::new();
    for t in 0..=steps {
        if t > 0 {
            stepper.step_into(&cfg, &mut next)?;
            std::mem::swap(&mut cfg, &mut next);
        }
        if pgm_every > 0 && t % pgm_every == 0 {
            let dir = out.as_deref().unwrap_or(Path::new("."));
            write_pgm(&cfg, dir.join(format!("step_{t:06}.pgm")))?;
        }
        if detect_motif && detect_at.contains(&t) {
            let w = motif.as_ref().expect("clap requires --seed-pattern");
            let hits: Vec<Point> = detect_translates(&cfg, w)
                .into_iter()
                .map(|p| {
                    let rel: Vec<i64> =
                        (0..p.dim()).map(|j| (p.get(j) - at.get(j)).rem_euclid(sides[j] as i64)).collect();
                    Point::new(rel)
                })
                .collect();
            let mut hits = hits;
            hits.sort();
            if porcelain {
                writeln!(text, "{t} {} {}", hits.len(), join(&hits, " ").trim_end())?;
            } else {
                writeln!(text, "step {t}: {} translate(s) of the motif at offsets {}", hits.len(), join(&hits, " "))?;
            }
        }
    }
    if let Some(dir) = &out {
        fs::write(dir.join("final.cfg"), cfg.to_text())?;
    }
    if !porcelain {
        writeln!(text, "after {steps} steps: {} nonzero cells of {}", cfg.population(), cfg.len())?;
    }
    Ok(Outcome { text, pass: true })
}

fn cmd_census(rule: &LocalRule, window: &Boxed, pattern: &[Symbol], budget: Budget, porcelain: bool) -> Res<Outcome> {
    let census = preimage_census(rule, window, budget)?;
    if pattern.is_empty() {
        let text = if porcelain { census.porcelain() } else { format!("{census}\n") };
        return Ok(Outcome { text, pass: census.is_balanced() });
    }
    let count = census
        .count_of(pattern)
        .ok_or_else(|| format!("pattern needs {} symbols below {}", window.len(), rule.m()))?;
    let state = if count == 0 { "empty" } else { "nonempty" };
    let shown = census.render_pattern(pattern);
    let text = if porcelain {
        format!("{shown} {count} {state}\n")
    } else {
        format!(
            "pattern {shown} on {window}: {count} preimages of {} on {} ({state})\n",
            census.total(),
            census.extension()
        )
    };
    Ok(Outcome { text, pass: count > 0 })
}

fn run(cli: Cli) -> Res<Outcome> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let budget = Budget(cli.budget);
    let porcelain = cli.porcelain;
    match cli.command {
        Command::Permutive { rule, brute_force } => cmd_permutive(&load_rule(&rule)?, brute_force, budget, porcelain),
        Command::Ma { apex, vertex, rule } => cmd_ma(apex, vertex, rule, budget, porcelain),
        Command::Mix { rule, cylinders, gaps, mode, trials, seed, direction } => {
            cmd_mix(&load_rule(&rule)?, &cylinders, &gaps, mode, trials, seed, direction, budget, porcelain)
        }
        Command::Sim { rule, sides, seed_pattern, at, random_seed, steps, pgm_every, out, detect_motif, detect_at } => {
            cmd_sim(
                &load_rule(&rule)?,
                &sides,
                seed_pattern,
                at,
                random_seed,
                steps,
                pgm_every,
                out,
                detect_motif,
                detect_at,
                porcelain,
            )
        }
        Command::Census { rule, window, pattern } => cmd_census(&load_rule(&rule)?, &window, &pattern, budget, porcelain),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(o) => {
            print!("{}", o.text);
            ExitCode::from(if o.pass { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
