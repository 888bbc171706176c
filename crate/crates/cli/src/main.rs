//! Command-line front end: each subcommand dispatches to one library
//! operation, reads defaults from an optional TOML config file
//! (flags override config keys), and writes deterministic CSV/JSON/SVG
//! artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use latrest::bodies::Body;
use latrest::discrepancy::{self, WindowRule};
use latrest::lattice::Budget;
use latrest::{fourier, mollifier, rotations, Error};

#[derive(Parser)]
#[command(name = "latrest", version, about = "Lattice rests and mean-square discrepancies of dilated convex bodies")]
struct Cli {
    /// TOML config file; sections `[global]` and `[<subcommand>]`
    /// supply defaults which flags override.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV/JSON/SVG artifacts (stdout only when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rayon thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Enumeration budget in gauge events.
    #[arg(long, global = true)]
    budget: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct BodyArg {
    /// Body descriptor, e.g. `ball:d=2,r=1`, `ellipsoid:a=2,b=1`,
    /// `superellipse:m=4,a=1,b=1`, `superellipse-polar:m=4,a=1,b=1`,
    /// with optional `,theta=...` rotation.
    #[arg(long)]
    body: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Count lattice points in the closed dilate t*body.
    Count {
        #[command(flatten)]
        body: BodyArg,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Windowed mean-square discrepancy over [r, r+h].
    Msd {
        #[command(flatten)]
        body: BodyArg,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        /// Integrate the absolute rest instead of the relative one.
        #[arg(long)]
        absolute: bool,
    },
    /// Sweep G(R) over a dyadic R grid and fit the log-log slope.
    Sweep {
        #[command(flatten)]
        body: BodyArg,
        /// Smallest R as a power of two.
        #[arg(long)]
        pow_lo: Option<u32>,
        /// Largest R as a power of two.
        #[arg(long)]
        pow_hi: Option<u32>,
        /// Window rule: `full`, `short`, or `fixed:<h>`.
        #[arg(long)]
        rule: Option<String>,
    },
    /// Mollified count and rest at a single dilation.
    Mollify {
        #[command(flatten)]
        body: BodyArg,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Compare the truncated Poisson rest against the direct mollified rest.
    PoissonCheck {
        #[command(flatten)]
        body: BodyArg,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        k_max: Option<u64>,
        /// Certified tail tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Scan |chi_hat| decay over a log grid of frequencies.
    FourierScan {
        #[command(flatten)]
        body: BodyArg,
        #[arg(long)]
        xi_lo: Option<f64>,
        #[arg(long)]
        xi_hi: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        /// Semicolon-separated direction vectors, e.g. `1,0;0.6,0.8`.
        #[arg(long)]
        directions: Option<String>,
    },
    /// Diophantine diagnostics over a grid of rotation angles.
    RotateScan {
        #[command(flatten)]
        body: BodyArg,
        /// Comma-separated angles in radians.
        #[arg(long)]
        angles: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        k_max: Option<i64>,
        /// Also compute the short-window discrepancy of each rotated
        /// body at this scale.
        #[arg(long)]
        r_scale: Option<f64>,
    },
    /// Shell-count bound diagnostic at one (tau, eps).
    Diag {
        #[command(flatten)]
        body: BodyArg,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Count { .. } => "count",
            Cmd::Msd { .. } => "msd",
            Cmd::Sweep { .. } => "sweep",
            Cmd::Mollify { .. } => "mollify",
            Cmd::PoissonCheck { .. } => "poisson-check",
            Cmd::FourierScan { .. } => "fourier-scan",
            Cmd::RotateScan { .. } => "rotate-scan",
            Cmd::Diag { .. } => "diag",
        }
    }
}

/// Config file contents plus the section the current subcommand reads.
struct Cfg {
    table: toml::Table,
    section: String,
}

impl Cfg {
    fn load(path: Option<&Path>, section: &str) -> latrest::Result<Cfg> {
        let table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| {
                    Error::Precondition(format!("config {}: {e}", p.display()))
                })?
            }
        };
        Ok(Cfg {
            table,
            section: section.to_string(),
        })
    }

    fn get(&self, section: &str, key: &str) -> Option<&toml::Value> {
        self.table.get(section)?.as_table()?.get(key)
    }

    fn f64(&self, key: &str) -> latrest::Result<Option<f64>> {
        match self.get(&self.section, key) {
            None => Ok(None),
            Some(v) => v
                .as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .map(Some)
                .ok_or_else(|| bad_key(&self.section, key, "number")),
        }
    }

    fn int<T: TryFrom<i64>>(&self, key: &str) -> latrest::Result<Option<T>> {
        match self.get(&self.section, key) {
            None => Ok(None),
            Some(v) => {
                let i = v
                    .as_integer()
                    .ok_or_else(|| bad_key(&self.section, key, "integer"))?;
                T::try_from(i)
                    .map(Some)
                    .map_err(|_| bad_key(&self.section, key, "integer in range"))
            }
        }
    }

    fn str(&self, key: &str) -> latrest::Result<Option<String>> {
        match self.get(&self.section, key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| bad_key(&self.section, key, "string")),
        }
    }

    fn global_int<T: TryFrom<i64>>(&self, key: &str) -> latrest::Result<Option<T>> {
        match self.get("global", key) {
            None => Ok(None),
            Some(v) => {
                let i = v
                    .as_integer()
                    .ok_or_else(|| bad_key("global", key, "integer"))?;
                T::try_from(i)
                    .map(Some)
                    .map_err(|_| bad_key("global", key, "integer in range"))
            }
        }
    }

    fn global_str(&self, key: &str) -> latrest::Result<Option<String>> {
        match self.get("global", key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| bad_key("global", key, "string")),
        }
    }
}

fn bad_key(section: &str, key: &str, want: &str) -> Error {
    Error::Precondition(format!("config [{section}] {key}: expected {want}"))
}

fn require<T>(flag: Option<T>, cfg_val: Option<T>, name: &str) -> latrest::Result<T> {
    flag.or(cfg_val)
        .ok_or_else(|| Error::Precondition(format!("missing required parameter `{name}` (flag or config)")))
}

fn parse_body(s: &str) -> latrest::Result<Body> {
    Body::from_str(s)
}

/// Serialize with a `meta` block so every artifact records how it was made.
fn json_artifact<T: serde::Serialize>(
    meta: &[(&str, String)],
    data: &T,
) -> latrest::Result<String> {
    let mut m = serde_json::Map::new();
    for (k, v) in meta {
        m.insert(k.to_string(), serde_json::Value::String(v.clone()));
    }
    let doc = serde_json::json!({
        "meta": serde_json::Value::Object(m),
        "data": serde_json::to_value(data).map_err(to_io)?,
    });
    serde_json::to_string_pretty(&doc).map_err(to_io)
}

fn to_io(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn csv_meta(meta: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    s
}

fn base_meta(body: &Body, params: &str) -> Vec<(&'static str, String)> {
    vec![
        ("tool", format!("latrest {}", env!("CARGO_PKG_VERSION"))),
        ("body", body.to_string()),
        ("params", params.to_string()),
    ]
}

fn write_artifact(out: &Path, name: &str, contents: &str) -> latrest::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), contents)?;
    Ok(())
}

/// Decorative log-log scatter plot with an optional fitted line.
/// Fixed-precision formatting keeps identical inputs byte-identical.
fn emit_plot(
    xs: &[f64],
    ys: &[f64],
    fit: Option<(f64, f64)>,
    title: &str,
) -> latrest::Result<String> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Precondition("plot needs a nonempty table".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.max(1e-300).log10()).collect();
    let (x0, x1) = span(&lx);
    let (y0, y1) = span(&ly);
    let (w, h, m) = (640.0, 480.0, 60.0);
    let px = |x: f64| m + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * m);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<text x=\"{:.1}\" y=\"24\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    ));
    s.push_str(&format!(
        "<rect x=\"{m}\" y=\"{m}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * m,
        h - 2.0 * m
    ));
    if let Some((slope, intercept)) = fit {
        // fitted line in natural-log coordinates: ln y = a ln x + b
        let fy = |x10: f64| (slope * (x10 * std::f64::consts::LN_10) + intercept) / std::f64::consts::LN_10;
        s.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n",
            px(x0), py(fy(x0)), px(x1), py(fy(x1))
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\">slope {:.4}</text>\n",
            m + 8.0, m + 16.0, slope
        ));
    }
    for (x, y) in lx.iter().zip(&ly) {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"crimson\"/>\n",
            px(*x),
            py(*y)
        ));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn span(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::BudgetExceeded { .. }
                | Error::Convergence(_)
                | Error::TailTooLarge { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> latrest::Result<()> {
    let cfg = Cfg::load(cli.config.as_deref(), cli.cmd.name())?;
    if let Some(n) = cli.threads.or(cfg.global_int::<usize>("threads")?) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    }
    let budget = Budget {
        max_events: cli
            .budget
            .or(cfg.global_int::<u64>("budget")?)
            .unwrap_or(Budget::default().max_events),
    };
    let out = cli
        .out
        .or(cfg.global_str("out")?.map(PathBuf::from));

    match cli.cmd {
        Cmd::Count { body, t } => {
            let body = parse_body(&require(body.body, cfg.str("body")?, "body")?)?;
            let t = require(t, cfg.f64("t")?, "t")?;
            let n = latrest::lattice::count_points(&body, t, &budget)?;
            println!("{n}");
            if let Some(dir) = &out {
                let meta = base_meta(&body, &format!("t = {t:.17e}"));
                let doc = json_artifact(&meta, &serde_json::json!({ "t": t, "count": n }))?;
                write_artifact(dir, "count.json", &doc)?;
            }
        }
        Cmd::Msd { body, r, h, absolute } => {
            let body = parse_body(&require(body.body, cfg.str("body")?, "body")?)?;
            let r = require(r, cfg.f64("r")?, "r")?;
            let h = require(h, cfg.f64("h")?, "h")?;
            let stat = discrepancy::window_msd(&body, r, h, !absolute, &budget)?;
            println!("{}", serde_json::to_string_pretty(&stat).map_err(to_io)?);
            if let Some(dir) = &out {
                let meta = base_meta(&body, &format!("r = {r:.17e}, h = {h:.17e}, relative = {}", !absolute));
                write_artifact(dir, "msd.json", &json_artifact(&meta, &stat)?)?;
            }
        }
        Cmd::Sweep { body, pow_lo, pow_hi, rule } => {
            let body = parse_body(&require(body.body, cfg.str("body")?, "body")?)?;
            let lo = require(pow_lo, cfg.int::<u32>("pow_lo")?, "pow_lo")?;
            let hi = require(pow_hi, cfg.int::<u32>("pow_hi")?, "pow_hi")?;
            let rule_s = rule.or(cfg.str("rule")?).unwrap_or_else(|| "full".into());
            let rule = parse_rule(&rule_s)?;
            if hi < lo {
                return Err(Error::Precondition("pow_hi must be >= pow_lo".into()));
            }
            let grid: Vec<f64> = (lo..=hi).map(|p| (1u64 << p) as f64).collect();
            let rep = discrepancy::sweep_and_fit(&body, &grid, rule, &budget)?;
            println!("slope = {:.6} +- {:.6}", rep.fit.slope, rep.fit.ci_halfwidth);
            if let Some(dir) = &out {
                let meta = base_meta(
                    &body,
                    &format!("R = 2^{lo}..2^{hi}, rule = {rule_s}"),
                );
                let mut csv = csv_meta(&meta);
                csv.push_str(&rep.table.to_csv());
                write_artifact(dir, "sweep.csv", &csv)?;
                write_artifact(dir, "sweep.json", &json_artifact(&meta, &rep)?)?;
                let xs: Vec<f64> = rep.table.rows.iter().map(|r| r.r).collect();
                let ys: Vec<f64> = rep.table.rows.iter().map(|r| r.g).collect();
                let svg = emit_plot(
                    &xs,
                    &ys,
                    Some((rep.fit.slope, rep.fit.intercept)),
                    &format!("G(R), {body}"),
                )?;
                write_artifact(dir, "sweep.svg", &svg)?;
            }
        }
        Cmd::Mollify { body, t, eps } => {
            let body = parse_body(&require(body.body, cfg.str("body")?, "body")?)?;
            let t = require(t, cfg.f64("t")?, "t")?;
            let eps = require(eps, cfg.f64("eps")?, "eps")?;
            let count = mollifier::mollified_count(&body, t, eps, &budget)?;
            let rest = mollifier::mollified_rest(&body, t, eps, &budget)?;
            let data = serde_json::json!({ "t": t, "eps": eps, "count": count, "rest": rest });
            println!("{}", serde_json::to_string_pretty(&data).map_err(to_io)?);
            if let Some(dir) = &out {
                let meta = base_meta(&body, &format!("t = {t:.17e}, eps = {eps:.17e}"));
                write_artifact(dir, "mollify.json", &json_artifact(&meta, &data)?)?;
            }
        }
        Cmd::PoissonCheck { body, t, eps, k_max, tol } => {
            let body = parse_body(&require(body.body, cfg.str("body")?, "body")?)?;
            let t = require(t, cfg.f64("t")?, "t")?;
            let eps = require(eps, cfg.f64("eps")?, "eps")?;
            let k_max = require(k_max, cfg.int::<u64>("k_max")?, "k_max")?;
            let tol = tol.or(cfg.f64("tol")?).unwrap_or(1e-3);
            let poisson = fourier::poisson_rest(&body, t, eps, k_max, tol)?;
            let direct = mollifier::mollified_rest(&body, t, eps, &budget)?;
            let data = serde_json::json!({
                "poisson": poisson,
                "direct_rest": direct,
                "abs_difference": (poisson.value - direct).abs(),
            });
            println!("{}", serde_json::to_string_pretty(&data).map_err(to_io)?);
            if let Some(dir) = &out {
                let meta = base_meta(
                    &body,
                    &format!("t = {t:.17e}, eps = {eps:.17e}, k_max = {k_max}, tol = {tol:.17e}"),
                );
                write_artifact(dir, "poisson-check.json", &json_artifact(&meta, &data)?)?;
            }
        }
        Cmd::FourierScan { body, xi_lo, xi_hi, n, directions } => {
            let body = parse_body(&require(body.body, cfg.str("body")?, "body")?)?;
            let lo = xi_lo.or(cfg.f64("xi_lo")?).unwrap_or(1.0);
            let hi = xi_hi.or(cfg.f64("xi_hi")?).unwrap_or(1000.0);
            let n = n.or(cfg.int::<usize>("n")?).unwrap_or(60);
            if !(lo > 0.0 && hi > lo && n >= 2) {
                return Err(Error::Precondition("need 0 < xi_lo < xi_hi and n >= 2".into()));
            }
            let grid: Vec<f64> = (0..n)
                .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
                .collect();
            let dirs = match directions.or(cfg.str("directions")?) {
                Some(s) => parse_directions(&s)?,
                None => default_directions(body.dim()),
            };
            let scan = fourier::decay_scan(&body, &grid, &dirs)?;
            println!(
                "sup (1+|xi|)^{{3/2}} |chi_hat| = {:.6}",
                scan.sup_scaled
            );
            if let Some(dir) = &out {
                let meta = base_meta(
                    &body,
                    &format!("|xi| = {lo:.17e}..{hi:.17e}, n = {n}, directions = {}", dirs.len()),
                );
                let mut csv = csv_meta(&meta);
                csv.push_str(&scan.to_csv());
                write_artifact(dir, "fourier-scan.csv", &csv)?;
                write_artifact(dir, "fourier-scan.json", &json_artifact(&meta, &scan)?)?;
                let xs: Vec<f64> = scan.rows.iter().map(|r| r.xi_norm).collect();
                let ys: Vec<f64> = scan.rows.iter().map(|r| r.abs_ft).collect();
                let svg = emit_plot(&xs, &ys, None, &format!("|chi_hat|, {body}"))?;
                write_artifact(dir, "fourier-scan.svg", &svg)?;
            }
        }
        Cmd::RotateScan { body, angles, eps, k_max, r_scale } => {
            let body = parse_body(&require(body.body, cfg.str("body")?, "body")?)?;
            let angles_s = require(angles, cfg.str("angles")?, "angles")?;
            let angles: Vec<f64> = angles_s
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Precondition(format!("angle `{s}`: {e}")))
                })
                .collect::<latrest::Result<_>>()?;
            let eps = eps.or(cfg.f64("eps")?).unwrap_or(0.1);
            let k_max = k_max.or(cfg.int::<i64>("k_max")?).unwrap_or(100_000);
            let r_scale = r_scale.or(cfg.f64("r_scale")?);
            let reports = rotations::rotation_scan(&body, &angles, eps, k_max, r_scale, &budget)?;
            for r in &reports {
                let worst = if r.flats.iter().any(|f| f.unbounded) {
                    "inf".to_string()
                } else {
                    format!(
                        "{:.6}",
                        r.flats.iter().map(|f| f.m_hat).fold(0.0f64, f64::max)
                    )
                };
                println!("theta = {:.6}: M_hat = {worst}, cond = {:.6e}", r.theta, r.condition.stat);
            }
            if let Some(dir) = &out {
                let meta = base_meta(
                    &body,
                    &format!("eps = {eps:.17e}, K = {k_max}, angles = {}", reports.len()),
                );
                let mut csv = csv_meta(&meta);
                csv.push_str(rotations::RotationReport::csv_header());
                csv.push('\n');
                for r in &reports {
                    csv.push_str(&r.csv_rows());
                }
                write_artifact(dir, "rotate-scan.csv", &csv)?;
                write_artifact(dir, "rotate-scan.json", &json_artifact(&meta, &reports)?)?;
            }
        }
        Cmd::Diag { body, tau, eps } => {
            let body = parse_body(&require(body.body, cfg.str("body")?, "body")?)?;
            let tau = require(tau, cfg.f64("tau")?, "tau")?;
            let eps = require(eps, cfg.f64("eps")?, "eps")?;
            let diag = mollifier::shell_bound_diag(&body, tau, eps, &budget)?;
            println!("{}", serde_json::to_string_pretty(&diag).map_err(to_io)?);
            if let Some(dir) = &out {
                let meta = base_meta(&body, &format!("tau = {tau:.17e}, eps = {eps:.17e}"));
                write_artifact(dir, "diag.json", &json_artifact(&meta, &diag)?)?;
            }
        }
    }
    Ok(())
}

fn parse_rule(s: &str) -> latrest::Result<WindowRule> {
    match s {
        "full" => Ok(WindowRule::Full),
        "short" => Ok(WindowRule::Short),
        _ => match s.strip_prefix("fixed:") {
            Some(h) => {
                let h: f64 = h
                    .parse()
                    .map_err(|e| Error::Precondition(format!("rule `{s}`: {e}")))?;
                Ok(WindowRule::Fixed(h))
            }
            None => Err(Error::Precondition(format!(
                "rule `{s}` is not full, short, or fixed:<h>"
            ))),
        },
    }
}

fn parse_directions(s: &str) -> latrest::Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|d| {
            d.split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Precondition(format!("direction `{d}`: {e}")))
                })
                .collect()
        })
        .collect()
}

fn default_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut axis = vec![0.0; dim];
    axis[0] = 1.0;
    let diag = vec![1.0 / (dim as f64).sqrt(); dim];
    vec![axis, diag]
}
