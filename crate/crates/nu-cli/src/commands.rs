//! Subcommand implementations. Each returns the stdout payload (the JSON
//! report, or the primary CSV table under `--format csv`).

use crate::report::{csv_line, Report};
use crate::{GlobalArgs, OutputFormat};
use clap::Args;
use nuwass::cost::CostSpec;
use nuwass::fixedpoint::{self, FixedPointProblem, FixedPointSpec};
use nuwass::gen;
use nuwass::geodesics::{convexity_scan, geodesic, geodesic_check, uniform_t_grid, FunctionalSpec};
use nuwass::io::{self, AnyMeasure, Format};
use nuwass::layerwise::{knothe_rosenblatt_2d, layerwise_distance, layerwise_equivalence_check};
use nuwass::measures::{Coupling, DiscreteMeasure, GridMeasure, TriCoupling};
use nuwass::numetric::{
    default_eps_schedule, hierarchical_w, mm_limit, tilde_w_nu, w_nu, w_nu_auto,
    w_nu_disintegration, weighted_mm, WnuMethod, WnuResult,
};
use nuwass::ot::{is_unique_plan, solve_ot};
use nuwass::unequal::{conditional_density, dual_metric, lipschitz_in_y, nestedness_check, suff_condition_margin};
use nuwass::{Error, Result};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

fn load_discrete(path: &Path, g: &GlobalArgs) -> Result<DiscreteMeasure> {
    io::load_measure(path, Format::from_path(path)?, g.renormalize)?.into_discrete()
}

fn load_grid(path: &Path, g: &GlobalArgs) -> Result<GridMeasure> {
    match io::load_measure(path, Format::from_path(path)?, g.renormalize)? {
        AnyMeasure::Grid(grid) => Ok(grid),
        AnyMeasure::Discrete(_) => {
            Err(Error::Validation(format!("{} must be a grid measure", path.display())))
        }
    }
}

fn write_sidecar(g: &GlobalArgs, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&g.out)
        .map_err(|e| Error::Validation(format!("cannot create {}: {e}", g.out.display())))?;
    let path = g.out.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn coupling_value(c: &Coupling) -> Value {
    json!({
        "entries": c.entries().iter().map(|&(i, j, m)| json!([i, j, m])).collect::<Vec<_>>(),
        "cost": c.cost_value(),
    })
}

fn wnu_output(r: &WnuResult) -> Value {
    json!({
        "value": r.value,
        "method": match r.method {
            WnuMethod::ConstrainedLp => "constrained-lp",
            WnuMethod::Disintegration => "disintegration",
            WnuMethod::MmLimit => "mm-limit",
        },
        "uniqueness": [format!("{:?}", r.uniqueness[0]), format!("{:?}", r.uniqueness[1])],
        "gaps": r.pair_gaps,
        "degenerate": r.degenerate,
    })
}

// ---------------------------------------------------------------- ot

#[derive(Args, Clone)]
pub struct OtArgs {
    /// First measure (rows of the cost).
    #[arg(long)]
    a: PathBuf,
    /// Second measure (columns; parameter space for embedded costs).
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    cost: PathBuf,
    /// Write the optimal coupling to this file (first marginal = a).
    #[arg(long)]
    save_coupling: Option<PathBuf>,
}

pub fn cmd_ot(args: &OtArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new("ot");
    for p in [&args.a, &args.b, &args.cost] {
        report.digest_input(p);
    }
    let a = load_discrete(&args.a, g)?;
    let b = load_discrete(&args.b, g)?;
    let cost = io::load_cost(&args.cost)?;
    let sol = solve_ot(&a, &b, &cost)?;
    let unique = is_unique_plan(&sol);
    if sol.degenerate {
        report.warn("alternative optimal plans suspected (zero reduced cost off the basis)");
    }
    if let Some(path) = &args.save_coupling {
        io::save_coupling(path, &sol.coupling)?;
    }
    report.set_output(json!({
        "value": sol.value,
        "coupling": coupling_value(&sol.coupling),
        "potentials": { "u": sol.potentials.u, "v": sol.potentials.v },
        "unique": format!("{unique:?}"),
        "iterations": sol.iterations,
        "degenerate": sol.degenerate,
    }));
    Ok(report.render())
}

// ---------------------------------------------------------------- dist

#[derive(Args, Clone)]
pub struct DistArgs {
    #[arg(long)]
    mu0: Option<PathBuf>,
    #[arg(long)]
    mu1: Option<PathBuf>,
    #[arg(long)]
    nu: Option<PathBuf>,
    #[arg(long)]
    cost: Option<PathBuf>,
    /// lp | disint | mm | auto | tilde | hier
    #[arg(long, default_value = "lp")]
    method: String,
    /// Decreasing ε schedule for the mm method, comma separated.
    #[arg(long)]
    eps_schedule: Option<String>,
    /// Second reference for the hierarchical method.
    #[arg(long)]
    nu2: Option<PathBuf>,
    /// Fixed couplings for the tilde (coupling-metric) method.
    #[arg(long)]
    pi0: Option<PathBuf>,
    #[arg(long)]
    pi1: Option<PathBuf>,
    /// Embed the optimal coupling in the report.
    #[arg(long, default_value_t = false)]
    with_coupling: bool,
    /// Write the optimal three-marginal coupling to this file.
    #[arg(long)]
    save_gamma: Option<PathBuf>,
}

fn parse_schedule(s: &Option<String>) -> Result<Vec<f64>> {
    match s {
        None => Ok(default_eps_schedule()),
        Some(text) => text
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Validation(format!("bad eps value {t:?}")))
            })
            .collect(),
    }
}

fn require<'a, T>(opt: &'a Option<T>, what: &str) -> Result<&'a T> {
    opt.as_ref().ok_or_else(|| Error::Validation(format!("--{what} is required for this method")))
}

pub fn cmd_dist(args: &DistArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new(format!("dist --method {}", args.method));
    for p in [&args.mu0, &args.mu1, &args.nu, &args.cost, &args.nu2, &args.pi0, &args.pi1]
        .into_iter()
        .flatten()
    {
        report.digest_input(p);
    }
    let gamma_json = |gamma: &TriCoupling| -> Value {
        json!(gamma.entries().iter().map(|&(k, i, j, m)| json!([k, i, j, m])).collect::<Vec<_>>())
    };
    let output = match args.method.as_str() {
        "tilde" => {
            let pi0 = io::load_coupling(require(&args.pi0, "pi0")?)?;
            let pi1 = io::load_coupling(require(&args.pi1, "pi1")?)?;
            let (value, gamma) = tilde_w_nu(&pi0, &pi1)?;
            let mut out = json!({ "value": value, "method": "tilde" });
            if args.with_coupling {
                out["coupling"] = gamma_json(&gamma);
            }
            out
        }
        "hier" => {
            let mu0 = load_discrete(require(&args.mu0, "mu0")?, g)?;
            let mu1 = load_discrete(require(&args.mu1, "mu1")?, g)?;
            let nu = load_discrete(require(&args.nu, "nu")?, g)?;
            let cost = io::load_cost(require(&args.cost, "cost")?)?;
            let mut nus = vec![nu];
            if let Some(p) = &args.nu2 {
                nus.push(load_discrete(p, g)?);
            }
            let h = hierarchical_w(&mu0, &mu1, &nus, &cost)?;
            json!({
                "value": h.value,
                "method": "hierarchical",
                "stage_values": h.stage_values,
            })
        }
        method @ ("lp" | "disint" | "mm" | "auto") => {
            let mu0 = load_discrete(require(&args.mu0, "mu0")?, g)?;
            let mu1 = load_discrete(require(&args.mu1, "mu1")?, g)?;
            let nu = load_discrete(require(&args.nu, "nu")?, g)?;
            let cost = io::load_cost(require(&args.cost, "cost")?)?;
            let r = match method {
                "lp" => w_nu(&mu0, &mu1, &nu, &cost)?,
                "auto" => w_nu_auto(&mu0, &mu1, &nu, &cost)?,
                "disint" => {
                    let pi0 = solve_ot(&mu0, &nu, &cost)?.coupling.transposed();
                    let pi1 = solve_ot(&mu1, &nu, &cost)?.coupling.transposed();
                    w_nu_disintegration(&pi0, &pi1, &nu, &cost)?
                }
                _ => {
                    let schedule = parse_schedule(&args.eps_schedule)?;
                    let lim = mm_limit(&mu0, &mu1, &nu, &cost, &schedule)?;
                    if !lim.converged {
                        report.warn("eps schedule did not certify convergence");
                    }
                    if lim.monotonicity_flag {
                        report.warn("cross terms were non-monotone beyond LP slack");
                    }
                    lim.result
                }
            };
            if r.degenerate {
                report.warn("coupling LP has alternative optima; reporting the solver's vertex");
            }
            if let Some(path) = &args.save_gamma {
                io::save_tricoupling(path, &r.gamma)?;
            }
            let mut out = wnu_output(&r);
            if args.with_coupling {
                out["coupling"] = gamma_json(&r.gamma);
            }
            out
        }
        other => return Err(Error::Validation(format!("unknown method {other:?}"))),
    };
    report.set_output(output);
    Ok(report.render())
}

// ---------------------------------------------------------------- mm-table

#[derive(Args, Clone)]
pub struct MmTableArgs {
    #[arg(long)]
    mu0: PathBuf,
    #[arg(long)]
    mu1: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    #[arg(long)]
    cost: PathBuf,
    #[arg(long)]
    eps_schedule: Option<String>,
    /// Second reference: emits the ε-power-weighted table against the
    /// hierarchical coupling instead.
    #[arg(long)]
    nu2: Option<PathBuf>,
}

pub fn cmd_mm_table(args: &MmTableArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new("mm-table");
    for p in [&args.mu0, &args.mu1, &args.nu, &args.cost] {
        report.digest_input(p);
    }
    let mu0 = load_discrete(&args.mu0, g)?;
    let mu1 = load_discrete(&args.mu1, g)?;
    let nu = load_discrete(&args.nu, g)?;
    let cost = io::load_cost(&args.cost)?;
    let schedule = parse_schedule(&args.eps_schedule)?;

    let (csv, output) = if let Some(nu2_path) = &args.nu2 {
        report.digest_input(nu2_path);
        let nu2 = load_discrete(nu2_path, g)?;
        let nus = vec![nu.clone(), nu2];
        let hier = hierarchical_w(&mu0, &mu1, &nus, &cost)?;
        let hier_pair = hier.coupling.project_pair(nus.len(), nus.len() + 1)?;
        let mut lines = vec!["eps,cross_term,tv_to_hierarchical".to_string()];
        let mut rows = Vec::new();
        for &eps in &schedule {
            let wm = weighted_mm(&mu0, &mu1, &nus, &cost, eps)?;
            let pair = wm.coupling.project_pair(nus.len(), nus.len() + 1)?;
            let tv = coupling_tv(&hier_pair, &pair);
            lines.push(csv_line(&[json!(eps), json!(wm.cross_term), json!(tv)]));
            rows.push(json!({ "eps": eps, "cross_term": wm.cross_term, "tv_to_hierarchical": tv }));
        }
        (
            lines.join("\n") + "\n",
            json!({ "hierarchical_value": hier.value, "table": rows }),
        )
    } else {
        let lim = mm_limit(&mu0, &mu1, &nu, &cost, &schedule)?;
        if lim.monotonicity_flag {
            report.warn("cross terms were non-monotone beyond LP slack");
        }
        let mut lines = vec!["eps,cross_term,gap0,gap1,f_eps".to_string()];
        let mut rows = Vec::new();
        for row in &lim.table {
            lines.push(csv_line(&[
                json!(row.eps),
                json!(row.cross_term),
                json!(row.gap0),
                json!(row.gap1),
                json!(row.f_eps),
            ]));
            rows.push(json!({
                "eps": row.eps, "cross_term": row.cross_term,
                "gap0": row.gap0, "gap1": row.gap1, "f_eps": row.f_eps,
            }));
        }
        (
            lines.join("\n") + "\n",
            json!({ "w_nu_sq": lim.w_nu_sq, "converged": lim.converged, "table": rows }),
        )
    };
    let sidecar = write_sidecar(g, "mm_table.csv", &csv)?;
    report.set_output(output);
    match g.format {
        OutputFormat::Csv => Ok(csv),
        OutputFormat::Json => {
            let _ = sidecar;
            Ok(report.render())
        }
    }
}

fn coupling_tv(a: &Coupling, b: &Coupling) -> f64 {
    let mut masses: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
    for &(i, j, m) in a.entries() {
        *masses.entry((i, j)).or_insert(0.0) += m;
    }
    for &(i, j, m) in b.entries() {
        *masses.entry((i, j)).or_insert(0.0) -= m;
    }
    0.5 * masses.values().map(|v| v.abs()).sum::<f64>()
}

// ---------------------------------------------------------------- geodesic

#[derive(Args, Clone)]
pub struct GeodesicArgs {
    /// Three-marginal coupling file.
    #[arg(long)]
    gamma: PathBuf,
    /// Number of uniform t samples (including both endpoints).
    #[arg(long, default_value_t = 17)]
    ts: usize,
    /// Functional to scan (JSON spec).
    #[arg(long)]
    functional: Option<PathBuf>,
    /// Reference measure (needed for wass-to-nu and --check).
    #[arg(long)]
    nu: Option<PathBuf>,
    #[arg(long)]
    cost: Option<PathBuf>,
    /// Verify the geodesic property over all grid pairs.
    #[arg(long, default_value_t = false)]
    check: bool,
}

pub fn cmd_geodesic(args: &GeodesicArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new("geodesic");
    report.digest_input(&args.gamma);
    for p in [&args.functional, &args.nu, &args.cost].into_iter().flatten() {
        report.digest_input(p);
    }
    let gamma = io::load_tricoupling(&args.gamma)?;
    let curve = geodesic(&gamma, &uniform_t_grid(args.ts))?;
    let nu = args.nu.as_ref().map(|p| load_discrete(p, g)).transpose()?;
    let cost = args.cost.as_ref().map(|p| io::load_cost(p)).transpose()?;
    let mut output = json!({
        "ts": curve.ts(),
        "atoms_per_t": curve.measures().iter().map(|m| m.len()).collect::<Vec<_>>(),
    });
    let mut csv: Option<String> = None;
    if let Some(fpath) = &args.functional {
        let text = std::fs::read_to_string(fpath)
            .map_err(|e| Error::Parse { path: fpath.display().to_string(), msg: e.to_string() })?;
        let fspec: FunctionalSpec = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { path: fpath.display().to_string(), msg: e.to_string() })?;
        let scan = convexity_scan(&fspec, &curve, nu.as_ref(), cost.as_ref())?;
        let mut lines = vec!["t,f_mu_t,second_difference".to_string()];
        for (idx, &(t, f)) in scan.values.iter().enumerate() {
            let d2 = if idx >= 1 && idx + 1 < scan.values.len() {
                json!(scan.second_differences[idx - 1])
            } else {
                json!("")
            };
            lines.push(csv_line(&[json!(t), json!(f), d2]));
        }
        csv = Some(lines.join("\n") + "\n");
        output["scan"] = json!({
            "values": scan.values,
            "min_second_difference": scan.min_second_difference,
            "tol": scan.tol,
            "allowance": scan.allowance,
            "pass_convex": scan.pass_convex,
            "one_convexity_violation": scan.one_convexity_violation,
            "pass_one_convex": scan.pass_one_convex,
        });
    }
    if args.check {
        let nu = nu
            .as_ref()
            .ok_or_else(|| Error::Validation("--check needs --nu and --cost".into()))?;
        let cost = cost
            .as_ref()
            .ok_or_else(|| Error::Validation("--check needs --nu and --cost".into()))?;
        let rep = geodesic_check(&curve, nu, cost)?;
        output["check"] = json!({
            "w01": rep.w01,
            "max_error": rep.max_error,
            "pass": rep.pass,
            "per_t_uniqueness": rep.per_t_uniqueness.iter().map(|u| format!("{u:?}")).collect::<Vec<_>>(),
        });
    }
    if let Some(csv_text) = &csv {
        write_sidecar(g, "geodesic_scan.csv", csv_text)?;
        if g.format == OutputFormat::Csv {
            return Ok(csv_text.clone());
        }
    }
    report.set_output(output);
    Ok(report.render())
}

// ---------------------------------------------------------------- layerwise

#[derive(Args, Clone)]
pub struct LayerwiseArgs {
    #[arg(long)]
    mu0: PathBuf,
    #[arg(long)]
    mu1: PathBuf,
    #[arg(long, default_value_t = nuwass::layerwise::DEFAULT_LAYERS)]
    layers: usize,
    /// Also compare against the reference-based distance on a segment.
    #[arg(long, default_value_t = false)]
    equivalence: bool,
    /// Segment curve JSON (for --equivalence).
    #[arg(long)]
    segment: Option<PathBuf>,
    /// 1-D reference density on the segment parameters (for --equivalence).
    #[arg(long)]
    nu: Option<PathBuf>,
    /// Relative tolerance for the equivalence verdict.
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
}

pub fn cmd_layerwise(args: &LayerwiseArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new("layerwise");
    report.digest_input(&args.mu0);
    report.digest_input(&args.mu1);
    let mu0 = load_discrete(&args.mu0, g)?;
    let mu1 = load_discrete(&args.mu1, g)?;
    let lw = layerwise_distance(&mu0, &mu1, args.layers)?;
    let mut output = json!({
        "value": lw.value,
        "vertical_w2_sq": lw.vertical_w2_sq,
        "layer_integral": lw.layer_integral,
        "layer_table": lw.layers.iter().map(|r| json!([r.level, r.w2_sq])).collect::<Vec<_>>(),
    });
    if args.equivalence {
        let seg_path = args
            .segment
            .as_ref()
            .ok_or_else(|| Error::Validation("--equivalence needs --segment".into()))?;
        let nu_path = args.nu.as_ref().ok_or_else(|| Error::Validation("--equivalence needs --nu".into()))?;
        report.digest_input(seg_path);
        report.digest_input(nu_path);
        let text = std::fs::read_to_string(seg_path)
            .map_err(|e| Error::Parse { path: seg_path.display().to_string(), msg: e.to_string() })?;
        let segment: nuwass::cost::Curve = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { path: seg_path.display().to_string(), msg: e.to_string() })?;
        let nu = load_grid(nu_path, g)?;
        let (eq, wn) = layerwise_equivalence_check(&mu0, &mu1, &segment, &nu, args.layers, args.tol)?;
        output["equivalence"] = json!({
            "w_nu": eq.w_nu,
            "d_lw": eq.d_lw,
            "abs_gap": eq.abs_gap,
            "rel_gap": eq.rel_gap,
            "pass": eq.pass,
            "uniqueness": [format!("{:?}", wn.uniqueness[0]), format!("{:?}", wn.uniqueness[1])],
        });
    }
    report.set_output(output);
    Ok(report.render())
}

// ---------------------------------------------------------------- kr

#[derive(Args, Clone)]
pub struct KrArgs {
    #[arg(long)]
    mu0: PathBuf,
    #[arg(long)]
    mu1: PathBuf,
}

pub fn cmd_kr(args: &KrArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new("kr");
    report.digest_input(&args.mu0);
    report.digest_input(&args.mu1);
    let mu0 = load_discrete(&args.mu0, g)?;
    let mu1 = load_discrete(&args.mu1, g)?;
    let kr = knothe_rosenblatt_2d(&mu0, &mu1)?;
    let mut lines = vec!["source_index,target_index".to_string()];
    for (i, &j) in kr.permutation.iter().enumerate() {
        lines.push(format!("{i},{j}"));
    }
    let csv = lines.join("\n") + "\n";
    write_sidecar(g, "kr_permutation.csv", &csv)?;
    report.set_output(json!({ "permutation": kr.permutation, "cost": kr.cost }));
    match g.format {
        OutputFormat::Csv => Ok(csv),
        OutputFormat::Json => Ok(report.render()),
    }
}

// ---------------------------------------------------------------- nested

#[derive(Args, Clone)]
pub struct NestedArgs {
    /// Source grid measure.
    #[arg(long)]
    mu: PathBuf,
    /// 1-D reference grid measure.
    #[arg(long)]
    nu: PathBuf,
    #[arg(long)]
    cost: PathBuf,
    /// Number of strategy samples.
    #[arg(long, default_value_t = 64)]
    ygrid: usize,
    /// Also compute the sufficient-condition margin per y₀.
    #[arg(long, default_value_t = false)]
    margins: bool,
    /// Evaluate the conditional density at "y:x1,x2" (needs --v).
    #[arg(long)]
    conditional: Option<String>,
    /// Split function file whose antiderivative is the dual potential.
    #[arg(long)]
    v: Option<PathBuf>,
}

pub fn cmd_nested(args: &NestedArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new("nested");
    for p in [&args.mu, &args.nu, &args.cost] {
        report.digest_input(p);
    }
    let mu = load_grid(&args.mu, g)?;
    let nu = load_grid(&args.nu, g)?;
    let cost = io::load_cost(&args.cost)?;
    let [y_lo, y_hi] = nu.ranges()[0];
    let h = (y_hi - y_lo) / args.ygrid as f64;
    let y_grid: Vec<f64> = (0..args.ygrid).map(|j| y_lo + (j as f64 + 0.5) * h).collect();
    let rep = nestedness_check(&mu, &nu, &cost, &y_grid)?;
    if rep.degenerate_splits > 0 {
        report.warn(format!("{} mass splits hit flat spots", rep.degenerate_splits));
    }
    let mut output = json!({
        "nested": rep.nested,
        "k": { "grid": rep.k.grid(), "values": rep.k.values(), "bounds": rep.k.bounds() },
        "violation_count": rep.violations.len(),
        "violations": rep.violations.iter().take(50).map(|v| json!({
            "y": v.y, "y_prime": v.y_prime, "witness": v.witness, "mass": v.mass,
        })).collect::<Vec<_>>(),
        "degenerate_splits": rep.degenerate_splits,
    });
    if args.margins {
        let m_c = lipschitz_in_y(&mu, &cost, &y_grid)?;
        let mut margins = Vec::new();
        for &y0 in y_grid.iter().take(y_grid.len() - 1) {
            margins.push(json!([y0, suff_condition_margin(&mu, &nu, &cost, y0, &y_grid, m_c)?]));
        }
        output["m_c"] = json!(m_c);
        output["margins"] = json!(margins);
    }
    if let Some(spec) = &args.conditional {
        let vpath = args
            .v
            .as_ref()
            .ok_or_else(|| Error::Validation("--conditional needs --v".into()))?;
        report.digest_input(vpath);
        let v = io::load_split_function(vpath)?;
        let (y_part, x_part) = spec
            .split_once(':')
            .ok_or_else(|| Error::Validation("expected --conditional y:x1,x2".into()))?;
        let y: f64 = y_part.trim().parse().map_err(|_| Error::Validation("bad y".into()))?;
        let x: Vec<f64> = x_part
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Validation("bad coordinate".into())))
            .collect::<Result<_>>()?;
        let rho = conditional_density(&mu, &nu, &cost, &v, y, &x)?;
        output["conditional_density"] = json!({ "y": y, "x": x, "value": rho });
    }
    report.set_output(output);
    Ok(report.render())
}

// ---------------------------------------------------------------- dualdist

#[derive(Args, Clone)]
pub struct DualdistArgs {
    #[arg(long)]
    nu0: PathBuf,
    #[arg(long)]
    nu1: PathBuf,
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    cost: PathBuf,
    /// Exponent in [1, ∞]; pass "inf" for the sup norm.
    #[arg(long, default_value = "1")]
    p: String,
    #[arg(long, default_value_t = 128)]
    ysamples: usize,
}

pub fn cmd_dualdist(args: &DualdistArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new("dualdist");
    for p in [&args.nu0, &args.nu1, &args.mu, &args.cost] {
        report.digest_input(p);
    }
    let nu0 = load_grid(&args.nu0, g)?;
    let nu1 = load_grid(&args.nu1, g)?;
    let mu = load_grid(&args.mu, g)?;
    let cost = io::load_cost(&args.cost)?;
    let p = match args.p.trim() {
        "inf" | "Inf" | "INF" => f64::INFINITY,
        other => other
            .parse::<f64>()
            .map_err(|_| Error::Validation(format!("bad exponent {other:?}")))?,
    };
    let r = dual_metric(&nu0, &nu1, &mu, &cost, p, args.ysamples)?;
    report.set_output(json!({ "value": r.value, "p": r.p }));
    Ok(report.render())
}

// ---------------------------------------------------------------- fixedpoint

#[derive(Args, Clone)]
pub struct FixedpointArgs {
    /// Problem description (grid source, interval, cost, constants).
    #[arg(long)]
    problem: PathBuf,
    /// Start: "zero" or a split-function file.
    #[arg(long, default_value = "zero")]
    k0: String,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Strategy samples for the nestedness verdict.
    #[arg(long, default_value_t = 24)]
    margin_grid: usize,
}

pub fn cmd_fixedpoint(args: &FixedpointArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new("fixedpoint");
    report.digest_input(&args.problem);
    let text = std::fs::read_to_string(&args.problem)
        .map_err(|e| Error::Parse { path: args.problem.display().to_string(), msg: e.to_string() })?;
    let spec: FixedPointSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: args.problem.display().to_string(), msg: e.to_string() })?;
    let problem = FixedPointProblem::from_spec(spec)?;
    let bounds = fixedpoint::cost_y_bounds(&problem);
    if bounds.degenerate {
        report.warn("cost derivative is constant in y");
    }
    if problem.sign_flag {
        report.warn("cost-derivative bounds straddle zero; the contraction bound uses absolute values as written");
    }
    let cert = fixedpoint::contraction_factor(&problem)?;
    if !cert.contraction {
        report.warn(format!("contraction factor {:.6} >= 1; iterating anyway", cert.factor));
    }
    let k0 = match args.k0.as_str() {
        "zero" => problem.default_start()?,
        path => {
            let p = PathBuf::from(path);
            report.digest_input(&p);
            io::load_split_function(&p)?
        }
    };
    let trace = fixedpoint::iterate(&problem, &k0, args.tol, args.max_iter)?;
    if !trace.converged {
        report.warn(format!("did not converge within {} iterations", args.max_iter));
    }
    let sn = fixedpoint::nestedness_at_solution(&problem, &trace.k_fixed, args.margin_grid)?;
    let mut lines = vec!["iter,step_l1,ratio".to_string()];
    for s in &trace.steps {
        let ratio = s.ratio.map_or(json!(""), |r| json!(r));
        lines.push(csv_line(&[json!(s.iter), json!(s.step_l1), ratio]));
    }
    let csv = lines.join("\n") + "\n";
    write_sidecar(g, "fixedpoint_trace.csv", &csv)?;
    report.set_output(json!({
        "bounds": { "d_lo": bounds.d_lo, "d_hi": bounds.d_hi, "a_max": bounds.a_max,
                     "b_min": problem.b_min, "c_level": problem.c_level,
                     "sampling_gap": bounds.sampling_gap },
        "contraction_factor": cert.factor,
        "contraction": cert.contraction,
        "converged": trace.converged,
        "iterations": trace.steps.len(),
        "residual": trace.residual,
        "nested_verdict": sn.report.nested,
        "all_margins_negative": sn.all_margins_negative,
        "k_fixed": { "grid": trace.k_fixed.grid(), "values": trace.k_fixed.values(),
                      "bounds": trace.k_fixed.bounds() },
        "trace": trace.steps.iter().map(|s| json!([s.iter, s.step_l1, s.ratio])).collect::<Vec<_>>(),
    }));
    match g.format {
        OutputFormat::Csv => Ok(csv),
        OutputFormat::Json => Ok(report.render()),
    }
}

// ---------------------------------------------------------------- gen

#[derive(Args, Clone)]
pub struct GenArgs {
    /// grid-gaussian | point-cloud | arc-wedge | paper-triangle |
    /// paper-sector | paper-square
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturbation ε for paper-triangle.
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Sector angle for arc-wedge / paper-sector.
    #[arg(long, default_value_t = 2.0)]
    theta: f64,
    /// Cells per axis for grids.
    #[arg(long, default_value_t = 64)]
    cells: usize,
    /// Reference cells for sector instances.
    #[arg(long, default_value_t = 64)]
    nu_cells: usize,
    /// Atom count for point clouds.
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Half-width of the sampling box for point clouds.
    #[arg(long, default_value_t = 1.0)]
    half_width: f64,
    /// Strategy interval end for paper-square.
    #[arg(long, default_value_t = 0.1)]
    ybar: f64,
    /// Strategy resolution for paper-square.
    #[arg(long, default_value_t = 256)]
    y_resolution: usize,
}

pub fn cmd_gen(args: &GenArgs, g: &GlobalArgs) -> Result<String> {
    let mut report = Report::new(format!("gen --kind {}", args.kind));
    std::fs::create_dir_all(&g.out)
        .map_err(|e| Error::Validation(format!("cannot create {}: {e}", g.out.display())))?;
    let mut files = Vec::new();
    let save_measure = |name: &str, m: AnyMeasure, files: &mut Vec<String>| -> Result<()> {
        let path = g.out.join(name);
        io::save_measure_json(&path, &m)?;
        files.push(path.display().to_string());
        Ok(())
    };
    match args.kind.as_str() {
        "paper-triangle" => {
            let (nu, mu0, mu1, mu2) = gen::paper_triangle(args.eps)?;
            save_measure("nu.json", AnyMeasure::Discrete(nu), &mut files)?;
            save_measure("mu0.json", AnyMeasure::Discrete(mu0), &mut files)?;
            save_measure("mu1.json", AnyMeasure::Discrete(mu1), &mut files)?;
            save_measure("mu2.json", AnyMeasure::Discrete(mu2), &mut files)?;
            let cost_path = g.out.join("cost.json");
            io::save_cost(&cost_path, &CostSpec::Quadratic)?;
            files.push(cost_path.display().to_string());
        }
        "paper-sector" | "arc-wedge" => {
            let (mu, nu, cost) = gen::sector_instance(args.theta, args.cells, args.nu_cells)?;
            save_measure("mu.json", AnyMeasure::Grid(mu), &mut files)?;
            save_measure("nu.json", AnyMeasure::Grid(nu), &mut files)?;
            let cost_path = g.out.join("cost.json");
            io::save_cost(&cost_path, &cost)?;
            files.push(cost_path.display().to_string());
        }
        "paper-square" => {
            let spec = gen::square_fixedpoint_spec(args.ybar, args.cells, args.y_resolution)?;
            let path = g.out.join("problem.json");
            let v = serde_json::to_value(&spec)
                .map_err(|e| Error::Validation(format!("serialize problem: {e}")))?;
            let mut text = String::new();
            nuwass::io::render_json(&v, &mut text);
            text.push('\n');
            std::fs::write(&path, text)
                .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))?;
            files.push(path.display().to_string());
        }
        "grid-gaussian" => {
            let m = gen::grid_gaussian(args.seed, args.cells, [-args.half_width, args.half_width], args.dim)?;
            save_measure("measure.json", AnyMeasure::Grid(m), &mut files)?;
        }
        "point-cloud" => {
            let m = gen::point_cloud(args.seed, args.n, args.dim, args.half_width)?;
            save_measure("cloud.json", AnyMeasure::Discrete(m), &mut files)?;
        }
        other => return Err(Error::Validation(format!("unknown generator kind {other:?}"))),
    }
    report.set_output(json!({ "files": files }));
    Ok(report.render())
}
