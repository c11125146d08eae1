use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use nonlocality_core::bounds::{
    bounds_from_exact, default_l_range, ghz_bounds, ghz_bounds_optimized, sweep, BoundReport, OptimizedBounds,
};
use nonlocality_core::comm::{
    ghz_broadcast_protocol, leaf_rectangles, load_protocol, protocol_to_lhv, rational_to_f64, save_protocol,
    verify_admissible, verify_reproduces, Compare, ProtocolTree, Weight,
};
use nonlocality_core::corrmodel::{load_problem, save_problem, validate_problem, CorrelationProblem};
use nonlocality_core::ghz::{
    build_ghz_problem, ghz_distribution, ghz_params_of, parity_target, promise_holds, statevector_oracle, CountMode,
    GhzParams,
};
use nonlocality_core::lhv::{eta_from_click, evaluate_distribution, max_click_probability, Objective};
use nonlocality_core::rectangles::{
    analytic_r_bound, analytic_r_bound_floor, cover_lower_bound, max_monochromatic_overlap,
};
use nonlocality_core::space::Shape;

use crate::config::RunConfig;
use crate::output::{dp2, json, sig17, sweep_csv, CliError, CliResult, Outcome};

/// Margin allowed when comparing an exact efficiency against its bound.
pub const SOUNDNESS_MARGIN: f64 = 1e-9;

/// `ghz:<n>,<l>` or a problem file.
pub fn resolve_problem(spec: &str) -> CliResult<CorrelationProblem> {
    if let Some(rest) = spec.strip_prefix("ghz:") {
        let (n, l) = parse_pair(rest)?;
        return Ok(build_ghz_problem(GhzParams::new(n, l)?));
    }
    Ok(load_problem(spec)?)
}

fn parse_pair(s: &str) -> CliResult<(usize, u32)> {
    let bad = || CliError::usage(format!("expected `<n>,<l>`, got {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn parse_vector(s: &str) -> CliResult<Vec<u32>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad vector entry {t:?} in {s:?}")))
        })
        .collect()
}

#[derive(Serialize)]
struct SingleBounds {
    report: BoundReport,
    eta_upper_2dp: String,
    rpub_lower_real_2dp: String,
}

#[derive(Serialize)]
struct Optimized {
    #[serde(flatten)]
    bounds: OptimizedBounds,
    eta_upper_2dp: String,
    rpub_lower_real_2dp: String,
}

pub fn bounds_ghz(n: usize, l: Option<u32>, mode: CountMode, optimize: bool) -> CliResult<Outcome> {
    let text = match l {
        Some(l) if !optimize => {
            let report = ghz_bounds(n, l, mode)?;
            json(&SingleBounds {
                eta_upper_2dp: dp2(report.eta_upper),
                rpub_lower_real_2dp: dp2(report.rpub.real),
                report,
            })?
        }
        _ => {
            let bounds = ghz_bounds_optimized(n, mode, default_l_range(n))?;
            json(&Optimized {
                eta_upper_2dp: dp2(bounds.eta_upper),
                rpub_lower_real_2dp: dp2(bounds.rpub.real),
                bounds,
            })?
        }
    };
    Ok(Outcome::pass(text))
}

pub fn bounds_sweep(n_min: usize, n_max: usize, mode: CountMode) -> CliResult<Outcome> {
    if n_min < 2 && n_min <= n_max {
        return Err(CliError::usage("sweep needs n >= 2"));
    }
    let rows = sweep(n_min..=n_max, mode)?;
    Ok(Outcome::pass(sweep_csv(&rows)?))
}

#[derive(Serialize)]
struct GhzRectCheck {
    n: usize,
    l: u32,
    analytic_bound: f64,
    analytic_floor: String,
    within_bound: bool,
}

#[derive(Serialize)]
struct RectReport {
    shape: Shape,
    promise_size: u128,
    r: u64,
    label: nonlocality_core::rectangles::Label,
    witness: nonlocality_core::rectangles::Rectangle,
    nodes: u64,
    cover_lower_bound: Option<u128>,
    ghz: Option<GhzRectCheck>,
}

pub fn rect(problem: &str, cfg: &RunConfig) -> CliResult<Outcome> {
    let p = resolve_problem(problem)?;
    let d_size = p.promise_size(cfg.scan_limit)?;
    let best = max_monochromatic_overlap(&p, cfg.scan_limit, cfg.max_nodes)?;
    let ghz = ghz_params_of(&p).map(|g| {
        let floor = analytic_r_bound_floor(g.n, g.l);
        GhzRectCheck {
            n: g.n,
            l: g.l,
            analytic_bound: analytic_r_bound(g.n, g.l),
            within_bound: num_bigint::BigUint::from(best.r) <= floor,
            analytic_floor: floor.to_string(),
        }
    });
    let passed = ghz.as_ref().is_none_or(|g| g.within_bound);
    let report = RectReport {
        shape: p.shape(),
        promise_size: d_size,
        r: best.r,
        cover_lower_bound: (best.r > 0)
            .then(|| cover_lower_bound(d_size, best.r as u128))
            .transpose()?,
        label: best.label,
        witness: best.witness,
        nodes: best.nodes,
        ghz,
    };
    Ok(Outcome {
        text: json(&report)?,
        passed,
    })
}

#[derive(Serialize)]
struct WeightedStrategy {
    code: String,
    weight: f64,
    tables: nonlocality_core::lhv::DeterministicLhv,
}

#[derive(Serialize)]
struct LhvReport {
    objective: Objective,
    q_star: f64,
    q_star_2dp: String,
    eta_star: f64,
    eta_star_2dp: String,
    support_size: usize,
    strategies_visited: u128,
    error_free_strategies: u128,
    lp_columns: usize,
    promise_size: usize,
    reevaluated: f64,
    rational_q_star: Option<String>,
    rational_matches: Option<bool>,
    distribution: Option<Vec<WeightedStrategy>>,
}

pub fn lhv_solve(
    problem: &str,
    objective: Objective,
    rational_check: bool,
    with_distribution: bool,
    cfg: &RunConfig,
) -> CliResult<Outcome> {
    let p = resolve_problem(problem)?;
    let opt = max_click_probability(&p, objective, cfg.lhv_limits())?;
    let reevaluated = evaluate_distribution(&p, &opt.distribution, objective, cfg.scan_limit)?;
    let mut passed = (reevaluated - opt.q_star).abs() <= SOUNDNESS_MARGIN;
    let (rational_q_star, rational_matches) = if rational_check {
        let exact = opt.certify()?;
        let ok = (rational_to_f64(&exact) - opt.q_star).abs() <= SOUNDNESS_MARGIN;
        passed &= ok;
        (Some(exact.to_string()), Some(ok))
    } else {
        (None, None)
    };
    let distribution = with_distribution.then(|| {
        opt.distribution
            .strategies()
            .map(|(s, w)| WeightedStrategy {
                code: s.encode().to_string(),
                weight: w,
                tables: s,
            })
            .collect()
    });
    let eta = eta_from_click(opt.q_star, p.shape().n);
    let report = LhvReport {
        objective,
        q_star: opt.q_star,
        q_star_2dp: dp2(opt.q_star),
        eta_star: eta,
        eta_star_2dp: dp2(eta),
        support_size: opt.distribution.weights.len(),
        strategies_visited: opt.strategies_visited,
        error_free_strategies: opt.error_free,
        lp_columns: opt.columns,
        promise_size: opt.promise_size,
        reevaluated,
        rational_q_star,
        rational_matches,
        distribution,
    };
    Ok(Outcome {
        text: json(&report)?,
        passed,
    })
}

#[derive(Serialize)]
struct ProbEntry {
    a: Vec<u32>,
    p: f64,
    oracle: Option<f64>,
}

#[derive(Serialize)]
struct GhzProbReport {
    n: usize,
    l: u32,
    x: Vec<u32>,
    in_promise: bool,
    parity_target: Option<u8>,
    outputs: Vec<ProbEntry>,
}

pub fn ghz_prob(n: usize, l: u32, x: &[u32], a: Option<&[u32]>, with_oracle: bool) -> CliResult<Outcome> {
    let params = GhzParams::new(n, l)?;
    let shape = params.shape();
    shape.check_input(x)?;
    let dist = ghz_distribution(params, x)?;
    let oracle = if with_oracle {
        Some(statevector_oracle(params, x)?)
    } else {
        None
    };
    let outputs = match a {
        Some(a) => {
            shape.check_output(a)?;
            vec![shape.output_index(a)]
        }
        None => (0..dist.len()).collect(),
    };
    let report = GhzProbReport {
        n,
        l,
        x: x.to_vec(),
        in_promise: promise_holds(params, x),
        parity_target: parity_target(params, x).ok(),
        outputs: outputs
            .into_iter()
            .map(|i| ProbEntry {
                a: shape.output_vector(i),
                p: dist[i],
                oracle: oracle.as_ref().map(|o| o[i]),
            })
            .collect(),
    };
    Ok(Outcome::pass(json(&report)?))
}

pub fn ghz_export(n: usize, l: u32, out: &Path) -> CliResult<Outcome> {
    let p = build_ghz_problem(GhzParams::new(n, l)?);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_problem(&p, out)?;
    Ok(Outcome::pass(format!("wrote {}\n", out.display())))
}

pub fn validate(problem: &str, cfg: &RunConfig) -> CliResult<Outcome> {
    let p = resolve_problem(problem)?;
    let report = validate_problem(&p, cfg.scan_limit)?;
    Ok(Outcome {
        passed: report.passed,
        text: json(&report)?,
    })
}

/// The GHZ problem matching a protocol's shape, if it has one.
fn infer_ghz_problem(t: &ProtocolTree) -> CliResult<CorrelationProblem> {
    let shape = t.shape();
    if shape.d != 2 || !shape.k.is_power_of_two() || shape.k < 2 {
        return Err(CliError::usage(
            "cannot infer the problem from the protocol; pass --problem",
        ));
    }
    Ok(build_ghz_problem(GhzParams::new(shape.n, shape.k.trailing_zeros())?))
}

fn protocol_problem(t: &ProtocolTree, problem: Option<&str>) -> CliResult<CorrelationProblem> {
    match problem {
        Some(spec) => resolve_problem(spec),
        None => infer_ghz_problem(t),
    }
}

#[derive(Serialize)]
struct VerifyReport {
    bits: u32,
    leaves: usize,
    randomness_values: usize,
    admissible: bool,
    reproduces: bool,
    comparison: String,
    max_leaf_rectangles: usize,
    rectangle_cap: f64,
    within_cap: bool,
}

pub fn comm_verify(protocol: &Path, problem: Option<&str>, exact: bool, cfg: &RunConfig) -> CliResult<Outcome> {
    let t = load_protocol(protocol)?;
    let p = protocol_problem(&t, problem)?;
    let cmp = if exact {
        Compare::Exact
    } else {
        Compare::Tolerance(cfg.tolerance)
    };
    let admissible = verify_admissible(&t, &p, cfg.scan_limit)?;
    let reproduces = verify_reproduces(&t, &p, cmp, cfg.scan_limit)?;
    let max_rects = (0..t.randomness.values)
        .map(|r| leaf_rectangles(&t, r).map(|v| v.len()))
        .collect::<nonlocality_core::Result<Vec<_>>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    let shape = t.shape();
    let cap = (t.bits() as f64).exp2() * (shape.d as f64).powi(shape.n as i32);
    let report = VerifyReport {
        bits: t.bits(),
        leaves: t.leaf_count(),
        randomness_values: t.randomness.values,
        admissible,
        reproduces,
        comparison: match cmp {
            Compare::Exact => "exact".into(),
            Compare::Tolerance(tol) => format!("tolerance {}", sig17(tol)),
        },
        max_leaf_rectangles: max_rects,
        rectangle_cap: cap,
        within_cap: max_rects as f64 <= cap,
    };
    Ok(Outcome {
        passed: admissible && reproduces && report.within_cap,
        text: json(&report)?,
    })
}

#[derive(Serialize)]
struct TransformReport {
    bits: u32,
    conversations: usize,
    all_click_probability: Option<Weight>,
    all_click_probability_f64: Option<f64>,
    input_independent: bool,
    reproduces_exactly: bool,
    model: nonlocality_core::comm::DetectorModel,
}

pub fn comm_transform(protocol: &Path, problem: Option<&str>, cfg: &RunConfig) -> CliResult<Outcome> {
    let t = load_protocol(protocol)?;
    let p = protocol_problem(&t, problem)?;
    let model = protocol_to_lhv(&t, &p, cfg.scan_limit)?;
    let click = model.input_independent_click(&p, cfg.scan_limit)?;
    let reproduces = model.reproduces(&p, Compare::Exact, cfg.scan_limit)?;
    let report = TransformReport {
        bits: t.bits(),
        conversations: model.conversations,
        all_click_probability_f64: click.as_ref().map(rational_to_f64),
        input_independent: click.is_some(),
        all_click_probability: click.map(Weight),
        reproduces_exactly: reproduces,
        model,
    };
    Ok(Outcome {
        passed: report.input_independent && reproduces,
        text: json(&report)?,
    })
}

pub fn comm_ghz_protocol(n: usize, l: u32, out: &Path) -> CliResult<Outcome> {
    let t = ghz_broadcast_protocol(n, l)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_protocol(&t, out)?;
    Ok(Outcome::pass(format!(
        "wrote {} ({} bits, {} leaves)\n",
        out.display(),
        t.bits(),
        t.leaf_count()
    )))
}

/// One line of the reproduction table.
#[derive(Debug, Clone, Serialize)]
pub struct ReproduceRow {
    pub n: usize,
    pub mode: CountMode,
    pub l_eta: u32,
    pub eta_upper: f64,
    pub l_rpub: u32,
    pub rpub_real: f64,
    pub rpub_floor: u64,
    pub rpub_ceil: u64,
}

impl From<&OptimizedBounds> for ReproduceRow {
    fn from(o: &OptimizedBounds) -> Self {
        ReproduceRow {
            n: o.n,
            mode: o.mode,
            l_eta: o.l_eta,
            eta_upper: o.eta_upper,
            l_rpub: o.l_rpub,
            rpub_real: o.rpub.real,
            rpub_floor: o.rpub.floor_bits,
            rpub_ceil: o.rpub.bits,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

/// Reference values: (n, efficiency bound, bits).
pub const REFERENCE: [(usize, f64, u64); 2] = [(8, 0.46, 9), (12, 0.29, 22)];

#[derive(Debug, Serialize)]
pub struct ReproduceReport {
    pub mode: CountMode,
    pub rows: Vec<ReproduceRow>,
    /// Paper-mode rows when `mode` is exact.
    pub paper_rows: Option<Vec<ReproduceRow>>,
    pub checks: Vec<Check>,
}

impl ReproduceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn reproduce_report(mode: CountMode, extra: &[usize]) -> CliResult<ReproduceReport> {
    let mut ns: Vec<usize> = REFERENCE.iter().map(|p| p.0).collect();
    for &n in extra {
        if n < 3 {
            return Err(CliError::usage(format!("--n-extra needs n >= 3, got {n}")));
        }
        if !ns.contains(&n) {
            ns.push(n);
        }
    }
    let rows_for = |m: CountMode| -> CliResult<Vec<ReproduceRow>> {
        ns.iter()
            .map(|&n| Ok(ReproduceRow::from(&ghz_bounds_optimized(n, m, default_l_range(n))?)))
            .collect()
    };
    let paper = rows_for(CountMode::Paper)?;
    let mut checks = Vec::new();
    for (row, &(n, eta, bits)) in paper.iter().zip(REFERENCE.iter()) {
        checks.push(Check {
            name: format!("n={n} efficiency bound {} <= {eta}", sig17(row.eta_upper)),
            passed: row.eta_upper <= eta,
        });
        checks.push(Check {
            name: format!("n={n} communication bound {} >= {bits}", sig17(row.rpub_real)),
            passed: row.rpub_real + 1e-9 >= bits as f64,
        });
    }
    for row in &paper[REFERENCE.len()..] {
        let cap = 8.0 / row.n as f64;
        checks.push(Check {
            name: format!(
                "n={} efficiency bound {} <= 8/n = {}",
                row.n,
                sig17(row.eta_upper),
                sig17(cap)
            ),
            passed: row.eta_upper <= cap + 1e-12,
        });
    }
    Ok(match mode {
        CountMode::Paper => ReproduceReport {
            mode,
            rows: paper,
            paper_rows: None,
            checks,
        },
        CountMode::Exact => ReproduceReport {
            mode,
            rows: rows_for(CountMode::Exact)?,
            paper_rows: Some(paper),
            checks,
        },
    })
}

pub fn render_reproduce(rep: &ReproduceReport) -> String {
    let mut s = String::new();
    let table = |s: &mut String, title: &str, rows: &[ReproduceRow]| {
        let _ = writeln!(s, "{title}");
        let _ = writeln!(
            s,
            "{:>4}  {:>5}  {:>24}  {:>6}  {:>6}  {:>24}  {:>6}  {:>5}  {:>4}",
            "n", "l_eta", "eta_upper", "2dp", "l_rpub", "rpub_lower_real", "2dp", "floor", "ceil"
        );
        for r in rows {
            let _ = writeln!(
                s,
                "{:>4}  {:>5}  {:>24}  {:>6}  {:>6}  {:>24}  {:>6}  {:>5}  {:>4}",
                r.n,
                r.l_eta,
                sig17(r.eta_upper),
                dp2(r.eta_upper),
                r.l_rpub,
                sig17(r.rpub_real),
                dp2(r.rpub_real),
                r.rpub_floor,
                r.rpub_ceil
            );
        }
    };
    table(&mut s, &format!("mode: {}", rep.mode.as_str()), &rep.rows);
    if let Some(paper) = &rep.paper_rows {
        s.push('\n');
        table(&mut s, "mode: paper", paper);
        s.push('\n');
        let _ = writeln!(s, "exact minus paper:");
        for (e, p) in rep.rows.iter().zip(paper) {
            let _ = writeln!(
                s,
                "  n={}: eta ratio {} (2^(-1/n) = {}), rpub delta {}",
                e.n,
                sig17(e.eta_upper / p.eta_upper),
                sig17((-1.0 / e.n as f64).exp2()),
                sig17(e.rpub_real - p.rpub_real)
            );
        }
    }
    s.push('\n');
    for c in &rep.checks {
        let _ = writeln!(s, "[{}] {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    let _ = writeln!(s, "result: {}", if rep.passed() { "PASS" } else { "FAIL" });
    s
}

pub fn reproduce(mode: CountMode, extra: &[usize], as_json: bool) -> CliResult<Outcome> {
    let rep = reproduce_report(mode, extra)?;
    Ok(Outcome {
        passed: rep.passed(),
        text: if as_json { json(&rep)? } else { render_reproduce(&rep) },
    })
}

#[derive(Debug, Serialize)]
pub struct CrosscheckReport {
    pub n: usize,
    pub l: u32,
    pub objective: Objective,
    pub promise_size: u128,
    pub r: u64,
    pub analytic_floor: String,
    pub r_within_analytic: bool,
    pub q_star: f64,
    pub q_star_reevaluated: f64,
    pub q_star_rational: String,
    pub eta_star: f64,
    pub eta_bound: f64,
    pub eta_bound_capped: f64,
    pub margin: f64,
    pub rpub_lower_real: f64,
    pub passed: bool,
}

pub fn crosscheck_report(n: usize, l: u32, objective: Objective, cfg: &RunConfig) -> CliResult<CrosscheckReport> {
    let params = GhzParams::new(n, l)?;
    let p = build_ghz_problem(params);
    let d_size = p.promise_size(cfg.scan_limit)?;
    let best = max_monochromatic_overlap(&p, cfg.scan_limit, cfg.max_nodes)?;
    let floor = analytic_r_bound_floor(n, l);
    let opt = max_click_probability(&p, objective, cfg.lhv_limits())?;
    let reevaluated = evaluate_distribution(&p, &opt.distribution, objective, cfg.scan_limit)?;
    let rational = opt.certify()?;
    let eta_star = eta_from_click(opt.q_star, n);
    let bound = bounds_from_exact(n, 2, best.r, d_size)?;
    let margin = bound.eta_raw - eta_star;
    let r_ok = num_bigint::BigUint::from(best.r) <= floor;
    let passed = margin >= -SOUNDNESS_MARGIN
        && r_ok
        && (reevaluated - opt.q_star).abs() <= SOUNDNESS_MARGIN
        && (rational_to_f64(&rational) - opt.q_star).abs() <= SOUNDNESS_MARGIN;
    Ok(CrosscheckReport {
        n,
        l,
        objective,
        promise_size: d_size,
        r: best.r,
        analytic_floor: floor.to_string(),
        r_within_analytic: r_ok,
        q_star: opt.q_star,
        q_star_reevaluated: reevaluated,
        q_star_rational: rational.to_string(),
        eta_star,
        eta_bound: bound.eta_raw,
        eta_bound_capped: bound.eta_upper,
        margin,
        rpub_lower_real: bound.rpub.real,
        passed,
    })
}

pub fn crosscheck(n: usize, l: u32, objective: Objective, cfg: &RunConfig) -> CliResult<Outcome> {
    let rep = crosscheck_report(n, l, objective, cfg)?;
    Ok(Outcome {
        passed: rep.passed,
        text: json(&rep)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConfigFile, FlagOverrides};

    fn cfg() -> RunConfig {
        RunConfig::resolve(ConfigFile::default(), FlagOverrides::default(), None).unwrap()
    }

    #[test]
    fn problem_specs() {
        assert_eq!(
            resolve_problem("ghz:3,2").unwrap().shape(),
            Shape::new(3, 4, 2).unwrap()
        );
        assert!(resolve_problem("ghz:3").is_err());
        assert!(resolve_problem("/nonexistent/problem.json").is_err());
        assert_eq!(parse_vector("1, 2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_vector("1,x").is_err());
    }

    #[test]
    fn reproduce_paper_mode() {
        let rep = reproduce_report(CountMode::Paper, &[16]).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.rows.len(), 3);
        assert_eq!(rep.checks.len(), 5);
        assert_eq!(dp2(rep.rows[0].eta_upper), "0.46");
        assert_eq!(rep.rows[0].rpub_floor, 9);
        assert_eq!(rep.rows[1].rpub_floor, 22);
    }

    #[test]
    fn reproduce_exact_mode_reports_delta() {
        let rep = reproduce_report(CountMode::Exact, &[]).unwrap();
        assert!(rep.passed());
        let paper = rep.paper_rows.as_ref().unwrap();
        for (e, p) in rep.rows.iter().zip(paper) {
            assert!((e.rpub_real - p.rpub_real - 1.0).abs() < 1e-9);
        }
        assert!(render_reproduce(&rep).contains("exact minus paper"));
    }

    #[test]
    fn crosscheck_small() {
        let rep = crosscheck_report(2, 2, Objective::Average, &cfg()).unwrap();
        assert_eq!(rep.r, 2);
        assert_eq!(rep.promise_size, 8);
        assert!(rep.passed);
        let rep = crosscheck_report(2, 1, Objective::Average, &cfg()).unwrap();
        assert_eq!(rep.q_star, 1.0);
        assert!(rep.passed);
    }

    #[test]
    fn rect_budget_is_loud() {
        let mut c = cfg();
        c.max_nodes = 1;
        let err = rect("ghz:3,2", &c).unwrap_err();
        assert_eq!(err.exit, crate::output::Exit::Budget);
    }
}
