use std::collections::BTreeMap;

use eternal_core::eternal::{FarPastOptions, TimeModel};
use eternal_core::evolution::{profile_checks, ProfileCheckOptions};
use eternal_core::inhomogeneous::{decompose, exhaustion_limit, ExhaustionResult};
use eternal_core::io::{write_columns_csv, write_contraction_csv, write_profile_csv, write_trace_csv, EternalHeader};
use eternal_core::operator::TimeDependence;
use eternal_core::verify::{
    check_decay_qplus, check_decay_step, check_max_principle, comparison_constant, fit_rates, kl_contraction,
    proportionality, MaxPrincipleScope,
};
use eternal_core::{
    evolve, far_past, floquet_principal, principal_eigenpair, sup_profile, CylinderWindow, Error, EternalSolution,
    EvolutionTrace, FieldSlice, SourceSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{default_window, horizon, Kind, Prepared};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, value: Option<f64>, tolerance: Option<f64>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value,
            tolerance,
            detail: detail.into(),
        }
    }

    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, value <= tolerance, Some(value), Some(tolerance), format!("{value:.3e} <= {tolerance:.1e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: Kind,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Reports keyed by their type name.
    pub reports: BTreeMap<String, Value>,
    pub files: Vec<String>,
    /// Diagnostics of an internal solver failure.
    pub error: Option<String>,
}

/// Everything one experiment produces, including CSV payloads that are
/// written later by the caller.
pub struct Outcome {
    pub result: ExperimentResult,
    pub csv: Vec<(String, Vec<u8>)>,
}

struct Builder {
    kind: Kind,
    checks: Vec<Check>,
    reports: BTreeMap<String, Value>,
    csv: Vec<(String, Vec<u8>)>,
}

type Res<T> = std::result::Result<T, Error>;

impl Builder {
    fn new(kind: Kind) -> Self {
        Self {
            kind,
            checks: Vec::new(),
            reports: BTreeMap::new(),
            csv: Vec::new(),
        }
    }

    fn report<T: Serialize>(&mut self, name: &str, r: &T) -> Res<()> {
        self.reports.insert(name.into(), serde_json::to_value(r)?);
        Ok(())
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn file(&mut self, stem: &str, write: impl FnOnce(&mut Vec<u8>) -> Res<()>) -> Res<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.csv.push((format!("{}_{stem}.csv", self.kind.name()), buf));
        Ok(())
    }

    fn finish(self, error: Option<String>) -> Outcome {
        let passed = error.is_none() && self.checks.iter().all(|c| c.passed);
        Outcome {
            result: ExperimentResult {
                kind: self.kind,
                passed,
                checks: self.checks,
                reports: self.reports,
                files: self.csv.iter().map(|(n, _)| n.clone()).collect(),
                error,
            },
            csv: self.csv,
        }
    }
}

/// Named random streams derived from the single config seed.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    rng.set_stream(id);
    rng
}

struct Ctx<'a> {
    p: &'a Prepared,
    window: CylinderWindow,
}

impl Ctx<'_> {
    fn positive_seed(&self, name: &str) -> FieldSlice {
        let mut rng = stream(self.p.config.seed, name);
        let values = (0..self.p.grid.len()).map(|_| rng.gen_range(0.5..1.5)).collect();
        FieldSlice::new(0.0, values)
    }

    fn far_past(&self, seed_name: &str) -> Res<EternalSolution> {
        let par = &self.p.config.params;
        let opts = FarPastOptions {
            t_back: par.t_back,
            max_t_back: par.max_t_back,
            seed_tol: par.tolerances.route_agreement,
            scheme: self.p.config.scheme,
            check_seed: None,
        };
        far_past(&self.p.spec, &self.p.grid, &self.window, &self.positive_seed(seed_name), &opts)
    }

    /// The eternal solution by the route matching the time dependence.
    fn eternal(&self) -> Res<EternalSolution> {
        let p = self.p;
        match p.spec.time_dependence() {
            TimeDependence::Autonomous => {
                let pair = principal_eigenpair(&p.spec, &p.grid, p.config.params.eigen_tol)?;
                let model = TimeModel::Discrete {
                    scheme: p.config.scheme,
                    dt: p.dt,
                };
                EternalSolution::from_eigenpair(p.grid.clone(), &pair, model)
            }
            TimeDependence::Periodic { period } => Ok(floquet_principal(
                &p.spec,
                &p.grid,
                period,
                p.dt,
                p.config.params.floquet_tol,
                p.config.scheme,
            )?
            .solution),
            TimeDependence::General => self.far_past("far_past"),
        }
    }

    /// Decay rate predicted independently of the time stepping: the
    /// principal eigenvalue, or the Floquet mean rate. `None` otherwise.
    fn reference_rate(&self) -> Res<Option<f64>> {
        let p = self.p;
        Ok(match p.spec.time_dependence() {
            TimeDependence::Autonomous => Some(principal_eigenpair(&p.spec, &p.grid, p.config.params.eigen_tol)?.rate),
            TimeDependence::Periodic { period } => Some(
                floquet_principal(&p.spec, &p.grid, period, p.dt, p.config.params.floquet_tol, p.config.scheme)?
                    .mean_rate,
            ),
            TimeDependence::General => None,
        })
    }

    fn stride(&self) -> usize {
        self.p.config.params.csv_stride
    }
}

fn window_for(p: &Prepared, kind: Kind, single: bool) -> Res<CylinderWindow> {
    let [a, b] = match p.config.params.window {
        Some(w) if single => w,
        _ => default_window(kind, &p.config.params),
    };
    CylinderWindow::new(a, b, p.dt)
}

/// Runs one experiment kind. `single` is false inside a suite, where every
/// kind uses its default window.
pub fn run_kind(p: &Prepared, kind: Kind, single: bool) -> Outcome {
    let mut b = Builder::new(kind);
    let outcome = window_for(p, kind, single).and_then(|window| {
        let ctx = Ctx { p, window };
        match kind {
            Kind::Eternal => eternal(&ctx, &mut b),
            Kind::Rates => rates(&ctx, &mut b),
            Kind::Comparison => comparison(&ctx, &mut b),
            Kind::Contraction => contraction(&ctx, &mut b),
            Kind::MaxPrinciple => max_principle(&ctx, &mut b),
            Kind::Exhaustion => exhaustion(&ctx, &mut b).map(|_| ()),
            Kind::Decompose => decomposition(&ctx, &mut b),
            Kind::Suite => unreachable!("suites are expanded by the caller"),
        }
    });
    b.finish(outcome.err().map(|e| e.to_string()))
}

/// Kinds run by a suite; the inhomogeneous ones need a truncation list.
pub fn suite_kinds(p: &Prepared) -> Vec<Kind> {
    let mut kinds = vec![Kind::Eternal, Kind::Rates, Kind::Comparison, Kind::Contraction, Kind::MaxPrinciple];
    if p.config.params.n_list.is_some() {
        kinds.extend([Kind::Exhaustion, Kind::Decompose]);
    }
    kinds
}

fn eternal(ctx: &Ctx, b: &mut Builder) -> Res<()> {
    let w = ctx.eternal()?;
    let trace = w.sample(&ctx.window)?;
    let grid = w.grid();
    let header = EternalHeader {
        route: w.route,
        rate: w.rate,
        normalization: w.normalization()?,
        dim: grid.dim(),
        h: grid.h().to_vec(),
        nodes: grid.len(),
        origin: grid.coords(grid.origin_node()).to_vec(),
        t_start: trace.t_start(),
        t_end: trace.t_end(),
        dt: trace.dt(),
    };
    b.report("EternalHeader", &header)?;
    let min = trace.raw_values().iter().copied().fold(f64::INFINITY, f64::min);
    b.check(Check::new("positive", min > 0.0, Some(min), None, format!("min over window {min:.3e}")));

    let profile = sup_profile(&trace)?;
    let pr = profile_checks(&profile, ProfileCheckOptions::default())?;
    b.report("ProfileReport", &pr)?;
    b.check(Check::new(
        "sup_profile_strictly_decreasing",
        pr.violations == 0,
        Some(pr.violations as f64),
        None,
        format!("{} violations over {} samples", pr.violations, pr.samples),
    ));

    if w.route != eternal_core::Route::FarPast {
        let other = ctx.far_past("route_agreement")?;
        let s = proportionality(&w, &other, &ctx.window)?;
        b.report("ScaleReport", &s)?;
        b.check(Check::at_most(
            "route_agreement_spread",
            s.spread,
            ctx.p.config.params.tolerances.route_agreement,
        ));
    }
    let stride = ctx.stride();
    b.file("trace", |out| write_trace_csv(out, &trace, stride))
}

fn rates(ctx: &Ctx, b: &mut Builder) -> Res<()> {
    let tol = &ctx.p.config.params.tolerances;
    let w = ctx.eternal()?;
    let trace = w.sample(&ctx.window)?;
    let profile = sup_profile(&trace)?;
    let r = fit_rates(&profile, ctx.p.config.params.split)?;
    b.report("RateReport", &r)?;
    b.check(Check::new(
        "bracket",
        r.bracket_violations == 0,
        Some(r.bracket_violations as f64),
        None,
        format!("{} violations over {} samples", r.bracket_violations, r.samples),
    ));
    let reference = ctx.reference_rate()?;
    if let (Some(mu), true) = (reference, ctx.p.spec.is_autonomous()) {
        for (name, slope) in [("forward_rate", r.forward_rate), ("backward_rate", r.backward_rate)] {
            if let Some(s) = slope {
                b.check(Check::at_most(name, (s - mu).abs(), tol.rate));
            }
        }
    }

    let d = check_decay_step(&trace, &SourceSpec::zero())?;
    b.report("DecayReport", &d)?;
    let delta = d.delta.unwrap_or(f64::NAN);
    match reference {
        Some(mu) => {
            let expected = 1.0 - (-mu).exp();
            b.check(Check::at_most("decay_delta_relative_error", (delta / expected - 1.0).abs(), tol.decay));
        }
        None => b.check(Check::new(
            "decay_delta",
            delta > 0.0 && delta < 1.0,
            Some(delta),
            None,
            format!("delta {delta:.6} in (0, 1)"),
        )),
    }
    b.file("profile", |out| write_profile_csv(out, &profile))
}

fn comparison(ctx: &Ctx, b: &mut Builder) -> Res<()> {
    let u = ctx.far_past("comparison_u")?.sample(&ctx.window)?;
    let v = ctx.far_past("comparison_v")?.sample(&ctx.window)?;
    let r = comparison_constant(&u, &v)?;
    b.report("ComparisonReport", &r)?;
    b.check(Check::at_most(
        "c_star_excess",
        r.c_star - 1.0,
        ctx.p.config.params.tolerances.comparison,
    ));
    let times: Vec<f64> = u.times().collect();
    let (pu, pv) = (sup_profile(&u)?, sup_profile(&v)?);
    b.file("profiles", |out| {
        write_columns_csv(out, &["t", "u_hat", "v_hat"], &[&times, &pu.values, &pv.values])
    })
}

fn contraction(ctx: &Ctx, b: &mut Builder) -> Res<()> {
    let p = ctx.p;
    let par = &p.config.params;
    let initial = match &par.initial {
        Some(e) => FieldSlice::from_fn(&p.grid, ctx.window.t_start, |y| e.eval(y, ctx.window.t_start)),
        None => FieldSlice::new(ctx.window.t_start, ctx.positive_seed("contraction").values),
    };
    let u = evolve(&p.spec, &SourceSpec::zero(), &p.grid, &initial, &ctx.window, p.config.scheme)?;
    let w = ctx.eternal()?;
    let r = kl_contraction(&u, &w, par.j_max, horizon(par))?;
    b.report("ContractionReport", &r)?;
    b.check(Check::new("monotone", r.monotone, None, None, "K_j nonincreasing, L_j nondecreasing"));
    b.check(Check::new("zeta_below_one", r.zeta < 1.0, Some(r.zeta), Some(1.0), format!("zeta {:.4e}", r.zeta)));
    b.check(Check::new(
        "envelope",
        r.envelope_violations == 0,
        Some(r.envelope_violations as f64),
        None,
        format!("{} violations", r.envelope_violations),
    ));
    b.check(Check::new(
        "tail_insensitive",
        !r.tail_sensitive,
        r.tail_change,
        Some(0.01),
        format!("tail change {:?}", r.tail_change),
    ));
    b.file("kl", |out| write_contraction_csv(out, &r))
}

fn max_principle(ctx: &Ctx, b: &mut Builder) -> Res<()> {
    let p = ctx.p;
    let mut rng = stream(p.config.seed, "max_principle");
    let values = (0..p.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let initial = FieldSlice::new(ctx.window.t_start, values);
    let u = evolve(&p.spec, &p.source, &p.grid, &initial, &ctx.window, p.config.scheme)?;
    let r = check_max_principle(&u, &p.source, MaxPrincipleScope::QPlus)?;
    b.report("MaxPrincipleReport", &r)?;
    let detail = match r.empirical_constant {
        Some(c) => format!("sup u+ {:.4e}, empirical C {c:.4e}", r.sup_u_plus),
        None => format!("sup u+ {:.4e} <= initial sup {:.4e}", r.sup_u_plus, r.boundary_sup_plus),
    };
    b.check(Check::new("max_principle", r.passed, r.empirical_constant, None, detail));
    if p.source.is_zero() {
        let q = check_decay_qplus(&u, &p.source)?;
        b.report("QPlusEnvelopeReport", &q)?;
    }
    let profile = sup_profile(&u)?;
    b.file("profile", |out| write_profile_csv(out, &profile))
}

/// Solves the exhaustion sequence; a non-decaying Cauchy sequence is a
/// failed check rather than an internal error.
fn exhaustion(ctx: &Ctx, b: &mut Builder) -> Res<Option<ExhaustionResult>> {
    let p = ctx.p;
    let (n_list, half_width) = truncation(p);
    let r = match exhaustion_limit(&p.spec, &p.source, &p.grid, &n_list, half_width, p.dt, p.config.scheme) {
        Ok(r) => r,
        Err(Error::NoCauchyDecay { ratio }) => {
            b.check(Check::new("cauchy_decay", false, Some(ratio), Some(1.0), format!("ratio {ratio:.4e}")));
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    b.report("ExhaustionResult", &r)?;
    b.check(Check::at_most(
        "uniform_variation",
        r.uniform_variation,
        eternal_core::inhomogeneous::UNIFORM_BOUND_VARIATION,
    ));
    if let Some(q) = r.cauchy_ratio {
        b.check(Check::new("cauchy_decay", q < 1.0, Some(q), Some(1.0), format!("ratio {q:.4e}")));
    }
    let sup = r.sup_norms.clone();
    let ns = r.n_list.clone();
    b.file("sup_norms", |out| write_columns_csv(out, &["n", "sup_norm"], &[&ns, &sup]))?;
    let idx: Vec<f64> = r.n_list.windows(2).map(|w| w[1]).collect();
    let diffs = r.differences.clone();
    b.file("differences", |out| write_columns_csv(out, &["n", "difference"], &[&idx, &diffs]))?;
    Ok(Some(r))
}

fn truncation(p: &Prepared) -> (Vec<f64>, f64) {
    let n_list = p.config.params.n_list.clone().unwrap_or_default();
    let half_width = p.config.params.half_width.unwrap_or(n_list.first().copied().unwrap_or(0.0) / 2.0);
    (n_list, half_width)
}

fn decomposition(ctx: &Ctx, b: &mut Builder) -> Res<()> {
    let p = ctx.p;
    let Some(ex) = exhaustion(ctx, b)? else {
        return Ok(());
    };
    let u0: EvolutionTrace = ex.limit.ok_or(Error::EmptyTrace)?;
    let w = ctx.eternal()?;
    let a = p
        .config
        .params
        .a
        .unwrap_or_else(|| stream(p.config.seed, "decompose").gen_range(0.5..5.0));
    let window = CylinderWindow::new(u0.t_start(), u0.t_end(), u0.dt())?;
    let w_start = w.slice_at(window.t_start)?;
    let init: Vec<f64> = u0.slice(0).iter().zip(&w_start).map(|(x, y)| x + a * y).collect();
    let u = evolve(
        &p.spec,
        &p.source,
        &p.grid,
        &FieldSlice::new(window.t_start, init),
        &window,
        p.config.scheme,
    )?;
    let r = decompose(&u, &u0, &w)?;
    b.report("DecompositionReport", &r)?;
    let tol = p.config.params.tolerances.decomposition;
    b.check(Check::at_most("coefficient_error", (r.a - a).abs() / a.abs().max(1.0), tol));
    b.check(Check::at_most("ratio_spread", r.spread, tol));
    let stride = ctx.stride();
    b.file("limit", |out| write_trace_csv(out, &u0, stride))
}
