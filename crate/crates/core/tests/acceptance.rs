//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion (with
//! indented detail lines) and always exits successfully: a failing
//! criterion is a reported result, not a test failure.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spike_core::construct::reduced_map;
use spike_core::domain::{DomainModel, DomainSpec, RadiusCoeffs, DEFAULT_NODES};
use spike_core::kirchhoff::{degree_sign, SpikeConfiguration};
use spike_core::pde::{eigenfunction_span, perturbed_start, solve_lane_emden, DiscreteSolution, FemSystem, NewtonOptions, SpectrumReport};
use spike_core::pipeline::{green_rows, DomainSource, Pipeline, RunConfig};
use spike_core::profiles::{ProfileOptions, ProfileTable};
use spike_core::{Mat2, Vec2};

const SWEEP: [f64; 4] = [10.0, 20.0, 40.0, 80.0];

struct Verdict {
    lines: Vec<String>,
    pass: bool,
}

impl Verdict {
    fn new() -> Self {
        Self { lines: Vec::new(), pass: true }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "MISS" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }

    fn fail(&mut self, line: String) {
        self.check(false, line);
    }

    fn print(&self, n: usize, title: &str) {
        for l in &self.lines {
            println!("    {l}");
        }
        println!("criterion {n} ({title}): {}", if self.pass { "PASS" } else { "FAIL" });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn pipeline(cfg: RunConfig) -> Pipeline {
    Pipeline::new(cfg, ProfileTable::default_cache_dir()).expect("valid configuration")
}

fn lobe_spec() -> DomainSpec {
    DomainSpec::Star { radius_coeffs: RadiusCoeffs::cosine_mode(1.0, 2, -0.65), nodes: None }
}

// ---------------------------------------------------------------- 1, 2

fn profiles() -> (Verdict, Verdict, ProfileTable) {
    let t0 = Instant::now();
    let t = ProfileTable::compute(&ProfileOptions::default()).expect("profiles");
    let secs = t0.elapsed().as_secs_f64();
    let m = t.moments;
    let mut v1 = Verdict::new();
    for (name, got, want) in [
        ("int e^U = 8 pi", m.mass, 8.0 * PI),
        ("(1/2pi) int log(1/|y|) e^U = -log 64", m.log_mass, -(64f64.ln())),
        ("int e^U y_q^2/(8+|y|^2)^2 = pi/12", m.dipole, PI / 12.0),
        ("int e^U ((8-|y|^2)/(8+|y|^2))^2 = 8 pi/3", m.radial_mode, 8.0 * PI / 3.0),
    ] {
        let r = rel(got, want);
        v1.check(r < 1e-7, format!("{name}: {got:.15e} vs {want:.15e}, rel {r:.1e}"));
    }
    let (b0, b1) = t.offsets();
    for (i, got, b) in [(0, m.log_f0, b0), (1, m.log_f1, b1)] {
        // the stated value is 0, so the deviation is measured absolutely
        v1.check(got.abs() < 1e-7, format!("int log(1/|y|) e^U f_{i} = 0: computed {got:.10e}"));
        v1.note(format!("  (= -2 pi B_{i} = {:.10e}, rel {:.1e}, with B_{i} = lim w_{i} - C_{i} log r)", -2.0 * PI * b, rel(got, -2.0 * PI * b)));
    }
    v1.check(secs < 10.0, format!("runtime {secs:.2} s (< 10 s)"));

    let mut v2 = Verdict::new();
    for (i, slope, moment) in [(0, t.c0, t.c0_moment), (1, t.c1, t.c1_moment)] {
        let r = rel(slope, moment);
        v2.check(r < 1e-6, format!("C_{i}: slope {slope:.12} vs moment {moment:.12}, rel {r:.1e}"));
    }
    v2.check(secs < 30.0, format!("runtime {secs:.2} s (< 30 s)"));
    (v1, v2, t)
}

// ---------------------------------------------------------------- 3

fn green_oracle() -> Verdict {
    let t0 = Instant::now();
    let mut v = Verdict::new();
    let disc = DomainModel::unit_disc().unwrap();
    let star = DomainModel::star(RadiusCoeffs::circle(1.0), DEFAULT_NODES).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut point = || {
        let (r, t): (f64, f64) = (0.9 * rng.random::<f64>().sqrt(), rng.random_range(0.0..2.0 * PI));
        Vec2::new(r * t.cos(), r * t.sin())
    };
    let mut worst = [0.0f64; 5];
    for _ in 0..20 {
        let (x, y) = (point(), point());
        let (a, b) = (star.robin(x).unwrap(), disc.robin(x).unwrap());
        worst[2] = worst[2].max((a.value - b.value).abs());
        worst[3] = worst[3].max((a.grad - b.grad).amax());
        worst[4] = worst[4].max((a.hess - b.hess).amax());
        let (a, b) = (star.green(x, y).unwrap(), disc.green(x, y).unwrap());
        worst[0] = worst[0].max((a.value - b.value).abs());
        worst[1] = worst[1].max((a.regular.value - b.regular.value).abs());
    }
    for (name, w) in ["G", "H", "R", "grad R", "D^2 R"].iter().zip(worst) {
        v.check(w < 1e-6, format!("{name}: max deviation {w:.2e} over 20 random points"));
    }
    // an independent check of the closed forms themselves at the centre
    let c = disc.robin(Vec2::zeros()).unwrap();
    v.check((c.hess - Mat2::identity() / PI).amax() < 1e-14, "disc D^2 R(0) = I/pi".into());
    let secs = t0.elapsed().as_secs_f64();
    v.check(secs < 60.0, format!("runtime {secs:.2} s (< 60 s)"));
    v
}

// ---------------------------------------------------------------- 4

fn quadratic_forms(crits: &[(&str, &DomainModel, &SpikeConfiguration)]) -> Verdict {
    let t0 = Instant::now();
    let mut v = Verdict::new();
    for (label, d, c) in crits {
        match green_rows(d, c, 1e-5) {
            Ok(rows) => {
                let worst = rows.iter().map(|r| (r.computed - r.predicted).abs()).fold(0.0, f64::max);
                let failing: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
                v.check(failing.is_empty(), format!("{label}: {} identities, max |lhs - rhs| {worst:.2e}, failing {failing:?}", rows.len()));
                if let Some(r) = rows.iter().find(|r| r.name.starts_with("P_0(G_0,G_0)")) {
                    v.note(format!("{label}: P_0(G,G) = {:.12} (-1/2pi = {:.12})", r.computed, -1.0 / (2.0 * PI)));
                }
            }
            Err(e) => v.fail(format!("{label}: {e}")),
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    v.check(secs < 60.0, format!("runtime {secs:.2} s (< 60 s)"));
    v
}

// ---------------------------------------------------------------- 5, 6, 9

struct DiscRun {
    p: f64,
    nodes: usize,
    sol: DiscreteSolution,
    spec: Option<SpectrumReport>,
    span: Vec<f64>,
    approx_error: f64,
}

fn disc_run(pl: &Pipeline, table: &ProfileTable, crit: &SpikeConfiguration, p: f64, spectrum: bool) -> Result<DiscRun, String> {
    let c = pl.construct(table, crit, p).map_err(|e| e.to_string())?;
    let sol = pl.solve(table, &c).map_err(|e| e.to_string())?;
    let approx_error = sol.u.iter().zip(&c.approx.field).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (spec, span) = if spectrum {
        let s = pl.spectrum(&c, &sol, false).map_err(|e| e.to_string())?;
        let span = (1..3).map(|l| eigenfunction_span(&c.mesh, &sol, &s.eigenvectors[l], 10.0).unwrap_or(f64::NAN)).collect();
        (Some(s), span)
    } else {
        (None, Vec::new())
    };
    Ok(DiscRun { p, nodes: c.mesh.len(), sol, spec, span, approx_error })
}

fn disc_end_to_end(runs: &[DiscRun], t0: Instant) -> Verdict {
    let mut v = Verdict::new();
    let half_e = 0.5f64.exp();
    for r in runs {
        let s = r.spec.as_ref().unwrap();
        v.note(format!(
            "p={}: {} nodes, peak {:.6}, energy {:.6}, lambda {:?}",
            r.p,
            r.nodes,
            r.sol.peak_values[0],
            r.sol.energy,
            s.eigenvalues.iter().map(|l| format!("{l:.6}")).collect::<Vec<_>>()
        ));
        v.check(s.morse == 1, format!("(a) p={}: Morse index {}", r.p, s.morse));
    }
    let gaps: Vec<f64> = runs.iter().map(|r| (r.sol.peak_values[0] - half_e).abs()).collect();
    for (w, ps) in gaps.windows(2).zip(runs.windows(2)) {
        let ratio = w[0] / w[1];
        v.check(
            w[1] < w[0] && (1.5..=2.5).contains(&ratio),
            format!("(b) |u_max - sqrt e|: {:.3e} (p={}) -> {:.3e} (p={}), ratio {ratio:.3}", w[0], ps[0].p, w[1], ps[1].p),
        );
    }
    // Neville tableau in h = 1/p
    let h: Vec<f64> = runs.iter().map(|r| 1.0 / r.p).collect();
    let mut tab: Vec<f64> = runs.iter().map(|r| r.sol.energy).collect();
    let mut levels = vec![tab.clone()];
    for m in 1..tab.len() {
        tab = (0..tab.len() - 1).map(|i| (h[i] * tab[i + 1] - h[i + m] * tab[i]) / (h[i] - h[i + m])).collect();
        levels.push(tab.clone());
    }
    for (m, l) in levels.iter().enumerate().skip(1) {
        v.note(format!("(c) Richardson order {m}: {:?}", l.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>()));
    }
    let extrapolated = levels.last().unwrap()[0];
    let target = 68.343;
    v.check(
        rel(extrapolated, target) < 0.01,
        format!("(c) extrapolated p|grad u|^2 = {extrapolated:.4} vs {target} (8 pi e = {:.4}), rel {:.2}%", 8.0 * PI * 1f64.exp(), 100.0 * rel(extrapolated, target)),
    );
    for r in runs {
        let l1p = r.spec.as_ref().unwrap().eigenvalues[0] * r.p;
        v.check(l1p > 0.5 && l1p < 1.5, format!("(d) p={}: lambda_1 p = {l1p:.4}", r.p));
    }
    let (num, den) = runs.iter().fold((0.0, 0.0), |(a, b), r| {
        let top = r.spec.as_ref().unwrap().eigenvalues[3] - 1.0;
        (a + top / r.p, b + 1.0 / (r.p * r.p))
    });
    let coef = num / den;
    v.check(coef > 4.0 && coef < 8.0, format!("(d) fitted lambda_4 - 1 = c/p: c = {coef:.4}"));
    v.note(format!("runtime {:.1} s", t0.elapsed().as_secs_f64()));
    v
}

fn clusters(runs: &[DiscRun]) -> Verdict {
    let mut v = Verdict::new();
    for r in runs {
        let l = &r.spec.as_ref().unwrap().eigenvalues;
        let below = l.iter().filter(|x| **x < 0.9).count();
        let near = l.iter().filter(|x| (**x - 1.0).abs() < 3.0 / r.p).count();
        v.check(below == 1 && near == 2, format!("p={}: #{{lambda < 0.9}} = {below}, #{{|lambda - 1| < 3/p}} = {near}", r.p));
        if r.p <= 15.0 {
            // theta = 1/pi > 0 on the disc
            v.check(l[1] > 1.0 && l[2] > 1.0, format!("p={}: mid-cluster eigenvalues {:.6}, {:.6} exceed 1", r.p, l[1], l[2]));
        }
        for (i, s) in r.span.iter().enumerate() {
            v.check(*s >= 0.95, format!("p={}: lambda_{} eigenfunction span fraction {s:.4}", r.p, i + 2));
        }
    }
    v
}

fn approximation(runs: &[DiscRun], extra: Option<&DiscRun>) -> Verdict {
    let mut v = Verdict::new();
    let all: Vec<&DiscRun> = runs.iter().chain(extra).collect();
    for w in all.windows(2) {
        v.check(
            w[1].approx_error < w[0].approx_error,
            format!("|u - W|_inf decreases: {:.3e} (p={}) -> {:.3e} (p={})", w[0].approx_error, w[0].p, w[1].approx_error, w[1].p),
        );
    }
    for r in all.iter().filter(|r| r.p >= 40.0) {
        let bound = 1.0 / (r.p * r.p);
        v.check(
            r.approx_error < bound,
            format!("p={}: |u - W|_inf = {:.3e} vs 1/p^2 = {bound:.3e} (p^-5/2 = {:.3e})", r.p, r.approx_error, r.p.powf(-2.5)),
        );
    }
    v
}

// ---------------------------------------------------------------- 7

fn two_lobes(table: &ProfileTable, pl: &Pipeline, crit: &SpikeConfiguration) -> Verdict {
    let t0 = Instant::now();
    let mut v = Verdict::new();
    let p = 40.0;
    let mut ys: Vec<f64> = crit.points.iter().map(|x| x.y).collect();
    ys.sort_by(f64::total_cmp);
    v.check(
        crit.nondegenerate && ys[0] < 0.0 && ys[1] > 0.0,
        format!("critical point {:?}, nondegenerate {}, m = {}, theta {:?}", crit.points.iter().map(|x| (x.x, x.y)).collect::<Vec<_>>(), crit.nondegenerate, crit.morse, crit.theta),
    );
    let c = match pl.construct(table, crit, p) {
        Ok(c) => c,
        Err(e) => {
            v.fail(format!("construction: {e}"));
            return v;
        }
    };
    v.check(c.params.residual < 1e-12, format!("F residual {:.2e}", c.params.residual));
    let sol = match pl.solve(table, &c) {
        Ok(s) => s,
        Err(e) => {
            v.fail(format!("Newton from W at p = {p}: {e}"));
            return v;
        }
    };
    v.check(true, format!("Newton from W at p = {p}: {} steps, {} nodes, peaks {:?}", sol.iterations, c.mesh.len(), sol.peak_values));
    match pl.spectrum(&c, &sol, false) {
        Ok(s) => v.check(s.morse == 2 + crit.morse, format!("Morse index {} vs 2 + m = {}", s.morse, 2 + crit.morse)),
        Err(e) => v.fail(format!("spectrum: {e}")),
    }
    let degree = degree_sign(crit).unwrap_or(0);
    let expect = if crit.morse.is_multiple_of(2) { 1 } else { -1 };
    let det = reduced_map(crit, p, &[1.0, 1.0]).map(|r| r.det_sign).unwrap_or(0);
    v.check(degree == expect && det == expect, format!("degree {degree}, sign det B~' {det}, (-1)^(2+m) = {expect}"));

    let sys = FemSystem::new(&c.mesh, Default::default()).unwrap();
    let opts = NewtonOptions::default();
    let mut solutions: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut other = Vec::new();
    for seed in 0..20u64 {
        let u0 = perturbed_start(&c.mesh, &c.approx.field, 0.1, seed);
        match solve_lane_emden(&sys, p, &u0, &opts) {
            Ok(s) => {
                let d = s.u.iter().zip(&sol.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if d >= 1e-6 {
                    other.push(format!("seed {seed}: distance {d:.2e}, peaks {:?}", s.peak_values.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>()));
                }
                solutions.push((seed, s.u));
            }
            Err(e) => other.push(format!("seed {seed}: {e}")),
        }
    }
    let mut pairwise: f64 = 0.0;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            pairwise = pairwise.max(a.1.iter().zip(&b.1).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    for o in &other {
        v.note(o.clone());
    }
    v.check(
        other.is_empty() && solutions.len() == 20 && pairwise < 1e-6,
        format!("20 perturbations of size 10%: {} converged, {} match the base solution, max pairwise distance {pairwise:.2e}", solutions.len(), 20 - other.len()),
    );
    v.note(format!("runtime {:.1} s", t0.elapsed().as_secs_f64()));
    v
}

// ---------------------------------------------------------------- 8

fn pohozaev(table: &ProfileTable, crit: &SpikeConfiguration) -> Verdict {
    let mut v = Verdict::new();
    let res = [1.0, 2.0, 4.0];
    let mut data: Vec<Vec<(String, f64)>> = Vec::new();
    for &r in &res {
        let mut cfg = RunConfig::disc(1, vec![10.0]);
        cfg.resolution = r;
        let pl = pipeline(cfg);
        let out = pl.construct(table, crit, 10.0).and_then(|c| {
            let sol = pl.solve(table, &c)?;
            pl.spectrum(&c, &sol, true)
        });
        match out {
            Ok(s) => data.push(s.identity_residuals.iter().map(|x| (x.name.clone(), x.residual)).collect()),
            Err(e) => {
                v.fail(format!("resolution {r}: {e}"));
                return v;
            }
        }
    }
    let log_h: Vec<f64> = res.iter().map(|r| -r.ln()).collect();
    let mean_h = log_h.iter().sum::<f64>() / 3.0;
    for i in 0..data[0].len() {
        let name = &data[0][i].0;
        let vals: Vec<f64> = data.iter().map(|d| d[i].1).collect();
        let log_r: Vec<f64> = vals.iter().map(|x| x.ln()).collect();
        let mean_r = log_r.iter().sum::<f64>() / 3.0;
        let order = log_h.iter().zip(&log_r).map(|(h, r)| (h - mean_h) * (r - mean_r)).sum::<f64>()
            / log_h.iter().map(|h| (h - mean_h).powi(2)).sum::<f64>();
        v.check(
            order >= 1.5 && vals.windows(2).all(|w| w[1] < w[0]),
            format!("{name}: residuals {:?} at resolution 1, 2, 4; fitted order {order:.3}", vals.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()),
        );
    }
    v
}

// ---------------------------------------------------------------- 10

fn degree(crits: &[(&str, &DomainModel, &SpikeConfiguration)]) -> Verdict {
    let mut v = Verdict::new();
    let t0 = Instant::now();
    for (label, _, c) in crits {
        let expect = if (c.k + c.morse) % 2 == 0 { 1 } else { -1 };
        match reduced_map(c, 40.0, &vec![1.0; c.k]) {
            Ok(r) => v.check(r.det_sign == expect, format!("{label}: k = {}, m = {}, sign det J = {}, (-1)^(k+m) = {expect}", c.k, c.morse, r.det_sign)),
            Err(e) => v.fail(format!("{label}: {e}")),
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    v.check(secs < 1.0, format!("runtime {secs:.4} s (< 1 s)"));
    v
}

fn main() {
    // `cargo test -- --list` and filtered runs probe the binary; stay silent there
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }

    let (v1, v2, table) = profiles();
    v1.print(1, "profile moments");
    v2.print(2, "profile constants");
    green_oracle().print(3, "Green/Robin oracle");

    let disc_pl = pipeline(RunConfig::disc(1, SWEEP.to_vec()));
    let mut lobe_cfg = RunConfig::disc(2, vec![40.0]);
    lobe_cfg.domain = DomainSource::Inline(lobe_spec());
    let lobe_pl = pipeline(lobe_cfg);
    let disc_crit = disc_pl.critical().expect("disc critical point");
    let lobe_crit = lobe_pl.critical();
    let crits: Vec<(&str, &DomainModel, &SpikeConfiguration)> = match &lobe_crit {
        Ok(c) => vec![("disc k=1", &disc_pl.domain, &disc_crit), ("two-lobe k=2", &lobe_pl.domain, c)],
        Err(_) => vec![("disc k=1", &disc_pl.domain, &disc_crit)],
    };
    quadratic_forms(&crits).print(4, "quadratic-form identities");

    let t0 = Instant::now();
    let mut runs = Vec::new();
    let mut sweep_errors = Vec::new();
    for &p in &SWEEP {
        match disc_run(&disc_pl, &table, &disc_crit, p, true) {
            Ok(r) => runs.push(r),
            Err(e) => sweep_errors.push(format!("p={p}: {e}")),
        }
    }
    if sweep_errors.is_empty() {
        disc_end_to_end(&runs, t0).print(5, "disc end-to-end");
        clusters(&runs).print(6, "eigenvalue clusters");
    } else {
        for n in [5, 6] {
            let mut v = Verdict::new();
            for e in &sweep_errors {
                v.fail(e.clone());
            }
            v.print(n, "disc sweep");
        }
    }

    match &lobe_crit {
        Ok(c) => two_lobes(&table, &lobe_pl, c),
        Err(e) => {
            let mut v = Verdict::new();
            v.fail(format!("critical point: {e}"));
            v
        }
    }
    .print(7, "two-lobe domain, k=2");

    pohozaev(&table, &disc_crit).print(8, "Pohozaev residual convergence");

    let extra = disc_run(&disc_pl, &table, &disc_crit, 120.0, false);
    let mut v9 = approximation(&runs, extra.as_ref().ok());
    if let Err(e) = &extra {
        v9.note(format!("p=120: {e}"));
    }
    v9.print(9, "approximation quality");

    degree(&crits).print(10, "reduced map degree");
}
