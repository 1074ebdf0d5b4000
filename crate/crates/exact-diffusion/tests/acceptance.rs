//! Acceptance suite: one test per validation criterion, each printing a
//! pass line (run with `--nocapture` to see them). Tolerances are pinned
//! here, not tuned at runtime.
//!
//! Criteria:
//!  1. alternating envelope contract, exactly, over randomised parameters;
//!  2. band-probability events vs a mesh containment oracle, 3 s.e.;
//!  3. closed-form tail of the constrained bridge minimum, 3 s.e.;
//!  4. terminal law of the unbounded and adaptive algorithms vs the
//!     analytic transition, KS p > 0.01 on three seeds, and mutual KS;
//!  5. the adaptive algorithm needs no more interior points, one-sided 3 s.e.;
//!  6. jump algorithms vs a fine Euler jump oracle, energy test p > 0.01;
//!  7. epsilon-strong guarantees: exact nesting, exact sandwich, tolerance
//!     attainment, and the scaled-L1 constancy across rounds;
//!  8. restoration-order invariance, KS p > 0.01;
//!  9. dissection: nine bisections, selection frequencies vs series ratios.

use exact_diffusion::brownian::{sample_min, BridgeSpec};
use exact_diffusion::eps_strong::{eps_strong_bm, eps_strong_jump_diffusion, RefinePolicy, StairCell};
use exact_diffusion::euler::{bridge_mesh_path, euler_jump_outcome};
use exact_diffusion::exact::{run_auea, run_uea, BridgeBackend};
use exact_diffusion::intersection::{dissect, enumerate_bisections, IntersectionLayer};
use exact_diffusion::jumps::{run_aujea, run_bjea, InnerAlgorithm};
use exact_diffusion::numeric::norm_cdf;
use exact_diffusion::presets::preset;
use exact_diffusion::series::{
    beta_series, beta_single, decide_event_with, delta1_series, delta2_series, gamma_series,
    rho_series, AlternatingSeries, ExtremeBands, LayerBounds,
};
use exact_diffusion::stats::{energy_permutation_test, ks_one_sample, ks_two_sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn stream(seed: u64, idx: u64) -> ChaCha12Rng {
    let mut r = ChaCha12Rng::seed_from_u64(seed);
    r.set_stream(idx);
    r
}

// deterministic parallel sample generation: worker i uses stream i
fn par_collect<T: Send>(
    n: usize,
    seed: u64,
    job: impl Fn(&mut ChaCha12Rng) -> T + Sync,
) -> Vec<T> {
    let threads = std::thread::available_parallelism().map(|t| t.get()).unwrap_or(4).min(8);
    let per = n.div_ceil(threads);
    let mut out: Vec<Vec<T>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..threads {
            let job = &job;
            handles.push(scope.spawn(move || {
                let mut r = stream(seed, w as u64);
                let count = per.min(n.saturating_sub(w * per));
                (0..count).map(|_| job(&mut r)).collect::<Vec<T>>()
            }));
        }
        for h in handles {
            out.push(h.join().unwrap());
        }
    });
    out.into_iter().flatten().collect()
}

fn check_contract(series: &AlternatingSeries, label: &str) {
    let start = series.start_index();
    let (mut prev_lo, mut prev_hi) = series.bracket(start);
    assert!(prev_lo <= prev_hi, "{label}: lower above upper at start");
    for j in start + 1..=start + 50 {
        let (lo, hi) = series.bracket(j);
        assert!(lo >= prev_lo, "{label}: lower envelope decreased at stage {j}");
        assert!(hi <= prev_hi, "{label}: upper envelope increased at stage {j}");
        assert!(lo <= hi, "{label}: envelopes crossed at stage {j}");
        (prev_lo, prev_hi) = (lo, hi);
    }
}

#[test]
fn criterion_1_alternating_envelope_contract() {
    let mut r = rng(1001);
    for case in 0..500 {
        let len = 0.1 + 2.9 * r.random::<f64>();
        let x = 2.0 * r.random::<f64>() - 1.0;
        let y = 2.0 * r.random::<f64>() - 1.0;
        let (lo_e, hi_e) = (x.min(y), x.max(y));
        let ell = lo_e - (0.02 + 1.8 * r.random::<f64>()) * len.sqrt();
        let ups = hi_e + (0.02 + 1.8 * r.random::<f64>()) * len.sqrt();
        let p = LayerBounds::new(0.0, len, x, y, ell, ups).unwrap();

        check_contract(&gamma_series(&p), &format!("gamma[{case}]"));

        let mhat = lo_e - (0.02 + 1.2 * r.random::<f64>()) * len.sqrt();
        check_contract(
            &delta1_series(&LayerBounds::new(0.0, len, x, y, mhat, ups).unwrap(), mhat).unwrap(),
            &format!("delta1[{case}]"),
        );

        let width = (0.05 + 2.0 * r.random::<f64>()) * len.sqrt();
        let yrel = (0.02 + 0.96 * r.random::<f64>()) * width;
        check_contract(
            &delta2_series(0.0, len, mhat + yrel, mhat, mhat + width).unwrap(),
            &format!("delta2[{case}]"),
        );

        // joint band probabilities with up to two interior knots
        for n_knots in 0..=2usize {
            let mut times = vec![0.0];
            for i in 0..n_knots {
                times.push(len * (i as f64 + 1.0 + 0.6 * r.random::<f64>()) / (n_knots as f64 + 2.0));
            }
            times.push(len);
            let values: Vec<f64> =
                (0..times.len()).map(|_| lo_e + (hi_e - lo_e + 1e-9) * r.random::<f64>()).collect();
            let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
            let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min_hi = vmin - 0.01 * len.sqrt() * r.random::<f64>();
            let min_lo = min_hi - (0.1 + 1.2 * r.random::<f64>()) * len.sqrt();
            let max_lo = vmax + 0.01 * len.sqrt() * r.random::<f64>();
            let max_hi = max_lo + (0.1 + 1.2 * r.random::<f64>()) * len.sqrt();
            let bands = ExtremeBands::new(min_lo, min_hi, max_lo, max_hi).unwrap();
            check_contract(
                &rho_series(&times, &values, bands).unwrap(),
                &format!("rho{n_knots}[{case}]"),
            );
            let per_gap: Vec<ExtremeBands> = (0..times.len() - 1)
                .map(|i| {
                    let glo = values[i].min(values[i + 1]);
                    let ghi = values[i].max(values[i + 1]);
                    ExtremeBands::new(
                        glo - (0.2 + r.random::<f64>()) * len.sqrt(),
                        glo - 0.005 * len.sqrt(),
                        ghi + 0.005 * len.sqrt(),
                        ghi + (0.2 + r.random::<f64>()) * len.sqrt(),
                    )
                    .unwrap()
                })
                .collect();
            check_contract(
                &beta_series(&times, &values, &per_gap).unwrap(),
                &format!("beta{n_knots}[{case}]"),
            );
        }
    }
    println!("acceptance criterion 1 (alternating envelope contract, 500 sets/family): PASS");
}

#[test]
fn criterion_2_band_event_unbiasedness() {
    // Containment oracle: exact mesh bridge values plus per-step barrier
    // crossing draws with the closed-form bridge crossing probability; this
    // removes the O(sqrt(mesh)) boundary bias a plain mesh check carries,
    // which would otherwise swamp the 3 s.e. budget at this sample size.
    let n = 100_000usize;
    let mesh = 1e-3;
    let mut param_rng = rng(1002);
    for set in 0..20 {
        let len = 0.3 + 1.2 * param_rng.random::<f64>();
        let x = 0.8 * param_rng.random::<f64>() - 0.4;
        let y = 0.8 * param_rng.random::<f64>() - 0.4;
        let (lo_e, hi_e) = (x.min(y), x.max(y));
        let ell = lo_e - (0.5 + 0.9 * param_rng.random::<f64>()) * len.sqrt();
        let ups = hi_e + (0.5 + 0.9 * param_rng.random::<f64>()) * len.sqrt();
        let bounds = LayerBounds::new(0.0, len, x, y, ell, ups).unwrap();
        let series = gamma_series(&bounds);

        let seed = 2000 + set as u64;
        let exact_hits: usize = par_collect(n, seed, |r| {
            exact_diffusion::series::series_event(&series, r).unwrap() as usize
        })
        .iter()
        .sum();
        let steps = (len / mesh).ceil() as usize;
        let dt = len / steps as f64;
        let oracle_hits: usize = par_collect(n, seed + 500, |r| {
            let path = bridge_mesh_path(0.0, len, x, y, steps, r);
            for w in path.windows(2) {
                let (a, b) = (w[0], w[1]);
                if a <= ell || a >= ups || b <= ell || b >= ups {
                    return 0usize;
                }
                let p_cross = (-2.0 * (a - ell) * (b - ell) / dt).exp()
                    + (-2.0 * (ups - a) * (ups - b) / dt).exp();
                if r.random::<f64>() < p_cross {
                    return 0usize;
                }
            }
            1usize
        })
        .iter()
        .sum();

        let p1 = exact_hits as f64 / n as f64;
        let p2 = oracle_hits as f64 / n as f64;
        let se = (p1 * (1.0 - p1) / n as f64 + p2 * (1.0 - p2) / n as f64).sqrt();
        assert!(
            (p1 - p2).abs() <= 3.0 * se.max(1e-6),
            "set {set}: exact {p1} vs oracle {p2} (3 s.e. = {})",
            3.0 * se
        );
    }
    println!("acceptance criterion 2 (band event unbiasedness, 20 sets at N=1e5): PASS");
}

#[test]
fn criterion_3_minimum_tail_probability() {
    let b = BridgeSpec::new(0.0, 1.0, 0.0, 0.0).unwrap();
    let n = 100_000usize;
    let hits: usize = par_collect(n, 1003, |r| {
        (sample_min(&b, -100.0, 0.0, r).unwrap().value <= -1.0) as usize
    })
    .iter()
    .sum();
    let p = hits as f64 / n as f64;
    let want = (-2.0f64).exp();
    let se = (want * (1.0 - want) / n as f64).sqrt();
    assert!((p - want).abs() < 3.0 * se, "P(min <= -1) = {p}, want {want}");
    println!("acceptance criterion 3 (constrained minimum tail, exp(-2) at 3 s.e.): PASS");
}

#[test]
fn criterion_4_terminal_exactness_flagship() {
    let p = preset("ou").unwrap();
    let var = (1.0 - (-2.0f64).exp()) / 2.0;
    let sd = var.sqrt();
    let n = 10_000usize;
    let mut pooled_uea = Vec::new();
    let mut pooled_auea = Vec::new();
    for seed in [1004u64, 1005, 1006] {
        let uea: Vec<f64> = par_collect(n, seed, |r| {
            run_uea(&p.model, BridgeBackend::Intersection, r).unwrap().skeleton.terminal_value()
        });
        let auea: Vec<f64> =
            par_collect(n, seed + 50, |r| run_auea(&p.model, r).unwrap().skeleton.terminal_value());
        let (_, p_uea) = ks_one_sample(&uea, |v| norm_cdf(v / sd));
        let (_, p_auea) = ks_one_sample(&auea, |v| norm_cdf(v / sd));
        assert!(p_uea > 0.01, "seed {seed}: unbounded KS p = {p_uea}");
        assert!(p_auea > 0.01, "seed {seed}: adaptive KS p = {p_auea}");
        pooled_uea.extend(uea);
        pooled_auea.extend(auea);
    }
    let (_, p_cross) = ks_two_sample(&pooled_uea, &pooled_auea);
    assert!(p_cross > 0.01, "cross-algorithm KS p = {p_cross}");
    println!("acceptance criterion 4 (terminal exactness, KS p > 0.01 on 3 seeds + cross): PASS");
}

#[test]
fn criterion_5_adaptive_point_count() {
    let p = preset("ou").unwrap();
    let n = 10_000usize;
    let pairs: Vec<(f64, f64)> = par_collect(n, 1007, |r| {
        let k_uea =
            run_uea(&p.model, BridgeBackend::Intersection, r).unwrap().skeleton.interior_count();
        let k_auea = run_auea(&p.model, r).unwrap().skeleton.interior_count();
        (k_uea as f64, k_auea as f64)
    });
    let diffs: Vec<f64> = pairs.iter().map(|(u, a)| a - u).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    assert!(mean + 3.0 * se < 0.0, "adaptive minus unbounded point count: {mean} (+3 s.e. {se})");
    println!("acceptance criterion 5 (adaptive needs fewer interior points, 3 s.e.): PASS");
}

#[test]
fn criterion_6_jump_exactness() {
    let n = 10_000usize;
    let mesh = 1e-4;
    // bounded-intensity model via the bounded jump algorithm
    {
        let p = preset("app1").unwrap();
        let j = p.jumps.as_ref().unwrap();
        let exact: Vec<(f64, f64)> = par_collect(n, 1008, |r| {
            let run = run_bjea(&p.model, j, InnerAlgorithm::Adaptive, r).unwrap();
            (run.skeleton.terminal_value(), run.skeleton.jump_count() as f64)
        });
        let oracle: Vec<(f64, f64)> = par_collect(n, 1009, |r| {
            let o = euler_jump_outcome(&p.model, j, mesh, r).unwrap();
            (o.terminal, o.jump_count as f64)
        });
        // permutation test on a strided subsample (its p-value stays exact;
        // full samples feed the generation requirement)
        let sub = |v: &[(f64, f64)]| -> Vec<(f64, f64)> { v.iter().step_by(5).copied().collect() };
        let mut perm_rng = rng(1010);
        let (_, pv) = energy_permutation_test(&sub(&exact), &sub(&oracle), 199, &mut perm_rng);
        assert!(pv > 0.01, "bounded jump model: energy p = {pv}");
    }
    // unbounded-intensity model via the adaptive jump algorithm
    {
        let p = preset("app2").unwrap();
        let j = p.jumps.as_ref().unwrap();
        let exact: Vec<(f64, f64)> = par_collect(n, 1011, |r| {
            let run = run_aujea(&p.model, j, r).unwrap();
            (run.skeleton.terminal_value(), run.skeleton.jump_count() as f64)
        });
        let oracle: Vec<(f64, f64)> = par_collect(n, 1012, |r| {
            let o = euler_jump_outcome(&p.model, j, mesh, r).unwrap();
            (o.terminal, o.jump_count as f64)
        });
        let sub = |v: &[(f64, f64)]| -> Vec<(f64, f64)> { v.iter().step_by(5).copied().collect() };
        let mut perm_rng = rng(1013);
        let (_, pv) = energy_permutation_test(&sub(&exact), &sub(&oracle), 199, &mut perm_rng);
        assert!(pv > 0.01, "unbounded jump model: energy p = {pv}");
    }
    println!("acceptance criterion 6 (jump exactness vs Euler oracle, energy p > 0.01): PASS");
}

type EpsRunResult = (Vec<Vec<StairCell>>, Vec<(f64, f64)>);

fn assert_snapshots_nest(snaps: &[Vec<StairCell>]) {
    for w in snaps.windows(2) {
        for cell in &w[1] {
            let mid = 0.5 * (cell.s + cell.t);
            let prev = w[0]
                .iter()
                .find(|p| p.s <= mid && mid <= p.t)
                .expect("covering cell in the previous snapshot");
            assert!(cell.lower >= prev.lower && cell.upper <= prev.upper, "nesting violated");
        }
    }
}

#[test]
fn criterion_7_eps_strong_guarantees() {
    // (a) exact monotone nesting and (b) exact sandwich over 200 seeds
    let results: Vec<EpsRunResult> = par_collect(200, 1014, |r| {
        let mut bp = eps_strong_bm(1.0, 0.0, &RefinePolicy::rounds(6), r).unwrap();
        let times: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        bp.restore(&times, r).unwrap();
        (bp.snapshots().to_vec(), bp.pinned_points().to_vec())
    });
    for (snaps, pinned) in &results {
        assert_snapshots_nest(snaps);
        let last = snaps.last().unwrap();
        for &(t, v) in pinned {
            let cell = last.iter().find(|c| c.s <= t && t <= c.t).expect("covering cell");
            assert!(v >= cell.lower && v <= cell.upper, "sandwich violated at t={t}");
        }
    }

    // (c) tolerance mode attains each figure tolerance everywhere
    for (i, &eps) in [0.25, 0.15, 0.1, 0.05].iter().enumerate() {
        let gaps: Vec<f64> = par_collect(30, 1015 + i as u64, |r| {
            eps_strong_bm(1.0, 0.0, &RefinePolicy::tolerance(eps), r).unwrap().sup_gap()
        });
        for g in gaps {
            assert!(g <= eps, "tolerance {eps} missed: sup gap {g}");
        }
    }
    // jump-diffusion variant across the same tolerances
    {
        let p = preset("app2").unwrap();
        for (i, &eps) in [0.25, 0.15, 0.1, 0.05].iter().enumerate() {
            let gaps: Vec<f64> = par_collect(3, 1019 + i as u64, |r| {
                eps_strong_jump_diffusion(
                    &p.model,
                    p.jumps.as_ref().unwrap(),
                    &RefinePolicy::tolerance(eps),
                    r,
                )
                .unwrap()
                .sup_gap()
            });
            for g in gaps {
                assert!(g <= eps, "jump tolerance {eps} missed: sup gap {g}");
            }
        }
    }

    // (d) 2^(n/2) x mean L1 gap roughly constant across rounds 2, 4, 6, 8
    let l1_by_round: Vec<[f64; 4]> = par_collect(200, 1020, |r| {
        let bp = eps_strong_bm(1.0, 0.0, &RefinePolicy::rounds(8), r).unwrap();
        let mut out = [0.0; 4];
        for (k, &round) in [2usize, 4, 6, 8].iter().enumerate() {
            let snap = &bp.snapshots()[round];
            out[k] = snap.iter().map(|c| (c.upper - c.lower) * (c.t - c.s)).sum::<f64>();
        }
        out
    });
    let mut scaled = [0.0f64; 4];
    for out in &l1_by_round {
        for (k, &round) in [2.0f64, 4.0, 6.0, 8.0].iter().enumerate() {
            scaled[k] += (2.0f64).powf(round / 2.0) * out[k] / 200.0;
        }
    }
    for w in scaled.windows(2) {
        let ratio = w[1] / w[0];
        assert!(
            (0.5..=2.0).contains(&ratio),
            "scaled L1 ratio {ratio} outside [0.5, 2] ({scaled:?})"
        );
    }
    println!("acceptance criterion 7 (epsilon-strong nesting/sandwich/tolerance/L1 rate): PASS");
}

#[test]
fn criterion_8_restoration_order_invariance() {
    let p = preset("ou").unwrap();
    let q = 0.35;
    let others: Vec<f64> = (1..=10).map(|i| 0.04 + 0.09 * i as f64).filter(|&t| t != q).collect();
    let n = 10_000usize;
    let first: Vec<f64> = par_collect(n, 1021, |r| {
        let mut sk = run_auea(&p.model, r).unwrap().skeleton;
        let v = sk.restore(&[q], r).unwrap()[0];
        sk.restore(&others, r).unwrap();
        v
    });
    let last: Vec<f64> = par_collect(n, 1022, |r| {
        let mut sk = run_auea(&p.model, r).unwrap().skeleton;
        sk.restore(&others, r).unwrap();
        sk.restore(&[q], r).unwrap()[0]
    });
    let (_, pv) = ks_two_sample(&first, &last);
    assert!(pv > 0.01, "restoration order changed the law: KS p = {pv}");
    println!("acceptance criterion 8 (restoration order invariance, KS p > 0.01): PASS");
}

#[test]
fn criterion_9_dissection_soundness() {
    let layer = IntersectionLayer::new(0.0, 1.0, 0.0, 0.0, -1.1, -0.35, 0.3, 1.0).unwrap();
    let knot = (0.45, 0.05);
    let candidates = enumerate_bisections(&layer, knot).unwrap();
    assert_eq!(candidates.len(), 9, "a single-point dissection must offer nine cases");

    let n = 100_000usize;
    let counts: Vec<usize> = {
        let per: Vec<Vec<usize>> = par_collect(n, 1023, |r| {
            let parts = dissect(&layer, &[knot], r).unwrap();
            let found = candidates
                .iter()
                .position(|(l, rgt)| l == &parts[0] && rgt == &parts[1])
                .expect("dissection outcome must be an enumerated bisection");
            let mut row = vec![0usize; 9];
            row[found] = 1;
            row
        });
        (0..9).map(|i| per.iter().map(|row| row[i]).sum()).collect()
    };

    // oracle: high-order series evaluation of each cell's probability
    let tight = ExtremeBands::new(
        layer.min_lo,
        layer.min_hi.min(knot.1),
        layer.max_lo.max(knot.1),
        layer.max_hi,
    )
    .unwrap();
    let denom =
        rho_series(&[0.0, knot.0, 1.0], &[0.0, knot.1, 0.0], tight).unwrap().approx_limit(80);
    for (i, (l, rgt)) in candidates.iter().enumerate() {
        let num = beta_single(l.s, l.t, l.x, l.y, l.bands()).unwrap().approx_limit(80)
            * beta_single(rgt.s, rgt.t, rgt.x, rgt.y, rgt.bands()).unwrap().approx_limit(80);
        let want = num / denom;
        let got = counts[i] as f64 / n as f64;
        let se = (want.max(1e-12) * (1.0 - want) / n as f64).sqrt();
        assert!(
            (got - want).abs() <= 3.0 * se + 1e-4,
            "cell {i}: frequency {got} vs series {want}"
        );
    }
    println!("acceptance criterion 9 (nine bisections, frequencies at 3 s.e.): PASS");
}

// decide_event_with is exercised by criterion 2 through series_event; keep
// a direct determinism check of the bracket decision here as well
#[test]
fn bracket_decisions_are_deterministic_in_u() {
    let p = LayerBounds::new(0.0, 1.0, 0.0, 0.0, -1.0, 1.0).unwrap();
    let g = gamma_series(&p);
    let a = decide_event_with(&g, 0.37).unwrap();
    let b = decide_event_with(&g, 0.37).unwrap();
    assert_eq!(a, b);
}
