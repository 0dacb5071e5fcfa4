//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use laav::atoms::{build_atoms, AtomConstructionConfig};
use laav::dataio::{add_noise, misclassification_error, synth_scene, NoiseSpec, SceneSpec};
use laav::geometry::{estimate_fundamental, fit_affine, sampson_distance, AffineTransform, FramePair, Point2H};
use laav::multicut::{solve_multicut_exact, solve_multicut_greedy, WeightedGraph};
use laav::pipeline::{segment, PipelineConfig, RvInit};
use laav::seed::{derive_indexed, rng_from};
use laav_cli::{bench_noise, summarize};
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

/// The standard synthetic suite: alternating C = 2 and 3, K in [100, 400],
/// L in [10, 30].
fn suite_scene(i: u64) -> SceneSpec {
    let mut rng = rng_from(derive_indexed(0x5eed_5017e, i));
    let c = 2 + (i % 2) as usize;
    let k: usize = rng.random_range(100..=400);
    let l = rng.random_range(10..=30);
    let mut counts = vec![k / c; c];
    counts[0] += k - (k / c) * c;
    SceneSpec::new(counts, l, i)
}

fn synthetic_accuracy() -> Outcome {
    let mut good = 0;
    let mut slowest = 0.0f64;
    let mut worst = 0.0f64;
    for i in 0..20 {
        let spec = suite_scene(i);
        let t = synth_scene(&spec).unwrap();
        let start = Instant::now();
        let s = segment(&t, &PipelineConfig { seed: i, ..Default::default() }).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let e = misclassification_error(&s.labeling.labels, t.ground_truth().unwrap(), spec.num_motions()).unwrap();
        worst = worst.max(e);
        if e <= 0.01 {
            good += 1;
        }
    }
    Outcome {
        name: "synthetic accuracy at zero noise",
        pass: good >= 18 && slowest < 10.0,
        detail: format!("{good}/20 scenes with error <= 1% (worst {worst:.4}), slowest {slowest:.3} s"),
    }
}

fn noise_degradation() -> Outcome {
    let sigmas = [0.0, 0.5, 1.0, 2.0];
    let reps = 50u64;
    let means: Vec<f64> = sigmas
        .iter()
        .map(|&sigma| {
            (0..reps)
                .map(|r| {
                    let spec = suite_scene(r % 20);
                    let clean = synth_scene(&spec).unwrap();
                    let t = add_noise(&clean, &NoiseSpec { sigma, seed: derive_indexed(0x0015e, r) }).unwrap();
                    let s = segment(&t, &PipelineConfig { seed: r, ..Default::default() }).unwrap();
                    1.0 - misclassification_error(&s.labeling.labels, t.ground_truth().unwrap(), spec.num_motions())
                        .unwrap()
                })
                .sum::<f64>()
                / reps as f64
        })
        .collect();
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    let err_half = 1.0 - means[1];
    Outcome {
        name: "noise degradation",
        pass: monotone && err_half <= 0.05,
        detail: format!(
            "mean accuracy {} over {reps} reps; error at sigma 0.5 = {err_half:.4}",
            sigmas
                .iter()
                .zip(&means)
                .map(|(s, m)| format!("s={s}:{m:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    }
}

fn initialization_advantage() -> Outcome {
    let scene = synth_scene(&SceneSpec::new(vec![120, 100], 15, 7)).unwrap();
    let sigmas = [0.0, 0.5, 1.0, 2.0];
    let cfg = PipelineConfig { seed: 11, ..Default::default() };
    let rows = bench_noise(&scene, &sigmas, 50, &cfg).unwrap();
    let summary = summarize(&rows);
    let mut pass = true;
    let mut parts = Vec::new();
    for &s in &sigmas {
        let get = |arm| summary.iter().find(|m| m.sigma == s && m.arm == arm).unwrap();
        let (a, r) = (get(RvInit::Atoms), get(RvInit::Random));
        let fewer_iterations = a.median_iterations < r.median_iterations;
        // both arms perfectly accurate in every run leaves nothing to compare
        let spread_tie = a.std_accuracy == 0.0 && r.std_accuracy == 0.0;
        let tighter = spread_tie || a.std_accuracy < r.std_accuracy;
        let converges = a.convergence_rate >= r.convergence_rate;
        pass &= fewer_iterations && tighter && converges;
        parts.push(format!(
            "s={s}: it {}/{} sd {:.5}/{:.5}{} conv {:.2}/{:.2}",
            a.median_iterations,
            r.median_iterations,
            a.std_accuracy,
            r.std_accuracy,
            if spread_tie { " (tie)" } else { "" },
            a.convergence_rate,
            r.convergence_rate
        ));
    }
    Outcome {
        name: "initialization advantage (atoms/random)",
        pass,
        detail: parts.join("; "),
    }
}

fn multicut_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from(4242);
    let (mut equal, mut worse, mut infeasible) = (0, 0, 0);
    for _ in 0..200 {
        let n = rng.random_range(2..=10);
        let density: f64 = rng.random_range(0.2..=1.0);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < density {
                    edges.push((i, j, rng.random_range(-1.0..=1.0)));
                }
            }
        }
        let g = WeightedGraph::new(n, edges).unwrap();
        let greedy = solve_multicut_greedy(&g, 1);
        let exact = solve_multicut_exact(&g).unwrap();
        if !greedy.is_feasible(&g) || !exact.is_feasible(&g) {
            infeasible += 1;
        }
        let (og, oe) = (greedy.objective(&g), exact.objective(&g));
        if og < oe - 1e-9 {
            worse += 1;
        }
        if (og - oe).abs() <= 1e-9 * (1.0 + oe.abs()) {
            equal += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        name: "multicut oracle",
        pass: worse == 0 && infeasible == 0 && equal >= 120 && secs < 5.0,
        detail: format!(
            "greedy == exact on {equal}/200, greedy below exact {worse}, infeasible {infeasible}, {secs:.3} s"
        ),
    }
}

fn geometry_suite() -> Outcome {
    let mut max_sampson = 0.0f64;
    let mut max_ratio = 0.0f64;
    for seed in 0..10 {
        let t = &synth_scene(&SceneSpec::new(vec![40, 40, 40], 12, seed)).unwrap();
        let gt = t.ground_truth().unwrap();
        for m in 0..3 {
            let ids: Vec<usize> = (0..t.feature_count()).filter(|&f| gt[f] == m).collect();
            let fp = FramePair::new(1, 9);
            let (l, r) = (t.points_at(&ids, fp.l), t.points_at(&ids, fp.r));
            let f = estimate_fundamental(&l, &r, fp).unwrap();
            let s = f.singular_values();
            max_ratio = max_ratio.max(s[2] / s[1]);
            for (a, b) in l.iter().zip(&r) {
                max_sampson = max_sampson.max(f.sampson(a, b).unwrap());
            }
        }
    }

    let mut rng = rng_from(99);
    let mut max_param = 0.0f64;
    for _ in 0..100 {
        let lin: [[f64; 2]; 2] = [[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)], [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]];
        if (lin[0][0] * lin[1][1] - lin[0][1] * lin[1][0]).abs() < 0.05 {
            continue;
        }
        let fp = FramePair::new(0, 1);
        let t = AffineTransform::new(lin, [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)], fp).unwrap();
        let src: Vec<Point2H> = (0..10).map(|_| Point2H::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0))).collect();
        let dst: Vec<Point2H> = src.iter().map(|p| t.apply(p)).collect();
        let fit = fit_affine(&src, &dst, fp).unwrap();
        let back = fit_affine(&dst, &src, fp.reversed()).unwrap();
        for (a, b) in fit.params().iter().zip(t.params()) {
            max_param = max_param.max((a - b).abs());
        }
        for (a, b) in back.params().iter().zip(t.inverse().params()) {
            max_param = max_param.max((a - b).abs());
        }
    }

    // Scaling F rounds its entries, so the relative change of the residual
    // y2' F y1 is bounded by eps times its condition number
    // sum |y2_i F_ij y1_j| / |y2' F y1|. Pairs lying almost on the epipolar
    // curve are arbitrarily ill-conditioned; they are counted, not gated.
    let (mut max_rel, mut max_rel_all, mut checked, mut ill) = (0.0f64, 0.0f64, 0, 0);
    for seed in 0..10 {
        let t = synth_scene(&SceneSpec::new(vec![40, 40, 40], 12, seed)).unwrap();
        let gt = t.ground_truth().unwrap();
        let fp = FramePair::new(1, 9);
        for m in 0..3 {
            let ids: Vec<usize> = (0..t.feature_count()).filter(|&f| gt[f] == m).collect();
            let f = *estimate_fundamental(&t.points_at(&ids, fp.l), &t.points_at(&ids, fp.r), fp)
                .unwrap()
                .matrix();
            for (k, &g) in gt.iter().enumerate() {
                let a = t.point(k, fp.l);
                let mut b = t.point(k, fp.r);
                if g == m {
                    b = Point2H::new(b.x + rng.random_range(-3.0..3.0), b.y + rng.random_range(-3.0..3.0));
                }
                let (ha, hb) = (a.homogeneous(), b.homogeneous());
                let terms: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| (hb[i] * f[(i, j)] * ha[j]).abs()).sum();
                let kappa = terms / hb.dot(&(f * ha)).abs();
                let base = sampson_distance(&f, &a, &b).unwrap();
                for c in [-37.5, 1e-3, 2.0, 4096.0] {
                    let rel = (sampson_distance(&(f * c), &a, &b).unwrap() - base).abs() / base;
                    max_rel_all = max_rel_all.max(rel);
                    if kappa <= 1e3 {
                        max_rel = max_rel.max(rel);
                        checked += 1;
                    } else {
                        ill += 1;
                    }
                }
            }
        }
    }

    Outcome {
        name: "geometry suite",
        pass: max_sampson < 1e-6 && max_ratio < 1e-10 && max_param < 1e-9 && max_rel < 1e-12,
        detail: format!(
            "max sampson {max_sampson:.2e}, sigma3/sigma2 {max_ratio:.2e}, affine param err {max_param:.2e}, \
             scale rel {max_rel:.2e} on {checked} conditioned pairs ({ill} ill-conditioned excluded, worst {max_rel_all:.2e})"
        ),
    }
}

fn atom_purity() -> Outcome {
    let (mut atoms, mut impure) = (0, 0);
    let mut min_cov = 1.0f64;
    for i in 0..20 {
        let t = synth_scene(&suite_scene(i)).unwrap();
        let gt = t.ground_truth().unwrap();
        let b = build_atoms(&t, &AtomConstructionConfig { seed: i, ..Default::default() }).unwrap();
        atoms += b.atoms.len();
        impure += b
            .atoms
            .iter()
            .filter(|a| a.feature_ids.iter().any(|&f| gt[f] != gt[a.feature_ids[0]]))
            .count();
        min_cov = min_cov.min(1.0 - b.unassigned.len() as f64 / t.feature_count() as f64);
    }
    Outcome {
        name: "atom purity and coverage",
        pass: impure == 0 && min_cov >= 0.9,
        detail: format!("{impure} impure of {atoms} atoms, minimum coverage {min_cov:.3}"),
    }
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_laav"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs = ["a", "b"];
    let mut ok = true;
    for run in runs {
        let d = tmp.path().join(run);
        std::fs::create_dir(&d).unwrap();
        ok &= run_cli(&d, &["synth", "--features", "70,60,50", "--frames", "14", "--seed", "5", "--sigma", "0.3", "--output", "scene.traj"]);
        ok &= run_cli(&d, &["segment", "--input", "scene.traj", "--output", "labels.txt", "--seed", "8", "--stage-dump", "stages"]);
        ok &= run_cli(&d, &["segment", "--input", "scene.traj", "--output", "random.txt", "--seed", "8", "--rv-init", "random"]);
        ok &= run_cli(&d, &["eval", "--input", "labels.txt", "--truth", "scene.traj", "--output", "eval.txt"]);
        ok &= run_cli(&d, &["bench-noise", "--features", "50,50", "--frames", "12", "--sigma", "0,1", "--reps", "3", "--seed", "4", "--output", "bench.tsv"]);
    }
    let files = [
        "scene.traj",
        "labels.txt",
        "labels.txt.metrics",
        "random.txt",
        "random.txt.metrics",
        "eval.txt",
        "bench.tsv",
        "stages/atoms.tsv",
        "stages/fine.tsv",
        "stages/coarse.tsv",
        "stages/final.tsv",
        "stages/affinity.tsv",
    ];
    let mut differing = Vec::new();
    for f in files {
        let a = std::fs::read(tmp.path().join("a").join(f));
        let b = std::fs::read(tmp.path().join("b").join(f));
        match (a, b) {
            (Ok(a), Ok(b)) if a == b && !a.is_empty() => {}
            _ => differing.push(f),
        }
    }
    Outcome {
        name: "cli determinism",
        pass: ok && differing.is_empty(),
        detail: format!(
            "{} outputs compared across two runs, commands ok: {ok}, differing: {differing:?}",
            files.len()
        ),
    }
}

fn brute_force_error(pred: &[usize], truth: &[usize], c: usize) -> f64 {
    fn perms(prefix: &mut Vec<usize>, c: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == c {
            out.push(prefix.clone());
            return;
        }
        for v in 0..c {
            if !prefix.contains(&v) {
                prefix.push(v);
                perms(prefix, c, out);
                prefix.pop();
            }
        }
    }
    let mut all = Vec::new();
    perms(&mut Vec::new(), c, &mut all);
    let best = all
        .iter()
        .map(|p| pred.iter().zip(truth).filter(|(a, b)| p[**a] == **b).count())
        .max()
        .unwrap();
    (pred.len() - best) as f64 / pred.len() as f64
}

fn metric_correctness() -> Outcome {
    let mut rng = rng_from(31337);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let c = rng.random_range(1..=4);
        let k = rng.random_range(1..=50);
        let truth: Vec<usize> = (0..k).map(|_| rng.random_range(0..c)).collect();
        let mut pred = truth.clone();
        // mix of near-correct and arbitrary predictions
        if rng.random::<bool>() {
            pred.shuffle(&mut rng);
        }
        for p in pred.iter_mut() {
            if rng.random::<f64>() < 0.2 {
                *p = rng.random_range(0..c);
            }
        }
        let got = misclassification_error(&pred, &truth, c).unwrap();
        if (got - brute_force_error(&pred, &truth, c)).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    Outcome {
        name: "metric correctness",
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches on 1000 random pairs"),
    }
}

#[test]
fn acceptance() {
    let criteria: [fn() -> Outcome; 8] = [
        synthetic_accuracy,
        noise_degradation,
        initialization_advantage,
        multicut_oracle,
        geometry_suite,
        atom_purity,
        cli_determinism,
        metric_correctness,
    ];
    let mut failed = Vec::new();
    for (i, c) in criteria.iter().enumerate() {
        let o = c();
        println!("[{}] {} {}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.name, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
