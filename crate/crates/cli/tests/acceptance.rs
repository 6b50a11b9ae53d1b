//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::HashSet;
use std::io::Cursor;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};

use fgq::distfit::theoretical_g_exponential;
use fgq::grouping::{dequantize, fgq_ternarize, quantize_fixed_layer};
use fgq::io::npy::{read_npy_from, write_npy_to};
use fgq::io::{pack_ternary, read_fgq_from, read_npy, write_fgq_to, PackedTernary};
use fgq::perf::count_ops;
use fgq::sim::{conv_fgq, conv_reference, quantize_activations};
use fgq::ternary::{
    objective_at_threshold, solve_asymmetric_brute, solve_residual, solve_rms_hierarchical,
    solve_symmetric_brute, solve_two_alpha,
};
use fgq::{
    ActivationTensor, ConvSpec, CostModel, Family, FitOptions, GaussianRule, GroupPartition,
    LayerShape, NpyDtype, Solver, TernarizeOptions, WeightTensor,
};
use fgq_cli::analyze::analyze_layers;
use fgq_cli::config::{Command, RunConfig};
use fgq_cli::synth::synthetic_model;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    if let (Some(limit), Ok(msg)) = (limit, &out) {
        if took > limit {
            out = Err(format!("{msg}; took {took:?}, limit {limit:?}"));
        }
    }
    (out, took)
}

fn signed_mix(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let exp = Exp::new(1.0).unwrap();
    let style = rng.gen_range(0..4);
    (0..n)
        .map(|_| match style {
            0 => normal.sample(rng),
            1 => exp.sample(rng) * if rng.gen() { 1.0 } else { -1.0 },
            2 => rng.gen_range(-1.0..1.0),
            _ => f64::from(rng.gen_range(-3i32..=3)) * 0.25,
        })
        .collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, max: (usize, usize, usize, usize)) -> WeightTensor<f64> {
    let d = (
        rng.gen_range(1..=max.0),
        rng.gen_range(1..=max.1),
        rng.gen_range(1..=max.2),
        rng.gen_range(1..=max.3),
    );
    let n = d.0 * d.1 * d.2 * d.3;
    WeightTensor::new(d, signed_mix(rng, n)).unwrap()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn c1_multiplication_elimination() -> Outcome {
    let mut parts = Vec::new();
    for (n, want) in [(4, 0.75), (8, 0.875), (64, 0.984375)] {
        let shape = LayerShape::new((64, 128, 3, 3), (14, 14), n);
        let got = count_ops(&[shape], &CostModel::default())
            .map_err(|e| e.to_string())?
            .fraction_eliminated;
        if got != want {
            return Err(format!("N={n}: {got} != {want}"));
        }
        parts.push(format!("N={n} {got}"));
    }
    Ok(parts.join(", "))
}

fn c2_threshold_monte_carlo() -> Outcome {
    const N: usize = 100_000;
    let limit = Duration::from_secs(5);
    let mut parts = Vec::new();

    let (res, _) = timed(Some(limit), || {
        let mut r = rng(201);
        let exp = Exp::new(1.0).unwrap();
        let w: Vec<f64> = (0..N).map(|_| exp.sample(&mut r)).collect();
        let mean = w.iter().sum::<f64>() / N as f64;
        let delta = solve_symmetric_brute(&w).unwrap().delta_pos;
        if within(delta, mean, 0.05) {
            Ok(format!("exp delta {delta:.4} vs mean {mean:.4}"))
        } else {
            Err(format!("exp delta {delta} not within 5% of mean {mean}"))
        }
    });
    parts.push(res?);

    let (res, _) = timed(Some(limit), || {
        let mut r = rng(202);
        let u = Uniform::new_inclusive(-1.0, 1.0);
        let w: Vec<f64> = (0..N).map(|_| u.sample(&mut r)).collect();
        let delta = solve_symmetric_brute(&w).unwrap().delta_pos;
        if within(delta, 1.0 / 3.0, 0.05) {
            Ok(format!("uniform delta {delta:.4} vs 1/3"))
        } else {
            Err(format!("uniform delta {delta} not within 5% of 1/3"))
        }
    });
    parts.push(res?);

    let (res, _) = timed(Some(limit), || {
        let mut r = rng(203);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let w: Vec<f64> = (0..N).map(|_| normal.sample(&mut r)).collect();
        let delta = solve_symmetric_brute(&w).unwrap().delta_pos;
        let mean_abs = w.iter().map(|x| x.abs()).sum::<f64>() / N as f64;
        if !within(delta, 0.6, 0.10) {
            return Err(format!("gaussian delta {delta} not within 10% of 0.6"));
        }
        if !within(mean_abs, 0.7979, 0.01) {
            return Err(format!("gaussian mean|x| {mean_abs} not within 1% of 0.7979"));
        }
        Ok(format!("gaussian delta {delta:.4}, mean|x| {mean_abs:.4}"))
    });
    parts.push(res?);
    Ok(parts.join("; "))
}

fn c3_g_curve() -> Outcome {
    let mut r = rng(301);
    let exp = Exp::new(1.0).unwrap();
    let n = 1_000_000;
    let w: Vec<f64> = (0..n).map(|_| exp.sample(&mut r)).collect();
    let m = w.iter().sum::<f64>() / n as f64;
    let mut parts = Vec::new();
    for f in [0.5, 1.0, 2.0] {
        let delta = f * m;
        let empirical = objective_at_threshold(&w, delta);
        let theory = theoretical_g_exponential(delta, m, n);
        let rel = (empirical - theory).abs() / theory;
        if rel > 0.02 {
            return Err(format!("at {f} x mean: empirical {empirical}, theory {theory}"));
        }
        parts.push(format!("{f}m: {:.3}%", 100.0 * rel));
    }
    Ok(format!("relative gaps {}", parts.join(", ")))
}

/// All `3^n` sign patterns with the least-squares scale clamped at zero.
fn exhaustive_min_error(w: &[f64]) -> f64 {
    let n = w.len();
    let total: f64 = w.iter().map(|x| x * x).sum();
    let mut digits = vec![0u8; n];
    let mut best = (total, vec![0i8; n], 0.0);
    loop {
        let (mut dot, mut k) = (0.0, 0usize);
        for (d, x) in digits.iter().zip(w) {
            match d {
                1 => {
                    dot += x;
                    k += 1;
                }
                2 => {
                    dot -= x;
                    k += 1;
                }
                _ => {}
            }
        }
        if k > 0 && dot > 0.0 {
            let err = total - dot * dot / k as f64;
            if err < best.0 {
                best = (err, digits.iter().map(|&d| [0, 1, -1][d as usize]).collect(), dot / k as f64);
            }
        }
        let mut i = 0;
        while i < n && digits[i] == 2 {
            digits[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        digits[i] += 1;
    }
    let (_, signs, alpha) = best;
    w.iter().zip(&signs).map(|(x, &s)| (x - alpha * f64::from(s)).powi(2)).sum()
}

fn c4_exhaustive_oracle() -> Outcome {
    let mut r = rng(401);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let n = r.gen_range(1..=12);
        let w = signed_mix(&mut r, n);
        let brute = solve_symmetric_brute(&w).map_err(|e| e.to_string())?.error;
        let gap = (brute - exhaustive_min_error(&w)).abs();
        if gap > 1e-12 {
            return Err(format!("case {case} (n={n}): gap {gap:e}"));
        }
        worst = worst.max(gap);
    }
    Ok(format!("1000 cases, max gap {worst:e}"))
}

fn c5_ordering() -> Outcome {
    let mut r = rng(501);
    let mut violations = 0;
    for _ in 0..10_000 {
        let n = r.gen_range(1..=64);
        let w = signed_mix(&mut r, n);
        let total: f64 = w.iter().map(|x| x * x).sum();
        let tol = 1e-12 * (1.0 + total);
        let two = solve_two_alpha(&w).unwrap().error;
        let asym = solve_asymmetric_brute(&w).unwrap().error;
        let sym = solve_symmetric_brute(&w).unwrap().error;
        let rms = solve_rms_hierarchical(&[&w[..]]).unwrap().error;
        let ok = two <= asym + tol
            && (asym - sym).abs() <= tol
            && sym <= rms + tol
            && rms <= total + tol;
        violations += usize::from(!ok);
    }
    if violations == 0 {
        Ok("10000 vectors, 0 violations".into())
    } else {
        Err(format!("{violations} violations"))
    }
}

fn c6_structure() -> Outcome {
    let opts = TernarizeOptions {
        scale_bits: None,
        act_bits: 8,
        fit: FitOptions::default(),
        gaussian_rule: GaussianRule::default(),
    };
    let mut r = rng(601);
    let mut violations = Vec::new();
    for case in 0..100 {
        let w = random_tensor(&mut r, (8, 16, 3, 3));
        let d = w.dims();
        let scale = w.data().iter().map(|x| x * x).sum::<f64>().max(1.0);
        let mut prev: Option<f64> = None;
        for n in [1, 2, 4, 8] {
            let p = GroupPartition::new(d, n).unwrap();
            let t = fgq_ternarize(&w, &p, Solver::Brute, &opts).unwrap();
            let recon = dequantize(&t.layer);
            let direct = sq_dist(w.data(), recon.data());
            let summed: f64 = t.solutions.iter().map(|s| s.error).sum();
            if (direct - summed).abs() > 1e-12 * scale {
                violations.push(format!("case {case} N={n}: additivity"));
            }
            if prev.is_some_and(|e| e > t.total_error + 1e-12 * scale) {
                violations.push(format!("case {case} N={n}: refinement"));
            }
            prev = Some(t.total_error);
            let distinct: HashSet<u64> = recon.data().iter().map(|v| v.to_bits()).collect();
            if distinct.len() > 2 * p.num_groups() + 1 {
                violations.push(format!("case {case} N={n}: capacity"));
            }
            let signs = t.layer.signs_canonical().unwrap();
            let runs = d.c.div_ceil(n);
            for k in 0..d.k {
                for c in 0..d.c {
                    for rr in 0..d.r {
                        for s in 0..d.s {
                            let off = d.offset(k, c, rr, s);
                            let g = ((k * runs + c / n) * d.r + rr) * d.s + s;
                            let sol = &t.solutions[g];
                            let expect = sol.alpha * f64::from(sol.signs[c % n]);
                            if signs[off] != sol.signs[c % n] || (recon.data()[off] - expect).abs() > 1e-9 {
                                violations.push(format!("case {case} N={n}: self-consistency at {off}"));
                            }
                        }
                    }
                }
            }
        }
    }
    if violations.is_empty() {
        Ok("100 tensors x N in {1,2,4,8}, 0 violations".into())
    } else {
        Err(format!("{} violations, first: {}", violations.len(), violations[0]))
    }
}

fn c7_emulator() -> Outcome {
    let mut r = rng(701);
    let mut done = 0;
    while done < 50 {
        let w = random_tensor(&mut r, (8, 16, 3, 3));
        let d = w.dims();
        let (h, wd) = (r.gen_range(3..=32), r.gen_range(3..=32));
        let act_bits = [4, 8][r.gen_range(0..2)];
        let spec = ConvSpec {
            stride: r.gen_range(1..=2),
            padding: r.gen_range(0..=1),
            act_bits,
        };
        if spec.output_hw((h, wd), (d.r, d.s)).is_err() {
            continue;
        }
        let x = ActivationTensor::new(
            (d.c, h, wd),
            (0..d.c * h * wd).map(|_| r.gen_range(-2.0..6.0)).collect(),
        )
        .unwrap();
        let p = GroupPartition::new(d, r.gen_range(1..=d.c)).unwrap();
        let layer = if done % 10 == 9 {
            quantize_fixed_layer(&w, &p, 8, act_bits).unwrap()
        } else {
            let opts = TernarizeOptions {
                scale_bits: Some([4, 8][r.gen_range(0..2)]),
                act_bits,
                ..Default::default()
            };
            fgq_ternarize(&w, &p, Solver::Brute, &opts).unwrap().layer
        };
        let xq = quantize_activations(&x, act_bits).unwrap();
        let (y, _) = conv_fgq(&layer, &xq, &spec).map_err(|e| e.to_string())?;
        let reference = conv_reference(&dequantize(&layer), &xq.dequantize(), &spec).unwrap();
        let mismatch = y
            .data()
            .iter()
            .zip(reference.data())
            .filter(|(a, b)| a.to_bits() != b.to_bits())
            .count();
        if mismatch > 0 || y.dims() != reference.dims() {
            return Err(format!("pair {done}: {mismatch} differing outputs"));
        }
        done += 1;
    }
    Ok("50 layer/input pairs bit-exact".into())
}

fn c8_formats() -> Outcome {
    let data_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data");
    let mut fixtures = 0;
    for entry in std::fs::read_dir(&data_dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_none_or(|e| e != "npy") {
            continue;
        }
        let Ok(arr) = read_npy(&path) else { continue };
        let raw = std::fs::read(&path).unwrap();
        let mut out = Vec::new();
        write_npy_to(&mut out, &arr.shape, &arr.data, arr.dtype).unwrap();
        if raw[6] == 1 && out != raw {
            return Err(format!("{} is not rewritten byte-identically", path.display()));
        }
        fixtures += 1;
    }

    let mut r = rng(801);
    for case in 0..100 {
        let shape: Vec<usize> = (0..r.gen_range(1..=4)).map(|_| r.gen_range(1..6)).collect();
        let dtype = if r.gen() { NpyDtype::F32 } else { NpyDtype::F64 };
        let data: Vec<f64> = (0..shape.iter().product())
            .map(|_| {
                let v: f64 = r.gen_range(-10.0..10.0);
                if dtype == NpyDtype::F32 { f64::from(v as f32) } else { v }
            })
            .collect();
        let mut a = Vec::new();
        write_npy_to(&mut a, &shape, &data, dtype).unwrap();
        let back = read_npy_from(&mut Cursor::new(&a)).unwrap();
        let mut b = Vec::new();
        write_npy_to(&mut b, &back.shape, &back.data, back.dtype).unwrap();
        if a != b || back.data != data {
            return Err(format!("npy case {case} differs"));
        }
    }

    for case in 0..50 {
        let layers: Vec<_> = (0..r.gen_range(1..4))
            .map(|i| {
                let w = random_tensor(&mut r, (5, 9, 3, 3));
                let p = GroupPartition::new(w.dims(), r.gen_range(1..=w.dims().c)).unwrap();
                if i == 0 && r.gen_bool(0.3) {
                    return quantize_fixed_layer(&w, &p, 8, 8).unwrap();
                }
                let opts = TernarizeOptions {
                    scale_bits: Some([4, 8][r.gen_range(0..2)]),
                    act_bits: [4, 8][r.gen_range(0..2)],
                    ..Default::default()
                };
                fgq_ternarize(&w, &p, Solver::Brute, &opts).unwrap().layer
            })
            .collect();
        let mut a = Vec::new();
        write_fgq_to(&mut a, &layers).unwrap();
        let back = read_fgq_from::<f64>(&a).map_err(|e| e.to_string())?;
        let mut b = Vec::new();
        write_fgq_to(&mut b, &back).unwrap();
        if a != b || back != layers {
            return Err(format!("fgq case {case} differs"));
        }
    }

    let mut patterns = 0;
    for len in 0..=8u32 {
        let mut seen = HashSet::new();
        for code in 0..3usize.pow(len) {
            let mut c = code;
            let signs: Vec<i8> = (0..len)
                .map(|_| {
                    let s = (c % 3) as i8 - 1;
                    c /= 3;
                    s
                })
                .collect();
            let packed = pack_ternary(&signs).unwrap();
            let reparsed = PackedTernary::from_bytes(signs.len(), packed.as_bytes().to_vec());
            if packed.unpack() != signs || reparsed.ok().as_ref() != Some(&packed) || !seen.insert(packed.as_bytes().to_vec()) {
                return Err(format!("packing fails for {signs:?}"));
            }
            patterns += 1;
        }
    }
    let long: Vec<i8> = (0..10_000).map(|_| r.gen_range(-1..=1)).collect();
    if pack_ternary(&long).unwrap().unpack() != long {
        return Err("random length-10000 packing differs".into());
    }
    Ok(format!(
        "{fixtures} numpy fixtures, 100 npy + 50 fgq round trips, {patterns} sign patterns, 1e4 random"
    ))
}

fn c9_threshold_gain() -> Outcome {
    let mut r = rng(901);
    let layers: Vec<(String, WeightTensor<f64>, Family)> = synthetic_model(&mut r)
        .into_iter()
        .map(|l| (l.name, l.weights, l.family))
        .collect();
    let named: Vec<(String, WeightTensor<f64>)> =
        layers.iter().map(|(n, w, _)| (n.clone(), w.clone())).collect();
    let mut cfg = RunConfig::new(Command::Analyze);
    cfg.seed = 901;
    let report = analyze_layers(&named, &cfg).map_err(|e| format!("{e:#}"))?;
    let (mut exp_min, mut gauss_max) = (f64::INFINITY, 0.0f64);
    for (l, (_, _, family)) in report.layers.iter().zip(&layers) {
        match family {
            Family::Exponential => {
                if l.improvement_pct.is_nan() || l.improvement_pct <= 0.0 {
                    return Err(format!("{}: improvement {} not positive", l.name, l.improvement_pct));
                }
                exp_min = exp_min.min(l.improvement_pct);
            }
            _ => {
                if l.improvement_pct.abs() >= 2.0 {
                    return Err(format!("{}: |improvement| {} >= 2%", l.name, l.improvement_pct));
                }
                gauss_max = gauss_max.max(l.improvement_pct.abs());
            }
        }
    }
    Ok(format!(
        "exponential layers min improvement {exp_min:.3}%, gaussian layers max |improvement| {gauss_max:.3}%"
    ))
}

fn c10_residual() -> Outcome {
    let mut r = rng(1001);
    let mut reduction = 0.0;
    for case in 0..100 {
        let n = r.gen_range(2..=64);
        let w = signed_mix(&mut r, n);
        let base = solve_symmetric_brute(&w).unwrap();
        let out = solve_residual(&w, &base, 8).map_err(|e| e.to_string())?;
        if out.final_error() > out.base.error + 1e-12 {
            return Err(format!("case {case}: error increased"));
        }
        let remaining: Vec<f64> = w.iter().zip(out.base.dequantize()).map(|(a, b)| a - b).collect();
        let rn = remaining.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dn = out.residual_norm();
        if out.error_reduction() > dn * dn + 2.0 * dn * rn + 1e-12 {
            return Err(format!("case {case}: reduction exceeds triangle bound"));
        }
        reduction += out.error_reduction();
    }
    let mean = reduction / 100.0;
    if mean > 0.0 {
        Ok(format!("100 cases, mean error reduction {mean:.4}"))
    } else {
        Err(format!("mean reduction {mean} not positive"))
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("multiplication elimination", Some(1), c1_multiplication_elimination),
        ("threshold Monte Carlo", Some(15), c2_threshold_monte_carlo),
        ("exponential G-curve", Some(10), c3_g_curve),
        ("exhaustive solver oracle", None, c4_exhaustive_oracle),
        ("solver ordering", None, c5_ordering),
        ("group structure", None, c6_structure),
        ("emulator equivalence", Some(30), c7_emulator),
        ("format round trips", None, c8_formats),
        ("distribution-aware threshold gain", None, c9_threshold_gain),
        ("residual precision", None, c10_residual),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let (out, took) = timed(limit.map(Duration::from_secs), f);
        match out {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} ({:.2} s)", i + 1, took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} ({:.2} s)", i + 1, took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
