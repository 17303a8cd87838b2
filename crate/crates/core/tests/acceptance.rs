//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{affine_fit, noisy_seasonal, optimality_residual, rank_one};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorfill::completion::{
    complete, spectral_k, update_weights, weights_from_normalized_ranks, CompletionParams,
};
use tensorfill::grid::{
    fold, inverse_rearrange, rearrange, unfold, Mode, Patch, RearrangedTensor, Reliability, Stack,
    Tensor3,
};
use tensorfill::harness::sweep::{gap_length_settings, rate_settings, write_sweep_csv, BlockPlacement, SweepRow};
use tensorfill::harness::{run_sweep, synthesize, Method, SynthParams};
use tensorfill::io::{read_stack, write_stack};
use tensorfill::pipeline::{reconstruct_scene, PipelineParams};
use tensorfill::trend::{l1_trend_filter, replacement_passes, FilterParams, SampleFlag, Series};

type Outcome = Result<String, String>;

const RATES: [u32; 12] = [25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80];
const SWEEP_SEED: u64 = 0;
const PATCH: usize = 8;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Tensor3<f64> {
    Tensor3::from_fn(shape, |_, _, _| rng.gen_range(-1.0..1.0))
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for case in 0..200 {
        let shape = [rng.gen_range(1..9), rng.gen_range(1..9), rng.gen_range(1..9)];
        let x = random_tensor(&mut rng, shape);
        for mode in Mode::ALL {
            let back = fold(&unfold(&x, mode), mode, shape).map_err(|e| e.to_string())?;
            if back != x {
                return Err(format!("unfold/fold mode {mode:?} shape {shape:?}"));
            }
        }

        let nd = rng.gen_range(1..6);
        let time = [shape[0], shape[1], nd * rng.gen_range(1..5)];
        let omega = Tensor3::from_fn(time, |_, _, _| rng.gen_bool(0.7));
        let patch = Patch::new(random_tensor(&mut rng, time), omega).map_err(|e| e.to_string())?;
        let rt = rearrange(&patch, nd).map_err(|e| e.to_string())?;
        if inverse_rearrange(&rt, shape[0], shape[1]).map_err(|e| e.to_string())? != patch {
            return Err(format!("rearrange shape {time:?} nd {nd}"));
        }

        let (h, w, t) = (rng.gen_range(1..7), rng.gen_range(1..7), rng.gen_range(1..40));
        let codes = [Reliability::Good, Reliability::Marginal, Reliability::Cloudy, Reliability::NoData];
        let n = h * w * t;
        let stack = Stack::new(
            h,
            w,
            rng.gen_range(1..24),
            (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
            (0..n).map(|_| codes[rng.gen_range(0..4)]).collect(),
            -3000.0,
        )
        .map_err(|e| e.to_string())?;
        let path = dir.path().join(case.to_string());
        write_stack(&stack, &path).map_err(|e| e.to_string())?;
        let back = read_stack(&path).map_err(|e| e.to_string())?;
        let bits = back.values.iter().zip(&stack.values).all(|(a, b)| a.to_bits() == b.to_bits());
        if back != stack || !bits {
            return Err(format!("stack {h}x{w}x{t}"));
        }
    }
    Ok("200 shapes exact".into())
}

fn weight_rule() -> Outcome {
    let w = weights_from_normalized_ranks([0.5, 0.25, 0.25]).map_err(|e| e.to_string())?.as_array();
    let dev = w.iter().zip([0.2, 0.4, 0.4]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if dev > 1e-12 {
        return Err(format!("weights {w:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let sum: f64 = if i % 10 == 0 {
            let shape = [rng.gen_range(1..8), rng.gen_range(1..8), rng.gen_range(1..8)];
            let x = random_tensor(&mut rng, shape);
            update_weights(&x, 0.85).map_err(|e| e.to_string())?.as_array().iter().sum()
        } else {
            let mut k_norm = [0.0; 3];
            for k in &mut k_norm {
                let len = rng.gen_range(1..40);
                let mut sigma: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
                sigma.sort_by(|a, b| b.total_cmp(a));
                *k = spectral_k(&sigma, 0.85).map_err(|e| e.to_string())? as f64 / len as f64;
            }
            weights_from_normalized_ranks(k_norm).map_err(|e| e.to_string())?.as_array().iter().sum()
        };
        worst = worst.max((sum - 1.0).abs());
    }
    check(worst <= 1e-12, format!("w = {w:?}, max |sum - 1| = {worst:.1e} over 1000 spectra"))
}

fn exact_recovery() -> Outcome {
    let truth = rank_one([16, 23, 10], 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut omega = vec![true; truth.len()];
    for i in sample(&mut rng, truth.len(), (0.3 * truth.len() as f64).round() as usize) {
        omega[i] = false;
    }
    let data = truth.as_slice().iter().zip(&omega).map(|(v, &ok)| if ok { *v } else { 0.0 }).collect();
    let rt = RearrangedTensor {
        data: Tensor3::from_vec(truth.shape(), data).map_err(|e| e.to_string())?,
        omega: Tensor3::from_vec(truth.shape(), omega).map_err(|e| e.to_string())?,
    };
    let start = Instant::now();
    let out = complete(&rt, &CompletionParams::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let err: f64 = out
        .tensor
        .data
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / truth.frobenius_norm();
    check(err < 1e-2 && secs < 10.0, format!("relative error {err:.2e} in {secs:.2}s"))
}

fn filter_certificates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let filter = |y: &[f64], lambda: f64| {
        l1_trend_filter(y, &FilterParams { lambda, ..Default::default() }).map_err(|e| e.to_string())
    };
    for _ in 0..20 {
        let n = rng.gen_range(3..120);
        let y = noisy_seasonal(&mut rng, n);
        if filter(&y, 0.0)? != y {
            return Err("lambda = 0 is not the identity".into());
        }
    }
    let mut affine_dev = 0.0f64;
    for lambda in [0.1, 1.0, 100.0] {
        let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-0.05..0.05));
        let y: Vec<f64> = (0..80).map(|t| a + b * t as f64).collect();
        let z = filter(&y, lambda)?;
        affine_dev = z.iter().zip(&y).map(|(u, v)| (u - v).abs()).fold(affine_dev, f64::max);
    }
    let mut ols_dev = 0.0f64;
    for n in [10, 46, 120] {
        let y = noisy_seasonal(&mut rng, n);
        let z = filter(&y, 1e6)?;
        ols_dev = z.iter().zip(affine_fit(&y)).map(|(u, v)| (u - v).abs()).fold(ols_dev, f64::max);
    }
    let mut residual = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(5..200);
        let lambda = 10f64.powf(rng.gen_range(-3.0..1.5));
        let y = noisy_seasonal(&mut rng, n);
        residual = residual.max(optimality_residual(&y, &filter(&y, lambda)?, lambda));
    }
    check(
        affine_dev < 1e-6 && ols_dev < 1e-4 && residual < 1e-4,
        format!("identity exact, affine {affine_dev:.1e}, least squares {ols_dev:.1e}, residual {residual:.1e}"),
    )
}

fn mae(rows: &[SweepRow], setting: &str, method: Method) -> Option<f64> {
    rows.iter().find(|r| r.setting == setting && r.method == method).and_then(|r| r.mae_mean)
}

fn rate_sweep(base: &Stack) -> (Vec<u8>, f64) {
    let start = Instant::now();
    let rows = run_sweep(
        base,
        &rate_settings(&RATES, PATCH, SWEEP_SEED),
        &[Method::Tensor, Method::Linear],
        &PipelineParams::default(),
    );
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv, false).expect("csv to memory");
    (csv, start.elapsed().as_secs_f64())
}

fn parse_rows(csv: &[u8]) -> Vec<(String, String, f64)> {
    String::from_utf8_lossy(csv)
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string(), f[2].parse().unwrap_or(f64::NAN))
        })
        .collect()
}

fn rate_shape(csv: &[u8], secs: f64) -> Outcome {
    let rows = parse_rows(csv);
    let get = |rate: u32, method: &str| {
        rows.iter()
            .find(|(s, m, _)| *s == rate.to_string() && m == method)
            .map_or(f64::NAN, |r| r.2)
    };
    let mut detail = Vec::new();
    let mut ok = secs < 1800.0;
    for rate in RATES {
        let (t, l) = (get(rate, "tensor"), get(rate, "linear"));
        ok &= t < l;
        detail.push(format!("{rate}%: {t:.4}/{l:.4}"));
    }
    let tensor_growth = get(80, "tensor") / get(25, "tensor");
    let linear_growth = get(80, "linear") / get(25, "linear");
    ok &= linear_growth > tensor_growth;
    check(
        ok,
        format!(
            "tensor/linear {}; growth tensor {tensor_growth:.2} linear {linear_growth:.2}; {secs:.0}s",
            detail.join(" ")
        ),
    )
}

fn block_sweep(base: &Stack) -> Vec<SweepRow> {
    let lengths: Vec<usize> = (2..=12).collect();
    let placement = BlockPlacement::centred(base, 12, PATCH);
    run_sweep(
        base,
        &gap_length_settings(&lengths, placement, PATCH),
        &[Method::Tensor, Method::TensorOriginalForm, Method::Linear],
        &PipelineParams::default(),
    )
}

fn block_shape(rows: &[SweepRow]) -> Outcome {
    let t = mae(rows, "12", Method::Tensor).unwrap_or(f64::NAN);
    let l = mae(rows, "12", Method::Linear).unwrap_or(f64::NAN);
    check(l >= 2.0 * t, format!("length 12: tensor {t:.4}, linear {l:.4}, ratio {:.2}", l / t))
}

fn ablation(rows: &[SweepRow]) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for len in 8..=12 {
        let r = mae(rows, &len.to_string(), Method::Tensor).unwrap_or(f64::NAN);
        let o = mae(rows, &len.to_string(), Method::TensorOriginalForm).unwrap_or(f64::NAN);
        ok &= r <= 0.5 * o;
        detail.push(format!("{len}: {r:.4}/{o:.4}"));
    }
    check(ok, format!("rearranged/original {}", detail.join(" ")))
}

fn replacement_procedure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let n = rng.gen_range(3..120);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let flags: Vec<SampleFlag> =
            (0..n).map(|_| if rng.gen_bool(0.4) { SampleFlag::Noisy } else { SampleFlag::Good }).collect();
        let lambda = 10f64.powf(rng.gen_range(-2.0..1.0));
        let series = Series::new(values.clone(), flags.clone()).map_err(|e| e.to_string())?;
        let out = replacement_passes(&series, &FilterParams { lambda, ..Default::default() })
            .map_err(|e| e.to_string())?;
        for t in 0..n {
            let ok = match flags[t] {
                SampleFlag::Good => out[t].to_bits() == values[t].to_bits(),
                SampleFlag::Noisy => out[t] >= values[t],
            };
            if !ok {
                return Err(format!("series {case} sample {t}: {} -> {}", values[t], out[t]));
            }
        }
    }
    Ok("1000 series".into())
}

fn gap_free(base: &Stack) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = PipelineParams::default();
    for case in 0..30 {
        let (h, w, nd, ny) = (rng.gen_range(1..12), rng.gen_range(1..12), rng.gen_range(1..8), rng.gen_range(1..4));
        let n = h * w * nd * ny;
        let missing = rng.gen_range(0.0..0.98);
        let values = (0..n).map(|_| rng.gen_range(0.0f32..0.9)).collect();
        let mut codes: Vec<Reliability> = (0..n)
            .map(|_| match rng.gen_range(0.0..1.0) {
                p if p < missing => [Reliability::Cloudy, Reliability::NoData][rng.gen_range(0..2)],
                p if p < missing + (1.0 - missing) / 2.0 => Reliability::Marginal,
                _ => Reliability::Good,
            })
            .collect();
        for px in 0..h * w {
            let t = rng.gen_range(0..nd * ny);
            codes[t * h * w + px] = [Reliability::Good, Reliability::Marginal][rng.gen_range(0..2)];
        }
        let stack = Stack::new(h, w, nd, values, codes, -1.0).map_err(|e| e.to_string())?;
        check_gap_free(&stack, &params).map_err(|e| format!("stack {case} ({h}x{w}x{nd}x{ny}): {e}"))?;
    }
    check_gap_free(base, &params).map_err(|e| format!("synthetic scene: {e}"))?;
    Ok("30 random stacks and the 64x64 synthetic scene".into())
}

fn check_gap_free(stack: &Stack, params: &PipelineParams) -> Result<(), String> {
    let out = reconstruct_scene(stack, params).map_err(|e| e.to_string())?;
    let missing = out.reliability.iter().filter(|c| !c.is_valid()).count();
    let bad = out.values.iter().filter(|v| !v.is_finite()).count();
    if missing + bad > 0 {
        return Err(format!("{missing} missing, {bad} non-finite"));
    }
    Ok(())
}

fn report(index: usize, name: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(detail) => println!("PASS {index:>2} {name}: {detail}"),
        Err(detail) => println!("FAIL {index:>2} {name}: {detail}"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let base = synthesize(&SynthParams::default()).expect("default synthetic scene").observed;
    let (first_csv, sweep_secs) = rate_sweep(&base);
    let blocks = block_sweep(&base);

    let mut all = true;
    all &= report(1, "round trips", &round_trips());
    all &= report(2, "weight rule", &weight_rule());
    all &= report(3, "rank-one recovery", &exact_recovery());
    all &= report(4, "trend filter certificates", &filter_certificates());
    all &= report(5, "missing-rate sweep", &rate_shape(&first_csv, sweep_secs));
    all &= report(6, "block-gap sweep", &block_shape(&blocks));
    all &= report(7, "rearrangement ablation", &ablation(&blocks));
    all &= report(8, "replacement passes", &replacement_procedure());
    all &= report(9, "gap-free output", &gap_free(&base));
    let (second_csv, _) = rate_sweep(&base);
    all &= report(
        10,
        "sweep determinism",
        &check(second_csv == first_csv, format!("{} bytes compared", first_csv.len())),
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
