//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use mgpc_core::codec::{
    likelihood_value, prepare_input, quantize_centered_value, scale_round_value, CodecModel, GaussianTable,
    IdempotentControlCodec, LearnedCodec, Topology,
};
use mgpc_core::codec::range_coder::{range_decode, range_encode, RangeDecoder, RangeEncoder, TOTAL_FREQ};
use mgpc_core::multigen::{
    drop_convergence_rate, run_multigen, run_multigen_with, trace_rows, write_trace_csv, Dcr, GenerationTrace,
};
use mgpc_core::pointcloud::{kdtree_crop, toy_cloud, PointCloud, Rgb};
use mgpc_core::tensor::Tape;
use mgpc_core::training::{crop_losses, train, AuxNorm, ConstraintSet, LossWeights, Rounding, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn check_budget(o: Outcome, elapsed: Duration, budget: Duration) -> Outcome {
    if elapsed > budget {
        outcome(false, format!("{}; took {:.1?}, budget {:.0?}", o.detail, elapsed, budget))
    } else {
        o
    }
}

fn quantizer_idempotency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = 0;
    for i in 0..100_000 {
        let mu: f64 = rng.gen_range(-100.0..100.0);
        let y = if i % 10 == 0 {
            // exact ties relative to mu
            mu + rng.gen_range(-50i32..50) as f64 + 0.5
        } else {
            rng.gen_range(-500.0..500.0)
        };
        let q = quantize_centered_value(y, mu);
        if quantize_centered_value(q, mu) != q {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 100000 pairs not idempotent"))
}

fn post_processing_closure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0;
    for v in 0..=255u32 {
        for _ in 0..100 {
            let d: f64 = rng.gen_range(-0.499..0.499) / 255.0;
            if scale_round_value(v as f64 / 255.0 + d).ok() != Some(v as u8) {
                bad += 1;
            }
        }
    }
    let step = 0.6 / 255.0;
    let mut step_bad = 0;
    for v in 0..=255i32 {
        let mut shifted = Vec::new();
        if v < 255 {
            shifted.push(scale_round_value(v as f64 / 255.0 + step).unwrap() as i32);
        }
        if v > 0 {
            shifted.push(scale_round_value(v as f64 / 255.0 - step).unwrap() as i32);
        }
        step_bad += shifted.iter().filter(|&&s| (s - v).abs() != 1).count();
    }
    outcome(
        bad == 0 && step_bad == 0,
        format!("{bad} small perturbations changed the value, {step_bad} error steps were not one unit"),
    )
}

fn entropy_coder() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    // Arbitrary adaptive-free CDFs, including tiny frequencies.
    for _ in 0..1000 {
        let len = rng.gen_range(0..400);
        let mut cdfs = Vec::new();
        let mut symbols = Vec::new();
        for _ in 0..len {
            let n = rng.gen_range(2..40);
            let mut cuts: Vec<u32> = (0..n - 1).map(|_| rng.gen_range(1..TOTAL_FREQ)).collect();
            cuts.sort_unstable();
            cuts.dedup();
            let mut cdf = vec![0];
            cdf.extend(cuts);
            cdf.push(TOTAL_FREQ);
            symbols.push(rng.gen_range(0..cdf.len() - 1));
            cdfs.push(cdf);
        }
        let refs: Vec<&[u32]> = cdfs.iter().map(Vec::as_slice).collect();
        let bytes = range_encode(&symbols, &refs).unwrap();
        if range_decode(&bytes, &refs, symbols.len()).ok().as_deref() != Some(&symbols[..]) {
            mismatches += 1;
        }
    }

    let mut worst = 0.0f64;
    let mut size_bad = 0;
    for _ in 0..1000 {
        let sigma: f64 = libm::exp(rng.gen_range(libm::log(0.3)..libm::log(40.0)));
        let shift: f64 = rng.gen_range(-0.5..0.5);
        let table = GaussianTable::new(sigma, shift);
        let normal = Normal::new(0.0, sigma).unwrap();
        let len = rng.gen_range(1..2000);
        let values: Vec<i64> = (0..len)
            .map(|_| libm::round(normal.sample(&mut rng) - shift) as i64)
            .collect();
        let mut enc = RangeEncoder::new();
        for &v in &values {
            table.encode(&mut enc, v);
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes);
        let decoded: Vec<i64> = values.iter().map(|_| table.decode(&mut dec).unwrap_or(i64::MIN)).collect();
        if decoded != values {
            mismatches += 1;
        }
        let analytic: f64 = values
            .iter()
            .map(|&v| -libm::log2(likelihood_value(v as f64 + shift, sigma)))
            .sum::<f64>()
            / 8.0;
        let excess = (bytes.len() as f64 - analytic).abs() - 0.01 * analytic;
        worst = worst.max(excess);
        if excess > 8.0 {
            size_bad += 1;
        }
    }
    outcome(
        mismatches == 0 && size_bad == 0,
        format!(
            "{mismatches} round-trip mismatches, {size_bad} size violations, worst excess over 1% {worst:.2} bytes"
        ),
    )
}

fn micro_model(seed: u64) -> CodecModel {
    let mut m = CodecModel::init(Topology::MICRO, seed, 3);
    // Perturb every parameter so biases and the prior are not at special values.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in m.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.05..0.05));
    }
    m
}

fn loss_value(
    m: &CodecModel,
    x: &mgpc_core::tensor::Tensor,
    n: usize,
    c: ConstraintSet,
    norm: AuxNorm,
    recorded: &[mgpc_core::tensor::Tensor],
) -> f64 {
    let mut tape = Tape::new();
    let bound = m.bind(&mut tape, false);
    let mut noise = ChaCha8Rng::seed_from_u64(9);
    let mut rounding = Rounding::frozen(recorded.to_vec());
    let w = LossWeights::with_lambda(1000.0);
    let t = crop_losses(&mut tape, &bound, x, n, c, w, norm, &mut noise, &mut rounding).unwrap();
    tape.value(t.total).item()
}

fn autodiff_fidelity() -> Outcome {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-3;
    let cloud = toy_cloud(2000, 4).unwrap();
    let crop = kdtree_crop(&cloud, 24, 11).unwrap();
    let (_, x) = prepare_input(&crop).unwrap();
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut params = 0;
    for (ci, c) in ConstraintSet::ALL.into_iter().enumerate() {
        for norm in [AuxNorm::Mse, AuxNorm::SumSquares] {
            let m = micro_model(100 + ci as u64);
            params = m.num_params();
            let w = LossWeights::with_lambda(1000.0);

            let mut tape = Tape::new();
            let bound = m.bind(&mut tape, true);
            let mut noise = ChaCha8Rng::seed_from_u64(9);
            let mut live = Rounding::live();
            crop_losses(&mut tape, &bound, &x, crop.len(), c, w, norm, &mut noise, &mut live).unwrap();
            let recorded = live.into_recorded();

            let mut tape = Tape::new();
            let bound = m.bind(&mut tape, true);
            let mut noise = ChaCha8Rng::seed_from_u64(9);
            let mut frozen = Rounding::frozen(recorded.clone());
            let t = crop_losses(&mut tape, &bound, &x, crop.len(), c, w, norm, &mut noise, &mut frozen).unwrap();
            let mut grads = tape.backward(t.total).unwrap();
            let analytic: Vec<Vec<f64>> =
                bound.vars().iter().map(|&v| grads.take(v).unwrap().into_data()).collect();
            let scale = analytic.iter().flatten().fold(0.0f64, |a, g| a.max(g.abs()));

            let mut bad = 0;
            for (pi, g) in analytic.iter().enumerate() {
                for (j, &a) in g.iter().enumerate() {
                    let mut plus = m.clone();
                    plus.params_mut()[pi].data_mut()[j] += H;
                    let mut minus = m.clone();
                    minus.params_mut()[pi].data_mut()[j] -= H;
                    let fd = (loss_value(&plus, &x, crop.len(), c, norm, &recorded)
                        - loss_value(&minus, &x, crop.len(), c, norm, &recorded))
                        / (2.0 * H);
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3 * scale).max(1e-8);
                    worst = worst.max(rel);
                    checked += 1;
                    if rel > TOL {
                        bad += 1;
                    }
                }
            }
            if bad > 0 {
                failures.push(format!("{c}/{norm:?}: {bad}"));
            }
        }
    }
    outcome(
        failures.is_empty() && params <= 500,
        format!(
            "{checked} partials over 7 constraint sets x 2 aux norms on a {params}-parameter model, worst rel err {worst:.2e}{}",
            if failures.is_empty() { String::new() } else { format!(", failing: {}", failures.join(", ")) }
        ),
    )
}

fn control_run() -> (Outcome, String) {
    let cloud = toy_cloud(10_000, 5).unwrap();
    let codec = IdempotentControlCodec::new();
    let mut first: Option<Vec<Rgb>> = None;
    let mut differing = 0;
    let trace = run_multigen_with(&cloud, &codec, 50, |_, rec: &PointCloud| match &first {
        None => first = Some(rec.colors().to_vec()),
        Some(f) => {
            if f.as_slice() != rec.colors() {
                differing += 1;
            }
        }
    })
    .unwrap();
    let nonzero = (1..=50).filter(|&k| trace.drop(k) != Some(0.0)).count();
    let csv = write_trace_csv(&trace_rows("toy10k", "control", "lossless", &trace, trace.max_drop()));
    (
        outcome(
            nonzero == 0 && differing == 0 && trace.len() == 50,
            format!("{nonzero} generations with nonzero drop, {differing} generations with differing colors"),
        ),
        csv,
    )
}

fn metric_algebra(traces: &[&GenerationTrace]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut random = Vec::new();
    for _ in 0..100 {
        let mut p = rng.gen_range(20.0..45.0);
        let generations = (1..=50)
            .map(|k| {
                p -= rng.gen_range(-0.2..1.0);
                mgpc_core::multigen::Generation { k, bpp: 1.0, psnr_y: p }
            })
            .collect();
        random.push(GenerationTrace { generations });
    }
    let mut worst = 0.0f64;
    for t in traces.iter().copied().chain(random.iter()) {
        let mut acc = 0.0;
        for k in 1..=t.len() {
            if k >= 2 {
                acc += t.delta(k).unwrap();
            }
            worst = worst.max((t.drop(k).unwrap() - acc).abs());
        }
    }
    let mut dcr_err = 0.0f64;
    for max in [0.1, 1.0, 3.7, 12.5, 98.0] {
        let at_max = match drop_convergence_rate(max, max) {
            Dcr::Value(v) => v.abs(),
            _ => f64::INFINITY,
        };
        let at_e = match drop_convergence_rate(max / std::f64::consts::E, max) {
            Dcr::Value(v) => (v + 1.0).abs(),
            _ => f64::INFINITY,
        };
        dcr_err = dcr_err.max(at_max).max(at_e);
    }
    outcome(
        worst <= 1e-12 && dcr_err <= 1e-12,
        format!("telescoping max error {worst:.1e} over {} traces, DCR identity error {dcr_err:.1e}", traces.len() + random.len()),
    )
}

struct Trained {
    drop10: f64,
    psnr1: f64,
    bpp1: f64,
    trace: GenerationTrace,
    csv: String,
}

fn train_and_run(cloud: &PointCloud, c: ConstraintSet) -> Trained {
    let config = TrainConfig::desk(c, 1000.0);
    let (model, _) = train(std::slice::from_ref(cloud), &config).unwrap();
    let codec = LearnedCodec::new(c.label(), model);
    let trace = run_multigen(cloud, &codec, 10).unwrap();
    let g1 = &trace.generations[0];
    let csv = write_trace_csv(&trace_rows("toy50k", c.label(), "lambda1000", &trace, trace.max_drop()));
    Trained {
        drop10: trace.drop(10).unwrap(),
        psnr1: g1.psnr_y,
        bpp1: g1.bpp,
        trace,
        csv,
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome, d: Duration| {
        println!(
            "criterion {n:>2} {} {name}: {} ({:.1?})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            d
        );
        results.push((n, name, o, d));
    };

    let (o, d) = timed(quantizer_idempotency);
    report(1, "quantizer idempotency", check_budget(o, d, Duration::from_secs(1)), d);

    let (o, d) = timed(post_processing_closure);
    report(2, "post-processing closure", check_budget(o, d, Duration::from_secs(1)), d);

    let (o, d) = timed(entropy_coder);
    report(3, "entropy coder", check_budget(o, d, Duration::from_secs(30)), d);

    let (o, d) = timed(autodiff_fidelity);
    report(4, "autodiff fidelity", check_budget(o, d, Duration::from_secs(120)), d);

    let ((o, control_csv), d) = timed(control_run);
    report(5, "idempotent control", check_budget(o, d, Duration::from_secs(60)), d);

    let cloud = toy_cloud(50_000, 7).unwrap();
    let (base, d_base) = timed(|| train_and_run(&cloud, ConstraintSet::Baseline));
    let (lcc, d_lcc) = timed(|| train_and_run(&cloud, ConstraintSet::Lcc));
    for (name, t) in [("BASELINE", &base), ("LCC", &lcc)] {
        println!("  {name}: bpp {:.3} psnr_y1 {:.3} drop10 {:.4}", t.bpp1, t.psnr1, t.drop10);
    }

    let (o, d) = timed(|| metric_algebra(&[&base.trace, &lcc.trace]));
    report(6, "metric algebra", check_budget(o, d, Duration::from_secs(1)), d);

    let d7 = d_base + d_lcc;
    let reduction = 1.0 - lcc.drop10 / base.drop10;
    let o = outcome(
        lcc.drop10 < base.drop10 && reduction >= 0.30,
        format!(
            "10-generation drop LCC {:.4} vs BASELINE {:.4}, relative reduction {:.1}%",
            lcc.drop10,
            base.drop10,
            100.0 * reduction
        ),
    );
    report(7, "LCC robustness", check_budget(o, d7, Duration::from_secs(30 * 60)), d7);

    let (mic, d_mic) = timed(|| train_and_run(&cloud, ConstraintSet::Mic));
    let (trc, d_trc) = timed(|| train_and_run(&cloud, ConstraintSet::Trc));
    for (name, t) in [("MIC", &mic), ("TRC", &trc)] {
        println!("  {name}: bpp {:.3} psnr_y1 {:.3} drop10 {:.4}", t.bpp1, t.psnr1, t.drop10);
    }
    let d8 = d7 + d_mic + d_trc;
    let o = outcome(
        mic.drop10 < base.drop10 && trc.drop10 < base.drop10,
        format!(
            "10-generation drop MIC {:.4}, TRC {:.4}, BASELINE {:.4}",
            mic.drop10, trc.drop10, base.drop10
        ),
    );
    report(8, "MIC/TRC robustness", check_budget(o, d8, Duration::from_secs(60 * 60)), d8);

    let bpp_ratio = lcc.bpp1 / base.bpp1;
    let gap = base.psnr1 - lcc.psnr1;
    let o = outcome(
        gap <= 1.0 && (0.9..=1.1).contains(&bpp_ratio),
        format!(
            "generation-1 PSNR-Y LCC {:.3} dB vs BASELINE {:.3} dB (gap {gap:.3}), bpp ratio {bpp_ratio:.3}",
            lcc.psnr1, base.psnr1
        ),
    );
    report(9, "single-pass RD", o, Duration::ZERO);

    let (o, d) = timed(|| {
        let (_, control_again) = control_run();
        let base_again = train_and_run(&cloud, ConstraintSet::Baseline);
        let lcc_again = train_and_run(&cloud, ConstraintSet::Lcc);
        let same = [
            control_again == control_csv,
            base_again.csv == base.csv,
            lcc_again.csv == lcc.csv,
        ];
        outcome(
            same.iter().all(|&s| s),
            format!("control/BASELINE/LCC trace CSVs byte-identical: {same:?}"),
        )
    });
    report(10, "determinism", o, d);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "{} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
