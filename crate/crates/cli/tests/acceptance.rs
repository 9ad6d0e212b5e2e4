//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Criteria run one after another so the timing
//! checks do not compete with each other for cores.

// published inputs are quoted digit for digit
#![allow(clippy::excessive_precision)]

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::panic;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpuflow::device::{DeviceDescriptor, DeviceHandle};
use vpuflow::half16::{self, Half};
use vpuflow::infer::{forward, forward_layers, PrecisionMode};
use vpuflow::metrics::{normalize_scaling, project_linear, throughput, throughput_per_watt};
use vpuflow::scheduler::{run_batch, Job};
use vpuflow::tensor::Tensor;
use vpuflow::NetworkGraph;
use vpuflow_cli::{cmd_accuracy, cmd_gen_fixture, FixtureSpec, RunConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn binary16_exhaustive() -> Outcome {
    let start = Instant::now();
    for bits in 0..=u16::MAX {
        let h = Half::from_bits(bits);
        if h.is_nan() {
            continue;
        }
        let back = Half::from_f32(h.to_f32()).to_bits();
        check(back == bits, format!("{bits:#06x} came back as {back:#06x}"))?;
    }
    let ladder = oracles::half_ladder();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1_000_000 {
        let x = f32::from_bits(rng.gen());
        let (got, want) = (half16::encode(x).to_bits(), oracles::half_encode_oracle(&ladder, x));
        check(got == want, format!("encode({x:e}) = {got:#06x}, oracle {want:#06x}"))?;
    }
    let took = start.elapsed();
    check(took < Duration::from_secs(10), format!("took {took:?}"))?;
    Ok(format!("65536 patterns, 10^6 random inputs, {:.2} s", took.as_secs_f64()))
}

fn per_watt_exactness() -> Outcome {
    let a = throughput_per_watt(9.929_843_865_716_81, 2.5).map_err(|e| e.to_string())? as f64;
    let b = throughput_per_watt(44.116_582_259_7, 80.0).map_err(|e| e.to_string())? as f64;
    check(rel(a, 3.971_937_546_3) <= 1e-6, format!("one stick: {a}"))?;
    check(rel(b, 0.551_457_278_2) <= 1e-6, format!("host: {b}"))?;
    Ok(format!("{a:.10} and {b:.10} img/W"))
}

fn synthetic_fleet(g: &Arc<NetworkGraph>, d: usize, ms: f32) -> Vec<DeviceHandle> {
    (0..d).map(|_| DeviceHandle::open(DeviceDescriptor::synthetic(ms), Arc::clone(g)).unwrap()).collect()
}

fn jobs(g: &NetworkGraph, n: usize) -> Vec<Job> {
    let x = Arc::new(Tensor::zeros(g.input_shape()));
    (0..n).map(|i| Job::new(i, i.to_string(), Arc::clone(&x))).collect()
}

fn scaling_curve() -> Outcome {
    let g = Arc::new(oracles::dense_graph(1, 4, 4, 10));
    let start = Instant::now();
    let mut rates = Vec::new();
    for d in [1usize, 2, 4, 8] {
        let fleet = synthetic_fleet(&g, d, 100.7);
        let r = run_batch(&fleet, &jobs(&g, 100 * d)).map_err(|e| e.to_string())?;
        rates.push((d, throughput(r.len(), r.wall_seconds).map_err(|e| e.to_string())?));
    }
    let factors = normalize_scaling(&rates, rates[0].1).map_err(|e| e.to_string())?;
    for &(d, f) in &factors {
        check((f - d as f32).abs() <= 0.05 * d as f32, format!("D={d}: factor {f:.3}"))?;
    }
    let f8 = factors[3].1;
    check(f8 >= 7.5, format!("D=8 factor {f8:.3}"))?;
    let took = start.elapsed();
    check(took < Duration::from_secs(300), format!("took {took:?}"))?;
    let shown: Vec<String> = factors.iter().map(|(_, f)| format!("{f:.3}")).collect();
    Ok(format!("factors [{}], {:.1} s", shown.join(", "), took.as_secs_f64()))
}

fn projection() -> Outcome {
    let pts = [(1, 9.9298), (2, 19.6802), (4, 38.8561), (8, 77.2176)];
    let p = project_linear(&pts, 16).map_err(|e| e.to_string())? as f64;
    check(rel(p, 153.0394) <= 0.02, format!("projected {p}"))?;
    Ok(format!("{p:.2} img/s at 16 devices ({:.2}% off)", rel(p, 153.0394) * 100.0))
}

fn ordering_under_chaos() -> Outcome {
    let g = Arc::new(oracles::dense_graph(1, 2, 2, 3));
    let js = jobs(&g, 1000);
    let start = Instant::now();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fleet: Vec<_> = (0..7)
            .map(|_| {
                let d = DeviceDescriptor::synthetic(rng.gen_range(0.0..1.0)).with_queue_capacity(rng.gen_range(1..=3));
                DeviceHandle::open(d, Arc::clone(&g)).unwrap()
            })
            .collect();
        let r = run_batch(&fleet, &js).map_err(|e| e.to_string())?;
        check(r.len() == 1000, format!("seed {seed}: {} results", r.len()))?;
        for (i, (res, job)) in r.results.iter().zip(&js).enumerate() {
            check(res.sample_id == job.sample_id, format!("seed {seed}: position {i} holds {}", res.sample_id))?;
            check(res.device_ordinal == i % 7, format!("seed {seed}: job {i} ran on {}", res.device_ordinal))?;
        }
    }
    let took = start.elapsed();
    check(took < Duration::from_secs(60), format!("took {took:?}"))?;
    Ok(format!("100 seeds x 1000 jobs over 7 devices, {:.1} s", took.as_secs_f64()))
}

fn fp16_fidelity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |exact: bool| -> Result<vpuflow_cli::SubsetAccuracy, String> {
        let sub = dir.path().join(if exact { "exact" } else { "default" });
        let spec = FixtureSpec { samples: 500, exact, ..FixtureSpec::default() };
        let files = cmd_gen_fixture(&sub, 0, &spec).map_err(|e| e.to_string())?;
        let cfg = RunConfig::load(&files.config).map_err(|e| e.to_string())?;
        Ok(cmd_accuracy(&cfg).map_err(|e| e.to_string())?.overall)
    };
    let d = run(false)?;
    check(d.top1_fp32 == 0.0, format!("FP32 top-1 error {}", d.top1_fp32))?;
    check(d.top1_fp16 <= 0.02, format!("FP16 top-1 error {}", d.top1_fp16))?;
    let diff = d.conf_diff.ok_or("no sample correct in both modes")?;
    check(diff <= 0.02, format!("confidence diff {diff}"))?;
    let e = run(true)?;
    check(e.top1_fp16 == 0.0 && e.top1_fp32 == 0.0, format!("exact fixture top-1 {} / {}", e.top1_fp32, e.top1_fp16))?;
    check(e.conf_diff == Some(0.0), format!("exact fixture confidence diff {:?}", e.conf_diff))?;
    Ok(format!("FP16 top-1 {:.3}, conf diff {diff:.2e}; exact fixture 0 and 0", d.top1_fp16))
}

fn inference_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_sum = 0.0f64;
    for trial in 0..200 {
        let (g, x) = oracles::random_graph(&mut rng);
        let got = forward_layers(&g, &x, PrecisionMode::Fp32).map_err(|e| e.to_string())?;
        let want = oracles::forward_oracle(&g, &x);
        for ((layer, a), b) in g.layers().iter().zip(&got).zip(&want) {
            let same = a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
            check(same, format!("graph {trial}, layer {} differs from oracle", layer.id()))?;
        }
        for mode in [PrecisionMode::Fp32, PrecisionMode::Fp16Layer, PrecisionMode::Fp16Strict] {
            let p = forward(&g, &x, mode).map_err(|e| e.to_string())?.confidences;
            let dev = (p.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs();
            worst_sum = worst_sum.max(dev);
            check(dev <= 1e-6, format!("graph {trial} {mode}: softmax sum off by {dev:e}"))?;
        }
    }
    Ok(format!("200 graphs bit-exact, worst softmax sum error {worst_sum:.1e}"))
}

fn overlap() -> Outcome {
    let g = Arc::new(oracles::dense_graph(1, 2, 2, 3));
    let limit = 2.0 * 0.050 + 0.010;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let fleet = [DeviceHandle::open(DeviceDescriptor::synthetic(50.0).with_queue_capacity(2), Arc::clone(&g)).unwrap()];
        let r = run_batch(&fleet, &jobs(&g, 2)).map_err(|e| e.to_string())?;
        worst = worst.max(r.wall_seconds);
        check(r.wall_seconds < limit, format!("makespan {:.1} ms", r.wall_seconds * 1e3))?;
    }
    Ok(format!("worst makespan {:.1} ms of 5 runs (limit 110 ms)", worst * 1e3))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("binary16 exhaustiveness", binary16_exhaustive),
        ("images per watt exactness", per_watt_exactness),
        ("scaling curve reproduction", scaling_curve),
        ("linear projection", projection),
        ("ordering under chaos", ordering_under_chaos),
        ("FP16 fidelity", fp16_fidelity),
        ("inference oracle", inference_oracle),
        ("load/execute overlap", overlap),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS  criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
