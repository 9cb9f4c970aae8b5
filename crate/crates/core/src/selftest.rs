//! Seeded property checks over the whole stack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjuster::AdjustState;
use crate::backend::Backend;
use crate::fixedformat::{quantize, FixedFormat};
use crate::flexformat::{encode, FlexValue, FormatDescriptor};
use crate::mul::{multiply, MulMode};
use crate::oracle::{descriptors_up_to, exhaustive_check};
use crate::par::Execution;
use crate::pde::{heat1d_run, swe2d_init, swe2d_step, FluxUnits, HeatConfig, HeatInit, Storage, SweConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, failure: Option<String>, ok_detail: String) -> CheckOutcome {
    match failure {
        Some(detail) => CheckOutcome { name, passed: false, detail },
        None => CheckOutcome { name, passed: true, detail: ok_detail },
    }
}

fn random_pair(rng: &mut ChaCha8Rng, pool: &[FormatDescriptor]) -> (FlexValue, FlexValue) {
    let d = pool[rng.random_range(0..pool.len())];
    loop {
        let a = FlexValue::from_bits(rng.random_range(0..1u64 << d.total_bits()), d);
        let b = FlexValue::from_bits(rng.random_range(0..1u64 << d.total_bits()), d);
        if let (Ok(a), Ok(b)) = (a, b) {
            return (a, b);
        }
    }
}

fn arithmetic_properties(seed: u64, samples: usize) -> Vec<CheckOutcome> {
    let pool: Vec<FormatDescriptor> = descriptors_up_to(16).into_iter().filter(|d| d.total_bits() >= 8).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sign, mut comm, mut order) = (None, None, None);
    for _ in 0..samples {
        let (a, b) = random_pair(&mut rng, &pool);
        for mode in [MulMode::Approx, MulMode::Exact] {
            let ab = multiply(&a, &b, mode).expect("shared descriptor");
            let ba = multiply(&b, &a, mode).expect("shared descriptor");
            if ab.value.sign() != (a.sign() ^ b.sign()) && sign.is_none() {
                sign = Some(format!("{a} * {b} ({mode:?}) gave sign {}", ab.value.sign()));
            }
            if ab != ba && comm.is_none() {
                comm = Some(format!("{a} * {b} ({mode:?}) differs from swapped"));
            }
        }
        let ex = multiply(&a, &b, MulMode::Exact).expect("shared descriptor").value.to_f64().abs();
        let ap = multiply(&a, &b, MulMode::Approx).expect("shared descriptor").value.to_f64().abs();
        if ap > ex && order.is_none() {
            order = Some(format!("{a} * {b}: approx {ap} > exact {ex}"));
        }
    }
    let ok = format!("{samples} random pairs, both modes");
    vec![
        outcome("sign-xor", sign, ok.clone()),
        outcome("commutativity", comm, ok.clone()),
        outcome("approx-le-exact", order, ok),
    ]
}

fn roundtrip_and_quantization(seed: u64, samples: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151);
    let mut failure = None;
    let mut words = 0u64;
    for d in descriptors_up_to(12) {
        for w in 0..1u64 << d.total_bits() {
            let Ok(v) = FlexValue::from_bits(w, d) else { continue };
            words += 1;
            let (back, flags) = encode(v.to_f64(), d);
            if back != v || (flags.inexact && !v.is_sentinel()) {
                failure.get_or_insert(format!("{d}: {v} re-encodes as {back}"));
            }
        }
    }
    for _ in 0..samples {
        let (e, m) = (rng.random_range(2..=8u32), rng.random_range(1..=20u32));
        let f = FixedFormat::new(e, m).expect("in range");
        let d = FormatDescriptor::new(e, m, 0, 0).expect("in range");
        let x = rng.random_range(-30.0..30.0f64).exp2() * if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let (v, fv) = encode(x, d);
        let (q, fq) = quantize(x, f);
        let same = (v.to_f64() == q || (v.to_f64().is_infinite() && q.is_infinite()))
            && v.to_f64().is_sign_negative() == q.is_sign_negative()
            && fv == fq;
        if !same {
            failure.get_or_insert(format!("{x} under {d}: {} {fv:?} vs {q} {fq:?}", v.to_f64()));
        }
    }
    outcome(
        "roundtrip-quantization",
        failure,
        format!("{words} encodings round-tripped, {samples} values against the ExMy quantizer"),
    )
}

fn adjuster_properties(seed: u64, streams: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xad7);
    let d: FormatDescriptor = "<3,9,3>".parse().expect("valid");
    let mut failure = None;
    let mut total_events = 0;
    for _ in 0..streams {
        let xs: Vec<(f64, f64)> = (0..200)
            .map(|_| (rng.random_range(-12.0..12.0f64).exp2(), rng.random_range(-12.0..12.0f64).exp2()))
            .collect();
        let run = || {
            let mut s = AdjustState::new(d);
            let mut ks = Vec::new();
            for (i, &(x, y)) in xs.iter().enumerate() {
                s.set_step(i as u64);
                s.multiply_adaptive(x, y).expect("single descriptor");
                ks.push(s.descriptor().k());
            }
            (ks, s.events().to_vec())
        };
        let (ks, events) = run();
        if ks.iter().any(|&k| k > d.fx()) {
            failure.get_or_insert(format!("k left [0, {}]: {ks:?}", d.fx()));
        }
        if events.iter().any(|e| e.old_k.abs_diff(e.new_k) != 1) {
            failure.get_or_insert("an event moved k by other than one bit".into());
        }
        if run() != (ks, events.clone()) {
            failure.get_or_insert("event log not deterministic".into());
        }
        total_events += events.len();
    }
    outcome("adjuster-bounds-determinism", failure, format!("{streams} streams, {total_events} events"))
}

fn heat_maximum_principle() -> CheckOutcome {
    let mut failure = None;
    for init in [HeatInit::Sin, HeatInit::Exp] {
        let cfg = HeatConfig {
            n: 128,
            steps: 400,
            amplitude: 3.0,
            storage: Storage::Binary64,
            snapshots: (0..=400).collect(),
            ..HeatConfig::new(init, Backend::Binary64)
        };
        let run = heat1d_run(&cfg).expect("valid config");
        let maxes: Vec<f64> = run.snapshots.iter().map(|s| s.fields.max_abs()).collect();
        if let Some(i) = maxes.windows(2).position(|w| w[1] > w[0]) {
            failure.get_or_insert(format!("{init:?}: max|u| grew at step {}", i + 1));
        }
    }
    outcome("heat-maximum-principle", failure, "sin and exp, 400 binary64 steps".into())
}

fn swe_properties() -> Vec<CheckOutcome> {
    let mut flat = SweConfig { nx: 32, ny: 24, ..SweConfig::new(Backend::Binary64) };
    flat.init.amplitude = 0.0;
    let s0 = swe2d_init(&flat).expect("valid config");
    let mut units = FluxUnits::new(Backend::Binary64);
    let mut s = s0.clone();
    for _ in 0..100 {
        s = swe2d_step(&s, &flat, &mut units);
    }
    let drift = (0..s.h.len())
        .map(|k| ((s.h[k] - s0.h[k]) / s0.h[k]).abs().max(s.hu[k].abs()).max(s.hv[k].abs()))
        .fold(0.0, f64::max);
    let rest = outcome(
        "swe-lake-at-rest",
        (drift > 1e-12).then(|| format!("state drifted by {drift:e}")),
        format!("max drift {drift:e} after 100 steps"),
    );

    let cfg = SweConfig { nx: 32, ny: 24, ..SweConfig::new(Backend::Binary64) };
    let mut s = swe2d_init(&cfg).expect("valid config");
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let start = s.mass(cfg.dx, cfg.dy);
        for _ in 0..100 {
            s = swe2d_step(&s, &cfg, &mut units);
        }
        worst = worst.max((s.mass(cfg.dx, cfg.dy) - start).abs() / start);
    }
    let full = SweConfig::new(Backend::Binary64);
    let full_mass = swe2d_init(&full).expect("valid config").mass(full.dx, full.dy);
    let init_err = (full_mass - full.analytic_mass()).abs() / full.analytic_mass();
    let mass = outcome(
        "swe-mass-conservation",
        (worst > 1e-10 || init_err > 1e-3).then(|| format!("drift {worst:e} per 100 steps, initial {init_err:e}")),
        format!("drift {worst:e} per 100 steps, initial vs analytic {init_err:e}"),
    );
    vec![rest, mass]
}

fn oracle_equivalence() -> CheckOutcome {
    match exhaustive_check(9, Execution::Parallel) {
        Ok(r) => outcome(
            "oracle-exhaustive",
            (!r.passed()).then(|| format!("{} mismatches, e.g. {:?}", r.mismatches, r.examples.first())),
            format!("{} descriptors, {} pairs, bit-exact", r.descriptors, r.pairs),
        ),
        Err(e) => outcome("oracle-exhaustive", Some(e.to_string()), String::new()),
    }
}

/// Every property check, in a fixed order.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    let mut out = vec![oracle_equivalence()];
    out.extend(arithmetic_properties(seed, 200_000));
    out.push(roundtrip_and_quantization(seed, 200_000));
    out.push(adjuster_properties(seed, 200));
    out.push(heat_maximum_principle());
    out.extend(swe_properties());
    out
}
