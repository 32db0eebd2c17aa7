//! Randomized pipeline property checks against brute-force oracles. Each
//! returns the number of cases checked or the first counterexample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnnc_core::pipelines::battery::{sample_indices, MinMaxScaler};
use tnnc_core::pipelines::can::{build_can_windows, window_count, AttackKind, CanMessage, Label, SignalEntry, SignalMap};
use tnnc_core::pipelines::metrics::{compute_soh, eval_capacity, eval_detection, mae_score, select_threshold, Metric};

fn one_column_map() -> SignalMap {
    SignalMap::new(vec![SignalEntry { id: "m".into(), signal: 1, column: 0 }]).unwrap()
}

fn stream(labels: &[Label], ids: &[&str]) -> Vec<CanMessage> {
    labels
        .iter()
        .zip(ids)
        .enumerate()
        .map(|(i, (&l, &id))| CanMessage::new(l, i as f64, id, [Some((i % 7) as f32 / 7.0), None, None, None]))
        .collect()
}

pub fn window_count_law(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = one_column_map();
    let mut cases = 0;
    for _ in 0..600 {
        let n = rng.gen_range(1..=120);
        let stride = rng.gen_range(1..=10);
        let msgs = stream(&vec![Label::Normal; n], &vec!["m"; n]);
        let got = build_can_windows(&msgs, &map, 24, stride).map_err(|e| e.to_string())?.set.len();
        let mut brute = 0;
        let mut start = 0;
        while start + 24 <= n {
            brute += 1;
            start += stride;
        }
        let law = if n >= 24 { (n - 24) / stride + 1 } else { 0 };
        if got != brute || got != law || window_count(n, 24, stride) != law {
            return Err(format!("n={n} stride={stride}: built {got}, enumerated {brute}, law {law}"));
        }
        cases += 1;
    }
    Ok(cases)
}

/// Every attack/normal pattern up to length 10, windows 1..=4, strides
/// 1..=3, with unmapped messages sprinkled in.
pub fn label_soundness_exhaustive() -> Result<usize, String> {
    let map = one_column_map();
    let mut cases = 0;
    for n in 1..=10usize {
        for bits in 0u32..(1 << n) {
            let labels: Vec<Label> =
                (0..n).map(|i| if bits >> i & 1 == 1 { Label::Attack(None) } else { Label::Normal }).collect();
            // Every third message is unmapped; its label must not leak.
            let ids: Vec<&str> = (0..n).map(|i| if i % 3 == 2 { "x" } else { "m" }).collect();
            let rows: Vec<bool> = (0..n).filter(|i| ids[*i] == "m").map(|i| labels[i].is_attack()).collect();
            for window in 1..=4 {
                for stride in 1..=3 {
                    let built = build_can_windows(&stream(&labels, &ids), &map, window, stride).map_err(|e| e.to_string())?;
                    let mut start = 0;
                    let mut w = 0;
                    while start + window <= rows.len() {
                        let attack = rows[start..start + window].iter().any(|&a| a);
                        let got = Label::from_code(built.set.labels()[w]).unwrap().is_attack();
                        if got != attack {
                            return Err(format!("pattern {bits:b} window {window} stride {stride} #{w}: {got} vs {attack}"));
                        }
                        start += stride;
                        w += 1;
                    }
                    if w != built.set.len() {
                        return Err(format!("pattern {bits:b}: {} windows, expected {w}", built.set.len()));
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(cases)
}

/// One attack at 1-based position 25 of 48 lands in windows 2..=25.
pub fn single_attack_example() -> Result<usize, String> {
    let mut labels = vec![Label::Normal; 48];
    labels[24] = Label::Attack(Some(AttackKind::Plateau));
    let built = build_can_windows(&stream(&labels, &["m"; 48]), &one_column_map(), 24, 1).map_err(|e| e.to_string())?;
    let attacked: Vec<usize> =
        built.set.labels().iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(i, _)| i + 1).collect();
    if attacked != (2..=25).collect::<Vec<_>>() {
        return Err(format!("attack windows {attacked:?}"));
    }
    Ok(1)
}

pub fn scaler_round_trip(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0;
    for _ in 0..500 {
        let features = rng.gen_range(1..=6);
        let rows = rng.gen_range(2..=30);
        let scale: f64 = [1.0, 10.0, 1000.0][rng.gen_range(0..3)];
        let data: Vec<f64> = (0..rows * features).map(|_| rng.gen_range(-scale..scale)).collect();
        let s = MinMaxScaler::fit(features, data.chunks(features)).map_err(|e| e.to_string())?;
        let mut y = data.clone();
        s.apply(&mut y);
        if y.iter().any(|v| !(-1e-12..=1.0 + 1e-12).contains(v)) {
            return Err("scaled value outside [0, 1]".into());
        }
        s.invert(&mut y);
        for (a, b) in data.iter().zip(&y) {
            if (a - b).abs() > 1e-6 {
                return Err(format!("binary64 round trip {a} -> {b}"));
            }
        }
        // Binary32 scaler: bounded by a few ulps of the feature span.
        let d32: Vec<f32> = data.iter().map(|&v| v as f32).collect();
        let s32 = MinMaxScaler::fit(features, d32.chunks(features)).map_err(|e| e.to_string())?;
        let mut y32 = d32.clone();
        s32.apply(&mut y32);
        s32.invert(&mut y32);
        for (i, (a, b)) in d32.iter().zip(&y32).enumerate() {
            let f = i % features;
            let tol = 4.0 * f32::EPSILON * (s32.max[f].abs().max(s32.min[f].abs()));
            if (a - b).abs() > tol {
                return Err(format!("binary32 round trip {a} -> {b}"));
            }
        }
        cases += 1;
    }
    Ok(cases)
}

pub fn mae_against_scalar_oracle(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=480);
        let x: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let mut oracle = 0.0f64;
        for i in 0..n {
            oracle += (f64::from(x[i]) - f64::from(y[i])).abs();
        }
        oracle /= n as f64;
        let got = mae_score(&x, &y).map_err(|e| e.to_string())?;
        let cap = eval_capacity(&x, &y).map_err(|e| e.to_string())?;
        if (f64::from(got) - oracle).abs() > 1e-7 || got != cap {
            return Err(format!("mae {got} vs {oracle}"));
        }
        cases += 1;
    }
    Ok(cases)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn detection_against_tally(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0;
    for _ in 0..500 {
        let n = rng.gen_range(0..=60);
        let labels: Vec<Label> = (0..n)
            .map(|_| match rng.gen_range(0..8) {
                0..=2 => Label::Normal,
                7 => Label::Attack(None),
                k => Label::Attack(Some(AttackKind::ALL[k - 2])),
            })
            .collect();
        let flags: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let r = eval_detection(&flags, &labels).map_err(|e| e.to_string())?;
        let (mut tp, mut fp, mut fne) = (0, 0, 0);
        for i in 0..n {
            let a = labels[i] != Label::Normal;
            tp += usize::from(flags[i] && a);
            fp += usize::from(flags[i] && !a);
            fne += usize::from(!flags[i] && a);
        }
        if r.overall.precision.value() != ratio(tp, tp + fp) || r.overall.recall.value() != ratio(tp, tp + fne) {
            return Err(format!("overall mismatch: {:?}", r.overall));
        }
        let mut precisions = Vec::new();
        let mut recalls = Vec::new();
        for kind in AttackKind::ALL {
            let this = Label::Attack(Some(kind));
            let (mut ktp, mut kfp, mut kfn, mut present) = (0, 0, 0, false);
            for i in 0..n {
                if labels[i] == this {
                    present = true;
                    ktp += usize::from(flags[i]);
                    kfn += usize::from(!flags[i]);
                } else if labels[i] == Label::Normal {
                    kfp += usize::from(flags[i]);
                }
            }
            match (present, r.per_kind.get(&kind)) {
                (false, None) => {}
                (true, Some(m)) => {
                    if m.precision.value() != ratio(ktp, ktp + kfp) || m.recall.value() != ratio(ktp, ktp + kfn) {
                        return Err(format!("{kind} mismatch"));
                    }
                    precisions.extend(ratio(ktp, ktp + kfp));
                    recalls.extend(ratio(ktp, ktp + kfn));
                }
                _ => return Err(format!("{kind} presence mismatch")),
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        if !r.per_kind.is_empty() {
            let close = |m: Metric, want: Option<f64>| match (m.value(), want) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                (None, None) => true,
                _ => false,
            };
            if !close(r.mean_precision, mean(&precisions)) || !close(r.mean_recall, mean(&recalls)) {
                return Err("mean mismatch".into());
            }
        }
        cases += 1;
    }
    Ok(cases)
}

pub fn threshold_nearest_rank(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=200);
        let scores: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = rng.gen_range(1..=100usize);
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = (m * n).div_ceil(100);
        let got = select_threshold(&scores, m as f64 / 100.0).map_err(|e| e.to_string())?;
        if got != sorted[rank - 1] {
            return Err(format!("n={n} q={m}%: {got} vs {}", sorted[rank - 1]));
        }
        cases += 1;
    }
    let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
    if select_threshold(&hundred, 0.99).ok() != Some(99.0) {
        return Err("1..100 at 0.99 is not 99".into());
    }
    Ok(cases + 1)
}

pub fn soh_boundary(seed: u64) -> Result<usize, String> {
    let at = compute_soh(1.6, 2.0).map_err(|e| e.to_string())?;
    if at.soh != 0.8 || at.replace {
        return Err(format!("boundary case {at:?}"));
    }
    let below = compute_soh(0.8f64.next_down(), 1.0).map_err(|e| e.to_string())?;
    if !below.replace {
        return Err("just below 0.8 must flag".into());
    }
    if compute_soh(1.0, 0.0).is_ok() || compute_soh(1.0, -2.0).is_ok() {
        return Err("non-positive rating accepted".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..500 {
        let rated = rng.gen_range(0.5..3.0);
        let cmax = rng.gen_range(0.0..3.0);
        let r = compute_soh(cmax, rated).map_err(|e| e.to_string())?;
        if r.replace != (cmax / rated < 0.8) {
            return Err(format!("{cmax}/{rated}"));
        }
    }
    Ok(503)
}

pub fn battery_indices() -> Result<usize, String> {
    let mut cases = 0;
    for samples in 2..=25 {
        for n in samples..=300 {
            let idx = sample_indices(n, samples);
            for (i, &k) in idx.iter().enumerate() {
                let exact = (i * (n - 1)) as f64 / (samples - 1) as f64;
                if k != exact.round() as usize {
                    return Err(format!("n={n} samples={samples} i={i}: {k} vs {exact}"));
                }
            }
            cases += 1;
        }
    }
    Ok(cases)
}
