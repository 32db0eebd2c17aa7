//! Seeded synthetic streams in the ingestion formats, for demos and tests.
//!
//! CAN traffic: ten ids (`id1`..`id10`) sent round-robin, each carrying two
//! smooth periodic signals, giving the twenty snapshot columns. Battery
//! data: discharge cycles whose capacity fades with cycle number.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::battery::{DischargeCycle, Measurement};
use super::can::{AttackKind, CanMessage, Label, SignalEntry, SignalMap, CAN_COLUMNS};

const CAN_IDS: usize = CAN_COLUMNS / 2;
const MESSAGE_PERIOD_S: f64 = 0.001;
pub const ATTACK_EPISODE: usize = 48;

/// `idK` signals 1 and 2 map to columns `2(K-1)` and `2(K-1)+1`.
pub fn can_signal_map() -> SignalMap {
    let entries = (0..CAN_IDS)
        .flat_map(|k| {
            (0..2).map(move |s| SignalEntry { id: format!("id{}", k + 1), signal: s + 1, column: 2 * k + s })
        })
        .collect();
    SignalMap::new(entries).expect("bijective by construction")
}

fn clean_signal(id: usize, signal: usize, t: f64) -> f32 {
    let freq = 0.5 + 0.37 * id as f64 + 0.11 * signal as f64;
    let phase = 1.3 * id as f64 + 0.7 * signal as f64;
    (0.5 + 0.35 * (std::f64::consts::TAU * freq * t + phase).sin()) as f32
}

/// `messages` normal messages with one attack episode per entry of
/// `attacks`, spread over the second half of the stream.
pub fn can_stream(seed: u64, messages: usize, attacks: &[AttackKind]) -> Vec<CanMessage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = |rng: &mut ChaCha8Rng| rng.gen_range(-0.01f32..0.01);
    let mut starts: Vec<(usize, AttackKind)> = attacks
        .iter()
        .enumerate()
        .map(|(i, &k)| (messages / 2 + (i * messages / 2) / attacks.len().max(1), k))
        .collect();
    starts.sort_unstable();
    let mut history: Vec<Vec<[f32; 2]>> = vec![Vec::new(); CAN_IDS];
    let mut out = Vec::with_capacity(messages + ATTACK_EPISODE * attacks.len());
    for n in 0..messages {
        let t = n as f64 * MESSAGE_PERIOD_S;
        let id = n % CAN_IDS;
        let mut values = [0, 1].map(|s| (clean_signal(id, s, t) + noise(&mut rng)).clamp(0.0, 1.0));
        let episode = starts.iter().find(|(s, _)| (*s..*s + ATTACK_EPISODE).contains(&n));
        let mut label = Label::Normal;
        if let Some(&(start, kind)) = episode {
            let target = start % CAN_IDS;
            label = Label::Attack(Some(kind));
            if id == target || kind == AttackKind::Flooding {
                match kind {
                    AttackKind::Plateau => values[0] = 0.95,
                    AttackKind::ContinuousChange => {
                        let drift = (n - start) as f32 / ATTACK_EPISODE as f32;
                        values[0] = (values[0] + 0.5 * drift).clamp(0.0, 1.0);
                    }
                    AttackKind::Playback => {
                        let h = &history[id];
                        if !h.is_empty() {
                            values = h[(n - start) / CAN_IDS % h.len()];
                        }
                    }
                    AttackKind::Suppress => continue,
                    AttackKind::Flooding => {
                        out.push(CanMessage::new(label, t, format!("id{}", target + 1), [Some(0.0), Some(0.0), None, None]));
                    }
                }
            }
        }
        if history[id].len() < 64 {
            history[id].push(values);
        }
        out.push(CanMessage::new(label, t, format!("id{}", id + 1), [Some(values[0]), Some(values[1]), None, None]));
    }
    out
}

/// Rated capacity of the synthetic cells, in Ah.
pub const RATED_CAPACITY: f64 = 2.0;

/// `cycles` discharge cycles of at least `min_rows` measurements each.
pub fn discharge_cycles(seed: u64, cycles: usize, min_rows: usize) -> Vec<DischargeCycle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cycles)
        .map(|c| {
            let age = c as f64 / cycles.max(1) as f64;
            let capacity = RATED_CAPACITY * (1.0 - 0.3 * age) + rng.gen_range(-0.01..0.01);
            let rows = min_rows + rng.gen_range(0..=min_rows / 2);
            let current = -2.0 + rng.gen_range(-0.02..0.02);
            let duration = 3600.0 * capacity / 2.0;
            let mut time = 0.0;
            let measurements = (0..rows)
                .map(|i| {
                    let frac = i as f64 / (rows - 1) as f64;
                    let m = Measurement {
                        time,
                        voltage: 4.2 - 0.6 * frac - 0.9 * frac.powi(6) + rng.gen_range(-0.005..0.005),
                        current: current + rng.gen_range(-0.005..0.005),
                        temperature: 24.0 + 10.0 * frac * (1.0 + age) + rng.gen_range(-0.1..0.1),
                    };
                    time += duration / (rows - 1) as f64 * rng.gen_range(0.9..1.1);
                    m
                })
                .collect();
            DischargeCycle { id: format!("cycle{}", c + 1), capacity, measurements }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipelines::can::build_can_windows;
    use crate::pipelines::battery::build_battery_windows;

    #[test]
    fn streams_are_valid_and_seeded() {
        let s = can_stream(1, 600, &AttackKind::ALL);
        assert_eq!(s, can_stream(1, 600, &AttackKind::ALL));
        assert!(s.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        assert!(s.iter().all(|m| m.signals.iter().flatten().all(|v| (0.0..=1.0).contains(v))));
        for k in AttackKind::ALL {
            assert!(s.iter().any(|m| m.label == Label::Attack(Some(k))));
        }
        let w = build_can_windows(&s, &can_signal_map(), 24, 1).unwrap();
        assert_eq!(w.unmapped, 0);
        assert_eq!(w.set.features(), 20);
        assert!(!can_stream(3, 30, &[AttackKind::Playback]).is_empty());
    }

    #[test]
    fn battery_cycles_fade() {
        let c = discharge_cycles(2, 10, 40);
        assert!(c[0].capacity > c[9].capacity);
        assert!(c.iter().all(|c| c.measurements.len() >= 40));
        assert_eq!(build_battery_windows(&c, 20).unwrap().len(), 10);
    }
}
