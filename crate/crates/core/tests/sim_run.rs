use std::collections::{BTreeMap, BTreeSet};

use oran_dsa::config::ScenarioConfig;
use oran_dsa::metrics::SlotRecord;
use oran_dsa::sim::{run_scenario, SweepAxis};
use oran_dsa::UeId;

fn config(sets: &[&str]) -> ScenarioConfig {
    let mut all = vec!["episodes=3", "slots_per_episode=20"];
    all.extend_from_slice(sets);
    ScenarioConfig::default().with_overrides(&all).unwrap()
}

fn recount_success(records: &[SlotRecord]) -> f64 {
    let mut total = 0.0;
    let mut slots = 0;
    for r in records {
        if r.ues.is_empty() {
            continue;
        }
        let mut sat = 0;
        for o in &r.ues {
            if o.satisfied {
                sat += 1;
            }
        }
        total += sat as f64 / r.ues.len() as f64;
        slots += 1;
    }
    100.0 * total / slots as f64
}

fn recount_jfi(records: &[SlotRecord]) -> f64 {
    let mut sat: BTreeMap<UeId, f64> = BTreeMap::new();
    let mut seen: BTreeMap<UeId, f64> = BTreeMap::new();
    for r in records {
        for o in &r.ues {
            *seen.entry(o.ue).or_default() += 1.0;
            *sat.entry(o.ue).or_default() += if o.satisfied { 1.0 } else { 0.0 };
        }
    }
    let x: Vec<f64> = seen.iter().map(|(u, n)| sat[u] / n).collect();
    let s: f64 = x.iter().sum();
    let s2: f64 = x.iter().map(|v| v * v).sum();
    100.0 * s * s / (x.len() as f64 * s2)
}

#[test]
fn summary_matches_brute_force_recount() {
    for fairness in ["none", "mpf", "rr", "pf"] {
        let cfg = config(&[&format!("fairness_scheme={fairness}")]);
        let (summary, records) = run_scenario(&cfg).unwrap();
        assert_eq!(summary.slot_count, 60);
        assert!((summary.success_rate_pct - recount_success(&records)).abs() < 1e-9);
        assert!((summary.jfi_pct - recount_jfi(&records)).abs() < 1e-9);
        let preemptions: usize = records.iter().map(|r| r.ues.iter().filter(|o| o.preempted).count()).sum();
        assert_eq!(summary.preemptions, preemptions);
        if fairness == "none" {
            assert_eq!(preemptions, 0);
        }
    }
}

#[test]
fn slot_records_respect_model_constraints() {
    let cfg = config(&["coloring_scheme=random"]);
    let (summary, records) = run_scenario(&cfg).unwrap();
    for ep in &summary.episodes {
        let slots: Vec<&SlotRecord> = records.iter().filter(|r| r.episode == ep.episode).collect();
        assert_eq!(slots.len(), 20);
        let population: BTreeSet<UeId> = slots[0].ues.iter().map(|o| o.ue).collect();
        assert_eq!(population.len(), ep.ue_count);
        for r in slots {
            assert_eq!(r.numerology, ep.numerology);
            assert_eq!(r.ues.iter().map(|o| o.ue).collect::<BTreeSet<_>>(), population);
            let mut used = BTreeSet::new();
            for o in &r.ues {
                match o.prb {
                    Some(p) => {
                        assert!(p < ep.prb_count);
                        assert!(used.insert((o.ru, p)), "two UEs on RU {} PRB {p}", o.ru);
                        assert!(o.rate_bps > 0.0);
                    }
                    None => {
                        assert_eq!(o.rate_bps, 0.0);
                        assert!(!o.satisfied);
                    }
                }
            }
            assert_eq!(r.colored + r.uncolored, r.ues.len());
        }
    }
}

#[test]
fn identical_seeds_reproduce_and_seeds_differ() {
    let a = run_scenario(&config(&["seed=5"])).unwrap();
    let b = run_scenario(&config(&["seed=5"])).unwrap();
    let c = run_scenario(&config(&["seed=6"])).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
}

#[test]
fn sweep_axes_rewrite_the_config() {
    let base = config(&[]);
    let cfg = SweepAxis::Numerology.apply(&base, "3").unwrap();
    assert_eq!(cfg.numerology_override, Some(3));
    let (summary, _) = run_scenario(&cfg).unwrap();
    assert!(summary.numerology_trace().iter().all(|&m| m == 3));
    assert!(SweepAxis::Numerology.apply(&base, "9").is_err());
    assert!(SweepAxis::ColoringScheme.apply(&base, "tabu").is_err());
    let cfg = SweepAxis::UeCount.apply(&base, "9").unwrap();
    let (summary, _) = run_scenario(&cfg).unwrap();
    assert!(summary.episodes.iter().all(|e| e.ue_count == 9));
}
