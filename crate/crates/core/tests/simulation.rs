use survgame_core::simgen::{GammaSimConfig, GammaSimulator};

/// Censoring rate of 10⁶ draws (seed 0, split 9) at the default parameters.
/// Recompute with `cargo test --test simulation -- --ignored --nocapture`.
const REFERENCE_CENSORING_RATE: f64 = 0.681738;

fn censoring_rate(n: usize, split: u64) -> f64 {
    let sim = GammaSimulator::new(GammaSimConfig::default()).unwrap();
    let s = sim.sample(n, split).unwrap();
    s.events.iter().filter(|e| !**e).count() as f64 / n as f64
}

#[test]
#[ignore = "slow reference run"]
fn print_reference_censoring_rate() {
    println!(
        "reference censoring rate: {:.6}",
        censoring_rate(1_000_000, 9)
    );
}

#[test]
fn censoring_rate_matches_large_sample_reference() {
    let rate = censoring_rate(1000, 0);
    assert!(
        (rate - REFERENCE_CENSORING_RATE).abs() <= 0.05 * REFERENCE_CENSORING_RATE,
        "rate {rate} vs reference {REFERENCE_CENSORING_RATE}"
    );
}

#[test]
fn training_quantile_bins_are_roughly_balanced() {
    let sim = GammaSimulator::new(GammaSimConfig::default()).unwrap();
    let ds = sim.sample(2000, 0).unwrap().discretize(20).unwrap();
    let mut counts = vec![0usize; 20];
    for r in &ds.records {
        counts[r.time_bin - 1] += 1;
    }
    // 100 per bin up to ties at the edges
    assert!(
        counts.iter().all(|&c| (95..=105).contains(&c)),
        "{counts:?}"
    );
}
