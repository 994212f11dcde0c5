use halfhop::spectral::{monte_carlo_risk, r_reg, Arm, MonteCarloConfig};
use halfhop::synth::LatentModel;

fn model() -> LatentModel {
    LatentModel::diagonal(&[2.0, 1.0, 0.5, 0.25], &[0.5; 4], 0.1, 0.1).unwrap()
}

#[test]
fn stderr_shrinks_with_trials() {
    let m = model();
    let cfg = |trials| MonteCarloConfig {
        n: 150,
        trials,
        seed: 77,
        train_fraction: 0.5,
    };
    let few = monte_carlo_risk(&m, &cfg(4), Arm::Baseline, 1, 0.5).unwrap();
    let many = monte_carlo_risk(&m, &cfg(64), Arm::Baseline, 1, 0.5).unwrap();
    // 1/sqrt(trials) scaling predicts a ratio of 4
    let ratio = few.stderr / many.stderr;
    assert!((2.0..8.0).contains(&ratio), "ratio {ratio}");
    // trials are a prefix of one seed sequence
    assert_eq!(few.trial_risks[..], many.trial_risks[..4]);
}

#[test]
fn zero_rounds_match_the_closed_form() {
    let m = model();
    let cfg = MonteCarloConfig {
        n: 800,
        trials: 6,
        seed: 3,
        train_fraction: 0.5,
    };
    let base = monte_carlo_risk(&m, &cfg, Arm::Baseline, 0, 0.5).unwrap();
    let hh = monte_carlo_risk(&m, &cfg, Arm::HalfHop, 0, 0.5).unwrap();
    assert_eq!(base.trial_risks, hh.trial_risks);
    let pred = r_reg(m.sigma(), &m).unwrap();
    assert!((base.mean - pred).abs() / pred < 0.1, "{} vs {pred}", base.mean);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let m = model();
    let cfg = MonteCarloConfig {
        n: 100,
        trials: 5,
        seed: 1,
        train_fraction: 0.5,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| monte_carlo_risk(&m, &cfg, Arm::HalfHop, 3, 0.5).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let three = pool.install(|| monte_carlo_risk(&m, &cfg, Arm::HalfHop, 3, 0.5).unwrap());
    assert_eq!(one, three);
}
