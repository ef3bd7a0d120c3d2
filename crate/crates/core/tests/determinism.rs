use ebcc::harness::{csv_string, parse_config, run_experiment, ExperimentConfig};

fn config(text: &str) -> ExperimentConfig {
    parse_config(text).unwrap()
}

fn csv_with_threads(cfg: &ExperimentConfig, threads: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| csv_string(&run_experiment(cfg).unwrap()))
}

#[test]
fn zstat_is_thread_invariant() {
    let cfg = config(
        "experiment = zstat\nm = 30\nnonnull = 6\namplitude = 3\nalpha = 0.1\nalpha0 = 0.01\nreplications = 6\nseed = 5\n",
    );
    let one = csv_with_threads(&cfg, 1);
    assert_eq!(one, csv_with_threads(&cfg, 4));
    assert_eq!(one, csv_with_threads(&cfg, 1));
}

#[test]
fn outlier_is_thread_invariant() {
    let cfg = config(
        "experiment = outlier\nm = 30\nn = 40\npi1 = 0.2\ndim = 5\nn_centers = 5\noutlier_a = 3\nn_holdout = 60\n\
         alpha = 0.2\nalpha0 = 0.02\nreplications = 3\nseed = 8\n",
    );
    assert_eq!(csv_with_threads(&cfg, 1), csv_with_threads(&cfg, 3));
}

#[test]
fn seeds_change_the_output() {
    let text = "experiment = zstat\nm = 30\nnonnull = 6\namplitude = 3\nalpha = 0.1\nreplications = 4\nseed = ";
    let a = csv_with_threads(&config(&format!("{text}1\n")), 2);
    let b = csv_with_threads(&config(&format!("{text}2\n")), 2);
    assert_ne!(a, b);
}
