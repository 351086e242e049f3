use teamlearn::verify::{run_gradcheck_suite, run_oracle_suite};

#[test]
fn oracle_suite_on_other_seeds() {
    for seed in [2, 3] {
        let r = run_oracle_suite(seed, 300).unwrap();
        assert!(r.passes(1e-12, 1e-9), "{r:?}");
    }
}

#[test]
fn gradcheck_on_other_seeds() {
    for seed in [2, 3] {
        let r = run_gradcheck_suite(seed, 10, 1e-5).unwrap();
        assert!(r.parameters_checked > 100);
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}
