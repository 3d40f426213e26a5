mod common;

#[test]
fn gradients_match_central_differences() {
    for (i, t) in common::tiny_instances(20).iter().enumerate() {
        let err = common::max_relative_error(t);
        assert!(err <= 1e-5, "instance {i}: relative error {err:e}");
    }
}
