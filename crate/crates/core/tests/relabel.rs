mod common;

use unlearn_lab::dataset::{build_world, make_splits, SplitConfig, WorldConfig};

#[test]
fn relabeled_tokens_are_uniform_and_independent_of_targets() {
    let world = build_world(3, &WorldConfig::default()).unwrap();
    let splits = make_splits(&world, &SplitConfig::default(), 3).unwrap();
    let stats = common::relabel_statistics(&splits.forget_set(), world.vocab(), 100_000, 17);
    assert!(stats.draws >= 100_000);
    assert!(stats.chi_square < stats.critical, "{stats:?}");
    let (lo, hi) = stats.collision_bounds;
    assert!(lo <= stats.collision_rate && stats.collision_rate <= hi, "{stats:?}");
}

#[test]
fn chi_square_critical_value_is_accurate() {
    // tabulated upper 0.001 points
    for (dof, want) in [(10.0, 29.588), (63.0, 103.442), (100.0, 149.449)] {
        let got = common::chi_square_critical_001(dof);
        assert!((got - want).abs() / want < 0.01, "dof {dof}: {got} vs {want}");
    }
}
