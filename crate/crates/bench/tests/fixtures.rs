use misclass_bench::{case_control, linear};
use misclass_core::covariate_mc::ConditionalModel;

#[test]
fn fixtures_are_fit_ready() {
    for fixture in [linear(100, 1), linear(1000, 2), case_control()] {
        fixture.dataset.validate_for(&fixture.spec).unwrap();
        let model = ConditionalModel::new(&fixture.dataset, &fixture.spec).unwrap();
        let observed: Vec<u8> = fixture.dataset.mc_observed().iter().map(|w| w.unwrap()).collect();
        assert!(model.fit(&observed).unwrap().log_marginal_likelihood.is_finite());
    }
}

#[test]
fn linear_fixture_is_seeded() {
    assert_eq!(linear(50, 9).dataset, linear(50, 9).dataset);
    assert_ne!(linear(50, 9).dataset, linear(50, 10).dataset);
}
