//! Fixtures shared by the engine benchmarks.

use misclass_core::datasets::hsv_main_study;
use misclass_core::simulate::{simulate_covariate_mc, CovariateNoise, CovariateSimParams};
use misclass_core::{Dataset, ExposureModel, Family, GlmSpec, MisclassMatrix, MisclassModel};

/// A dataset with its regression model, misclassification model and exposure model.
pub struct Fixture {
    pub dataset: Dataset,
    pub spec: GlmSpec,
    pub mc_model: MisclassModel,
    pub exposure: ExposureModel,
}

/// Linear model with one misclassified covariate and one exact covariate.
pub fn linear(n: usize, seed: u64) -> Fixture {
    let mut params = CovariateSimParams::reference(seed);
    params.n = n;
    let dataset = simulate_covariate_mc(&params, CovariateNoise::Misclassified).expect("valid parameters");
    Fixture {
        dataset,
        spec: GlmSpec::new(Family::Gaussian, "y").with_mc_covariate("w").with_covariates(["z"]),
        mc_model: MisclassModel::Uniform(params.matrix),
        exposure: ExposureModel::logistic(-0.5, vec![0.25], vec!["z".into()]).expect("finite coefficients"),
    }
}

/// Case-control logistic model with a nondifferential misclassification matrix.
pub fn case_control() -> Fixture {
    Fixture {
        dataset: hsv_main_study().expect("embedded data"),
        spec: GlmSpec::new(Family::BernoulliLogit, "y").with_mc_covariate("w"),
        mc_model: MisclassModel::Uniform(MisclassMatrix::new([[0.78, 0.22], [0.35, 0.65]]).expect("stochastic rows")),
        exposure: ExposureModel::constant(0.5).expect("probability in (0, 1)"),
    }
}
