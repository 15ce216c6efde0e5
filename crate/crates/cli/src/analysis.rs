//! Naive, adjusted and true-covariate fits of one dataset.

use misclass_core::covariate_mc::ConditionalModel;
use misclass_core::glm::{design_matrix, fit_conjugate_linear, fit_laplace_glm, LaplaceFamily};
use misclass_core::latent_gaussian::{fit_latent_gaussian, LatentGaussianModel};
use misclass_core::response_mc::{
    fit_response_mc, marginalize_sens_spec, success_probability_summary, SensSpecGrid, Target,
};
use misclass_core::{
    run_importance_sampling, ConditionalFit, Dataset, ExposureModel, Family, GlmSpec, MisclassModel, NoisePrior,
    SamplerConfig,
};

use crate::config::{FamilyName, ModelConfig};
use crate::error::Result;
use crate::report::ModelSummary;

/// Fits of one dataset, plus the per-draw traces that were asked for.
#[derive(Debug, Default)]
pub struct Fitted {
    pub models: Vec<ModelSummary>,
    /// `(file stem, CSV bytes)` per importance-sampled fit.
    pub traces: Vec<(String, Vec<u8>)>,
}

impl Fitted {
    pub fn extend(&mut self, other: Fitted) {
        self.models.extend(other.models);
        self.traces.extend(other.traces);
    }
}

/// Fit of the regression model taking the data at face value.
pub fn direct_fit(dataset: &Dataset, spec: &GlmSpec) -> Result<ConditionalFit> {
    let design = design_matrix(dataset, spec, None)?;
    let prior = spec.prior_variances()?;
    Ok(match spec.family {
        Family::Gaussian => fit_conjugate_linear(&design, dataset.response(), &prior, spec.noise_prior)?,
        family => fit_laplace_glm(&design, dataset.response(), LaplaceFamily::from_family(family)?, &prior)?,
    })
}

/// The naive fit uses the rows where the error-prone covariate is observed.
pub fn naive_fit(dataset: &Dataset, spec: &GlmSpec) -> Result<ConditionalFit> {
    if spec.mc_covariate.is_some() && dataset.missing_count() > 0 {
        direct_fit(&dataset.complete_cases(), spec)
    } else {
        direct_fit(dataset, spec)
    }
}

fn without_response_adjustment(spec: &GlmSpec) -> GlmSpec {
    let mut naive = spec.clone();
    if let Family::BernoulliSslogit { .. } = naive.family {
        naive.family = Family::BernoulliLogit;
    }
    naive
}

/// Importance-sampling inputs for a model with an error-prone covariate.
pub struct CovariateAdjustment<'a> {
    pub mc_model: &'a MisclassModel,
    pub exposure: &'a ExposureModel,
    pub sampler: SamplerConfig,
}

/// Sampled fit labelled `variant`, with its trace when requested.
pub fn adjusted_fit(
    dataset: &Dataset,
    spec: &GlmSpec,
    adjustment: &CovariateAdjustment,
    variant: &str,
    replicate: usize,
    trace: bool,
) -> Result<Fitted> {
    let posterior = run_importance_sampling(dataset, spec, adjustment.mc_model, adjustment.exposure, &adjustment.sampler)?;
    let levels = &adjustment.sampler.quantile_levels;
    let mut fitted = Fitted {
        models: vec![ModelSummary::from_weighted(variant, replicate, &posterior, levels)?],
        traces: Vec::new(),
    };
    if trace {
        let mut bytes = Vec::new();
        posterior.write_trace(&mut bytes)?;
        fitted.traces.push((format!("trace-{variant}-{replicate}"), bytes));
    }
    Ok(fitted)
}

/// Naive, adjusted and (when the truth is known) true-covariate fits of a
/// regression with a misclassified covariate.
pub fn covariate_models(
    dataset: &Dataset,
    spec: &GlmSpec,
    adjustment: &CovariateAdjustment,
    replicate: usize,
    trace: bool,
) -> Result<Fitted> {
    let names = spec.coefficient_names();
    let levels = &adjustment.sampler.quantile_levels;
    let naive_spec = without_response_adjustment(spec);
    let mut fitted = Fitted::default();
    fitted.models.push(ModelSummary::from_conditional(
        "naive",
        replicate,
        &names,
        &naive_fit(dataset, &naive_spec)?,
        levels,
    ));
    fitted.extend(adjusted_fit(dataset, spec, adjustment, "adjusted", replicate, trace)?);
    if let Some(truth) = dataset.truth() {
        let truth_fit = ConditionalModel::new(dataset, spec)?.fit(truth)?;
        fitted
            .models
            .push(ModelSummary::from_conditional("true-covariate", replicate, &names, &truth_fit, levels));
    }
    Ok(fitted)
}

/// Dataset whose response is the known true outcome.
fn with_true_response(dataset: &Dataset, covariates: &[String]) -> Result<Option<Dataset>> {
    let Some(truth) = dataset.truth() else { return Ok(None) };
    let response = truth.iter().map(|&t| f64::from(t)).collect();
    let mut out = Dataset::new(response, dataset.mc_observed().to_vec())?;
    for name in covariates {
        out = out.with_column(name.clone(), dataset.column(name)?.to_vec())?;
    }
    Ok(Some(out))
}

/// Adjusted-link fits of a misclassified binary response.
///
/// For intercept-only models the success probability `p_y` is reported in
/// place of the intercept.
pub fn response_models(
    dataset: &Dataset,
    spec: &GlmSpec,
    grid: Option<&SensSpecGrid>,
    levels: &[f64],
    replicate: usize,
) -> Result<Fitted> {
    let Family::BernoulliSslogit { pi00, pi11 } = spec.family else {
        return Err(crate::error::CliError::Config("response adjustment needs family bernoulli-sslogit".into()));
    };
    let names = spec.coefficient_names();
    let intercept_only = names.len() == 1;
    let mut summary_levels: Vec<f64> = vec![0.025, 0.975];
    summary_levels.extend(levels);
    let describe = |variant: &str, fit: &ConditionalFit| -> Result<ModelSummary> {
        if intercept_only {
            let p = success_probability_summary(fit, &[1.0], &summary_levels)?;
            ModelSummary::from_probability(variant, replicate, "p_y", &p, levels)
        } else {
            Ok(ModelSummary::from_conditional(variant, replicate, &names, fit, levels))
        }
    };

    let mut fitted = Fitted::default();
    fitted.models.push(describe("naive", &direct_fit(dataset, &without_response_adjustment(spec))?)?);
    let fixed = fit_response_mc(dataset, spec, pi00, pi11)?;
    let mut adjusted = describe("adjusted", &fixed.fit)?;
    adjusted.warnings.extend(fixed.warnings);
    fitted.models.push(adjusted);

    if let Some(grid) = grid {
        let mut merged_model: Option<ModelSummary> = None;
        let targets: Vec<(String, Target)> = if intercept_only {
            vec![("p_y".into(), Target::SuccessProbability(vec![1.0]))]
        } else {
            names.iter().enumerate().map(|(j, n)| (n.clone(), Target::Coefficient(j))).collect()
        };
        for (name, target) in targets {
            let merged = marginalize_sens_spec(dataset, spec, grid, &target)?;
            let part = ModelSummary::from_merged("grid", replicate, &name, &merged, levels)?;
            match &mut merged_model {
                None => merged_model = Some(part),
                Some(model) => {
                    model.coefficients.extend(part.coefficients);
                    for w in part.warnings {
                        if !model.warnings.contains(&w) {
                            model.warnings.push(w);
                        }
                    }
                }
            }
        }
        fitted.models.extend(merged_model);
    }

    if let Some(truth_data) = with_true_response(dataset, &spec.covariates)? {
        let truth_fit = direct_fit(&truth_data, &without_response_adjustment(spec))?;
        fitted.models.push(describe("true-response", &truth_fit)?);
    }
    Ok(fitted)
}

/// Naive regressions on the dichotomised proxy (and on the continuous proxy
/// when given) beside the latent Gaussian fit.
pub fn latent_models(
    dataset: &Dataset,
    model: &LatentGaussianModel,
    continuous_proxy: Option<&str>,
    true_exposure: Option<&[f64]>,
    replicate: usize,
) -> Result<Fitted> {
    let levels = &model.quantile_levels;
    let proxy_regression = |variant: &str, column: &[f64]| -> Result<ModelSummary> {
        let mut data = Dataset::response_only(dataset.response().to_vec())?.with_column("x_c", column.to_vec())?;
        for name in &model.response_covariates {
            data = data.with_column(name.clone(), dataset.column(name)?.to_vec())?;
        }
        let spec = GlmSpec::new(Family::Gaussian, "y")
            .with_covariates(std::iter::once("x_c".to_string()).chain(model.response_covariates.iter().cloned()))
            .with_prior_variance(vec![model.coefficient_prior_variance])
            .with_noise_prior(NoisePrior::default());
        let fit = direct_fit(&data, &spec)?;
        let mut names = spec.coefficient_names();
        names[0] = "(Intercept)".into();
        Ok(ModelSummary::from_conditional(variant, replicate, &names, &fit, levels))
    };

    let mut fitted = Fitted::default();
    let binary: Vec<f64> = dataset
        .mc_observed()
        .iter()
        .map(|w| w.map(f64::from).unwrap_or(f64::NAN))
        .collect();
    if binary.iter().all(|v| v.is_finite()) {
        fitted.models.push(proxy_regression("naive-binary", &binary)?);
    }
    if let Some(name) = continuous_proxy {
        fitted.models.push(proxy_regression("naive", dataset.column(name)?)?);
    }
    let fit = fit_latent_gaussian(dataset, model)?;
    fitted
        .models
        .push(ModelSummary::from_latent("adjusted", replicate, &fit, levels)?);
    if let Some(truth) = true_exposure {
        fitted.models.push(proxy_regression("true-covariate", truth)?);
    }
    Ok(fitted)
}

/// Settings shared by every fit of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub iterations: usize,
    pub seed: u64,
    pub quantile_levels: Vec<f64>,
    pub trace: bool,
}

/// All fits a model configuration asks for on one dataset.
pub fn fit_configured(config: &ModelConfig, dataset: &Dataset, settings: &RunSettings) -> Result<Fitted> {
    let levels = &settings.quantile_levels;
    match config.family {
        FamilyName::LatentGaussian => latent_models(
            dataset,
            &config.latent_model(),
            config.latent.as_ref().and_then(|l| l.continuous_proxy.as_deref()),
            None,
            0,
        ),
        _ if config.mc_covariate.is_some() => {
            let spec = config.glm_spec()?;
            let mc_model = config.mc_model()?;
            let exposure = config.exposure_model(dataset)?;
            let adjustment = CovariateAdjustment {
                mc_model: &mc_model,
                exposure: &exposure,
                sampler: SamplerConfig::new(settings.iterations, settings.seed).with_quantile_levels(levels.clone()),
            };
            covariate_models(dataset, &spec, &adjustment, 0, settings.trace)
        }
        FamilyName::BernoulliSslogit => {
            response_models(dataset, &config.glm_spec()?, config.sens_spec_grid()?.as_ref(), levels, 0)
        }
        _ => {
            let spec = config.glm_spec()?;
            let fit = direct_fit(dataset, &spec)?;
            Ok(Fitted {
                models: vec![ModelSummary::from_conditional(
                    "naive",
                    0,
                    &spec.coefficient_names(),
                    &fit,
                    levels,
                )],
                traces: Vec::new(),
            })
        }
    }
}
