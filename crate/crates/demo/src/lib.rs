//! WebAssembly bindings for the browser demo in `www/`.

use wasm_bindgen::prelude::*;

use smlmc::config::ExperimentConfig;
use smlmc::cost::WorkModel;
use smlmc::estimators::{run_mlmc, run_smlmc, EstimatorRun, Method};
use smlmc::models::{ModelKind, ModelSpec};
use smlmc::smoothing::{Smoother, SmootherKind};

fn js(e: smlmc::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Final-time solution values of `model` ("diffusion" or "burgers") for one
/// input value, followed by the quantity of interest as the last entry.
#[wasm_bindgen]
pub fn solver_field(model: &str, input: f64, cells: usize) -> Result<Vec<f64>, JsError> {
    let kind: ModelKind = model.parse().map_err(js)?;
    let spec = ModelSpec::preset(kind);
    let sol = spec.solve(input, cells).map_err(js)?;
    let q = smlmc::models::qoi(&sol.values, sol.dx, spec.qoi_scale, sol.grid);
    let mut out = sol.values;
    out.push(q);
    Ok(out)
}

/// Domain length of `model`, for drawing the field.
#[wasm_bindgen]
pub fn domain_length(model: &str) -> Result<f64, JsError> {
    Ok(match model.parse::<ModelKind>().map_err(js)? {
        ModelKind::Diffusion => smlmc::models::diffusion::LENGTH,
        ModelKind::Burgers => smlmc::models::burgers::LENGTH,
    })
}

/// The smoothing function `kind` ("giles" or "kde") sampled at `points`
/// values of `s` in `[-2, 2]`, as the smoothed indicator of `q <= 0` with
/// unit bandwidth.
#[wasm_bindgen]
pub fn smoother_curve(kind: &str, degree: usize, points: usize) -> Result<Vec<f64>, JsError> {
    let kind = match kind {
        "giles" => SmootherKind::Giles,
        "kde" => SmootherKind::Kde,
        "none" => SmootherKind::None,
        other => return Err(JsError::new(&format!("unknown smoother `{other}`"))),
    };
    let smoother = Smoother::new(kind, degree).map_err(js)?;
    let n = points.max(2);
    Ok((0..n)
        .map(|k| {
            let s = -2.0 + 4.0 * k as f64 / (n - 1) as f64;
            smoother.eval(0.0, s, 1.0)
        })
        .collect())
}

/// Result of one CDF estimation on the diffusion problem.
#[wasm_bindgen]
pub struct CdfRun {
    run: EstimatorRun,
}

#[wasm_bindgen]
impl CdfRun {
    pub fn nodes(&self) -> Vec<f64> {
        self.run.estimate.grid.nodes()
    }

    pub fn raw(&self) -> Vec<f64> {
        self.run.estimate.raw.clone()
    }

    pub fn processed(&self) -> Vec<f64> {
        self.run.estimate.processed.clone()
    }

    /// Cells times time steps over all samples.
    pub fn cost(&self) -> f64 {
        self.run.cost()
    }

    /// Samples taken at each level.
    pub fn samples_per_level(&self) -> Vec<f64> {
        self.run.levels.iter().map(|l| l.n_total as f64).collect()
    }

    pub fn label(&self) -> String {
        self.run.method.label()
    }
}

/// Estimates the diffusion QoI CDF with `method` (for example "mlmc",
/// "mlmc+kde" or "smlmc+kde-r8"), using at most `max_level` refinements.
#[wasm_bindgen]
pub fn estimate_cdf(method: &str, eps: f64, seed: u64, max_level: usize) -> Result<CdfRun, JsError> {
    let method: Method = method.parse().map_err(js)?;
    let mut config = ExperimentConfig::preset(ModelKind::Diffusion);
    config.work_model = WorkModel::Deterministic;
    config.mesh.l_star = max_level.min(config.mesh.l_star);
    let rc = config.run_config(method, eps, seed);
    let model = config.model_spec();
    let dist = config.distribution().map_err(js)?;
    let run = if method.strata > 1 {
        let strata = config.stratification(method.strata).map_err(js)?;
        run_smlmc(&model, &dist, &config.nodes, &strata, &rc)
    } else {
        run_mlmc(&model, &dist, &config.nodes, &rc)
    }
    .map_err(js)?;
    Ok(CdfRun { run })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoother_curves_are_sigmoids() {
        let g = smoother_curve("kde", 3, 101).unwrap();
        assert!((g[50] - 0.5).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] >= w[1]));
        let p = smoother_curve("giles", 1, 5).unwrap();
        assert_eq!(p, vec![1.0, 1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn field_carries_the_qoi() {
        let f = solver_field("diffusion", 2.0, 32).unwrap();
        assert_eq!(f.len(), 33 + 1);
        let q = *f.last().unwrap();
        assert!((14.0..28.0).contains(&q));
    }

    #[test]
    fn small_estimate() {
        let run = estimate_cdf("smlmc+kde-r8", 0.05, 1, 3).unwrap();
        assert_eq!(run.nodes().len(), run.raw().len());
        assert!(run.processed().windows(2).all(|w| w[0] <= w[1]));
        assert!(run.cost() > 0.0);
        assert!(run.samples_per_level().len() <= 4);
    }
}
