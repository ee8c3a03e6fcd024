//! Client side of the federated round.
//!
//! The dataset lives in a private field; the only thing that crosses the
//! client boundary is a [`ClientUpdate`] holding parameters and a residual
//! statistic. Server code cannot reach the samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::{
    layer_targets, LayerTemplate, Sample, Theta, TrainOptions, TrainingProblem,
};

/// A device holding its own data. The samples are deliberately private.
#[derive(Debug, Clone)]
pub struct Client {
    id: String,
    dataset: Vec<Sample>,
}

/// The wire message a client returns to its server: parameters and the local
/// VI residual, nothing else.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client_id: String,
    pub theta: Vec<Theta>,
    pub local_vi_residual: f64,
}

impl Client {
    pub fn new(id: impl Into<String>, dataset: Vec<Sample>) -> Self {
        Client { id: id.into(), dataset }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn has_data(&self) -> bool {
        !self.dataset.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.dataset.len()
    }

    fn problem(&self, template: &[LayerTemplate]) -> Result<TrainingProblem> {
        TrainingProblem::new(self.dataset.clone(), template.to_vec(), None)
    }

    /// Run `tau` local sweeps starting from the broadcast parameters and
    /// return only the trained parameters.
    pub fn local_train(
        &self,
        broadcast: &[Theta],
        template: &[LayerTemplate],
        tau: usize,
        gamma: f64,
    ) -> Result<ClientUpdate> {
        if tau == 0 {
            return Err(Error::Precondition("tau must be at least 1".into()));
        }
        if self.dataset.is_empty() {
            return Err(Error::Empty("client dataset"));
        }
        let problem = self.problem(template)?;
        let options = TrainOptions {
            gamma,
            tol: 0.0, // run exactly tau sweeps
            max_epochs: tau,
            ..TrainOptions::default()
        };
        let report = train_from(&problem, broadcast, &options)?;
        Ok(ClientUpdate {
            client_id: self.id.clone(),
            theta: report.0,
            local_vi_residual: report.1,
        })
    }

    /// VI residual of the given parameters on this client's data (the number
    /// is shipped to the server; the data is not).
    pub fn evaluate_vi(&self, theta: &[Theta], template: &[LayerTemplate]) -> Result<f64> {
        let problem = self.problem(template)?;
        let targets = layer_targets(&problem, None)?;
        let mut worst = 0.0_f64;
        for l in 0..problem.layer_count() {
            worst = worst.max(crate::training::vi_residual(&problem, &targets, theta, l)?);
        }
        Ok(worst)
    }

    /// Largest output mismatch of the given parameters on this client's data.
    pub fn evaluate_output_error(&self, theta: &[Theta], template: &[LayerTemplate]) -> Result<f64> {
        let problem = self.problem(template)?;
        let mut worst = 0.0_f64;
        for s in &problem.samples {
            let mut cur = s.input();
            for (l, lt) in template.iter().enumerate() {
                let lift = crate::training::AffineLift::new(cur);
                cur = lt.activation.apply(&lift.apply(&theta[l]));
            }
            worst = worst.max(crate::linalg::dist(&cur, &s.final_target()));
        }
        Ok(worst)
    }
}

/// `train` variant that starts from given parameters instead of zeros and
/// reports `(final thetas, worst layer VI residual)`.
fn train_from(
    problem: &TrainingProblem,
    start: &[Theta],
    options: &TrainOptions,
) -> Result<(Vec<Theta>, f64)> {
    if start.len() != problem.layer_count() {
        return Err(Error::dim(problem.layer_count(), start.len(), "broadcast parameters"));
    }
    let targets = layer_targets(problem, None)?;
    let mut thetas: Vec<Theta> = start.to_vec();
    for _ in 0..options.max_epochs {
        let mut worst = 0.0_f64;
        for l in 0..problem.layer_count() {
            let inputs: Vec<crate::linalg::Vector> = problem
                .samples
                .iter()
                .map(|s| {
                    let mut cur = s.input();
                    for k in 0..l {
                        let lift = crate::training::AffineLift::new(cur);
                        cur = problem.template[k].activation.apply(&lift.apply(&thetas[k]));
                    }
                    cur
                })
                .collect();
            let lifts: Vec<crate::training::AffineLift> =
                inputs.into_iter().map(crate::training::AffineLift::new).collect();
            let (next, grad) = crate::training::gd_step_shared(
                &thetas[l],
                &lifts,
                &targets.per_layer[l],
                &problem.omega[l],
                &problem.template[l].activation,
                options.gamma,
            )?;
            thetas[l] = next;
            worst = worst.max(grad);
        }
        if worst <= options.tol {
            break;
        }
    }
    let mut worst = 0.0_f64;
    for l in 0..problem.layer_count() {
        worst = worst.max(crate::training::vi_residual(problem, &targets, &thetas, l)?);
    }
    Ok((thetas, worst))
}
