use super::{ModelState, PredictiveModel};
use crate::comms::SharedView;
use crate::error::{Error, Result};

/// One agent's execution-time copy of the model's recurrent state.
///
/// Parameters are shared; only `h`, `c`, the last completed joint vector and
/// the pending next-step prediction are per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentModelInstance {
    agent: usize,
    state: Option<ModelState>,
    estimate: Option<Vec<f64>>,
    prediction: Option<Vec<f64>>,
}

impl AgentModelInstance {
    /// A fresh instance. It must be reset before the first step.
    pub fn new(agent: usize) -> Self {
        AgentModelInstance {
            agent,
            state: None,
            estimate: None,
            prediction: None,
        }
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn state(&self) -> Option<&ModelState> {
        self.state.as_ref()
    }

    /// The last completed joint vector, if any.
    pub fn estimate(&self) -> Option<&[f64]> {
        self.estimate.as_deref()
    }

    /// `o + μ` from the last forward pass.
    pub fn prediction(&self) -> Option<&[f64]> {
        self.prediction.as_deref()
    }

    pub fn reset(&mut self, model: &PredictiveModel) {
        self.state = Some(model.zero_state(1));
        self.estimate = None;
        self.prediction = None;
    }

    /// Completes the view with carried predictions, advances the recurrent
    /// state on the completed vector and returns that vector.
    pub fn step(&mut self, model: &PredictiveModel, view: &SharedView) -> Result<Vec<f64>> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Protocol(format!("model instance {} stepped before reset", self.agent)))?;
        if view.agent != self.agent {
            return Err(Error::Protocol(format!(
                "view for agent {} given to instance {}",
                view.agent, self.agent
            )));
        }
        let dims = model.obs_dims();
        if view.slots.len() != dims.len() {
            return Err(Error::shape("instance_step", dims.len(), view.slots.len()));
        }
        let mut completed = Vec::with_capacity(model.joint_dim());
        for (j, (slot, &off)) in view.slots.iter().zip(model.offsets()).enumerate() {
            let d = dims[j];
            match slot {
                Some(o) if o.len() == d => completed.extend_from_slice(o),
                Some(o) => return Err(Error::shape("instance_step", d, o.len())),
                None => {
                    let pred = self.prediction.as_ref().ok_or_else(|| {
                        Error::Protocol(format!("agent {} has no prediction for missing slot {j}", self.agent))
                    })?;
                    completed.extend_from_slice(&pred[off..off + d]);
                }
            }
        }
        self.prediction = Some(model.predict_next(&completed, state)?);
        self.estimate = Some(completed.clone());
        Ok(completed)
    }

    /// Feeds the model its own point estimates for `k` steps from the current
    /// state. Row 0 is the stored next-step prediction. The instance is left
    /// untouched.
    pub fn rollout(&self, model: &PredictiveModel, k: usize) -> Result<Vec<Vec<f64>>> {
        if k < 1 {
            return Err(Error::InvalidArgument("rollout horizon must be at least 1".into()));
        }
        let (Some(state), Some(first)) = (&self.state, &self.prediction) else {
            return Err(Error::Protocol(format!("agent {} has not processed a step", self.agent)));
        };
        let mut state = state.clone();
        let mut out = vec![first.clone()];
        while out.len() < k {
            let next = model.predict_next(out.last().unwrap(), &mut state)?;
            out.push(next);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::comms::{shared_view, CommMask};
    use crate::envs::JointObservation;

    fn model() -> PredictiveModel {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        PredictiveModel::new(&[2, 3], 8, &mut rng).unwrap()
    }

    fn joint(t: usize) -> JointObservation {
        let t = t as f64;
        JointObservation(vec![vec![0.1 * t, -0.2], vec![0.3, 0.05 * t, 1.0]])
    }

    #[test]
    fn step_before_reset_is_an_error() {
        let m = model();
        let mut inst = AgentModelInstance::new(0);
        let view = shared_view(&joint(0), &CommMask::full(2), 0).unwrap();
        assert!(matches!(inst.step(&m, &view), Err(Error::Protocol(_))));
    }

    #[test]
    fn full_views_pass_through_exactly() {
        let m = model();
        let mut inst = AgentModelInstance::new(1);
        inst.reset(&m);
        for t in 0..6 {
            let j = joint(t);
            let view = shared_view(&j, &CommMask::full(2), 1).unwrap();
            assert_eq!(inst.step(&m, &view).unwrap(), j.concat());
        }
    }

    #[test]
    fn missing_slot_uses_previous_prediction() {
        let m = model();
        let mut inst = AgentModelInstance::new(0);
        inst.reset(&m);
        let j0 = joint(0);
        inst.step(&m, &shared_view(&j0, &CommMask::full(2), 0).unwrap()).unwrap();
        let pred = inst.prediction().unwrap().to_vec();

        let mut state = m.zero_state(1);
        let mu = m.predict_delta(&j0.concat(), &mut state).unwrap();

        let j1 = joint(1);
        let out = inst.step(&m, &shared_view(&j1, &CommMask::identity(2), 0).unwrap()).unwrap();
        assert_eq!(&out[..2], j1.agent(0));
        for k in 2..5 {
            assert_eq!(out[k], pred[k]);
            assert_eq!(out[k], j0.concat()[k] + mu[k]);
        }
    }

    #[test]
    fn reset_is_idempotent_and_zeroes_state() {
        let m = model();
        let mut inst = AgentModelInstance::new(0);
        inst.reset(&m);
        inst.step(&m, &shared_view(&joint(0), &CommMask::full(2), 0).unwrap()).unwrap();
        inst.reset(&m);
        let once = inst.clone();
        inst.reset(&m);
        assert_eq!(once, inst);
        assert!(inst.state().unwrap().is_zero());
        assert!(inst.estimate().is_none());
    }

    #[test]
    fn rollout_leaves_instance_untouched() {
        let m = model();
        let mut inst = AgentModelInstance::new(0);
        inst.reset(&m);
        assert!(inst.rollout(&m, 2).is_err());
        inst.step(&m, &shared_view(&joint(0), &CommMask::full(2), 0).unwrap()).unwrap();
        let before = inst.clone();
        let traj = inst.rollout(&m, 4).unwrap();
        assert_eq!(before, inst);
        assert_eq!(traj.len(), 4);
        assert_eq!(traj[0], inst.prediction().unwrap());
        assert!(inst.rollout(&m, 0).is_err());
    }

    #[test]
    fn state_threads_across_calls() {
        let m = model();
        let o = joint(2).concat();
        let mut s = m.zero_state(1);
        let a = m.predict_delta(&o, &mut s).unwrap();
        let b = m.predict_delta(&o, &mut s).unwrap();
        assert_ne!(a, b);
    }
}
