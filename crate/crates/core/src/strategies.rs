//! What each agent's controller sees, at training time and at execution time.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::comms::{shared_view, CommMask, CommProcess, CommScheme, SharedView};
use crate::envs::{JointObservation, ScenarioSpec};
use crate::error::{Error, Result};
use crate::worldmodel::{AgentModelInstance, PredictiveModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StrategyId {
    /// Own observation only.
    Obs,
    /// Full joint observation, always; evaluated only with full communication.
    Oracle,
    /// Joint observation in training, zeros for missing slots in execution.
    MaskedJoint,
    /// Message dropout: random zeroing of teammates' slots during training.
    Md,
    /// Message dropout plus per-slot presence flags.
    MdMasks,
    /// Joint observation in training, model imputation in execution.
    Maro,
    /// As `Maro`, with dropped slots imputed by the model during training too.
    MaroDrop,
}

impl StrategyId {
    pub const ALL: [StrategyId; 7] = [
        StrategyId::Obs,
        StrategyId::Oracle,
        StrategyId::MaskedJoint,
        StrategyId::Md,
        StrategyId::MdMasks,
        StrategyId::Maro,
        StrategyId::MaroDrop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Obs => "obs",
            StrategyId::Oracle => "oracle",
            StrategyId::MaskedJoint => "masked_joint",
            StrategyId::Md => "md",
            StrategyId::MdMasks => "md_masks",
            StrategyId::Maro => "maro",
            StrategyId::MaroDrop => "maro_drop",
        }
    }

    /// Whether runs with this strategy train a predictive model.
    pub fn uses_model(self) -> bool {
        matches!(self, StrategyId::Maro | StrategyId::MaroDrop)
    }

    /// Whether training inputs are corrupted by per-episode dropout.
    pub fn drops_in_training(self) -> bool {
        matches!(self, StrategyId::Md | StrategyId::MdMasks | StrategyId::MaroDrop)
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

impl From<StrategyId> for String {
    fn from(s: StrategyId) -> String {
        s.as_str().to_string()
    }
}

impl TryFrom<String> for StrategyId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

pub fn input_dim(strategy: StrategyId, spec: &ScenarioSpec, agent: usize) -> Result<usize> {
    let n = spec.n_agents();
    if agent >= n {
        return Err(Error::AgentIndex { index: agent, n });
    }
    Ok(match strategy {
        StrategyId::Obs => spec.obs_dims[agent],
        StrategyId::MdMasks => spec.joint_dim() + n,
        _ => spec.joint_dim(),
    })
}

pub fn input_dims(strategy: StrategyId, spec: &ScenarioSpec) -> Vec<usize> {
    (0..spec.n_agents())
        .map(|i| input_dim(strategy, spec, i).expect("agent in range"))
        .collect()
}

/// Joint vector with absent slots zero-filled, plus flags if requested.
fn zero_filled(spec: &ScenarioSpec, view: &SharedView, flags: bool) -> Result<Vec<f64>> {
    if view.slots.len() != spec.n_agents() {
        return Err(Error::shape("controller_input", spec.n_agents(), view.slots.len()));
    }
    let mut out = Vec::with_capacity(spec.joint_dim() + spec.n_agents());
    for (slot, &d) in view.slots.iter().zip(&spec.obs_dims) {
        match slot {
            Some(o) if o.len() == d => out.extend_from_slice(o),
            Some(o) => return Err(Error::shape("controller_input", d, o.len())),
            None => out.extend(std::iter::repeat_n(0.0, d)),
        }
    }
    if flags {
        out.extend(view.mask_row.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    }
    Ok(out)
}

/// Execution-time input for the agent that owns `view`.
///
/// Model-based strategies need the shared model and that agent's instance.
pub fn build_exec_input(
    strategy: StrategyId,
    spec: &ScenarioSpec,
    view: &SharedView,
    imputer: Option<(&PredictiveModel, &mut AgentModelInstance)>,
) -> Result<Vec<f64>> {
    match strategy {
        StrategyId::Obs => Ok(view.own().to_vec()),
        StrategyId::Oracle => {
            if !view.is_complete() {
                return Err(Error::Protocol(format!(
                    "oracle input for agent {} with missing observations",
                    view.agent
                )));
            }
            zero_filled(spec, view, false)
        }
        StrategyId::MaskedJoint | StrategyId::Md => zero_filled(spec, view, false),
        StrategyId::MdMasks => zero_filled(spec, view, true),
        StrategyId::Maro | StrategyId::MaroDrop => {
            let (model, inst) = imputer.ok_or_else(|| {
                Error::Protocol(format!("strategy {strategy} needs a predictive model instance"))
            })?;
            inst.step(model, view)
        }
    }
}

/// Per-episode state for building training-time controller inputs.
///
/// Dropout strategies draw a communication matrix once per episode from the
/// training scheme (by default one `p ~ U(0,1)` for every link) and, at every
/// `t > 0`, one Bernoulli draw per ordered agent pair. The draws consume the
/// rng identically whatever the observations are.
#[derive(Clone, Debug)]
pub struct TrainInputBuilder {
    strategy: StrategyId,
    spec: ScenarioSpec,
    drop: Option<CommProcess>,
    p_drawn: Option<f64>,
    instances: Vec<AgentModelInstance>,
}

impl TrainInputBuilder {
    pub fn begin_episode<R: Rng + ?Sized>(
        strategy: StrategyId,
        spec: &ScenarioSpec,
        scheme: CommScheme,
        model: Option<&PredictiveModel>,
        rng: &mut R,
    ) -> Result<Self> {
        let n = spec.n_agents();
        let drop = strategy
            .drops_in_training()
            .then(|| CommProcess::begin_episode(scheme, n, rng));
        let p_drawn = drop.as_ref().map(|c| c.matrix().mean_off_diagonal());
        let mut instances = Vec::new();
        if strategy == StrategyId::MaroDrop {
            let model = model.ok_or_else(|| Error::Protocol("maro_drop training needs a predictive model".into()))?;
            instances = (0..n).map(AgentModelInstance::new).collect();
            for inst in &mut instances {
                inst.reset(model);
            }
        }
        Ok(TrainInputBuilder {
            strategy,
            spec: spec.clone(),
            drop,
            p_drawn,
            instances,
        })
    }

    /// Mean link probability of the episode's first matrix; `None` for
    /// strategies without training dropout.
    pub fn p_drawn(&self) -> Option<f64> {
        self.p_drawn
    }

    /// Inputs for every agent at step `t`, and the mask that produced them.
    pub fn build<R: Rng + ?Sized>(
        &mut self,
        joint: &JointObservation,
        t: usize,
        model: Option<&PredictiveModel>,
        rng: &mut R,
    ) -> Result<(Vec<Vec<f64>>, CommMask)> {
        let n = self.spec.n_agents();
        if joint.n_agents() != n {
            return Err(Error::shape("controller_input", n, joint.n_agents()));
        }
        let mask = match &mut self.drop {
            Some(c) => c.mask_at(t, rng),
            None => CommMask::full(n),
        };
        let mut inputs = Vec::with_capacity(n);
        for i in 0..n {
            let view = shared_view(joint, &mask, i)?;
            let x = match self.strategy {
                StrategyId::Obs => view.own().to_vec(),
                StrategyId::Oracle | StrategyId::MaskedJoint | StrategyId::Maro => joint.concat(),
                StrategyId::Md => zero_filled(&self.spec, &view, false)?,
                StrategyId::MdMasks => zero_filled(&self.spec, &view, true)?,
                StrategyId::MaroDrop => {
                    let model =
                        model.ok_or_else(|| Error::Protocol("maro_drop training needs a predictive model".into()))?;
                    self.instances[i].step(model, &view)?
                }
            };
            inputs.push(x);
        }
        Ok((inputs, mask))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::envs::{make_env, ScenarioId};

    #[test]
    fn dims_for_blindfold() {
        let spec = ScenarioSpec::new(ScenarioId::SpreadBlindfold);
        assert_eq!(input_dim(StrategyId::Obs, &spec, 0).unwrap(), 10);
        assert_eq!(input_dim(StrategyId::MaskedJoint, &spec, 1).unwrap(), 30);
        assert_eq!(input_dim(StrategyId::MdMasks, &spec, 2).unwrap(), 33);
        assert!(input_dim(StrategyId::Obs, &spec, 3).is_err());
    }

    #[test]
    fn names_round_trip() {
        for s in StrategyId::ALL {
            assert_eq!(s.as_str().parse::<StrategyId>().unwrap(), s);
        }
        assert!("dropout".parse::<StrategyId>().is_err());
    }

    #[test]
    fn oracle_rejects_partial_views() {
        let spec = ScenarioSpec::new(ScenarioId::HearSee);
        let mut env = make_env(ScenarioId::HearSee, 0);
        let joint = env.reset();
        let view = shared_view(&joint, &CommMask::identity(2), 0).unwrap();
        let err = build_exec_input(StrategyId::Oracle, &spec, &view, None).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
        let x = build_exec_input(StrategyId::MaskedJoint, &spec, &view, None).unwrap();
        assert_eq!(&x[..2], joint.agent(0));
        assert!(x[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn model_strategies_need_a_model() {
        let spec = ScenarioSpec::new(ScenarioId::HearSee);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(TrainInputBuilder::begin_episode(StrategyId::MaroDrop, &spec, CommScheme::DefaultUniform, None, &mut rng).is_err());
        let mut env = make_env(ScenarioId::HearSee, 0);
        let view = shared_view(&env.reset(), &CommMask::full(2), 0).unwrap();
        assert!(build_exec_input(StrategyId::Maro, &spec, &view, None).is_err());
    }

    #[test]
    fn md_flags_mark_present_slots() {
        let spec = ScenarioSpec::new(ScenarioId::SpreadBlindfold);
        let mut env = make_env(ScenarioId::SpreadBlindfold, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = TrainInputBuilder::begin_episode(StrategyId::MdMasks, &spec, CommScheme::DefaultUniform, None, &mut rng).unwrap();
        let mut joint = env.reset();
        for t in 0..25 {
            let (inputs, mask) = b.build(&joint, t, None, &mut rng).unwrap();
            for (i, x) in inputs.iter().enumerate() {
                assert_eq!(x.len(), 33);
                for j in 0..3 {
                    assert_eq!(x[30 + j], if mask.get(i, j) { 1.0 } else { 0.0 });
                }
                assert_eq!(&x[i * 10..(i + 1) * 10], joint.agent(i));
            }
            joint = env.step(&[0, 1, 2]).unwrap().obs;
        }
    }
}
