mod common;

use common::*;
use hmarl::envs::{ScenarioId, ScenarioSpec};
use hmarl::strategies::StrategyId;

const EQUIVALENT: [StrategyId; 5] = [
    StrategyId::Oracle,
    StrategyId::MaskedJoint,
    StrategyId::Md,
    StrategyId::Maro,
    StrategyId::MaroDrop,
];

#[test]
fn full_communication_inputs_coincide() {
    for scenario in ScenarioId::ALL {
        let mut all = EQUIVALENT.to_vec();
        all.push(StrategyId::MdMasks);
        let r = full_comm_inputs(scenario, &all, 3);
        let n = ScenarioSpec::new(scenario).n_agents();
        for (t, joint) in r.joint.iter().enumerate() {
            for k in 0..all.len() {
                for i in 0..n {
                    let (ex, tr) = (&r.exec[k][t][i], &r.train[k][t][i]);
                    let body = if all[k] == StrategyId::MdMasks { &ex[..joint.len()] } else { &ex[..] };
                    assert_eq!(body, &joint[..], "{scenario} {} exec t={t} agent {i}", all[k]);
                    assert_eq!(ex, tr, "{scenario} {} train t={t} agent {i}", all[k]);
                    if all[k] == StrategyId::MdMasks {
                        assert!(ex[joint.len()..].iter().all(|&f| f == 1.0));
                    }
                }
            }
        }
    }
}

#[test]
fn obs_strategy_sees_only_itself() {
    let r = full_comm_inputs(ScenarioId::SpreadXy2, &[StrategyId::Obs], 0);
    let spec = ScenarioSpec::new(ScenarioId::SpreadXy2);
    let offs = spec.slot_offsets();
    for (t, joint) in r.joint.iter().enumerate() {
        for i in 0..spec.n_agents() {
            assert_eq!(r.exec[0][t][i], joint[offs[i]..offs[i] + spec.obs_dims[i]]);
        }
    }
}
