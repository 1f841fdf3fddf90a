use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_actions, Environment, JointObservation, Kinematics, ScenarioId, ScenarioSpec, StepResult};
use crate::error::{Error, Result};

pub const GRID_SIZE: i64 = 15;
/// Chebyshev radius of each agent's field of view.
pub const SIGHT: i64 = 2;
/// noop, north, south, west, east, load
pub const FORAGING_ACTIONS: usize = 6;
const N_AGENTS: usize = 2;
const N_FOODS: usize = 2;
const LOAD: usize = 5;

type Cell = (i64, i64);

#[derive(Clone, Debug, PartialEq)]
pub struct Forager {
    pub cell: Cell,
    pub level: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Food {
    pub cell: Cell,
    pub level: u32,
    pub collected: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    pub agents: Vec<Forager>,
    pub foods: Vec<Food>,
    pub step: usize,
    pub max_steps: usize,
}

impl GridWorld {
    fn total_food_level(&self) -> f64 {
        self.foods.iter().map(|f| f64::from(f.level)).sum()
    }

    fn occupied(&self, cell: Cell) -> bool {
        self.agents.iter().any(|a| a.cell == cell) || self.foods.iter().any(|f| !f.collected && f.cell == cell)
    }

    pub fn all_collected(&self) -> bool {
        self.foods.iter().all(|f| f.collected)
    }
}

fn in_bounds(c: Cell) -> bool {
    (0..GRID_SIZE).contains(&c.0) && (0..GRID_SIZE).contains(&c.1)
}

fn chebyshev(a: Cell, b: Cell) -> i64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

fn adjacent(a: Cell, b: Cell) -> bool {
    (a.0 - b.0).abs() + (a.1 - b.1).abs() == 1
}

/// Two-agent, two-food cooperative level-based foraging on a 15×15 grid.
///
/// Food levels equal the sum of the agent levels, so every food needs both
/// agents loading from adjacent cells at once. Rewards are normalized so that
/// collecting everything yields a return of exactly 1.
pub struct ForagingEnv {
    spec: ScenarioSpec,
    world: GridWorld,
    rng: ChaCha8Rng,
}

impl ForagingEnv {
    pub fn new(seed: u64) -> Self {
        let spec = ScenarioSpec::new(ScenarioId::Foraging);
        let max_steps = spec.max_steps;
        let mut env = ForagingEnv {
            spec,
            world: GridWorld {
                agents: Vec::new(),
                foods: Vec::new(),
                step: 0,
                max_steps,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset();
        env
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    /// Replaces the world state; used by tests to stage exact situations.
    pub fn set_world(&mut self, world: GridWorld) {
        self.world = world;
    }

    fn random_cell(&mut self, lo: i64, hi: i64) -> Cell {
        (self.rng.random_range(lo..hi), self.rng.random_range(lo..hi))
    }
}

impl Environment for ForagingEnv {
    fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    fn reset(&mut self) -> JointObservation {
        let levels: Vec<u32> = (0..N_AGENTS).map(|_| self.rng.random_range(1..=2)).collect();
        let food_level: u32 = levels.iter().sum();
        self.world.agents.clear();
        self.world.foods.clear();
        self.world.step = 0;
        // Food away from the border and not touching other food.
        while self.world.foods.len() < N_FOODS {
            let cell = self.random_cell(1, GRID_SIZE - 1);
            if self.world.foods.iter().all(|f| chebyshev(f.cell, cell) > 1) {
                self.world.foods.push(Food {
                    cell,
                    level: food_level,
                    collected: false,
                });
            }
        }
        for level in levels {
            loop {
                let cell = self.random_cell(0, GRID_SIZE);
                if !self.world.occupied(cell) {
                    self.world.agents.push(Forager { cell, level });
                    break;
                }
            }
        }
        self.joint_observation()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(&self.spec, actions)?;
        let total = self.world.total_food_level();

        // Loading resolves against positions at the start of the step.
        let mut reward = 0.0;
        for fi in 0..self.world.foods.len() {
            let food = &self.world.foods[fi];
            if food.collected {
                continue;
            }
            let loaders: u32 = self
                .world
                .agents
                .iter()
                .zip(actions)
                .filter(|(a, &act)| act == LOAD && adjacent(a.cell, food.cell))
                .map(|(a, _)| a.level)
                .sum();
            if loaders > 0 && loaders >= food.level {
                reward += f64::from(food.level) / total;
                self.world.foods[fi].collected = true;
            }
        }

        // Moves into cells that were free at the start of the step; agents
        // contending for the same cell both stay.
        let targets: Vec<Cell> = self
            .world
            .agents
            .iter()
            .zip(actions)
            .map(|(a, &act)| {
                let (r, c) = a.cell;
                let t = match act {
                    1 => (r - 1, c),
                    2 => (r + 1, c),
                    3 => (r, c - 1),
                    4 => (r, c + 1),
                    _ => return a.cell,
                };
                if in_bounds(t) && !self.world.occupied(t) {
                    t
                } else {
                    a.cell
                }
            })
            .collect();
        for i in 0..self.world.agents.len() {
            let contested = targets
                .iter()
                .enumerate()
                .any(|(j, &t)| j != i && t == targets[i]);
            if !contested {
                self.world.agents[i].cell = targets[i];
            }
        }

        self.world.step += 1;
        let done = self.world.step >= self.world.max_steps || self.world.all_collected();
        Ok(StepResult {
            obs: self.joint_observation(),
            reward,
            done,
        })
    }

    /// `[row, col, level]`, then per food slot `[row, col]` inside the agent's
    /// 5×5 view window plus level, then the other agent's absolute `[row, col,
    /// level]`. Entries outside the view are `−1`.
    fn observe(&self, agent: usize) -> Result<Vec<f64>> {
        let n = self.world.agents.len();
        if agent >= n {
            return Err(Error::AgentIndex { index: agent, n });
        }
        let me = &self.world.agents[agent];
        let mut o = vec![me.cell.0 as f64, me.cell.1 as f64, f64::from(me.level)];
        for food in &self.world.foods {
            if !food.collected && chebyshev(food.cell, me.cell) <= SIGHT {
                o.extend([
                    (food.cell.0 - me.cell.0 + SIGHT) as f64,
                    (food.cell.1 - me.cell.1 + SIGHT) as f64,
                    f64::from(food.level),
                ]);
            } else {
                o.extend([-1.0; 3]);
            }
        }
        for (j, other) in self.world.agents.iter().enumerate() {
            if j == agent {
                continue;
            }
            if chebyshev(other.cell, me.cell) <= SIGHT {
                o.extend([other.cell.0 as f64, other.cell.1 as f64, f64::from(other.level)]);
            } else {
                o.extend([-1.0; 3]);
            }
        }
        Ok(o)
    }

    fn kinematics(&self) -> Vec<Kinematics> {
        self.world
            .agents
            .iter()
            .map(|a| Kinematics {
                pos: [a.cell.0 as f64, a.cell.1 as f64],
                vel: [0.0; 2],
            })
            .collect()
    }

    fn step_count(&self) -> usize {
        self.world.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn staged() -> ForagingEnv {
        let mut env = ForagingEnv::new(0);
        env.set_world(GridWorld {
            agents: vec![
                Forager { cell: (5, 4), level: 1 },
                Forager { cell: (5, 6), level: 2 },
            ],
            foods: vec![
                Food {
                    cell: (5, 5),
                    level: 3,
                    collected: false,
                },
                Food {
                    cell: (10, 10),
                    level: 3,
                    collected: false,
                },
            ],
            step: 0,
            max_steps: 50,
        });
        env
    }

    #[test]
    fn reset_has_no_collisions_and_coop_levels() {
        let mut env = ForagingEnv::new(3);
        for _ in 0..200 {
            env.reset();
            let w = env.world();
            let mut cells: Vec<Cell> = w.agents.iter().map(|a| a.cell).collect();
            cells.extend(w.foods.iter().map(|f| f.cell));
            let mut dedup = cells.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), cells.len());
            let agent_sum: u32 = w.agents.iter().map(|a| a.level).sum();
            assert!(w.agents.iter().all(|a| a.level >= 1));
            assert!(w.foods.iter().all(|f| f.level >= 1 && f.level <= agent_sum));
        }
    }

    #[test]
    fn joint_loading_collects_food() {
        let mut env = staged();
        let res = env.step(&[LOAD, LOAD]).unwrap();
        assert!((res.reward - 0.5).abs() < 1e-15);
        assert!(env.world().foods[0].collected);
        assert!(!res.done);
    }

    #[test]
    fn single_loader_is_too_weak() {
        let mut env = staged();
        let res = env.step(&[LOAD, 0]).unwrap();
        assert_eq!(res.reward, 0.0);
        assert!(!env.world().foods[0].collected);
    }

    #[test]
    fn collecting_everything_returns_one_and_ends() {
        let mut env = staged();
        let mut ret = env.step(&[LOAD, LOAD]).unwrap().reward;
        let mut w = env.world().clone();
        w.agents[0].cell = (10, 9);
        w.agents[1].cell = (10, 11);
        env.set_world(w);
        let res = env.step(&[LOAD, LOAD]).unwrap();
        ret += res.reward;
        assert!((ret - 1.0).abs() < 1e-15);
        assert!(res.done);
    }

    #[test]
    fn horizon_ends_episode_with_bounded_return() {
        let mut env = ForagingEnv::new(8);
        let mut ret = 0.0;
        for t in 0..50 {
            let res = env.step(&[t % 6, (t * 5 + 1) % 6]).unwrap();
            ret += res.reward;
            if res.done {
                break;
            }
        }
        assert!(env.world().step <= 50);
        assert!((0.0..=1.0).contains(&ret));
    }

    #[test]
    fn observation_layout() {
        let env = staged();
        let o = env.observe(0).unwrap();
        // own cell and level
        assert_eq!(&o[0..3], &[5.0, 4.0, 1.0]);
        // food (5,5) at window offset (2,3); far food unseen
        assert_eq!(&o[3..6], &[2.0, 3.0, 3.0]);
        assert_eq!(&o[6..9], &[-1.0; 3]);
        // teammate in sight: absolute cell
        assert_eq!(&o[9..12], &[5.0, 6.0, 2.0]);
    }

    #[test]
    fn blocked_and_contested_moves() {
        let mut env = staged();
        // agent 0 east into food: blocked
        env.step(&[4, 0]).unwrap();
        assert_eq!(env.world().agents[0].cell, (5, 4));
        let mut w = env.world().clone();
        w.agents[0].cell = (0, 0);
        w.agents[1].cell = (0, 2);
        env.set_world(w);
        env.step(&[4, 3]).unwrap();
        assert_eq!(env.world().agents[0].cell, (0, 0));
        assert_eq!(env.world().agents[1].cell, (0, 2));
        // north off the grid
        env.step(&[1, 0]).unwrap();
        assert_eq!(env.world().agents[0].cell, (0, 0));
    }
}
