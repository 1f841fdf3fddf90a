//! Communication matrices, their sampling schemes, and per-step sharing masks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::JointObservation;
use crate::error::{Error, Result};

pub const DEFAULT_DYNAMIC_INTERVAL: usize = 5;

/// How communication matrices are drawn.
///
/// Parsed from `fixed:<p>`, `default`, `asymmetric` and `dynamic:<interval>`
/// (`dynamic` alone uses an interval of 5).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CommScheme {
    Fixed(f64),
    /// One `p ~ U(0,1)` per episode, shared by every pair.
    DefaultUniform,
    /// Every off-diagonal entry independently `~ U(0,1)`, once per episode.
    Asymmetric,
    /// As `Asymmetric`, redrawn every `interval` steps.
    Dynamic(usize),
}

impl CommScheme {
    pub fn fixed(p: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&p) {
            Ok(CommScheme::Fixed(p))
        } else {
            Err(Error::InvalidScheme(format!("fixed:{p}")))
        }
    }

    pub fn dynamic(interval: usize) -> Result<Self> {
        if interval >= 1 {
            Ok(CommScheme::Dynamic(interval))
        } else {
            Err(Error::InvalidScheme("dynamic:0".into()))
        }
    }
}

impl fmt::Display for CommScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommScheme::Fixed(p) => write!(f, "fixed:{p}"),
            CommScheme::DefaultUniform => f.write_str("default"),
            CommScheme::Asymmetric => f.write_str("asymmetric"),
            CommScheme::Dynamic(k) => write!(f, "dynamic:{k}"),
        }
    }
}

impl FromStr for CommScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidScheme(s.to_string());
        match s.split_once(':') {
            None => match s {
                "default" => Ok(CommScheme::DefaultUniform),
                "asymmetric" => Ok(CommScheme::Asymmetric),
                "dynamic" => Ok(CommScheme::Dynamic(DEFAULT_DYNAMIC_INTERVAL)),
                _ => Err(bad()),
            },
            Some(("fixed", p)) => CommScheme::fixed(p.trim().parse().map_err(|_| bad())?).map_err(|_| bad()),
            Some(("dynamic", k)) => CommScheme::dynamic(k.trim().parse().map_err(|_| bad())?).map_err(|_| bad()),
            Some(_) => Err(bad()),
        }
    }
}

impl From<CommScheme> for String {
    fn from(s: CommScheme) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for CommScheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `n × n` sharing probabilities; entry `(i, j)` is the per-step probability
/// that agent `i` receives agent `j`'s observation.
#[derive(Clone, Debug, PartialEq)]
pub struct CommMatrix {
    n: usize,
    p: Vec<f64>,
}

impl CommMatrix {
    pub fn uniform(n: usize, p: f64) -> Self {
        let mut m = CommMatrix { n, p: vec![p; n * n] };
        for i in 0..n {
            m.p[i * n + i] = 1.0;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Mean off-diagonal probability (the communication level for uniform matrices).
    pub fn mean_off_diagonal(&self) -> f64 {
        if self.n < 2 {
            return 1.0;
        }
        let s: f64 = (0..self.n)
            .flat_map(|i| (0..self.n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .sum();
        s / (self.n * (self.n - 1)) as f64
    }
}

/// Realized sharing for one step; `(i, j)` true iff `i` receives `j`'s observation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommMask {
    n: usize,
    bits: Vec<bool>,
}

impl CommMask {
    pub fn full(n: usize) -> Self {
        CommMask { n, bits: vec![true; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut bits = vec![false; n * n];
        for i in 0..n {
            bits[i * n + i] = true;
        }
        CommMask { n, bits }
    }

    /// Builds a mask from explicit rows; the diagonal is forced true.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let mut bits = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::shape("comm_mask", n, row.len()));
            }
            bits.extend(row.iter().enumerate().map(|(j, &b)| b || i == j));
        }
        Ok(CommMask { n, bits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.n..(i + 1) * self.n]
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }
}

pub fn sample_matrix<R: Rng + ?Sized>(scheme: CommScheme, n: usize, rng: &mut R) -> CommMatrix {
    match scheme {
        CommScheme::Fixed(p) => CommMatrix::uniform(n, p),
        CommScheme::DefaultUniform => CommMatrix::uniform(n, rng.random::<f64>()),
        CommScheme::Asymmetric | CommScheme::Dynamic(_) => {
            let mut m = CommMatrix::uniform(n, 1.0);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        m.p[i * n + j] = rng.random::<f64>();
                    }
                }
            }
            m
        }
    }
}

/// Returns a freshly drawn matrix at dynamic epoch boundaries (`t > 0`,
/// `t mod interval = 0`); otherwise `current` unchanged.
pub fn maybe_resample<R: Rng + ?Sized>(scheme: CommScheme, t: usize, current: CommMatrix, rng: &mut R) -> CommMatrix {
    match scheme {
        CommScheme::Dynamic(k) if t > 0 && t % k == 0 => sample_matrix(scheme, current.n(), rng),
        _ => current,
    }
}

/// All-true at `t = 0`; afterwards independent Bernoulli draws off the diagonal.
pub fn draw_mask<R: Rng + ?Sized>(c: &CommMatrix, t: usize, rng: &mut R) -> CommMask {
    let n = c.n();
    if t == 0 {
        return CommMask::full(n);
    }
    let mut bits = vec![true; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                bits[i * n + j] = rng.random::<f64>() < c.get(i, j);
            }
        }
    }
    CommMask { n, bits }
}

/// What one agent can see this step.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedView {
    pub agent: usize,
    /// `Some(o_j)` when received, `None` when absent.
    pub slots: Vec<Option<Vec<f64>>>,
    pub mask_row: Vec<bool>,
}

impl SharedView {
    pub fn is_complete(&self) -> bool {
        self.mask_row.iter().all(|&b| b)
    }

    pub fn own(&self) -> &[f64] {
        self.slots[self.agent].as_deref().expect("own observation is always present")
    }
}

pub fn shared_view(joint: &JointObservation, mask: &CommMask, agent: usize) -> Result<SharedView> {
    let n = joint.n_agents();
    if agent >= n || mask.n() != n {
        return Err(Error::AgentIndex { index: agent, n });
    }
    let mask_row = mask.row(agent).to_vec();
    let slots = mask_row
        .iter()
        .enumerate()
        .map(|(j, &present)| present.then(|| joint.agent(j).to_vec()))
        .collect();
    Ok(SharedView {
        agent,
        slots,
        mask_row,
    })
}

/// Per-episode communication process: matrix epochs plus mask draws.
#[derive(Clone, Debug)]
pub struct CommProcess {
    scheme: CommScheme,
    matrix: CommMatrix,
}

impl CommProcess {
    pub fn begin_episode<R: Rng + ?Sized>(scheme: CommScheme, n: usize, rng: &mut R) -> Self {
        CommProcess {
            scheme,
            matrix: sample_matrix(scheme, n, rng),
        }
    }

    pub fn matrix(&self) -> &CommMatrix {
        &self.matrix
    }

    pub fn mask_at<R: Rng + ?Sized>(&mut self, t: usize, rng: &mut R) -> CommMask {
        let current = std::mem::replace(&mut self.matrix, CommMatrix::uniform(0, 1.0));
        self.matrix = maybe_resample(self.scheme, t, current, rng);
        draw_mask(&self.matrix, t, rng)
    }
}
