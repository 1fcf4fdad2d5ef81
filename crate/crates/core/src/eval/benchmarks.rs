//! Small perturbable benchmark families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rmdp::TabularRmdp;

fn default_gamma() -> f64 {
    0.9
}
fn default_rho() -> f64 {
    0.2
}
fn default_slip() -> f64 {
    0.1
}
fn default_risky_fail() -> f64 {
    0.1
}
fn default_risky_reward() -> f64 {
    0.3
}
fn default_safe_reward() -> f64 {
    1.0
}
fn default_length() -> usize {
    5
}
fn default_side() -> usize {
    4
}

/// A named model family. Every field is a knob for [`Benchmark::with_param`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Benchmark {
    /// States `0..length` on a line, actions left (0) and right (1). The
    /// intended move happens with probability `1 - slip`, the opposite one
    /// otherwise; walls reflect. Reward 1 in the rightmost state. With
    /// `fail_prob > 0` an extra absorbing fail state takes that much mass
    /// from every move.
    Chain {
        #[serde(default = "default_length")]
        length: usize,
        #[serde(default = "default_slip")]
        slip: f64,
        #[serde(default)]
        fail_prob: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// `width x height` grid, actions up, right, down, left. The intended move
    /// happens with probability `1 - slip`, each other direction with
    /// `slip / 3`. Reward 1 in the far corner, start in the origin. Optional
    /// fail state as for the chain.
    Gridworld {
        #[serde(default = "default_side")]
        width: usize,
        #[serde(default = "default_side")]
        height: usize,
        #[serde(default = "default_slip")]
        slip: f64,
        #[serde(default)]
        fail_prob: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// State 0 is the start, 1 the fail state, 2 an absorbing zero-reward home.
    /// The risky action (0) pays `risky_reward` and stays at the start, except
    /// that it falls into the fail state with probability `fail_prob`. The safe
    /// action (1) pays `safe_reward` once and retires to home.
    ///
    /// The home state has zero value just like the fail state, so no kernel in
    /// the ball can hurt the safe action, while the adversary spends its whole
    /// budget pushing the risky action into failure. With the defaults the
    /// nominal optimum is risky and the robust optimum turns safe for
    /// `rho > 1 - fail_prob - (1 - risky_reward / safe_reward) / gamma`.
    RiskySafe {
        #[serde(default = "default_risky_fail")]
        fail_prob: f64,
        #[serde(default = "default_risky_reward")]
        risky_reward: f64,
        #[serde(default = "default_safe_reward")]
        safe_reward: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
}

pub const RISKY: usize = 0;
pub const SAFE: usize = 1;

impl Benchmark {
    pub fn chain(length: usize) -> Self {
        Benchmark::Chain { length, slip: default_slip(), fail_prob: 0.0, gamma: default_gamma(), rho: default_rho() }
    }

    pub fn gridworld(width: usize, height: usize) -> Self {
        Benchmark::Gridworld {
            width,
            height,
            slip: default_slip(),
            fail_prob: 0.0,
            gamma: default_gamma(),
            rho: default_rho(),
        }
    }

    pub fn risky_safe() -> Self {
        Benchmark::RiskySafe {
            fail_prob: default_risky_fail(),
            risky_reward: default_risky_reward(),
            safe_reward: default_safe_reward(),
            gamma: default_gamma(),
            rho: default_rho(),
        }
    }

    /// Builds from a family name and a JSON object of parameters; missing
    /// parameters take their defaults.
    pub fn from_params(name: &str, params: &serde_json::Map<String, serde_json::Value>) -> Result<Self> {
        let mut obj = params.clone();
        obj.insert("name".into(), serde_json::Value::String(name.into()));
        let b: Benchmark = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| Error::InvalidArgument(format!("benchmark {name}: {e}")))?;
        b.check()?;
        Ok(b)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Chain { .. } => "chain",
            Benchmark::Gridworld { .. } => "gridworld",
            Benchmark::RiskySafe { .. } => "risky-safe",
        }
    }

    pub fn rho(&self) -> f64 {
        match self {
            Benchmark::Chain { rho, .. } | Benchmark::Gridworld { rho, .. } | Benchmark::RiskySafe { rho, .. } => *rho,
        }
    }

    /// A copy with the named parameter replaced.
    pub fn with_param(&self, knob: &str, value: f64) -> Result<Self> {
        let mut b = self.clone();
        let unknown = || Error::InvalidArgument(format!("{} has no parameter {knob:?}", self.name()));
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidArgument(format!("{knob} must be a positive integer, got {v}")))
            }
        };
        match &mut b {
            Benchmark::Chain { length, slip, fail_prob, gamma, rho } => match knob {
                "length" => *length = as_count(value)?,
                "slip" => *slip = value,
                "fail_prob" => *fail_prob = value,
                "gamma" => *gamma = value,
                "rho" => *rho = value,
                _ => return Err(unknown()),
            },
            Benchmark::Gridworld { width, height, slip, fail_prob, gamma, rho } => match knob {
                "width" => *width = as_count(value)?,
                "height" => *height = as_count(value)?,
                "slip" => *slip = value,
                "fail_prob" => *fail_prob = value,
                "gamma" => *gamma = value,
                "rho" => *rho = value,
                _ => return Err(unknown()),
            },
            Benchmark::RiskySafe { fail_prob, risky_reward, safe_reward, gamma, rho } => match knob {
                "fail_prob" => *fail_prob = value,
                "risky_reward" => *risky_reward = value,
                "safe_reward" => *safe_reward = value,
                "gamma" => *gamma = value,
                "rho" => *rho = value,
                _ => return Err(unknown()),
            },
        }
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<()> {
        let unit = |what: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} = {x} outside [0, 1]")))
            }
        };
        let (gamma, rho) = match self {
            Benchmark::Chain { length, slip, fail_prob, gamma, rho } => {
                if *length == 0 {
                    return Err(Error::InvalidArgument("chain length must be at least 1".into()));
                }
                unit("slip", *slip)?;
                unit("fail_prob", *fail_prob)?;
                (*gamma, *rho)
            }
            Benchmark::Gridworld { width, height, slip, fail_prob, gamma, rho } => {
                if *width == 0 || *height == 0 {
                    return Err(Error::InvalidArgument("grid sides must be at least 1".into()));
                }
                unit("slip", *slip)?;
                unit("fail_prob", *fail_prob)?;
                (*gamma, *rho)
            }
            Benchmark::RiskySafe { fail_prob, risky_reward, safe_reward, gamma, rho } => {
                unit("fail_prob", *fail_prob)?;
                unit("risky_reward", *risky_reward)?;
                unit("safe_reward", *safe_reward)?;
                (*gamma, *rho)
            }
        };
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} outside (0, 1)")));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho = {rho} must be finite and non-negative")));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<TabularRmdp> {
        self.check()?;
        match *self {
            Benchmark::Chain { length, slip, fail_prob, gamma, rho } => {
                let moves = |s: usize, a: usize| -> Vec<(usize, f64)> {
                    let left = s.saturating_sub(1);
                    let right = (s + 1).min(length - 1);
                    let (to, away) = if a == 0 { (left, right) } else { (right, left) };
                    vec![(to, 1.0 - slip), (away, slip)]
                };
                let reward = |s: usize, _a: usize| if s + 1 == length { 1.0 } else { 0.0 };
                lattice(length, 2, moves, reward, fail_prob, gamma, rho)
            }
            Benchmark::Gridworld { width, height, slip, fail_prob, gamma, rho } => {
                let step = |s: usize, dir: usize| {
                    let (x, y) = (s % width, s / width);
                    let (x, y) = match dir {
                        0 => (x, (y + 1).min(height - 1)),
                        1 => ((x + 1).min(width - 1), y),
                        2 => (x, y.saturating_sub(1)),
                        _ => (x.saturating_sub(1), y),
                    };
                    y * width + x
                };
                let moves = |s: usize, a: usize| -> Vec<(usize, f64)> {
                    (0..4).map(|d| (step(s, d), if d == a { 1.0 - slip } else { slip / 3.0 })).collect()
                };
                let goal = width * height - 1;
                let reward = |s: usize, _a: usize| if s == goal { 1.0 } else { 0.0 };
                lattice(width * height, 4, moves, reward, fail_prob, gamma, rho)
            }
            Benchmark::RiskySafe { fail_prob, risky_reward, safe_reward, gamma, rho } => {
                #[rustfmt::skip]
                let kernel = vec![
                    1.0 - fail_prob, fail_prob, 0.0,   0.0, 0.0, 1.0,
                    0.0, 1.0, 0.0,                     0.0, 1.0, 0.0,
                    0.0, 0.0, 1.0,                     0.0, 0.0, 1.0,
                ];
                let reward = vec![risky_reward, safe_reward, 0.0, 0.0, 0.0, 0.0];
                TabularRmdp::new(3, 2, kernel, reward, gamma, vec![1.0, 0.0, 0.0], Some(1), rho)
            }
        }
    }

    /// Radius above which the robust optimum at the start switches from the
    /// risky to the safe action. Errors for other families, or when the safe
    /// action already wins nominally.
    pub fn risky_safe_threshold(&self) -> Result<f64> {
        let (p, rr, rs, gamma) = self.risky_safe_params()?;
        let t = 1.0 - p - (1.0 - rr / rs) / gamma;
        if t <= 0.0 {
            return Err(Error::InvalidArgument("safe action is optimal already at rho = 0".into()));
        }
        Ok(t)
    }

    /// Value of the `fail_prob` knob beyond which the risky action's nominal
    /// return drops below the safe one's.
    pub fn risky_safe_crossover(&self) -> Result<f64> {
        let (_, rr, rs, gamma) = self.risky_safe_params()?;
        Ok(1.0 - (1.0 - rr / rs) / gamma)
    }

    fn risky_safe_params(&self) -> Result<(f64, f64, f64, f64)> {
        match *self {
            Benchmark::RiskySafe { fail_prob, risky_reward, safe_reward, gamma, .. } if safe_reward > 0.0 => {
                Ok((fail_prob, risky_reward, safe_reward, gamma))
            }
            Benchmark::RiskySafe { .. } => Err(Error::InvalidArgument("safe_reward must be positive".into())),
            _ => Err(Error::InvalidArgument(format!("{} has no risky/safe threshold", self.name()))),
        }
    }
}

/// Assembles a model from per-cell move lists, adding a fail state when
/// `fail_prob > 0`.
fn lattice(
    n: usize,
    na: usize,
    moves: impl Fn(usize, usize) -> Vec<(usize, f64)>,
    reward: impl Fn(usize, usize) -> f64,
    fail_prob: f64,
    gamma: f64,
    rho: f64,
) -> Result<TabularRmdp> {
    let fail = (fail_prob > 0.0).then_some(n);
    let ns = n + usize::from(fail.is_some());
    let mut kernel = vec![0.0; ns * na * ns];
    let mut rewards = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let row = &mut kernel[(s * na + a) * ns..(s * na + a + 1) * ns];
            if Some(s) == fail {
                row[s] = 1.0;
                continue;
            }
            for (to, p) in moves(s, a) {
                row[to] += (1.0 - fail_prob) * p;
            }
            if let Some(f) = fail {
                row[f] += fail_prob;
            }
            rewards[s * na + a] = reward(s, a);
        }
    }
    let mut init = vec![0.0; ns];
    init[0] = 1.0;
    TabularRmdp::new(ns, na, kernel, rewards, gamma, init, fail, rho)
}
