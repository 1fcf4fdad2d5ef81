//! Offline datasets drawn from the nominal model.
//!
//! # Sampling stream
//!
//! Transition `i` of a dataset generated with seed `seed` is drawn from a
//! ChaCha20 keystream whose 256-bit key is four consecutive SplitMix64
//! outputs started at `seed` (little-endian), positioned at 32-bit word
//! `4 * i`. The first `u64` picks `(s, a)` from `mu`, the second picks `s'`
//! from `P°(· | s, a)`; each is mapped to `[0, 1)` as `(x >> 11) * 2^-53` and
//! inverted through the cumulative distribution in index order. Sample `i` is
//! therefore the same regardless of how many samples are requested.
//!
//! # File format
//!
//! JSON Lines. The first line is a header
//! `{"n_states":..,"n_actions":..,"mu":[[..]],"seed":..,"source_id":".."}`,
//! each following line one transition `{"s":..,"a":..,"r":..,"s_next":..}`
//! with an optional `"w"` sample weight (omitted when 1).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rmdp::{check_distribution, occupancy, Policy, SaTable, TabularRmdp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    /// Sample weight; exact-expectation datasets carry `mu(s,a) P°(s'|s,a)`.
    #[serde(default = "unit_weight", skip_serializing_if = "is_unit_weight")]
    pub w: f64,
}

fn unit_weight() -> f64 {
    1.0
}

fn is_unit_weight(w: &f64) -> bool {
    *w == 1.0
}

impl Transition {
    pub fn new(s: usize, a: usize, r: f64, s_next: usize) -> Self {
        Transition { s, a, r, s_next, w: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Vec<Transition>,
    /// Sampling distribution over `(s, a)`.
    pub mu: SaTable,
    pub seed: u64,
    pub source_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    n_states: usize,
    n_actions: usize,
    mu: SaTable,
    seed: u64,
    #[serde(default)]
    source_id: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Total sample weight.
    pub fn total_weight(&self) -> f64 {
        self.transitions.iter().map(|t| t.w).sum()
    }

    /// Indices in range, positive finite weights, `mu` a distribution and
    /// every sampled pair inside its support.
    pub fn validate(&self) -> Result<()> {
        if self.mu.n_states() != self.n_states || self.mu.n_actions() != self.n_actions {
            return Err(Error::Dimension("mu shape does not match the dataset".into()));
        }
        check_distribution(self.mu.values(), self.n_states * self.n_actions, "mu")?;
        for (i, t) in self.transitions.iter().enumerate() {
            if t.s >= self.n_states || t.a >= self.n_actions || t.s_next >= self.n_states {
                return Err(Error::InvalidArgument(format!("transition {i} has an index out of range")));
            }
            if !(t.w > 0.0 && t.w.is_finite()) || !t.r.is_finite() {
                return Err(Error::InvalidArgument(format!("transition {i} has a bad weight or reward")));
            }
            if self.mu.get(t.s, t.a) == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "transition {i} at ({}, {}) lies outside the support of mu",
                    t.s, t.a
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let header = Header {
            n_states: self.n_states,
            n_actions: self.n_actions,
            mu: self.mu.clone(),
            seed: self.seed,
            source_id: self.source_id.clone(),
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for t in &self.transitions {
            serde_json::to_writer(&mut *out, t)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Parses the JSONL format; errors carry the 1-based line number.
    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })??;
        let header: Header =
            serde_json::from_str(&first).map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
        let mut transitions = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 2, message: e.to_string() })?;
            transitions.push(t);
        }
        let ds = Dataset {
            n_states: header.n_states,
            n_actions: header.n_actions,
            transitions,
            mu: header.mu,
            seed: header.seed,
            source_id: header.source_id,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seekable sample stream; see the module docs for the exact layout.
pub struct SampleStream {
    rng: ChaCha20Rng,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        SampleStream { rng: ChaCha20Rng::from_seed(key) }
    }

    /// The two uniforms belonging to sample `i`.
    pub fn sample_uniforms(&mut self, i: u64) -> (f64, f64) {
        self.rng.set_word_pos(4 * i as u128);
        (unit(self.rng.next_u64()), unit(self.rng.next_u64()))
    }
}

fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// First index whose cumulative mass exceeds `u`; zero-mass entries are never chosen.
fn invert_cdf(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, x) in p.iter().enumerate() {
        if *x > 0.0 {
            acc += x;
            last = i;
            if acc > u {
                return i;
            }
        }
    }
    last
}

/// Draws `n` i.i.d. transitions with `(s, a) ~ mu` and `s' ~ P°(· | s, a)`.
pub fn generate_dataset(rmdp: &TabularRmdp, mu: &SaTable, n: usize, seed: u64) -> Result<Dataset> {
    if mu.n_states() != rmdp.n_states() || mu.n_actions() != rmdp.n_actions() {
        return Err(Error::Dimension("mu shape does not match the model".into()));
    }
    check_distribution(mu.values(), rmdp.n_pairs(), "mu")?;
    let mut stream = SampleStream::new(seed);
    let na = rmdp.n_actions();
    let transitions = (0..n as u64)
        .map(|i| {
            let (u_pair, u_next) = stream.sample_uniforms(i);
            let cell = invert_cdf(mu.values(), u_pair);
            let (s, a) = (cell / na, cell % na);
            let s_next = invert_cdf(rmdp.transition(s, a), u_next);
            Transition::new(s, a, rmdp.reward(s, a), s_next)
        })
        .collect();
    Ok(Dataset {
        n_states: rmdp.n_states(),
        n_actions: na,
        transitions,
        mu: mu.clone(),
        seed,
        source_id: format!("nominal-sample:n={n}"),
    })
}

/// One weighted transition per `(s, a, s')` with `mu(s,a) P°(s'|s,a) > 0`,
/// so that every empirical average equals its population counterpart.
pub fn exhaustive_dataset(rmdp: &TabularRmdp, mu: &SaTable) -> Result<Dataset> {
    check_distribution(mu.values(), rmdp.n_pairs(), "mu")?;
    let mut transitions = Vec::new();
    for s in 0..rmdp.n_states() {
        for a in 0..rmdp.n_actions() {
            let m = mu.get(s, a);
            if m == 0.0 {
                continue;
            }
            for (sn, p) in rmdp.transition(s, a).iter().enumerate() {
                if *p > 0.0 {
                    transitions.push(Transition { s, a, r: rmdp.reward(s, a), s_next: sn, w: m * p });
                }
            }
        }
    }
    Ok(Dataset {
        n_states: rmdp.n_states(),
        n_actions: rmdp.n_actions(),
        transitions,
        mu: mu.clone(),
        seed: 0,
        source_id: "exhaustive".into(),
    })
}

pub fn uniform_mu(n_states: usize, n_actions: usize) -> SaTable {
    let p = 1.0 / (n_states * n_actions) as f64;
    SaTable::from_fn(n_states, n_actions, |_, _| p)
}

/// Occupancy of the epsilon-smoothed `policy` under the nominal kernel.
pub fn mu_from_policy(rmdp: &TabularRmdp, policy: &Policy, epsilon: f64) -> Result<SaTable> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    policy.validate(rmdp.n_states(), rmdp.n_actions())?;
    let mixed = policy.smoothed(rmdp.n_actions(), epsilon);
    let occ = occupancy(&mixed, rmdp)?;
    // renormalize away the solver's rounding so mu passes the 1e-12 check
    let total: f64 = occ.dist.values().iter().sum();
    let values = occ.dist.values().iter().map(|x| x / total).collect();
    SaTable::from_vec(rmdp.n_states(), rmdp.n_actions(), values)
}
