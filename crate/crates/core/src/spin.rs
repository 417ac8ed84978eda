//! Single-asset spin market.
//!
//! Agents sit on a periodic square lattice and hold a demand spin `s_i` and a
//! strategy `C_i` (`+1` fundamentalist, `-1` chartist). Spins follow heat-bath
//! dynamics in a local field made of a nearest-neighbour herding term and a
//! global coupling to the magnetization. The magnetization is read as excess
//! demand and drives log-price changes linearly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which local field the spins feel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldModel {
    /// `h_i = J Σ_nn s_j - α s_i |M|`, strategies adjust instantaneously.
    #[default]
    Simplified,
    /// `h_i = J Σ_nn s_j - α C_i M` with explicit strategy switching.
    Strategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// N single-site heat-bath updates at uniformly drawn sites per sweep.
    #[default]
    Sequential,
    /// Every site updated from the previous sweep's configuration.
    Synchronous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinParams {
    /// Lattice side `L`; the lattice holds `L*L` agents.
    pub side: usize,
    /// Nearest-neighbour coupling `J`.
    pub j: f64,
    /// Global coupling `α`.
    pub alpha: f64,
    /// Inverse temperature `β`.
    pub beta: f64,
    /// Price scale `c` in `X(t) = c M(t-1)`.
    pub c: f64,
    pub field: FieldModel,
    pub update: UpdateOrder,
    /// Initial strategy of every agent.
    pub initial_strategy: i8,
}

impl Default for SpinParams {
    fn default() -> Self {
        Self {
            side: 32,
            j: 1.0,
            alpha: 4.0,
            beta: 0.67,
            c: 0.1,
            field: FieldModel::Simplified,
            update: UpdateOrder::Sequential,
            initial_strategy: 1,
        }
    }
}

impl SpinParams {
    pub fn validate(&self) -> Result<()> {
        if self.side == 0 {
            return Err(Error::Domain("lattice side must be positive".into()));
        }
        if !(self.j >= 0.0 && self.j.is_finite()) {
            return Err(Error::Domain(format!("coupling J must be >= 0, got {}", self.j)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Domain(format!("global coupling must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("inverse temperature must be >= 0, got {}", self.beta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Domain(format!("price scale must be > 0, got {}", self.c)));
        }
        if self.initial_strategy != 1 && self.initial_strategy != -1 {
            return Err(Error::Domain("initial strategy must be +1 or -1".into()));
        }
        Ok(())
    }
}

/// Lattice of agents for one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinMarketState {
    side: usize,
    spins: Vec<i8>,
    strategies: Vec<i8>,
    /// Running `Σ s_j`, kept in sync with `spins`.
    spin_sum: i64,
    pub nn_coupling: f64,
    pub global_coupling: f64,
    pub inverse_temperature: f64,
    pub field: FieldModel,
    pub update: UpdateOrder,
    pub time: u64,
}

impl SpinMarketState {
    /// Spins i.i.d. uniform on `{-1, +1}`, strategies all `params.initial_strategy`.
    pub fn random<R: Rng + ?Sized>(params: &SpinParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let n = params.side * params.side;
        let spins = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self::from_spins(params, spins, vec![params.initial_strategy; n])
    }

    pub fn from_spins(params: &SpinParams, spins: Vec<i8>, strategies: Vec<i8>) -> Result<Self> {
        params.validate()?;
        let n = params.side * params.side;
        if spins.len() != n || strategies.len() != n {
            return Err(Error::Shape(format!(
                "lattice of side {} needs {n} spins and strategies, got {} and {}",
                params.side,
                spins.len(),
                strategies.len()
            )));
        }
        if spins.iter().chain(&strategies).any(|&v| v != 1 && v != -1) {
            return Err(Error::Domain("spins and strategies must be +1 or -1".into()));
        }
        let spin_sum = spins.iter().map(|&s| s as i64).sum();
        Ok(Self {
            side: params.side,
            spins,
            strategies,
            spin_sum,
            nn_coupling: params.j,
            global_coupling: params.alpha,
            inverse_temperature: params.beta,
            field: params.field,
            update: params.update,
            time: 0,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn strategies(&self) -> &[i8] {
        &self.strategies
    }

    pub fn spin_sum(&self) -> i64 {
        self.spin_sum
    }

    pub fn magnetization(&self) -> f64 {
        self.spin_sum as f64 / self.spins.len() as f64
    }

    /// The four periodic nearest neighbours of site `i` (duplicates allowed
    /// on lattices with side < 3).
    pub fn neighbours(&self, i: usize) -> [usize; 4] {
        let l = self.side;
        let (r, c) = (i / l, i % l);
        [
            ((r + l - 1) % l) * l + c,
            ((r + 1) % l) * l + c,
            r * l + (c + l - 1) % l,
            r * l + (c + 1) % l,
        ]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.spins.len() {
            return Err(Error::Index { index: i, len: self.spins.len() });
        }
        Ok(())
    }

    fn field_unchecked(&self, i: usize, spins: &[i8], spin_sum: i64) -> f64 {
        let nn: i32 = self.neighbours(i).iter().map(|&j| spins[j] as i32).sum();
        let m = spin_sum as f64 / spins.len() as f64;
        let global = match self.field {
            FieldModel::Simplified => spins[i] as f64 * m.abs(),
            FieldModel::Strategy => self.strategies[i] as f64 * m,
        };
        self.nn_coupling * nn as f64 - self.global_coupling * global
    }

    /// Local field `h_i(t)` felt by site `i`.
    pub fn local_field(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.field_unchecked(i, &self.spins, self.spin_sum))
    }

    /// Heat-bath draw for site `i` given a uniform `u` in `[0, 1)`.
    pub fn spin_update(&self, i: usize, u: f64) -> Result<i8> {
        let h = self.local_field(i)?;
        Ok(heat_bath_spin(self.inverse_temperature, h, u))
    }

    /// Strategy of site `i` after the switching rule: flips iff
    /// `α s_i C_i Σ s_j < 0`.
    pub fn strategy_switch(&self, i: usize) -> Result<i8> {
        self.check_index(i)?;
        Ok(switched_strategy(
            self.global_coupling,
            self.spins[i],
            self.strategies[i],
            self.spin_sum,
        ))
    }

    /// One sweep of `N` updates. Returns the magnetization after the sweep.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let n = self.spins.len();
        let strategy_dynamics = self.field == FieldModel::Strategy;
        match self.update {
            UpdateOrder::Sequential => {
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    let u: f64 = rng.random();
                    let h = self.field_unchecked(i, &self.spins, self.spin_sum);
                    let new_strategy = if strategy_dynamics {
                        switched_strategy(
                            self.global_coupling,
                            self.spins[i],
                            self.strategies[i],
                            self.spin_sum,
                        )
                    } else {
                        self.strategies[i]
                    };
                    let new_spin = heat_bath_spin(self.inverse_temperature, h, u);
                    self.spin_sum += (new_spin - self.spins[i]) as i64;
                    self.spins[i] = new_spin;
                    self.strategies[i] = new_strategy;
                }
            }
            UpdateOrder::Synchronous => {
                let old = self.spins.clone();
                let old_sum = self.spin_sum;
                let mut new_strategies = self.strategies.clone();
                for i in 0..n {
                    let u: f64 = rng.random();
                    let h = self.field_unchecked(i, &old, old_sum);
                    self.spins[i] = heat_bath_spin(self.inverse_temperature, h, u);
                    if strategy_dynamics {
                        new_strategies[i] = switched_strategy(
                            self.global_coupling,
                            old[i],
                            self.strategies[i],
                            old_sum,
                        );
                    }
                }
                self.strategies = new_strategies;
                self.spin_sum = self.spins.iter().map(|&s| s as i64).sum();
            }
        }
        self.time += 1;
        self.magnetization()
    }

    /// Runs `sweeps` sweeps and collects the magnetization after each.
    pub fn run<R: Rng + ?Sized>(&mut self, sweeps: usize, rng: &mut R) -> Vec<f64> {
        (0..sweeps).map(|_| self.step(rng)).collect()
    }
}

/// Probability of the up state, `1 / (1 + exp(-2 β h))`.
pub fn up_probability(beta: f64, h: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * beta * h).exp())
}

pub fn heat_bath_spin(beta: f64, h: f64, u: f64) -> i8 {
    if u < up_probability(beta, h) {
        1
    } else {
        -1
    }
}

pub fn switched_strategy(alpha: f64, spin: i8, strategy: i8, spin_sum: i64) -> i8 {
    if alpha * spin as f64 * strategy as f64 * (spin_sum as f64) < 0.0 {
        -strategy
    } else {
        strategy
    }
}

/// Log-price path driven by magnetization.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    /// `log p(0) .. log p(T)`.
    pub log_prices: Vec<f64>,
    pub price_scale: f64,
    /// `X(t) = log p(t) - log p(t-1) = c M(t-1)` for `t = 1..=T`.
    pub returns: Vec<f64>,
}

impl PriceSeries {
    pub fn prices(&self) -> Vec<f64> {
        self.log_prices.iter().map(|l| l.exp()).collect()
    }
}

/// `p(t+1) = p(t) exp(c M(t))`, accumulated in log space.
pub fn prices_from_magnetization(mags: &[f64], p0: f64, c: f64) -> Result<PriceSeries> {
    if !(p0 > 0.0 && p0.is_finite()) {
        return Err(Error::Domain(format!("initial price must be > 0, got {p0}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("price scale must be > 0, got {c}")));
    }
    let returns: Vec<f64> = mags.iter().map(|m| c * m).collect();
    let mut log_prices = Vec::with_capacity(mags.len() + 1);
    let mut lp = p0.ln();
    log_prices.push(lp);
    for x in &returns {
        lp += x;
        log_prices.push(lp);
    }
    Ok(PriceSeries { log_prices, price_scale: c, returns })
}
