use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};
use crate::rng::RngStream;

use super::simulate::{draw_search_shocks, simulate_search_with_shocks, simulate_zero_cost};
use super::{ConsumerGrid, SearchOutcome, SearchParams};

/// Buy rate, searches per consumer and average rank of searched options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyStats {
    pub buy_rate: f64,
    pub searches_per_consumer: f64,
    pub search_ranking: f64,
}

pub fn key_stats(grid: &ConsumerGrid, outcomes: &[SearchOutcome]) -> Result<KeyStats> {
    if outcomes.is_empty() {
        return Err(NneError::domain("key statistics need at least one consumer"));
    }
    if outcomes.len() != grid.n_consumers() {
        return Err(NneError::dimension("outcomes", grid.n_consumers(), outcomes.len()));
    }
    let mut buys = 0usize;
    let mut searches = 0usize;
    let mut rank_sum = 0.0;
    for (i, o) in outcomes.iter().enumerate() {
        let ranks = grid.ranks(i);
        buys += o.bought.is_some() as usize;
        searches += o.n_searched();
        for &j in &o.search_order {
            rank_sum += *ranks
                .get(j)
                .ok_or_else(|| NneError::domain(format!("consumer {i}: option {j} out of range")))?
                as f64;
        }
    }
    let n = outcomes.len() as f64;
    Ok(KeyStats {
        buy_rate: buys as f64 / n,
        searches_per_consumer: searches as f64 / n,
        search_ranking: if searches == 0 { 0.0 } else { rank_sum / searches as f64 },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub buy_rate: f64,
    pub buy_rate_without_costs: f64,
}

impl Counterfactual {
    pub fn increment(&self) -> f64 {
        self.buy_rate_without_costs - self.buy_rate
    }
}

/// Buy rate with search costs and with all costs removed, under the same shocks.
pub fn counterfactual_zero_cost(
    params: &SearchParams,
    grid: &ConsumerGrid,
    stream: &RngStream,
) -> Result<Counterfactual> {
    let shocks = draw_search_shocks(grid, &mut stream.rng());
    let outcomes = simulate_search_with_shocks(params, grid, &shocks)?;
    let free = simulate_zero_cost(params, grid, &shocks);
    let n = grid.n_consumers() as f64;
    Ok(Counterfactual {
        buy_rate: outcomes.iter().filter(|o| o.bought.is_some()).count() as f64 / n,
        buy_rate_without_costs: free.iter().filter(|b| **b).count() as f64 / n,
    })
}
