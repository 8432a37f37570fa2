use serde::{Deserialize, Serialize};

/// USD per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub prompt_price_per_million: f64,
    pub completion_price_per_million: f64,
}

impl PriceTable {
    /// gpt-4o-mini list prices.
    pub const GPT_4O_MINI: PriceTable = PriceTable {
        prompt_price_per_million: 0.15,
        completion_price_per_million: 0.60,
    };

    /// GPT-4V list prices.
    pub const GPT_4V: PriceTable = PriceTable {
        prompt_price_per_million: 5.00,
        completion_price_per_million: 15.00,
    };
}

impl Default for PriceTable {
    fn default() -> Self {
        PriceTable::GPT_4O_MINI
    }
}

pub fn estimate_cost(prompt_tokens: u64, completion_tokens: u64, table: &PriceTable) -> f64 {
    prompt_tokens as f64 / 1e6 * table.prompt_price_per_million
        + completion_tokens as f64 / 1e6 * table.completion_price_per_million
}
