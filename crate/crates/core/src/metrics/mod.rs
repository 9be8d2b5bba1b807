//! Token-priced cost, the latency estimate, efficiency ratios and Pareto
//! fronts.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{HistoryTechnique, ModelExchange, Role};

/// Per-model pricing (USD per million tokens) and optional latency profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPricing {
    pub input_per_mtok: f64,
    pub output_per_mtok: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_tok_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttft_s: Option<f64>,
}

/// The `prices.json` table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable {
    pub models: BTreeMap<String, ModelPricing>,
}

const DEFAULT_PRICES: &str = include_str!("../../assets/prices.json");

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no price for model {0:?}")]
    Unpriced(String),
    #[error("no latency profile for model {0:?}")]
    NoLatencyProfile(String),
    #[error("invalid price table: {0}")]
    Invalid(String),
    #[error("latency delta {0} s is not positive; efficiency is undefined")]
    NonPositiveDelta(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PriceTable {
    /// GPT-4.1 family list prices and the published throughput/TTFT averages.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_PRICES).expect("bundled price table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        let table: PriceTable = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for (id, p) in &self.models {
            let bad = |what: &str| Err(MetricsError::Invalid(format!("{id}: {what}")));
            if !(p.input_per_mtok >= 0.0 && p.output_per_mtok >= 0.0) {
                return bad("prices must be non-negative");
            }
            if p.throughput_tok_s.is_some_and(|t| !(t > 0.0)) {
                return bad("throughput must be positive");
            }
            if p.ttft_s.is_some_and(|t| !(t >= 0.0)) {
                return bad("ttft must be non-negative");
            }
        }
        Ok(())
    }

    pub fn get(&self, model: &str) -> Result<&ModelPricing, MetricsError> {
        self.models
            .get(model)
            .ok_or_else(|| MetricsError::Unpriced(model.to_owned()))
    }

    pub fn insert(&mut self, model: impl Into<String>, pricing: ModelPricing) {
        self.models.insert(model.into(), pricing);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub throughput_tok_s: f64,
    pub ttft_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub models: BTreeMap<String, LatencyProfile>,
    /// Pre-action summaries finishing inside this window cost nothing.
    pub parallel_window_s: f64,
}

impl LatencyModel {
    pub const DEFAULT_WINDOW_S: f64 = 3.0;

    pub fn from_prices(prices: &PriceTable) -> Self {
        let models = prices
            .models
            .iter()
            .filter_map(|(id, p)| {
                Some((
                    id.clone(),
                    LatencyProfile {
                        throughput_tok_s: p.throughput_tok_s?,
                        ttft_s: p.ttft_s?,
                    },
                ))
            })
            .collect();
        Self {
            models,
            parallel_window_s: Self::DEFAULT_WINDOW_S,
        }
    }

    pub fn profile(&self, model: &str) -> Result<LatencyProfile, MetricsError> {
        self.models
            .get(model)
            .copied()
            .ok_or_else(|| MetricsError::NoLatencyProfile(model.to_owned()))
    }
}

/// USD for a ledger. Reasoning tokens bill at the output rate.
pub fn cost_of(exchanges: &[ModelExchange], prices: &PriceTable) -> Result<f64, MetricsError> {
    exchanges.iter().try_fold(0.0, |acc, ex| {
        let p = prices.get(&ex.model)?;
        Ok(acc
            + ex.tokens_in as f64 * p.input_per_mtok / 1e6
            + (ex.tokens_out + ex.reasoning_tokens) as f64 * p.output_per_mtok / 1e6)
    })
}

/// `ttft + generated / throughput`, generated counting reasoning tokens.
pub fn exchange_latency(exchange: &ModelExchange, model: &LatencyModel) -> Result<f64, MetricsError> {
    let p = model.profile(&exchange.model)?;
    Ok(p.ttft_s + (exchange.tokens_out + exchange.reasoning_tokens) as f64 / p.throughput_tok_s)
}

/// Estimated wall time of a ledger. Under pre-action history the summarizer
/// runs alongside action execution and only its overrun of the window counts.
pub fn estimate_latency(
    exchanges: &[ModelExchange],
    model: &LatencyModel,
    history: HistoryTechnique,
) -> Result<f64, MetricsError> {
    exchanges.iter().try_fold(0.0, |acc, ex| {
        let lat = exchange_latency(ex, model)?;
        let contribution = if ex.role == Role::Summarizer && history == HistoryTechnique::PreAction {
            (lat - model.parallel_window_s).max(0.0)
        } else {
            lat
        };
        Ok(acc + contribution)
    })
}

/// One configuration on the cost/latency/TSR plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub label: String,
    pub tsr: f64,
    pub cost_per_task_usd: f64,
    pub est_latency_per_task_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParetoAxis {
    Cost,
    Latency,
}

impl EfficiencyPoint {
    pub fn expense(&self, axis: ParetoAxis) -> f64 {
        match axis {
            ParetoAxis::Cost => self.cost_per_task_usd,
            ParetoAxis::Latency => self.est_latency_per_task_s,
        }
    }
}

/// TSR gained per extra second. Errors when the variant is not slower.
pub fn latency_efficiency(baseline: &EfficiencyPoint, variant: &EfficiencyPoint) -> Result<f64, MetricsError> {
    let dl = variant.est_latency_per_task_s - baseline.est_latency_per_task_s;
    if !(dl > 0.0) {
        return Err(MetricsError::NonPositiveDelta(dl));
    }
    Ok((variant.tsr - baseline.tsr) / dl)
}

/// TSR gained per extra dollar per task.
pub fn cost_efficiency(baseline: &EfficiencyPoint, variant: &EfficiencyPoint) -> Result<f64, MetricsError> {
    let dc = variant.cost_per_task_usd - baseline.cost_per_task_usd;
    if !(dc > 0.0) {
        return Err(MetricsError::NonPositiveDelta(dc));
    }
    Ok((variant.tsr - baseline.tsr) / dc)
}

/// Undominated points (no other point is at most as expensive with at least
/// the TSR, one of them strictly), cheapest first. Equal points survive
/// together in input order.
pub fn pareto_front(points: &[EfficiencyPoint], axis: ParetoAxis) -> Vec<EfficiencyPoint> {
    let mut order: Vec<&EfficiencyPoint> = points.iter().collect();
    order.sort_by(|a, b| {
        a.expense(axis)
            .total_cmp(&b.expense(axis))
            .then_with(|| b.tsr.total_cmp(&a.tsr))
    });
    let mut front = Vec::new();
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let expense = order[i].expense(axis);
        let group_end = order[i..]
            .iter()
            .position(|p| p.expense(axis).total_cmp(&expense) != Ordering::Equal)
            .map_or(order.len(), |n| i + n);
        let top = order[i].tsr;
        if top > best_cheaper {
            front.extend(
                order[i..group_end]
                    .iter()
                    .take_while(|p| p.tsr.total_cmp(&top) == Ordering::Equal)
                    .map(|p| (*p).clone()),
            );
            best_cheaper = top;
        }
        i = group_end;
    }
    front
}

/// `label,tsr,cost,latency` rows with a header.
pub fn write_points_csv<W: Write>(points: &[EfficiencyPoint], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "tsr", "cost", "latency"])?;
    for p in points {
        w.write_record([
            p.label.clone(),
            format!("{:.6}", p.tsr),
            format!("{:.8}", p.cost_per_task_usd),
            format!("{:.6}", p.est_latency_per_task_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn ex(role: Role, model: &str, tin: u64, tout: u64) -> ModelExchange {
        ModelExchange {
            role,
            model: model.into(),
            prompt_hash: String::new(),
            response_text: String::new(),
            tokens_in: tin,
            tokens_out: tout,
            reasoning_tokens: 0,
            wall_time_s: 0.0,
        }
    }

    fn pt(label: &str, tsr: f64, cost: f64) -> EfficiencyPoint {
        EfficiencyPoint {
            label: label.into(),
            tsr,
            cost_per_task_usd: cost,
            est_latency_per_task_s: 0.0,
        }
    }

    #[test]
    fn cost_hand_arithmetic() {
        let prices = PriceTable::builtin();
        let c = cost_of(&[ex(Role::Actor, "gpt-4.1", 1000, 100)], &prices).unwrap();
        assert!((c - 0.0028).abs() < 1e-12);
        assert_eq!(cost_of(&[], &prices).unwrap(), 0.0);
        assert!(matches!(
            cost_of(&[ex(Role::Actor, "unknown", 1, 1)], &prices),
            Err(MetricsError::Unpriced(_))
        ));
        let mut r = ex(Role::Actor, "gpt-4.1", 0, 0);
        r.reasoning_tokens = 1_000_000;
        assert!((cost_of(&[r], &prices).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn latency_rules() {
        let m = LatencyModel::from_prices(&PriceTable::builtin());
        let l = estimate_latency(&[ex(Role::Actor, "gpt-4.1", 0, 61)], &m, HistoryTechnique::RawTrace).unwrap();
        assert!((l - (0.839 + 61.0 / 60.7)).abs() < 1e-12);
        let s = ex(Role::Summarizer, "gpt-4.1", 0, 61);
        assert_eq!(estimate_latency(std::slice::from_ref(&s), &m, HistoryTechnique::PreAction).unwrap(), 0.0);
        let post = estimate_latency(&[s], &m, HistoryTechnique::PostAction).unwrap();
        assert!((post - l).abs() < 1e-12);
        // 300 tokens take about 5.8 s, so 2.8 s overrun the window
        let long = ex(Role::Summarizer, "gpt-4.1", 0, 300);
        let over = estimate_latency(&[long], &m, HistoryTechnique::PreAction).unwrap();
        assert!((over - (0.839 + 300.0 / 60.7 - 3.0)).abs() < 1e-12);
        assert!(matches!(
            estimate_latency(&[ex(Role::Actor, "gpt-4.1-nano", 0, 1)], &m, HistoryTechnique::RawTrace),
            Err(MetricsError::NoLatencyProfile(_))
        ));
    }

    #[test]
    fn efficiency() {
        let mut b = pt("b", 0.3, 0.0);
        let mut v = pt("v", 0.3807, 0.0);
        b.est_latency_per_task_s = 1.0;
        v.est_latency_per_task_s = 3.0;
        assert!((latency_efficiency(&b, &v).unwrap() - 0.04035).abs() < 1e-12);
        v.est_latency_per_task_s = 1.0;
        assert!(latency_efficiency(&b, &v).is_err());
    }

    #[test]
    fn pareto_examples() {
        let a = pt("a", 0.4, 0.10);
        let b = pt("b", 0.3, 0.12);
        assert_eq!(pareto_front(&[b.clone(), a.clone()], ParetoAxis::Cost), vec![a.clone()]);
        assert_eq!(pareto_front(std::slice::from_ref(&b), ParetoAxis::Cost), vec![b]);
        let twin = pt("twin", 0.4, 0.10);
        assert_eq!(pareto_front(&[a.clone(), twin.clone()], ParetoAxis::Cost), vec![a, twin]);
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        write_points_csv(&[pt("x", 0.5, 0.25)], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "label,tsr,cost,latency\nx,0.500000,0.25000000,0.000000\n");
    }

    #[test]
    fn builtin_table_rejects_negative() {
        assert!(PriceTable::from_json(r#"{"m": {"input_per_mtok": -1, "output_per_mtok": 1}}"#).is_err());
    }

    proptest! {
        #[test]
        fn cost_is_additive(a in 0u64..1_000_000, b in 0u64..1_000_000, c in 0u64..1_000_000, d in 0u64..1_000_000) {
            let prices = PriceTable::builtin();
            let x = ex(Role::Actor, "gpt-4.1-mini", a, b);
            let y = ex(Role::Summarizer, "gpt-4.1", c, d);
            let sum = cost_of(std::slice::from_ref(&x), &prices).unwrap() + cost_of(std::slice::from_ref(&y), &prices).unwrap();
            prop_assert!((cost_of(&[x, y], &prices).unwrap() - sum).abs() < 1e-9);
        }

        #[test]
        fn latency_monotone(out in 0u64..10_000, extra in 0u64..1000) {
            let m = LatencyModel::from_prices(&PriceTable::builtin());
            for h in HistoryTechnique::ALL {
                let lo = estimate_latency(&[ex(Role::Summarizer, "gpt-4.1", 0, out)], &m, h).unwrap();
                let hi = estimate_latency(&[ex(Role::Summarizer, "gpt-4.1", 0, out + extra)], &m, h).unwrap();
                prop_assert!(hi >= lo);
            }
        }

        #[test]
        fn smaller_summarizer_is_cheaper(tin in 1u64..100_000, tout in 1u64..10_000) {
            let prices = PriceTable::builtin();
            let big = cost_of(&[ex(Role::Summarizer, "gpt-4.1", tin, tout)], &prices).unwrap();
            let small = cost_of(&[ex(Role::Summarizer, "gpt-4.1-mini", tin, tout)], &prices).unwrap();
            prop_assert!(small < big);
        }
    }
}
