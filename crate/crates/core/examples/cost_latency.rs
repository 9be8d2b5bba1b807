//! Token pricing, latency estimates and efficiency between configurations.

use replaybench::agent::{HistoryTechnique, ModelExchange, Role};
use replaybench::metrics::{
    cost_efficiency, cost_of, estimate_latency, latency_efficiency, pareto_front, EfficiencyPoint, LatencyModel,
    ParetoAxis, PriceTable,
};

fn call(role: Role, model: &str, tokens_in: u64, tokens_out: u64, reasoning: u64) -> ModelExchange {
    ModelExchange {
        role,
        model: model.into(),
        prompt_hash: String::new(),
        response_text: String::new(),
        tokens_in,
        tokens_out,
        reasoning_tokens: reasoning,
        wall_time_s: 0.0,
    }
}

pub fn main() {
    let prices = PriceTable::builtin();
    let latency = LatencyModel::from_prices(&prices);

    let step = [call(Role::Actor, "gpt-4.1", 1000, 100, 0)];
    println!("one actor call: ${:.4}", cost_of(&step, &prices).unwrap());
    let lat = estimate_latency(&[call(Role::Actor, "gpt-4.1", 1000, 61, 0)], &latency, HistoryTechnique::RawTrace).unwrap();
    println!("61 output tokens: {lat:.3}s");

    // A summary written before the action overlaps with executing it.
    let summary = [call(Role::Summarizer, "gpt-4.1-mini", 1500, 150, 0)];
    for history in [HistoryTechnique::PreAction, HistoryTechnique::PostAction] {
        let s = estimate_latency(&summary, &latency, history).unwrap();
        println!("150-token summary under {history:?}: {s:.3}s");
    }

    let point = |label: &str, tsr: f64, cost: f64, lat: f64| EfficiencyPoint {
        label: label.into(),
        tsr,
        cost_per_task_usd: cost,
        est_latency_per_task_s: lat,
    };
    let points = [
        point("baseline", 0.30, 0.020, 12.0),
        point("+reflection", 0.36, 0.041, 21.0),
        point("+react", 0.33, 0.030, 15.0),
        point("+summaries", 0.31, 0.045, 25.0),
    ];
    for p in &points[1..] {
        println!(
            "{}: {:.2} TSR/s, {:.1} TSR/$",
            p.label,
            latency_efficiency(&points[0], p).unwrap(),
            cost_efficiency(&points[0], p).unwrap()
        );
    }
    let front: Vec<String> = pareto_front(&points, ParetoAxis::Cost).into_iter().map(|p| p.label).collect();
    println!("cost Pareto front: {}", front.join(" < "));
}
