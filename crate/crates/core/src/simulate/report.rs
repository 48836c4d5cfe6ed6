//! Empirical information-stability checks and trace export.

use std::io::Write;

use serde::Serialize;

use super::SimulationTrace;

/// Counts of `|deviation|` in bins with edges `{0, ¼, ½, 1, 2, 4}·ε` and an
/// overflow bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl DeviationHistogram {
    fn new(deviations: &[f64], eps: f64) -> Self {
        let edges: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|m| m * eps).collect();
        let mut counts = vec![0; edges.len()];
        for d in deviations {
            let bin = edges.iter().rposition(|e| d.abs() >= *e).unwrap_or(0);
            counts[bin] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonCheck {
    pub steps: usize,
    pub rate_violation_fraction: f64,
    pub cost_violation_fraction: f64,
    pub max_rate_deviation: f64,
    pub max_cost_deviation: f64,
    pub rate_histogram: DeviationHistogram,
    pub cost_histogram: DeviationHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub traces: usize,
    pub target_rate: f64,
    pub target_cost: f64,
    pub rate_epsilon: f64,
    pub cost_epsilon: f64,
    /// Checks at one tenth of the horizon and at the full horizon.
    pub horizons: Vec<HorizonCheck>,
    /// Violation fractions do not grow from the short to the long horizon.
    pub concentrating: bool,
    /// No violations at the full horizon.
    pub passed: bool,
    pub terminal_rates: Vec<f64>,
    pub terminal_costs: Vec<f64>,
}

fn fraction(devs: &[f64], eps: f64) -> f64 {
    if devs.is_empty() {
        return 0.0;
    }
    devs.iter().filter(|d| d.abs() > eps).count() as f64 / devs.len() as f64
}

fn check(traces: &[SimulationTrace], steps: usize, rate: f64, cost: f64, rate_eps: f64, cost_eps: f64) -> HorizonCheck {
    let k = steps - 1;
    let rd: Vec<f64> = traces.iter().map(|t| t.running_rate[k] - rate).collect();
    let cd: Vec<f64> = traces.iter().map(|t| t.running_cost[k] - cost).collect();
    let max_abs = |v: &[f64]| v.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
    HorizonCheck {
        steps,
        rate_violation_fraction: fraction(&rd, rate_eps),
        cost_violation_fraction: fraction(&cd, cost_eps),
        max_rate_deviation: max_abs(&rd),
        max_cost_deviation: max_abs(&cd),
        rate_histogram: DeviationHistogram::new(&rd, rate_eps),
        cost_histogram: DeviationHistogram::new(&cd, cost_eps),
    }
}

/// Deviation of time-averaged information density and cost from their
/// targets, at `steps/10` and `steps` for the common trace length.
pub fn stability_report(
    traces: &[SimulationTrace],
    target_rate: f64,
    target_cost: f64,
    rate_epsilon: f64,
    cost_epsilon: f64,
) -> StabilityReport {
    let steps = traces.iter().map(|t| t.steps).min().unwrap_or(0);
    let mut horizons = Vec::new();
    if steps > 0 {
        let short = (steps / 10).max(1);
        horizons.push(check(traces, short, target_rate, target_cost, rate_epsilon, cost_epsilon));
        if short != steps {
            horizons.push(check(traces, steps, target_rate, target_cost, rate_epsilon, cost_epsilon));
        }
    }
    let concentrating = horizons.windows(2).all(|w| {
        w[1].rate_violation_fraction <= w[0].rate_violation_fraction
            && w[1].cost_violation_fraction <= w[0].cost_violation_fraction
    });
    let passed = horizons
        .last()
        .is_some_and(|h| h.rate_violation_fraction == 0.0 && h.cost_violation_fraction == 0.0);
    StabilityReport {
        traces: traces.len(),
        target_rate,
        target_cost,
        rate_epsilon,
        cost_epsilon,
        horizons,
        concentrating,
        passed,
        terminal_rates: traces.iter().map(|t| t.running_rate[steps - 1]).collect(),
        terminal_costs: traces.iter().map(|t| t.running_cost[steps - 1]).collect(),
    }
}

/// CSV with columns `step, b0…, a0…, info_density, cost, running_rate`.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = trace.b_path.first().map_or(0, |b| b.len());
    let q = trace.a_path.first().map_or(0, |a| a.len());
    let mut header = vec!["step".to_string()];
    header.extend((0..p).map(|j| format!("b{j}")));
    header.extend((0..q).map(|j| format!("a{j}")));
    header.extend(["info_density", "cost", "running_rate"].map(String::from));
    w.write_record(&header)?;
    for i in 0..trace.steps {
        let mut row = vec![i.to_string()];
        row.extend(trace.b_path[i].iter().map(|v| format!("{v:e}")));
        row.extend(trace.a_path[i].iter().map(|v| format!("{v:e}")));
        for v in [trace.info_density_path[i], trace.cost_path[i], trace.running_rate[i]] {
            row.push(format!("{v:e}"));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelModel, Strategy};
    use crate::simulate::simulate_batch;
    use crate::Mat;

    fn s1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn histogram_bins() {
        let h = DeviationHistogram::new(&[0.0, -0.3, 0.6, 1.5, -10.0], 1.0);
        assert_eq!(h.counts, vec![1, 1, 1, 1, 0, 1]);
    }

    #[test]
    fn silent_strategy_has_zero_rate() {
        let model = ChannelModel::scalar(2.0, 1.0, 1.0, 1.0, 0.0, 3.0);
        let st = Strategy::stationary(s1(-1.5), s1(0.0));
        let traces = simulate_batch(&model, &st, 2000, &[1, 2, 3]).unwrap();
        let rep = stability_report(&traces, 0.0, 3.0, 0.02, 0.5);
        assert!(rep.terminal_rates.iter().all(|r| *r == 0.0));
        assert_eq!(rep.horizons.len(), 2);
        assert_eq!(rep.horizons[1].rate_violation_fraction, 0.0);
    }

    #[test]
    fn csv_layout() {
        let model = ChannelModel::scalar(0.5, 1.0, 1.0, 1.0, 0.0, 1.0);
        let st = Strategy::stationary(s1(0.0), s1(1.0));
        let t = crate::simulate::sample_trajectory(&model, &st, 3, 0).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,b0,a0,info_density,cost,running_rate");
        assert_eq!(lines.len(), 4);
    }
}
