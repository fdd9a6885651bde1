use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use crate::decoder::{DecoderConfig, DecoderModel, PredictionState, Variant};
use crate::error::{Error, Result};
use crate::math::SeededRng;

/// Wall-clock statistics of repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingStats {
    pub runs: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    /// Population standard deviation of `per_run_ms`.
    pub std_ms: f64,
    pub per_run_ms: Vec<f64>,
}

/// Times `runs` calls of `step` after `warmup` untimed calls.
pub fn step_timer<F: FnMut()>(mut step: F, runs: usize, warmup: usize) -> Result<TimingStats> {
    if runs == 0 {
        return Err(Error::Config("timing needs at least one run".into()));
    }
    for _ in 0..warmup {
        step();
    }
    let mut per_run_ms = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        step();
        per_run_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let n = runs as f64;
    let mean_ms = per_run_ms.iter().sum::<f64>() / n;
    let std_ms = (per_run_ms.iter().map(|x| (x - mean_ms).powi(2)).sum::<f64>() / n).sqrt();
    Ok(TimingStats { runs, warmup, mean_ms, std_ms, per_run_ms })
}

/// Multiply-adds of one decoder step (label feedback, prediction network and
/// joint network), counted as two floating-point operations each.
pub fn step_flops(cfg: &DecoderConfig) -> u64 {
    let d_e = cfg.embed_dim as u64;
    let d_h = cfg.joint_dim as u64;
    let n = cfg.history as u64;
    let h = cfg.heads as u64;
    let prediction = match cfg.variant {
        Variant::Reduced => 2 * (h * n * d_e + n * d_e + d_e * d_e) + 10 * d_e,
        Variant::Stateless1Emb | Variant::Concat2Emb => 0,
        Variant::Lstm => {
            let units = cfg.lstm_units as u64;
            let proj = cfg.lstm_proj as u64;
            (0..cfg.lstm_layers as u64)
                .map(|l| {
                    let input = if l == 0 { d_e } else { proj };
                    2 * ((input + proj) * 4 * units + units * proj) + 10 * units
                })
                .sum()
        }
    };
    let joint = 2 * (cfg.encoder_dim as u64 * d_h + cfg.prediction_dim() as u64 * d_h + cfg.num_outputs() as u64 * d_h)
        + 2 * d_h;
    prediction + joint
}

/// A decoder and its inputs, allocated before any timing starts.
pub struct DecoderStepBench {
    pub name: String,
    model: DecoderModel,
    frame: Vec<f64>,
    state: PredictionState,
    label: usize,
}

impl DecoderStepBench {
    pub fn new(name: impl Into<String>, config: DecoderConfig, seed: u64) -> Result<Self> {
        let model = DecoderModel::init(config, seed)?;
        let mut rng = SeededRng::new(seed ^ 0x5eed);
        let frame = (0..model.config.encoder_dim).map(|_| rng.gaussian()).collect();
        let mut state = model.initial_state();
        for _ in 0..model.config.history {
            state = model.advance(&state, rng.below(model.config.vocab_size))?;
        }
        let label = rng.below(model.config.vocab_size);
        Ok(Self { name: name.into(), model, frame, state, label })
    }

    pub fn model(&self) -> &DecoderModel {
        &self.model
    }

    /// One decoder step: feed back a label, run the prediction network and
    /// the joint network. Returns the logits.
    pub fn step(&self) -> Vec<f64> {
        let state = self.model.advance(&self.state, self.label).expect("label in range");
        let g = self.model.prediction_forward(&state).expect("valid state");
        self.model.joint_forward(&self.frame, &g).expect("dims agree")
    }
}

/// Machine-readable timing record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub core_label: String,
    pub decoder_name: String,
    pub runs: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Timing records plus analytic cost of each decoder step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub step_flops: Vec<(String, u64)>,
}

impl BenchReport {
    fn find(&self, name: &str) -> Option<(&BenchRecord, u64)> {
        let rec = self.records.iter().find(|r| r.decoder_name == name)?;
        let flops = self.step_flops.iter().find(|(n, _)| n == name)?.1;
        Some((rec, flops))
    }

    /// `mean(baseline) / mean(candidate)`.
    pub fn speedup(&self, baseline: &str, candidate: &str) -> Option<f64> {
        Some(self.find(baseline)?.0.mean_ms / self.find(candidate)?.0.mean_ms)
    }

    pub fn flop_ratio(&self, baseline: &str, candidate: &str) -> Option<f64> {
        Some(self.find(baseline)?.1 as f64 / self.find(candidate)?.1 as f64)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:<16} {:>8} {:>12} {:>12} {:>14}\n",
            "core", "decoder", "runs", "mean_ms", "std_ms", "step_flops"
        );
        for r in &self.records {
            let flops = self.find(&r.decoder_name).map_or(0, |(_, f)| f);
            out.push_str(&format!(
                "{:<10} {:<16} {:>8} {:>12.4} {:>12.4} {:>14}\n",
                r.core_label, r.decoder_name, r.runs, r.mean_ms, r.std_ms, flops
            ));
        }
        out
    }
}

/// Benchmarks decoder steps one after another on the calling thread. All
/// decoders are built before the first timed step.
pub fn bench_decoders(
    decoders: &[(String, DecoderConfig)],
    runs: usize,
    warmup: usize,
    seed: u64,
    core_label: &str,
) -> Result<BenchReport> {
    let benches = decoders
        .iter()
        .map(|(name, cfg)| DecoderStepBench::new(name.clone(), cfg.clone(), seed))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(benches.len());
    for bench in &benches {
        let stats = step_timer(|| { black_box(bench.step()); }, runs, warmup)?;
        records.push(BenchRecord {
            core_label: core_label.to_string(),
            decoder_name: bench.name.clone(),
            runs,
            mean_ms: stats.mean_ms,
            std_ms: stats.std_ms,
        });
    }
    let step_flops = benches.iter().map(|b| (b.name.clone(), step_flops(&b.model.config))).collect();
    Ok(BenchReport { records, step_flops })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noop_is_near_zero() {
        let stats = step_timer(|| {}, 1000, 10).unwrap();
        assert!(stats.mean_ms < 0.01, "{}", stats.mean_ms);
        assert_eq!(stats.per_run_ms.len(), 1000);
    }

    #[test]
    fn std_is_population_std() {
        let stats = step_timer(|| std::thread::sleep(std::time::Duration::from_micros(50)), 20, 0).unwrap();
        let m = stats.per_run_ms.iter().sum::<f64>() / 20.0;
        let v = stats.per_run_ms.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 20.0;
        assert!((stats.std_ms - v.sqrt()).abs() < 1e-12);
        assert!((stats.mean_ms - m).abs() < 1e-12);
    }

    #[test]
    fn zero_runs_rejected() {
        assert!(matches!(step_timer(|| {}, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn flop_ratio_at_full_scale() {
        let small = step_flops(&DecoderConfig::preset("ReducedSmall").unwrap());
        let lstm = step_flops(&DecoderConfig::preset("LSTM").unwrap());
        assert!(lstm as f64 / small as f64 >= 5.0, "{lstm} / {small}");
    }
}
