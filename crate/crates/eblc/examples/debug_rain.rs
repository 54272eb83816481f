//! Scratch: per-threshold recall matrix for one condition across CRFs.

use eblc::augment::SeverityTable;
use eblc::classify::EnvCondition;
use eblc::codec::{BuiltinCodec, CompressionProfile, Crf, VideoCodec};
use eblc::corpus::LabeledCorpus;
use eblc::detect::synthetic::{DetectorCalibration, DetectorContext, THRESHOLD_GRID};
use eblc::detect::{match_detections, DetectorConfig, MatchCounts};
use eblc::seeds;

fn main() {
    let condition: EnvCondition = EnvCondition::parse(
        &std::env::var("COND").unwrap_or_else(|_| "normal".into()),
    )
    .unwrap();
    let corpus = LabeledCorpus::generate(1, 12, 3, 128, 96).unwrap();
    let mut severities = SeverityTable::default();
    severities.light_rain.streak_density = 7.0 * 1e6 / (128.0 * 96.0);
    severities.light_rain.streak_length = 28.0;
    severities.light_rain.streak_color = [160; 3];
    severities.light_rain.blur_radius = 1;
    severities.heavy_rain.streak_density = 28.0 * 1e6 / (128.0 * 96.0);
    severities.heavy_rain.streak_length = 28.0;
    severities.heavy_rain.streak_color = [172; 3];
    severities.heavy_rain.blur_radius = 1;

    let cfg = DetectorConfig {
        input_size: 128,
        min_component_area: 60,
        ..DetectorConfig::default()
    };

    print!("{:>4}", "crf");
    for t in THRESHOLD_GRID {
        print!(" {:>6.0}", t);
    }
    println!("   (recall per threshold; * = chosen)");
    for crf in [0u8, 26, 27, 28, 29, 34, 35, 36, 40] {
        let frames: Vec<_> = corpus
            .scenes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let severity = severities.severity(
                    condition,
                    seeds::derive(7, condition.index() as u64, i as u64),
                );
                eblc::augment::synthesize(&s.frame, &severity).unwrap()
            })
            .collect();
        let profile = CompressionProfile::builtin(Crf::new(crf).unwrap());
        let decoded = BuiltinCodec
            .decode(&BuiltinCodec.encode(&frames, &profile).unwrap())
            .unwrap();
        let contexts: Vec<_> = decoded.iter().map(|f| DetectorContext::new(f, &cfg)).collect();
        let truths = corpus.truths();
        let mut best = (0.0, f64::MAX);
        let recalls: Vec<f64> = THRESHOLD_GRID
            .iter()
            .map(|&t| {
                let mut counts = MatchCounts::default();
                for (ctx, tr) in contexts.iter().zip(&truths) {
                    counts.merge(match_detections(&ctx.detect(&cfg, t), tr, 0.5));
                }
                let r = counts.accuracy().unwrap();
                if r > best.0 {
                    best = (r, t);
                }
                r
            })
            .collect();
        print!("{crf:>4}");
        for (t, r) in THRESHOLD_GRID.iter().zip(&recalls) {
            let marker = if *t == best.1 { "*" } else { " " };
            print!(" {:>5.2}{}", r, marker);
        }
        println!();
        let _ = DetectorCalibration::default();
    }
}
