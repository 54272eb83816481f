//! Scratch harness: simulates the reference table the calibration search
//! would produce, across corpus seeds.
//! Env knobs: DENS, COLOR, BLUR, LEN, DARK, SEEDS, GRID_STEP.

use eblc::augment::SeverityTable;
use eblc::calibrate::{build_reference_table, CalibrationConfig, Evaluator};
use eblc::codec::{BuiltinCodec, Crf};
use eblc::corpus::LabeledCorpus;
use eblc::detect::DetectorConfig;

fn env_list(name: &str, default: [f64; 3]) -> [f64; 3] {
    std::env::var(name)
        .ok()
        .map(|s| {
            let v: Vec<f64> = s.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .unwrap_or(default)
}

fn main() {
    let (w, h) = (128usize, 96usize);
    let mut severities = SeverityTable::default();
    let dens = env_list("DENS", [20.0, 30.0, 48.0]);
    let to_density = |n: f64| n * 1e6 / (w as f64 * h as f64);
    severities.light_rain.streak_density = to_density(dens[0]);
    severities.moderate_rain.streak_density = to_density(dens[1]);
    severities.heavy_rain.streak_density = to_density(dens[2]);
    let blur = env_list("BLUR", [1.0, 1.0, 1.0]);
    severities.light_rain.blur_radius = blur[0] as usize;
    severities.moderate_rain.blur_radius = blur[1] as usize;
    severities.heavy_rain.blur_radius = blur[2] as usize;
    let colors = env_list("COLOR", [184.0, 190.0, 196.0]);
    severities.light_rain.streak_color = [colors[0] as u8; 3];
    severities.moderate_rain.streak_color = [colors[1] as u8; 3];
    severities.heavy_rain.streak_color = [colors[2] as u8; 3];
    let lengths = env_list("LEN", [28.0, 28.0, 28.0]);
    severities.light_rain.streak_length = lengths[0];
    severities.moderate_rain.streak_length = lengths[1];
    severities.heavy_rain.streak_length = lengths[2];
    let dark = env_list("DARK", [0.85, 0.75, 0.62]);
    severities.light_dark.darkness_factor = dark[0];
    severities.medium_dark.darkness_factor = dark[1];
    severities.high_dark.darkness_factor = dark[2];

    let grid_step: u8 = std::env::var("GRID_STEP")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(2);
    let mut grid: Vec<Crf> = (grid_step..=50)
        .step_by(grid_step as usize)
        .map(|c| Crf::new(c).unwrap())
        .collect();
    grid.push(Crf::new(51).unwrap());
    let cfg = CalibrationConfig {
        coarse_grid: grid,
        ..CalibrationConfig::default()
    };

    let detector_cfg = DetectorConfig {
        input_size: 128,
        min_component_area: 60,
        ..DetectorConfig::default()
    };

    let seeds: Vec<u64> = std::env::var("SEEDS")
        .unwrap_or_else(|_| "1,2,3".into())
        .split(',')
        .map(|s| s.parse().unwrap())
        .collect();
    for seed in seeds {
        let corpus = LabeledCorpus::generate(seed, 12, 3, w, h).unwrap();
        let evaluator = Evaluator::new(
            &corpus,
            &severities,
            &detector_cfg,
            &BuiltinCodec,
            "contrast-v1",
            seed.wrapping_mul(31).wrapping_add(7),
        )
        .unwrap();
        let table = build_reference_table(&cfg, &evaluator, "tune".into()).unwrap();
        print!("seed {seed}: ");
        let mut values = Vec::new();
        for entry in &table.entries {
            let crf = entry.max_crf.map(|c| c.get() as i32).unwrap_or(-1);
            values.push(crf);
            print!("{}={:<3} ", entry.condition, crf);
        }
        let darkness_ok =
            values[0] >= values[1] && values[1] >= values[2] && values[2] >= values[3];
        let rain_ok = values[3] >= values[4] && values[4] >= values[5] && values[5] >= values[6];
        let crf0_ok = values.iter().all(|&v| v >= 0);
        println!(
            " chain: {}",
            if darkness_ok && rain_ok && crf0_ok {
                "OK"
            } else {
                "BROKEN"
            }
        );
    }
}
