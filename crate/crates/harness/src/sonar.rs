//! A synthetic stand-in for the UCI sonar data: 208 rows of 60 band
//! energies in [0, 1], 111 "mine" rows (label 1) and 97 "rock" rows
//! (label 0). Each class has its own smooth spectral profile; rows add
//! amplitude, peak-position jitter and band-correlated noise.

use pfg_core::RngHandle;

pub const BUILTIN_SONAR: &str = "builtin:sonar";
pub const SONAR_SEED: u64 = 20_220_803;
pub const SONAR_CSV: &str = include_str!("../data/sonar.csv");

const BANDS: usize = 60;
const MINES: usize = 111;
const ROCKS: usize = 97;

fn profile(j: f64, peak: f64) -> f64 {
    0.04 + 0.32 * (-((j - peak) / 11.0).powi(2)).exp() + 0.12 * j / BANDS as f64
}

fn row(rng: &mut RngHandle, mine: bool) -> Vec<f64> {
    let peak = if mine { 33.0 } else { 24.0 } + 4.0 * rng.normal();
    let amp = (0.3 * rng.normal()).exp();
    let mut noise = 0.0;
    (0..BANDS)
        .map(|j| {
            noise = 0.8 * noise + 0.06 * rng.normal();
            (amp * profile(j as f64, peak) + noise).clamp(0.0, 1.0)
        })
        .collect()
}

/// CSV text with a header row, features rounded to four decimals.
pub fn generate_sonar(seed: u64) -> String {
    let mut rng = RngHandle::new(seed);
    let mut labels: Vec<bool> = (0..MINES + ROCKS).map(|i| i < MINES).collect();
    // Fisher-Yates so the classes are interleaved
    for i in (1..labels.len()).rev() {
        let k = ((rng.uniform() * (i + 1) as f64) as usize).min(i);
        labels.swap(i, k);
    }
    let mut out = String::new();
    let header: Vec<String> = (1..=BANDS).map(|j| format!("band{j}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",label\n");
    for mine in labels {
        for v in row(&mut rng, mine) {
            out.push_str(&format!("{v:.4},"));
        }
        out.push_str(if mine { "1\n" } else { "0\n" });
    }
    out
}

/// The shipped data set.
pub fn sonar_dataset() -> pfg_core::Result<pfg_core::targets::Dataset> {
    pfg_core::targets::Dataset::from_csv_reader(SONAR_CSV.as_bytes())
}
