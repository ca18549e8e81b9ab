//! Synthetic data set with a planted answer, bundled under `fixtures/`.
//!
//! A persistent consumption factor `g` loads on every search term through
//! heavy term noise and a per-category nuisance factor, except the Food term
//! `restaurants`, which tracks `g` almost exactly. Consumption growth is
//! driven by the macro indicators and by `g`, so the Food index should win
//! the category evaluation and temporal smoothing (the factor model) should
//! beat the static principal component.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::{slug, Category, RawSeries, Vocabulary};
use crate::rng::{rng_from_seed, split_seed, PortableRng};
use crate::series::{Month, TimeSeries};

pub const SEED: u64 = 20_240_611;
pub const PLANTED: Category = Category::Food;
pub const START: &str = "2007-01";
pub const MONTHS: usize = 216;

/// Config written next to the generated files.
pub const CONFIG: &str = include_str!("fixture.toml");

pub struct Fixture {
    pub trends: Vec<RawSeries>,
    /// Level series by file stem.
    pub targets: Vec<(String, TimeSeries<f64>)>,
    /// The consumption factor, for reference.
    pub factor: Vec<f64>,
}

fn normal(rng: &mut PortableRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Unit-variance AR(1) path.
fn ar1(len: usize, phi: f64, rng: &mut PortableRng) -> Vec<f64> {
    let sd = (1.0 - phi * phi).sqrt();
    let mut x = normal(rng);
    (0..len)
        .map(|_| {
            let v = x;
            x = phi * x + sd * normal(rng);
            v
        })
        .collect()
}

/// Turns growth rates (percent, from month 12 on) into index levels.
fn levels(growth: &[f64], rng: &mut PortableRng) -> Vec<f64> {
    let mut out: Vec<f64> = (0..12).map(|_| 100.0 + normal(rng)).collect();
    for t in 12..growth.len() {
        out.push(out[t - 12] * (1.0 + growth[t] / 100.0));
    }
    out
}

pub fn generate(seed: u64) -> Fixture {
    let start: Month = START.parse().expect("valid month");
    let vocabulary = Vocabulary::shipped();
    let mut rng = rng_from_seed(split_seed(seed, "latent"));
    let g = ar1(MONTHS, 0.97, &mut rng);
    let nuisance: Vec<(Category, Vec<f64>)> = Category::ALL
        .iter()
        .map(|&c| (c, ar1(MONTHS, 0.8, &mut rng)))
        .collect();

    let mut trends = Vec::new();
    for (j, entry) in vocabulary.entries.iter().enumerate() {
        let mut rng = rng_from_seed(split_seed(seed, &format!("term:{}", entry.term)));
        let n = &nuisance.iter().find(|(c, _)| *c == entry.category).expect("all categories").1;
        let (lg, ln, le) = match entry.term.as_str() {
            "restaurants" => (1.0, 0.0, 0.15),
            "Pizza Hut" => (1.0, 0.0, 0.5),
            _ => (0.8, 0.9, 1.3),
        };
        let mut observations: Vec<(Month, f64)> = (0..MONTHS)
            .map(|t| {
                let x = lg * g[t] + ln * n[t] + le * normal(&mut rng);
                (start.offset(t as i32), (50.0 + 8.0 * x).round().clamp(0.0, 100.0))
            })
            .collect();
        // A few interior gaps in every fifth term.
        if j % 5 == 4 {
            for k in 0..3 {
                let at = 20 + (j * 37 + k * 53) % (MONTHS - 40);
                if at < observations.len() - 1 {
                    observations.remove(at);
                }
            }
        }
        trends.push(RawSeries {
            term: entry.term.clone(),
            category: Some(entry.category),
            observations,
        });
    }

    let mut rng = rng_from_seed(split_seed(seed, "macro"));
    let a: Vec<Vec<f64>> = (0..4).map(|_| ar1(MONTHS, 0.9, &mut rng)).collect();
    let employment: Vec<f64> = a[0].iter().map(|v| 2.0 + 1.5 * v).collect();
    let consumer_credit: Vec<f64> = a[1].iter().map(|v| 8.0 + 3.0 * v).collect();
    let mortgage_credit: Vec<f64> = a[2].iter().map(|v| 6.0 + 2.0 * v).collect();
    let cpi: Vec<f64> = a[3].iter().map(|v| 3.0 + v).collect();
    let commerce: Vec<f64> = (0..MONTHS)
        .map(|t| 1.0 + 0.5 * employment[t] + 0.3 * consumer_credit[t] + 0.8 * g[t] + 0.5 * normal(&mut rng))
        .collect();
    let consumption: Vec<f64> = (0..MONTHS)
        .map(|t| {
            2.0 + 0.2 * employment[t] + 0.12 * consumer_credit[t] + 1.5 * g[t] + 0.3 * normal(&mut rng)
        })
        .collect();

    let targets = [
        ("consumption", consumption),
        ("commerce", commerce),
        ("employment", employment),
        ("consumer_credit", consumer_credit),
        ("mortgage_credit", mortgage_credit),
        ("cpi", cpi),
    ]
    .into_iter()
    .map(|(name, growth)| {
        let v = levels(&growth, &mut rng);
        (name.to_string(), TimeSeries::monthly(start, v))
    })
    .collect();

    Fixture {
        trends,
        targets,
        factor: g,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `trends/`, `targets/` and `pipeline.toml` under `dir`.
pub fn write(dir: &Path, seed: u64) -> Result<()> {
    let fixture = generate(seed);
    let trends = dir.join("trends");
    let targets = dir.join("targets");
    for d in [&trends, &targets] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for s in &fixture.trends {
        write_file(&trends.join(format!("{}.csv", slug(&s.term))), &s.to_csv())?;
    }
    for (name, s) in &fixture.targets {
        let mut out = String::from("date,value\n");
        for (i, v) in s.values.iter().enumerate() {
            out.push_str(&format!("{},{v:.6}\n", s.label(i)));
        }
        write_file(&targets.join(format!("{name}.csv")), &out)?;
    }
    write_file(&dir.join("pipeline.toml"), CONFIG)
}
