#![allow(dead_code)]

use stwd_sfnn::dataset::{Dataset, Label};
use stwd_sfnn::numerics::RngStream;

/// Binary dataset with `rows` rows and `features` uniform features; the label
/// is the sign of a random linear score plus noise, so some rows are hard.
pub fn random_linear(rows: usize, features: usize, stream: &mut RngStream) -> Dataset {
    let w: Vec<f64> = (0..features).map(|_| stream.next_normal(0.0, 1.0).unwrap()).collect();
    let mut x = Vec::with_capacity(rows);
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let r: Vec<f64> = (0..features).map(|_| stream.next_unit()).collect();
        let score: f64 = r.iter().zip(&w).map(|(a, b)| (a - 0.5) * b).sum::<f64>() + stream.next_normal(0.0, 0.3).unwrap();
        y.push(if score >= 0.0 { Label::Positive } else { Label::Negative });
        x.push(r);
    }
    y[0] = Label::Positive;
    y[1] = Label::Negative;
    Dataset::from_rows(x, y).unwrap()
}

/// Deterministic stand-in for an obesity-levels style table: 16 mixed
/// features (binary flags, ordinal answers, age, height, weight) and an
/// "obese" label driven by body-mass index with 5% label noise.
pub fn obesity_like(rows: usize, seed: u64) -> Dataset {
    let mut s = RngStream::new(seed, "obesity-like");
    let mut x = Vec::with_capacity(rows);
    let mut y = Vec::with_capacity(rows);
    let names = [
        "gender", "age", "height", "weight", "family_history", "favc", "fcvc", "ncp", "caec", "smoke", "ch2o", "scc",
        "faf", "tue", "calc", "mtrans",
    ];
    for _ in 0..rows {
        let gender = (s.next_unit() < 0.5) as u8 as f64;
        let age = (14.0 + 47.0 * s.next_unit() * s.next_unit()).round();
        let height = (1.62 + 0.08 * gender + s.next_normal(0.0, 0.08).unwrap()).clamp(1.45, 1.98);
        let family = (s.next_unit() < 0.8) as u8 as f64;
        let favc = (s.next_unit() < 0.85) as u8 as f64;
        let fcvc = 1.0 + (3.0 * s.next_unit()).floor().min(2.0);
        let ncp = 1.0 + (4.0 * s.next_unit()).floor().min(3.0);
        let caec = (4.0 * s.next_unit()).floor().min(3.0);
        let smoke = (s.next_unit() < 0.05) as u8 as f64;
        let ch2o = 1.0 + (3.0 * s.next_unit()).floor().min(2.0);
        let scc = (s.next_unit() < 0.05) as u8 as f64;
        let faf = (4.0 * s.next_unit()).floor().min(3.0);
        let tue = (3.0 * s.next_unit()).floor().min(2.0);
        let calc = (4.0 * s.next_unit()).floor().min(3.0);
        let mtrans = (5.0 * s.next_unit()).floor().min(4.0);
        let bmi = 22.0 + 6.0 * family + 3.0 * favc - 1.5 * faf + 0.12 * (age - 14.0) + 1.2 * caec
            + s.next_normal(0.0, 5.0).unwrap();
        let weight = (bmi * height * height).clamp(39.0, 173.0);
        let mut obese = weight / (height * height) >= 30.0;
        if s.next_unit() < 0.05 {
            obese = !obese;
        }
        x.push(vec![
            gender, age, height, weight, family, favc, fcvc, ncp, caec, smoke, ch2o, scc, faf, tue, calc, mtrans,
        ]);
        y.push(if obese { Label::Positive } else { Label::Negative });
    }
    Dataset::new(x, y, names.iter().map(|n| n.to_string()).collect()).unwrap()
}

/// The ten-row worked-example table; rows are x1..x10 in order.
pub fn toy_table() -> Dataset {
    let rows = vec![
        vec![0.7415, 0.5407, 0.5795, 0.9009],
        vec![0.6844, 0.3210, 0.0471, 0.3700],
        vec![0.7718, 0.0912, 0.4874, 0.5308],
        vec![0.0818, 0.4263, 0.0354, 0.0621],
        vec![0.5596, 0.4643, 0.3585, 0.3189],
        vec![0.6397, 0.6535, 0.7739, 0.6809],
        vec![0.7425, 0.0989, 0.7429, 0.4131],
        vec![0.9419, 0.5958, 0.4474, 0.7536],
        vec![0.4992, 0.2212, 0.9525, 0.4176],
        vec![0.2990, 0.4796, 0.1559, 0.7456],
    ];
    let labels = [2, 1, 1, 1, 2, 1, 1, 2, 1, 2]
        .iter()
        .map(|&d| if d == 1 { Label::Positive } else { Label::Negative })
        .collect();
    Dataset::from_rows(rows, labels).unwrap()
}
