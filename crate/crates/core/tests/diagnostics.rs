use dmem::evaluation::ljung_box;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Under i.i.d. residuals the Ljung-Box p-values are close to uniform.
#[test]
fn ljung_box_p_values_are_uniform_under_the_null() {
    let seeds = 500;
    let mut p: Vec<f64> = (0..seeds)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let g = Gamma::new(5.0, 0.2).unwrap();
            let e: Vec<f64> = (0..2000).map(|_| g.sample(&mut rng)).collect();
            ljung_box(&e, 10).unwrap().p_value
        })
        .collect();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample KS statistic
    assert!(ks < 1.63 / n.sqrt(), "KS distance {ks}");
}

#[test]
fn ljung_box_detects_persistent_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = Gamma::new(5.0, 0.2).unwrap();
    let mut prev = 1.0;
    let e: Vec<f64> = (0..2000)
        .map(|_| {
            prev = 0.5 * prev + 0.5 * g.sample(&mut rng);
            prev
        })
        .collect();
    assert!(ljung_box(&e, 10).unwrap().p_value < 1e-6);
}
