use dnest::inner::{self, count_bits, ProtocolVariant, RandomPartition, Transcript};
use dnest::rng::{derive_seed, stream};
use proptest::prelude::*;
use rand::Rng;

fn draw(p: &[f64], m: usize, n: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let total: f64 = p.iter().sum();
    (0..m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let mut u = rng.random::<f64>() * total;
                    for (w, &q) in p.iter().enumerate() {
                        if u < q {
                            return w;
                        }
                        u -= q;
                    }
                    p.len() - 1
                })
                .collect()
        })
        .collect()
}

fn mc(variant: ProtocolVariant, p: &[f64], m: usize, n: usize, l: u32, trials: u64, seed: u64) -> (Vec<f64>, Vec<f64>, f64) {
    let k = p.len();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut mse = 0.0;
    for j in 0..trials {
        let s = derive_seed(seed, &[j]);
        let samples = draw(p, m, n, &mut stream(s, &[1]));
        let est = inner::run_round(variant, k, l, &samples, s).unwrap().estimate;
        mse += est.sq_error(p);
        for (w, v) in est.values.iter().enumerate() {
            sum[w] += v;
            sum_sq[w] += v * v;
        }
    }
    let t = trials as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let se = sum_sq.iter().zip(&mean).map(|(q, mu)| ((q / t - mu * mu).max(0.0) / (t - 1.0)).sqrt()).collect();
    (mean, se, mse / t)
}

fn assert_unbiased(p: &[f64], mean: &[f64], se: &[f64]) {
    for w in 0..p.len() {
        let tol = 4.0 * se[w] + 1e-12;
        assert!((mean[w] - p[w]).abs() <= tol, "symbol {w}: mean {} vs p {} (tol {tol})", mean[w], p[w]);
    }
}

#[test]
fn count_frames_matches_binomial_variance() {
    let p = [0.3, 0.25, 0.2, 0.1, 0.08, 0.04, 0.02, 0.01];
    let (m, n, l) = (40, 8, 12);
    let (_, _, mse) = mc(ProtocolVariant::CountFrames, &p, m, n, l, 10_000, 1);
    let frames = ((l / count_bits(n as u64)) as usize).min(p.len());
    let m_per = (m * frames / p.len()) as f64;
    let oracle = p.iter().map(|q| q * (1.0 - q)).sum::<f64>() / (m_per * n as f64);
    let ratio = mse / oracle;
    assert!((0.8..=1.2).contains(&ratio), "mse / oracle = {ratio}");
}

#[test]
fn quantized_frames_unbiased() {
    let p = dirichletish(8, 3);
    let (mean, se, _) = mc(ProtocolVariant::QuantizedFrames { bits: 2 }, &p, 32, 5, 6, 10_000, 2);
    assert_unbiased(&p, &mean, &se);
}

#[test]
fn random_partition_unbiased_on_two_point_law() {
    let p = [0.5, 0.5, 0.0, 0.0];
    let (mean, se, _) = mc(ProtocolVariant::RandomPartition, &p, 10_000, 1, 1, 200, 3);
    assert_unbiased(&p, &mean, &se);
}

#[test]
fn random_partition_gains_with_each_bit() {
    let p = dirichletish(256, 4);
    let mut prev = None;
    for l in 1..=4u32 {
        let (_, _, mse) = mc(ProtocolVariant::RandomPartition, &p, 2_000, 1, l, 200, 5);
        if let Some(before) = prev {
            let ratio: f64 = before / mse;
            assert!(ratio > 1.3, "l = {l}: MSE ratio {ratio}");
        }
        prev = Some(mse);
    }
}

#[test]
fn random_partition_cells_follow_budget() {
    let rp = RandomPartition::new(100, 3, 0).unwrap();
    assert_eq!(rp.cells(), 8);
    assert_eq!(rp.padded_alphabet() % 8, 0);
    assert!(rp.padded_alphabet() >= 100);
}

#[test]
fn idealized_mse_is_binomial() {
    let p = [0.5, 0.3, 0.2];
    let (m, n) = (5, 4);
    let trials = 20_000u64;
    let mut errs = Vec::new();
    for j in 0..trials {
        let samples = draw(&p, m, n, &mut stream(6, &[j]));
        errs.push(inner::run_round(ProtocolVariant::Idealized, 3, 1, &samples, j).unwrap().estimate.sq_error(&p));
    }
    let t = trials as f64;
    let mean = errs.iter().sum::<f64>() / t;
    let se = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (t - 1.0) / t).sqrt();
    let oracle = p.iter().map(|q| q * (1.0 - q)).sum::<f64>() / (m * n) as f64;
    assert!((mean - oracle).abs() <= 4.0 * se, "{mean} vs {oracle} ± {se}");
}

fn dirichletish(k: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[77]);
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transcripts_roundtrip_through_bytes(
        k in 2usize..40,
        m in 1usize..30,
        n in 1usize..10,
        l in 4u32..40,
        which in 0usize..3,
        seed in any::<u64>(),
    ) {
        let variant = [
            ProtocolVariant::CountFrames,
            ProtocolVariant::QuantizedFrames { bits: 2 },
            ProtocolVariant::RandomPartition,
        ][which];
        let p = vec![1.0 / k as f64; k];
        let samples = draw(&p, m, n, &mut stream(seed, &[]));
        match inner::run_round(variant, k, l, &samples, seed) {
            Ok(out) => {
                let t = out.transcript.unwrap();
                prop_assert_eq!(t.total_bits(), (m as u64) * l as u64);
                let bytes = t.to_bytes();
                prop_assert_eq!(bytes.len(), 8 + m * (l as usize).div_ceil(8));
                prop_assert_eq!(Transcript::from_bytes(&bytes).unwrap(), t);
                let again = inner::run_round(variant, k, l, &samples, seed).unwrap();
                prop_assert_eq!(again.estimate.values, out.estimate.values);
            }
            Err(e) => prop_assert!(matches!(e, dnest::Error::BudgetTooSmall(_) | dnest::Error::Precondition(_)), "{e}"),
        }
    }
}
