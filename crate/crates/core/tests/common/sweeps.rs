//! Randomized comparisons against the naive oracles. Each returns the number
//! of cases run and the worst discrepancy found.

use sedinc::metrics::f1_segment;
use sedinc::nncore::{conv2d_forward, dense_forward, maxpool2d_forward, Padding, Rng, Tensor};

use super::{brute_force_counts, f1_from_counts, naive_conv, naive_pool, random_tensor};

/// Largest absolute difference between the conv kernel and the six-loop oracle.
pub fn conv(cases: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for i in 0..cases {
        let c_in = rng.inclusive(1, 4);
        let c_out = rng.inclusive(1, 4);
        let k = [1, 3, 5][rng.below(3)];
        let padding = if i % 2 == 0 { Padding::Same } else { Padding::Valid };
        let min = if padding == Padding::Valid { k } else { 1 };
        let h = rng.inclusive(min, 9);
        let w = rng.inclusive(min, 9);
        let x: Tensor<f64> = random_tensor(&[c_in, h, w], &mut rng, 2.0);
        let wt: Tensor<f64> = random_tensor(&[c_out, c_in, k, k], &mut rng, 1.0);
        let b: Tensor<f64> = random_tensor(&[c_out], &mut rng, 1.0);
        let got = conv2d_forward(&x, &wt, &b, padding).unwrap();
        let want = naive_conv(&x, &wt, &b, padding);
        assert_eq!(got.shape(), want.shape());
        for (a, e) in got.data().iter().zip(want.data()) {
            worst = worst.max((a - e).abs());
        }
    }
    worst
}

/// Number of pooled values that differ from the direct scan.
pub fn pool(cases: usize, seed: u64) -> usize {
    let mut rng = Rng::new(seed);
    let mut mismatches = 0;
    for _ in 0..cases {
        let (ph, pw) = (rng.inclusive(1, 3), rng.inclusive(1, 3));
        let c = rng.inclusive(1, 3);
        let (h, w) = (ph * rng.inclusive(1, 5), pw * rng.inclusive(1, 5));
        // Coarse values so ties are common.
        let data = (0..c * h * w).map(|_| rng.below(5) as f32 - 2.0).collect();
        let x = Tensor::from_vec(&[c, h, w], data).unwrap();
        let (got, _) = maxpool2d_forward(&x, (ph, pw)).unwrap();
        let want = naive_pool(&x, ph, pw);
        mismatches += got.data().iter().zip(want.data()).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    }
    mismatches
}

/// Largest difference of a dense layer against a row-by-row dot product.
pub fn dense(cases: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (d_in, d_out) = (rng.inclusive(1, 12), rng.inclusive(1, 6));
        let x: Tensor<f64> = random_tensor(&[d_in], &mut rng, 1.0);
        let w: Tensor<f64> = random_tensor(&[d_out, d_in], &mut rng, 1.0);
        let b: Tensor<f64> = random_tensor(&[d_out], &mut rng, 1.0);
        let got = dense_forward(x.data(), &w, &b).unwrap();
        for (o, g) in got.iter().enumerate() {
            let mut s = b.data()[o];
            for i in 0..d_in {
                s += w.data()[o * d_in + i] * x.data()[i];
            }
            worst = worst.max((g - s).abs());
        }
    }
    worst
}

/// Number of instances where the F1 report disagrees with brute-force counts.
pub fn f1(cases: usize, seed: u64) -> usize {
    let mut rng = Rng::new(seed);
    let mut mismatches = 0;
    for _ in 0..cases {
        let k = rng.inclusive(1, 6);
        let segments = rng.inclusive(1, 200);
        let threshold = [0.5, 0.3, 0.7][rng.below(3)];
        let pred: Vec<f32> = (0..segments * k).map(|_| rng.uniform(0.0, 1.0) as f32).collect();
        let refs: Vec<f32> = (0..segments * k).map(|_| rng.below(2) as f32).collect();
        let subset: Vec<usize> = (0..k).filter(|_| rng.below(4) != 0).collect();
        let subset = if subset.is_empty() { vec![0] } else { subset };
        let report = f1_segment(&pred, &refs, k, threshold, &subset).unwrap();
        let counts = brute_force_counts(&pred, &refs, k, threshold);
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        let mut ok = true;
        for (score, &c) in report.per_class.iter().zip(&subset) {
            let (t, p, n) = counts[c];
            tp += t;
            fp += p;
            fn_ += n;
            ok &= (score.counts.tp, score.counts.fp, score.counts.fn_) == (t, p, n);
            ok &= score.f1 == f1_from_counts(t, p, n);
        }
        ok &= report.micro_f1 == f1_from_counts(tp, fp, fn_);
        if !ok {
            mismatches += 1;
        }
    }
    mismatches
}
