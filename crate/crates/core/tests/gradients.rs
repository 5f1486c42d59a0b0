use cpsize::learners::{Architecture, Head};
use cpsize::seed::rng_from;
use rand::Rng;

fn fd_check(arch: &Architecture, seed: u64) -> f64 {
    let mut rng = rng_from(seed, &[]);
    let params: Vec<f64> = (0..arch.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let xs: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..arch.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let ys: Vec<f64> = (0..5)
        .map(|_| match arch.head {
            Head::Softmax { k } => rng.random_range(0..k) as f64,
            Head::Regression { lo, hi } => rng.random_range(lo..hi),
        })
        .collect();
    let xr: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let (_, grad) = arch.loss_and_grad(&params, &xr, &ys);
    let h = 1e-6;
    let mut num = vec![0.0; params.len()];
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        let up = arch.loss_and_grad(&p, &xr, &ys).0;
        p[i] -= 2.0 * h;
        let down = arch.loss_and_grad(&p, &xr, &ys).0;
        num[i] = (up - down) / (2.0 * h);
    }
    let diff: f64 = grad.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(num.iter().map(|a| a * a).sum::<f64>().sqrt());
    diff / scale
}

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..20 {
        let logistic = Architecture {
            input_dim: 4,
            hidden: vec![],
            head: Head::Softmax { k: 3 },
        };
        let mlp = Architecture {
            input_dim: 3,
            hidden: vec![5, 4],
            head: Head::Regression { lo: 0.0, hi: 1.0 },
        };
        let mlp_cls = Architecture {
            input_dim: 3,
            hidden: vec![6],
            head: Head::Softmax { k: 4 },
        };
        for arch in [&logistic, &mlp, &mlp_cls] {
            let rel = fd_check(arch, seed);
            assert!(rel < 1e-5, "seed {seed} {arch:?}: relative error {rel}");
        }
    }
}
