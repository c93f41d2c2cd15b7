use pcbf_core::{MlpParams, RngStream};

fn perturbed(p: &MlpParams, k: usize, h: f64) -> MlpParams {
    let mut q = p.clone();
    *q.values_mut().nth(k).unwrap() += h;
    q
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = RngStream::new(11);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let ctx = 1 + rng.index(4);
        let hidden = 2 + rng.index(6);
        let sizes = [ctx + 2, hidden, hidden + 1, 1];
        let params = MlpParams::init(&sizes, 100 + case).unwrap();
        let batch = 1 + rng.index(8);
        let inputs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..sizes[0]).map(|_| 2.0 * rng.normal()).collect())
            .collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.normal()).collect();
        let (_, grads) = params.loss_and_grads(&inputs, &targets).unwrap();
        for (k, &g) in grads.values().enumerate() {
            let up = perturbed(&params, k, h).loss_and_grads(&inputs, &targets).unwrap().0;
            let down = perturbed(&params, k, -h).loss_and_grads(&inputs, &targets).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(rel <= 1e-4, "case {case}, param {k}: analytic {g}, fd {fd}");
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn loss_matches_forward() {
    let params = MlpParams::init(&[3, 4, 1], 5).unwrap();
    let x = [0.3, -1.0, 1.0];
    let v = params.forward(&x).unwrap();
    let (loss, _) = params.loss_and_grads(&[x], &[0.5]).unwrap();
    assert!((loss - (v - 0.5) * (v - 0.5)).abs() < 1e-15);
}
