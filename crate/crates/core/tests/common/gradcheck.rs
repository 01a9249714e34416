//! Finite-difference gradient checks. Each returns `(label, relative error)`.

use sedinc::models::{AdapterComposite, AdapterInput, NeuralAdapter, SedCnn};
use sedinc::nncore::{
    maxpool2d_backward, maxpool2d_forward, relu, relu_backward, sigmoid, sigmoid_backward, BatchNorm2d, Conv2d, Dense,
    Padding, Param, Rng, Tensor,
};
use sedinc::training::bce_with_logits;

use super::{
    numeric_grad, numeric_input_grad, probe_loss, random_input, random_targets, random_tensor, relative_error,
    tiny_config, tiny_model,
};

pub const H: f64 = 1e-5;
pub const LAYER_TOL: f64 = 1e-6;
pub const END_TO_END_TOL: f64 = 1e-3;

pub type Check = (String, f64);

fn grad_of(p: &Param<f64>) -> Vec<f64> {
    p.grad.data().to_vec()
}

pub fn conv(padding: Padding, seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    let x: Tensor<f64> = random_tensor(&[2, 2, 5, 6], &mut rng, 1.0);
    let mut layer = Conv2d::<f64>::new("conv", 2, 3, 3, padding, &mut rng);
    for b in layer.bias.value.data_mut() {
        *b = rng.uniform(-0.5, 0.5);
    }
    let y = layer.forward(&x).unwrap();
    let probe: Tensor<f64> = random_tensor(y.shape(), &mut rng, 1.0);
    let gx = layer.backward(&probe).unwrap();
    let f = |l: &mut Conv2d<f64>| probe_loss(&l.infer(&x).unwrap(), &probe);
    let nw = numeric_grad(&mut layer, |l| &mut l.weight, H, f);
    let nb = numeric_grad(&mut layer, |l| &mut l.bias, H, f);
    let nx = numeric_input_grad(&x, H, |xp| probe_loss(&layer.infer(xp).unwrap(), &probe));
    let tag = format!("conv2d {padding:?}");
    vec![
        (format!("{tag} weight"), relative_error(&grad_of(&layer.weight), &nw)),
        (format!("{tag} bias"), relative_error(&grad_of(&layer.bias), &nb)),
        (format!("{tag} input"), relative_error(gx.data(), &nx)),
    ]
}

pub fn batchnorm(frozen: bool, seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    let x: Tensor<f64> = random_tensor(&[3, 2, 3, 4], &mut rng, 2.0);
    let mut layer = BatchNorm2d::<f64>::new("bn", 2);
    for v in layer.gamma.value.data_mut() {
        *v = rng.uniform(0.5, 1.5);
    }
    for v in layer.beta.value.data_mut() {
        *v = rng.uniform(-0.5, 0.5);
    }
    layer.running_mean = random_tensor(&[2], &mut rng, 0.5);
    layer.running_var = Tensor::from_vec(&[2], vec![0.7, 1.9]).unwrap();
    layer.frozen = frozen;
    let y = layer.forward(&x).unwrap();
    let probe: Tensor<f64> = random_tensor(y.shape(), &mut rng, 1.0);
    let gx = layer.backward(&probe).unwrap();
    // Train-mode output does not depend on the running statistics the forward updates.
    let f = |l: &mut BatchNorm2d<f64>| {
        let out = l.forward(&x).unwrap();
        l.clear_cache();
        probe_loss(&out, &probe)
    };
    let ng = numeric_grad(&mut layer, |l| &mut l.gamma, H, f);
    let nb = numeric_grad(&mut layer, |l| &mut l.beta, H, f);
    let mut twin = layer.clone();
    let nx = numeric_input_grad(&x, H, |xp| {
        let out = twin.forward(xp).unwrap();
        twin.clear_cache();
        probe_loss(&out, &probe)
    });
    let tag = if frozen { "batchnorm frozen" } else { "batchnorm" };
    let mut checks = vec![(format!("{tag} input"), relative_error(gx.data(), &nx))];
    if !frozen {
        checks.push((format!("{tag} gamma"), relative_error(&grad_of(&layer.gamma), &ng)));
        checks.push((format!("{tag} beta"), relative_error(&grad_of(&layer.beta), &nb)));
    }
    checks
}

pub fn dense(seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    let x: Tensor<f64> = random_tensor(&[4, 5], &mut rng, 1.0);
    let mut layer = Dense::<f64>::new("dense", 5, 3, &mut rng);
    for b in layer.bias.value.data_mut() {
        *b = rng.uniform(-0.5, 0.5);
    }
    let y = layer.forward(&x).unwrap();
    let probe: Tensor<f64> = random_tensor(y.shape(), &mut rng, 1.0);
    let gx = layer.backward(&probe).unwrap();
    let f = |l: &mut Dense<f64>| probe_loss(&l.infer(&x).unwrap(), &probe);
    let nw = numeric_grad(&mut layer, |l| &mut l.weight, H, f);
    let nb = numeric_grad(&mut layer, |l| &mut l.bias, H, f);
    let nx = numeric_input_grad(&x, H, |xp| probe_loss(&layer.infer(xp).unwrap(), &probe));
    vec![
        ("dense weight".into(), relative_error(&grad_of(&layer.weight), &nw)),
        ("dense bias".into(), relative_error(&grad_of(&layer.bias), &nb)),
        ("dense input".into(), relative_error(gx.data(), &nx)),
    ]
}

pub fn activations(seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    // Keep ReLU inputs away from the kink.
    let x = random_tensor::<f64>(&[40], &mut rng, 3.0).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let probe: Tensor<f64> = random_tensor(&[40], &mut rng, 1.0);
    let g_relu = relu_backward(&probe, &x).unwrap();
    let n_relu = numeric_input_grad(&x, H, |xp| probe_loss(&xp.map(relu), &probe));
    let s = x.map(sigmoid);
    let g_sig = sigmoid_backward(&probe, &s).unwrap();
    let n_sig = numeric_input_grad(&x, H, |xp| probe_loss(&xp.map(sigmoid), &probe));
    vec![
        ("relu".into(), relative_error(g_relu.data(), &n_relu)),
        ("sigmoid".into(), relative_error(g_sig.data(), &n_sig)),
    ]
}

pub fn maxpool(seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    let x: Tensor<f64> = random_tensor(&[2, 4, 6], &mut rng, 1.0);
    let (y, arg) = maxpool2d_forward(&x, (2, 2)).unwrap();
    let probe: Tensor<f64> = random_tensor(y.shape(), &mut rng, 1.0);
    let g = maxpool2d_backward(&probe, &arg, x.shape()).unwrap();
    let n = numeric_input_grad(&x, H, |xp| probe_loss(&maxpool2d_forward(xp, (2, 2)).unwrap().0, &probe));
    vec![("maxpool2d".into(), relative_error(g.data(), &n))]
}

pub fn bce(seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    let z: Tensor<f64> = random_tensor(&[4, 3], &mut rng, 4.0);
    let y: Tensor<f64> = random_targets(4, 3, &mut rng);
    let (_, g) = bce_with_logits(&z, &y).unwrap();
    let n = numeric_input_grad(&z, H, |zp| bce_with_logits(zp, &y).unwrap().0);
    vec![("bce_with_logits".into(), relative_error(g.data(), &n))]
}

fn model_loss(m: &mut SedCnn<f64>, x: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    let z = m.forward_train(x).unwrap();
    // Drop the caches so the next forward starts clean.
    let _ = m.backward(&Tensor::zeros(z.shape()));
    bce_with_logits(&z, y).unwrap().0
}

/// Every parameter of the detector in 64-bit, train-mode batch norm.
pub fn sedcnn_f64(seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    let mut m: SedCnn<f64> = tiny_model(3, seed);
    let x: Tensor<f64> = random_input(4, &m.config, &mut rng);
    let y: Tensor<f64> = random_targets(4, 3, &mut rng);
    m.zero_grad();
    let z = m.forward_train(&x).unwrap();
    let (_, g) = bce_with_logits(&z, &y).unwrap();
    m.backward(&g).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = m.params().iter().map(|p| (p.name.clone(), grad_of(p))).collect();
    let mut checks = Vec::new();
    for (i, (name, a)) in analytic.into_iter().enumerate() {
        let n = numeric_grad(&mut m, |mm| mm.params_mut().swap_remove(i), H, |mm| model_loss(mm, &x, &y));
        checks.push((format!("sedcnn {name}"), relative_error(&a, &n)));
    }
    checks
}

/// Adapter and target parameters through the merged output, in 64-bit.
pub fn composite_f64(seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    let source: SedCnn<f64> = tiny_model(2, seed);
    let target = source.migrate("new", &mut rng).unwrap();
    let adapter = NeuralAdapter::<f64>::new(2, 5, 3, AdapterInput::Logits, &mut rng).unwrap();
    let mut m = AdapterComposite::compose(source, adapter, target).unwrap();
    let x: Tensor<f64> = random_input(3, &m.source.config, &mut rng);
    let y: Tensor<f64> = random_targets(3, 3, &mut rng);
    for p in m.params_mut() {
        p.zero_grad();
    }
    let z = m.forward_train(&x).unwrap();
    let (_, g) = bce_with_logits(&z, &y).unwrap();
    m.backward(&g).unwrap();
    let loss = |mm: &mut AdapterComposite<f64>| {
        let z = mm.forward_train(&x).unwrap();
        let _ = mm.backward(&Tensor::zeros(z.shape()));
        bce_with_logits(&z, &y).unwrap().0
    };
    let names: Vec<String> = m.params().iter().map(|p| p.name.clone()).collect();
    let mut checks = Vec::new();
    for (i, name) in names.iter().enumerate() {
        if name.starts_with("source.") {
            continue;
        }
        let a = grad_of(m.params()[i]);
        let n = numeric_grad(&mut m, |mm| mm.params_mut().swap_remove(i), H, loss);
        checks.push((format!("composite {name}"), relative_error(&a, &n)));
    }
    checks
}

/// 32-bit analytic gradients of the whole detector against 64-bit finite
/// differences of the same weights.
pub fn sedcnn_f32_end_to_end(seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut m: SedCnn<f32> = tiny_model(3, seed);
    let cfg = tiny_config(3);
    let x64: Tensor<f64> = random_input(4, &cfg, &mut rng);
    let x32 = x64.cast::<f32>();
    let x64 = x32.cast::<f64>();
    let y32: Tensor<f32> = random_targets(4, 3, &mut rng);
    let y64 = y32.cast::<f64>();
    m.zero_grad();
    let z = m.forward_train(&x32).unwrap();
    let (_, g) = bce_with_logits(&z, &y32).unwrap();
    m.backward(&g).unwrap();
    let analytic: Vec<f64> = m.params().iter().flat_map(|p| p.grad.data().iter().map(|&v| v as f64)).collect();
    let mut wide = m.cast::<f64>();
    let count = wide.params().len();
    let mut numeric = Vec::new();
    for i in 0..count {
        numeric.extend(numeric_grad(&mut wide, |mm| mm.params_mut().swap_remove(i), H, |mm| {
            model_loss(mm, &x64, &y64)
        }));
    }
    ("sedcnn f32 end to end".into(), relative_error(&analytic, &numeric))
}

/// Every layer-level check, each expected within [`LAYER_TOL`].
pub fn layer_checks() -> Vec<Check> {
    let mut all = Vec::new();
    all.extend(conv(Padding::Same, 1));
    all.extend(conv(Padding::Valid, 2));
    all.extend(batchnorm(false, 3));
    all.extend(batchnorm(true, 4));
    all.extend(dense(5));
    all.extend(activations(6));
    all.extend(maxpool(7));
    all.extend(bce(8));
    all.extend(sedcnn_f64(9));
    all.extend(composite_f64(10));
    all
}
