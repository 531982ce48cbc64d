//! Scratch: condition the composite finite-difference check.

use geogan_core::convnet::{
    backward, forward, forward_with_trace, init_params, ArchitectureSpec, NetworkParams,
};
use geogan_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Composite {
    g: NetworkParams,
    d: NetworkParams,
    z: Tensor,
    w: Tensor,
}

fn composite(seed: u64) -> Composite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = init_params(&ArchitectureSpec::generator(2, 2, vec![4, 1], 3), seed).unwrap();
    let d = init_params(&ArchitectureSpec::discriminator(2, vec![3, 1], 3), seed + 1).unwrap();
    let z = Tensor::from_vec(
        &[1, 2, 3, 3],
        (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    // positive random functional weights over the discriminator field
    let fake = forward(&g, &z).unwrap();
    let field = forward(&d, &fake).unwrap();
    let w = Tensor::from_vec(
        field.shape(),
        (0..field.len()).map(|_| rng.gen_range(0.5..1.5)).collect(),
    )
    .unwrap();
    Composite { g, d, z, w }
}

fn loss(c: &Composite) -> f64 {
    let fake = forward(&c.g, &c.z).unwrap();
    let field = forward(&c.d, &fake).unwrap();
    field.data().iter().zip(c.w.data()).map(|(a, b)| a * b).sum()
}

fn grads(c: &Composite) -> Vec<f64> {
    let tr_g = forward_with_trace(&c.g, &c.z).unwrap();
    let tr_d = forward_with_trace(&c.d, tr_g.output()).unwrap();
    let (d_grads, dx) = backward(&c.d, &tr_d, &c.w).unwrap();
    let (g_grads, _) = backward(&c.g, &tr_g, &dx).unwrap();
    let mut flat = Vec::new();
    for lg in d_grads.layers.iter().chain(&g_grads.layers) {
        flat.extend_from_slice(&lg.dw);
        flat.extend_from_slice(&lg.db);
    }
    flat
}

fn main() {
    let h = 1e-6;
    for seed in 0..40u64 {
        let mut c = composite(seed);
        let analytic = grads(&c);
        let min_g = analytic.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        // pointers to every parameter, discriminator first
        let mut ptrs: Vec<*mut f64> = Vec::new();
        for net in [&mut c.d, &mut c.g] {
            for layer in &mut net.layers {
                for w in layer.weights.data_mut() {
                    ptrs.push(w as *mut f64);
                }
                for b in &mut layer.biases {
                    ptrs.push(b as *mut f64);
                }
            }
        }
        let mut max_rel: f64 = 0.0;
        for (i, &p) in ptrs.iter().enumerate() {
            let orig = unsafe { *p };
            unsafe { *p = orig + h };
            let fp = loss(&c);
            unsafe { *p = orig - h };
            let fm = loss(&c);
            unsafe { *p = orig };
            let fd = (fp - fm) / (2.0 * h);
            let an = analytic[i];
            let denom = fd.abs().max(an.abs());
            if denom > 0.0 {
                max_rel = max_rel.max((fd - an).abs() / denom);
            }
        }
        println!(
            "seed {seed}: min|grad| {min_g:.3e}, max rel {max_rel:.3e} {}",
            if max_rel < 1e-6 { "OK" } else { "" }
        );
    }
}
