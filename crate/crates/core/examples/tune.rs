//! Scratch harness for sizing the desk-scale training run.

use geogan_core::grid::{CategoricalGrid, Grid};
use geogan_core::metrics::{facies_fractions, two_point_probability, Direction};
use geogan_core::simulate::{generate, sample_latent, PostprocessSpec};
use geogan_core::train::{train, GanArchitecture, TrainConfig};
use geogan_core::checkpoint::load_checkpoint;
use std::time::Instant;

fn channel_ti(n: usize) -> CategoricalGrid {
    let mut data = vec![0u8; n * n];
    let period = 14usize;
    let bands = n / period + 2;
    for band in 0..bands {
        // cheap deterministic per-band phase
        let h = (band as u64).wrapping_mul(0x9E3779B97F4A7C15) >> 32;
        let phase = (h % 6283) as f64 / 1000.0;
        for x in 0..n {
            let xf = x as f64;
            let wiggle = 2.5 * (xf * std::f64::consts::TAU / 47.0 + phase).sin()
                + 1.5 * (xf * std::f64::consts::TAU / 19.0 + 2.3 * phase).sin();
            let center = band as f64 * period as f64 + 5.0 + wiggle;
            let y0 = center.round() as i64 - 1;
            for dy in 0..4i64 {
                let y = y0 + dy;
                if y >= 0 && (y as usize) < n {
                    data[y as usize * n + x] = 1;
                }
            }
        }
    }
    CategoricalGrid::new(&[n, n], 2, data).unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|v| v.parse().unwrap()).unwrap_or(2);
    let minibatches: usize = args.get(2).map(|v| v.parse().unwrap()).unwrap_or(20);
    let zx: usize = args.get(3).map(|v| v.parse().unwrap()).unwrap_or(7);
    let ch: Vec<usize> = args
        .get(4)
        .map(|v| v.split(',').map(|t| t.parse().unwrap()).collect())
        .unwrap_or(vec![16, 8, 1]);
    let seed: u64 = args.get(5).map(|v| v.parse().unwrap()).unwrap_or(4);

    let ti = channel_ti(200);
    let frac = facies_fractions(&ti);
    println!("TI fraction facies1 = {:.4}", frac[1]);
    let ti_pf: Vec<f64> = two_point_probability(&ti, 1, Direction::X, 30)
        .unwrap()
        .values;
    let ti_pf0: Vec<f64> = two_point_probability(&ti, 0, Direction::X, 30)
        .unwrap()
        .values;

    let dir = std::env::temp_dir().join(format!("geogan_tune_{seed}"));
    let mut cfg = TrainConfig::new(&dir);
    cfg.epochs = epochs;
    cfg.minibatches_per_epoch = minibatches;
    cfg.batch_size = 25;
    cfg.latent_extent = zx;
    cfg.seed = seed;
    let arch = GanArchitecture::new(2, 5, ch);

    let t0 = Instant::now();
    let out = train(&ti, &arch, &cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "trained {} minibatches in {:.1}s ({:.3}s per minibatch)",
        epochs * minibatches,
        dt,
        dt / (epochs * minibatches) as f64
    );

    // evaluate every checkpoint: 32 realizations at z_x = 9 -> 65x65
    let post = PostprocessSpec::binary().with_median(vec![3, 3]);
    let eval_t = Instant::now();
    for (e, ck) in out.checkpoints.iter().enumerate() {
        let (net, _) = load_checkpoint(ck).unwrap();
        let mut fsum = 0.0;
        let mut pf_sum = vec![0.0; 31];
        let mut pf0_sum = vec![0.0; 31];
        for i in 0..32u64 {
            let z = sample_latent(1, &[9, 9], 1000 + i).unwrap();
            let g = match generate(&net, &z, &post).unwrap() {
                Grid::Categorical(g) => g,
                _ => unreachable!(),
            };
            fsum += facies_fractions(&g)[1];
            let pf = two_point_probability(&g, 1, Direction::X, 30).unwrap();
            let pf0 = two_point_probability(&g, 0, Direction::X, 30).unwrap();
            for l in 0..31 {
                pf_sum[l] += pf.values[l];
                pf0_sum[l] += pf0.values[l];
            }
        }
        let fmean = fsum / 32.0;
        let mae1: f64 = (0..31)
            .map(|l| (pf_sum[l] / 32.0 - ti_pf[l]).abs())
            .sum::<f64>()
            / 31.0;
        let mae0: f64 = (0..31)
            .map(|l| (pf0_sum[l] / 32.0 - ti_pf0[l]).abs())
            .sum::<f64>()
            / 31.0;
        let dl = out.records[(e + 1) * minibatches - 1].d_loss;
        let gl = out.records[(e + 1) * minibatches - 1].g_loss;
        println!(
            "epoch {:2}: frac {:.3} (ti {:.3}) pf1-mae {:.4} pf0-mae {:.4} d {:.3} g {:.3} {}",
            e + 1,
            fmean,
            frac[1],
            mae1,
            mae0,
            dl,
            gl,
            if (fmean - frac[1]).abs() <= 0.10 && mae1 < 0.10 && mae0 < 0.10 {
                "PASS"
            } else {
                ""
            }
        );
    }
    println!("eval took {:.1}s", eval_t.elapsed().as_secs_f64());
    std::fs::remove_dir_all(&dir).ok();
}
