//! Generator runtime: latent sampling, realization generation and
//! post-processing (median filter, thresholding, rank transform, cropping).

use crate::convnet::{generator_forward, NetworkParams};
use crate::error::{Error, Result};
use crate::grid::{CategoricalGrid, ContinuousGrid, Grid};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bounded uniform latent array Z in [-1, 1], shape (q, spatial...).
/// Flattened row-major it doubles as the MCMC parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    q: usize,
    extents: Vec<usize>,
    data: Vec<f64>,
}

impl LatentField {
    pub fn from_values(q: usize, extents: &[usize], data: Vec<f64>) -> Result<Self> {
        if q == 0 || !(extents.len() == 2 || extents.len() == 3) || extents.iter().any(|&e| e == 0)
        {
            return Err(Error::BadShape(extents.to_vec()));
        }
        let want = q * extents.iter().product::<usize>();
        if data.len() != want {
            return Err(Error::BadShape(extents.to_vec()));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!(
                "latent value {v} outside [-1, 1]"
            )));
        }
        Ok(LatentField {
            q,
            extents: extents.to_vec(),
            data,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Total parameter count q * z_x * z_y (* z_z).
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    /// View as a batch-1 network input tensor (1, q, spatial...).
    pub fn to_tensor(&self) -> Tensor {
        let mut shape = vec![1, self.q];
        shape.extend_from_slice(&self.extents);
        Tensor::from_vec(&shape, self.data.clone()).expect("consistent by construction")
    }
}

/// Draw an i.i.d. uniform [-1, 1] latent field, deterministic given `seed`.
pub fn sample_latent(q: usize, extents: &[usize], seed: u64) -> Result<LatentField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_latent_with(q, extents, &mut rng)
}

pub fn sample_latent_with(q: usize, extents: &[usize], rng: &mut impl Rng) -> Result<LatentField> {
    if q == 0 || !(extents.len() == 2 || extents.len() == 3) || extents.iter().any(|&e| e == 0) {
        return Err(Error::BadShape(extents.to_vec()));
    }
    let n = q * extents.iter().product::<usize>();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    LatentField::from_values(q, extents, data)
}

/// How a raw generator output becomes a deliverable realization.
#[derive(Debug, Clone, PartialEq)]
pub struct PostprocessSpec {
    /// Odd-extent median filter kernel, e.g. (3, 3) or (3, 3, 3).
    pub median_kernel: Option<Vec<usize>>,
    pub mode: PostMode,
    /// Center-crop target extents.
    pub crop: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PostMode {
    /// Strictly increasing thresholds inside (0, 1): one for binary output,
    /// two for tri-categorical.
    Threshold(Vec<f64>),
    /// Replace values by equally ranked values from this sorted list.
    Rank(Vec<f64>),
}

impl PostprocessSpec {
    pub fn binary() -> Self {
        PostprocessSpec {
            median_kernel: None,
            mode: PostMode::Threshold(vec![0.5]),
            crop: None,
        }
    }

    pub fn tri() -> Self {
        PostprocessSpec {
            median_kernel: None,
            mode: PostMode::Threshold(vec![0.33, 0.67]),
            crop: None,
        }
    }

    pub fn with_median(mut self, kernel: Vec<usize>) -> Self {
        self.median_kernel = Some(kernel);
        self
    }

    pub fn with_crop(mut self, crop: Vec<usize>) -> Self {
        self.crop = Some(crop);
        self
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if let Some(k) = &self.median_kernel {
            if k.len() != dims {
                return Err(Error::BadShape(k.clone()));
            }
        }
        match &self.mode {
            PostMode::Threshold(ts) => {
                if ts.is_empty() || ts.len() > 2 {
                    return Err(Error::OutOfRange(format!(
                        "{} thresholds (want 1 or 2)",
                        ts.len()
                    )));
                }
                for w in ts.windows(2) {
                    if w[1] <= w[0] {
                        return Err(Error::OutOfRange(
                            "thresholds must be strictly increasing".into(),
                        ));
                    }
                }
                if ts.iter().any(|t| !(0.0..1.0).contains(t) || *t <= 0.0) {
                    return Err(Error::OutOfRange(
                        "thresholds must lie strictly inside (0, 1)".into(),
                    ));
                }
            }
            PostMode::Rank(vals) => {
                if vals.is_empty() {
                    return Err(Error::OutOfRange("empty rank value list".into()));
                }
            }
        }
        if let Some(c) = &self.crop {
            if c.len() != dims || c.iter().any(|&e| e == 0) {
                return Err(Error::BadShape(c.clone()));
            }
        }
        Ok(())
    }
}

/// Reflected (symmetric) border index: ...dcba|abcd...|dcba...
#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Moving median with reflected borders; output extents equal input extents.
pub fn median_filter(grid: &ContinuousGrid, kernel: &[usize]) -> Result<ContinuousGrid> {
    let extents = grid.extents();
    if kernel.len() != extents.len() {
        return Err(Error::BadShape(kernel.to_vec()));
    }
    if kernel.iter().any(|&k| k % 2 == 0 || k == 0) {
        return Err(Error::BadSpec(format!(
            "median kernel extents must be odd, got {kernel:?}"
        )));
    }
    let data = grid.data();
    let mut out = vec![0.0; data.len()];
    let mut buf = Vec::with_capacity(kernel.iter().product());
    match extents {
        [h, w] => {
            let (rh, rw) = (kernel[0] as i64 / 2, kernel[1] as i64 / 2);
            for y in 0..*h {
                for x in 0..*w {
                    buf.clear();
                    for oy in -rh..=rh {
                        let yy = reflect(y as i64 + oy, *h);
                        for ox in -rw..=rw {
                            let xx = reflect(x as i64 + ox, *w);
                            buf.push(data[yy * w + xx]);
                        }
                    }
                    buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    out[y * w + x] = buf[buf.len() / 2];
                }
            }
        }
        [d, h, w] => {
            let (rd, rh, rw) = (
                kernel[0] as i64 / 2,
                kernel[1] as i64 / 2,
                kernel[2] as i64 / 2,
            );
            for z in 0..*d {
                for y in 0..*h {
                    for x in 0..*w {
                        buf.clear();
                        for oz in -rd..=rd {
                            let zz = reflect(z as i64 + oz, *d);
                            for oy in -rh..=rh {
                                let yy = reflect(y as i64 + oy, *h);
                                for ox in -rw..=rw {
                                    let xx = reflect(x as i64 + ox, *w);
                                    buf.push(data[(zz * h + yy) * w + xx]);
                                }
                            }
                        }
                        buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        out[(z * h + y) * w + x] = buf[buf.len() / 2];
                    }
                }
            }
        }
        _ => return Err(Error::BadShape(extents.to_vec())),
    }
    ContinuousGrid::new(extents, out)
}

/// Map [0, 1] values to facies codes. A value exactly at a threshold goes
/// to the lower facies: binary v <= 0.5 -> 0 else 1; tri-categorical
/// v <= 0.33 -> 0, v <= 0.67 -> 1, else 2.
pub fn threshold(grid: &ContinuousGrid, thresholds: &[f64]) -> Result<CategoricalGrid> {
    if thresholds.is_empty() || thresholds.len() > 2 {
        return Err(Error::OutOfRange(format!(
            "{} thresholds (want 1 or 2)",
            thresholds.len()
        )));
    }
    if let Some(v) = grid.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange(format!(
            "value {v} outside [0, 1]; map generator output through (x+1)/2 first"
        )));
    }
    let data = grid
        .data()
        .iter()
        .map(|&v| thresholds.iter().filter(|&&t| t < v).count() as u8)
        .collect();
    CategoricalGrid::new(grid.extents(), thresholds.len() + 1, data)
}

/// Replace each value by the equally ranked entry of `ti_values` (sorted
/// ascending). Rank ties are broken by row-major cell index.
pub fn rank_transform(grid: &ContinuousGrid, ti_values: &[f64]) -> Result<ContinuousGrid> {
    if ti_values.is_empty() {
        return Err(Error::OutOfRange("empty rank value list".into()));
    }
    let n = grid.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort on value; equal values keep row-major order
    order.sort_by(|&a, &b| grid.data()[a].partial_cmp(&grid.data()[b]).unwrap());
    let mut out = vec![0.0; n];
    let last = ti_values.len() - 1;
    for (rank, &cell) in order.iter().enumerate() {
        let idx = if n > 1 { rank * last / (n - 1) } else { 0 };
        out[cell] = ti_values[idx];
    }
    ContinuousGrid::new(grid.extents(), out)
}

fn crop_offsets(raw: &[usize], target: &[usize]) -> Result<Vec<usize>> {
    if target.len() != raw.len() {
        return Err(Error::BadShape(target.to_vec()));
    }
    raw.iter()
        .zip(target)
        .map(|(&r, &t)| {
            if t > r {
                Err(Error::Grid(format!(
                    "crop extent {t} exceeds raw extent {r}"
                )))
            } else {
                Ok((r - t) / 2)
            }
        })
        .collect()
}

fn crop_indices(raw: &[usize], target: &[usize]) -> Result<Vec<usize>> {
    let off = crop_offsets(raw, target)?;
    let mut keep = Vec::with_capacity(target.iter().product());
    match raw.len() {
        2 => {
            for y in 0..target[0] {
                let base = (y + off[0]) * raw[1] + off[1];
                keep.extend(base..base + target[1]);
            }
        }
        3 => {
            for z in 0..target[0] {
                for y in 0..target[1] {
                    let base = ((z + off[0]) * raw[1] + (y + off[1])) * raw[2] + off[2];
                    keep.extend(base..base + target[2]);
                }
            }
        }
        _ => return Err(Error::BadShape(raw.to_vec())),
    }
    Ok(keep)
}

/// Centered crop: offsets are floor((raw - target) / 2) on each axis.
pub fn crop_continuous(grid: &ContinuousGrid, target: &[usize]) -> Result<ContinuousGrid> {
    let keep = crop_indices(grid.extents(), target)?;
    ContinuousGrid::new(target, keep.iter().map(|&i| grid.data()[i]).collect())
}

pub fn crop_categorical(grid: &CategoricalGrid, target: &[usize]) -> Result<CategoricalGrid> {
    let keep = crop_indices(grid.extents(), target)?;
    CategoricalGrid::new(
        target,
        grid.facies_count(),
        keep.iter().map(|&i| grid.data()[i]).collect(),
    )
}

/// Full generation pipeline: generator forward pass, affine map of the tanh
/// output to [0, 1] via (x + 1) / 2, optional median filter, thresholding
/// (or rank transform), centered crop.
pub fn generate(params: &NetworkParams, z: &LatentField, post: &PostprocessSpec) -> Result<Grid> {
    let raw = generator_forward(z, params)?;
    post.validate(raw.spatial_dims())?;
    let extents: Vec<usize> = raw.spatial().to_vec();
    let unit: Vec<f64> = raw.data().iter().map(|&v| (v + 1.0) / 2.0).collect();
    let mut cont = ContinuousGrid::new(&extents, unit)?;
    if let Some(kernel) = &post.median_kernel {
        cont = median_filter(&cont, kernel)?;
    }
    match &post.mode {
        PostMode::Threshold(ts) => {
            let mut cat = threshold(&cont, ts)?;
            if let Some(target) = &post.crop {
                cat = crop_categorical(&cat, target)?;
            }
            Ok(Grid::Categorical(cat))
        }
        PostMode::Rank(vals) => {
            let mut tr = rank_transform(&cont, vals)?;
            if let Some(target) = &post.crop {
                tr = crop_continuous(&tr, target)?;
            }
            Ok(Grid::Continuous(tr))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{init_params, ArchitectureSpec};
    use proptest::prelude::*;

    #[test]
    fn latent_counts_and_bounds() {
        let z = sample_latent(1, &[5, 5, 5], 42).unwrap();
        assert_eq!(z.dim(), 125);
        assert!(z.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let z2 = sample_latent(1, &[5, 5, 5], 42).unwrap();
        assert_eq!(z, z2);
    }

    #[test]
    fn latent_mean_near_zero() {
        let z = sample_latent(1, &[100, 1000], 7).unwrap();
        let mean = z.data().iter().sum::<f64>() / z.dim() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn latent_rejects_out_of_range() {
        assert!(LatentField::from_values(1, &[1, 2], vec![0.0, 1.5]).is_err());
    }

    fn naive_median(grid: &ContinuousGrid, kernel: &[usize]) -> Vec<f64> {
        // independent implementation: gather with explicit reflected
        // coordinates, then sort
        let ex = grid.extents();
        let (h, w) = (ex[0], ex[1]);
        let refl = |i: i64, n: usize| -> usize {
            if i < 0 {
                (-i - 1) as usize
            } else if i >= n as i64 {
                2 * n - 1 - i as usize
            } else {
                i as usize
            }
        };
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut v = Vec::new();
                for oy in -(kernel[0] as i64 / 2)..=(kernel[0] as i64 / 2) {
                    for ox in -(kernel[1] as i64 / 2)..=(kernel[1] as i64 / 2) {
                        v.push(grid.data()[refl(y as i64 + oy, h) * w + refl(x as i64 + ox, w)]);
                    }
                }
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                out[y * w + x] = v[v.len() / 2];
            }
        }
        out
    }

    #[test]
    fn median_constant_and_speck() {
        let c = ContinuousGrid::new(&[4, 4], vec![0.7; 16]).unwrap();
        assert_eq!(median_filter(&c, &[3, 3]).unwrap().data(), c.data());

        let mut v = vec![0.0; 9];
        v[4] = 1.0;
        let g = ContinuousGrid::new(&[3, 3], v).unwrap();
        let f = median_filter(&g, &[3, 3]).unwrap();
        assert!(f.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn median_matches_naive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..49).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g = ContinuousGrid::new(&[7, 7], data).unwrap();
        let f = median_filter(&g, &[3, 3]).unwrap();
        assert_eq!(f.data(), naive_median(&g, &[3, 3]).as_slice());
    }

    #[test]
    fn median_rejects_even_kernel() {
        let g = ContinuousGrid::new(&[4, 4], vec![0.0; 16]).unwrap();
        assert!(median_filter(&g, &[2, 3]).is_err());
    }

    #[test]
    fn median_idempotent_on_large_blocks() {
        // two constant bands taller than the kernel
        let mut v = vec![0.0; 10 * 10];
        v.iter_mut().skip(50).for_each(|x| *x = 1.0);
        let g = ContinuousGrid::new(&[10, 10], v).unwrap();
        let once = median_filter(&g, &[3, 3]).unwrap();
        assert_eq!(once.data(), g.data());
        let twice = median_filter(&once, &[3, 3]).unwrap();
        assert_eq!(twice.data(), once.data());
    }

    #[test]
    fn threshold_boundaries() {
        let g = ContinuousGrid::new(&[1, 3], vec![0.49, 0.51, 0.5]).unwrap();
        let c = threshold(&g, &[0.5]).unwrap();
        assert_eq!(c.data(), &[0, 1, 0]);

        let g3 = ContinuousGrid::new(&[1, 3], vec![0.2, 0.5, 0.8]).unwrap();
        let c3 = threshold(&g3, &[0.33, 0.67]).unwrap();
        assert_eq!(c3.data(), &[0, 1, 2]);
        assert_eq!(c3.facies_count(), 3);

        let tri_edges = ContinuousGrid::new(&[1, 2], vec![0.33, 0.67]).unwrap();
        assert_eq!(threshold(&tri_edges, &[0.33, 0.67]).unwrap().data(), &[0, 1]);

        let bad = ContinuousGrid::new(&[1, 1], vec![1.2]).unwrap();
        assert!(threshold(&bad, &[0.5]).is_err());
    }

    proptest! {
        #[test]
        fn threshold_is_monotone_in_each_cell(base in 0.0f64..1.0, bumped in 0.0f64..1.0) {
            let lo = base.min(bumped);
            let hi = base.max(bumped);
            let g_lo = ContinuousGrid::new(&[1, 1], vec![lo]).unwrap();
            let g_hi = ContinuousGrid::new(&[1, 1], vec![hi]).unwrap();
            for ts in [vec![0.5], vec![0.33, 0.67]] {
                prop_assert!(threshold(&g_lo, &ts)?.data()[0] <= threshold(&g_hi, &ts)?.data()[0]);
            }
        }
    }

    #[test]
    fn rank_transform_examples() {
        let g = ContinuousGrid::new(&[1, 3], vec![0.1, 0.9, 0.5]).unwrap();
        let t = rank_transform(&g, &[2.0, 4.0, 7.0]).unwrap();
        assert_eq!(t.data(), &[2.0, 7.0, 4.0]);

        // constant grid: ties broken by row-major index, monotone outputs
        let c = ContinuousGrid::new(&[1, 3], vec![0.5; 3]).unwrap();
        let tc = rank_transform(&c, &[2.0, 4.0, 7.0]).unwrap();
        assert_eq!(tc.data(), &[2.0, 4.0, 7.0]);

        assert!(rank_transform(&g, &[]).is_err());
    }

    #[test]
    fn rank_transform_matches_quantiles_when_lengths_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..24).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut ti: Vec<f64> = (0..24).map(|_| rng.gen_range(10.0..20.0)).collect();
        ti.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let g = ContinuousGrid::new(&[4, 6], data).unwrap();
        let t = rank_transform(&g, &ti).unwrap();
        let mut got: Vec<f64> = t.data().to_vec();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, ti);
    }

    #[test]
    fn crop_is_centered() {
        let data: Vec<f64> = (0..25).map(|v| v as f64).collect();
        let g = ContinuousGrid::new(&[5, 5], data).unwrap();
        let c = crop_continuous(&g, &[3, 3]).unwrap();
        // offset floor((5-3)/2) = 1 on both axes
        assert_eq!(c.data(), &[6.0, 7.0, 8.0, 11.0, 12.0, 13.0, 16.0, 17.0, 18.0]);
        assert!(crop_continuous(&g, &[6, 3]).is_err());
    }

    #[test]
    fn generate_shapes_and_zero_weight_case() {
        // z_x = 5, dp = 5 with a small ladder: 129x129 cropped to 125x125
        let arch = ArchitectureSpec::generator(2, 1, vec![2, 2, 2, 2, 1], 5);
        let net = init_params(&arch, 3).unwrap();
        let z = sample_latent(1, &[5, 5], 11).unwrap();
        let post = PostprocessSpec::binary().with_crop(vec![125, 125]);
        match generate(&net, &z, &post).unwrap() {
            Grid::Categorical(c) => assert_eq!(c.extents(), &[125, 125]),
            _ => panic!("expected categorical"),
        }

        // zero weights: tanh(0) = 0 maps to 0.5 which thresholds to facies 0
        let mut zeroed = net.clone();
        for l in &mut zeroed.layers {
            l.weights.data_mut().iter_mut().for_each(|w| *w = 0.0);
        }
        match generate(&zeroed, &z, &PostprocessSpec::binary()).unwrap() {
            Grid::Categorical(c) => assert!(c.data().iter().all(|&v| v == 0)),
            _ => panic!("expected categorical"),
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let arch = ArchitectureSpec::generator(2, 1, vec![3, 1], 3);
        let net = init_params(&arch, 9).unwrap();
        let z = sample_latent(1, &[6, 6], 2).unwrap();
        let post = PostprocessSpec::binary().with_median(vec![3, 3]);
        assert_eq!(
            generate(&net, &z, &post).unwrap(),
            generate(&net, &z, &post).unwrap()
        );
    }
}
