//! NCHW tensors and forward passes of two attention blocks.
//!
//! SimAM weights every activation by a sigmoid of its closed-form inverse
//! energy and has no parameters. ECA rescales each channel by a sigmoid of a
//! 1-D convolution over the pooled channel descriptors.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major `(N, C, H, W)` tensor of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::invalid(format!("tensor dimensions must be positive, got {shape:?}")));
        }
        let expected = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid(format!("shape {shape:?} overflows")))?;
        if expected != data.len() {
            return Err(Error::ShapeMismatch { shape: shape.to_vec(), expected, actual: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("value at flat index {i} is not finite")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        Self::new(shape, vec![0.0; shape.iter().product()])
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Result<Self> {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for a in 0..n {
            for b in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([a, b, y, x]));
                    }
                }
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, [n, c, h, w]: [usize; 4]) -> usize {
        let [_, cc, hh, ww] = self.shape;
        ((n * cc + c) * hh + h) * ww + w
    }

    pub fn at(&self, idx: [usize; 4]) -> f64 {
        self.data[self.index(idx)]
    }

    fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    /// Contiguous spatial slices, one per (sample, channel).
    pub fn slices(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.plane())
    }

    /// Parses `{"shape": [N, C, H, W], "data": [...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TensorFile = serde_json::from_str(text)?;
        let shape: [usize; 4] = file
            .shape
            .as_slice()
            .try_into()
            .map_err(|_| Error::invalid(format!("shape must have 4 entries, got {}", file.shape.len())))?;
        Self::new(shape, file.data)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TensorFile { shape: self.shape.to_vec(), data: self.data.clone() })
            .expect("finite tensor serializes")
    }
}

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimamParams {
    pub lambda: f64,
}

impl Default for SimamParams {
    fn default() -> Self {
        Self { lambda: 1e-4 }
    }
}

/// SimAM forward pass.
///
/// For every (sample, channel) slice with `n = H*W - 1`:
/// `d = (x - mean)^2`, `v = sum(d) / n`, `e_inv = d / (4 (v + lambda)) + 0.5`,
/// output `x * sigmoid(e_inv)`.
pub fn simam(x: &Tensor4, params: &SimamParams) -> Result<Tensor4> {
    if !(params.lambda.is_finite() && params.lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {}", params.lambda)));
    }
    let spatial = x.plane();
    if spatial < 2 {
        return Err(Error::invalid("SimAM needs H*W >= 2"));
    }
    let n = (spatial - 1) as f64;
    let mut out = Vec::with_capacity(x.data.len());
    let mut d = vec![0.0; spatial];
    for slice in x.slices() {
        let mean = slice.iter().sum::<f64>() / spatial as f64;
        for (di, &v) in d.iter_mut().zip(slice) {
            *di = (v - mean) * (v - mean);
        }
        let var = d.iter().sum::<f64>() / n;
        let denom = 4.0 * (var + params.lambda);
        out.extend(slice.iter().zip(&d).map(|(&v, &di)| v * sigmoid(di / denom + 0.5)));
    }
    Tensor4::new(x.shape, out)
}

/// Parameters SimAM adds to a network.
pub const SIMAM_PARAMETERS: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcaParams {
    pub gamma: f64,
    pub b: f64,
    /// Fixed kernel size; must be odd.
    #[serde(default)]
    pub kernel_override: Option<usize>,
    /// Convolution weights; uniform `1/k` when absent.
    #[serde(default)]
    pub kernel_weights: Option<Vec<f64>>,
}

impl Default for EcaParams {
    fn default() -> Self {
        Self { gamma: 2.0, b: 1.0, kernel_override: None, kernel_weights: None }
    }
}

/// Channel-adaptive kernel size: `t = floor(|(log2 C + b) / gamma|)`, bumped
/// to the next odd integer when even.
pub fn adaptive_kernel_size(channels: usize, gamma: f64, b: f64) -> usize {
    let t = (((channels as f64).log2() + b) / gamma).abs().floor() as usize;
    if t % 2 == 1 {
        t
    } else {
        t + 1
    }
}

impl EcaParams {
    pub fn kernel_size(&self, channels: usize) -> Result<usize> {
        match self.kernel_override {
            Some(k) if k % 2 == 0 => Err(Error::invalid(format!("ECA kernel size must be odd, got {k}"))),
            Some(k) => Ok(k),
            None => {
                if !(self.gamma.is_finite() && self.gamma > 0.0 && self.b.is_finite()) {
                    return Err(Error::invalid("ECA gamma must be positive and b finite"));
                }
                Ok(adaptive_kernel_size(channels, self.gamma, self.b))
            }
        }
    }

    pub fn weights(&self, channels: usize) -> Result<Vec<f64>> {
        let k = self.kernel_size(channels)?;
        match &self.kernel_weights {
            Some(w) if w.len() != k => Err(Error::invalid(format!("{} kernel weights for kernel size {k}", w.len()))),
            Some(w) if w.iter().any(|v| !v.is_finite()) => Err(Error::invalid("kernel weights must be finite")),
            Some(w) => Ok(w.clone()),
            None => Ok(vec![1.0 / k as f64; k]),
        }
    }
}

/// Per-sample channel weights `sigmoid(conv1d(spatial means))`, zero padded.
pub fn eca_channel_weights(x: &Tensor4, params: &EcaParams) -> Result<Vec<Vec<f64>>> {
    let [n, c, _, _] = x.shape;
    let kernel = params.weights(c)?;
    let pad = (kernel.len() / 2) as isize;
    let plane = x.plane() as f64;
    let descriptors: Vec<f64> = x.slices().map(|s| s.iter().sum::<f64>() / plane).collect();
    Ok((0..n)
        .map(|s| {
            let g = &descriptors[s * c..(s + 1) * c];
            (0..c as isize)
                .map(|ch| {
                    let z: f64 = kernel
                        .iter()
                        .enumerate()
                        .filter_map(|(j, &w)| {
                            let src = ch + j as isize - pad;
                            (0..c as isize).contains(&src).then(|| w * g[src as usize])
                        })
                        .sum();
                    sigmoid(z)
                })
                .collect()
        })
        .collect())
}

/// ECA forward pass: every channel is scaled by its attention weight.
pub fn eca(x: &Tensor4, params: &EcaParams) -> Result<Tensor4> {
    let weights = eca_channel_weights(x, params)?;
    let c = x.shape[1];
    let out = x
        .slices()
        .enumerate()
        .flat_map(|(i, slice)| {
            let w = weights[i / c][i % c];
            slice.iter().map(move |&v| v * w)
        })
        .collect();
    Tensor4::new(x.shape, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl TensorStats {
    pub fn of(t: &Tensor4) -> Self {
        let d = t.data();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            min: d.iter().copied().fold(f64::INFINITY, f64::min),
            max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpReport {
    pub op: String,
    pub output_shape: [usize; 4],
    pub shape_preserved: bool,
    pub added_parameters: usize,
    pub output_stats: TensorStats,
}

/// Drop-in contract of both blocks on one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertionReport {
    pub input_shape: [usize; 4],
    pub simam: OpReport,
    pub eca: OpReport,
    /// `simam(eca(x))`.
    pub simam_after_eca: OpReport,
    /// `eca(simam(x))`.
    pub eca_after_simam: OpReport,
    /// Largest elementwise difference between the two composition orders.
    pub order_max_abs_diff: f64,
    pub commutes: bool,
}

fn op_report(op: &str, input: &Tensor4, out: &Tensor4, added_parameters: usize) -> OpReport {
    OpReport {
        op: op.to_string(),
        output_shape: out.shape(),
        shape_preserved: out.shape() == input.shape(),
        added_parameters,
        output_stats: TensorStats::of(out),
    }
}

pub fn insertion_check(x: &Tensor4, simam_params: &SimamParams, eca_params: &EcaParams) -> Result<InsertionReport> {
    let k = eca_params.kernel_size(x.shape[1])?;
    let s = simam(x, simam_params)?;
    let e = eca(x, eca_params)?;
    let se = simam(&e, simam_params)?;
    let es = eca(&s, eca_params)?;
    let diff = se.data().iter().zip(es.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(InsertionReport {
        input_shape: x.shape(),
        simam: op_report("simam", x, &s, SIMAM_PARAMETERS),
        eca: op_report("eca", x, &e, k),
        simam_after_eca: op_report("simam∘eca", x, &se, SIMAM_PARAMETERS + k),
        eca_after_simam: op_report("eca∘simam", x, &es, SIMAM_PARAMETERS + k),
        order_max_abs_diff: diff,
        commutes: diff == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_fn(shape, |_| rng.random_range(-3.0..3.0)).unwrap()
    }

    /// Element-by-element evaluation with explicit index arithmetic.
    fn simam_oracle(x: &Tensor4, lambda: f64) -> Vec<f64> {
        let [n, c, h, w] = x.shape();
        let mut out = vec![0.0; x.data().len()];
        for a in 0..n {
            for b in 0..c {
                let mut sum = 0.0;
                for i in 0..h {
                    for j in 0..w {
                        sum += x.at([a, b, i, j]);
                    }
                }
                let mean = sum / (h * w) as f64;
                let mut dsum = 0.0;
                for i in 0..h {
                    for j in 0..w {
                        dsum += (x.at([a, b, i, j]) - mean).powi(2);
                    }
                }
                let v = dsum / (h * w - 1) as f64;
                for i in 0..h {
                    for j in 0..w {
                        let xv = x.at([a, b, i, j]);
                        let e = (xv - mean).powi(2) / (4.0 * (v + lambda)) + 0.5;
                        out[x.index([a, b, i, j])] = xv / (1.0 + (-e).exp());
                    }
                }
            }
        }
        out
    }

    #[test]
    fn simam_constant_slice() {
        let x = Tensor4::new([1, 1, 2, 3], vec![5.0; 6]).unwrap();
        let y = simam(&x, &SimamParams::default()).unwrap();
        for v in y.data() {
            assert!((v - 3.112_296_6).abs() < 1e-7);
        }
    }

    #[test]
    fn simam_matches_oracle_small() {
        let x = random_tensor([1, 2, 3, 3], 7);
        let y = simam(&x, &SimamParams::default()).unwrap();
        let o = simam_oracle(&x, 1e-4);
        let diff = y.data().iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
        assert_eq!(simam(&random_tensor([2, 3, 4, 5], 1), &SimamParams::default()).unwrap().shape(), [2, 3, 4, 5]);
    }

    #[test]
    fn simam_rejects_single_pixel() {
        let x = Tensor4::zeros([1, 1, 1, 1]).unwrap();
        assert!(simam(&x, &SimamParams::default()).is_err());
        let x = Tensor4::zeros([1, 1, 2, 1]).unwrap();
        assert!(simam(&x, &SimamParams { lambda: 0.0 }).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn adaptive_kernel_sizes() {
        assert_eq!(adaptive_kernel_size(8, 2.0, 1.0), 3);
        assert_eq!(adaptive_kernel_size(3, 2.0, 1.0), 1);
        assert_eq!(adaptive_kernel_size(64, 2.0, 1.0), 3);
        assert_eq!(adaptive_kernel_size(256, 2.0, 1.0), 5);
        assert_eq!(adaptive_kernel_size(1, 2.0, 1.0), 1);
    }

    #[test]
    fn eca_fixtures() {
        let zero = Tensor4::zeros([2, 5, 3, 3]).unwrap();
        assert_eq!(eca(&zero, &EcaParams::default()).unwrap(), zero);

        let x = random_tensor([1, 4, 2, 2], 11);
        let params = EcaParams { kernel_override: Some(1), kernel_weights: Some(vec![1.0]), ..Default::default() };
        let y = eca(&x, &params).unwrap();
        for c in 0..4 {
            let vals: Vec<f64> = (0..4).map(|i| x.at([0, c, i / 2, i % 2])).collect();
            let m = vals.iter().sum::<f64>() / 4.0;
            for (i, v) in vals.iter().enumerate() {
                let expect = v / (1.0 + (-m).exp());
                assert!((y.at([0, c, i / 2, i % 2]) - expect).abs() < 1e-12);
            }
        }

        assert!(eca(&x, &EcaParams { kernel_override: Some(2), ..Default::default() }).is_err());
        assert!(eca(
            &x,
            &EcaParams { kernel_override: Some(3), kernel_weights: Some(vec![1.0]), ..Default::default() }
        )
        .is_err());
    }

    #[test]
    fn insertion_report() {
        let x = random_tensor([1, 3, 8, 8], 5);
        let r = insertion_check(&x, &SimamParams::default(), &EcaParams::default()).unwrap();
        let k = EcaParams::default().kernel_size(3).unwrap();
        assert_eq!(r.simam.added_parameters, 0);
        assert_eq!(r.eca.added_parameters, k);
        assert_eq!(r.simam_after_eca.output_shape, [1, 3, 8, 8]);
        assert_eq!(r.simam_after_eca.added_parameters, k);
        assert!(r.simam.shape_preserved && r.eca.shape_preserved);
        assert!(!r.commutes && r.order_max_abs_diff > 0.0);
    }

    #[test]
    fn tensor_json() {
        let x = random_tensor([1, 2, 2, 3], 3);
        assert_eq!(Tensor4::from_json(&x.to_json()).unwrap(), x);
        assert!(matches!(
            Tensor4::from_json(r#"{"shape":[1,1,2,2],"data":[1,2,3]}"#),
            Err(Error::ShapeMismatch { expected: 4, actual: 3, .. })
        ));
        assert!(Tensor4::from_json(r#"{"shape":[1,1,2],"data":[1,2]}"#).is_err());
        assert!(Tensor4::from_json(r#"{"shape":[1,1,2,2],"data":[1,2,"#).is_err());
        assert!(Tensor4::from_json(r#"{"shape":[0,1,2,2],"data":[]}"#).is_err());
    }

    fn shape_strategy() -> impl Strategy<Value = ([usize; 4], u64)> {
        (1usize..3, 1usize..5, 2usize..5, 2usize..5, any::<u64>()).prop_map(|(n, c, h, w, s)| ([n, c, h, w], s))
    }

    proptest! {
        #[test]
        fn simam_bounded_and_sign_preserving((shape, seed) in shape_strategy()) {
            let x = random_tensor(shape, seed);
            let y = simam(&x, &SimamParams::default()).unwrap();
            for (a, b) in x.data().iter().zip(y.data()) {
                prop_assert!(b.abs() <= a.abs());
                prop_assert!(b.is_finite());
                if *a != 0.0 {
                    prop_assert_eq!(a.signum(), b.signum());
                }
            }
        }

        #[test]
        fn simam_spatial_permutation((shape, seed) in shape_strategy(), rot in 1usize..20) {
            let x = random_tensor(shape, seed);
            let plane = shape[2] * shape[3];
            let permute = |t: &Tensor4| {
                let mut d = Vec::new();
                for s in t.slices() {
                    let mut s = s.to_vec();
                    s.rotate_left(rot % plane);
                    d.extend(s);
                }
                Tensor4::new(t.shape(), d).unwrap()
            };
            let a = simam(&permute(&x), &SimamParams::default()).unwrap();
            let b = permute(&simam(&x, &SimamParams::default()).unwrap());
            for (u, v) in a.data().iter().zip(b.data()) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn eca_scales_each_channel_uniformly((shape, seed) in shape_strategy()) {
            let x = random_tensor(shape, seed);
            let y = eca(&x, &EcaParams::default()).unwrap();
            for (xs, ys) in x.slices().zip(y.slices()) {
                let ratios: Vec<f64> = xs.iter().zip(ys).filter(|(a, _)| **a != 0.0).map(|(a, b)| b / a).collect();
                for r in &ratios {
                    prop_assert!((r - ratios[0]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn eca_identity_kernel_commutes_with_channel_permutation((shape, seed) in shape_strategy(), rot in 1usize..5) {
            let x = random_tensor(shape, seed);
            let [n, c, _, _] = shape;
            let permute = |t: &Tensor4| {
                let plane = t.data().len() / (n * c);
                let mut d = Vec::new();
                for s in 0..n {
                    for ch in 0..c {
                        let src = (ch + rot) % c;
                        let start = (s * c + src) * plane;
                        d.extend_from_slice(&t.data()[start..start + plane]);
                    }
                }
                Tensor4::new(t.shape(), d).unwrap()
            };
            let p = EcaParams { kernel_override: Some(1), kernel_weights: Some(vec![1.0]), ..Default::default() };
            prop_assert_eq!(eca(&permute(&x), &p).unwrap(), permute(&eca(&x, &p).unwrap()));
        }
    }
}
