use super::FieldModel;
use crate::rng::RngHandle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    /// (act(z), act'(z), act''(z))
    #[inline]
    fn eval(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Sigmoid => {
                let s = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// Two-layer perceptron f(x) = W2·act(W1·x + b1) + b2.
///
/// Parameters live in one flat vector laid out as
/// `[W1 (h×d, row-major) | b1 (h) | W2 (d×h, row-major) | b2 (d)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    d: usize,
    h: usize,
    activation: Activation,
    base_shift: f64,
    theta: Vec<f64>,
}

pub struct MlpCache {
    /// act'(z)
    d1: Vec<f64>,
    /// act''(z)
    d2: Vec<f64>,
    /// act(z)
    a: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(d: usize, h: usize, activation: Activation) -> Self {
        assert!(d >= 1 && h >= 1, "mlp needs d >= 1 and h >= 1");
        Self {
            d,
            h,
            activation,
            base_shift: 0.0,
            theta: vec![0.0; 2 * h * d + h + d],
        }
    }

    /// Weights ~ N(0, scale²/fan_in), biases zero.
    pub fn init(rng: &mut RngHandle, d: usize, h: usize, activation: Activation, scale: f64) -> Self {
        let mut p = Self::zeros(d, h, activation);
        let s1 = scale / (d as f64).sqrt();
        let s2 = scale / (h as f64).sqrt();
        let (w1, rest) = p.theta.split_at_mut(h * d);
        for w in w1 {
            *w = s1 * rng.normal();
        }
        for w in &mut rest[h..h + d * h] {
            *w = s2 * rng.normal();
        }
        p
    }

    pub fn with_base_shift(mut self, c: f64) -> Self {
        assert!(c >= 0.0 && c.is_finite(), "base shift must be a finite non-negative number");
        self.base_shift = c;
        self
    }

    pub fn hidden(&self) -> usize {
        self.h
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn w1(&self) -> &[f64] {
        &self.theta[..self.h * self.d]
    }

    pub fn b1(&self) -> &[f64] {
        let o = self.h * self.d;
        &self.theta[o..o + self.h]
    }

    pub fn w2(&self) -> &[f64] {
        let o = self.h * self.d + self.h;
        &self.theta[o..o + self.d * self.h]
    }

    pub fn b2(&self) -> &[f64] {
        let o = 2 * self.h * self.d + self.h;
        &self.theta[o..]
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let hd = self.h * self.d;
        (hd, hd + self.h, 2 * hd + self.h)
    }

    /// c_k = Σ_i W2[i,k]·W1[k,i], the diagonal contraction entering ∇·f.
    #[inline]
    fn contraction(&self, k: usize) -> f64 {
        let (w1, w2) = (self.w1(), self.w2());
        (0..self.d).map(|i| w2[i * self.h + k] * w1[k * self.d + i]).sum()
    }
}

impl FieldModel for MlpParams {
    type Cache = MlpCache;

    fn dim(&self) -> usize {
        self.d
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn base_shift(&self) -> f64 {
        self.base_shift
    }

    fn forward_cached(&self, x: &[f64], out: &mut [f64]) -> MlpCache {
        let (d, h) = (self.d, self.h);
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        let mut a = vec![0.0; h];
        let mut d1 = vec![0.0; h];
        let mut d2 = vec![0.0; h];
        for k in 0..h {
            let row = &w1[k * d..(k + 1) * d];
            let z = b1[k] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            let (v, g1, g2) = self.activation.eval(z);
            a[k] = v;
            d1[k] = g1;
            d2[k] = g2;
        }
        for i in 0..d {
            let row = &w2[i * h..(i + 1) * h];
            out[i] = b2[i] + row.iter().zip(&a).map(|(w, ak)| w * ak).sum::<f64>();
        }
        MlpCache { d1, d2, a }
    }

    fn divergence_cached(&self, _x: &[f64], c: &MlpCache) -> f64 {
        (0..self.h).map(|k| c.d1[k] * self.contraction(k)).sum()
    }

    fn jvp_cached(&self, _x: &[f64], c: &MlpCache, v: &[f64], out: &mut [f64]) {
        let (d, h) = (self.d, self.h);
        let (w1, w2) = (self.w1(), self.w2());
        let mut u = vec![0.0; h];
        for k in 0..h {
            let row = &w1[k * d..(k + 1) * d];
            u[k] = c.d1[k] * row.iter().zip(v).map(|(w, vi)| w * vi).sum::<f64>();
        }
        for i in 0..d {
            out[i] = w2[i * h..(i + 1) * h].iter().zip(&u).map(|(w, uk)| w * uk).sum();
        }
    }

    fn backprop_output(&self, x: &[f64], c: &MlpCache, up: &[f64], grad: &mut [f64]) {
        let (d, h) = (self.d, self.h);
        let (o_b1, o_w2, o_b2) = self.offsets();
        let w2 = self.w2();
        for i in 0..d {
            grad[o_b2 + i] += up[i];
            let g = &mut grad[o_w2 + i * h..o_w2 + (i + 1) * h];
            for (gk, ak) in g.iter_mut().zip(&c.a) {
                *gk += up[i] * ak;
            }
        }
        for k in 0..h {
            let back: f64 = (0..d).map(|i| w2[i * h + k] * up[i]).sum();
            let delta = c.d1[k] * back;
            grad[o_b1 + k] += delta;
            for (gj, xj) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                *gj += delta * xj;
            }
        }
    }

    fn backprop_divergence(&self, x: &[f64], c: &MlpCache, scale: f64, grad: &mut [f64]) {
        // div = Σ_k act'(z_k)·c_k, c_k = Σ_i W2[i,k]W1[k,i]
        let (d, h) = (self.d, self.h);
        let (o_b1, o_w2, _) = self.offsets();
        let (w1, w2) = (self.w1(), self.w2());
        for k in 0..h {
            let ck = self.contraction(k);
            let curv = scale * c.d2[k] * ck;
            let slope = scale * c.d1[k];
            grad[o_b1 + k] += curv;
            for j in 0..d {
                grad[k * d + j] += slope * w2[j * h + k] + curv * x[j];
                grad[o_w2 + j * h + k] += slope * w1[k * d + j];
            }
        }
    }

    fn backprop_probe(&self, x: &[f64], c: &MlpCache, xi: &[f64], scale: f64, grad: &mut [f64]) {
        // q = Σ_k act'(z_k)·u_k·v_k, u_k = W1[k,:]·ξ, v_k = W2[:,k]·ξ
        let (d, h) = (self.d, self.h);
        let (o_b1, o_w2, _) = self.offsets();
        let (w1, w2) = (self.w1(), self.w2());
        for k in 0..h {
            let u: f64 = (0..d).map(|j| w1[k * d + j] * xi[j]).sum();
            let v: f64 = (0..d).map(|i| w2[i * h + k] * xi[i]).sum();
            let curv = scale * c.d2[k] * u * v;
            grad[o_b1 + k] += curv;
            for j in 0..d {
                grad[k * d + j] += scale * c.d1[k] * v * xi[j] + curv * x[j];
                grad[o_w2 + j * h + k] += scale * c.d1[k] * u * xi[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values_single_unit() {
        let mut p = MlpParams::zeros(1, 1, Activation::Sigmoid);
        p.params_mut().copy_from_slice(&[1.0, 0.0, 2.0, 0.0]);
        assert_eq!(p.forward(&[0.0]), vec![1.0]);
        assert_eq!(p.divergence(&[0.0]), 0.5);
    }

    #[test]
    fn zero_scale_is_zero_field() {
        let mut rng = RngHandle::new(0);
        let p = MlpParams::init(&mut rng, 3, 5, Activation::Tanh, 0.0);
        assert_eq!(p.forward(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
        assert_eq!(p.divergence(&[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn init_is_seeded_and_order_one() {
        let mut a = RngHandle::new(5);
        let mut b = RngHandle::new(5);
        let p = MlpParams::init(&mut a, 4, 32, Activation::Tanh, 1.0);
        assert_eq!(p, MlpParams::init(&mut b, 4, 32, Activation::Tanh, 1.0));
        let mut xs = RngHandle::new(6);
        let mut vals = Vec::new();
        for _ in 0..2000 {
            let mut x = [0.0; 4];
            xs.fill_normal(&mut x);
            vals.extend(p.forward(&x));
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((0.1..=10.0).contains(&sd), "sd {sd}");
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        for act in [Activation::Sigmoid, Activation::Tanh] {
            for z in [-3.0, -0.4, 0.0, 0.7, 2.5] {
                let h = 1e-5;
                let (_, d1, d2) = act.eval(z);
                let fd1 = (act.eval(z + h).0 - act.eval(z - h).0) / (2.0 * h);
                let fd2 = (act.eval(z + h).1 - act.eval(z - h).1) / (2.0 * h);
                assert!((fd1 - d1).abs() < 1e-9);
                assert!((fd2 - d2).abs() < 1e-9);
            }
        }
    }
}
