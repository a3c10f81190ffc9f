/// Adam hyper-parameters shared by every parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

/// First and second moments for one parameter group. Rows of `width`
/// scalars can be dropped or appended as the parameter set changes size.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    width: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Moments {
    pub fn new(rows: usize, width: usize) -> Self {
        Moments {
            width,
            m: vec![0.0; rows * width],
            v: vec![0.0; rows * width],
            step: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.m.len() / self.width
    }

    pub fn step(&mut self, adam: &Adam, lr: f64, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        for (p, d) in params.iter_mut().zip(self.direction(adam, grads)) {
            *p -= lr * d;
        }
    }

    /// Updates the moments with `grads` and returns the bias-corrected
    /// step direction `m̂ / (√v̂ + ε)` without applying it.
    pub fn direction(&mut self, adam: &Adam, grads: &[f64]) -> Vec<f64> {
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - adam.beta1.powi(self.step as i32);
        let bc2 = 1.0 - adam.beta2.powi(self.step as i32);
        grads
            .iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(g, (m, v))| {
                *m = adam.beta1 * *m + (1.0 - adam.beta1) * g;
                *v = adam.beta2 * *v + (1.0 - adam.beta2) * g * g;
                (*m / bc1) / ((*v / bc2).sqrt() + adam.eps)
            })
            .collect()
    }

    /// Keeps the rows whose flag is set.
    pub fn retain(&mut self, keep: &[bool]) {
        let w = self.width;
        let mut out_m = Vec::with_capacity(self.m.len());
        let mut out_v = Vec::with_capacity(self.v.len());
        for (i, &k) in keep.iter().enumerate() {
            if k {
                out_m.extend_from_slice(&self.m[i * w..(i + 1) * w]);
                out_v.extend_from_slice(&self.v[i * w..(i + 1) * w]);
            }
        }
        self.m = out_m;
        self.v = out_v;
    }

    pub fn push_zero_rows(&mut self, rows: usize) {
        self.m.resize(self.m.len() + rows * self.width, 0.0);
        self.v.resize(self.v.len() + rows * self.width, 0.0);
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
    }
}
