use rand::Rng;
use rootopt::optimizers::{ParamRole, ParamSpec};
use rootopt::DenseMatrix;

/// `0.5/n ||A W - B||_F^2` with `B = A W* + noise`.
#[derive(Debug, Clone)]
pub(crate) struct Regression {
    pub(crate) a: DenseMatrix,
    pub(crate) b: DenseMatrix,
}

impl Regression {
    pub(crate) fn generate<R: Rng>(samples: usize, inputs: usize, outputs: usize, noise_std: f64, rng: &mut R) -> Self {
        let a = DenseMatrix::random_gaussian(samples, inputs, rng);
        let w_star = DenseMatrix::random_gaussian(inputs, outputs, rng).scale(1.0 / (inputs as f64).sqrt());
        let noise = DenseMatrix::random_gaussian(samples, outputs, rng).scale(noise_std);
        let b = a.matmul(&w_star).add(&noise);
        Self { a, b }
    }

    pub(crate) fn param_specs(&self) -> Vec<ParamSpec> {
        vec![ParamSpec::new("w", &[self.a.cols(), self.b.cols()], ParamRole::Weight)]
    }

    pub(crate) fn initial_params(&self) -> Vec<DenseMatrix> {
        vec![DenseMatrix::zeros(self.a.cols(), self.b.cols())]
    }

    fn residual(&self, w: &DenseMatrix) -> DenseMatrix {
        self.a.matmul(w).sub(&self.b)
    }

    pub(crate) fn loss(&self, params: &[DenseMatrix]) -> f64 {
        let r = self.residual(&params[0]);
        0.5 * sum_sq(&r) / self.a.rows() as f64
    }

    pub(crate) fn loss_and_grad(&self, params: &[DenseMatrix]) -> (f64, Vec<DenseMatrix>) {
        let n = self.a.rows() as f64;
        let r = self.residual(&params[0]);
        let loss = 0.5 * sum_sq(&r) / n;
        let grad = self.a.t_matmul(&r).scale(1.0 / n);
        (loss, vec![grad])
    }
}

pub(crate) fn sum_sq(m: &DenseMatrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum()
}
