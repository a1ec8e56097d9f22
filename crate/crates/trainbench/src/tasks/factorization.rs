use super::regression::sum_sq;
use rand::Rng;
use rootopt::optimizers::{ParamRole, ParamSpec};
use rootopt::DenseMatrix;

const INIT_SCALE: f64 = 0.1;

/// `0.5/(mn) ||U V^T - C||_F^2` where `C` is a noisy low-rank target.
#[derive(Debug, Clone)]
pub(crate) struct Factorization {
    target: DenseMatrix,
    rank: usize,
    init: Vec<DenseMatrix>,
}

impl Factorization {
    pub(crate) fn generate<R: Rng>(
        rows: usize,
        cols: usize,
        rank: usize,
        target_rank: usize,
        noise_std: f64,
        rng: &mut R,
    ) -> Self {
        let x = DenseMatrix::random_gaussian(rows, target_rank, rng);
        let y = DenseMatrix::random_gaussian(cols, target_rank, rng);
        let noise = DenseMatrix::random_gaussian(rows, cols, rng).scale(noise_std);
        let target = x.matmul_t(&y).scale(1.0 / (target_rank as f64).sqrt()).add(&noise);
        let init = vec![
            DenseMatrix::random_gaussian(rows, rank, rng).scale(INIT_SCALE),
            DenseMatrix::random_gaussian(cols, rank, rng).scale(INIT_SCALE),
        ];
        Self { target, rank, init }
    }

    pub(crate) fn param_specs(&self) -> Vec<ParamSpec> {
        vec![
            ParamSpec::new("u", &[self.target.rows(), self.rank], ParamRole::Weight),
            ParamSpec::new("v", &[self.target.cols(), self.rank], ParamRole::Weight),
        ]
    }

    pub(crate) fn initial_params(&self) -> Vec<DenseMatrix> {
        self.init.clone()
    }

    fn scale(&self) -> f64 {
        1.0 / self.target.len() as f64
    }

    pub(crate) fn loss(&self, params: &[DenseMatrix]) -> f64 {
        let r = params[0].matmul_t(&params[1]).sub(&self.target);
        0.5 * sum_sq(&r) * self.scale()
    }

    pub(crate) fn loss_and_grad(&self, params: &[DenseMatrix]) -> (f64, Vec<DenseMatrix>) {
        let (u, v) = (&params[0], &params[1]);
        let r = u.matmul_t(v).sub(&self.target);
        let loss = 0.5 * sum_sq(&r) * self.scale();
        let r = r.scale(self.scale());
        let du = r.matmul(v);
        let dv = r.t_matmul(u);
        (loss, vec![du, dv])
    }
}
