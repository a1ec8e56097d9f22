use super::{add_row, col_sums, softmax_cross_entropy};
use rand::Rng;
use rootopt::optimizers::{ParamRole, ParamSpec};
use rootopt::DenseMatrix;

const LABEL_FLIP: f64 = 0.1;

/// Two-layer tanh network with softmax cross-entropy on teacher labels.
///
/// Parameters: `w1` (inputs x hidden), `b1`, `w2` (hidden x classes), `b2`.
#[derive(Debug, Clone)]
pub(crate) struct Mlp {
    x: DenseMatrix,
    labels: Vec<usize>,
    hidden: usize,
    classes: usize,
    init: Vec<DenseMatrix>,
}

struct Forward {
    h: DenseMatrix,
    logits: DenseMatrix,
}

impl Mlp {
    pub(crate) fn generate<R: Rng>(samples: usize, inputs: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let x = DenseMatrix::random_gaussian(samples, inputs, rng);
        let teacher = DenseMatrix::random_gaussian(inputs, classes, rng);
        let scores = x.matmul(&teacher);
        let labels = (0..samples)
            .map(|i| {
                if rng.random::<f64>() < LABEL_FLIP {
                    rng.random_range(0..classes)
                } else {
                    argmax(scores.row(i))
                }
            })
            .collect();
        let init = vec![
            DenseMatrix::random_gaussian(inputs, hidden, rng).scale(1.0 / (inputs as f64).sqrt()),
            DenseMatrix::zeros(1, hidden),
            DenseMatrix::random_gaussian(hidden, classes, rng).scale(1.0 / (hidden as f64).sqrt()),
            DenseMatrix::zeros(1, classes),
        ];
        Self {
            x,
            labels,
            hidden,
            classes,
            init,
        }
    }

    pub(crate) fn param_specs(&self) -> Vec<ParamSpec> {
        let inputs = self.x.cols();
        vec![
            ParamSpec::new("w1", &[inputs, self.hidden], ParamRole::Weight),
            ParamSpec::new("b1", &[self.hidden], ParamRole::Bias),
            ParamSpec::new("w2", &[self.hidden, self.classes], ParamRole::Weight),
            ParamSpec::new("b2", &[self.classes], ParamRole::Bias),
        ]
    }

    pub(crate) fn initial_params(&self) -> Vec<DenseMatrix> {
        self.init.clone()
    }

    fn forward(&self, p: &[DenseMatrix]) -> Forward {
        let h = add_row(&self.x.matmul(&p[0]), &p[1]).map(f64::tanh);
        let logits = add_row(&h.matmul(&p[2]), &p[3]);
        Forward { h, logits }
    }

    pub(crate) fn loss(&self, params: &[DenseMatrix]) -> f64 {
        softmax_cross_entropy(&self.forward(params).logits, &self.labels).0
    }

    pub(crate) fn loss_and_grad(&self, params: &[DenseMatrix]) -> (f64, Vec<DenseMatrix>) {
        let fwd = self.forward(params);
        let (loss, dlogits) = softmax_cross_entropy(&fwd.logits, &self.labels);
        let dw2 = fwd.h.t_matmul(&dlogits);
        let db2 = col_sums(&dlogits);
        let dh = dlogits.matmul_t(&params[2]);
        let dz = dh.zip_map(&fwd.h, |g, h| g * (1.0 - h * h));
        let dw1 = self.x.t_matmul(&dz);
        let db1 = col_sums(&dz);
        (loss, vec![dw1, db1, dw2, db2])
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}
