use super::{add_row, col_sums, weighted_cross_entropy};
use rand::Rng;
use rootopt::optimizers::{ParamRole, ParamSpec};
use rootopt::DenseMatrix;

const TOK: usize = 0;
const POS: usize = 1;
const WQ: usize = 2;
const WK: usize = 3;
const WV: usize = 4;
const WO: usize = 5;
const NORM: usize = 6;
const WOUT: usize = 7;
const BOUT: usize = 8;

const NORM_EPS: f64 = 1e-5;
const SUCCESSOR_PROBS: [f64; 3] = [0.6, 0.3, 0.1];

/// Single-head causal attention block with a residual connection, RMS norm
/// and a linear readout, trained on next-character prediction.
#[derive(Debug, Clone)]
pub(crate) struct AttentionLm {
    vocab: usize,
    context: usize,
    dim: usize,
    sequences: Vec<Vec<usize>>,
    init: Vec<DenseMatrix>,
}

impl AttentionLm {
    pub(crate) fn generate<R: Rng>(vocab: usize, context: usize, dim: usize, sequences: usize, rng: &mut R) -> Self {
        let stream = markov_stream(vocab, sequences * (context + 1), rng);
        let sequences = stream.chunks(context + 1).map(<[usize]>::to_vec).collect();
        let w = 1.0 / (dim as f64).sqrt();
        let init = vec![
            DenseMatrix::random_gaussian(vocab, dim, rng).scale(0.5),
            DenseMatrix::random_gaussian(context, dim, rng).scale(0.1),
            DenseMatrix::random_gaussian(dim, dim, rng).scale(w),
            DenseMatrix::random_gaussian(dim, dim, rng).scale(w),
            DenseMatrix::random_gaussian(dim, dim, rng).scale(w),
            DenseMatrix::random_gaussian(dim, dim, rng).scale(w),
            DenseMatrix::from_fn(1, dim, |_, _| 1.0),
            DenseMatrix::random_gaussian(dim, vocab, rng).scale(w),
            DenseMatrix::zeros(1, vocab),
        ];
        Self {
            vocab,
            context,
            dim,
            sequences,
            init,
        }
    }

    pub(crate) fn param_specs(&self) -> Vec<ParamSpec> {
        let (v, l, d) = (self.vocab, self.context, self.dim);
        vec![
            ParamSpec::new("tok_emb", &[v, d], ParamRole::Embedding),
            ParamSpec::new("pos_emb", &[l, d], ParamRole::Embedding),
            ParamSpec::new("attn.wq", &[d, d], ParamRole::Weight),
            ParamSpec::new("attn.wk", &[d, d], ParamRole::Weight),
            ParamSpec::new("attn.wv", &[d, d], ParamRole::Weight),
            ParamSpec::new("attn.wo", &[d, d], ParamRole::Weight),
            ParamSpec::new("norm.gain", &[d], ParamRole::Norm),
            ParamSpec::new("head.w", &[d, v], ParamRole::Weight),
            ParamSpec::new("head.b", &[v], ParamRole::Bias),
        ]
    }

    pub(crate) fn initial_params(&self) -> Vec<DenseMatrix> {
        self.init.clone()
    }

    fn weight(&self) -> f64 {
        1.0 / (self.sequences.len() * self.context) as f64
    }

    pub(crate) fn loss(&self, params: &[DenseMatrix]) -> f64 {
        let w = self.weight();
        self.sequences.iter().map(|s| self.sequence(params, s, w, None)).sum()
    }

    pub(crate) fn loss_and_grad(&self, params: &[DenseMatrix]) -> (f64, Vec<DenseMatrix>) {
        let w = self.weight();
        let mut grads: Vec<DenseMatrix> = params.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect();
        let loss = self
            .sequences
            .iter()
            .map(|s| self.sequence(params, s, w, Some(&mut grads)))
            .sum();
        (loss, grads)
    }

    fn sequence(&self, p: &[DenseMatrix], tokens: &[usize], weight: f64, grads: Option<&mut Vec<DenseMatrix>>) -> f64 {
        let (l, d) = (self.context, self.dim);
        let inputs = &tokens[..l];
        let targets = &tokens[1..];
        let scale = 1.0 / (d as f64).sqrt();

        let x = DenseMatrix::from_fn(l, d, |i, j| p[TOK].get(inputs[i], j) + p[POS].get(i, j));
        let q = x.matmul(&p[WQ]);
        let k = x.matmul(&p[WK]);
        let v = x.matmul(&p[WV]);
        let a = causal_softmax(&q.matmul_t(&k).scale(scale));
        let z = a.matmul(&v);
        let h = x.add(&z.matmul(&p[WO]));
        let inv_rms: Vec<f64> = (0..l)
            .map(|i| {
                let ms = h.row(i).iter().map(|t| t * t).sum::<f64>() / d as f64;
                1.0 / (ms + NORM_EPS).sqrt()
            })
            .collect();
        let n = DenseMatrix::from_fn(l, d, |i, j| h.get(i, j) * inv_rms[i]);
        let y = DenseMatrix::from_fn(l, d, |i, j| n.get(i, j) * p[NORM].get(0, j));
        let logits = add_row(&y.matmul(&p[WOUT]), &p[BOUT]);
        let (loss, dlogits) = weighted_cross_entropy(&logits, targets, weight);

        let Some(g) = grads else {
            return loss;
        };
        g[WOUT].axpy(1.0, &y.t_matmul(&dlogits));
        g[BOUT].axpy(1.0, &col_sums(&dlogits));
        let dy = dlogits.matmul_t(&p[WOUT]);
        g[NORM].axpy(1.0, &col_sums(&dy.zip_map(&n, |a, b| a * b)));
        let dn = DenseMatrix::from_fn(l, d, |i, j| dy.get(i, j) * p[NORM].get(0, j));
        let dh = DenseMatrix::from_fn(l, d, |i, j| {
            let proj = dn.row(i).iter().zip(n.row(i)).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            (dn.get(i, j) - n.get(i, j) * proj) * inv_rms[i]
        });

        g[WO].axpy(1.0, &z.t_matmul(&dh));
        let dz = dh.matmul_t(&p[WO]);
        let da = dz.matmul_t(&v);
        let dv = a.t_matmul(&dz);
        let row_dot: Vec<f64> = (0..l)
            .map(|i| a.row(i).iter().zip(da.row(i)).map(|(s, t)| s * t).sum())
            .collect();
        let ds = DenseMatrix::from_fn(l, l, |i, j| a.get(i, j) * (da.get(i, j) - row_dot[i]) * scale);
        let dq = ds.matmul(&k);
        let dk = ds.t_matmul(&q);
        g[WQ].axpy(1.0, &x.t_matmul(&dq));
        g[WK].axpy(1.0, &x.t_matmul(&dk));
        g[WV].axpy(1.0, &x.t_matmul(&dv));

        let mut dx = dh;
        dx.axpy(1.0, &dq.matmul_t(&p[WQ]));
        dx.axpy(1.0, &dk.matmul_t(&p[WK]));
        dx.axpy(1.0, &dv.matmul_t(&p[WV]));
        for (i, &tok) in inputs.iter().enumerate() {
            for j in 0..d {
                let t = dx.get(i, j);
                let e = g[TOK].get(tok, j);
                g[TOK].set(tok, j, e + t);
                let e = g[POS].get(i, j);
                g[POS].set(i, j, e + t);
            }
        }
        loss
    }
}

/// Row softmax over the lower triangle; entries above the diagonal are zero.
fn causal_softmax(scores: &DenseMatrix) -> DenseMatrix {
    let l = scores.rows();
    let mut out = DenseMatrix::zeros(l, l);
    for i in 0..l {
        let row = &scores.row(i)[..=i];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (j, e) in exps.into_iter().enumerate() {
            out.set(i, j, e / total);
        }
    }
    out
}

/// Character stream from a sparse random Markov chain: each symbol has three
/// likely successors.
fn markov_stream<R: Rng>(vocab: usize, len: usize, rng: &mut R) -> Vec<usize> {
    let successors: Vec<[usize; 3]> = (0..vocab)
        .map(|_| [rng.random_range(0..vocab), rng.random_range(0..vocab), rng.random_range(0..vocab)])
        .collect();
    let mut tok = rng.random_range(0..vocab);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(tok);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = SUCCESSOR_PROBS.len() - 1;
        for (slot, p) in SUCCESSOR_PROBS.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = slot;
                break;
            }
        }
        tok = successors[tok][pick];
    }
    out
}
