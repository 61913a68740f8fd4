//! Dense building blocks with explicit backward passes.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::{Attention, Linear, Norm};

const NORM_EPS: f64 = 1e-5;

pub(crate) fn linear(p: &Linear, x: &Array2<f64>) -> Array2<f64> {
    x.dot(&p.w) + &p.b
}

pub(crate) fn linear_back(p: &Linear, x: &Array2<f64>, dy: &Array2<f64>, g: &mut Linear) -> Array2<f64> {
    g.w += &x.t().dot(dy);
    g.b += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(&p.w.t())
}

pub(crate) struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub(crate) fn norm(p: &Norm, x: &Array2<f64>) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
    let xhat = centered * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * &p.gain + &p.bias;
    (y, NormCache { xhat, inv_std })
}

pub(crate) fn norm_back(p: &Norm, c: &NormCache, dy: &Array2<f64>, g: &mut Norm) -> Array2<f64> {
    g.gain += &(dy * &c.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    g.bias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * &p.gain;
    let d = dy.ncols() as f64;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &c.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat - &mean_dxhat.view().insert_axis(Axis(1));
    dx = dx - &(&c.xhat * &mean_dxhat_xhat.view().insert_axis(Axis(1)));
    dx * &c.inv_std.view().insert_axis(Axis(1))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub(crate) fn silu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v * sigmoid(v))
}

pub(crate) fn silu_back(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |g, &v| {
        let s = sigmoid(v);
        *g *= s * (1.0 + v * (1.0 - s));
    });
    dx
}

pub(crate) struct AttnCache {
    xq: Array2<f64>,
    xkv: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

/// Row softmax restricted to allowed entries; rows with nothing allowed become zero.
fn masked_softmax(scores: &mut Array2<f64>, mask: Option<ArrayView2<bool>>) {
    for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
        let allowed = |j: usize| mask.as_ref().is_none_or(|m| m[[i, j]]);
        let mut max = f64::NEG_INFINITY;
        for (j, &v) in row.iter().enumerate() {
            if allowed(j) && v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            row.fill(0.0);
            continue;
        }
        let mut sum = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            *v = if allowed(j) { (*v - max).exp() } else { 0.0 };
            sum += *v;
        }
        row.mapv_inplace(|v| v / sum);
    }
}

/// Multi-head attention of `xq` over `xkv`; `mask[i, j]` permits query `i` to see key `j`.
pub(crate) fn attention(
    p: &Attention,
    xq: &Array2<f64>,
    xkv: &Array2<f64>,
    mask: Option<&Array2<bool>>,
    heads: usize,
) -> (Array2<f64>, AttnCache) {
    let q = xq.dot(&p.wq);
    let k = xkv.dot(&p.wk);
    let v = xkv.dot(&p.wv);
    let d = q.ncols();
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut concat = Array2::zeros((xq.nrows(), d));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * hd..(h + 1) * hd];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        masked_softmax(&mut scores, mask.map(|m| m.view()));
        concat.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let out = concat.dot(&p.wo);
    (out, AttnCache { xq: xq.clone(), xkv: xkv.clone(), q, k, v, probs, concat })
}

/// Returns `(d xq, d xkv)`.
pub(crate) fn attention_back(
    p: &Attention,
    c: &AttnCache,
    dy: &Array2<f64>,
    g: &mut Attention,
    heads: usize,
) -> (Array2<f64>, Array2<f64>) {
    g.wo += &c.concat.t().dot(dy);
    let dconcat = dy.dot(&p.wo.t());
    let d = c.q.ncols();
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for h in 0..heads {
        let cols = s![.., h * hd..(h + 1) * hd];
        let pr = &c.probs[h];
        let dout = dconcat.slice(cols);
        let dp = dout.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&pr.t().dot(&dout));
        // softmax Jacobian per row: P ⊙ (dP - <dP, P>)
        let row_dot = (&dp * pr).sum_axis(Axis(1));
        let ds = pr * &(dp - &row_dot.insert_axis(Axis(1))) * scale;
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }
    g.wq += &c.xq.t().dot(&dq);
    g.wk += &c.xkv.t().dot(&dk);
    g.wv += &c.xkv.t().dot(&dv);
    let dxq = dq.dot(&p.wq.t());
    let dxkv = dk.dot(&p.wk.t()) + dv.dot(&p.wv.t());
    (dxq, dxkv)
}
