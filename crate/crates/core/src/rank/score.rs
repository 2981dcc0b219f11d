use super::encode::EncodedQuery;
use super::model::{sigmoid, RankModel};
use crate::error::{Error, Result};

/// `score(d_a) = (1/N) Σ_{b≠a} P(d_a > d_b)` with dropout off.
///
/// The first layer is linear in `[query | doc A | doc B]`, so its three
/// partial products are computed once per query and per document and summed
/// for each ordered pair.
pub fn score_documents(model: &RankModel, query: &EncodedQuery) -> Result<Vec<f64>> {
    let n = query.docs.len();
    if n < 2 {
        return Err(Error::Input(format!("query {} has {n} candidates; scoring needs 2", query.query_id)));
    }
    let layout = &model.layout;
    let params = &model.params;
    let (qw, dw) = (layout.query_width(), layout.doc_width());
    let first = &params.hidden[0];
    let width = first.outputs;
    let partial = |x: &[f64], offset: usize, init: &[f64]| -> Vec<f64> {
        let mut out = init.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &first.weight[(offset + i) * width..(offset + i + 1) * width];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    };
    let zeros = vec![0.0; width];
    let base = partial(&model.embed_query(&query.query), 0, &first.bias);
    let doc_vecs: Vec<Vec<f64>> = query.docs.iter().map(|d| model.embed_doc(d)).collect();
    let as_a: Vec<Vec<f64>> = doc_vecs.iter().map(|x| partial(x, qw, &zeros)).collect();
    let as_b: Vec<Vec<f64>> = doc_vecs.iter().map(|x| partial(x, qw + dw, &zeros)).collect();
    let wide = model.wide_term(query);

    let mut h = Vec::with_capacity(width);
    let mut next = Vec::new();
    let mut z = Vec::with_capacity(1);
    let mut scores = vec![0.0; n];
    for a in 0..n {
        let mut total = 0.0;
        for b in (0..n).filter(|&b| b != a) {
            h.clear();
            h.extend((0..width).map(|o| (base[o] + as_a[a][o] + as_b[b][o]).max(0.0)));
            for layer in &params.hidden[1..] {
                layer.forward(&h, &mut next);
                for v in next.iter_mut() {
                    *v = v.max(0.0);
                }
                std::mem::swap(&mut h, &mut next);
            }
            params.output.forward(&h, &mut z);
            let logit = z[0] + wide;
            if !logit.is_finite() {
                return Err(Error::Numeric(format!("non-finite score for query {}", query.query_id)));
            }
            total += sigmoid(logit);
        }
        scores[a] = total / n as f64;
    }
    Ok(scores)
}
