//! SGD training core shared by DM and DBOW, with hierarchical-softmax and
//! negative-sampling output layers behind one example shape.
//!
//! Every update site is a [`TrainExample`]: input slots (the document vector,
//! plus context words in DM mode) whose vectors are averaged into a composite
//! `x`, and output rows with binary labels. The per-example loss is
//! `Σ -ln σ(±x·v_row)`, its exact gradients are exposed for testing, and one
//! applied update equals one plain gradient-descent step on that loss.
//!
//! Training is strictly sequential and consumes randomness in a documented
//! order (per document: one subsampling draw per position, then per kept
//! position a window draw in DM mode and `negative` noise draws when
//! negative sampling), so a fixed seed reproduces bit-identical models.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{subsample_discard_prob, EmbeddingVocab};
use super::{EmbeddingModel, TrainParams};
use crate::preprocess::TokenStream;
use crate::vectors::DenseVector;
use crate::{seeding, Result, SimvecError};

/// One averaged input contributor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InputSlot {
    Word(u32),
    Doc(u32),
}

/// One SGD site: averaged inputs against labeled output rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainExample {
    pub inputs: Vec<InputSlot>,
    pub outputs: Vec<(u32, bool)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// ln(1 + e^t), stable at both tails.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

impl EmbeddingModel {
    pub(crate) fn word_in_row(&self, w: u32) -> &[f64] {
        let size = self.params.size;
        &self.word_in[w as usize * size..][..size]
    }

    pub(crate) fn word_out_row(&self, row: u32) -> &[f64] {
        let size = self.params.size;
        &self.word_out[row as usize * size..][..size]
    }

    fn input_row(&self, slot: InputSlot) -> &[f64] {
        match slot {
            InputSlot::Word(w) => self.word_in_row(w),
            InputSlot::Doc(d) => &self.doc_vectors[d as usize],
        }
    }

    fn composite(&self, inputs: &[InputSlot]) -> Vec<f64> {
        let size = self.params.size;
        let mut x = vec![0.0; size];
        for slot in inputs {
            for (xc, ic) in x.iter_mut().zip(self.input_row(*slot)) {
                *xc += ic;
            }
        }
        let n = inputs.len() as f64;
        for xc in &mut x {
            *xc /= n;
        }
        x
    }

    /// Negative log-likelihood of one example under current parameters.
    pub fn example_loss(&self, ex: &TrainExample) -> f64 {
        let x = self.composite(&ex.inputs);
        ex.outputs
            .iter()
            .map(|&(row, label)| {
                let z = dot(&x, self.word_out_row(row));
                let signed = if label { z } else { -z };
                softplus(-signed)
            })
            .sum()
    }

    /// Exact loss gradients: one vector per input slot and one per output
    /// row, aligned with the example's lists.
    pub fn example_gradients(&self, ex: &TrainExample) -> (Vec<DenseVector>, Vec<DenseVector>) {
        let size = self.params.size;
        let x = self.composite(&ex.inputs);
        let n = ex.inputs.len() as f64;
        let mut gx = vec![0.0; size];
        let mut out_grads = Vec::with_capacity(ex.outputs.len());
        for &(row, label) in &ex.outputs {
            let v = self.word_out_row(row);
            let err = sigmoid(dot(&x, v)) - f64::from(label);
            for (g, vc) in gx.iter_mut().zip(v) {
                *g += err * vc;
            }
            out_grads.push(x.iter().map(|xc| err * xc).collect());
        }
        let per_input: DenseVector = gx.iter().map(|g| g / n).collect();
        (vec![per_input; ex.inputs.len()], out_grads)
    }

    /// One SGD update. Output occurrences are applied sequentially and the
    /// input correction accumulates against the values in place, as the
    /// reference implementations do; when no output row repeats this equals
    /// one plain gradient step `θ ← θ - alpha·∇L` at the pre-update point.
    pub(crate) fn apply_example(&mut self, ex: &TrainExample, alpha: f64) {
        let size = self.params.size;
        let x = self.composite(&ex.inputs);
        let n = ex.inputs.len() as f64;
        let mut gx = vec![0.0; size];
        for &(row, label) in &ex.outputs {
            let v = &mut self.word_out[row as usize * size..][..size];
            let g = (f64::from(label) - sigmoid(dot(&x, v))) * alpha;
            for (acc, vc) in gx.iter_mut().zip(v.iter()) {
                *acc += g * vc;
            }
            for (vc, xc) in v.iter_mut().zip(&x) {
                *vc += g * xc;
            }
        }
        for slot in &ex.inputs {
            let target = match slot {
                InputSlot::Word(w) => &mut self.word_in[*w as usize * size..][..size],
                InputSlot::Doc(d) => &mut self.doc_vectors[*d as usize][..],
            };
            for (tc, g) in target.iter_mut().zip(&gx) {
                *tc += g / n;
            }
        }
    }
}

/// Generate the training examples of one document, consuming randomness for
/// subsampling, reduced windows (DM), and noise draws (negative sampling).
pub(crate) fn doc_examples(
    vocab: &EmbeddingVocab,
    params: &TrainParams,
    doc_slot: u32,
    tokens: &[u32],
    rng: &mut ChaCha8Rng,
) -> Vec<TrainExample> {
    let kept: Vec<u32> = tokens
        .iter()
        .copied()
        .filter(|&w| {
            let p = subsample_discard_prob(vocab.frequency(w), params.sample);
            rng.random::<f64>() >= p
        })
        .collect();
    let mut out = Vec::with_capacity(kept.len());
    for (t, &target) in kept.iter().enumerate() {
        let mut inputs = vec![InputSlot::Doc(doc_slot)];
        if params.dm {
            let b = rng.random_range(1..=params.window);
            let lo = t.saturating_sub(b);
            let hi = (t + b).min(kept.len() - 1);
            inputs.extend((lo..=hi).filter(|&j| j != t).map(|j| InputSlot::Word(kept[j])));
        }
        let outputs = if params.hs {
            let code = vocab.huffman_code(target);
            code.path.iter().zip(&code.bits).map(|(&p, &b)| (p, !b)).collect()
        } else {
            let mut o = vec![(target, true)];
            for _ in 0..params.negative {
                let neg = vocab.draw_noise(rng);
                if neg != target {
                    o.push((neg, false));
                }
            }
            o
        };
        out.push(TrainExample { inputs, outputs });
    }
    out
}

/// Mean per-example loss over a deterministic example set (fixed by the
/// model's seed), independent of training progress.
pub(crate) fn corpus_loss(model: &EmbeddingModel, docs: &[Vec<u32>]) -> f64 {
    let mut rng = seeding::stage_rng(model.params.seed, "d2v-loss");
    let mut total = 0.0;
    let mut n = 0usize;
    for (d, tokens) in docs.iter().enumerate() {
        for ex in doc_examples(&model.vocab, &model.params, d as u32, tokens, &mut rng) {
            total += model.example_loss(&ex);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

fn linear_alpha(alpha0: f64, processed: u64, total: u64) -> f64 {
    alpha0 * (1.0 - processed as f64 / total as f64).max(1e-4)
}

/// Train a model and report the deterministic corpus loss after each epoch.
pub fn train_with_history(
    streams: &[TokenStream],
    params: &TrainParams,
) -> Result<(EmbeddingModel, Vec<f64>)> {
    params.validate()?;
    if streams.is_empty() {
        return Err(SimvecError::Param("cannot train on an empty corpus".into()));
    }
    let vocab = EmbeddingVocab::from_streams(streams)?;
    let docs: Vec<Vec<u32>> = streams
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .map(|t| vocab.index_of(t).expect("vocabulary built from these streams"))
                .collect()
        })
        .collect();
    let doc_ids: Vec<String> = streams.iter().map(|s| s.doc_id.clone()).collect();

    let size = params.size;
    let bound = 0.5 / size as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut word_in = vec![0.0; vocab.len() * size];
    for w in word_in.iter_mut() {
        *w = rng.random_range(-bound..bound);
    }
    let doc_vectors: Vec<DenseVector> = (0..docs.len())
        .map(|_| (0..size).map(|_| rng.random_range(-bound..bound)).collect())
        .collect();
    let out_rows = if params.hs { vocab.inner_nodes() } else { vocab.len() };
    let word_out = vec![0.0; out_rows * size];

    let mut model = EmbeddingModel {
        vocab,
        params: params.clone(),
        word_in,
        word_out,
        doc_ids,
        doc_vectors,
    };

    // the decay denominator counts every original position, dropped or kept
    let total_positions =
        params.iter as u64 * docs.iter().map(|d| d.len() as u64).sum::<u64>();
    let mut processed = 0u64;
    let mut history = Vec::with_capacity(params.iter);
    for _ in 0..params.iter {
        for (d, tokens) in docs.iter().enumerate() {
            let alpha = linear_alpha(params.alpha0, processed, total_positions);
            for ex in doc_examples(&model.vocab, params, d as u32, tokens, &mut rng) {
                model.apply_example(&ex, alpha);
            }
            processed += tokens.len() as u64;
        }
        history.push(corpus_loss(&model, &docs));
    }
    Ok((model, history))
}

/// Train a document-embedding model. Deterministic for a fixed seed.
pub fn train(streams: &[TokenStream], params: &TrainParams) -> Result<EmbeddingModel> {
    train_with_history(streams, params).map(|(m, _)| m)
}

/// Embed an unseen token list: freeze the trained matrices, initialize a
/// fresh seeded document vector, and run `params.iter` epochs of updates on
/// that vector alone. Structural parameters (mode, output layer, size) come
/// from the model; `iter`, `alpha0`, `window`, `sample`, and `seed` are taken
/// from `params`.
pub fn infer_vector(
    model: &EmbeddingModel,
    tokens: &[String],
    params: &TrainParams,
) -> Result<DenseVector> {
    params.validate()?;
    let known: Vec<u32> = tokens.iter().filter_map(|t| model.vocab.index_of(t)).collect();
    if known.is_empty() {
        return Err(SimvecError::Param(
            "cannot infer a vector: no tokens are known to the model".into(),
        ));
    }
    let effective = TrainParams {
        iter: params.iter,
        alpha0: params.alpha0,
        window: params.window,
        sample: params.sample,
        seed: params.seed,
        ..model.params.clone()
    };
    let size = model.params.size;
    let bound = 0.5 / size as f64;
    let mut rng = seeding::stage_rng(effective.seed, "d2v-infer");
    let mut dv: DenseVector = (0..size).map(|_| rng.random_range(-bound..bound)).collect();

    let total = effective.iter as u64 * known.len() as u64;
    let mut processed = 0u64;
    for _ in 0..effective.iter {
        let alpha = linear_alpha(effective.alpha0, processed, total);
        for ex in doc_examples(&model.vocab, &effective, 0, &known, &mut rng) {
            infer_step(model, &mut dv, &ex, alpha);
        }
        processed += known.len() as u64;
    }
    Ok(dv)
}

/// One frozen-matrix step: like [`EmbeddingModel::apply_example`] but the
/// only parameter written is the inference vector behind the Doc slot.
fn infer_step(model: &EmbeddingModel, dv: &mut [f64], ex: &TrainExample, alpha: f64) {
    let size = model.params.size;
    let n = ex.inputs.len() as f64;
    let mut x = vec![0.0; size];
    for slot in &ex.inputs {
        let row = match slot {
            InputSlot::Word(w) => model.word_in_row(*w),
            InputSlot::Doc(_) => &dv[..],
        };
        for (xc, rc) in x.iter_mut().zip(row) {
            *xc += rc;
        }
    }
    for xc in &mut x {
        *xc /= n;
    }
    let mut gx = vec![0.0; size];
    for &(row, label) in &ex.outputs {
        let v = model.word_out_row(row);
        let g = (f64::from(label) - sigmoid(dot(&x, v))) * alpha;
        for (acc, vc) in gx.iter_mut().zip(v) {
            *acc += g * vc;
        }
    }
    let doc_slots = ex.inputs.iter().filter(|s| matches!(s, InputSlot::Doc(_))).count() as f64;
    debug_assert!(doc_slots == 1.0);
    for (dc, g) in dv.iter_mut().zip(&gx) {
        *dc += g * doc_slots / n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Field;

    fn stream(id: &str, tokens: &[&str]) -> TokenStream {
        TokenStream {
            doc_id: id.into(),
            field: Field::Title,
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn base_params() -> TrainParams {
        TrainParams {
            dm: true,
            hs: false,
            size: 8,
            window: 3,
            sample: 1.0,
            iter: 2,
            negative: 3,
            alpha0: 0.025,
            seed: 7,
        }
    }

    fn tiny_model(params: &TrainParams) -> EmbeddingModel {
        let streams = vec![
            stream("d0", &["pump", "valve", "seal", "pump", "rotor"]),
            stream("d1", &["gear", "shaft", "vane", "gear", "pump"]),
        ];
        train(&streams, params).unwrap()
    }

    #[test]
    fn dbow_examples_have_single_doc_input() {
        let v = EmbeddingVocab::from_counts([("a", 5u64), ("b", 3)]).unwrap();
        let params = TrainParams { dm: false, ..base_params() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let exs = doc_examples(&v, &params, 4, &[0, 1, 0], &mut rng);
        assert_eq!(exs.len(), 3);
        for ex in &exs {
            assert_eq!(ex.inputs, vec![InputSlot::Doc(4)]);
            assert_eq!(ex.outputs[0].1, true, "first output is the positive target");
            assert!(ex.outputs.len() <= 1 + params.negative);
        }
    }

    #[test]
    fn dm_examples_window_is_clipped_and_doc_always_present() {
        let v = EmbeddingVocab::from_counts([("a", 5u64), ("b", 3), ("c", 2)]).unwrap();
        let params = TrainParams { window: 50, ..base_params() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let exs = doc_examples(&v, &params, 0, &[0, 1, 2], &mut rng);
        for (t, ex) in exs.iter().enumerate() {
            assert_eq!(ex.inputs[0], InputSlot::Doc(0));
            // window far exceeds the doc: context is everything but the target
            assert_eq!(ex.inputs.len(), 3, "position {t}");
        }
    }

    #[test]
    fn hs_outputs_follow_huffman_code() {
        let v =
            EmbeddingVocab::from_counts([("a", 9u64), ("b", 5), ("c", 2), ("d", 1)]).unwrap();
        let params = TrainParams { hs: true, dm: false, ..base_params() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let exs = doc_examples(&v, &params, 0, &[2], &mut rng);
        let code = v.huffman_code(2);
        assert_eq!(exs[0].outputs.len(), code.bits.len());
        for ((row, label), (&p, &bit)) in
            exs[0].outputs.iter().zip(code.path.iter().zip(&code.bits))
        {
            assert_eq!(*row, p);
            assert_eq!(*label, !bit);
        }
    }

    #[test]
    fn negative_draws_skip_the_target() {
        let v = EmbeddingVocab::from_counts([("a", 1000u64), ("b", 1)]).unwrap();
        let params = TrainParams { dm: false, negative: 20, ..base_params() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // target is the overwhelmingly likely noise word, so most draws are
        // dropped rather than emitted as false positives
        let exs = doc_examples(&v, &params, 0, &[0], &mut rng);
        for &(row, label) in &exs[0].outputs[1..] {
            assert!(!label);
            assert_ne!(row, 0, "accidental target draw must be skipped");
        }
    }

    #[test]
    fn subsampling_drops_frequent_words() {
        let v = EmbeddingVocab::from_counts([("hot", 999_000u64), ("cold", 1000)]).unwrap();
        let params = TrainParams { sample: 1e-5, dm: false, ..base_params() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tokens = vec![0u32; 2000];
        let exs = doc_examples(&v, &params, 0, &tokens, &mut rng);
        let keep_rate = exs.len() as f64 / tokens.len() as f64;
        let want = 1.0 - subsample_discard_prob(v.frequency(0), params.sample);
        assert!((keep_rate - want).abs() < 0.05, "keep {keep_rate} vs {want}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        use std::collections::HashMap;
        let eps = 1e-4;
        for (dm, hs) in [(true, true), (true, false), (false, true), (false, false)] {
            let params = TrainParams { dm, hs, seed: 17, ..base_params() };
            let model = tiny_model(&params);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let docs: Vec<Vec<u32>> = vec![vec![0, 1, 2, 3], vec![4, 2, 0]];
            for (d, tokens) in docs.iter().enumerate() {
                for ex in doc_examples(&model.vocab, &params, d as u32, tokens, &mut rng) {
                    let (gin, gout) = model.example_gradients(&ex);
                    // a slot or row may occur several times in one example
                    // (repeated context word, repeated noise draw); the loss
                    // gradient wrt the shared parameter is the sum
                    let mut in_sum: HashMap<InputSlot, Vec<f64>> = HashMap::new();
                    for (slot, g) in ex.inputs.iter().zip(&gin) {
                        let acc = in_sum.entry(*slot).or_insert_with(|| vec![0.0; params.size]);
                        for (a, gc) in acc.iter_mut().zip(g) {
                            *a += gc;
                        }
                    }
                    let mut out_sum: HashMap<u32, Vec<f64>> = HashMap::new();
                    for ((row, _), g) in ex.outputs.iter().zip(&gout) {
                        let acc = out_sum.entry(*row).or_insert_with(|| vec![0.0; params.size]);
                        for (a, gc) in acc.iter_mut().zip(g) {
                            *a += gc;
                        }
                    }
                    for (slot, grad) in &in_sum {
                        for c in 0..params.size {
                            let mut plus = model.clone();
                            let mut minus = model.clone();
                            for (m, sign) in [(&mut plus, 1.0), (&mut minus, -1.0)] {
                                match slot {
                                    InputSlot::Word(w) => {
                                        m.word_in[*w as usize * params.size + c] += sign * eps
                                    }
                                    InputSlot::Doc(dd) => {
                                        m.doc_vectors[*dd as usize][c] += sign * eps
                                    }
                                }
                            }
                            let fd =
                                (plus.example_loss(&ex) - minus.example_loss(&ex)) / (2.0 * eps);
                            let scale = fd.abs().max(grad[c].abs()).max(1e-8);
                            assert!(
                                (fd - grad[c]).abs() / scale < 1e-4,
                                "dm={dm} hs={hs} input grad: fd {fd} vs {g}",
                                g = grad[c]
                            );
                        }
                    }
                    for (row, grad) in &out_sum {
                        for c in 0..params.size {
                            let mut plus = model.clone();
                            let mut minus = model.clone();
                            plus.word_out[*row as usize * params.size + c] += eps;
                            minus.word_out[*row as usize * params.size + c] -= eps;
                            let fd =
                                (plus.example_loss(&ex) - minus.example_loss(&ex)) / (2.0 * eps);
                            let scale = fd.abs().max(grad[c].abs()).max(1e-8);
                            assert!(
                                (fd - grad[c]).abs() / scale < 1e-4,
                                "dm={dm} hs={hs} output grad: fd {fd} vs {g}",
                                g = grad[c]
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn apply_example_is_one_gradient_step() {
        let params = base_params();
        let model = tiny_model(&params);
        let ex = TrainExample {
            inputs: vec![InputSlot::Doc(0), InputSlot::Word(1), InputSlot::Word(3)],
            outputs: vec![(2, true), (0, false), (4, false)],
        };
        let alpha = 0.05;
        let (gin, gout) = model.example_gradients(&ex);
        let mut stepped = model.clone();
        stepped.apply_example(&ex, alpha);
        // outputs: v ← v - α ∂L/∂v
        for ((row, _), g) in ex.outputs.iter().zip(&gout) {
            for c in 0..params.size {
                let want = model.word_out[*row as usize * params.size + c] - alpha * g[c];
                let got = stepped.word_out[*row as usize * params.size + c];
                assert!((want - got).abs() < 1e-12);
            }
        }
        // inputs likewise
        for (slot, g) in ex.inputs.iter().zip(&gin) {
            for c in 0..params.size {
                let (was, is) = match slot {
                    InputSlot::Word(w) => (
                        model.word_in[*w as usize * params.size + c],
                        stepped.word_in[*w as usize * params.size + c],
                    ),
                    InputSlot::Doc(d) => {
                        (model.doc_vectors[*d as usize][c], stepped.doc_vectors[*d as usize][c])
                    }
                };
                assert!((was - alpha * g[c] - is).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn example_generation_is_deterministic() {
        let v = EmbeddingVocab::from_counts([("a", 5u64), ("b", 3), ("c", 2)]).unwrap();
        let params = base_params();
        let a = doc_examples(&v, &params, 0, &[0, 1, 2, 1], &mut ChaCha8Rng::seed_from_u64(8));
        let b = doc_examples(&v, &params, 0, &[0, 1, 2, 1], &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_and_tiny_vocab_rejected() {
        assert!(train(&[], &base_params()).is_err());
        let one_word = vec![stream("d", &["same", "same"])];
        assert!(train(&one_word, &base_params()).is_err());
    }
}
