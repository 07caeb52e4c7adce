use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segtrain_core::autodiff::Tape;
use segtrain_core::gradcheck::finite_difference_check;
use segtrain_core::metrics;
use segtrain_core::params::{optimizer_step, AdamConfig, ParamStore};
use segtrain_core::tensor::{self, Matrix};
use segtrain_core::{partition, Error, Graph, Label, Model, ModelConfig, PartitionMethod, Segment, SegmentedGraph};

const STEP: f64 = 1e-6;
const FLOOR: f64 = 1e-4;

fn random_graph(n: usize, dim: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((a, b));
            }
        }
    }
    let features = Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
    Graph::new(n, &edges, features, Label::Class { class: 1, num_classes: 3 }).unwrap()
}

/// Moves zero-initialized biases off zero. A node whose previous layer is
/// all zeros otherwise sits exactly on a ReLU kink, where central
/// differences measure the average of the two one-sided slopes.
fn jitter_biases(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model.params.ids().filter(|&id| model.params.get(id).name.ends_with("bias")).collect();
    for id in ids {
        model.params.value_mut(id).data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.2..0.2));
    }
}

fn three_segments(seed: u64) -> SegmentedGraph {
    let g = random_graph(20, 4, 0.25, seed);
    let sg = partition(0, &g, PartitionMethod::LocalityEdgeCut, 7, seed).unwrap();
    assert_eq!(sg.num_segments(), 3);
    sg
}

/// Loss of one graph recomputed without the tape: pooled segment
/// embeddings, head, cross-entropy. `frozen` replaces the embedding of the
/// listed segments by a fixed vector.
fn direct_loss(
    model: &Model,
    params: &ParamStore,
    sg: &SegmentedGraph,
    weights: &[f64],
    frozen: &[(usize, Vec<f64>)],
    class: usize,
) -> segtrain_core::Result<f64> {
    let mut embs = Vec::new();
    for (k, seg) in sg.segments.iter().enumerate() {
        match frozen.iter().find(|f| f.0 == k) {
            Some((_, e)) => embs.push(e.clone()),
            None => embs.push(model.backbone.embed(params, seg)?),
        }
    }
    let rows: Vec<(&[f64], f64)> = embs.iter().map(Vec::as_slice).zip(weights.iter().copied()).collect();
    let pooled = tensor::weighted_sum(&rows, model.embed_dim(), sg.num_segments() as f64);
    metrics::cross_entropy(&model.head.predict(params, &pooled)?, class)
}

#[test]
fn three_segment_step_matches_finite_differences() {
    for seed in 0..3 {
        let sg = three_segments(seed);
        let mut model = Model::new(ModelConfig::sage(4, 6, 3), seed).unwrap();
        jitter_biases(&mut model, seed);
        let weights = [2.0, 1.0, 0.5];
        let mut tape = Tape::new();
        let terms: Vec<_> = sg
            .segments
            .iter()
            .zip(weights)
            .map(|(seg, w)| (model.backbone.forward(&model.params, seg, &mut tape).unwrap(), w))
            .collect();
        let pooled = tape.weighted_sum(terms, 3.0);
        let logits = model.head.forward(&model.params, &mut tape, pooled).unwrap();
        let loss = tape.cross_entropy(logits, 1).unwrap();
        let direct = direct_loss(&model, &model.params, &sg, &weights, &[], 1).unwrap();
        assert!((tape.scalar(loss) - direct).abs() < 1e-12);
        tape.backward(loss, &mut model.params).unwrap();
        drop(tape);
        let check =
            finite_difference_check(&model.params, STEP, FLOOR, |p| direct_loss(&model, p, &sg, &weights, &[], 1))
                .unwrap();
        assert_eq!(check.checked, model.params.num_scalars());
        assert!(check.max_rel_error < 1e-5, "seed {seed}: {check:?}");
    }
}

#[test]
fn table_path_contributes_no_gradient() {
    let sg = three_segments(4);
    let mut model = Model::new(ModelConfig::sage(4, 6, 3), 4).unwrap();
    jitter_biases(&mut model, 4);
    let stale: Vec<(usize, Vec<f64>)> = (1..3)
        .map(|k| {
            let mut e = model.backbone.embed(&model.params, &sg.segments[k]).unwrap();
            e.iter_mut().for_each(|x| *x += 0.1);
            (k, e)
        })
        .collect();
    let weights = [3.0, 0.0, 1.0];
    let mut tape = Tape::new();
    let mut terms = vec![(model.backbone.forward(&model.params, &sg.segments[0], &mut tape).unwrap(), weights[0])];
    for (k, e) in &stale {
        terms.push((tape.constant(Matrix::row_vector(e.clone())), weights[*k]));
    }
    let pooled = tape.weighted_sum(terms, 3.0);
    let logits = model.head.forward(&model.params, &mut tape, pooled).unwrap();
    let loss = tape.cross_entropy(logits, 2).unwrap();
    assert_eq!(tape.retained_nodes(), sg.segments[0].node_count());
    tape.backward(loss, &mut model.params).unwrap();
    drop(tape);
    let check =
        finite_difference_check(&model.params, STEP, FLOOR, |p| direct_loss(&model, p, &sg, &weights, &stale, 2))
            .unwrap();
    assert!(check.max_rel_error < 1e-5, "{check:?}");
}

#[test]
fn hinge_over_sum_pooled_graphs_matches_finite_differences() {
    let graphs: Vec<SegmentedGraph> = (0..3)
        .map(|i| {
            let g = random_graph(12, 3, 0.3, 10 + i);
            partition(i as usize, &g, PartitionMethod::LocalityEdgeCut, 5, 0).unwrap()
        })
        .collect();
    let targets = vec![3.0, 1.0, 2.0];
    let mut model = Model::new(ModelConfig::sage(3, 5, 1), 9).unwrap();
    jitter_biases(&mut model, 9);
    let mut tape = Tape::new();
    let mut preds = Vec::new();
    for sg in &graphs {
        let terms: Vec<_> =
            sg.segments.iter().map(|s| (model.backbone.forward(&model.params, s, &mut tape).unwrap(), 1.0)).collect();
        let pooled = tape.weighted_sum(terms, 1.0);
        preds.push(model.head.forward(&model.params, &mut tape, pooled).unwrap());
    }
    let total = tape.pairwise_hinge(preds, targets.clone(), vec![0; 3]);
    let loss = tape.scale(total, 1.0 / 3.0);
    assert!(tape.scalar(loss) > 0.0, "every pair satisfied, nothing to check");
    tape.backward(loss, &mut model.params).unwrap();
    drop(tape);
    let direct = |p: &ParamStore| {
        let mut out = Vec::new();
        for sg in &graphs {
            let embs = sg.segments.iter().map(|s| model.backbone.embed(p, s)).collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<(&[f64], f64)> = embs.iter().map(|e| (e.as_slice(), 1.0)).collect();
            out.push(model.head.predict(p, &tensor::weighted_sum(&rows, model.embed_dim(), 1.0))?[0]);
        }
        Ok(metrics::pairwise_hinge(&out, &targets)? / 3.0)
    };
    let check = finite_difference_check(&model.params, STEP, FLOOR, direct).unwrap();
    assert!(check.max_rel_error < 1e-5, "{check:?}");
}

#[test]
fn grad_modes_agree_and_only_recording_retains_nodes() {
    let sg = three_segments(1);
    let model = Model::new(ModelConfig::sage(4, 8, 3), 1).unwrap();
    for seg in &sg.segments {
        let off = model.backbone.embed(&model.params, seg).unwrap();
        let mut tape = Tape::new();
        let v = model.backbone.forward(&model.params, seg, &mut tape).unwrap();
        assert_eq!(tape.value(v).data(), off.as_slice());
        assert_eq!(tape.retained_nodes(), seg.node_count());
    }
    let mut tape = Tape::new();
    for seg in &sg.segments {
        model.backbone.forward(&model.params, seg, &mut tape).unwrap();
    }
    let total: usize = sg.segments.iter().map(Segment::node_count).sum();
    assert_eq!(tape.retained_nodes(), total);
    assert_eq!(total, 20);
}

#[test]
fn readout_is_invariant_to_node_relabeling() {
    let g = random_graph(15, 4, 0.3, 21);
    let model = Model::new(ModelConfig::sage(4, 8, 2), 2).unwrap();
    let base = model.backbone.embed_raw(&model.params, &g.adjacency, &g.features).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let mut perm: Vec<usize> = (0..15).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let edges: Vec<_> = g.adjacency.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        let mut features = Matrix::zeros(15, 4);
        for v in 0..15 {
            features.row_mut(perm[v]).copy_from_slice(g.features.row(v));
        }
        let relabeled = Graph::new(15, &edges, features, g.label).unwrap();
        let emb = model.backbone.embed_raw(&model.params, &relabeled.adjacency, &relabeled.features).unwrap();
        for (a, b) in base.iter().zip(&emb) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_feature_node_embeds_to_zero() {
    let model = Model::new(ModelConfig::sage(3, 4, 2), 0).unwrap();
    let g = Graph::new(1, &[], Matrix::zeros(1, 3), Label::Class { class: 0, num_classes: 2 }).unwrap();
    let e = model.backbone.embed_raw(&model.params, &g.adjacency, &g.features).unwrap();
    assert!(e.iter().all(|&x| x == 0.0));
}

#[test]
fn identity_head_passes_the_embedding_through() {
    let config = ModelConfig { head_hidden: vec![], ..ModelConfig::sage(3, 4, 4) };
    let mut model = Model::new(config, 0).unwrap();
    let out = model.head.layers[0].weight;
    *model.params.value_mut(out) = Matrix::identity(4);
    let e = [0.5, -1.0, 2.0, 0.25];
    assert_eq!(model.head.predict(&model.params, &e).unwrap(), e.to_vec());
    assert_eq!(model.head.predict(&model.params, &[0.0; 4]).unwrap(), vec![0.0; 4]);
    assert!(matches!(model.head.predict(&model.params, &[0.0; 3]), Err(Error::WidthMismatch { .. })));
}

#[test]
fn head_matches_straight_line_arithmetic() {
    let model = Model::new(ModelConfig::sage(3, 4, 3), 7).unwrap();
    let e = [0.3, -0.2, 0.9, 1.1];
    let mut h = e.to_vec();
    for layer in &model.head.layers {
        let w = model.params.value(layer.weight);
        let b = model.params.value(layer.bias);
        let mut next = vec![0.0; w.cols()];
        for (c, out) in next.iter_mut().enumerate() {
            *out = b.get(0, c) + (0..w.rows()).map(|r| h[r] * w.get(r, c)).sum::<f64>();
            if layer.relu {
                *out = out.max(0.0);
            }
        }
        h = next;
    }
    let got = model.head.predict(&model.params, &e).unwrap();
    for (a, b) in got.iter().zip(&h) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn backbone_rejects_wrong_feature_width() {
    let model = Model::new(ModelConfig::sage(3, 4, 2), 0).unwrap();
    let g = Graph::new(2, &[(0, 1)], Matrix::zeros(2, 5), Label::Class { class: 0, num_classes: 2 }).unwrap();
    assert!(matches!(
        model.backbone.embed_raw(&model.params, &g.adjacency, &g.features),
        Err(Error::WidthMismatch { expected: 3, found: 5 })
    ));
}

#[test]
fn sum_of_parameters_has_unit_gradients() {
    let mut model = Model::new(ModelConfig::sage(3, 4, 2), 0).unwrap();
    let ids: Vec<_> = model.params.ids().collect();
    let mut tape = Tape::new();
    let mut total = None;
    for &id in &ids {
        let v = tape.param(&model.params, id);
        let s = tape.sum_all(v);
        total = Some(match total {
            None => s,
            Some(t) => tape.add(t, s),
        });
    }
    tape.backward(total.unwrap(), &mut model.params).unwrap();
    for id in ids {
        assert!(model.params.grad(id).data().iter().all(|&g| g == 1.0));
    }
}

#[test]
fn backward_visits_each_op_once() {
    let mut params = ParamStore::new();
    let w = params.add("w", Matrix::from_vec(2, 1, vec![1.0, -2.0]));
    let mut tape = Tape::new();
    let x = tape.constant(Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let wv = tape.param(&params, w);
    let y = tape.matmul(x, wv);
    let s = tape.sum_all(y);
    tape.backward(s, &mut params).unwrap();
    assert_eq!(tape.backward_visits(), 3);
    assert_eq!(params.grad(w).data(), &[9.0, 12.0]);
}

#[test]
fn backward_without_forward_fails() {
    let mut params = ParamStore::new();
    let mut tape = Tape::new();
    let dummy = {
        let mut other = Tape::new();
        other.constant(Matrix::zeros(1, 1))
    };
    assert_eq!(tape.backward(dummy, &mut params), Err(Error::EmptyTape));
}

#[test]
fn optimizer_clears_gradients() {
    let mut params = ParamStore::new();
    let w = params.add("w", Matrix::from_vec(1, 1, vec![0.0]));
    params.grad_mut(w).data_mut()[0] = 1.0;
    optimizer_step(&mut params, &AdamConfig { lr: 0.1, ..AdamConfig::default() }, |_| true).unwrap();
    assert!((params.value(w).data()[0] + 0.1).abs() < 1e-9);
    assert_eq!(params.grad(w).data(), &[0.0]);
}
