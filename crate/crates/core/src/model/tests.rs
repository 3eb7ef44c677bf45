use nalgebra::{dmatrix, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::finite_difference_check;
use crate::graph::{er_sample, permute, Permutation};

fn random_graph(rng: &mut ChaCha8Rng, n: usize, f: usize, p: f64) -> Graph {
    let g = er_sample(n, p, rng).unwrap();
    let x = DMatrix::from_fn(n, f, |_, _| rng.gen_range(0.0..1.0));
    g.with_features(x).unwrap()
}

fn small_config(kind: ModelKind, mode: PropagationMode) -> ModelConfig {
    ModelConfig {
        kind,
        hidden1: 4,
        hidden2_attention: 3,
        hidden2_features: 5,
        prop_mode: mode,
    }
}

fn head_output(head: &GcnHead, g: &Graph) -> DMatrix<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = head
        .parameters()
        .into_iter()
        .map(|p| tape.param(p.clone()))
        .collect();
    let out = head.forward(&mut tape, &vars, g).unwrap();
    tape.value(out).clone()
}

#[test]
fn head_zero_features_give_zero_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = er_sample(6, 0.5, &mut rng)
        .unwrap()
        .with_features(DMatrix::zeros(6, 3))
        .unwrap();
    for mode in PropagationMode::ALL {
        let head = GcnHead::init(3, 8, 4, mode, &mut rng).unwrap();
        assert_eq!(head_output(&head, &g), DMatrix::zeros(6, 4), "{mode}");
    }
}

#[test]
fn head_hand_evaluated_single_edge() {
    // Ã = [[.5,.5],[.5,.5]]; with X = W0 = W1 = I each layer maps to Ã itself.
    let g = Graph::from_edges(2, &[(0, 1)], DMatrix::identity(2, 2), 0).unwrap();
    let head = GcnHead {
        w0: DMatrix::identity(2, 2),
        w1: DMatrix::identity(2, 2),
        props: [
            PropagationSpec::new(PropagationMode::SymNormAPlusI),
            PropagationSpec::new(PropagationMode::SymNormAPlusI),
        ],
    };
    let out = head_output(&head, &g);
    assert!((out - DMatrix::from_element(2, 2, 0.5)).abs().max() < 1e-15);

    // X = [[1,0],[1,0]]: X·W0 = [[1,2],[1,2]] and Ã averages the two equal
    // rows, so layer 1 is [[1,2],[1,2]]; layer 2 is [[1,2],[1,2]]·W1 = [[1,3],[1,3]].
    let head = GcnHead {
        w0: dmatrix![1.0, 2.0; 0.0, 0.0],
        w1: dmatrix![1.0, -1.0; 0.0, 2.0],
        ..head
    };
    let g = Graph::from_edges(2, &[(0, 1)], dmatrix![1.0, 0.0; 1.0, 0.0], 0).unwrap();
    let out = head_output(&head, &g);
    assert!(
        (&out - dmatrix![1.0, 3.0; 1.0, 3.0]).abs().max() < 1e-14,
        "{out}"
    );
}

#[test]
fn head_rejects_wrong_feature_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = random_graph(&mut rng, 4, 2, 0.5);
    let head = GcnHead::init(3, 4, 4, PropagationMode::RawA, &mut rng).unwrap();
    let mut tape = Tape::new();
    let vars = vec![tape.param(head.w0.clone()), tape.param(head.w1.clone())];
    assert!(matches!(
        head.forward(&mut tape, &vars, &g),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn head_is_row_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for mode in PropagationMode::ALL {
        for _ in 0..10 {
            let n = rng.gen_range(1..15);
            let g = random_graph(&mut rng, n, 3, 0.3);
            let mut head = GcnHead::init(3, 6, 5, mode, &mut rng).unwrap();
            for p in head.props.iter_mut() {
                if p.mode() == PropagationMode::Learned {
                    *p = PropagationSpec::learned(
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    );
                }
            }
            let perm = Permutation::random(n, &mut rng);
            let h = head_output(&head, &g);
            let hp = head_output(&head, &permute(&g, &perm).unwrap());
            let expected = perm.permute_rows(&h).unwrap();
            assert!((hp - expected).abs().max() < 1e-12, "{mode}");
        }
    }
}

#[test]
fn pinet_outputs_are_distributions_and_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for mode in PropagationMode::ALL {
        let config = ModelConfig {
            prop_mode: mode,
            ..small_config(ModelKind::PinetGcn, mode)
        };
        let shape = DataShape {
            feature_dim: 2,
            num_classes: 3,
            max_vertices: 20,
        };
        let model = init_params(&config, shape, &mut rng).unwrap();
        for _ in 0..5 {
            let n = rng.gen_range(1..20);
            let g = random_graph(&mut rng, n, 2, 0.3);
            let z = model.predict(&g).unwrap();
            assert_eq!(z.len(), 3);
            assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(z.iter().all(|&p| p >= 0.0));
            let perm = Permutation::random(n, &mut rng);
            let zp = model.predict(&permute(&g, &perm).unwrap()).unwrap();
            let diff = z
                .iter()
                .zip(&zp)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-9, "{mode}: {diff}");
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = small_config(ModelKind::PinetGcn, PropagationMode::SymNormAPlusI);
    let shape = DataShape {
        feature_dim: 2,
        num_classes: 2,
        max_vertices: 0,
    };
    let AnyModel::PiNet(model) = init_params(&config, shape, &mut rng).unwrap() else {
        unreachable!()
    };
    let g = random_graph(&mut rng, 9, 2, 0.4);
    let att = model.attention(&g).unwrap();
    assert_eq!(att.shape(), (3, 9));
    for row in att.row_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pinet_single_vertex_ignores_attention_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let config = small_config(ModelKind::PinetGcn, PropagationMode::APlusI);
    let shape = DataShape {
        feature_dim: 2,
        num_classes: 2,
        max_vertices: 1,
    };
    let AnyModel::PiNet(model) = init_params(&config, shape, &mut rng).unwrap() else {
        unreachable!()
    };
    let g = Graph::new(DMatrix::zeros(1, 1), dmatrix![0.7, 0.2], 0).unwrap();
    let mut other = model.clone();
    other.head_attention.w0 = other.head_attention.w0.map(|x| -3.0 * x);
    other.head_attention.w1 = other.head_attention.w1.map(|x| x + 1.0);
    assert_eq!(
        model.attention(&g).unwrap(),
        DMatrix::from_element(3, 1, 1.0)
    );
    let z1 = model.predict(&g).unwrap();
    let z2 = other.predict(&g).unwrap();
    assert_eq!(z1, z2);

    // E has every row equal to the single ψ_X row
    let hx = head_output(&model.head_features, &g);
    let v: Vec<f64> = (0..3)
        .flat_map(|_| hx.row(0).iter().copied().collect::<Vec<_>>())
        .collect();
    let logits = DMatrix::from_row_slice(1, v.len(), &v) * &model.dense;
    let m = logits.max();
    let e = logits.map(|x| (x - m).exp());
    let expected = &e / e.sum();
    for (a, b) in z1.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn mean_baseline_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let config = small_config(ModelKind::GcnMean, PropagationMode::SymNormAPlusI);
    let shape = DataShape {
        feature_dim: 3,
        num_classes: 4,
        max_vertices: 0,
    };
    let model = init_params(&config, shape, &mut rng).unwrap();
    for _ in 0..10 {
        let n = rng.gen_range(1..16);
        let g = random_graph(&mut rng, n, 3, 0.3);
        let z = model.predict(&g).unwrap();
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let perm = Permutation::random(n, &mut rng);
        let zp = model.predict(&permute(&g, &perm).unwrap()).unwrap();
        for (a, b) in z.iter().zip(&zp) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
    // single vertex: the mean is the only row
    let AnyModel::GcnMean(m) = &model else {
        unreachable!()
    };
    let g = Graph::new(DMatrix::zeros(1, 1), dmatrix![0.3, 0.9, 0.1], 0).unwrap();
    let h = head_output(&m.head, &g);
    let logits = &h * &m.dense;
    let e = logits.map(|x| (x - logits.max()).exp());
    let expected = &e / e.sum();
    for (a, b) in model.predict(&g).unwrap().iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn mean_baseline_equals_uniform_attention_pinet() {
    // With one attention dimension whose head outputs zeros, the attention
    // row is uniform over vertices and PiNet pools by the mean.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let head = GcnHead::init(2, 4, 5, PropagationMode::SymNormAPlusI, &mut rng).unwrap();
    let dense = glorot_uniform(5, 3, &mut rng).unwrap();
    let mean = GcnMean {
        head: head.clone(),
        dense: dense.clone(),
    };
    let pinet = PiNet {
        head_attention: GcnHead {
            w0: DMatrix::zeros(2, 4),
            w1: DMatrix::zeros(4, 1),
            props: head.props.clone(),
        },
        head_features: head,
        dense,
    };
    for _ in 0..10 {
        let n = rng.gen_range(1..12);
        let g = random_graph(&mut rng, n, 2, 0.4);
        let a = mean.predict(&g).unwrap();
        let b = pinet.predict(&g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn dense_baseline_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let config = small_config(ModelKind::GcnDense, PropagationMode::SymNormAPlusI);
    let shape = DataShape {
        feature_dim: 2,
        num_classes: 3,
        max_vertices: 7,
    };
    let model = init_params(&config, shape, &mut rng).unwrap();
    let AnyModel::GcnDense(dense) = &model else {
        unreachable!()
    };
    assert_eq!(dense.dense.shape(), (7 * 5, 3));

    // full width: no padding, plain flatten of the head output
    let g = random_graph(&mut rng, 7, 2, 0.4);
    let h = head_output(&dense.head, &g);
    let flat: Vec<f64> = (0..7)
        .flat_map(|i| h.row(i).iter().copied().collect::<Vec<_>>())
        .collect();
    let logits = DMatrix::from_row_slice(1, flat.len(), &flat) * &dense.dense;
    let e = logits.map(|x| (x - logits.max()).exp());
    let expected = &e / e.sum();
    for (a, b) in model.predict(&g).unwrap().iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-14);
    }

    // zero features give a uniform prediction
    let z = model
        .predict(
            &er_sample(5, 0.5, &mut rng)
                .unwrap()
                .with_features(DMatrix::zeros(5, 2))
                .unwrap(),
        )
        .unwrap();
    for p in z {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }

    // relabelling vertices changes the output for some permutation
    let g = random_graph(&mut rng, 6, 2, 0.5);
    let z = model.predict(&g).unwrap();
    let moved = (0..20).any(|_| {
        let perm = Permutation::random(6, &mut rng);
        let zp = model.predict(&permute(&g, &perm).unwrap()).unwrap();
        z.iter().zip(&zp).any(|(a, b)| (a - b).abs() > 1e-6)
    });
    assert!(moved, "dense baseline looked permutation invariant");

    let big = random_graph(&mut rng, 8, 2, 0.5);
    assert!(matches!(
        model.predict(&big),
        Err(Error::Capacity {
            vertices: 8,
            capacity: 7
        })
    ));
}

#[test]
fn init_is_seeded_and_bounded() {
    let config = ModelConfig::default();
    let shape = DataShape {
        feature_dim: 7,
        num_classes: 2,
        max_vertices: 28,
    };
    let a = init_params(&config, shape, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let b = init_params(&config, shape, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    assert_eq!(a, b);
    let AnyModel::PiNet(m) = &a else {
        unreachable!()
    };
    assert_eq!(m.head_attention.w0.shape(), (7, 32));
    assert_eq!(m.head_attention.w1.shape(), (32, 64));
    assert_eq!(m.dense.shape(), (64 * 64, 2));
    let limit = glorot_limit(32, 64);
    assert!(m.head_features.w1.iter().all(|x| x.abs() <= limit));

    // U(-l, l) has variance l²/3; the mean of 2048 draws has σ = l/√(3·2048)
    let w = &m.head_attention.w1;
    let sigma = limit / (3.0 * w.len() as f64).sqrt();
    assert!(
        w.mean().abs() < 3.0 * sigma,
        "mean {} vs 3σ {}",
        w.mean(),
        3.0 * sigma
    );

    let learned = init_params(
        &ModelConfig::with_kind(ModelKind::PinetGcnLearned),
        shape,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    let pq = learned.learned_pq();
    assert_eq!(pq.len(), 4);
    assert!(pq.iter().all(|&(_, _, p, q)| p == 0.5 && q == 0.5));
}

#[test]
fn init_rejects_zero_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let shape = DataShape {
        feature_dim: 0,
        num_classes: 2,
        max_vertices: 3,
    };
    assert!(matches!(
        init_params(&ModelConfig::default(), shape, &mut rng),
        Err(Error::Parameter(_))
    ));
    let config = ModelConfig {
        hidden1: 0,
        ..Default::default()
    };
    let shape = DataShape {
        feature_dim: 2,
        num_classes: 2,
        max_vertices: 3,
    };
    assert!(init_params(&config, shape, &mut rng).is_err());
}

#[test]
fn model_kind_strings() {
    for k in ModelKind::ALL {
        assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
    }
    assert!("diffpool".parse::<ModelKind>().is_err());
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = [
        (ModelKind::PinetGcn, PropagationMode::SymNormAPlusI),
        (ModelKind::PinetGcnLearned, PropagationMode::Learned),
        (ModelKind::PinetGcn, PropagationMode::RawA),
        (ModelKind::GcnMean, PropagationMode::Learned),
        (ModelKind::GcnDense, PropagationMode::SymNormA),
    ];
    for (kind, mode) in cases {
        for n in [1, 4, 6] {
            let g = random_graph(&mut rng, n, 3, 0.5).with_label(1);
            let shape = DataShape {
                feature_dim: 3,
                num_classes: 3,
                max_vertices: 6,
            };
            let model = init_params(&small_config(kind, mode), shape, &mut rng).unwrap();
            let params: Vec<DMatrix<f64>> = model.parameters().into_iter().cloned().collect();
            let report = finite_difference_check(
                |t, v| {
                    let z = model.forward(t, v, &g)?;
                    t.cross_entropy(z, g.label())
                },
                &params,
                1e-6,
            )
            .unwrap();
            assert!(
                report.max_relative_error < 1e-5,
                "{kind} {mode} n={n}: {report:?}"
            );
        }
    }
}
