use super::*;
use crate::autodiff::grad_check;
use crate::data::Family;

fn tiny(family: Family) -> ModelConfig {
    let mut c = ModelConfig::for_family(family);
    c.d_model = 8;
    c.n_heads = 2;
    c.ffn_dim = 12;
    c.lstm_hidden = 6;
    c.k_time = 3;
    c.enc_len_frames = 6;
    c.horizon_frames = 4;
    c.seed = 11;
    c
}

fn inputs(c: &ModelConfig, salt: f64) -> (Tensor, Vec<f64>, Tensor, Vec<f64>) {
    let d = c.family.feature_dim();
    let t = c.enc_len_frames;
    let h = c.horizon_frames;
    let enc: Vec<f64> = (0..t * d)
        .map(|i| 0.5 + 0.4 * ((i as f64) * 0.37 + salt).sin())
        .collect();
    let dec: Vec<f64> = (0..(h + 1) * 2)
        .map(|i| 0.5 + 0.3 * ((i as f64) * 0.71 + salt).cos())
        .collect();
    let back = h.div_ceil(2);
    (
        Tensor::matrix(t, d, enc).unwrap(),
        (0..t).map(|i| i as f64 / c.fps).collect(),
        Tensor::matrix(h + 1, 2, dec).unwrap(),
        (0..=h).map(|i| (t - 1 - back + i) as f64 / c.fps).collect(),
    )
}

#[test]
fn input_projection_widths() {
    let m = Model::new(ModelConfig::for_family(Family::F1)).unwrap();
    assert_eq!(m.params.get("enc.in.w").unwrap().shape(), &[4 + 15 + 1, 128]);
    let m = Model::new(ModelConfig::for_family(Family::F4)).unwrap();
    assert_eq!(m.params.get("enc.in.w").unwrap().shape(), &[74 + 15 + 1, 128]);
    assert_eq!(m.params.get("dec.in.w").unwrap().shape(), &[2 + 15 + 1, 128]);
    assert_eq!(m.params.get("out.w").unwrap().shape(), &[128, 2]);
}

#[test]
fn parameter_count() {
    let c = tiny(Family::F2);
    let (d, f, k, hh) = (c.d_model, c.ffn_dim, c.k_time, c.lstm_hidden);
    let linear = |i: usize, o: usize| i * o + o;
    let attn = 4 * linear(d, d);
    let norm = 2 * d;
    let ffn = linear(d, f) + linear(f, d);
    let expected = 4 * (k + 1)
        + linear(72 + k + 1, d)
        + linear(2 + k + 1, d)
        + 2 * (attn + ffn + 2 * norm)
        + (2 * attn + ffn + 3 * norm)
        + (d * 4 * hh + hh * 4 * hh + 4 * hh)
        + linear(hh, 2);
    assert_eq!(Model::new(c).unwrap().param_count(), expected);
}

#[test]
fn init_is_deterministic_per_seed() {
    let c = tiny(Family::F3);
    assert_eq!(init_params(&c).unwrap(), init_params(&c).unwrap());
    let mut other = c.clone();
    other.seed += 1;
    assert_ne!(init_params(&c).unwrap(), init_params(&other).unwrap());
}

#[test]
fn init_values() {
    let c = tiny(Family::F1);
    let p = init_params(&c).unwrap();
    assert!(p.get("enc.0.norm1.gain").unwrap().data().iter().all(|&x| x == 1.0));
    assert!(p.get("enc.0.attn.q.b").unwrap().data().iter().all(|&x| x == 0.0));
    let b = p.get("lstm.b").unwrap().data();
    let h = c.lstm_hidden;
    assert!(b[..h].iter().all(|&x| x == 0.0));
    assert!(b[h..2 * h].iter().all(|&x| x == 1.0));
    assert!(b[2 * h..].iter().all(|&x| x == 0.0));
    let w = p.get("enc.0.ffn.up.w").unwrap();
    let a = (6.0 / (c.d_model + c.ffn_dim) as f64).sqrt();
    assert!(w.data().iter().all(|x| x.abs() <= a));
    assert!(w.data().iter().any(|x| x.abs() > a / 2.0));
}

#[test]
fn single_key_attention_returns_projected_value() {
    let mut g = Graph::new();
    let mut mk = |rows, cols, seed: f64| {
        g.constant(
            Tensor::matrix(
                rows,
                cols,
                (0..rows * cols).map(|i| (i as f64 * 0.3 + seed).sin()).collect(),
            )
            .unwrap(),
        )
    };
    let w = AttentionWeights {
        q: Linear { w: mk(4, 4, 0.1), b: mk(1, 4, 0.2) },
        k: Linear { w: mk(4, 4, 0.3), b: mk(1, 4, 0.4) },
        v: Linear { w: mk(4, 4, 0.5), b: mk(1, 4, 0.6) },
        o: Linear { w: mk(4, 4, 0.7), b: mk(1, 4, 0.8) },
    };
    let q = mk(3, 4, 1.0);
    let kv = mk(1, 4, 2.0);
    let out = multi_head_attention(&mut g, q, kv, &w, 2, None).unwrap();
    let v = w.v.apply(&mut g, kv).unwrap();
    let expect = w.o.apply(&mut g, v).unwrap();
    for r in 0..3 {
        for c in 0..4 {
            let (a, b) = (g.value(out).at(r, c), g.value(expect).at(0, c));
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn degenerate_smoother_outputs_projection_bias() {
    let mut c = tiny(Family::F1);
    c.seed = 3;
    c.anchor_relative = false;
    let mut m = Model::new(c.clone()).unwrap();
    for name in ["lstm.w_ih", "lstm.w_hh"] {
        m.params.get_mut(name).unwrap().data_mut().fill(0.0);
    }
    m.params
        .get_mut("out.b")
        .unwrap()
        .data_mut()
        .copy_from_slice(&[0.25, -0.5]);
    let (e, et, d, dt) = inputs(&c, 0.0);
    let out = m.predict(&e, &et, &d, &dt).unwrap();
    for r in 0..out.rows() {
        assert_eq!(out.row(r), &[0.25, -0.5]);
    }
}

#[test]
fn causal_mask_shape() {
    let m = causal_mask(3);
    assert_eq!(m.row(0), &[0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
    assert_eq!(m.row(2), &[0.0, 0.0, 0.0]);
}

fn perturb_row(t: &Tensor, row: usize) -> Tensor {
    let mut t = t.clone();
    let c = t.cols();
    t.data_mut()[row * c] += 0.3;
    t
}

#[test]
fn masked_decoder_rows_ignore_later_inputs() {
    let c = tiny(Family::F3);
    let m = Model::new(c.clone()).unwrap();
    let (e, et, d, dt) = inputs(&c, 0.5);
    let base = m.predict(&e, &et, &d, &dt).unwrap();
    let changed = m.predict(&e, &et, &perturb_row(&d, 3), &dt).unwrap();
    for r in 0..3 {
        assert_eq!(base.row(r), changed.row(r));
    }
    assert_ne!(base.row(3), changed.row(3));
}

#[test]
fn unmasked_decoder_rows_see_later_inputs() {
    let c = tiny(Family::F2);
    let m = Model::new(c.clone()).unwrap();
    let (e, et, d, dt) = inputs(&c, 0.5);
    let base = m.predict(&e, &et, &d, &dt).unwrap();
    let changed = m.predict(&e, &et, &perturb_row(&d, 3), &dt).unwrap();
    assert_ne!(base.row(0), changed.row(0));
}

#[test]
fn shape_errors() {
    let c = tiny(Family::F4);
    let m = Model::new(c.clone()).unwrap();
    let (_, et, d, dt) = inputs(&c, 0.0);
    let wrong = Tensor::zeros(vec![c.enc_len_frames, 72]);
    assert!(matches!(
        m.predict(&wrong, &et, &d, &dt),
        Err(ModelError::ShapeMismatch(_))
    ));
    let other = init_params(&tiny(Family::F1)).unwrap();
    assert!(matches!(
        Model::from_params(c, other),
        Err(ModelError::ShapeMismatch(_))
    ));
}

#[test]
fn direct_projection_without_smoother() {
    let mut c = tiny(Family::F1);
    c.use_smoother = false;
    let m = Model::new(c.clone()).unwrap();
    assert!(m.params.get("lstm.w_ih").is_none());
    assert_eq!(m.params.get("out.w").unwrap().shape(), &[c.d_model, 2]);
    let (e, et, d, dt) = inputs(&c, 0.1);
    assert_eq!(m.predict(&e, &et, &d, &dt).unwrap().shape(), &[c.horizon_frames + 1, 2]);
}

#[test]
fn gradients_match_finite_differences() {
    for family in [Family::F1, Family::F3] {
        let mut c = tiny(family);
        c.dropout = 0.0;
        c.horizon_frames = 2;
        let m = Model::new(c.clone()).unwrap();
        let (e, et, d, dt) = inputs(&c, 0.2);
        let target = perturb_row(&d, 1);
        let err = grad_check(
            |g, v| {
                let ev = g.constant(e.clone());
                let dv = g.constant(d.clone());
                let tv = g.constant(target.clone());
                let out = m.forward(g, v, ev, &et, dv, &dt).map_err(|e| match e {
                    ModelError::Autodiff(a) => a,
                    other => panic!("{other}"),
                })?;
                let diff = g.sub(out, tv)?;
                let sq = g.square(diff);
                Ok(g.mean(sq))
            },
            m.params.tensors(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{family}: {err}");
    }
}

#[test]
fn dropout_only_in_training_graphs() {
    let c = tiny(Family::F1);
    let m = Model::new(c.clone()).unwrap();
    let (e, et, d, dt) = inputs(&c, 0.9);
    let run = |mut g: Graph| {
        let vars = m.bind(&mut g, true);
        let ev = g.constant(e.clone());
        let dv = g.constant(d.clone());
        let out = m.forward(&mut g, &vars, ev, &et, dv, &dt).unwrap();
        g.value(out).data().to_vec()
    };
    let eval = m.predict(&e, &et, &d, &dt).unwrap().data().to_vec();
    assert_eq!(run(Graph::new()), eval);
    assert_ne!(run(Graph::training(1)), eval);
    assert_eq!(run(Graph::training(1)), run(Graph::training(1)));
}

#[test]
fn anchor_relative_outputs_follow_translation() {
    let c = tiny(Family::F2);
    let m = Model::new(c.clone()).unwrap();
    let (e, et, d, dt) = inputs(&c, 0.4);
    let a = m.predict(&e, &et, &d, &dt).unwrap();
    let shift = [0.125, -0.0625];
    let moved = |t: &Tensor| {
        let mut t = t.clone();
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v += shift[i % 2];
        }
        t
    };
    let b = m.predict(&moved(&e), &et, &moved(&d), &dt).unwrap();
    for r in 0..a.rows() {
        assert!((b.at(r, 0) - a.at(r, 0) - shift[0]).abs() < 1e-12);
        assert!((b.at(r, 1) - a.at(r, 1) - shift[1]).abs() < 1e-12);
    }

    let mut c = c;
    c.anchor_relative = false;
    let m = Model::from_params(c, m.params.clone()).unwrap();
    let a = m.predict(&e, &et, &d, &dt).unwrap();
    let b = m.predict(&moved(&e), &et, &moved(&d), &dt).unwrap();
    assert!((b.at(0, 0) - a.at(0, 0) - shift[0]).abs() > 1e-6);
}
