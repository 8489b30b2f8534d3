//! Independent re-derivations of the reference model.

use epur::generate::{
    generate_weights, random_network, random_weight_set, rng, synthetic_input, RandomShape, PRESETS,
};
use epur::model::{
    cell_step, layer_infer, network_infer, CellState, Direction, Gate, GateWeights,
    LayerDescriptor, Matrix, NetworkDescriptor, NetworkWeights, Precision, Sequence, WeightSet,
};
use rand::Rng;

fn sig(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Plain loops over steps, neurons and inputs, fp32 only.
fn triple_loop(l: &LayerDescriptor, w: &WeightSet, xs: &[Vec<f32>]) -> Vec<Vec<f32>> {
    let nh = l.hidden_size;
    let mut c = vec![0.0f32; nh];
    let mut h = vec![0.0f32; nh];
    let mut out = Vec::new();
    for x in xs {
        let mut c2 = vec![0.0f32; nh];
        let mut h2 = vec![0.0f32; nh];
        for j in 0..nh {
            let pre = |g: Gate, cell: f32| {
                let gw = w.gate(g);
                let mut acc = 0.0f32;
                for k in 0..l.input_size {
                    acc += gw.forward.get(j, k) * x[k];
                }
                for k in 0..nh {
                    acc += gw.recurrent.get(j, k) * h[k];
                }
                if let Some(p) = &gw.peephole {
                    acc += p[j] * cell;
                }
                acc + gw.bias[j]
            };
            let i = sig(pre(Gate::Input, c[j]));
            let f = sig(pre(Gate::Forget, c[j]));
            let g = pre(Gate::CellUpdater, 0.0).tanh();
            c2[j] = f * c[j] + i * g;
            let o = sig(pre(Gate::Output, c2[j]));
            h2[j] = o * c2[j].tanh();
        }
        c = c2;
        h = h2.clone();
        out.push(h2);
    }
    out
}

#[test]
fn layer_matches_triple_loop() {
    let mut r = rng(11);
    for _ in 0..40 {
        let nx = r.random_range(1..40);
        let nh = r.random_range(1..40);
        let l = LayerDescriptor::new(nx, nh, Direction::ForwardOnly, r.random_bool(0.5));
        let w = random_weight_set(&l, Precision::Fp32, &mut r);
        let t = r.random_range(1..12);
        let x = synthetic_input(nx, t, Precision::Fp32, r.random());
        let frames: Vec<Vec<f32>> = x.frames().map(<[f32]>::to_vec).collect();
        let got = layer_infer(&l, &[w.clone()], &x, Precision::Fp32).unwrap();
        let want = Sequence::from_frames(&triple_loop(&l, &w, &frames)).unwrap();
        assert_eq!(got, want);
    }
}

#[test]
fn cell_step_matches_equations_written_out() {
    let mut r = rng(12);
    let mut cells = 0;
    while cells < 1200 {
        let nx = r.random_range(1..9);
        let nh = r.random_range(1..9);
        let l = LayerDescriptor::new(nx, nh, Direction::ForwardOnly, r.random_bool(0.5));
        let w = random_weight_set(&l, Precision::Fp32, &mut r);
        let x: Vec<f32> = (0..nx).map(|_| r.random_range(-2.0..2.0)).collect();
        let prev = CellState {
            c: (0..nh).map(|_| r.random_range(-2.0..2.0)).collect(),
            h: (0..nh).map(|_| r.random_range(-1.0..1.0)).collect(),
        };
        let next = cell_step(&w, &x, &prev).unwrap();
        let dot = |m: &Matrix, j: usize, v: &[f32], mut acc: f32| {
            for (a, b) in m.row(j).iter().zip(v) {
                acc += a * b;
            }
            acc
        };
        let (wi, wf, wg, wo) = (
            w.gate(Gate::Input),
            w.gate(Gate::Forget),
            w.gate(Gate::CellUpdater),
            w.gate(Gate::Output),
        );
        let pc = |g: &GateWeights, j: usize, c: f32| g.peephole.as_ref().map_or(0.0, |p| p[j] * c);
        for j in 0..nh {
            let i_t = sig(dot(&wi.recurrent, j, &prev.h, dot(&wi.forward, j, &x, 0.0))
                + pc(wi, j, prev.c[j])
                + wi.bias[j]);
            let f_t = sig(dot(&wf.recurrent, j, &prev.h, dot(&wf.forward, j, &x, 0.0))
                + pc(wf, j, prev.c[j])
                + wf.bias[j]);
            let g_t =
                (dot(&wg.recurrent, j, &prev.h, dot(&wg.forward, j, &x, 0.0)) + wg.bias[j]).tanh();
            let c_t = f_t * prev.c[j] + i_t * g_t;
            let o_t = sig(dot(&wo.recurrent, j, &prev.h, dot(&wo.forward, j, &x, 0.0))
                + pc(wo, j, c_t)
                + wo.bias[j]);
            let h_t = o_t * c_t.tanh();
            assert_eq!(next.c[j].to_bits(), c_t.to_bits());
            assert_eq!(next.h[j].to_bits(), h_t.to_bits());
            cells += 1;
        }
    }
}

#[test]
fn hand_computed_single_neuron() {
    // values from a double-precision evaluation of the same cell
    let want = [
        (0.1524519067986656, 0.11798879855107973),
        (-0.20372716843257557, -0.08931150368667663),
        (-0.2925263037561562, -0.17268682561320578),
    ];
    let l = LayerDescriptor::new(1, 1, Direction::ForwardOnly, true);
    let mut w = WeightSet::zeros(&l);
    let set = |g: Gate, wx: f32, wh: f32, b: f32, p: f32, w: &mut WeightSet| {
        let gw = w.gate_mut(g);
        gw.forward = Matrix::from_vec(1, 1, vec![wx]).unwrap();
        gw.recurrent = Matrix::from_vec(1, 1, vec![wh]).unwrap();
        gw.bias = vec![b];
        if let Some(pp) = gw.peephole.as_mut() {
            pp[0] = p;
        }
    };
    set(Gate::Input, 0.5, 0.1, 0.0, 0.05, &mut w);
    set(Gate::Forget, -0.25, 0.2, 1.0, -0.05, &mut w);
    set(Gate::CellUpdater, 0.75, -0.3, -0.5, 0.0, &mut w);
    set(Gate::Output, 1.0, 0.4, 0.25, 0.1, &mut w);
    let mut s = CellState::zeros(1);
    for (x, (c, h)) in [1.0f32, -0.5, 0.25].into_iter().zip(want) {
        s = cell_step(&w, &[x], &s).unwrap();
        assert!((s.c[0] as f64 - c).abs() < 1e-6, "{} vs {c}", s.c[0]);
        assert!((s.h[0] as f64 - h).abs() < 1e-6, "{} vs {h}", s.h[0]);
    }
}

#[test]
fn bidirectional_is_two_passes_concatenated() {
    let mut r = rng(13);
    for _ in 0..20 {
        let nx = r.random_range(1..20);
        let nh = r.random_range(1..20);
        let peep = r.random_bool(0.5);
        let bi = LayerDescriptor::new(nx, nh, Direction::Bidirectional, peep);
        let uni = LayerDescriptor::new(nx, nh, Direction::ForwardOnly, peep);
        let fw = random_weight_set(&uni, Precision::Fp32, &mut r);
        let bw = random_weight_set(&uni, Precision::Fp32, &mut r);
        let x = synthetic_input(nx, r.random_range(1..10), Precision::Fp32, r.random());
        let both = layer_infer(&bi, &[fw.clone(), bw.clone()], &x, Precision::Fp32).unwrap();
        let f = layer_infer(&uni, &[fw], &x, Precision::Fp32).unwrap();
        let b = layer_infer(&uni, &[bw], &x.reversed(), Precision::Fp32)
            .unwrap()
            .reversed();
        for t in 0..x.len() {
            let mut cat = f.frame(t).to_vec();
            cat.extend_from_slice(b.frame(t));
            assert_eq!(both.frame(t), &cat[..]);
        }
    }
}

#[test]
fn full_forget_and_closed_input_conserve_the_cell() {
    let l = LayerDescriptor::new(3, 4, Direction::ForwardOnly, false);
    let mut w = generate_weights(
        &NetworkDescriptor::stacked(3, [(4, Direction::ForwardOnly, false)]),
        3,
    )
    .layers
    .remove(0)
    .remove(0);
    w.gate_mut(Gate::Forget).bias = vec![1000.0; 4];
    w.gate_mut(Gate::Input).bias = vec![-1000.0; 4];
    let mut s = CellState {
        c: vec![0.5, -1.25, 2.0, 0.0],
        h: vec![0.0; 4],
    };
    let c0 = s.c.clone();
    for t in 0..6 {
        let x = vec![0.1 * t as f32, -0.3, 0.7];
        s = cell_step(&w, &x, &s).unwrap();
        assert_eq!(s.c, c0);
    }
    assert_eq!(l.hidden_size, s.h.len());
}

#[test]
fn inference_is_deterministic() {
    let mut r = rng(14);
    for i in 0..10 {
        let net = random_network(RandomShape::default(), &mut r);
        let w = generate_weights(&net, i);
        let x = synthetic_input(net.input_dim, 7, Precision::Fp32, i);
        assert_eq!(
            network_infer(&net, &w, &x).unwrap(),
            network_infer(&net, &w, &x).unwrap()
        );
        assert_eq!(generate_weights(&net, i), w);
    }
}

#[test]
fn fp16_stores_half_values_and_stays_close() {
    let mut net = NetworkDescriptor::stacked(
        10,
        [
            (12, Direction::Bidirectional, true),
            (8, Direction::ForwardOnly, false),
        ],
    );
    let w32 = generate_weights(&net, 5);
    let x = synthetic_input(10, 6, Precision::Fp32, 5);
    let full = network_infer(&net, &w32, &x).unwrap();
    net.numeric_precision = Precision::Fp16;
    let w16 = NetworkWeights {
        layers: w32
            .layers
            .iter()
            .map(|ws| {
                ws.iter()
                    .map(|s| {
                        let mut s = s.clone();
                        for g in Gate::ALL {
                            let gw = s.gate_mut(g);
                            for v in gw
                                .forward
                                .as_mut_slice()
                                .iter_mut()
                                .chain(gw.recurrent.as_mut_slice())
                            {
                                *v = Precision::Fp16.store(*v);
                            }
                            for v in gw.bias.iter_mut().chain(gw.peephole.iter_mut().flatten()) {
                                *v = Precision::Fp16.store(*v);
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect(),
    };
    let half = network_infer(&net, &w16, &x).unwrap();
    for (&a, &b) in half.as_slice().iter().zip(full.as_slice()) {
        assert_eq!(
            Precision::Fp16.store(a),
            a,
            "output not representable in fp16"
        );
        assert!((a - b).abs() < 1e-2, "{a} vs {b}");
    }
}

#[test]
fn preset_footprints_frozen() {
    // bytes computed by hand from each preset's shape
    let want = [
        ("BYSDNE", 42_014_720u64, 8_402_944u64),
        ("RLDRADSPR", 167_915_520, 16_791_552),
        ("EESEN", 43_916_800, 4_924_160),
        ("LDLRNN", 1_052_672, 526_336),
        ("GMAT", 285_351_936, 16_785_408),
    ];
    for (p, (name, total, cell)) in PRESETS.iter().zip(want) {
        assert_eq!(p.name, name);
        let net = p.descriptor();
        assert_eq!(net.weight_bytes(), total, "{name}");
        assert_eq!(net.max_cell_bytes(), cell, "{name}");
    }
}
