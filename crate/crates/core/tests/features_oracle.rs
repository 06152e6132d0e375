mod common;

use std::collections::BTreeMap;

use common::rng;
use rand::Rng;
use scamsweeper_core::features::{
    aggregate, align_neighbors, build_edge_features, build_node_features, subgraph_features, NodeFeatures, FEATURE_DIM,
};
use scamsweeper_core::synth::{generate, SynthConfig};
use scamsweeper_core::walk::{run_walk, Interval, SampledEdge, Subgraph, WalkConfig};

const ETH: u128 = 1_000_000_000_000_000_000;

#[test]
fn single_outgoing_edge_row() {
    let sg = Subgraph {
        anchor: 0,
        nodes: vec![0, 1],
        edges: vec![SampledEdge { edge: 0, from: 0, to: 1, value: ETH, timestamp: 100 }],
    };
    let ef = build_edge_features(&sg, Interval { lo: 100, hi: 200 }).unwrap();
    assert_eq!(ef.rows, vec![[2f64.log10(), 0.0, 1.0]]);

    let zero = Subgraph { edges: vec![SampledEdge { value: 0, from: 1, to: 0, ..sg.edges[0] }], ..sg };
    let ef = build_edge_features(&zero, Interval { lo: 100, hi: 200 }).unwrap();
    assert_eq!(ef.rows[0][0], 0.0);
    assert_eq!(ef.rows[0][2], 0.0);
}

/// Straight recomputation of the raw neighbor rows from the subgraph's edges:
/// [log10(1+in), log10(1+out), count, first, last, mean gap, mean edge row].
fn recompute_raw(sg: &Subgraph, iv: Interval) -> Vec<[f64; FEATURE_DIM]> {
    let width = (iv.hi - iv.lo) as f64;
    let mut per: BTreeMap<usize, Vec<&SampledEdge>> = BTreeMap::new();
    for e in &sg.edges {
        let other = if e.from == sg.anchor { e.to } else { e.from };
        per.entry(other).or_default().push(e);
    }
    sg.nodes[1..]
        .iter()
        .map(|u| {
            let es = &per[u];
            let eth = |e: &SampledEdge| e.value as f64 / 1e18;
            let recv: f64 = es.iter().filter(|e| e.to == *u).map(|e| eth(e)).sum();
            let sent: f64 = es.iter().filter(|e| e.from == *u).map(|e| eth(e)).sum();
            let ts: Vec<u64> = es.iter().map(|e| e.timestamp).collect();
            let (first, last) = (*ts.iter().min().unwrap(), *ts.iter().max().unwrap());
            let n = es.len() as f64;
            let gap = if es.len() > 1 { (last - first) as f64 / (n - 1.0) / width } else { 0.0 };
            let mean = |f: &dyn Fn(&SampledEdge) -> f64| es.iter().map(|e| f(e)).sum::<f64>() / n;
            [
                (1.0 + recv).log10(),
                (1.0 + sent).log10(),
                n,
                (first - iv.lo) as f64 / width,
                (last - iv.lo) as f64 / width,
                gap,
                mean(&|e| (1.0 + eth(e)).log10()),
                mean(&|e| (e.timestamp - iv.lo) as f64 / width),
                mean(&|e| if e.from == sg.anchor { 1.0 } else { 0.0 }),
            ]
        })
        .collect()
}

fn recompute_aligned(raw: &[[f64; FEATURE_DIM]], n_max: usize, slope: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max * FEATURE_DIM];
    for c in 0..FEATURE_DIM {
        let lo = raw.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
        let hi = raw.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
        for (i, r) in raw.iter().enumerate() {
            let s = if hi > lo { (r[c] - lo) / (hi - lo) } else { 0.0 };
            out[i * FEATURE_DIM + c] = if s > 0.0 { s } else { slope * s };
        }
    }
    out
}

#[test]
fn synthetic_subgraphs_match_recomputation() {
    let out = generate(&SynthConfig { n_accounts: 800, seed: 12, ..SynthConfig::default() }).unwrap();
    let g = &out.graph;
    let cfg = WalkConfig { seed: 3, ..WalkConfig::for_graph(g) };
    let mut five_edge = 0;
    let mut checked = 0;
    for v in 0..g.num_accounts() {
        let seq = run_walk(g, v, &cfg).unwrap();
        for (sg, iv) in seq.subgraphs.iter().zip(&seq.intervals) {
            let ef = build_edge_features(sg, *iv).unwrap();
            for (row, e) in ef.rows.iter().zip(&sg.edges) {
                let want = [
                    (1.0 + e.value as f64 / 1e18).log10(),
                    (e.timestamp - iv.lo) as f64 / (iv.hi - iv.lo) as f64,
                    if e.from == sg.anchor { 1.0 } else { 0.0 },
                ];
                assert!(row.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12), "{row:?} vs {want:?}");
            }
            let raw = recompute_raw(sg, *iv);
            let aligned = subgraph_features(sg, *iv, cfg.structural_window, 0.01).unwrap();
            assert_eq!(aligned.count, raw.len());
            for (i, r) in raw.iter().enumerate() {
                for c in 0..FEATURE_DIM {
                    let got = aligned.raw[i * FEATURE_DIM + c];
                    assert!((got - r[c]).abs() < 1e-12, "row {i} col {c}: {got} vs {}", r[c]);
                }
            }
            let want = recompute_aligned(&raw, cfg.structural_window, 0.01);
            for (a, b) in aligned.aligned.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
            five_edge += usize::from(sg.edges.len() == 5);
            checked += 1;
        }
        if five_edge >= 5 && checked >= 200 {
            break;
        }
    }
    assert!(five_edge >= 5, "only {five_edge} five-edge subgraphs seen");
}

#[test]
fn aggregate_cases() {
    assert_eq!(aggregate(&[3.7], &[2.0, -1.0], 2, 1), vec![2.0, -1.0]);
    assert_eq!(aggregate(&[0.0, 0.0], &[1.0, 1.0, 3.0, 3.0], 2, 2), vec![2.0, 2.0]);
    assert_eq!(aggregate(&[1.0, 2.0], &[1.0, 1.0], 2, 0), vec![0.0, 0.0]);

    let mut r = rng(77);
    for _ in 0..200 {
        let n = r.random_range(1..=10);
        let k = r.random_range(1..=9);
        let w: Vec<f64> = (0..10).map(|_| r.random_range(-3.0..3.0)).collect();
        let m: Vec<f64> = (0..n * k).map(|_| r.random_range(-5.0..5.0)).collect();
        let got = aggregate(&w, &m, k, n);
        let z: f64 = w[..n].iter().map(|x| x.exp()).sum();
        for c in 0..k {
            let want: f64 = (0..n).map(|i| w[i].exp() / z * m[i * k + c]).sum();
            assert!((got[c] - want).abs() < 1e-12);
            let col = (0..n).map(|i| m[i * k + c]);
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            assert!(got[c] >= lo - 1e-12 && got[c] <= hi + 1e-12);
        }
    }
}

#[test]
fn two_neighbor_alignment_by_hand() {
    let nf = NodeFeatures {
        neighbors: vec![4, 9],
        value: vec![[1.0, 0.0, 2.0], [3.0, 0.0, 1.0]],
        time: vec![[0.5, 0.5, 0.0], [0.25, 1.0, 0.0]],
        edge: vec![[0.2, 0.5, 1.0], [0.6, 0.5, 0.0]],
    };
    let a = align_neighbors(&nf, 4, 0.01).unwrap();
    #[rustfmt::skip]
    let want = vec![
        0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ];
    assert_eq!(a.aligned, want);
    assert_eq!(a.row_mask(), vec![true, true, true, false, false]);
    assert!(align_neighbors(&nf, 1, 0.01).is_err());
}

#[test]
fn full_and_empty_alignment() {
    let nf = NodeFeatures { neighbors: vec![], value: vec![], time: vec![], edge: vec![] };
    let a = align_neighbors(&nf, 3, 0.01).unwrap();
    assert!(a.aligned.iter().all(|v| *v == 0.0));
    let anchor = [1.0; FEATURE_DIM];
    let m = a.matrix_with_anchor(&anchor);
    assert_eq!(m.len(), 4 * FEATURE_DIM);
    assert!(m[FEATURE_DIM..].iter().all(|v| *v == 0.0));

    let sg = Subgraph {
        anchor: 0,
        nodes: vec![0, 1, 2],
        edges: vec![
            SampledEdge { edge: 0, from: 0, to: 1, value: ETH, timestamp: 10 },
            SampledEdge { edge: 1, from: 2, to: 0, value: 3 * ETH, timestamp: 20 },
        ],
    };
    let iv = Interval { lo: 0, hi: 100 };
    let ef = build_edge_features(&sg, iv).unwrap();
    let nf = build_node_features(&sg, iv, &ef);
    let a = align_neighbors(&nf, 2, 0.01).unwrap();
    assert_eq!(a.count, 2);
    assert_eq!(a.aligned.len(), 2 * FEATURE_DIM);
}
