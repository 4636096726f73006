use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xmpo::diffusion::{noise_sample, NoiseSchedule};
use xmpo::egnn::{EgnnConfig, EgnnModel};
use xmpo::explain::{explain_graph, parse_csv, render_csv, ShapleyExplanation};
use xmpo::molgraph::{
    build_edges, canonicalize_com, parse_qm9_record, to_qm9_record, Atom, Edge, EdgeMode, Element, FeatureLayout,
    MolecularGraph, ParseOptions,
};
use xmpo::numcore::Matrix;
use xmpo::qed::{desirability, qed_loss, ADS_PARAMS, DESIRABILITY_FLOOR};
use xmpo::training::{l_egnn, History, HistoryRow};

fn element() -> impl Strategy<Value = Element> {
    prop::sample::select(Element::ALL.to_vec())
}

fn position() -> impl Strategy<Value = [f64; 3]> {
    [-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64]
}

fn molecule(max_atoms: usize) -> impl Strategy<Value = MolecularGraph> {
    prop::collection::vec((element(), position()), 1..=max_atoms).prop_map(|atoms| {
        let atoms = atoms.into_iter().map(|(e, p)| Atom::new(e, p, FeatureLayout::default())).collect();
        build_edges(&MolecularGraph::new("gdb_1", atoms), EdgeMode::Complete)
    })
}

/// Reorders atoms by `order` and relabels the edges to match.
fn permute(graph: &MolecularGraph, order: &[usize]) -> MolecularGraph {
    let mut inverse = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        inverse[old] = new;
    }
    let mut g = graph.clone();
    g.atoms = order.iter().map(|&k| graph.atoms[k].clone()).collect();
    g.edges = graph.edges.iter().map(|e| Edge::new(inverse[e.i], inverse[e.j])).collect();
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn egnn_is_invariant_to_atom_order(
        (g, order) in molecule(7).prop_flat_map(|g| {
            let n = g.n_atoms();
            (Just(g), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        }),
        seed in any::<u64>(),
    ) {
        let model = EgnnModel::new(EgnnConfig { hidden: 8, layers: 2, ..EgnnConfig::default() }, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let a = model.forward(&g).unwrap();
        let b = model.forward(&permute(&g, &order)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn l_egnn_ignores_row_order(
        rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 6), 2..8),
        shift in -2.0..2.0f64,
        raw_weights in prop::collection::vec(0.01..1.0f64, 3),
    ) {
        let total: f64 = raw_weights.iter().sum();
        let weights: Vec<f64> = raw_weights.iter().map(|w| w / total).collect();
        let y = Matrix::from_rows(&rows.iter().map(|r| r[..3].to_vec()).collect::<Vec<_>>()).unwrap();
        let y_hat = Matrix::from_rows(&rows.iter().map(|r| r[3..].iter().map(|v| v + shift).collect()).collect::<Vec<_>>()).unwrap();
        let reversed = |m: &Matrix| Matrix::from_rows(&(0..m.rows()).rev().map(|r| m.row(r).to_vec()).collect::<Vec<_>>()).unwrap();
        let a = l_egnn(&y, &y_hat, &weights).unwrap();
        let b = l_egnn(&reversed(&y), &reversed(&y_hat), &weights).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn schedule_loses_signal_monotonically(steps in 1usize..400) {
        let s = NoiseSchedule::polynomial(steps).unwrap();
        prop_assert_eq!(s.alpha_bar.len(), steps + 1);
        for t in 1..=steps {
            prop_assert!(s.alpha_bar[t] <= s.alpha_bar[t - 1]);
            prop_assert!(s.alpha_bar[t] > 0.0 && s.alpha_bar[t] <= 1.0);
            prop_assert!((s.alpha_bar[t] + s.sigma[t] * s.sigma[t] - 1.0).abs() < 1e-12);
            prop_assert!((0.0..1.0).contains(&s.beta(t)));
        }
    }

    #[test]
    fn noise_keeps_molecules_centered(g in molecule(9), t in 1usize..=100, seed in any::<u64>()) {
        let centered = canonicalize_com(&g);
        let com = centered.center_of_mass();
        prop_assert!(com.iter().all(|c| c.abs() < 1e-9));
        let schedule = NoiseSchedule::default();
        let state = noise_sample(&centered, t, &schedule, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let com = state.noised.center_of_mass();
        prop_assert!(com.iter().all(|c| c.abs() < 1e-9), "{com:?}");
        for d in 0..3 {
            let sum: f64 = state.epsilon.column(d).iter().sum();
            prop_assert!(sum.abs() < 1e-12, "{sum}");
        }
    }

    #[test]
    fn shapley_values_add_up_to_the_prediction_gap(
        g in molecule(4).prop_filter("needs an edge", |g| g.n_edges() > 0),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = EgnnModel::new(EgnnConfig { hidden: 8, layers: 2, properties: 3, ..EgnnConfig::default() }, &mut rng).unwrap();
        let ex = explain_graph(&model, &g, 2, None, &mut rng).unwrap();
        for p in 0..3 {
            let sum: f64 = (0..ex.n_edges()).map(|e| ex.phi.get(e, p)).sum();
            let gap = ex.target[p] - ex.base_value[p];
            prop_assert!((sum - gap).abs() <= 1e-5 * (1.0 + gap.abs()), "sum {sum} gap {gap}");
        }
    }

    #[test]
    fn desirability_stays_in_range(k in 0usize..8, x in -1e4..1e4f64) {
        let d = desirability(&ADS_PARAMS[k], x);
        prop_assert!((DESIRABILITY_FLOOR..=1.0).contains(&d));
    }

    #[test]
    fn qed_loss_vanishes_only_above_threshold(q in 0.0..1.0f64, tau in 0.0..1.0f64) {
        let l = qed_loss(q, tau);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, q >= tau);
    }

    #[test]
    fn history_csv_round_trips(
        mask in prop::array::uniform4(any::<bool>()),
        values in prop::collection::vec(prop::array::uniform5(-1e6..1e6f64), 1..20),
    ) {
        let pick = |on: bool, v: f64| on.then_some(v);
        let history = History {
            rows: values
                .iter()
                .enumerate()
                .map(|(step, v)| HistoryRow {
                    step,
                    l_dm: pick(mask[0], v[0]),
                    l_egnn: pick(mask[1], v[1]),
                    qed_loss: pick(mask[2], v[2]),
                    l_fidelity: pick(mask[3], v[3]),
                    total: v[4],
                })
                .collect(),
        };
        prop_assert_eq!(History::parse_csv(&history.to_csv()).unwrap(), history);
    }

    #[test]
    fn explanation_csv_round_trips(phi in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 2), 1..10)) {
        let edges: Vec<(usize, usize)> = (0..phi.len()).map(|k| (k, k + 1)).collect();
        let ex = ShapleyExplanation {
            edges: edges.clone(),
            phi: Matrix::from_rows(&phi).unwrap(),
            base_value: vec![0.0; 2],
            target: vec![0.0; 2],
            ridge_applied: false,
        };
        let rows = parse_csv(&render_csv(&ex, &["alpha", "gap"]).unwrap()).unwrap();
        prop_assert_eq!(rows.len(), 2 * phi.len());
        for (k, row) in rows.iter().enumerate() {
            prop_assert_eq!((row.src, row.dst), edges[k / 2]);
            prop_assert_eq!(row.phi, phi[k / 2][k % 2]);
        }
    }

    #[test]
    fn qm9_records_round_trip(
        g in molecule(9),
        alpha in 1.0..200.0f64,
        homo in -12000.0..-3000.0f64,
        lumo in -3000.0..3000.0f64,
        mu in 0.0..10.0f64,
        cv in 5.0..50.0f64,
    ) {
        let mut g = g;
        g.edges.clear();
        g.properties = vec![alpha, lumo - homo, homo, lumo, mu, cv];
        let back = parse_qm9_record(&to_qm9_record(&g), &ParseOptions::default()).unwrap();
        prop_assert_eq!(back.atoms.len(), g.atoms.len());
        for (a, b) in back.atoms.iter().zip(&g.atoms) {
            prop_assert_eq!(a.element, b.element);
            prop_assert_eq!(a.position, b.position);
        }
        for (a, b) in back.properties.iter().zip(&g.properties) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}
