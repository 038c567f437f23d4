mod common;

use ciftree::cart::{fit, prune_path, select, AlphaEval, FitConfig, PsiSpec, SelectionRule, Tree};
use ciftree::cif::FineGrayParams;
use ciftree::data::{Dataset, TimeGrid};
use ciftree::losses::LossKind;
use ciftree::simulation::{apply_censoring, default_grid, sample_full};

fn sim_data(seed: u64, params: &FineGrayParams, n: usize) -> (Dataset, TimeGrid) {
    let mut rng = common::rng(seed);
    let data = apply_censoring(&sample_full(params, n, &mut rng), 1.2, &mut rng).unwrap();
    (data, default_grid(params).unwrap())
}

fn config(kind: LossKind, grid: TimeGrid, seed: u64) -> FitConfig {
    let mut c = FitConfig::new(kind, grid);
    c.seed = seed;
    c
}

fn psi(kind: LossKind) -> PsiSpec {
    if kind.needs_psi() {
        PsiSpec::FineGray(FineGrayParams::HIGH)
    } else {
        PsiSpec::None
    }
}

#[test]
fn every_loss_recovers_the_signal_split() {
    let (data, grid) = sim_data(1, &FineGrayParams::HIGH, 500);
    for kind in LossKind::ALL {
        let res = fit(&data, &config(kind, grid.clone(), 4), psi(kind)).unwrap();
        let splits = res.tree.splits();
        assert!(
            splits.iter().any(|s| s.covariate == 0 && (s.cutpoint - 0.5).abs() < 0.05),
            "{kind}: {splits:?}"
        );
    }
}

#[test]
fn path_is_nested_with_decreasing_size() {
    let (data, grid) = sim_data(2, &FineGrayParams::MEDIUM, 400);
    let res = fit(&data, &config(LossKind::DoublyRobust, grid, 1), PsiSpec::AalenJohansen).unwrap();
    let path = &res.path;
    assert_eq!(path.alphas[0], 0.0);
    assert!(path.alphas.windows(2).all(|w| w[0] < w[1]));
    assert!(path.leaves.windows(2).all(|w| w[0] > w[1]));
    assert!(path.train_risk.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    assert_eq!(*path.leaves.last().unwrap(), 1);
    // Every pruned subtree's leaves are unions of the maximal tree's leaves.
    for &a in &path.alphas {
        let pruned = res.full.pruned(a);
        for w in data.iter().map(|o| &o.covariates) {
            let deep = res.full.route(w, -1.0);
            let shallow = res.full.route(w, a);
            let mut id = deep;
            while id != shallow {
                id = res.full.nodes.iter().find(|n| n.left == Some(id) || n.right == Some(id)).unwrap().id;
            }
            assert_eq!(pruned.predict(w).unwrap(), res.full.node_cif(shallow));
        }
    }
    assert_eq!(&prune_path(&res.full).alphas, &path.alphas);
}

#[test]
fn selection_follows_cv_risk() {
    let (data, grid) = sim_data(3, &FineGrayParams::HIGH, 400);
    let res = fit(&data, &config(LossKind::Ipcw2, grid.clone(), 9), PsiSpec::None).unwrap();
    let cv = res.path.cv_risk.as_ref().unwrap();
    let best = cv.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(cv[res.selected], best);
    assert_eq!(res.tree.n_leaves(), res.path.leaves[res.selected]);
    let one_se = select(&res.path, SelectionRule::OneSe);
    assert!(one_se >= res.selected);
    let se = res.path.cv_se.as_ref().unwrap();
    assert!(cv[one_se] <= best + se[res.selected] + 1e-15);
}

#[test]
fn repeated_cv_selection_is_stable() {
    let (data, grid) = sim_data(4, &FineGrayParams::HIGH, 500);
    let mut picks = Vec::new();
    for seed in [1, 2] {
        let mut c = config(LossKind::DoublyRobust, grid.clone(), seed);
        c.cv_repeats = 2;
        picks.push(fit(&data, &c, psi(LossKind::DoublyRobust)).unwrap().selected);
    }
    assert!(picks[0].abs_diff(picks[1]) <= 1, "{picks:?}");
}

#[test]
fn seed_determinism_and_refit_option() {
    let (data, grid) = sim_data(5, &FineGrayParams::LOW, 300);
    let c = config(LossKind::DoublyRobust, grid.clone(), 17);
    let a = fit(&data, &c, PsiSpec::AalenJohansen).unwrap();
    let b = fit(&data, &c, PsiSpec::AalenJohansen).unwrap();
    assert_eq!(a.path, b.path);
    assert_eq!(a.tree, b.tree);
    let mut r = c.clone();
    r.refit_per_fold = true;
    let refit = fit(&data, &r, PsiSpec::AalenJohansen).unwrap();
    // Same maximal tree, possibly different held-out risks.
    assert_eq!(refit.full, a.full);
    assert_eq!(refit.path.alphas, a.path.alphas);
}

#[test]
fn endpoint_evaluation_is_available() {
    let (data, grid) = sim_data(6, &FineGrayParams::HIGH, 300);
    let mut c = config(LossKind::Ipcw2, grid, 2);
    c.alpha_eval = AlphaEval::Endpoint;
    let res = fit(&data, &c, PsiSpec::None).unwrap();
    assert_eq!(res.path.eval_alpha(1, AlphaEval::Endpoint), res.path.alphas[1]);
    assert!(res.path.cv_risk.is_some());
}

#[test]
fn isotonic_leaves_are_monotone_and_clamped() {
    let (data, grid) = sim_data(7, &FineGrayParams::LOW, 300);
    let mut c = config(LossKind::DoublyRobust, grid, 3);
    c.isotonic = true;
    c.minbucket = 5;
    c.minsplit = 10;
    let res = fit(&data, &c, PsiSpec::AalenJohansen).unwrap();
    for id in res.full.leaves() {
        let v = res.full.node_cif(id);
        assert!(v.windows(2).all(|w| w[0] <= w[1]));
        assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

#[test]
fn tree_json_survives_a_file_round_trip() {
    let (data, grid) = sim_data(8, &FineGrayParams::HIGH, 300);
    let res = fit(&data, &config(LossKind::BuckleyJames, grid, 1), psi(LossKind::BuckleyJames)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.json");
    std::fs::write(&path, res.tree.to_json().unwrap()).unwrap();
    let back = Tree::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, res.tree);
    for o in data.iter() {
        assert_eq!(back.predict(&o.covariates).unwrap(), res.tree.predict(&o.covariates).unwrap());
    }
    let bad = res.tree.to_json().unwrap().replace("cif-tree/v1", "cif-tree/v0");
    assert!(Tree::from_json(&bad).is_err());
}

#[test]
fn ipcw_counts_only_events() {
    let (data, grid) = sim_data(9, &FineGrayParams::HIGH, 300);
    let res = fit(&data, &config(LossKind::Ipcw1, grid.clone(), 1), PsiSpec::None).unwrap();
    let events = data.iter().filter(|o| o.delta).count();
    assert_eq!(res.full.root().n_eligible, events);
    for id in res.full.leaves() {
        assert!(res.full.nodes[id].n_eligible >= 10);
    }
    let res = fit(&data, &config(LossKind::DoublyRobust, grid, 1), psi(LossKind::DoublyRobust)).unwrap();
    assert_eq!(res.full.root().n_eligible, data.len());
}

#[test]
fn missing_psi_is_rejected() {
    let (data, grid) = sim_data(10, &FineGrayParams::HIGH, 100);
    let err = fit(&data, &config(LossKind::DoublyRobust, grid, 1), PsiSpec::None).unwrap_err();
    assert!(matches!(err, ciftree::Error::InvalidArgument(_)));
}
