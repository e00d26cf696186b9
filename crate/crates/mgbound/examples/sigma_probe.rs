use mgbound::multigrid::{self, A0Policy, Coarsening, HierarchyOptions};
use mgbound::problems::poisson_2d;
use mgbound::smoothers::SmootherKind;

fn main() {
    for (label, kind) in [
        ("gs", SmootherKind::GaussSeidel),
        ("jac0.5", SmootherKind::Jacobi { omega: 0.5 }),
        ("jac0.3", SmootherKind::Jacobi { omega: 0.3 }),
        ("jac0.2", SmootherKind::Jacobi { omega: 0.2 }),
    ] {
        let p = poisson_2d(31, 31).unwrap();
        let h = multigrid::build_hierarchy(&p, kind, Coarsening::Geometric, 3, 2, A0Policy::Exact, HierarchyOptions::default()).unwrap();
        let stats = multigrid::level_statics(&h).unwrap();
        let agg = multigrid::aggregates(&stats).unwrap();
        println!("{label}: sigma_L={:.4} eps_L={:.6} delta_L={:.4}", agg.sigma_l, agg.eps_l, agg.delta_l);
    }
    // AMG coarsening comparison
    let p = poisson_2d(31, 31).unwrap();
    let h = multigrid::build_hierarchy(&p, SmootherKind::Jacobi { omega: 0.5 }, Coarsening::AmgDirect { strong_threshold: 0.25 }, 3, 2, A0Policy::Exact, HierarchyOptions::default()).unwrap();
    let stats = multigrid::level_statics(&h).unwrap();
    let agg = multigrid::aggregates(&stats).unwrap();
    println!("amg jac0.5: sigma_L={:.4} eps_L={:.6} delta_L={:.4} (levels {:?})", agg.sigma_l, agg.eps_l, agg.delta_l, (1..=h.num_levels()).map(|k| h.level(k).n).collect::<Vec<_>>());
}
