// exploratory probe (temporary): toy with relaxed targets
use safepd_core::oracle::{max_reduce, QueryOracle, SmoothedConstraint, SmoothedOracle};
use safepd_core::problem::{make_smoothed_max_toy, two_halfspace_constraints};
use safepd_core::scsa::{scsa_solve, ScsaConfig};
use safepd_core::run_rng;

fn main() {
    for (eps, budget) in [(0.5f64, 30_000_000u64), (0.4, 30_000_000)] {
        let nu = 0.1;
        let toy = make_smoothed_max_toy(nu).unwrap();
        let gs = two_halfspace_constraints();
        let g_max = max_reduce(gs.clone()).unwrap();
        let sc = SmoothedConstraint::new(g_max, 2, nu, 8).unwrap();
        let mut oracle = SmoothedOracle::new(
            std::sync::Arc::new(|x: &[f64]| {
                let dx = x[0] - 3.0; let dy = x[1];
                (dx*dx+dy*dy, vec![2.0*dx, 2.0*dy])
            }), sc, 1.0).unwrap();
        let mut rng = run_rng(3);
        let cfg = ScsaConfig::new(eps, eps, 0.01, budget);
        let t0 = std::time::Instant::now();
        let r = scsa_solve(&toy.constants, &mut oracle, &cfg, &mut rng).unwrap();
        let mut viol = 0u64;
        for rec in oracle.ledger().records() {
            if gs.iter().any(|g| g(&rec.x) > 1e-12) { viol += 1; }
        }
        let f = (r.x[0]-3.0).powi(2) + r.x[1].powi(2);
        println!("eps={eps}: outcome={:?} rounds={} x=({:.3},{:.3}) lambda={:.3} f={:.3} viol={viol} calls={} time={:?}",
            r.outcome, r.states.len(), r.x[0], r.x[1], r.lambda, f, oracle.total_calls(), t0.elapsed());
    }
}
