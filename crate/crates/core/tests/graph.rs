mod common;

use common::graph::{closed_network, oracle_balance};

use ccd_core::graph::evaluate_capacitance;
use ccd_core::sim::{integrate, DriveCycle, Scenario, SolverOptions};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn capacitance_times_rate_is_the_net_inflow(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let g = common::random_graph(&mut r);
        let (x, u, xs) = common::random_point(&g, &mut r);
        let xd = g.state_derivative(&x, &u, &xs).unwrap();
        let want = oracle_balance(&g, &x, &u, &xs);
        for (i, v) in g.states().enumerate() {
            let (b, scale) = want[&v.id];
            let lhs = if v.is_algebraic() { xd[i] } else { evaluate_capacitance(v, x[i]).unwrap() * xd[i] };
            prop_assert!(
                (lhs - b).abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE),
                "{}: {} vs {} (scale {})", v.id, lhs, b, scale
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_network_conserves_energy(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (g, x0) = closed_network(&mut r);
        let c: Vec<f64> = g.states().map(|v| v.capacitance).collect();
        let energy = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let t_final = 10.0;
        let sc = Scenario {
            cycle: DriveCycle::new(vec![0.0, t_final], vec![0.0, 0.0]).unwrap(),
            externals: vec![],
            t_final,
            dt_eval: 0.5,
            x0: x0.clone(),
            u0: vec![],
            options: SolverOptions { h_max: 0.005, ..Default::default() },
        };
        let tr = integrate(&g, None, &sc).unwrap();
        prop_assert!(tr.stats.steps >= 1000, "only {} steps", tr.stats.steps);
        let e0 = energy(&x0);
        for x in &tr.states {
            let drift = (energy(x) - e0).abs() / e0;
            prop_assert!(drift < 1e-6, "relative drift {drift:.3e}");
        }
    }
}
