mod common;

use common::{cvec, sca_config, scenario_instance, single_ue_direct};
use starnoma_core::bcd::{bcd_optimize, initial_state, BcdOptions, BeamProvider};
use starnoma_core::beamforming::{sca_optimize, BeamProblem, ScaOptions};
use starnoma_core::channel::StarBeamMatrix;
use starnoma_core::noma::{AssignmentState, BeamformingState};
use starnoma_core::seeded_rng;

#[test]
fn sca_is_monotone_with_rank_one_solutions() {
    for seed in 0..4 {
        let (cfg, ch, adj) = scenario_instance(sca_config(seed));
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: cfg.p_max_w, r_min: cfg.r_min };
        let mut rng = seeded_rng(seed).substream("sca", 0);
        let (a, beams) = initial_state(&cfg, &problem, &BcdOptions::default(), &mut rng).unwrap();
        let out = sca_optimize(&problem, &a, &beams, &ScaOptions::default(), &mut rng).unwrap();
        let xs = out.xi_sequence();
        assert!(xs.windows(2).all(|w| w[1] >= w[0] - 1e-6), "seed {seed}: {xs:?}");
        assert!(out.trace.iter().all(|t| t.active_rank_one >= 0.99), "seed {seed}");
        for b in 0..ch.n_aps() {
            assert!((out.beams.power(b) - cfg.p_max_w).abs() <= 1e-6 * cfg.p_max_w);
        }
    }
}

#[test]
fn single_ue_matches_mrt_closed_form() {
    let one = AssignmentState::new(1, vec![vec![vec![0]]]).unwrap();
    for seed in 0..10 {
        let mut rng = seeded_rng(seed);
        let n = 1 + rng.below(4);
        let h = cvec(&mut rng, n, 1.0);
        let noise = 10f64.powf(rng.uniform_range(-2.0, 0.0));
        let p_max = rng.uniform_range(0.5, 2.0);
        let (ch, adj) = single_ue_direct(h.clone(), noise);
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max, r_min: 0.0 };
        let w0 = cvec(&mut rng, n, 1.0);
        let w0 = w0.scale(p_max.sqrt() / w0.norm());
        let beams = BeamformingState { omega: vec![vec![w0]], star: StarBeamMatrix { panels: vec![] } };
        let out = sca_optimize(&problem, &one, &beams, &ScaOptions::default(), &mut rng).unwrap();
        let analytic = (1.0 + p_max * h.norm_squared() / noise).log2();
        assert!((out.xi - analytic).abs() <= 0.01 * analytic, "seed {seed}: {} vs {analytic}", out.xi);
    }
}

#[test]
fn bcd_with_sca_is_monotone_and_stops_on_epsilon() {
    for seed in 0..3 {
        let (cfg, ch, adj) = scenario_instance(sca_config(seed));
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: cfg.p_max_w, r_min: cfg.r_min };
        let opts = BcdOptions::default();
        let mut rng = seeded_rng(seed).substream("bcd", 0);
        let start = initial_state(&cfg, &problem, &opts, &mut rng).unwrap();
        let out = bcd_optimize(&cfg, &ch, &adj, BeamProvider::Sca(ScaOptions::default()), start, &opts, &mut rng).unwrap();
        let xs = out.xi_sequence();
        assert!(xs.windows(2).all(|w| w[1] >= w[0] - 1e-6), "seed {seed}: {xs:?}");
        if out.state.converged {
            assert!((xs[xs.len() - 1] - xs[xs.len() - 2]).abs() <= opts.epsilon);
        }
    }
}
