use hmo_core::metrics::jump_clusters;
use hmo_core::scenario::{PerMode, Scenario, ScenarioConfig, BATTERY_CONFIG, VDP_CONFIG};
use hmo_core::supervisor::{apply_reset, jump_guard, select_mode, SupervisorState, TieBreak};
use nalgebra::DVector;
use proptest::prelude::*;

fn state(eta: Vec<f64>, sigma: usize, xhat: Vec<f64>) -> SupervisorState {
    SupervisorState {
        x: DVector::from_element(1, 0.5),
        xhat: xhat.into_iter().map(|v| DVector::from_element(1, v)).collect(),
        gain_states: vec![Vec::new(); eta.len()],
        eta,
        sigma,
        xf: None,
    }
}

fn monitors() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
    (2usize..6).prop_flat_map(|n| {
        (
            proptest::collection::vec(prop_oneof![Just(1.0), 0.0f64..5.0], n),
            proptest::collection::vec(-3.0f64..3.0, n),
            proptest::collection::vec(-10.0f64..10.0, n),
            0..n,
        )
    })
}

proptest! {
    #[test]
    fn selection_and_reset_rules((eta, rates, xhat, sigma) in monitors(), reset in any::<bool>(), eps in 1e-4f64..1.0) {
        prop_assume!(jump_guard(&eta, sigma) <= 0.0);
        let s = state(eta.clone(), sigma, xhat.clone());
        let next = select_mode(&eta, sigma, &rates, TieBreak::LowestIndex, 0.0);
        // Productive switch onto a monitor minimizer.
        prop_assert_ne!(next, sigma);
        prop_assert!(eta[next] <= jump_guard(&eta, sigma) + eta[sigma] + 1e-12);

        let post = apply_reset(&s, next, reset, eps);
        prop_assert_eq!(post.sigma, next);
        // Nominal immunity, bit for bit.
        prop_assert_eq!(post.eta[0].to_bits(), eta[0].to_bits());
        prop_assert_eq!(post.xhat[0][0].to_bits(), xhat[0].to_bits());
        prop_assert_eq!(post.eta[next], eta[next]);
        prop_assert_eq!(&post.x, &s.x);
        for k in 1..eta.len() {
            if k != next {
                // Penalized modes sit strictly above the selected one.
                prop_assert!(post.eta[k] > post.eta[next]);
            }
            if reset {
                prop_assert_eq!(post.xhat[k][0], xhat[next]);
            } else {
                prop_assert_eq!(post.xhat[k][0], xhat[k]);
            }
        }
    }

    #[test]
    fn seeded_tie_break_stays_in_the_argmin(n in 3usize..7, seed in any::<u64>(), t in 0.0f64..10.0) {
        let eta = vec![2.0; n];
        let rates = vec![0.5; n];
        let k = select_mode(&eta, 0, &rates, TieBreak::SeededRandom(seed), t);
        prop_assert!(k >= 1 && k < n);
        prop_assert_eq!(k, select_mode(&eta, 0, &rates, TieBreak::SeededRandom(seed), t));
    }
}

fn short_run(base: &str, t_end: f64, xhat: Vec<f64>, reset: u8) -> hmo_core::scenario::RunOutput {
    let mut cfg = ScenarioConfig::parse(base).unwrap();
    cfg.solver.t_end = t_end;
    cfg.supervisor.reset = reset;
    cfg.initial.xhat = PerMode::Shared(xhat);
    Scenario::from_config(cfg).unwrap().run().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn vdp_runs_respect_hybrid_invariants(a in -2.0f64..2.0, b in -2.0f64..2.0, reset in 0u8..2) {
        let out = short_run(VDP_CONFIG, 0.6, vec![a, b], reset);
        let lay = out.system.layout();
        let arc = &out.arc;
        prop_assert!(arc.is_valid_domain());
        prop_assert!(out.max_eta_excess() <= 1e-9);
        prop_assert!(out.min_eta() >= 0.0);
        prop_assert!(out.report.max_cost_excess() <= 0.0);
        let times: Vec<f64> = arc.jump_events.iter().map(|e| e.time.t).collect();
        prop_assert!(jump_clusters(&times).iter().all(|&(_, n)| n <= 2));
        for log in out.system.switch_log(arc) {
            prop_assert_ne!(log.sigma_before, log.sigma_after);
        }
        // Nominal estimate and monitor pass through every jump untouched.
        for w in arc.samples.windows(2) {
            if w[1].time.j != w[0].time.j {
                prop_assert_eq!(w[0].time.t, w[1].time.t);
                for i in lay.mode(0).chain([lay.eta(0)]).chain(lay.plant()) {
                    prop_assert_eq!(w[0].state[i].to_bits(), w[1].state[i].to_bits());
                }
            }
        }
        // Flow-set respect at flow samples, up to one step of monitor slope.
        for s in &arc.samples {
            let sig = lay.sigma_of(&s.state);
            let etas: Vec<f64> = lay.etas().map(|i| s.state[i]).collect();
            let slope = out.system.eta_rates(s.time.t, &s.state).iter().fold(1.0f64, |m, r| m.max(r.abs()));
            prop_assert!(jump_guard(&etas, sig) >= -slope * 1e-3 - 1e-9);
        }
    }
}

#[test]
fn battery_soc_is_an_integrator_without_current() {
    let mut cfg = ScenarioConfig::parse(BATTERY_CONFIG).unwrap();
    cfg.solver.t_end = 5.0;
    cfg.signals.input = hmo_core::scenario::InputSpec::None;
    let out = Scenario::from_config(cfg).unwrap().run().unwrap();
    let soc: Vec<f64> = out.arc.samples.iter().map(|s| s.state[1]).collect();
    assert!(soc.iter().all(|&v| v == soc[0]));
}
