use std::sync::OnceLock;

use orbit_consensus::consensus::Protocol;
use orbit_consensus::numerics::{norm2, vec_sub};
use orbit_consensus::network::Switching;
use orbit_consensus::scenario::{ScenarioFile, PAPER_PRESET};
use orbit_consensus::sim::{consensus_error, run, RunOptions, Simulation, TRACE_TOL};
use orbit_consensus::{Error, Scenario};

/// The two double integrators from the preset, alternating between the two
/// one-way links.
fn pair_file() -> ScenarioFile {
    let mut file = ScenarioFile::preset(PAPER_PRESET).unwrap();
    file.name = "integrator-pair".into();
    file.agents = file.agents.split_off(2);
    file.network.nodes = 2;
    file.network.graphs = vec![vec![[0, 1]], vec![[1, 0]]];
    file.steps = 200;
    file
}

fn pair() -> &'static Scenario {
    static SC: OnceLock<Scenario> = OnceLock::new();
    SC.get_or_init(|| Scenario::build(pair_file()).unwrap())
}

fn opts(protocol: Protocol, steps: usize) -> RunOptions {
    RunOptions {
        steps,
        ..RunOptions::from_scenario(pair()).with_protocol(protocol)
    }
}

#[test]
fn zero_steps_records_only_initial_state() {
    let sc = pair();
    let tr = run(sc, opts(Protocol::Cp3, 0)).unwrap();
    assert!(tr.steps.is_empty());
    assert_eq!(tr.initial, tr.last);
    assert_eq!(tr.initial[0].w, sc.w0[0]);
    assert_eq!(tr.summary.final_delta, None);
    assert!(!tr.summary.converged);
    let dir = tempfile::tempdir().unwrap();
    tr.write_dir(dir.path()).unwrap();
    let net = std::fs::read_to_string(dir.path().join("network.csv")).unwrap();
    assert_eq!(net.trim(), "t,graph,delta");
}

#[test]
fn identical_agents_never_disagree() {
    let mut file = pair_file();
    file.agents[1] = file.agents[0].clone();
    file.agents[1].name = "twin".into();
    let sc: Scenario = Scenario::build(file).unwrap();
    let tr = run(&sc, RunOptions { steps: 150, ..RunOptions::from_scenario(&sc).with_protocol(Protocol::Cp1) }).unwrap();
    assert!(tr.deltas().iter().all(|&d| d == 0.0));
}

#[test]
fn single_agent_on_its_manifold_tracks_exactly() {
    let mut file = pair_file();
    file.agents.truncate(1);
    file.network.nodes = 1;
    file.network.graphs = vec![vec![]];
    file.network.switching = Switching::Fixed { index: 0 };
    let probe: Scenario = Scenario::build(file.clone()).unwrap();
    let w0 = probe.w0[0].clone();
    file.agents[0].w0 = w0.clone();
    file.agents[0].x0 = probe.agents[0].pi.mul_vec(&w0);
    let sc: Scenario = Scenario::build(file).unwrap();
    assert!(!sc.w0_projected[0]);
    let tr = run(&sc, RunOptions { steps: 2 * sc.exo.rho(), ..RunOptions::from_scenario(&sc) }).unwrap();
    for s in &tr.steps {
        let r = &s.agents[0];
        assert!(norm2(&vec_sub(&r.y, &sc.exo.output(&r.w))) < 1e-9, "step {}", s.t);
        assert!(norm2(&vec_sub(&r.w, &sc.exo.advance(&w0, s.t as u64))) < TRACE_TOL, "step {}", s.t);
        assert_eq!(s.delta, 0.0);
    }
}

#[test]
fn rotating_frame_matches_plain_mixing() {
    let sc = pair();
    let a = run(sc, opts(Protocol::Cp0, 300)).unwrap();
    let b = run(sc, opts(Protocol::Cp1, 300)).unwrap();
    for (sa, sb) in a.steps.iter().zip(&b.steps) {
        for (ra, rb) in sa.agents.iter().zip(&sb.agents) {
            assert!(norm2(&vec_sub(&ra.w, &rb.w)) < TRACE_TOL, "step {}", sa.t);
        }
    }
}

#[test]
fn delta_is_recomputable_from_outputs_and_csv() {
    let sc = pair();
    let tr = run(sc, opts(Protocol::Cp3, 120)).unwrap();
    for s in &tr.steps {
        let ys: Vec<&[f64]> = s.agents.iter().map(|r| r.y.as_slice()).collect();
        assert_eq!(consensus_error(&ys).to_bits(), s.delta.to_bits());
    }
    let dir = tempfile::tempdir().unwrap();
    tr.write_dir(dir.path()).unwrap();
    let mut rd = csv::Reader::from_path(dir.path().join("network.csv")).unwrap();
    let from_csv: Vec<f64> = rd
        .records()
        .map(|r| r.unwrap()[2].parse().unwrap())
        .collect();
    assert_eq!(from_csv, tr.deltas());

    let mut rd = csv::Reader::from_path(dir.path().join("agent_1.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    let y0 = header.iter().position(|h| h == "y0").unwrap();
    for (row, s) in rd.records().zip(&tr.steps) {
        let row = row.unwrap();
        let y: Vec<f64> = (y0..y0 + 2).map(|k| row[k].parse().unwrap()).collect();
        assert_eq!(y, s.agents[1].y);
    }
}

#[test]
fn constraints_and_admissibility_hold_along_a_delayed_run() {
    let sc = pair();
    let tr = run(sc, opts(Protocol::Cp3, 200)).unwrap();
    assert!(tr.summary.delays);
    assert!(tr.summary.max_constraint_violation <= 1e-9);
    for s in &tr.steps {
        for (r, a) in s.agents.iter().zip(&sc.agents) {
            assert!(a.sets.reference_admissible(&r.w, TRACE_TOL).unwrap(), "step {}", s.t);
        }
        for m in &s.messages {
            assert_eq!(m.sent_at + m.delay, s.t);
            assert!(m.delay <= sc.file.network.delays.tau_max);
        }
    }
}

#[test]
fn ablation_summary_judges_by_failure() {
    let sc = pair();
    let tr = run(sc, opts(Protocol::Cp1Tau, 100)).unwrap();
    let s = &tr.summary;
    assert!(!s.expected_convergent);
    assert_eq!(s.outcome_as_expected, s.failure_reproduced);
    assert_eq!(s.delay_estimates_exact_from, None);
}

#[test]
fn cloned_simulation_continues_identically() {
    let sc = pair();
    let mut a = Simulation::new(sc, opts(Protocol::Cp3, 0));
    for _ in 0..40 {
        a.tick().unwrap();
    }
    let mut b = a.clone();
    for _ in 0..40 {
        assert_eq!(a.tick().unwrap(), b.tick().unwrap());
    }
    assert_eq!(a.step_index(), 80);
}

#[test]
fn infeasible_initial_state_is_a_validation_error() {
    let mut file = pair_file();
    file.agents[0].x0 = vec![0.0, 0.0, 5.0, 0.0];
    match Scenario::build(file) {
        Err(e @ Error::Validation(_)) => assert!(e.is_validation()),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn disconnected_schedule_is_rejected() {
    let mut file = pair_file();
    file.network.graphs = vec![vec![[0, 1]]];
    assert!(matches!(Scenario::build(file), Err(Error::Validation(_))));
}
