use dompo::dynamics::{integrate, integrate_with, limit_cycle_stats, perturbation_probe, ClassicalState, IntegratorOptions, ProbeOutcome};
use dompo::stability::{classify, dopo_hopf, hopf_points};
use dompo::steady::{pitchfork_threshold, reconstruct_amplitudes, trivial_solution};
use dompo::{ModelParams, Tolerances};
use num_complex::Complex64 as C64;

fn moderate() -> ModelParams {
    ModelParams { kappa: 1.0, gamma: 0.3, omega: 1.0, delta_p: 0.5, delta_s: -1.0, g: 0.2, ..Default::default() }
}

fn fast_pump(g: f64) -> ModelParams {
    ModelParams { kappa: 100.0, gamma: 0.005, omega: 10.0, delta_p: 5.0, delta_s: -10.0, g, ..Default::default() }
}

fn upper_state(p: &ModelParams, i_s: f64) -> (ModelParams, dompo::SteadyState) {
    let ss = reconstruct_amplitudes(p, i_s, 1).unwrap();
    (p.with_sigma(ss.sigma), ss)
}

#[test]
fn stable_state_attracts_perturbations() {
    let (p, ss) = upper_state(&moderate(), 3.0);
    let rep = classify(&p, &ss, &Tolerances::default()).unwrap();
    assert!(rep.is_stable(), "{rep:?}");
    let rate = rep.margin.abs();

    let mut init = ClassicalState::from_steady(&ss);
    init.x += 1e-3;
    init.beta_s += C64::new(-0.7e-3, 0.4e-3);
    init.beta_p += C64::new(0.2e-3, 0.9e-3);
    let tr = integrate(&p, &init, 20.0 / rate, 1e-11, 1e-13).unwrap();
    let end = tr.last().to_array();
    let target = ClassicalState::from_steady(&ss).to_array();
    let dist = (0..6).map(|d| (end[d] - target[d]).powi(2)).sum::<f64>().sqrt();
    assert!(dist < 1e-6, "{dist}");

    match perturbation_probe(&p, &ss, 1e-3, 10.0 / rate).unwrap() {
        ProbeOutcome::Decays { rate: r } => assert!((r - rate).abs() <= 0.2 * rate, "{r} vs {rate}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn lower_branch_runs_away() {
    let p = ModelParams { delta_p: 2.0, delta_s: 1.0, ..moderate() };
    let i_tp = dompo::steady::turning_point(&p).expect("bistable");
    let (p, ss) = upper_state(&p, 0.5 * i_tp);
    let rep = classify(&p, &ss, &Tolerances::default()).unwrap();
    assert!(!rep.is_stable());
    match perturbation_probe(&p, &ss, 1e-3, 10.0 / rep.margin.abs()).unwrap() {
        ProbeOutcome::Grows { rate } => assert!(rate > 0.0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn threshold_is_inconclusive() {
    let p = moderate();
    let (_, q0) = pitchfork_threshold(&p);
    let p = p.with_sigma(q0.sqrt());
    let ss = trivial_solution(&p);
    assert_eq!(perturbation_probe(&p, &ss, 1e-3, 200.0).unwrap(), ProbeOutcome::Inconclusive);
}

#[test]
fn post_hopf_oscillation_matches_frequency() {
    let tol = Tolerances::default();
    let p = fast_pump(0.25);
    let h = hopf_points(&p, 500.0, &tol).unwrap();
    let h = h.iter().find(|h| h.i_s > 300.0).expect("Hopf point above 300");
    let (p, ss) = upper_state(&p, 1.01 * h.i_s);
    let mut init = ClassicalState::from_steady(&ss);
    init.x += 1e-2;
    let opts = IntegratorOptions { rtol: 1e-9, atol: 1e-12, sample_dt: Some(0.005), ..Default::default() };
    let tr = integrate_with(&p, &init, 300.0, &opts).unwrap();
    let cyc = limit_cycle_stats(&tr).expect("sustained oscillation");
    let expected = 2.0 * std::f64::consts::PI / h.omega;
    assert!((cyc.period - expected).abs() <= 0.1 * expected, "{} vs {expected}", cyc.period);
    assert!(cyc.cycles >= 20);
}

#[test]
fn detuned_dopo_beyond_hopf_oscillates() {
    let p = ModelParams { kappa: 1.0, delta_p: 1.0, delta_s: -60.0, g: 0.0, ..Default::default() };
    let h = dopo_hopf(&p).unwrap().unwrap();
    let (p, ss) = upper_state(&p, 20.0 * h.i_s);
    let mut init = ClassicalState::from_steady(&ss);
    init.beta_s += C64::new(1e-3, 0.0);
    let opts = IntegratorOptions { sample_dt: Some(0.01), ..Default::default() };
    let tr = integrate_with(&p, &init, 600.0, &opts).unwrap();
    assert!(limit_cycle_stats(&tr).is_some());
}

#[test]
fn trajectory_csv_layout() {
    let p = moderate().with_sigma(0.5);
    let tr = integrate_with(&p, &ClassicalState::from_steady(&trivial_solution(&p)), 1.0, &IntegratorOptions { sample_dt: Some(0.5), ..Default::default() }).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau,x,p,re_beta_p,im_beta_p,re_beta_s,im_beta_s");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 7));
    let t: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
    assert_eq!(t, 0.5);
}
