use epsafe::domain::{ground, parse_domain, parse_problem, GroundDomain};
use epsafe::error::PlanError;
use epsafe::planner::{solve, PlannerConfig, PlannerKind};
use epsafe::probmodel::ModelKind;
use epsafe::simulator::exact_success;

const KINDS: [PlannerKind; 2] = [PlannerKind::Linear, PlannerKind::Nonlinear];

fn load(domain: &str, problem: &str) -> GroundDomain {
    let d = parse_domain(domain).unwrap();
    let p = parse_problem(problem).unwrap();
    ground(&d, &p).unwrap()
}

fn ski() -> GroundDomain {
    load(include_str!("../data/skiworld.domain"), include_str!("../data/skiworld.problem"))
}

fn radio() -> GroundDomain {
    load(include_str!("../data/skiworld-radio.domain"), include_str!("../data/skiworld-radio.problem"))
}

fn config(epsilon: f64) -> PlannerConfig {
    PlannerConfig {
        model: ModelKind::Kbmc,
        epsilon: Some(epsilon),
        ..Default::default()
    }
}

#[test]
fn radio_forecast_covers_blocked_road() {
    // either the road is clear, or it is blocked and the blizzard flight runs
    let clear = 0.1 * 0.1 + 0.9 * 0.999;
    let blocked_in_storm = 0.1 * 0.9;
    let g = radio();
    for kind in KINDS {
        let out = solve(kind, &g, &PlannerConfig::default()).unwrap();
        assert!((out.plan.achieved_mass - (clear + blocked_in_storm)).abs() < 1e-9, "{kind}");
        let names: Vec<&str> = out.plan.steps.iter().map(|s| s.name.as_str()).collect();
        assert!(names.contains(&"listen-radio") && names.contains(&"fly-abroad"), "{kind}: {names:?}");
        let ex = exact_success(&out.plan).unwrap();
        assert!((ex.probability - out.plan.achieved_mass).abs() < 1e-9);
        assert!(ex.violations.is_empty());
    }
}

#[test]
fn tight_epsilon_reports_best_for_both_planners() {
    let g = ski();
    for kind in KINDS {
        match solve(kind, &g, &config(0.05)) {
            Err(PlanError::UnsolvableWithinEpsilon { target, best_achieved, .. }) => {
                assert!((target - 0.95).abs() < 1e-12);
                assert!((best_achieved - 0.9189991).abs() < 1e-9, "{kind}: {best_achieved}");
            }
            other => panic!("{kind}: {other:?}"),
        }
    }
}

#[test]
fn planning_is_reproducible() {
    let g = ski();
    for kind in KINDS {
        let a = solve(kind, &g, &config(0.1)).unwrap();
        let b = solve(kind, &g, &config(0.1)).unwrap();
        assert_eq!(a.plan.to_json(), b.plan.to_json());
        assert_eq!(a.expanded, b.expanded);
    }
}

#[test]
fn plan_json_round_trips_into_simulator() {
    let g = ski();
    let out = solve(PlannerKind::Nonlinear, &g, &config(0.1)).unwrap();
    let back = epsafe::plan::ConditionalPlan::from_json(&out.plan.to_json()).unwrap();
    assert_eq!(back, out.plan);
    assert!((exact_success(&back).unwrap().probability - 0.9091).abs() < 1e-9);
}

#[test]
fn very_loose_epsilon_is_met() {
    let g = ski();
    for kind in KINDS {
        let out = solve(kind, &g, &config(0.999)).unwrap();
        assert!(out.bound.achieved_mass >= 0.001 - 1e-12);
    }
}

#[test]
fn simple_model_also_solves_first_resort() {
    let g = ski();
    let cfg = PlannerConfig {
        model: ModelKind::Simple,
        epsilon: Some(0.1),
        ..Default::default()
    };
    for kind in KINDS {
        let out = solve(kind, &g, &cfg).unwrap();
        // the observation operator's own outcome probability
        assert!((out.bound.achieved_mass - 0.9091).abs() < 1e-9, "{kind}");
    }
}
