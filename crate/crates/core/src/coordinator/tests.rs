use super::*;
use crate::constraints::{formation_values, QuadraticBarrier};
use crate::harness::metrics::count_collisions;
use crate::harness::{generate_scenario, ScenarioParams};
use crate::{vector, AgentState, CbfParams, DynamicsParams, FormationConstraint, JointState, Verdict};

fn pair_world(obstacle: Option<(Vector2, Provenance)>) -> RoundRobinWorld {
    let dynamics = DynamicsParams::new(0.1, 2).unwrap();
    let fc = FormationConstraint::new(0, 1, 1.0, 0.3).unwrap();
    let config = PlannerConfig::new(vec![fc], CbfParams::new(0.3).unwrap(), dynamics, 1.0);
    let joint = JointState::new(vec![
        AgentState::at_rest(vector(&[0.0, 4.5])),
        AgentState::at_rest(vector(&[0.0, 5.5])),
    ])
    .unwrap();
    let mut beliefs = vec![BeliefSet::new(config.match_tol); 2];
    if let Some((c, prov)) = obstacle {
        let b = QuadraticBarrier::circle(vector(&c), 1.0).unwrap();
        match prov {
            Provenance::Public => beliefs.iter_mut().for_each(|bs| {
                bs.insert(b.clone(), Provenance::Public);
            }),
            _ => {
                beliefs[0].insert(b, Provenance::Private);
            }
        }
    }
    let goals = vec![vector(&[10.0, 4.5]), vector(&[10.0, 5.5])];
    RoundRobinWorld::new(joint, beliefs, goals, config).unwrap()
}

type Vector2 = [f64; 2];

#[test]
fn obstacle_free_pair_reaches_goals_with_nominal_controls() {
    let mut w = pair_world(None);
    w.run(300).unwrap();
    assert!(w.halted().is_none());
    for rec in &w.log {
        for a in &rec.agents {
            assert_eq!(a.u_safe, a.u_nom);
            assert!(a.inference.is_none());
        }
    }
    for (a, g) in w.joint.agents.iter().zip(&w.goals) {
        assert!((&a.position - g).norm() < 0.05, "final {:?}", a.position);
    }
    let rep = check_safety_certificate(&w, &[]);
    assert_eq!(rep.min_margin, f64::INFINITY);
}

#[test]
fn private_obstacle_is_learned_before_the_learner_reaches_it() {
    let theta = [5.0, 4.0];
    let mut w = pair_world(Some((theta, Provenance::Private)));
    w.run(300).unwrap();
    assert!(w.halted().is_none(), "{:?}", w.halted());
    let truth = vector(&theta);
    let learned_at = w
        .log
        .iter()
        .find(|rec| {
            rec.agents[1]
                .inference
                .as_ref()
                .is_some_and(|inf| inf.added && inf.theta_hat.as_ref().is_some_and(|th| (th - &truth).norm() < 1e-6))
        })
        .map(|rec| rec.t)
        .expect("learner never inferred the obstacle");
    assert_eq!(
        w.log[learned_at].agents[1].inference.as_ref().unwrap().verdict,
        Verdict::InferredClosedForm
    );
    let traj = w.trajectory();
    let first_contact = traj.iter().position(|p| (&p[1] - &truth).norm() < 1.0 + 1e-9);
    assert!(first_contact.is_none_or(|c| c > learned_at));
    assert_eq!(count_collisions(&traj, &[(truth, 1.0)]), 0);
}

#[test]
fn beliefs_only_grow_and_demonstrators_rotate() {
    let mut w = pair_world(Some(([5.0, 4.0], Provenance::Private)));
    let mut sizes = vec![w.beliefs[0].len(), w.beliefs[1].len()];
    for t in 0..200 {
        let rec = w.step().unwrap();
        assert_eq!(rec.demonstrator, t % 2);
        assert_eq!(rec.agents.iter().filter(|a| a.role == Role::Demonstrator).count(), 1);
        for (i, s) in sizes.iter_mut().enumerate() {
            assert!(w.beliefs[i].len() >= *s);
            *s = w.beliefs[i].len();
        }
    }
}

#[test]
fn formation_band_holds_every_step() {
    let mut w = pair_world(Some(([5.0, 4.0], Provenance::Public)));
    w.run(300).unwrap();
    assert!(w.halted().is_none());
    let fc = w.config.formation[0];
    for p in w.trajectory() {
        let (lo, hi) = formation_values(&p[0], &p[1], &fc);
        assert!(lo >= -1e-6 && hi >= -1e-6, "lo {lo} hi {hi}");
    }
}

#[test]
fn halted_world_refuses_to_step() {
    let mut w = pair_world(None);
    // A tight speed limit leaves agent 0 no way out of an obstacle centered on it.
    w.beliefs[0].insert(QuadraticBarrier::circle(vector(&[0.0, 4.5]), 1.0).unwrap(), Provenance::Private);
    w.config.vel_bound = Some(crate::VelocityBound::new(0.1).unwrap());
    let rec = w.step().unwrap();
    assert!(rec.failure.is_some());
    assert!(w.halted().is_some());
    assert!(w.step().is_err());
}

#[test]
fn larger_teams_avoid_every_obstacle() {
    for n in [3, 4] {
        let p = ScenarioParams { n_agents: n, ..Default::default() };
        let spec = generate_scenario(1, &p).unwrap();
        let mut w = spec.build_world().unwrap();
        w.run(p.t_e).unwrap();
        let obstacles: Vec<_> = spec.obstacles.iter().map(|b| (b.theta.clone(), b.r)).collect();
        if w.halted().is_none() {
            assert_eq!(count_collisions(&w.trajectory(), &obstacles), 0, "n = {n}");
        }
        let demos: std::collections::BTreeSet<_> = w.log.iter().map(|r| r.demonstrator).collect();
        assert_eq!(demos.len(), n.min(w.log.len()));
    }
}

#[test]
fn certificate_flags_missing_inflation() {
    let mut w = pair_world(Some(([5.0, 4.0], Provenance::Private)));
    w.config.form = crate::ConstraintForm::Circle;
    w.run(50).unwrap();
    let rep = check_safety_certificate(&w, &[QuadraticBarrier::circle(vector(&[5.0, 4.0]), 1.0).unwrap()]);
    assert!(!rep.inflation_ok);
    assert!(!rep.passed());
}

#[test]
fn functional_step_matches_method() {
    let a = pair_world(None);
    let mut b = a.clone();
    let a = round_robin_step(a).unwrap();
    b.step().unwrap();
    assert_eq!(a.joint, b.joint);
}
