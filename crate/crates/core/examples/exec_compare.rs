// temporary experiment: exact-filter vs experience-only belief execution
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trust_pomdp::iohmm::{belief_update, filter_step};
use trust_pomdp::model::*;
use trust_pomdp::simulant::{split_seed, step};
use trust_pomdp::solver::*;

fn main() {
    let params = ModelParams::reference();
    let env = EnvConfig {
        p_complex_high: 0.5,
        ..EnvConfig::reference()
    };
    let mdp = build_belief_mdp(&params, &env, &BeliefGrid::uniform(101));
    let policy = value_iteration(&mdp, 1e-8).unwrap();
    println!("threshold high = {:?}", policy.threshold(Complexity::High));

    let n = 20_000usize;
    let trials = 40u32;
    for mode in ["exact-filter", "experience-only", "always-auto"] {
        let mut total = 0.0;
        let mut assists = 0u64;
        for i in 0..n {
            let seed = split_seed(777, i as u64);
            let mut crng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0));
            let mut mrng = ChaCha8Rng::seed_from_u64(split_seed(seed, 2));
            let mut trust = if mrng.random::<f64>() < params.initial_trust_high() {
                TrustState::High
            } else {
                TrustState::Low
            };
            let mut belief = params.initial_trust_high();
            let mut e_state = Experience::Reliable;
            for t in 0..trials {
                let c = if crng.random::<f64>() < env.p_complex_high {
                    Complexity::High
                } else {
                    Complexity::Low
                };
                let action = if mode == "always-auto" {
                    RobotAction::Autonomous
                } else {
                    policy.action_for(belief, e_state, c)
                };
                if action == RobotAction::SeekAssistance {
                    assists += 1;
                }
                let (rec, next_trust) = step(&params, &env, i as u64, t, trust, c, action, &mut mrng);
                total += rec.reward as f64;
                belief = match mode {
                    "exact-filter" => filter_step(&params, belief, &rec).unwrap().0,
                    _ => belief_update(&params, belief, rec.experience, rec.complexity, rec.robot_action),
                };
                e_state = rec.experience;
                trust = next_trust;
            }
        }
        println!(
            "{mode:>16}: mean cumulative {:.3}, assist rate {:.4}",
            total / n as f64,
            assists as f64 / (n as u64 * trials as u64) as f64
        );
    }
}
