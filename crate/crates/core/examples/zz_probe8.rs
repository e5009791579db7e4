use ikseed_core::chain::{JointDef, KinematicChain};
use ikseed_core::ik::{solve, IkRequest, Tolerances};
use ikseed_core::pose::{rotation_log, Pose};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn main() {
    let defs = vec![
        JointDef::revolute("j1", Vector3::z(), Pose::identity(), [-std::f64::consts::PI, std::f64::consts::PI]),
        JointDef::revolute("j2", Vector3::z(), Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)), [-std::f64::consts::PI, std::f64::consts::PI]),
        JointDef::fixed("ee", Pose::from_translation(Vector3::new(1.0, 0.0, 0.0))),
    ];
    let chain = KinematicChain::build("p", &[], &BTreeMap::new(), defs, BTreeMap::new(), vec![]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for trial in 0..500 {
        let q_true = [rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI), rng.gen_range(-2.8..2.8)];
        let target = chain.forward_kinematics(&q_true, "ee").unwrap();
        let (x, y) = (target.translation.x, target.translation.y);
        let c2 = ((x * x + y * y - 2.0) / 2.0).clamp(-1.0, 1.0);
        let q2o = c2.acos().copysign(q_true[1]);
        let q1o = y.atan2(x) - (q2o.sin()).atan2(1.0 + q2o.cos());
        let seed = vec![
            (q1o + rng.gen_range(-0.2..0.2)).clamp(-std::f64::consts::PI, std::f64::consts::PI),
            (q2o + rng.gen_range(-0.2..0.2)).clamp(-std::f64::consts::PI, std::f64::consts::PI),
        ];
        let mut request = IkRequest::new(&chain, vec![0, 1], seed.clone(), "ee", target);
        request.tolerances = Tolerances { position: 1e-6, orientation: 1e-6 };
        let out = solve(&request).unwrap();
        if !out.is_success() && trial > 33 {
            println!("trial {trial}: q_true {:?}", q_true);
            println!("  oracle ({q1o:.4}, {q2o:.4}) seed {:?}", seed);
            println!("  final {:?} status {:?}", out.solution, out.status);
            // manual: does the seed's own error decrease monotonically toward
            // the oracle? print error at seed and at oracle
            let e = |q: &[f64]| {
                let f = chain.forward_kinematics(q, "ee").unwrap();
                let dp = (target.translation - f.translation).norm();
                let dr = rotation_log(&(target.rotation * f.rotation.transpose())).norm();
                (dp, dr)
            };
            println!("  err(seed) {:?}  err(oracle) {:?}  err(final) {:?}", e(&seed), e(&[q1o, q2o]), e(&out.solution));
            break;
        }
    }
}
