mod common;

use common::{random_tensor, rng};
use mgtnet::training::elastic_loss;
use mgtnet::{ForwardMode, MgtNet, ModelConfig, SkeletonGraph, Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn toy_net(seed: u64) -> MgtNet {
    MgtNet::new(ModelConfig::toy(), &SkeletonGraph::human36m(), seed).unwrap()
}

#[test]
fn every_parameter_receives_a_gradient() {
    let net = toy_net(0);
    let mut r = rng(1);
    let input = random_tensor(&mut r, &[17, 2, 3]);
    let target = random_tensor(&mut r, &[1, 17, 3]);
    let mut tape = Tape::new();
    let bindings = net.params().bind(&mut tape);
    let out = net.forward(&mut tape, &bindings, &input, &mut ForwardMode::Eval).unwrap();
    let pred = tape.stack(&[out]).unwrap();
    let t = tape.constant(target);
    let loss = elastic_loss(&mut tape, pred, t, 0.01).unwrap();
    tape.backward(loss).unwrap();
    for (id, &v) in net.params().ids().zip(bindings.vars()) {
        let g = tape.grad(v).unwrap();
        assert!(g.iter().any(|&x| x != 0.0), "`{}` has an all-zero gradient", net.params().name(id));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn evaluation_is_deterministic(seed in 0u64..1000) {
        let net = toy_net(seed);
        let x = random_tensor(&mut rng(seed + 1), &[17, 2, 3]);
        prop_assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
        prop_assert_eq!(toy_net(seed).predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn output_is_finite_for_finite_input(seed in 0u64..1000, scale in prop::sample::select(vec![1e-6, 1.0, 1e3, 1e6])) {
        let net = toy_net(seed);
        let mut r = rng(seed);
        let x = Tensor::new(&[17, 2, 3], (0..102).map(|_| scale * r.random_range(-1.0..1.0)).collect()).unwrap();
        prop_assert!(net.predict(&x).unwrap().is_finite());
        prop_assert!(net.predict(&Tensor::zeros(&[17, 2, 3])).unwrap().is_finite());
    }

    #[test]
    fn frames_only_grow_the_embedding(t1 in 1usize..40, dt in 1usize..40, hidden in prop::sample::select(vec![2, 4, 8]), hops in 0usize..4, dcl in any::<bool>()) {
        let g = SkeletonGraph::human36m();
        let cfg = |frames| ModelConfig { frames, hidden, hops, heads: 2, use_dcl: dcl, ..ModelConfig::toy() };
        let a = MgtNet::new(cfg(t1), &g, 0).unwrap();
        let b = MgtNet::new(cfg(t1 + dt), &g, 0).unwrap();
        prop_assert_eq!(b.param_count() - a.param_count(), 2 * dt * hidden * (hops + 1));
        for ((na, ta), (nb, tb)) in a.params().iter().zip(b.params().iter()) {
            prop_assert_eq!(na, nb);
            prop_assert!(ta.shape() == tb.shape() || na.starts_with("embedding."));
        }
    }
}
