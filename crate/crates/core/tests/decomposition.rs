use linproc_core::innovations::{luxemburg_norm, norms_of, sample_innovations, DEFAULT_LUXEMBURG_TOL};
use linproc_core::linproc::{qn_via_blocks, sup_norm_bound_check};
use linproc_core::{
    decompose, partial_sum, CoeffSeq, CounterRng, Direction, InnovationModel, LinOp, NormSource, PathSampler,
    RadialLaw, Realization, YoungFunction,
};

fn rotation(theta: f64) -> LinOp {
    LinOp::from_rows(&[vec![theta.cos(), -theta.sin()], vec![theta.sin(), theta.cos()]]).unwrap()
}

#[test]
fn geometric_rotation_process_satisfies_all_identities() {
    let c = CoeffSeq::geometric(0.7, &rotation(0.4), 12).unwrap();
    let model = InnovationModel::sub_exponential(2, 1.0).unwrap().with_direction(Direction::Sphere).unwrap();
    for n in [1usize, 5, 11, 12, 13, 40] {
        let real = Realization::draw(&model, Realization::window(12, n), 100 + n as u64);
        let dec = decompose(&c, &real, n).unwrap();
        let scale = 1.0 + dec.s_n.norm();
        assert!(dec.lemma_residual() <= 1e-12 * scale, "n = {n}");
        assert!(dec.r_split_residual() <= 1e-12 * scale, "n = {n}");
        assert!((&qn_via_blocks(&c, &real, n) - &dec.q_n).norm() <= 1e-12 * scale, "n = {n}");
    }
}

#[test]
fn fast_sampler_agrees_with_partial_sum() {
    let c = CoeffSeq::geometric(0.5, &LinOp::diag(&[1.0, 0.5, -0.25]), 8).unwrap();
    let model = InnovationModel::heavy_tail(3, 4.0, 1.0).unwrap();
    let sampler = PathSampler::new(&c, &model).unwrap();
    let rng = CounterRng::new(42);
    let paths = sampler.sample_many(20, 16, &rng);
    for (r, p) in paths.iter().enumerate() {
        let real = Realization::draw_with(&model, Realization::window(8, 20), &rng.fork(r as u64));
        let dec = decompose(&c, &real, 20).unwrap();
        assert!((p.sum - dec.s_n.norm()).abs() <= 1e-10 * (1.0 + p.sum));
        assert!((p.main - dec.main.norm()).abs() <= 1e-10 * (1.0 + p.main));
        let v = &dec.q_n + &dec.r_n;
        assert!((p.remainder - v.norm()).abs() <= 1e-10 * (1.0 + p.remainder));
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let c = CoeffSeq::geometric(0.5, &LinOp::identity(3), 2).unwrap();
    let model = InnovationModel::bounded(2, 1.0).unwrap();
    assert!(partial_sum(&c, &model, 4, 1).is_err());
    assert!(PathSampler::new(&c, &model).is_err());
}

#[test]
fn sup_bound_holds_for_sphere_directions() {
    let c = CoeffSeq::geometric(0.6, &rotation(1.0), 20).unwrap();
    let model = InnovationModel::bounded(2, 2.0).unwrap().with_direction(Direction::Sphere).unwrap();
    for n in [3usize, 30] {
        let rep = sup_norm_bound_check(&c, &model, n, 2000, 7).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.max_observed > 0.0);
    }
}

#[test]
fn exponential_radius_luxemburg_norms_match_samples() {
    // ψ₁ norm of an Exp(θ) radius is 2θ; the L¹ norm (Power(1)) is θ.
    let model = InnovationModel::sub_exponential(3, 1.5).unwrap();
    let norms = norms_of(&sample_innovations(&model, 1..=200_000, 3));
    let law = model.radial_law().unwrap();
    assert_eq!(law, RadialLaw::Exponential { scale: 1.5 });
    for (psi, exact) in [(YoungFunction::Psi1, 3.0), (YoungFunction::Power(1.0), 1.5)] {
        let closed = luxemburg_norm(NormSource::Law(law), psi, DEFAULT_LUXEMBURG_TOL).unwrap();
        assert!((closed - exact).abs() <= 1e-6 * exact);
        let empirical = luxemburg_norm(NormSource::Samples(&norms), psi, DEFAULT_LUXEMBURG_TOL).unwrap();
        assert!((empirical - exact).abs() <= 0.03 * exact, "{psi:?}: {empirical}");
    }
}
