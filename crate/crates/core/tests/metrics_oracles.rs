use pfg_core::metrics::{energy_distance, mmd_rbf, MmdBandwidth, MmdVariant};
use pfg_core::{ExecPolicy, ParticleSet, RngHandle};

fn points(v: &[f64]) -> ParticleSet {
    ParticleSet::new(v.len(), 1, v.to_vec()).unwrap()
}

#[test]
fn energy_distance_of_point_masses() {
    for a in [0.5, 1.0, 3.0] {
        let e = energy_distance(&points(&[0.0, 0.0]), &points(&[a, a]), ExecPolicy::Sequential).unwrap();
        assert!((e - 2.0 * a).abs() < 1e-14);
    }
}

#[test]
fn biased_mmd_of_point_masses() {
    let s2 = 0.7;
    for a in [0.1, 1.0, 2.5] {
        let m = mmd_rbf(&points(&[0.0, 0.0]), &points(&[a, a]), MmdBandwidth::Fixed(s2), MmdVariant::Biased, ExecPolicy::Sequential)
            .unwrap();
        let want = 2.0 - 2.0 * (-a * a / (2.0 * s2)).exp();
        assert!((m - want).abs() < 1e-14);
    }
}

#[test]
fn unbiased_mmd_separates_shifted_samples() {
    let mut rng = RngHandle::new(11);
    let mut draw = |shift: f64| {
        let v: Vec<f64> = (0..300).map(|_| rng.normal() + shift).collect();
        points(&v)
    };
    let (a, b, c) = (draw(0.0), draw(0.0), draw(1.0));
    let same = mmd_rbf(&a, &b, MmdBandwidth::PooledMedian, MmdVariant::Unbiased, ExecPolicy::default()).unwrap();
    let shifted = mmd_rbf(&a, &c, MmdBandwidth::PooledMedian, MmdVariant::Unbiased, ExecPolicy::default()).unwrap();
    assert!(same.abs() < 0.01, "{same}");
    assert!(shifted > 10.0 * same.abs().max(1e-3), "{shifted} vs {same}");
}
