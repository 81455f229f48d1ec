use arhmm::*;
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(d, d) * 0.2
}

/// `log N(x; mean, Σ)` through an explicit inverse and determinant.
fn direct_log_normal(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let e = x - mean;
    let inv = cov.clone().try_inverse().unwrap();
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + (e.transpose() * inv * &e)[(0, 0)])
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[test]
fn linear_basis_equals_affine_switching_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let d = 2;
        let s = 3;
        let a: Vec<DMatrix<f64>> = (0..s).map(|_| DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))).collect();
        let b: Vec<DVector<f64>> = (0..s).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect();
        let cov: Vec<DMatrix<f64>> = (0..s).map(|_| random_spd(&mut rng, d)).collect();
        let pi: [f64; 3] = [0.2, 0.5, 0.3];
        let t: DMatrix<f64> = DMatrix::from_row_slice(3, 3, &[0.8, 0.1, 0.1, 0.2, 0.7, 0.1, 0.25, 0.25, 0.5]);
        let rows: Vec<Vec<f64>> = (0..21).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();

        // Direct forward recursion in log space.
        let emit = |k: usize, z: usize| {
            let prev = DVector::from_column_slice(&rows[k]);
            let next = DVector::from_column_slice(&rows[k + 1]);
            direct_log_normal(&next, &(&a[z] * prev + &b[z]), &cov[z])
        };
        let mut alpha: Vec<f64> = (0..s).map(|z| pi[z].ln() + emit(0, z)).collect();
        for k in 1..20 {
            alpha = (0..s)
                .map(|j| {
                    let terms: Vec<f64> = (0..s).map(|i| alpha[i] + t[(i, j)].ln()).collect();
                    log_sum_exp(&terms) + emit(k, j)
                })
                .collect();
        }
        let direct = log_sum_exp(&alpha);

        let emissions = (0..s)
            .map(|z| {
                CartesianDynamics::affine(&a[z], b[z].as_slice(), GaussianNoise::new(cov[z].clone()).unwrap())
                    .unwrap()
                    .into()
            })
            .collect();
        let layout = ObservationLayout::cartesian("y", d);
        let model = ModelParams::new(
            InitialDistribution::new(pi.to_vec()).unwrap(),
            TransitionMatrix::new(t.clone()).unwrap(),
            emissions,
            layout.clone(),
        )
        .unwrap();
        let seq = ObservationSequence::new(layout, rows.clone()).unwrap();
        let ll = forward_backward(&model, &seq).unwrap().loglik;
        assert!((ll - direct).abs() < 1e-12 * direct.abs().max(1.0), "{ll} vs {direct}");
        for k in 0..20 {
            for z in 0..s {
                let v = model.emissions()[z].log_emission(&rows[k], &rows[k + 1]).unwrap();
                assert!((v - emit(k, z)).abs() < 1e-12 * v.abs().max(1.0));
            }
        }
    }
}

#[test]
fn composite_is_sum_of_blocks() {
    let layout = ObservationLayout::pose_gripper(2);
    let cfg = SimConfig::default();
    let model = simulate::pose_gripper_model(&cfg).unwrap();
    let data = Preset::Quat.generate(&SimConfig {
        n_sequences: 1,
        length: 30,
        ..cfg
    })
    .unwrap();
    let rows = data.sequences[0].rows();
    for z in 0..2 {
        let EmissionDynamics::Composite(c) = &model.emissions()[z] else { panic!() };
        for k in 0..30 {
            let (prev, next) = (&rows[k], &rows[k + 1]);
            let mut total = 0.0;
            for (i, part) in c.parts().iter().enumerate() {
                let r = layout.range(i);
                total += match part {
                    BlockDynamics::Cartesian(d) => {
                        let w = d.weights();
                        let phi = DVector::from_vec(d.basis().evaluate(&prev[r.clone()]).unwrap());
                        let mean = w * phi;
                        direct_log_normal(&DVector::from_column_slice(&next[r]), &mean, d.noise().covariance())
                    }
                    BlockDynamics::Quaternion(q) => {
                        let p = UnitQuaternion::from_slice(&prev[r.clone()]).unwrap();
                        let mu = q.predict(&p).components();
                        let x = Vector4::from_column_slice(&next[r]);
                        let cov: Matrix4<f64> = q.noise().covariance().fixed_view::<4, 4>(0, 0).into();
                        let e = x - Vector4::from(mu);
                        let quad = (e.transpose() * cov.try_inverse().unwrap() * e)[(0, 0)];
                        -0.5 * (4.0 * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + quad)
                    }
                };
            }
            let v = model.emissions()[z].log_emission(prev, next).unwrap();
            assert!((v - total).abs() < 1e-10, "{v} vs {total}");
        }
    }
}

#[test]
fn model_json_round_trip_is_byte_identical() {
    let cfg = SimConfig::default();
    for model in [simulate::validation_model(&cfg).unwrap(), simulate::pose_gripper_model(&cfg).unwrap()] {
        let data = Preset::Quat.generate(&SimConfig {
            n_sequences: 2,
            length: 10,
            ..cfg
        });
        let st = if model.layout().width() == 16 {
            Some(Standardization::fit(&data.unwrap().sequences).unwrap())
        } else {
            None
        };
        let model = model.with_standardization(st).unwrap();
        let text = model.to_json().unwrap();
        let back = ModelParams::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json().unwrap(), text);
    }
}

#[test]
fn malformed_model_json_is_rejected() {
    let cfg = SimConfig::default();
    let text = simulate::validation_model(&cfg).unwrap().to_json().unwrap();
    assert!(ModelParams::from_json(&text.replace("\"S\": 2", "\"S\": 3")).is_err());
    assert!(ModelParams::from_json("{}").is_err());
}
