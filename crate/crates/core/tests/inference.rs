use arhmm::inference::{forward_backward_table, viterbi_table};
use arhmm::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Scalar linear-Gaussian modes; returns the model and one sequence.
fn random_case(rng: &mut ChaCha8Rng, s: usize, t: usize) -> (ModelParams, ObservationSequence) {
    let init = InitialDistribution::new(random_simplex(rng, s)).unwrap();
    let rows: Vec<Vec<f64>> = (0..s).map(|_| random_simplex(rng, s)).collect();
    let trans = TransitionMatrix::from_rows(&rows).unwrap();
    let emissions = (0..s)
        .map(|_| {
            let a = DMatrix::from_element(1, 1, rng.random_range(-1.2..1.2));
            let b = [rng.random_range(-1.0..1.0)];
            let noise = GaussianNoise::isotropic(1, rng.random_range(0.05..1.0));
            CartesianDynamics::affine(&a, &b, noise).unwrap().into()
        })
        .collect();
    let layout = ObservationLayout::cartesian("y", 1);
    let model = ModelParams::new(init, trans, emissions, layout.clone()).unwrap();
    let obs = (0..=t).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
    (model, ObservationSequence::new(layout, obs).unwrap())
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

/// Direct evaluation of one path's log joint.
fn path_log_joint(model: &ModelParams, seq: &ObservationSequence, path: &[usize]) -> f64 {
    let rows = seq.rows();
    let mut lp = model.init().weights()[path[0]].ln();
    for (t, &z) in path.iter().enumerate() {
        if t > 0 {
            lp += model.trans().get(path[t - 1], z).ln();
        }
        let EmissionDynamics::Cartesian(c) = &model.emissions()[z] else { unreachable!() };
        let w = c.weights();
        let mean = w[(0, 0)] + w[(0, 1)] * rows[t][0];
        lp += log_normal(rows[t + 1][0], mean, c.noise().covariance()[(0, 0)]);
    }
    lp
}

fn all_paths(s: usize, t: usize) -> Vec<Vec<usize>> {
    (0..s.pow(t as u32))
        .map(|mut code| {
            (0..t)
                .map(|_| {
                    let z = code % s;
                    code /= s;
                    z
                })
                .collect()
        })
        .collect()
}

#[test]
fn forward_backward_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let s = 1 + case % 3;
        let t = 1 + rng.random_range(0..8);
        let (model, seq) = random_case(&mut rng, s, t);
        let paths = all_paths(s, t);
        let joints: Vec<f64> = paths.iter().map(|p| path_log_joint(&model, &seq, p)).collect();
        let max = joints.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let evidence: f64 = joints.iter().map(|j| (j - max).exp()).sum();
        let loglik = max + evidence.ln();
        let mut gamma = vec![vec![0.0; s]; t];
        let mut xi = vec![DMatrix::zeros(s, s); t.saturating_sub(1)];
        for (p, j) in paths.iter().zip(&joints) {
            let w = (j - loglik).exp();
            for k in 0..t {
                gamma[k][p[k]] += w;
                if k + 1 < t {
                    xi[k][(p[k], p[k + 1])] += w;
                }
            }
        }
        let post = forward_backward(&model, &seq).unwrap();
        assert!((post.loglik - loglik).abs() < 1e-10, "case {case}");
        for k in 0..t {
            for i in 0..s {
                assert!((post.gamma[k][i] - gamma[k][i]).abs() < 1e-10);
            }
        }
        for (a, b) in post.xi.iter().zip(&xi) {
            assert!((a - b).amax() < 1e-10);
        }
        let seg = viterbi(&model, &seq).unwrap();
        assert!((seg.log_joint - max).abs() < 1e-12 * max.abs().max(1.0), "case {case}");
        assert!((path_log_joint(&model, &seq, &seg.path) - max).abs() < 1e-12 * max.abs().max(1.0));
        assert!(seg.log_joint <= post.loglik + 1e-10);
    }
}

#[test]
fn posterior_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (model, seq) = random_case(&mut rng, 3, 30);
        let post = forward_backward(&model, &seq).unwrap();
        for g in &post.gamma {
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for (k, x) in post.xi.iter().enumerate() {
            for i in 0..3 {
                assert!((x.row(i).sum() - post.gamma[k][i]).abs() < 1e-12);
                assert!((x.column(i).sum() - post.gamma[k + 1][i]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn relabeling_permutes_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let (model, seq) = random_case(&mut rng, 3, 25);
        let perm = [2, 0, 1];
        let moved = model.permuted(&perm).unwrap();
        let a = forward_backward(&model, &seq).unwrap();
        let b = forward_backward(&moved, &seq).unwrap();
        assert!((a.loglik - b.loglik).abs() < 1e-10);
        for (ga, gb) in a.gamma.iter().zip(&b.gamma) {
            for i in 0..3 {
                assert!((gb[i] - ga[perm[i]]).abs() < 1e-10);
            }
        }
        let va = viterbi(&model, &seq).unwrap();
        let vb = viterbi(&moved, &seq).unwrap();
        assert!((va.log_joint - vb.log_joint).abs() < 1e-10);
        for (za, zb) in va.path.iter().zip(&vb.path) {
            assert_eq!(perm[*zb], *za);
        }
    }
}

#[test]
fn viterbi_finds_switches_on_noise_free_data() {
    // y' = 0.9 y + 1 versus y' = 0.9 y − 1, switching at known steps.
    let noise = GaussianNoise::isotropic(1, 1e-4);
    let a = DMatrix::from_element(1, 1, 0.9);
    let up = CartesianDynamics::affine(&a, &[1.0], noise.clone()).unwrap();
    let down = CartesianDynamics::affine(&a, &[-1.0], noise).unwrap();
    let truth: Vec<usize> = (0..60).map(|t| (t / 15) % 2).collect();
    let mut rows = vec![vec![0.0]];
    for &z in &truth {
        let prev = rows.last().unwrap()[0];
        rows.push(vec![0.9 * prev + if z == 0 { 1.0 } else { -1.0 }]);
    }
    let layout = ObservationLayout::cartesian("y", 1);
    let model = ModelParams::new(
        InitialDistribution::uniform(2),
        TransitionMatrix::sticky(2, 0.95).unwrap(),
        vec![up.into(), down.into()],
        layout.clone(),
    )
    .unwrap();
    let seq = ObservationSequence::new(layout, rows).unwrap();
    let path = viterbi(&model, &seq).unwrap().path;
    let switches = |p: &[usize]| (1..p.len()).filter(|&t| p[t] != p[t - 1]).collect::<Vec<_>>();
    let (found, expected) = (switches(&path), switches(&truth));
    assert_eq!(found.len(), expected.len());
    for (f, e) in found.iter().zip(&expected) {
        assert!(f.abs_diff(*e) <= 2);
    }
}

#[test]
fn table_entry_points_check_shapes() {
    let trans = DMatrix::from_element(2, 2, 0.5);
    assert!(forward_backward_table(&[0.5, 0.5], &trans, &[vec![0.0]]).is_err());
    assert!(viterbi_table(&[0.5, 0.5], &trans, &[]).is_err());
}

#[test]
fn single_mode_path_is_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (model, seq) = random_case(&mut rng, 1, 8);
    assert_eq!(viterbi(&model, &seq).unwrap().path, vec![0; 8]);
}
