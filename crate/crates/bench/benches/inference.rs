use std::hint::black_box;

use arhmm::em::{e_step, m_step};
use arhmm::simulate::validation_model;
use arhmm::*;
use criterion::{criterion_group, criterion_main, Criterion};

fn data(n: usize, length: usize) -> (ModelParams, Vec<ObservationSequence>) {
    let cfg = SimConfig {
        seed: 1,
        n_sequences: n,
        length,
        ..SimConfig::default()
    };
    let model = validation_model(&cfg).unwrap();
    (model, Preset::Validation.generate(&cfg).unwrap().sequences)
}

fn inference(c: &mut Criterion) {
    let (model, seqs) = data(1, 1000);
    c.bench_function("forward_backward T=1000", |b| b.iter(|| forward_backward(&model, black_box(&seqs[0])).unwrap()));
    c.bench_function("viterbi T=1000", |b| b.iter(|| viterbi(&model, black_box(&seqs[0])).unwrap()));
}

fn learning(c: &mut Criterion) {
    let (model, seqs) = data(50, 100);
    let posts = e_step(&model, &seqs).unwrap();
    let fit = FitOptions::default();
    c.bench_function("m_step poly3 50x100", |b| b.iter(|| m_step(&model, black_box(&seqs), &posts, &fit).unwrap()));
    c.bench_function("em iteration poly3 50x100", |b| {
        b.iter(|| {
            let posts = e_step(&model, black_box(&seqs)).unwrap();
            m_step(&model, &seqs, &posts, &fit).unwrap()
        })
    });

    let cfg = SimConfig {
        seed: 2,
        n_sequences: 20,
        ..SimConfig::default()
    };
    let quat = simulate::pose_gripper_model(&cfg).unwrap();
    let qseqs = Preset::Quat.generate(&cfg).unwrap().sequences;
    let qposts = e_step(&quat, &qseqs).unwrap();
    c.bench_function("m_step pose+gripper 20x100", |b| b.iter(|| m_step(&quat, black_box(&qseqs), &qposts, &fit).unwrap()));
}

criterion_group!(benches, inference, learning);
criterion_main!(benches);
