//! Parallel vs sequential throughput on the hot paths: n-gram counting,
//! one soft-training pass, and batch segmentation. The "seq" variants run
//! inside a one-thread pool, the "par" variants on the default pool, so
//! the numbers show scheduling overhead against multicore speedup.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use subseg::apply::segment_text;
use subseg::corpus::{count_char_ngrams, CharMode, Corpus};
use subseg::dictionary::learn_bpe;
use subseg::estimator::{train_ml, TrainOptions};
use subseg::graphs::ModelParams;
use subseg::{build_vocabulary, learn_extended_bpe};

/// Deterministic synthetic corpus: multi-syllable words over a small
/// alphabet, long enough to give the lattices some width.
fn synthetic_corpus(n_lines: usize) -> Corpus {
    let syllables = [
        "ka", "ta", "ma", "ri", "su", "ne", "lo", "va", "du", "gi", "po", "che", "ba", "ku",
    ];
    let mut text = String::new();
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 33) as usize
    };
    for _ in 0..n_lines {
        let words = 6 + next() % 5;
        for w in 0..words {
            if w > 0 {
                text.push(' ');
            }
            let pieces = 2 + next() % 4;
            for _ in 0..pieces {
                text.push_str(syllables[next() % syllables.len()]);
            }
        }
        text.push('\n');
    }
    Corpus::from_text(&text, CharMode::Codepoint)
}

fn with_threads<T>(threads: usize, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("pool")
        .install(f)
}

fn bench_ngram_counting(c: &mut Criterion) {
    let corpus = synthetic_corpus(4000);
    let tokens = corpus.n_tokens() as u64;
    let mut group = c.benchmark_group("ngram_counting");
    group.throughput(Throughput::Elements(tokens));
    for (name, threads) in [("seq", 1), ("par", 0)] {
        group.bench_with_input(BenchmarkId::new(name, tokens), &corpus, |b, corpus| {
            if threads == 1 {
                b.iter(|| with_threads(1, || count_char_ngrams(corpus, 7)));
            } else {
                b.iter(|| count_char_ngrams(corpus, 7));
            }
        });
    }
    group.finish();
}

fn bench_training_pass(c: &mut Criterion) {
    let corpus = synthetic_corpus(1500);
    let vocab = build_vocabulary(&corpus);
    let psi = count_char_ngrams(&corpus, 7);
    let dict = learn_bpe(&psi, 400.max(psi.alphabet_size())).unwrap();
    let opts = TrainOptions {
        iterations: 1,
        ..TrainOptions::default()
    };
    let mut group = c.benchmark_group("soft_training_pass");
    group.throughput(Throughput::Elements(vocab.len() as u64));
    group.sample_size(10);
    for (name, threads) in [("seq", 1usize), ("par", 0)] {
        group.bench_function(BenchmarkId::new(name, vocab.len()), |b| {
            if threads == 1 {
                b.iter(|| with_threads(1, || train_ml(&vocab, &dict, &opts).unwrap()));
            } else {
                b.iter(|| train_ml(&vocab, &dict, &opts).unwrap());
            }
        });
    }
    group.finish();
}

fn bench_segmentation(c: &mut Criterion) {
    let corpus = synthetic_corpus(1500);
    let psi = count_char_ngrams(&corpus, 7);
    let dict = learn_extended_bpe(&psi, &[psi.alphabet_size(), 150, 150, 80, 20, 0, 0]).unwrap();
    let theta = ModelParams::uniform_init(dict);
    let tokens = corpus.n_tokens() as u64;
    let mut group = c.benchmark_group("segment_text");
    group.throughput(Throughput::Elements(tokens));
    for (name, threads) in [("seq", 1usize), ("par", 0)] {
        group.bench_with_input(BenchmarkId::new(name, tokens), &corpus, |b, corpus| {
            if threads == 1 {
                b.iter(|| with_threads(1, || segment_text(corpus, &theta, true).unwrap()));
            } else {
                b.iter(|| segment_text(corpus, &theta, true).unwrap());
            }
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_ngram_counting,
    bench_training_pass,
    bench_segmentation
);
criterion_main!(benches);
