use unlearn_lab::dataset::{build_world, make_splits, read_splits, write_splits, Prompt, SplitConfig, WorldConfig, WorldSpec};
use unlearn_lab::seed::rng;

fn world() -> WorldSpec {
    build_world(11, &WorldConfig::default()).unwrap()
}

fn stationary(matrix: &[f64], v: usize) -> Vec<f64> {
    let mut pi = vec![1.0 / v as f64; v];
    for _ in 0..2000 {
        let mut next = vec![0.0; v];
        for (a, &pa) in pi.iter().enumerate() {
            for (b, n) in next.iter_mut().enumerate() {
                *n += pa * matrix[a * v + b];
            }
        }
        pi = next;
    }
    pi
}

#[test]
fn empirical_bigrams_match_transition_rows() {
    let w = world();
    let v = w.vocab();
    let chain = w.chain(Prompt::new(3, 2));
    let mut r = rng(1);
    let mut counts = vec![0u64; v * v];
    for _ in 0..10_000 {
        let s = chain.sample(w.seq_len(), &mut r);
        for pair in s.windows(2) {
            counts[pair[0] * v + pair[1]] += 1;
        }
    }
    let mut checked = 0;
    for a in 0..v {
        let row = &counts[a * v..(a + 1) * v];
        let total: u64 = row.iter().sum();
        if total < 2000 {
            continue;
        }
        checked += 1;
        for (b, &c) in row.iter().enumerate() {
            let diff = (c as f64 / total as f64 - chain.row(a)[b]).abs();
            assert!(diff < 0.03, "row {a} col {b}: off by {diff}");
        }
    }
    assert!(checked >= 4, "only {checked} well-visited rows");
}

#[test]
fn late_positions_follow_the_stationary_distribution() {
    let w = world();
    let v = w.vocab();
    let p = Prompt::new(5, 1);
    let pi = stationary(w.matrix(p), v);
    let mut r = rng(2);
    let mut hist = vec![0.0; v];
    let mut n = 0.0;
    for _ in 0..10_000 {
        let s = w.chain(p).sample(w.seq_len(), &mut r);
        for &t in &s[w.seq_len() / 2..] {
            hist[t] += 1.0;
            n += 1.0;
        }
    }
    let tv = 0.5 * hist.iter().zip(&pi).map(|(h, q)| (h / n - q).abs()).sum::<f64>();
    assert!(tv < 0.03, "TV to stationary {tv}");
}

#[test]
fn remain_divergence_grows_with_the_shift() {
    let w = world();
    let divergence = |shift: f64| {
        let cfg = SplitConfig {
            n_train: 256,
            n_remain: 64,
            n_forget: 16,
            remain_shift: shift,
            ..SplitConfig::default()
        };
        make_splits(&w, &cfg, 4).unwrap().remain_divergence()
    };
    let d: Vec<f64> = [0.0, 0.3, 0.6].into_iter().map(divergence).collect();
    assert!(d[0] < 1e-12, "unshifted divergence {}", d[0]);
    assert!(d[0] < d[1] && d[1] < d[2], "{d:?}");
}

#[test]
fn dataset_file_round_trip_is_byte_identical() {
    let cfg = SplitConfig {
        n_train: 128,
        n_remain: 32,
        n_forget: 8,
        ..SplitConfig::default()
    };
    let splits = make_splits(&world(), &cfg, 9).unwrap();
    let mut first = Vec::new();
    write_splits(&splits, &mut first).unwrap();
    let loaded = read_splits(first.as_slice()).unwrap();
    assert_eq!(loaded, splits);
    let mut second = Vec::new();
    write_splits(&loaded, &mut second).unwrap();
    assert_eq!(first, second);
}
