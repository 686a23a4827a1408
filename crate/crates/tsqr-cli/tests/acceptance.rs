//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (visible with `--nocapture`) and enforcing its runtime budget.

use std::time::Instant;
use tsqr::engine::{reduce_threaded, QrUppersOp};
use tsqr::tree::{binary_tree, comm_stats, flat_tree, random_tree};
use tsqr::{
    backward_error, flops, form_q, gen_matrix, householder_qr, kernel_flops_model, orthogonality,
    qr_uppers, tsqr_factor, DenseMatrix, GenMode, QrVariant, TsqrOptions, UpperTriangular,
};

const EPS: f64 = f64::EPSILON;

/// Random triangle drawn as the R factor of a Gaussian 2n-by-n panel.
fn random_triangle(n: usize, seed: u64) -> UpperTriangular {
    let a = gen_matrix(2 * n, n, seed, GenMode::StandardNormal).unwrap();
    householder_qr(&a, QrVariant::Unblocked).unwrap().r
}

/// Independent route: dense Householder QR of the explicitly stacked pair.
fn dense_stack_r(r1: &UpperTriangular, r2: &UpperTriangular) -> UpperTriangular {
    let n = r1.n();
    let mut stack = DenseMatrix::zeros(2 * n, n);
    stack.set_row_block(0, &r1.to_dense());
    stack.set_row_block(n, &r2.to_dense());
    householder_qr(&stack, QrVariant::Unblocked).unwrap().r
}

fn normalized_delta(a: &UpperTriangular, b: &UpperTriangular) -> f64 {
    let (x, _) = a.sign_normalize();
    let (y, _) = b.sign_normalize();
    x.max_abs_diff(&y)
}

#[test]
fn criterion_1_kernel_oracle_equivalence() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for trial in 0..200u64 {
        let n = 1 + (trial as usize % 48);
        let r1 = random_triangle(n, 2 * trial + 1);
        let r2 = random_triangle(n, 2 * trial + 2);
        let (r, _) = qr_uppers(&r1, &r2).unwrap();
        let oracle = dense_stack_r(&r1, &r2);
        let stack_norm = r1.frobenius_norm().hypot(r2.frobenius_norm());
        let tol = 100.0 * n as f64 * EPS * stack_norm;
        let delta = normalized_delta(&r, &oracle);
        assert!(delta <= tol, "trial {trial} (n={n}): {delta:e} > {tol:e}");
        worst = worst.max(delta / tol);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "criterion 1 took {elapsed:.1}s");
    println!(
        "acceptance criterion 1 (kernel-oracle equivalence, 200 pairs): PASS \
         (worst delta/tol = {worst:.3}, {elapsed:.2}s)"
    );
}

#[test]
fn criterion_2_essential_associativity_and_commutativity() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for trial in 0..200u64 {
        let n = 1 + (trial as usize % 32);
        let r1 = random_triangle(n, 3 * trial + 11);
        let r2 = random_triangle(n, 3 * trial + 12);
        let r3 = random_triangle(n, 3 * trial + 13);
        let max_norm = r1
            .frobenius_norm()
            .max(r2.frobenius_norm())
            .max(r3.frobenius_norm());
        let tol = 200.0 * n as f64 * EPS * max_norm;

        let (r12, _) = qr_uppers(&r1, &r2).unwrap();
        let (left, _) = qr_uppers(&r12, &r3).unwrap();
        let (r23, _) = qr_uppers(&r2, &r3).unwrap();
        let (right, _) = qr_uppers(&r1, &r23).unwrap();
        let assoc = normalized_delta(&left, &right);
        assert!(
            assoc <= tol,
            "trial {trial} (n={n}): associativity {assoc:e} > {tol:e}"
        );

        let (ab, _) = qr_uppers(&r1, &r2).unwrap();
        let (ba, _) = qr_uppers(&r2, &r1).unwrap();
        let comm = normalized_delta(&ab, &ba);
        assert!(
            comm <= tol,
            "trial {trial} (n={n}): commutativity {comm:e} > {tol:e}"
        );
        worst = worst.max(assoc / tol).max(comm / tol);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "criterion 2 took {elapsed:.1}s");
    println!(
        "acceptance criterion 2 (essential associativity/commutativity, 200 trials): PASS \
         (worst delta/tol = {worst:.3}, {elapsed:.2}s)"
    );
}

#[test]
fn criterion_3_tree_invariance() {
    let start = Instant::now();
    let (m, n) = (4096usize, 32usize);
    let a = gen_matrix(m, n, 1, GenMode::StandardNormal).unwrap();
    let tol = 200.0 * n as f64 * EPS * a.frobenius_norm();
    let opts = TsqrOptions::default();
    for p in [2usize, 4, 8, 16] {
        let mut trees = vec![binary_tree(p).unwrap(), flat_tree(p).unwrap()];
        for seed in 0..5u64 {
            trees.push(random_tree(p, seed).unwrap());
        }
        let results: Vec<UpperTriangular> = trees
            .iter()
            .map(|t| tsqr_factor(&a, t, &opts).unwrap().r)
            .collect();
        for i in 0..results.len() {
            for j in i + 1..results.len() {
                let delta = normalized_delta(&results[i], &results[j]);
                assert!(delta <= tol, "p={p}, trees {i} vs {j}: {delta:e} > {tol:e}");
            }
        }
        // The same schedule twice is not merely close; it is the same bits.
        let again = tsqr_factor(&a, &trees[0], &opts).unwrap().r;
        assert_eq!(again, results[0], "p={p}: binary tree rerun not bitwise");
        assert_eq!(again.max_abs_diff(&results[0]), 0.0);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 3 took {elapsed:.1}s");
    println!(
        "acceptance criterion 3 (tree invariance, m=4096 n=32 p in {{2,4,8,16}}): PASS ({elapsed:.2}s)"
    );
}

#[test]
fn criterion_4_end_to_end_stability() {
    let start = Instant::now();
    let mut combos = 0;
    for &m in &[64usize, 256, 1000] {
        for &n in &[1usize, 4, 13, 32] {
            for &p in &[1usize, 2, 3, 4, 8] {
                if m < p * n {
                    continue;
                }
                combos += 1;
                let seed = (m * 1000 + n * 10 + p) as u64;
                let a = gen_matrix(m, n, seed, GenMode::StandardNormal).unwrap();
                let tree = binary_tree(p).unwrap();
                let fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
                let q = form_q(&fact).unwrap();
                let tol = 100.0 * n as f64 * EPS;
                let be = backward_error(&a, &q, &fact.r).unwrap();
                let orth = orthogonality(&q);
                assert!(
                    be <= tol,
                    "m={m} n={n} p={p}: backward error {be:e} > {tol:e}"
                );
                assert!(
                    orth <= tol,
                    "m={m} n={n} p={p}: orthogonality {orth:e} > {tol:e}"
                );
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 4 took {elapsed:.1}s");
    println!(
        "acceptance criterion 4 (end-to-end stability, {combos} grid cells): PASS ({elapsed:.2}s)"
    );
}

#[test]
fn criterion_5_flop_model() {
    let start = Instant::now();
    let n = 256usize;
    let r1 = random_triangle(n, 91);
    let r2 = random_triangle(n, 92);
    let (_, kernel_flops) = flops::counted(|| qr_uppers(&r1, &r2).unwrap());
    let ratio = kernel_flops as f64 / kernel_flops_model(n) as f64;
    assert!(
        (0.95..=1.15).contains(&ratio),
        "kernel counted/model = {ratio} at n = {n}"
    );

    let (_, dense_flops) = flops::counted(|| dense_stack_r(&r1, &r2));
    let advantage = dense_flops as f64 / kernel_flops as f64;
    assert!(
        advantage >= 4.0,
        "dense/kernel counted ratio = {advantage} at n = {n}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "criterion 5 took {elapsed:.1}s");
    println!(
        "acceptance criterion 5 (flop model at n=256): PASS \
         (counted/model = {ratio:.4}, dense/kernel = {advantage:.2}, {elapsed:.2}s)"
    );
}

#[test]
fn criterion_6_communication_counts() {
    let start = Instant::now();
    let n = 50usize;
    let payload = n * (n + 1) / 2;
    for p in 1..=1024usize {
        for tree in [binary_tree(p).unwrap(), flat_tree(p).unwrap()] {
            let stats = comm_stats(&tree, n, false);
            assert_eq!(stats.messages, p - 1, "p={p}");
            assert_eq!(stats.words, (p - 1) * payload, "p={p}");
        }
        let expect_rounds = (p as f64).log2().ceil() as usize;
        assert_eq!(binary_tree(p).unwrap().num_rounds(), expect_rounds, "p={p}");
    }
    // Arbitrary valid schedules obey the same message identity.
    for p in [1usize, 5, 33, 256, 1024] {
        for seed in 0..3u64 {
            let tree = random_tree(p, seed).unwrap();
            let stats = comm_stats(&tree, n, false);
            assert_eq!(stats.messages, p - 1);
            assert_eq!(stats.words, (p - 1) * payload);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!("acceptance criterion 6 (communication counts, p <= 1024): PASS ({elapsed:.2}s)");
}

#[test]
fn criterion_7_determinism_under_parallelism() {
    let start = Instant::now();
    let (m, n, p) = (2048usize, 16usize, 16usize);
    let a = gen_matrix(m, n, 4, GenMode::StandardNormal).unwrap();
    let tree = binary_tree(p).unwrap();

    let reference = tsqr_factor(
        &a,
        &tree,
        &TsqrOptions {
            threads: 1,
            ..Default::default()
        },
    )
    .unwrap();
    for threads in [2usize, 8] {
        let fact = tsqr_factor(
            &a,
            &tree,
            &TsqrOptions {
                threads,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fact.r, reference.r, "R differs at {threads} threads");
        assert_eq!(
            fact.merge_factors, reference.merge_factors,
            "merge log differs at {threads} threads"
        );
        assert_eq!(
            fact, reference,
            "factorization differs at {threads} threads"
        );
    }

    // Same guarantee at the engine level, reducing the stored leaf factors.
    let locals: Vec<UpperTriangular> = reference
        .leaf_factors
        .iter()
        .map(|pf| pf.r.clone())
        .collect();
    let (r1, log1) = reduce_threaded(locals.clone(), &QrUppersOp, &tree, 1).unwrap();
    let (r8, log8) = reduce_threaded(locals, &QrUppersOp, &tree, 8).unwrap();
    assert_eq!(r1, r8);
    assert_eq!(log1, log8);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "criterion 7 took {elapsed:.1}s");
    println!(
        "acceptance criterion 7 (determinism under parallelism, p=16, threads 1/2/8): PASS ({elapsed:.2}s)"
    );
}

#[test]
fn criterion_8_strong_scaling_harness() {
    let start = Instant::now();
    let dir = std::env::temp_dir().join(format!("tsqr-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv_path = dir.join("scaling.csv");

    let out = std::process::Command::new(env!("CARGO_BIN_EXE_tsqr"))
        .args([
            "bench",
            "--m",
            "100000",
            "--n",
            "50",
            "--p-list",
            "1,2,4,8,16,32",
            "--tree-list",
            "binary,flat",
            "--csv",
            csv_path.to_str().unwrap(),
        ])
        .output()
        .expect("spawn tsqr bench");
    assert_eq!(
        out.status.code(),
        Some(0),
        "bench failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "bench took {elapsed:.1}s");

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "m,n,p,tree,rep,wall_time_s,flops_counted,flops_model,messages,rounds,words,backward_error,r_vs_reference"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6 * 2 * 3, "6 p-values x 2 trees x 3 reps");
    let payload = 50 * 51 / 2;
    for row in &rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 13, "row: {row}");
        let (m, n): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let p: usize = f[2].parse().unwrap();
        let tree = f[3];
        let messages: usize = f[8].parse().unwrap();
        let rounds: usize = f[9].parse().unwrap();
        let words: usize = f[10].parse().unwrap();
        assert_eq!((m, n), (100000, 50));
        assert_eq!(messages, p - 1, "row: {row}");
        assert_eq!(words, (p - 1) * payload, "row: {row}");
        match tree {
            "binary" => assert_eq!(rounds, (p as f64).log2().ceil() as usize, "row: {row}"),
            "flat" => assert_eq!(rounds, p - 1, "row: {row}"),
            other => panic!("unexpected tree {other}"),
        }
        let flops_model: u64 = f[7].parse().unwrap();
        assert_eq!(flops_model, 2 * 100000 * 50 * 50);
        let flops_counted: u64 = f[6].parse().unwrap();
        assert!(flops_counted > 0);
        // Every numeric column parses as a finite number.
        for idx in [5usize, 11, 12] {
            let v: f64 = f[idx].parse().unwrap();
            assert!(v.is_finite(), "column {idx} in row: {row}");
        }
    }
    println!("acceptance criterion 8 (strong-scaling harness, 36 CSV rows): PASS ({elapsed:.2}s)");
}
