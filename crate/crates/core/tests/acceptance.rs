//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own line; exits non-zero if a required criterion fails.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use covnet::data::{gen_blobs, gen_hierarchical, split, standardize, BlobSpec, SplitSpec};
use covnet::eval::{
    class_correlation_matrix, embed_dataset, knn_accuracy, topk_search, CorrelationMode, EmbeddingTable, Query,
};
use covnet::mapping::{iim_map, im_map, isim_map, LabeledDataset};
use covnet::model::{
    cosine_similarity, covariance_scalar, covariance_vector, Batch, EmbeddingNetwork, Model, ModelVariant,
    NetworkConfig, SiameseMode, VariantName,
};
use covnet::nn::{Layer, LayerSpec, Matrix, Mode};
use covnet::rng::{prng, Prng};
use covnet::training::{train, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut Prng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

const H: f64 = 1e-5;

/// Worst relative error of one layer's gradients for the objective Σ c ⊙ layer(x).
fn layer_fd(spec: LayerSpec, rows: usize, cols: usize, rng: &mut Prng) -> f64 {
    let mut layer = Layer::new(spec, rng).unwrap();
    // move BN affine parameters off their defaults
    for p in layer.params_mut() {
        p.iter_mut().for_each(|v| *v += 0.3 * rng.sample::<f64, _>(StandardNormal));
    }
    let x = normal_matrix(rows, cols, rng);
    let out_cols = spec.output_width(cols).unwrap();
    let c = normal_matrix(rows, out_cols, rng);
    let seed: u64 = rng.random();
    let f = |l: &Layer, x: &Matrix| -> f64 {
        let (y, _) = l.forward_pure(x, Mode::Train, &mut prng(seed)).unwrap();
        y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = layer.forward_pure(&x, Mode::Train, &mut prng(seed)).unwrap();
    let (dx, dp) = layer.backward(&cache, &c).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..x.data().len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[i] += H;
        xm.data_mut()[i] -= H;
        worst = worst.max(rel_err(dx.data()[i], (f(&layer, &xp) - f(&layer, &xm)) / (2.0 * H)));
    }
    for (a, g) in dp.iter().enumerate() {
        for k in 0..g.len() {
            let (mut lp, mut lm) = (layer.clone(), layer.clone());
            lp.params_mut()[a][k] += H;
            lm.params_mut()[a][k] -= H;
            worst = worst.max(rel_err(g[k], (f(&lp, &x) - f(&lm, &x)) / (2.0 * H)));
        }
    }
    worst
}

fn pipeline_fd(name: VariantName, mode: SiameseMode, q: usize, rng: &mut Prng) -> f64 {
    let p = 5;
    let c = 3;
    let cfg = NetworkConfig {
        hidden: vec![6],
        embedding_dim: q,
        ..NetworkConfig::default()
    };
    let emb = EmbeddingNetwork::new(p, &cfg.layer_specs(p), rng).unwrap();
    let variant = ModelVariant::new(name, c, q, Some(0.7), mode).unwrap();
    let mut model = Model::new(variant, emb, rng).unwrap();
    // zero biases can leave an embedding at the origin, where L2Norm is singular
    for p in model.param_arrays_mut() {
        p.iter_mut().for_each(|v| *v += 0.2 * rng.sample::<f64, _>(StandardNormal));
    }
    let n = 4;
    let batch = match name {
        VariantName::Triplet => Batch::Triplets {
            anchor: normal_matrix(n, p, rng),
            positive: normal_matrix(n, p, rng),
            negative: normal_matrix(n, p, rng),
        },
        VariantName::CovNetV3 | VariantName::Siamese => Batch::Pairs {
            left: normal_matrix(n, p, rng),
            right: normal_matrix(n, p, rng),
            labels: vec![1, 0, 0, 1],
        },
        VariantName::CovNetV2 => Batch::Pairs {
            left: normal_matrix(n, p, rng),
            right: normal_matrix(n, p, rng),
            labels: vec![0, 3, 5, 4],
        },
        _ => Batch::Pairs {
            left: normal_matrix(n, p, rng),
            right: normal_matrix(n, p, rng),
            labels: vec![0, 1, 2, 1],
        },
    };
    let loss = |m: &Model, b: &Batch| m.clone().forward_backward(b, Mode::Train, &mut prng(0)).unwrap().loss;
    let out = model.clone().forward_backward(&batch, Mode::Train, &mut prng(0)).unwrap();
    let mut worst = 0.0_f64;
    let shapes = model.param_shapes();
    for (a, &len) in shapes.iter().enumerate() {
        for k in 0..len {
            let (mut mp, mut mm) = (model.clone(), model.clone());
            mp.param_arrays_mut()[a][k] += H;
            mm.param_arrays_mut()[a][k] -= H;
            worst = worst.max(rel_err(out.grads[a][k], (loss(&mp, &batch) - loss(&mm, &batch)) / (2.0 * H)));
        }
    }
    for (i, g) in out.input_grads.iter().enumerate() {
        for k in 0..g.data().len() {
            let (mut bp, mut bm) = (batch.clone(), batch.clone());
            bp.inputs_mut()[i].data_mut()[k] += H;
            bm.inputs_mut()[i].data_mut()[k] -= H;
            worst = worst.max(rel_err(g.data()[k], (loss(&model, &bp) - loss(&model, &bm)) / (2.0 * H)));
        }
    }
    worst
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = prng(2024);
    let mut worst = 0.0_f64;
    let mut checks = 0;
    for _ in 0..4 {
        let rows = rng.random_range(2..=4);
        let input = rng.random_range(1..=8);
        let output = rng.random_range(1..=8);
        let specs = [
            LayerSpec::Dense { input, output },
            LayerSpec::Relu,
            LayerSpec::Tanh,
            LayerSpec::BatchNorm { dim: input },
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::L2Norm,
        ];
        for spec in specs {
            worst = worst.max(layer_fd(spec, rows, input, &mut rng));
            checks += 1;
        }
    }
    for q in [4, 8] {
        for name in VariantName::ALL {
            worst = worst.max(pipeline_fd(name, SiameseMode::SigmoidHead, q, &mut rng));
            checks += 1;
        }
        worst = worst.max(pipeline_fd(VariantName::Siamese, SiameseMode::Contrastive, q, &mut rng));
        checks += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 10.0,
        format!("{checks} checks, max rel err {worst:.2e} (< 1e-4), {secs:.2}s (< 10s)"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = prng(7);
    let (mut e_sum, mut e_shift, mut e_cos) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let q = rng.random_range(2..=32);
        let z: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
        let row = |v: &[f64]| Matrix::from_vec(1, v.len(), v.to_vec()).unwrap();
        let v = covariance_vector(&row(&z), &row(&w)).unwrap();
        let sum: f64 = v.data().iter().sum();
        e_sum = e_sum.max((sum - (q as f64 - 1.0) * covariance_scalar(&z, &w).unwrap()).abs());

        let a = rng.random_range(-1000.0..=1000.0);
        let b = rng.random_range(-1000.0..=1000.0);
        let zs: Vec<f64> = z.iter().map(|x| x + a).collect();
        let ws: Vec<f64> = w.iter().map(|x| x + b).collect();
        let vs = covariance_vector(&row(&zs), &row(&ws)).unwrap();
        for (p, r) in v.data().iter().zip(vs.data()) {
            e_shift = e_shift.max((p - r).abs());
        }

        let unit = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let c: Vec<f64> = v.iter().map(|x| x - m).collect();
            let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.into_iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let (zu, wu) = (unit(&z), unit(&w));
        let s: f64 = covariance_vector(&row(&zu), &row(&wu)).unwrap().data().iter().sum();
        e_cos = e_cos.max((s - cosine_similarity(&zu, &wu)).abs());
    }

    let q = 16;
    let z: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
    let zm = Matrix::from_vec(1, q, z.clone()).unwrap();
    let pos: f64 = covariance_vector(&zm, &zm.map(|x| 2.5 * x + 1.0)).unwrap().data().iter().sum();
    let neg: f64 = covariance_vector(&zm, &zm.map(|x| -x)).unwrap().data().iter().sum();
    let draws = 4000;
    let sums: Vec<f64> = (0..draws)
        .map(|_| {
            let a = normal_matrix(1, q, &mut rng);
            let b = normal_matrix(1, q, &mut rng);
            covariance_vector(&a, &b).unwrap().data().iter().sum()
        })
        .collect();
    let mean = sums.iter().sum::<f64>() / draws as f64;
    let sd = (sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0)).sqrt();
    let z_score = mean / (sd / (draws as f64).sqrt());
    let trichotomy = pos > 0.0 && neg < 0.0 && z_score.abs() < 3.0;

    outcome(
        e_sum < 1e-10 && e_shift < 1e-10 && e_cos < 1e-12 && trichotomy,
        format!(
            "sum-vs-scalar {e_sum:.1e}, shift {e_shift:.1e}, cosine {e_cos:.1e}, sign +{pos:.2}/-{:.2}/indep z={z_score:.2}",
            -neg
        ),
    )
}

fn labelled(labels: Vec<usize>, classes: usize) -> LabeledDataset {
    let n = labels.len();
    LabeledDataset::new(Matrix::zeros(n, 1), labels, classes).unwrap()
}

fn criterion_3() -> Outcome {
    let mut rng = prng(3);
    let mut ok = true;
    let mut notes = Vec::new();
    for (classes, n) in [(4usize, 37usize), (10, 120), (2, 9)] {
        let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let ds = labelled(labels.clone(), classes);

        let im = im_map(&ds, &mut rng).unwrap();
        ok &= im.pairs.len() == n
            && im
                .pairs
                .iter()
                .enumerate()
                .all(|(k, &(i, j))| i == k && i != j && labels[i] == labels[j]);

        let isim = isim_map(&ds, &mut rng).unwrap();
        let matching = isim.labels.iter().filter(|&&l| l == 1).count();
        let non = isim.labels.iter().filter(|&&l| l == 0).count();
        ok &= isim.pairs.len() == 2 * n && matching == n && non == n;
        ok &= isim.pairs.iter().zip(&isim.labels).all(|(&(i, j), &l)| {
            if l == 1 {
                i != j && labels[i] == labels[j]
            } else {
                labels[i] != labels[j]
            }
        });

        let (iim, vocab) = iim_map(&ds, &mut rng).unwrap();
        let expected_vocab = classes + classes * (classes - 1) / 2;
        ok &= iim.pairs.len() == n * classes && vocab.len() == expected_vocab;
        ok &= iim.pairs.iter().zip(&iim.labels).all(|(&(i, j), &l)| {
            let (a, b) = vocab.decode(l).unwrap();
            let got: HashSet<usize> = [a, b].into();
            let want: HashSet<usize> = [labels[i], labels[j]].into();
            got == want && (labels[i] != labels[j] || i != j)
        });
        notes.push(format!("C={classes}: vocab {}", vocab.len()));
    }
    outcome(ok, notes.join(", "))
}

struct RunResult {
    accuracy: f64,
    seconds: f64,
    table: EmbeddingTable,
}

fn run_variant(ds: &LabeledDataset, seed: u64, variant: VariantName) -> RunResult {
    let (tr, va, te) = split(ds, &SplitSpec { seed, ..SplitSpec::default() }).unwrap();
    let (tr, rest, _) = standardize(&tr, &[&va, &te]).unwrap();
    let cfg = TrainConfig {
        variant,
        seed,
        ..TrainConfig::default()
    };
    let started = Instant::now();
    let (model, _) = train(&tr, &rest[0], &cfg).unwrap();
    let seconds = started.elapsed().as_secs_f64();
    let table = embed_dataset(&model, &rest[1]).unwrap();
    RunResult {
        accuracy: knn_accuracy(&table, 10).unwrap(),
        seconds,
        table,
    }
}

fn criterion_4() -> Outcome {
    let ds = gen_blobs(&BlobSpec {
        classes: 4,
        per_class: 200,
        dim: 20,
        seed: 42,
        ..BlobSpec::default()
    })
    .unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for v in VariantName::ALL {
        let r = run_variant(&ds, 42, v);
        let need = if v == VariantName::CovNetV1 { 0.95 } else { 0.90 };
        ok &= r.accuracy >= need && r.seconds < 60.0;
        parts.push(format!("{v} {:.3} ({:.1}s)", r.accuracy, r.seconds));
    }
    outcome(ok, parts.join(", "))
}

fn hierarchical(seed: u64) -> LabeledDataset {
    gen_hierarchical(&BlobSpec {
        classes: 4,
        superclass_map: Some(vec![0, 0, 1, 1]),
        super_ratio: 5.0,
        seed,
        ..BlobSpec::default()
    })
    .unwrap()
}

fn semantic_order(table: &EmbeddingTable) -> bool {
    let m = class_correlation_matrix(table, CorrelationMode::Centroid).unwrap();
    let same = [m[0][1], m[2][3]];
    let cross = [m[0][2], m[0][3], m[1][2], m[1][3]];
    match (same.iter().copied().collect::<Option<Vec<f64>>>(), cross.iter().copied().collect::<Option<Vec<f64>>>()) {
        (Some(s), Some(c)) => {
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lo > hi
        }
        _ => false,
    }
}

fn criteria_5_and_6() -> (Outcome, Outcome) {
    let seeds = [1u64, 2, 3, 4, 5];
    let mut means = vec![0.0; VariantName::ALL.len()];
    let mut ordered = 0;
    for &seed in &seeds {
        let ds = hierarchical(seed);
        for (k, v) in VariantName::ALL.iter().enumerate() {
            let r = run_variant(&ds, seed, *v);
            means[k] += r.accuracy / seeds.len() as f64;
            if *v == VariantName::CovNetV2 && semantic_order(&r.table) {
                ordered += 1;
            }
        }
    }
    let c5 = outcome(ordered >= 4, format!("{ordered}/5 seeds with same-superclass > cross-superclass"));
    let v2 = means[1];
    let ok6 = means.iter().all(|&m| v2 >= m - 0.02);
    let listing: Vec<String> = VariantName::ALL
        .iter()
        .zip(&means)
        .map(|(v, m)| format!("{v} {m:.3}"))
        .collect();
    (c5, outcome(ok6, format!("mean k=10 accuracy: {}", listing.join(", "))))
}

fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for k in 0..u.len() {
        uv += u[k] * v[k];
        uu += u[k] * u[k];
        vv += v[k] * v[k];
    }
    uv / (uu.sqrt() * vv.sqrt())
}

fn brute_knn(z: &Matrix, labels: &[usize], k: usize) -> f64 {
    let n = z.rows();
    let mut hits = 0usize;
    for i in 0..n {
        let mut all: Vec<(f64, usize)> = Vec::new();
        for j in 0..n {
            if j != i {
                all.push((oracle_cosine(z.row(i), z.row(j)), j));
            }
        }
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        hits += all[..k].iter().filter(|(_, j)| labels[*j] == labels[i]).count();
    }
    hits as f64 / (n * k) as f64
}

fn brute_topk(z: &Matrix, q: &[f64], skip: Option<usize>, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = (0..z.rows())
        .filter(|&j| Some(j) != skip)
        .map(|j| (oracle_cosine(q, z.row(j)), j))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(s, j)| (j, s)).collect()
}

fn criterion_7() -> Outcome {
    let mut rng = prng(77);
    let mut mismatches = 0;
    for t in 0..100 {
        let n = rng.random_range(2..=if t % 10 == 0 { 500 } else { 120 });
        let q = rng.random_range(2..=12);
        let classes = rng.random_range(1..=5);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            // duplicate an earlier row now and then to create exact ties
            if i > 0 && rng.random_bool(0.1) {
                let src = rng.random_range(0..i);
                rows.push(rows[src].clone());
                continue;
            }
            let v: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            rows.push(v.into_iter().map(|x| x / nv).collect());
        }
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let z = Matrix::from_rows(&rows).unwrap();
        let table = EmbeddingTable::new(
            (0..n as u64).collect(),
            z.clone(),
            labels.clone(),
            (0..classes as i64).collect(),
        )
        .unwrap();
        if n >= 2 {
            let k = rng.random_range(1..n);
            if knn_accuracy(&table, k).unwrap() != brute_knn(&z, &labels, k) {
                mismatches += 1;
            }
            let id = rng.random_range(0..n);
            let hits = topk_search(&table, &Query::Id(id as u64), k).unwrap();
            let oracle = brute_topk(&z, z.row(id), Some(id), k);
            let same = hits.len() == oracle.len()
                && hits.iter().zip(&oracle).all(|(h, o)| {
                    h.id == o.0 as u64 && (h.similarity - o.1).abs() <= 1e-12 && h.relevant == Some(labels[o.0] == labels[id])
                });
            mismatches += usize::from(!same);
            let ext: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
            let hits = topk_search(&table, &Query::Vector { z: ext.clone(), label: None }, k).unwrap();
            let oracle = brute_topk(&z, &ext, None, k);
            let same = hits.iter().zip(&oracle).all(|(h, o)| h.id == o.0 as u64 && (h.similarity - o.1).abs() <= 1e-12);
            mismatches += usize::from(!same);
        }
    }
    outcome(mismatches == 0, format!("100 tables, {mismatches} mismatches"))
}

fn run_cli(bin: &str, dir: &Path, args: &[&str]) -> bool {
    Command::new(bin)
        .args(args)
        .current_dir(dir)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn criterion_8() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_covnet");
    let root = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let dir = root.path().join(name);
        std::fs::create_dir_all(&dir).unwrap();
        let ok = run_cli(bin, &dir, &["gen-data", "--classes", "4", "--per-class", "60", "--dim", "10", "--seed", "9", "--out", "data"])
            && run_cli(bin, &dir, &["train", "--data", "data/data.csv", "--variant", "covnet-v2", "--epochs", "40", "--seed", "9", "--quiet", "--out", "run"])
            && run_cli(bin, &dir, &["eval", "--checkpoint", "run/checkpoint.json", "--data", "run/test.csv", "--ks", "1,5,10", "--out", "eval"]);
        if !ok {
            return outcome(false, format!("CLI pipeline failed in run {name}"));
        }
        dirs.push(dir);
    }
    let files = ["data/data.csv", "run/checkpoint.json", "eval/embeddings.csv", "eval/report.json"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(dirs[0].join(f)).unwrap() != std::fs::read(dirs[1].join(f)).unwrap())
        .collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical", files.len())
        } else {
            format!("differ: {}", differing.join(", "))
        },
    )
}

fn main() {
    let mut required_failures = 0;
    let mut report = |n: usize, title: &str, o: Outcome, advisory: bool| {
        let status = match (o.pass, advisory) {
            (true, _) => "PASS",
            (false, true) => "ADVISORY-FAIL",
            (false, false) => "FAIL",
        };
        println!("criterion {n} [{status}] {title}: {}", o.detail);
        if !o.pass && !advisory {
            required_failures += 1;
        }
    };
    report(1, "gradient fidelity", criterion_1(), false);
    report(2, "covariance identities", criterion_2(), false);
    report(3, "mapping cardinalities", criterion_3(), false);
    report(4, "end-to-end blobs training", criterion_4(), false);
    let (c5, c6) = criteria_5_and_6();
    report(5, "semantic class correlation", c5, false);
    report(6, "variant ranking (advisory)", c6, true);
    report(7, "k-NN and search oracle equivalence", criterion_7(), false);
    report(8, "CLI determinism", criterion_8(), false);
    if required_failures > 0 {
        println!("{required_failures} required criteria failed");
        std::process::exit(1);
    }
    println!("all required criteria passed");
}
