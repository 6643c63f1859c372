use csalt_core::binmat::BinaryMatrix;
use csalt_core::csalt::{factorize, CsaltConfig};
use csalt_core::eval::evaluate;
use csalt_core::synthgen::{generate, GeneratorSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gen_seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(101);
    let opt_seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(201);
    let p: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let spec = GeneratorSpec::with_default_usage(400, vec![200, 200], 12, p, gen_seed).unwrap();
    let truth = generate(&spec).unwrap();
    println!("|D| = {}, truth rank {}", truth.data.count_ones(), truth.rank());
    let (filtered, kept) = truth.data.drop_empty_columns();
    println!("filtered items {} of {}", kept.len(), truth.data.cols());
    let config = CsaltConfig::<f64> { seed: opt_seed, ..CsaltConfig::default() };
    let t0 = std::time::Instant::now();
    let result = factorize(&filtered, &truth.partition, &config).unwrap();
    println!("factorize took {:.1}s", t0.elapsed().as_secs_f64());
    for st in &result.stages {
        println!("stage r={}: {} iters, obj {:.1}, rounded f {:.1}, rank {}", st.rank, st.iterations, st.final_objective, st.rounded_f, st.rounded_rank);
    }
    println!("thresholds {:?}, rss {}", result.thresholds, result.rss);
    let model = result.model.expand_items(truth.data.cols(), &kept).unwrap();
    let report = evaluate(&truth, &model).unwrap();
    println!("F {:?} avg {:.4}", report.f_class, report.f_avg);
    println!("recV {:?} avg {:.4}", report.rec_v_class, report.rec_v_avg);
    println!("ranks {:?} avg {:.2}", report.rank_class, report.rank_avg);
    // compare f of truth (restricted to kept items) vs model
    let ctx = csalt_core::objective::ObjectiveContext::<f64>::new(filtered.clone(), truth.partition.clone()).unwrap();
    let truth_filtered = csalt_core::csalt::FactorModel::new(
        keep_rows(&truth.x, &kept), truth.v.iter().map(|v| keep_rows(v, &kept)).collect(),
        truth.y.clone(), truth.partition.clone()).unwrap();
    let f_truth = csalt_core::objective::description_length_f(&ctx, &truth_filtered).unwrap();
    println!("f(truth) = {:.1}, f(model) = {:.1}", f_truth, result.f);
}

fn keep_rows(b: &BinaryMatrix, kept: &[usize]) -> BinaryMatrix {
    let mut entries = Vec::new();
    for (new_i, &old_i) in kept.iter().enumerate() {
        for s in 0..b.cols() {
            if b.get(old_i, s) { entries.push((new_i, s)); }
        }
    }
    BinaryMatrix::from_entries(kept.len(), b.cols(), &entries).unwrap()
}
